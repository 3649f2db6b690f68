//! Fully connected networks and branch/trunk operator networks with
//! hand-written reverse-mode gradients.
//!
//! An operator net evaluates `G(u)(x) = <fuse(branch_1(u_1), ..., branch_B(u_B)), trunk(x)>`
//! where the fusion is an elementwise product (default) or sum.

mod checkpoint;
mod presets;
mod train;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, FORMAT_VERSION,
};
pub use presets::{preset, preset_names, Preset};
pub use train::{
    evaluate, gradient_check, predict_samples, train, Loss, LossRecord, OperatorSample,
    TrainConfig, TrainOutcome, TrunkPoints,
};

use crate::error::{Error, Result};
use crate::geometry::Point;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Dense ReLU network with an identity output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Inputs to every layer of one forward pass, kept for the backward pass.
pub(crate) struct Tape {
    inputs: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct MlpGrad {
    pub dw: Vec<Array2<f64>>,
    pub db: Vec<Array1<f64>>,
}

impl Mlp {
    /// Xavier-normal weights, zero biases.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let std = (2.0 / (w[0] + w[1]) as f64).sqrt();
            let normal = Normal::new(0.0, std).unwrap();
            weights.push(Array2::from_shape_simple_fn((w[0], w[1]), || {
                normal.sample(rng)
            }));
            biases.push(Array1::zeros(w[1]));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            weights: sizes
                .windows(2)
                .map(|w| Array2::zeros((w[0], w[1])))
                .collect(),
            biases: sizes.windows(2).map(|w| Array1::zeros(w[1])).collect(),
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.weights.len() - 1;
        let mut a = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(w);
            z += b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        a
    }

    pub(crate) fn forward_tape(&self, x: ArrayView2<f64>) -> (Array2<f64>, Tape) {
        let last = self.weights.len() - 1;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut a = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(w);
            z += b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut a, z));
        }
        (a, Tape { inputs })
    }

    /// Accumulates parameter gradients for output gradient `d_out`.
    pub(crate) fn backward(&self, tape: &Tape, d_out: Array2<f64>, grad: &mut MlpGrad) {
        let mut dz = d_out;
        for l in (0..self.weights.len()).rev() {
            let a = &tape.inputs[l];
            grad.dw[l] += &a.t().dot(&dz);
            grad.db[l] += &dz.sum_axis(Axis(0));
            if l > 0 {
                let mut da = dz.dot(&self.weights[l].t());
                // ReLU'(0) = 0
                ndarray::Zip::from(&mut da).and(a).for_each(|d, &act| {
                    if act <= 0.0 {
                        *d = 0.0;
                    }
                });
                dz = da;
            }
        }
    }

    pub(crate) fn zero_grad(&self) -> MlpGrad {
        MlpGrad {
            dw: self
                .weights
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            db: self
                .biases
                .iter()
                .map(|b| Array1::zeros(b.raw_dim()))
                .collect(),
        }
    }

    pub(crate) fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            if index < w.len() {
                return w.as_slice_mut().unwrap().get_mut(index).unwrap();
            }
            index -= w.len();
            if index < b.len() {
                return &mut b[index];
            }
            index -= b.len();
        }
        panic!("parameter index out of range")
    }
}

impl MlpGrad {
    pub(crate) fn get(&self, mut index: usize) -> f64 {
        for (w, b) in self.dw.iter().zip(&self.db) {
            if index < w.len() {
                return w.as_slice().unwrap()[index];
            }
            index -= w.len();
            if index < b.len() {
                return b[index];
            }
            index -= b.len();
        }
        panic!("parameter index out of range")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    Product,
    Sum,
}

/// Branch/trunk operator network.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorNet {
    pub branches: Vec<Mlp>,
    pub trunk: Mlp,
    pub fusion: Fusion,
}

/// Layer sizes of an operator net.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub branches: Vec<Vec<usize>>,
    pub trunk: Vec<usize>,
    pub fusion: Fusion,
}

impl Architecture {
    pub fn latent_dim(&self) -> usize {
        *self.trunk.last().unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        if self.branches.is_empty() {
            return Err(Error::Shape(
                "an operator net needs at least one branch".into(),
            ));
        }
        let p = self.trunk.last().copied().unwrap_or(0);
        for (i, b) in self.branches.iter().enumerate() {
            if b.last().copied() != Some(p) {
                return Err(Error::Shape(format!(
                    "branch {i} output width {:?} differs from trunk width {p}",
                    b.last()
                )));
            }
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        let count = |s: &Vec<usize>| s.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>();
        self.branches.iter().map(count).sum::<usize>() + count(&self.trunk)
    }
}

/// Cached intermediate values of one batched forward pass.
pub(crate) struct NetTape {
    branch_out: Vec<Array2<f64>>,
    branch_tapes: Vec<Tape>,
    fused: Array2<f64>,
    trunk_out: Array2<f64>,
    trunk_tape: Tape,
}

#[derive(Debug, Clone)]
pub(crate) struct NetGrad {
    pub branches: Vec<MlpGrad>,
    pub trunk: MlpGrad,
}

impl OperatorNet {
    pub fn new<R: Rng>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let branches = arch
            .branches
            .iter()
            .map(|s| Mlp::new(s, rng))
            .collect::<Result<_>>()?;
        let trunk = Mlp::new(&arch.trunk, rng)?;
        Ok(OperatorNet {
            branches,
            trunk,
            fusion: arch.fusion,
        })
    }

    pub fn from_parts(branches: Vec<Mlp>, trunk: Mlp, fusion: Fusion) -> Result<Self> {
        let net = OperatorNet {
            branches,
            trunk,
            fusion,
        };
        net.architecture().validate()?;
        Ok(net)
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            branches: self.branches.iter().map(|b| b.sizes.clone()).collect(),
            trunk: self.trunk.sizes.clone(),
            fusion: self.fusion,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.trunk.output_width()
    }

    pub fn trunk_dim(&self) -> usize {
        self.trunk.input_width()
    }

    pub fn n_params(&self) -> usize {
        self.branches.iter().map(Mlp::n_params).sum::<usize>() + self.trunk.n_params()
    }

    /// Subnetworks in serialization order: branches, then trunk.
    pub fn mlps(&self) -> impl Iterator<Item = &Mlp> {
        self.branches.iter().chain(std::iter::once(&self.trunk))
    }

    pub fn mlps_mut(&mut self) -> impl Iterator<Item = &mut Mlp> {
        self.branches
            .iter_mut()
            .chain(std::iter::once(&mut self.trunk))
    }

    fn check_branch(&self, inputs: &[ArrayView2<f64>]) -> Result<()> {
        if inputs.len() != self.branches.len() {
            return Err(Error::Shape(format!(
                "expected {} branch inputs, got {}",
                self.branches.len(),
                inputs.len()
            )));
        }
        for (i, (b, x)) in self.branches.iter().zip(inputs).enumerate() {
            if x.ncols() != b.input_width() {
                return Err(Error::Shape(format!(
                    "branch {i} expects width {}, got {}",
                    b.input_width(),
                    x.ncols()
                )));
            }
        }
        Ok(())
    }

    fn check_trunk(&self, trunk: &ArrayView2<f64>) -> Result<()> {
        if trunk.ncols() != self.trunk_dim() {
            return Err(Error::Shape(format!(
                "trunk expects width {}, got {}",
                self.trunk_dim(),
                trunk.ncols()
            )));
        }
        Ok(())
    }

    fn fuse(&self, outs: &[Array2<f64>]) -> Array2<f64> {
        let mut f = outs[0].clone();
        for o in &outs[1..] {
            match self.fusion {
                Fusion::Product => f *= o,
                Fusion::Sum => f += o,
            }
        }
        f
    }

    /// Fused branch embeddings, one row per sample.
    pub fn branch_embedding(&self, inputs: &[ArrayView2<f64>]) -> Result<Array2<f64>> {
        self.check_branch(inputs)?;
        let outs: Vec<Array2<f64>> = self
            .branches
            .iter()
            .zip(inputs)
            .map(|(b, x)| b.forward(x.view()))
            .collect();
        Ok(self.fuse(&outs))
    }

    pub fn trunk_embedding(&self, trunk: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_trunk(&trunk)?;
        Ok(self.trunk.forward(trunk))
    }

    /// Predictions for a batch of samples sharing trunk points:
    /// `inputs[b]` has one row per sample, the result one row per sample and
    /// one column per trunk point.
    pub fn predict(
        &self,
        inputs: &[ArrayView2<f64>],
        trunk: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        let f = self.branch_embedding(inputs)?;
        let t = self.trunk_embedding(trunk)?;
        Ok(f.dot(&t.t()))
    }

    /// Single-sample evaluation at arbitrary points.
    pub fn forward(&self, branch_inputs: &[&[f64]], points: &[Point]) -> Result<Vec<f64>> {
        let rows: Vec<Array2<f64>> = branch_inputs
            .iter()
            .map(|v| Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap())
            .collect();
        let views: Vec<ArrayView2<f64>> = rows.iter().map(|r| r.view()).collect();
        let d = self.trunk_dim();
        let trunk = Array2::from_shape_fn((points.len(), d), |(i, k)| points[i][k]);
        Ok(self.predict(&views, trunk.view())?.row(0).to_vec())
    }

    pub(crate) fn forward_tape(
        &self,
        inputs: &[ArrayView2<f64>],
        trunk: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, NetTape)> {
        self.check_branch(inputs)?;
        self.check_trunk(&trunk)?;
        let mut branch_out = Vec::with_capacity(self.branches.len());
        let mut branch_tapes = Vec::with_capacity(self.branches.len());
        for (b, x) in self.branches.iter().zip(inputs) {
            let (o, t) = b.forward_tape(x.view());
            branch_out.push(o);
            branch_tapes.push(t);
        }
        let fused = self.fuse(&branch_out);
        let (trunk_out, trunk_tape) = self.trunk.forward_tape(trunk);
        let out = fused.dot(&trunk_out.t());
        Ok((
            out,
            NetTape {
                branch_out,
                branch_tapes,
                fused,
                trunk_out,
                trunk_tape,
            },
        ))
    }

    pub(crate) fn backward(&self, tape: &NetTape, d_out: &Array2<f64>, grad: &mut NetGrad) {
        let d_fused = d_out.dot(&tape.trunk_out);
        let d_trunk = d_out.t().dot(&tape.fused);
        self.trunk
            .backward(&tape.trunk_tape, d_trunk, &mut grad.trunk);
        for (i, b) in self.branches.iter().enumerate() {
            let mut d = d_fused.clone();
            if self.fusion == Fusion::Product {
                for (j, o) in tape.branch_out.iter().enumerate() {
                    if j != i {
                        d *= o;
                    }
                }
            }
            b.backward(&tape.branch_tapes[i], d, &mut grad.branches[i]);
        }
    }

    pub(crate) fn zero_grad(&self) -> NetGrad {
        NetGrad {
            branches: self.branches.iter().map(Mlp::zero_grad).collect(),
            trunk: self.trunk.zero_grad(),
        }
    }

    /// Mutable access to parameter `index` in serialization order
    /// (per subnetwork: weights then bias of each layer).
    pub(crate) fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for m in self.mlps_mut() {
            let n = m.n_params();
            if index < n {
                return m.param_mut(index);
            }
            index -= n;
        }
        panic!("parameter index out of range")
    }
}

impl NetGrad {
    pub(crate) fn get(&self, mut index: usize) -> f64 {
        for g in self.branches.iter().chain(std::iter::once(&self.trunk)) {
            let n: usize = g.dw.iter().map(|w| w.len()).sum::<usize>()
                + g.db.iter().map(|b| b.len()).sum::<usize>();
            if index < n {
                return g.get(index);
            }
            index -= n;
        }
        panic!("parameter index out of range")
    }

    pub(crate) fn parts_mut(&mut self) -> impl Iterator<Item = &mut MlpGrad> {
        self.branches
            .iter_mut()
            .chain(std::iter::once(&mut self.trunk))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arch(branches: Vec<Vec<usize>>, trunk: Vec<usize>) -> Architecture {
        Architecture {
            branches,
            trunk,
            fusion: Fusion::Product,
        }
    }

    #[test]
    fn xavier_variance_on_wide_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Mlp::new(&[625, 512, 512], &mut rng).unwrap();
        for w in &m.weights {
            let n = w.len() as f64;
            let mean = w.sum() / n;
            let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let expected = 2.0 / (w.nrows() + w.ncols()) as f64;
            assert!((var / expected - 1.0).abs() < 0.2);
        }
    }

    #[test]
    fn product_of_ones_gives_latent_dim() {
        // single linear layers with zero weights and unit biases output ones
        let mut branch = Mlp::zeros(&[3, 8]).unwrap();
        branch.biases[0].fill(1.0);
        let mut trunk = Mlp::zeros(&[2, 8]).unwrap();
        trunk.biases[0].fill(1.0);
        let net = OperatorNet::from_parts(vec![branch], trunk, Fusion::Product).unwrap();
        let out = net
            .forward(&[&[0.3, -1.0, 2.0]], &[[0.1, 0.2, 0.0], [0.5, 0.9, 0.0]])
            .unwrap();
        assert_eq!(out, vec![8.0, 8.0]);
    }

    #[test]
    fn two_branch_product_hand_value() {
        let mut b1 = Mlp::zeros(&[1, 2]).unwrap();
        b1.biases[0] = Array1::from(vec![1.0, 2.0]);
        let mut b2 = Mlp::zeros(&[1, 2]).unwrap();
        b2.biases[0] = Array1::from(vec![3.0, 4.0]);
        let mut t = Mlp::zeros(&[2, 2]).unwrap();
        t.biases[0] = Array1::from(vec![5.0, 6.0]);
        let net = OperatorNet::from_parts(vec![b1, b2], t, Fusion::Product).unwrap();
        assert_eq!(
            net.forward(&[&[0.0], &[0.0]], &[[0.0; 3]]).unwrap(),
            vec![63.0]
        );
        let sum = OperatorNet {
            fusion: Fusion::Sum,
            ..net
        };
        assert_eq!(
            sum.forward(&[&[0.0], &[0.0]], &[[0.0; 3]]).unwrap(),
            vec![4.0 * 5.0 + 6.0 * 6.0]
        );
    }

    #[test]
    fn shape_errors_name_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = OperatorNet::new(&arch(vec![vec![4, 8, 8]], vec![2, 8, 8]), &mut rng).unwrap();
        let e = net.forward(&[&[1.0, 2.0]], &[[0.0; 3]]).unwrap_err();
        assert!(e.to_string().contains("expects width 4, got 2"));
        assert!(OperatorNet::new(&arch(vec![vec![4, 8, 7]], vec![2, 8, 8]), &mut rng).is_err());
    }

    #[test]
    fn output_is_linear_in_last_trunk_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = OperatorNet::new(
            &arch(vec![vec![5, 16, 16], vec![2, 16]], vec![3, 16, 16]),
            &mut rng,
        )
        .unwrap();
        let mut doubled = net.clone();
        let last = doubled.trunk.weights.len() - 1;
        doubled.trunk.weights[last] *= 2.0;
        doubled.trunk.biases[last] *= 2.0;
        let pts = [[0.1, 0.2, 0.3], [0.7, 0.1, 0.9]];
        let inputs: [&[f64]; 2] = [&[0.5, -0.2, 0.1, 0.9, 0.3], &[1.0, 2.0]];
        let a = net.forward(&inputs, &pts).unwrap();
        let b = doubled.forward(&inputs, &pts).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}
