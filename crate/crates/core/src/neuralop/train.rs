//! Minibatch Adam training with per-step exponential learning-rate decay.

use super::{NetGrad, OperatorNet};
use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Trunk inputs, one row per point. Samples on the same grid share one
/// allocation so the trunk is evaluated once per batch.
pub type TrunkPoints = Arc<Array2<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSample {
    pub branch_inputs: Vec<Vec<f64>>,
    pub trunk: TrunkPoints,
    pub targets: Vec<f64>,
}

impl OperatorSample {
    pub fn validate(&self) -> Result<()> {
        if self.targets.len() != self.trunk.nrows() {
            return Err(Error::Shape(format!(
                "{} targets for {} trunk points",
                self.targets.len(),
                self.trunk.nrows()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Ml2re,
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_init: f64,
    pub lr_decay_per_step: f64,
    pub iterations: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Collocation points drawn per sample and step; all points when unset.
    pub points_per_step: Option<usize>,
    pub log_every: usize,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            lr_init: 2e-4,
            lr_decay_per_step: 0.99999,
            iterations: 10_000,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            points_per_step: None,
            log_every: 1000,
            loss: Loss::Ml2re,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Precondition("batch_size must be at least 1".into()));
        }
        if !(self.lr_init >= 0.0) {
            return Err(Error::Precondition("lr_init must be non-negative".into()));
        }
        if !(self.lr_decay_per_step > 0.0 && self.lr_decay_per_step <= 1.0) {
            return Err(Error::Precondition(
                "lr_decay_per_step must lie in (0, 1]".into(),
            ));
        }
        if self.log_every == 0 {
            return Err(Error::Precondition("log_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    /// Mean minibatch loss since the previous record.
    pub train: f64,
    pub test: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<LossRecord>,
    /// Loss over the whole training set after the last step.
    pub final_train: f64,
    pub final_test: Option<f64>,
}

fn rows(vs: &[&[f64]]) -> Array2<f64> {
    let w = vs.first().map_or(0, |v| v.len());
    let mut a = Array2::zeros((vs.len(), w));
    for (i, v) in vs.iter().enumerate() {
        a.row_mut(i)
            .assign(&ArrayView2::from_shape((1, w), v).unwrap().row(0));
    }
    a
}

/// Indices of `batch` grouped by shared trunk allocation, in order of
/// first appearance.
fn group_by_trunk(samples: &[OperatorSample], batch: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in batch {
        match groups
            .iter_mut()
            .find(|g| Arc::ptr_eq(&samples[g[0]].trunk, &samples[i].trunk))
        {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

fn branch_matrices(
    net: &OperatorNet,
    samples: &[OperatorSample],
    idx: &[usize],
) -> Vec<Array2<f64>> {
    (0..net.branches.len())
        .map(|b| {
            let vs: Vec<&[f64]> = idx
                .iter()
                .map(|&i| samples[i].branch_inputs[b].as_slice())
                .collect();
            rows(&vs)
        })
        .collect()
}

/// Per-sample losses and the gradient of their sum with respect to `pred`.
fn loss_and_grad(
    kind: Loss,
    pred: &Array2<f64>,
    target: &Array2<f64>,
    first: usize,
) -> Result<(Vec<f64>, Array2<f64>)> {
    let mut d = pred - target;
    let mut losses = Vec::with_capacity(pred.nrows());
    for (r, mut row) in d.axis_iter_mut(Axis(0)).enumerate() {
        match kind {
            Loss::Ml2re => {
                let tn = target.row(r).dot(&target.row(r)).sqrt();
                if tn == 0.0 {
                    return Err(Error::ZeroNorm { index: first + r });
                }
                let en = row.dot(&row).sqrt();
                losses.push(en / tn);
                if en > 0.0 {
                    row /= en * tn;
                }
            }
            Loss::Mse => {
                let m = row.len() as f64;
                losses.push(row.dot(&row) / m);
                row *= 2.0 / m;
            }
        }
    }
    Ok((losses, d))
}

fn loss_value(kind: Loss, pred: &Array2<f64>, target: &Array2<f64>) -> Result<Vec<f64>> {
    Ok(loss_and_grad(kind, pred, target, 0)?.0)
}

fn targets(samples: &[OperatorSample], idx: &[usize], points: Option<&[usize]>) -> Array2<f64> {
    let vs: Vec<&[f64]> = idx.iter().map(|&i| samples[i].targets.as_slice()).collect();
    let full = rows(&vs);
    match points {
        Some(p) => full.select(Axis(1), p),
        None => full,
    }
}

/// Predictions for every sample, grouped by trunk internally.
pub fn predict_samples(net: &OperatorNet, samples: &[OperatorSample]) -> Result<Vec<Vec<f64>>> {
    let all: Vec<usize> = (0..samples.len()).collect();
    let mut out = vec![Vec::new(); samples.len()];
    for g in group_by_trunk(samples, &all) {
        for chunk in g.chunks(256) {
            let b = branch_matrices(net, samples, chunk);
            let views: Vec<ArrayView2<f64>> = b.iter().map(|m| m.view()).collect();
            let pred = net.predict(&views, samples[chunk[0]].trunk.view())?;
            for (r, &i) in chunk.iter().enumerate() {
                out[i] = pred.row(r).to_vec();
            }
        }
    }
    Ok(out)
}

/// `(ML2RE, MAE)` of the net over `samples`.
pub fn evaluate(net: &OperatorNet, samples: &[OperatorSample]) -> Result<(f64, f64)> {
    let pred = predict_samples(net, samples)?;
    let truth: Vec<&[f64]> = samples.iter().map(|s| s.targets.as_slice()).collect();
    let pred_ref: Vec<&[f64]> = pred.iter().map(|p| p.as_slice()).collect();
    Ok((
        crate::metrics::ml2re(&pred_ref, &truth)?,
        crate::metrics::mae(&pred_ref, &truth)?,
    ))
}

fn dataset_loss(net: &OperatorNet, samples: &[OperatorSample], kind: Loss) -> Result<f64> {
    match kind {
        Loss::Ml2re => Ok(evaluate(net, samples)?.0),
        Loss::Mse => {
            let pred = predict_samples(net, samples)?;
            let mut sum = 0.0;
            for (p, s) in pred.iter().zip(samples) {
                sum += p
                    .iter()
                    .zip(&s.targets)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    / p.len() as f64;
            }
            Ok(sum / samples.len() as f64)
        }
    }
}

struct Adam {
    m: NetGrad,
    v: NetGrad,
    t: i32,
}

impl Adam {
    fn step(&mut self, net: &mut OperatorNet, grad: &mut NetGrad, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2, eps) = (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let update = |w: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((mlp, g), m), v) in net
            .mlps_mut()
            .zip(grad.parts_mut())
            .zip(self.m.parts_mut())
            .zip(self.v.parts_mut())
        {
            for l in 0..mlp.weights.len() {
                Zip::from(&mut mlp.weights[l])
                    .and(&g.dw[l])
                    .and(&mut m.dw[l])
                    .and(&mut v.dw[l])
                    .for_each(update);
                Zip::from(&mut mlp.biases[l])
                    .and(&g.db[l])
                    .and(&mut m.db[l])
                    .and(&mut v.db[l])
                    .for_each(update);
            }
        }
    }
}

fn check_samples(net: &OperatorNet, samples: &[OperatorSample]) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        s.validate()
            .map_err(|e| Error::Shape(format!("sample {i}: {e}")))?;
        if s.branch_inputs.len() != net.branches.len() {
            return Err(Error::Shape(format!(
                "sample {i} has {} branch inputs, the net {}",
                s.branch_inputs.len(),
                net.branches.len()
            )));
        }
        for (b, (x, m)) in s.branch_inputs.iter().zip(&net.branches).enumerate() {
            if x.len() != m.input_width() {
                return Err(Error::Shape(format!(
                    "sample {i} branch {b}: width {} but the net expects {}",
                    x.len(),
                    m.input_width()
                )));
            }
        }
        if s.trunk.ncols() != net.trunk_dim() {
            return Err(Error::Shape(format!(
                "sample {i}: trunk width {} but the net expects {}",
                s.trunk.ncols(),
                net.trunk_dim()
            )));
        }
    }
    Ok(())
}

/// Trains `net` in place on `train_set`, recording the test loss at every
/// logging interval when `test_set` is non-empty.
pub fn train(
    net: &mut OperatorNet,
    train_set: &[OperatorSample],
    test_set: &[OperatorSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Precondition("empty training set".into()));
    }
    check_samples(net, train_set)?;
    check_samples(net, test_set)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam {
        m: net.zero_grad(),
        v: net.zero_grad(),
        t: 0,
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cursor = order.len();
    let mut history = Vec::new();
    let mut acc = 0.0;
    let mut acc_n = 0usize;
    let mut lr = cfg.lr_init;

    for step in 0..cfg.iterations {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(train_set.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let mut grad = net.zero_grad();
        let mut batch_loss = 0.0;
        for g in group_by_trunk(train_set, &batch) {
            let full = &train_set[g[0]].trunk;
            let m = full.nrows();
            let subset: Option<Vec<usize>> = match cfg.points_per_step {
                Some(k) if k < m => {
                    let mut p = rand::seq::index::sample(&mut rng, m, k).into_vec();
                    p.sort_unstable();
                    Some(p)
                }
                _ => None,
            };
            let trunk = match &subset {
                Some(p) => full.select(Axis(0), p),
                None => (**full).clone(),
            };
            let b = branch_matrices(net, train_set, &g);
            let views: Vec<ArrayView2<f64>> = b.iter().map(|x| x.view()).collect();
            let (pred, tape) = net.forward_tape(&views, trunk.view())?;
            let target = targets(train_set, &g, subset.as_deref());
            let (losses, mut d) = loss_and_grad(cfg.loss, &pred, &target, g[0])?;
            d /= batch.len() as f64;
            batch_loss += losses.iter().sum::<f64>();
            net.backward(&tape, &d, &mut grad);
        }
        batch_loss /= batch.len() as f64;
        if !batch_loss.is_finite() {
            return Err(Error::Divergence {
                step,
                loss: batch_loss,
            });
        }
        adam.step(net, &mut grad, lr, cfg);
        lr *= cfg.lr_decay_per_step;
        acc += batch_loss;
        acc_n += 1;
        if (step + 1) % cfg.log_every == 0 || step + 1 == cfg.iterations {
            let test = if test_set.is_empty() {
                None
            } else {
                Some(dataset_loss(net, test_set, cfg.loss)?)
            };
            log::debug!(
                "step {} loss {:.4e} test {:?}",
                step + 1,
                acc / acc_n as f64,
                test
            );
            history.push(LossRecord {
                step: step + 1,
                train: acc / acc_n as f64,
                test,
            });
            acc = 0.0;
            acc_n = 0;
        }
    }
    let final_train = dataset_loss(net, train_set, cfg.loss)?;
    if !final_train.is_finite() {
        return Err(Error::Divergence {
            step: cfg.iterations,
            loss: final_train,
        });
    }
    let final_test = if test_set.is_empty() {
        None
    } else {
        Some(dataset_loss(net, test_set, cfg.loss)?)
    };
    Ok(TrainOutcome {
        history,
        final_train,
        final_test,
    })
}

fn sample_loss(net: &OperatorNet, sample: &OperatorSample) -> Result<f64> {
    let b = branch_matrices(net, std::slice::from_ref(sample), &[0]);
    let views: Vec<ArrayView2<f64>> = b.iter().map(|x| x.view()).collect();
    let pred = net.predict(&views, sample.trunk.view())?;
    let target = targets(std::slice::from_ref(sample), &[0], None);
    Ok(loss_value(Loss::Ml2re, &pred, &target)?[0])
}

/// Largest relative discrepancy between backpropagated gradients of the
/// single-sample ML2RE loss and central differences (step `1e-6`) over up to
/// 100 randomly chosen parameters. Gradients below `1e-3` in magnitude are
/// compared in absolute terms against that floor.
pub fn gradient_check(net: &OperatorNet, sample: &OperatorSample) -> Result<f64> {
    check_samples(net, std::slice::from_ref(sample))?;
    let b = branch_matrices(net, std::slice::from_ref(sample), &[0]);
    let views: Vec<ArrayView2<f64>> = b.iter().map(|x| x.view()).collect();
    let (pred, tape) = net.forward_tape(&views, sample.trunk.view())?;
    let target = targets(std::slice::from_ref(sample), &[0], None);
    let (_, d) = loss_and_grad(Loss::Ml2re, &pred, &target, 0)?;
    let mut grad = net.zero_grad();
    net.backward(&tape, &d, &mut grad);

    let n = net.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    let picks: Vec<usize> = if n <= 100 {
        (0..n).collect()
    } else {
        rand::seq::index::sample(&mut rng, n, 100).into_vec()
    };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for i in picks {
        let w = *probe.param_mut(i);
        *probe.param_mut(i) = w + h;
        let up = sample_loss(&probe, sample)?;
        *probe.param_mut(i) = w - h;
        let down = sample_loss(&probe, sample)?;
        *probe.param_mut(i) = w;
        let fd = (up - down) / (2.0 * h);
        let bp = grad.get(i);
        let denom = bp.abs().max(fd.abs()).max(1e-3);
        worst = worst.max((bp - fd).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::super::{Architecture, Fusion, Mlp};
    use super::*;

    fn toy_net(seed: u64) -> OperatorNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        OperatorNet::new(
            &Architecture {
                branches: vec![vec![6, 24, 24], vec![2, 24]],
                trunk: vec![2, 24, 24],
                fusion: Fusion::Product,
            },
            &mut rng,
        )
        .unwrap()
    }

    fn toy_sample(k: f64, trunk: &TrunkPoints) -> OperatorSample {
        let targets = trunk
            .rows()
            .into_iter()
            .map(|p| (k * p[0]).sin() + p[1] * k)
            .collect();
        OperatorSample {
            branch_inputs: vec![(0..6).map(|i| (i as f64 * k).cos()).collect(), vec![k, 1.0]],
            trunk: trunk.clone(),
            targets,
        }
    }

    fn grid(n: usize) -> TrunkPoints {
        Arc::new(Array2::from_shape_fn((n * n, 2), |(i, c)| {
            if c == 0 {
                (i / n) as f64 / (n - 1) as f64
            } else {
                (i % n) as f64 / (n - 1) as f64
            }
        }))
    }

    #[test]
    fn gradients_match_finite_differences() {
        let s = toy_sample(1.3, &grid(5));
        assert!(gradient_check(&toy_net(4), &s).unwrap() < 1e-5);
        let sum = OperatorNet {
            fusion: Fusion::Sum,
            ..toy_net(5)
        };
        assert!(gradient_check(&sum, &s).unwrap() < 1e-5);
    }

    #[test]
    fn dead_network_has_zero_gradients() {
        let net = OperatorNet::from_parts(
            vec![
                Mlp::zeros(&[6, 8, 8]).unwrap(),
                Mlp::zeros(&[2, 8]).unwrap(),
            ],
            Mlp::zeros(&[2, 8, 8]).unwrap(),
            Fusion::Product,
        )
        .unwrap();
        assert!(gradient_check(&net, &toy_sample(0.7, &grid(4))).unwrap() < 1e-5);
    }

    #[test]
    fn linear_net_gradients_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = OperatorNet::new(
            &Architecture {
                branches: vec![vec![6, 5]],
                trunk: vec![2, 5],
                fusion: Fusion::Product,
            },
            &mut rng,
        )
        .unwrap();
        let mut s = toy_sample(0.9, &grid(4));
        s.branch_inputs.pop();
        assert!(gradient_check(&net, &s).unwrap() < 1e-8);
    }

    #[test]
    fn single_sample_is_memorized() {
        let s = vec![toy_sample(1.1, &grid(6))];
        let mut net = toy_net(1);
        let cfg = TrainConfig {
            iterations: 2000,
            lr_init: 1e-3,
            lr_decay_per_step: 0.999,
            log_every: 10,
            ..TrainConfig::default()
        };
        let out = train(&mut net, &s, &[], &cfg).unwrap();
        assert!(out.final_train < 1e-3, "{}", out.final_train);
        // smoothed loss does not increase over the first 100 steps
        let early: Vec<f64> = out.history.iter().take(10).map(|r| r.train).collect();
        assert!(early.windows(2).all(|w| w[1] <= w[0]), "{early:?}");
    }

    #[test]
    fn zero_learning_rate_leaves_weights_untouched() {
        let s = vec![toy_sample(0.4, &grid(4)), toy_sample(0.8, &grid(4))];
        let mut net = toy_net(2);
        let before = net.clone();
        let cfg = TrainConfig {
            iterations: 50,
            lr_init: 0.0,
            ..TrainConfig::default()
        };
        train(&mut net, &s, &[], &cfg).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn training_is_deterministic() {
        let g = grid(5);
        let s: Vec<OperatorSample> = (0..10)
            .map(|i| toy_sample(0.2 * i as f64 + 0.1, &g))
            .collect();
        let cfg = TrainConfig {
            iterations: 30,
            batch_size: 4,
            points_per_step: Some(7),
            lr_init: 1e-3,
            ..TrainConfig::default()
        };
        let mut a = toy_net(3);
        let mut b = toy_net(3);
        let ra = train(&mut a, &s, &s[..2], &cfg).unwrap();
        let rb = train(&mut b, &s, &s[..2], &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn divergence_is_reported() {
        let s = vec![toy_sample(0.5, &grid(4))];
        let mut net = toy_net(6);
        let cfg = TrainConfig {
            iterations: 5,
            lr_init: f64::INFINITY,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&mut net, &s, &[], &cfg),
            Err(Error::Divergence { .. })
        ));
    }
}
