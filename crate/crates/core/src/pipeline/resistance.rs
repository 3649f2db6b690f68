//! Resistance extraction from potential fields and the shape experiment
//! built on the coupling framework.
//!
//! Neural subdomain nets for shape-dependent problems take a fixed first
//! branch of nine values: the subdomain's edge lengths `L_x, L_y, L_z`,
//! the stretched diffusion coefficients `1/L_k^2` and the Robin derivative
//! scales `1/L_k`, followed by one branch per interface trace in open-face
//! order.

use crate::ddm::{run_framework2, BranchPiece, DdmSchedule, OpenFace, SubdomainSolver};
use crate::error::{Error, Result};
use crate::geometry::{
    decompose_l_shape, decompose_t_shape, l_shape_ports, stretching_map, t_shape_ports, AffineMap,
    AxisBox, CompositeGeometry, Face, Patch, Port, ShapeParams,
};
use crate::grid::{interpolate, normal_derivative, Field, StructuredGrid};
use crate::metrics::{mae, ml2re, mre_re};
use crate::neuralop::OperatorNet;
use crate::oracle::{
    counts_for_spacing, solve_resistance_potential, BcData, BoundaryCondition, PdeProblem, Source,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

/// Composite-trapezoid integral of nodal `values` over the node grid of
/// `patch` in `grid`.
pub fn trapezoid(grid: &StructuredGrid, patch: &Patch, values: &[f64]) -> Result<f64> {
    let shape = grid.patch_shape(patch);
    let axes = patch.tangential_axes();
    if shape.iter().product::<usize>() != values.len() {
        return Err(Error::Shape(format!(
            "{} values for patch shape {shape:?}",
            values.len()
        )));
    }
    let weight = |n: usize, i: usize| if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
    let mut sum = 0.0;
    for (k, v) in values.iter().enumerate() {
        // row-major over the tangential axes
        let mut rem = k;
        let mut w = 1.0;
        for (j, &n) in shape.iter().enumerate().rev() {
            let i = rem % n;
            rem /= n;
            w *= weight(n, i) * grid.spacing(axes[j]);
        }
        sum += w * v;
    }
    Ok(sum)
}

/// `1 / |integral sigma du/dn|` over `out_port`, which must be a face patch
/// of one of the fields' boxes.
pub fn extract_resistance(fields: &[Field], out_port: &Patch, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::NonPositive {
            name: "sigma",
            value: sigma,
        });
    }
    let field = fields
        .iter()
        .find(|f| out_port.lies_on(f.grid.bx(), out_port.face))
        .ok_or_else(|| Error::Port("output port lies on no field's box face".into()))?;
    let dn = normal_derivative(field, out_port)?;
    let flux = sigma * trapezoid(&field.grid, out_port, &dn.values)?;
    if flux.abs() < 1e-14 {
        return Err(Error::ZeroFlux(flux));
    }
    Ok(1.0 / flux.abs())
}

/// Carries a field computed in local coordinates back through `to_local`.
pub fn unstretch(field: &Field, to_local: &AffineMap) -> Result<Field> {
    let bx = field.grid.bx();
    let d = bx.dim();
    let lo = to_local.invert(bx.lo());
    let hi = to_local.invert(bx.hi());
    let grid = StructuredGrid::new(AxisBox::new(&lo[..d], &hi[..d])?, field.grid.counts())?;
    Field::new(grid, field.values.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    L,
    T,
}

impl ShapeKind {
    pub fn decompose(self, p: &ShapeParams) -> Result<CompositeGeometry> {
        match self {
            ShapeKind::L => decompose_l_shape(p),
            ShapeKind::T => decompose_t_shape(p),
        }
    }

    pub fn ports(self) -> (Port, Port) {
        match self {
            ShapeKind::L => l_shape_ports(),
            ShapeKind::T => t_shape_ports(),
        }
    }
}

/// Shapes drawn uniformly from the parameter ranges and rounded to
/// multiples of `lattice`, so grids of spacing `lattice / k` match across
/// interfaces.
pub fn sample_shapes(count: usize, lattice: f64, seed: u64) -> Vec<ShapeParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut v = [0.0; 6];
            for (x, (lo, hi)) in v.iter_mut().zip(ShapeParams::RANGES) {
                let r: f64 = rng.random_range(lo..=hi);
                *x = ((r / lattice).round() * lattice).clamp(lo, hi);
            }
            ShapeParams::from_array(v)
        })
        .collect()
}

/// The nine-value fixed branch of a stretched subdomain.
pub fn stretched_encoding(bx: &AxisBox) -> Vec<f64> {
    let e = bx.extents();
    let mut v = e.clone();
    v.extend(e.iter().map(|l| 1.0 / (l * l)));
    v.extend(e.iter().map(|l| 1.0 / l));
    v
}

#[derive(Debug, Clone)]
pub enum ResistanceBinding {
    /// Finite-difference subdomain solvers at grid spacing `h`.
    Classical { h: f64 },
    /// One net per subdomain label, evaluated on `n` nodes per axis of the
    /// unit cube.
    Neural {
        nets: BTreeMap<String, Arc<OperatorNet>>,
        n: usize,
    },
}

/// Stretched subdomain solvers for a composite conductor with `u = 1` on
/// the input port and `u = 0` on the output port.
pub fn conductor_solvers(
    geometry: &CompositeGeometry,
    in_port: Port,
    out_port: Port,
    binding: &ResistanceBinding,
) -> Result<Vec<SubdomainSolver>> {
    let counts = match binding {
        ResistanceBinding::Classical { h } => counts_for_spacing(geometry, *h)?,
        ResistanceBinding::Neural { n, .. } => {
            vec![vec![*n; geometry.dim()]; geometry.boxes().len()]
        }
    };
    let d = geometry.dim();
    let unit = AxisBox::unit(d)?;
    let mut out = Vec::new();
    for (bi, bx) in geometry.boxes().iter().enumerate() {
        let label = &geometry.labels()[bi];
        let (map, coeffs) = stretching_map(bx);
        let mut bcs = Vec::new();
        let mut open = Vec::new();
        for face in Face::all(d) {
            let patch = unit.face_patch(face);
            let port = Port {
                box_index: bi,
                face,
            };
            let bc = if port == in_port {
                BoundaryCondition::dirichlet(patch, BcData::Constant(1.0))
            } else if port == out_port {
                BoundaryCondition::dirichlet(patch, BcData::Constant(0.0))
            } else {
                if !geometry.is_exterior_face(bi, face) {
                    open.push(OpenFace::new(patch));
                }
                BoundaryCondition::neumann(patch, BcData::Constant(0.0))
            };
            bcs.push(bc);
        }
        let solver = match binding {
            ResistanceBinding::Classical { .. } => {
                let problem = PdeProblem {
                    bx: unit,
                    diffusion: coeffs,
                    source: Source::Constant(0.0),
                    bcs,
                };
                SubdomainSolver::classical(label, problem, &counts[bi], open)?
            }
            ResistanceBinding::Neural { nets, .. } => {
                let net = nets.get(label).ok_or_else(|| {
                    Error::Precondition(format!("no net for subdomain `{label}`"))
                })?;
                let mut branches = vec![vec![BranchPiece::Fixed(stretched_encoding(bx))]];
                branches.extend((0..open.len()).map(|i| vec![BranchPiece::Open(i)]));
                SubdomainSolver::neural(
                    label,
                    StructuredGrid::new(unit, &counts[bi])?,
                    net.clone(),
                    branches,
                    open,
                )?
            }
        };
        out.push(solver.with_map(map));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResistanceReport {
    pub true_resistance: Vec<f64>,
    pub predicted_resistance: Vec<f64>,
    pub re: Vec<f64>,
    pub mre: f64,
    /// Share of samples with relative error at most 5%.
    pub fraction_within_5pct: f64,
    pub potential_ml2re: f64,
    pub potential_mae: f64,
    /// Samples that failed, with the error code and message.
    pub failures: Vec<(usize, String)>,
    pub ddm_iterations: Vec<usize>,
    pub wall_seconds_ddm: f64,
    pub wall_seconds_reference: f64,
}

/// Options of [`resistance_experiment`].
#[derive(Debug, Clone)]
pub struct ResistanceSetup {
    pub kind: ShapeKind,
    pub sigma: f64,
    /// Reference grid spacing of the monolithic oracle.
    pub reference_h: f64,
    pub schedule: DdmSchedule,
}

struct ShapeOutcome {
    r_true: f64,
    r_pred: f64,
    u_pred: Vec<f64>,
    u_true: Vec<f64>,
    iterations: usize,
    dt_ddm: f64,
    dt_ref: f64,
}

/// For every shape: decompose, solve the stretched subdomains with
/// framework 2, map back, extract the resistance, and compare with a
/// monolithic reference solve.
pub fn resistance_experiment(
    shapes: &[ShapeParams],
    binding: &ResistanceBinding,
    setup: &ResistanceSetup,
) -> Result<ResistanceReport> {
    let (in_port, out_port) = setup.kind.ports();
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    let mut field_pred = Vec::new();
    let mut field_true = Vec::new();
    let mut failures = Vec::new();
    let mut iterations = Vec::new();
    let (mut t_ddm, mut t_ref) = (0.0, 0.0);
    for (i, p) in shapes.iter().enumerate() {
        let run = || -> Result<ShapeOutcome> {
            let geometry = setup.kind.decompose(p)?;
            let out_patch = geometry.boxes()[out_port.box_index].face_patch(out_port.face);
            let t0 = Instant::now();
            let solvers = conductor_solvers(&geometry, in_port, out_port, binding)?;
            let res = run_framework2(&solvers, &setup.schedule)?;
            let fields = res
                .fields
                .iter()
                .zip(&solvers)
                .map(|(f, s)| unstretch(f, &s.to_local))
                .collect::<Result<Vec<_>>>()?;
            let r_pred = extract_resistance(&fields, &out_patch, setup.sigma)?;
            let dt_ddm = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let counts = counts_for_spacing(&geometry, setup.reference_h)?;
            let reference =
                solve_resistance_potential(&geometry, in_port, out_port, setup.sigma, &counts)?;
            let r_true = extract_resistance(&reference.fields, &out_patch, setup.sigma)?;
            let dt_ref = t1.elapsed().as_secs_f64();
            let mut u_pred = Vec::new();
            let mut u_true = Vec::new();
            for (f, r) in fields.iter().zip(&reference.fields) {
                u_pred.extend_from_slice(&f.values);
                u_true.extend(interpolate(r, &f.grid.points())?);
            }
            Ok(ShapeOutcome {
                r_true,
                r_pred,
                u_pred,
                u_true,
                iterations: res.iterations_used,
                dt_ddm,
                dt_ref,
            })
        };
        match run() {
            Ok(o) => {
                truth.push(o.r_true);
                pred.push(o.r_pred);
                field_pred.push(o.u_pred);
                field_true.push(o.u_true);
                iterations.push(o.iterations);
                t_ddm += o.dt_ddm;
                t_ref += o.dt_ref;
            }
            Err(e) => {
                log::warn!("resistance sample {i} failed: {e}");
                failures.push((i, format!("{}: {e}", e.code())));
            }
        }
    }
    if truth.is_empty() {
        return Err(Error::Precondition("every resistance sample failed".into()));
    }
    let (mre, re) = mre_re(&truth, &pred)?;
    let within = re.iter().filter(|r| **r <= 0.05).count() as f64 / re.len() as f64;
    Ok(ResistanceReport {
        potential_ml2re: ml2re(&field_pred, &field_true)?,
        potential_mae: mae(&field_pred, &field_true)?,
        true_resistance: truth,
        predicted_resistance: pred,
        re,
        mre,
        fraction_within_5pct: within,
        failures,
        ddm_iterations: iterations,
        wall_seconds_ddm: t_ddm,
        wall_seconds_reference: t_ref,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bar_fields(sigma: f64) -> (Vec<Field>, Patch) {
        let g = CompositeGeometry::new(
            vec![AxisBox::new(&[0.0, 0.0, 0.0], &[2.0, 1.0, 1.0]).unwrap()],
            vec!["bar".into()],
        )
        .unwrap();
        let i = Port {
            box_index: 0,
            face: Face::lo(0),
        };
        let o = Port {
            box_index: 0,
            face: Face::hi(0),
        };
        let s = solve_resistance_potential(&g, i, o, sigma, &[vec![9, 5, 5]]).unwrap();
        (s.fields, g.boxes()[0].face_patch(Face::hi(0)))
    }

    #[test]
    fn bar_resistance_is_length_over_sigma_area() {
        let (f, p) = bar_fields(1.0);
        let r = extract_resistance(&f, &p, 1.0).unwrap();
        assert!((r - 2.0).abs() < 2e-3);
        let r2 = extract_resistance(&f, &p, 5.998e7).unwrap();
        assert!((r2 / (r / 5.998e7) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_potential_has_no_flux() {
        let (f, p) = bar_fields(1.0);
        let zero: Vec<Field> = f.iter().map(|x| Field::zeros(x.grid.clone())).collect();
        assert!(matches!(
            extract_resistance(&zero, &p, 1.0),
            Err(Error::ZeroFlux(_))
        ));
    }

    #[test]
    fn trapezoid_integrates_bilinear_exactly() {
        let g = StructuredGrid::new(
            AxisBox::new(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap(),
            &[3, 5, 4],
        )
        .unwrap();
        let p = g.bx().face_patch(Face::hi(0));
        let v: Vec<f64> = g
            .patch_nodes(&p)
            .unwrap()
            .iter()
            .map(|&n| {
                let q = g.point(n);
                1.0 + q[1] * q[2]
            })
            .collect();
        // integral over [0,2]x[0,3] of 1 + yz = 6 + 2*4.5
        assert!((trapezoid(&g, &p, &v).unwrap() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn shapes_sit_on_the_lattice() {
        for s in sample_shapes(30, 0.5, 4) {
            for (v, (lo, hi)) in s.as_array().iter().zip(ShapeParams::RANGES) {
                assert!((v / 0.5 - (v / 0.5).round()).abs() < 1e-12);
                assert!(*v >= lo && *v <= hi);
            }
        }
    }
}
