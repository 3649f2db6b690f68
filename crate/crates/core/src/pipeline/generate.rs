//! Subdomain dataset generators.

use super::dataset::{Dataset, Manifest};
use super::mix_seed;
use super::transform::Transform;
use crate::error::{Error, Result};
use crate::geometry::{AffineMap, AxisBox, Patch, Point};
use crate::gp::{GpSampler, GpSpec};
use crate::grid::{one_sided_derivative, restrict, Field, StructuredGrid};
use crate::neuralop::{OperatorSample, TrunkPoints};
use crate::oracle::{BcData, BcKind, BoundaryCondition, FdSolver, LinearSolverOptions, PdeProblem};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Quantity read off a face as a branch input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Value,
    /// `weight u + conductivity du/dn` with the outward normal of the
    /// subdomain.
    Robin {
        weight: f64,
        conductivity: f64,
    },
}

/// Face whose data is drawn from a Gaussian process per sample and imposed
/// with the given condition kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpFace {
    pub patch: Patch,
    pub kind: BcKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpDataSpec {
    /// Conditions with fixed data; together with `gp_faces` they must cover
    /// every face.
    pub problem: PdeProblem,
    pub gp_faces: Vec<GpFace>,
    pub grid_n: Vec<usize>,
    pub gp: GpSpec,
    /// Optional constant branch prepended to every sample.
    pub fixed_inputs: Option<Vec<f64>>,
}

/// Node coordinates of `grid`, one row per node.
pub fn grid_trunk(grid: &StructuredGrid) -> TrunkPoints {
    let d = grid.dim();
    Arc::new(Array2::from_shape_fn((grid.len(), d), |(i, k)| {
        grid.point(i)[k]
    }))
}

/// Samples GP data on every GP face, solves the completed subdomain
/// problem and packages one branch per GP face (after the optional fixed
/// branch) with the nodal solution as targets.
pub fn gen_dataset_gp(spec: &GpDataSpec, count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::Precondition("count must be at least 1".into()));
    }
    spec.gp.validate()?;
    let mut problem = spec.problem.clone();
    let first_gp = problem.bcs.len();
    for f in &spec.gp_faces {
        problem.bcs.push(BoundaryCondition {
            patch: f.patch,
            kind: f.kind,
            data: BcData::Constant(0.0),
        });
    }
    let fd = FdSolver::new(&problem, &spec.grid_n, LinearSolverOptions::default())?;
    let grid = fd.grid().clone();
    let samplers = spec
        .gp_faces
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let pts = local_points(&grid, &grid.patch_nodes(&f.patch)?);
            let mut gp = spec.gp;
            gp.seed = mix_seed(seed, k as u64);
            GpSampler::new(&gp, &pts)
        })
        .collect::<Result<Vec<_>>>()?;
    let trunk = grid_trunk(&grid);
    let samples = (0..count)
        .into_par_iter()
        .map(|i| {
            let traces: Vec<Vec<f64>> = samplers.iter().map(|s| s.draw(i as u64)).collect();
            let data: Vec<BcData> = traces.iter().map(|t| BcData::Nodal(t.clone())).collect();
            let replace: Vec<(usize, &BcData)> = data
                .iter()
                .enumerate()
                .map(|(k, d)| (first_gp + k, d))
                .collect();
            let field = fd.solve_with(&replace, None).map_err(|e| Error::Solver {
                label: format!("sample {i}"),
                source: Box::new(e),
            })?;
            let mut branch_inputs = Vec::with_capacity(traces.len() + 1);
            if let Some(f) = &spec.fixed_inputs {
                branch_inputs.push(f.clone());
            }
            branch_inputs.extend(traces);
            Ok(OperatorSample {
                branch_inputs,
                trunk: trunk.clone(),
                targets: field.values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(
        samples,
        Manifest {
            generator: "gp".into(),
            seed,
            count,
            branch_widths: Vec::new(),
            trunk_dim: 0,
            domain: problem.bx,
            details: serde_json::to_value(spec)?,
            parents: Vec::new(),
            transforms: Vec::new(),
            fingerprint: String::new(),
        },
    )
}

/// GP distances are measured in the subdomain's own frame.
fn local_points(grid: &StructuredGrid, nodes: &[usize]) -> Vec<Point> {
    let lo = grid.bx().lo();
    nodes
        .iter()
        .map(|&n| {
            let mut p = grid.point(n);
            for k in 0..grid.dim() {
                p[k] -= lo[k];
            }
            p
        })
        .collect()
}

/// A subdomain cut out of global solutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdomainCut {
    pub label: String,
    pub bx: AxisBox,
    pub grid_n: Vec<usize>,
    /// One branch per sensor face, in order.
    pub sensors: Vec<(Patch, TraceKind)>,
}

/// Trace of `field` on `patch` of its own box.
pub fn face_trace(field: &Field, patch: &Patch, kind: TraceKind) -> Result<Vec<f64>> {
    let grid = &field.grid;
    let nodes = grid.patch_nodes(patch)?;
    let values: Vec<f64> = nodes.iter().map(|&n| field.values[n]).collect();
    match kind {
        TraceKind::Value => Ok(values),
        TraceKind::Robin {
            weight,
            conductivity,
        } => {
            let axis = patch.normal_axis();
            let plane = grid.plane_index(axis, patch.coord()).ok_or_else(|| {
                Error::Geometry("sensor face is not a node plane of the subdomain grid".into())
            })?;
            let d = one_sided_derivative(field, axis, plane, patch.face.side.sign(), &nodes)?;
            Ok(values
                .iter()
                .zip(d)
                .map(|(u, du)| weight * u + conductivity * du)
                .collect())
        }
    }
}

/// Solves `count` global problems, restricts each solution to every cut and
/// reads the sensor traces off the restricted fields. Returns one dataset
/// per cut.
pub fn gen_dataset_interpolation<F>(
    problems: F,
    global_n: &[usize],
    cuts: &[SubdomainCut],
    count: usize,
    seed: u64,
) -> Result<Vec<Dataset>>
where
    F: Fn(usize) -> Result<PdeProblem> + Sync,
{
    if count == 0 {
        return Err(Error::Precondition("count must be at least 1".into()));
    }
    let trunks: Vec<TrunkPoints> = cuts
        .iter()
        .map(|c| StructuredGrid::new(c.bx, &c.grid_n).map(|g| grid_trunk(&g)))
        .collect::<Result<_>>()?;
    let per_sample = (0..count)
        .into_par_iter()
        .map(|i| {
            let wrap = |e: Error| Error::Solver {
                label: format!("sample {i}"),
                source: Box::new(e),
            };
            let p = problems(i).map_err(wrap)?;
            let global = FdSolver::new(&p, global_n, LinearSolverOptions::default())
                .and_then(|fd| fd.solve())
                .map_err(wrap)?;
            cuts.iter()
                .zip(&trunks)
                .map(|(c, t)| {
                    let local = restrict(&global, &c.bx, &c.grid_n)?;
                    let branch_inputs = c
                        .sensors
                        .iter()
                        .map(|(patch, kind)| face_trace(&local, patch, *kind))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(OperatorSample {
                        branch_inputs,
                        trunk: t.clone(),
                        targets: local.values,
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map_err(wrap)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(cuts.len());
    for (j, c) in cuts.iter().enumerate() {
        let samples = per_sample.iter().map(|s| s[j].clone()).collect();
        out.push(Dataset::new(
            samples,
            Manifest {
                generator: "interpolation".into(),
                seed,
                count,
                branch_widths: Vec::new(),
                trunk_dim: 0,
                domain: c.bx,
                details: serde_json::json!({ "cut": c, "global_n": global_n }),
                parents: Vec::new(),
                transforms: Vec::new(),
                fingerprint: String::new(),
            },
        )?);
    }
    Ok(out)
}

/// Concatenates `a` and `b`, mapping `b`'s trunk points into `a`'s frame.
pub fn merge_datasets(a: &Dataset, b: &Dataset, alignment: &AffineMap) -> Result<Dataset> {
    let (ma, mb) = (&a.manifest, &b.manifest);
    if ma.branch_widths != mb.branch_widths
        || ma.trunk_dim != mb.trunk_dim
        || alignment.dim() != ma.trunk_dim
    {
        return Err(Error::Shape(format!(
            "cannot merge widths {:?}/{} with {:?}/{} under a {}-d alignment",
            ma.branch_widths,
            ma.trunk_dim,
            mb.branch_widths,
            mb.trunk_dim,
            alignment.dim()
        )));
    }
    let d = ma.trunk_dim;
    let mut mapped: Vec<(TrunkPoints, TrunkPoints)> = Vec::new();
    let mut samples = a.samples.clone();
    for s in &b.samples {
        let t = match mapped.iter().find(|(orig, _)| Arc::ptr_eq(orig, &s.trunk)) {
            Some((_, m)) => m.clone(),
            None => {
                let mut m = (*s.trunk).clone();
                for mut row in m.rows_mut() {
                    let p = alignment.apply(row.as_slice().unwrap());
                    if !ma.domain.contains(&p, 1e-9) {
                        return Err(Error::Alignment(format!(
                            "mapped trunk point {:?} leaves the target box",
                            &p[..d]
                        )));
                    }
                    row.assign(&ndarray::ArrayView1::from(&p[..d]));
                }
                let m = Arc::new(m);
                mapped.push((s.trunk.clone(), m.clone()));
                m
            }
        };
        samples.push(OperatorSample {
            branch_inputs: s.branch_inputs.clone(),
            trunk: t,
            targets: s.targets.clone(),
        });
    }
    let mut m = ma.clone();
    m.generator = "merge".into();
    m.parents = vec![ma.fingerprint.clone(), mb.fingerprint.clone()];
    m.details = serde_json::json!({ "alignment": alignment });
    Dataset::new(samples, m)
}

/// Applies `t` to every target vector, checking the round trip, and
/// records it in the manifest.
pub fn transform_targets(ds: &Dataset, t: &Transform) -> Result<Dataset> {
    let mut samples = ds.samples.clone();
    for s in samples.iter_mut() {
        let y = t.apply(&s.targets)?;
        let back = t.invert(&y)?;
        if let Some((x, b)) = s
            .targets
            .iter()
            .zip(&back)
            .find(|(x, b)| (*x - *b).abs() > 1e-10 * x.abs().max(1.0))
        {
            return Err(Error::Domain {
                value: *x,
                detail: format!("round trip returned {b}"),
            });
        }
        s.targets = y;
    }
    let mut m = ds.manifest.clone();
    m.parents = vec![ds.manifest.fingerprint.clone()];
    m.transforms.push(t.clone());
    Dataset::new(samples, m)
}
