//! Box problems decomposed along one axis, and their subdomain solvers.

use crate::config::{FaceKindName, GeometryBlock, SolverBlock, VariantBlock};
use crate::error::{CliError, CliResult};
use ddonet::ddm::{
    BranchPiece, DdmSchedule, InitialGuess, OpenFace, Scheme, SubdomainSolver, Transmission,
};
use ddonet::geometry::{make_nonoverlap_partition, make_overlap_partition, AxisBox, Face, Side};
use ddonet::grid::{Field, StructuredGrid};
use ddonet::neuralop::OperatorNet;
use ddonet::oracle::{solve_elliptic, BcData, BcKind, BoundaryCondition, PdeProblem, Source};
use std::collections::BTreeMap;
use std::sync::Arc;

const AXES: [&str; 3] = ["x", "y", "z"];

pub fn parse_face(name: &str, dim: usize) -> CliResult<Face> {
    let bad = || {
        CliError::config(format!(
            "unknown face `{name}` (expected e.g. `x-lo` or `y-hi`)"
        ))
    };
    let (axis, side) = name.split_once('-').ok_or_else(bad)?;
    let axis = AXES[..dim]
        .iter()
        .position(|a| *a == axis)
        .ok_or_else(bad)?;
    let side = match side {
        "lo" => Side::Lo,
        "hi" => Side::Hi,
        _ => return Err(bad()),
    };
    Ok(Face::new(axis, side))
}

pub fn face_name(f: Face) -> String {
    format!(
        "{}-{}",
        AXES[f.axis],
        if f.side == Side::Lo { "lo" } else { "hi" }
    )
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decomposition {
    Overlap([f64; 2]),
    Cuts(Vec<f64>),
    Whole,
}

#[derive(Debug, Clone)]
pub struct Sub {
    pub label: String,
    pub bx: AxisBox,
    pub n: Vec<usize>,
    /// Faces on the outer boundary.
    pub physical: Vec<Face>,
    /// Interface faces, in face order.
    pub open: Vec<Face>,
}

#[derive(Debug, Clone)]
pub struct BoxSetup {
    pub domain: AxisBox,
    pub spacing: f64,
    pub n: Vec<usize>,
    pub diffusion: Vec<f64>,
    pub source: f64,
    /// Kind and constant data of every outer face, in face order.
    pub faces: Vec<(Face, BcKind, f64)>,
    pub subs: Vec<Sub>,
}

fn counts(bx: &AxisBox, h: f64) -> CliResult<Vec<usize>> {
    (0..bx.dim())
        .map(|k| {
            let r = bx.extent(k) / h;
            if (r - r.round()).abs() > 1e-6 * r.max(1.0) || r.round() < 2.0 {
                return Err(CliError::config(format!(
                    "spacing {h} does not divide the extent {} along axis {k} into at least two cells",
                    bx.extent(k)
                )));
            }
            Ok(r.round() as usize + 1)
        })
        .collect()
}

impl BoxSetup {
    pub fn new(g: &GeometryBlock, decomposition: &Decomposition) -> CliResult<Self> {
        let (lo, hi) = match (&g.lo, &g.hi) {
            (Some(lo), Some(hi)) => (lo, hi),
            _ => {
                return Err(CliError::config(
                    "this command needs geometry.lo and geometry.hi",
                ))
            }
        };
        let domain = AxisBox::new(lo, hi)?;
        let d = domain.dim();
        let diffusion = g.diffusion.clone().unwrap_or_else(|| vec![1.0; d]);
        if diffusion.len() != d || diffusion.iter().any(|c| !(*c > 0.0)) {
            return Err(CliError::config(
                "geometry.diffusion needs one positive value per axis",
            ));
        }
        let mut faces = Vec::new();
        for f in Face::all(d) {
            let mut spec = (f, BcKind::Neumann, 0.0);
            for b in &g.boundary {
                if parse_face(&b.face, d)? == f {
                    let kind = match b.kind {
                        FaceKindName::Dirichlet => BcKind::Dirichlet,
                        FaceKindName::Neumann => BcKind::Neumann,
                        FaceKindName::Robin => BcKind::Robin {
                            alpha: b.alpha.unwrap_or(1.0),
                            beta: b.beta.unwrap_or(1.0),
                        },
                    };
                    spec = (f, kind, b.value);
                }
            }
            faces.push(spec);
        }
        let (boxes, labels): (Vec<AxisBox>, Vec<String>) = match decomposition {
            Decomposition::Overlap([a, b]) => {
                let p = make_overlap_partition(&domain, g.axis, *a, *b)?;
                (vec![p.a, p.b], vec!["sub1".into(), "sub2".into()])
            }
            Decomposition::Cuts(c) => {
                let p = make_nonoverlap_partition(&domain, g.axis, c)?;
                (p.boxes().to_vec(), p.labels().to_vec())
            }
            Decomposition::Whole => (vec![domain], vec!["global".into()]),
        };
        let mut subs = Vec::new();
        for (bx, label) in boxes.into_iter().zip(labels) {
            let (mut physical, mut open) = (Vec::new(), Vec::new());
            for f in Face::all(d) {
                if (bx.face_coord(f) - domain.face_coord(f)).abs() < 1e-12 {
                    physical.push(f);
                } else {
                    open.push(f);
                }
            }
            subs.push(Sub {
                n: counts(&bx, g.spacing)?,
                label,
                bx,
                physical,
                open,
            });
        }
        Ok(BoxSetup {
            n: counts(&domain, g.spacing)?,
            domain,
            spacing: g.spacing,
            diffusion,
            source: g.source,
            faces,
            subs,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn face(&self, f: Face) -> (BcKind, f64) {
        let s = self.faces.iter().find(|s| s.0 == f).unwrap();
        (s.1, s.2)
    }

    pub fn global_problem(&self) -> PdeProblem {
        let bcs = self
            .faces
            .iter()
            .map(|&(f, kind, v)| BoundaryCondition {
                patch: self.domain.face_patch(f),
                kind,
                data: BcData::Constant(v),
            })
            .collect();
        self.problem_on(self.domain, bcs)
    }

    fn problem_on(&self, bx: AxisBox, bcs: Vec<BoundaryCondition>) -> PdeProblem {
        PdeProblem {
            bx,
            diffusion: self.diffusion.clone(),
            source: Source::Constant(self.source),
            bcs,
        }
    }

    /// Subdomain problem with configured data on the physical faces not in
    /// `skip`, and homogeneous Dirichlet placeholders on the open faces when
    /// `with_open` is set.
    pub fn sub_problem(&self, sub: &Sub, skip: &[Face], with_open: bool) -> PdeProblem {
        let mut bcs = Vec::new();
        for &f in &sub.physical {
            if !skip.contains(&f) {
                let (kind, v) = self.face(f);
                bcs.push(BoundaryCondition {
                    patch: sub.bx.face_patch(f),
                    kind,
                    data: BcData::Constant(v),
                });
            }
        }
        if with_open {
            for &f in &sub.open {
                bcs.push(BoundaryCondition::dirichlet(
                    sub.bx.face_patch(f),
                    BcData::Constant(0.0),
                ));
            }
        }
        self.problem_on(sub.bx, bcs)
    }

    pub fn physical_kind(&self, f: Face) -> BcKind {
        self.face(f).0
    }

    /// Condition kind each open face receives under `scheme`, in the order
    /// of `sub.open`.
    pub fn slot_kinds(&self, index: usize, scheme: Scheme, schedule: &DdmSchedule) -> Vec<BcKind> {
        let sub = &self.subs[index];
        sub.open
            .iter()
            .map(|f| match scheme {
                Scheme::Schwarz | Scheme::IterationFree => BcKind::Dirichlet,
                Scheme::Framework1 => {
                    // the neighbour on the lo side comes earlier in the chain
                    let c = if f.side == Side::Lo {
                        schedule.transmission.a
                    } else {
                        schedule.transmission.b
                    };
                    BcKind::from_coefficients(c.0, c.1)
                }
                Scheme::Framework2 => BcKind::from_coefficients(schedule.robin_weight, 1.0),
            })
            .collect()
    }

    pub fn classical_solvers(&self) -> CliResult<Vec<SubdomainSolver>> {
        self.subs
            .iter()
            .map(|s| {
                let open = s
                    .open
                    .iter()
                    .map(|&f| OpenFace::new(s.bx.face_patch(f)))
                    .collect();
                Ok(SubdomainSolver::classical(
                    &s.label,
                    self.sub_problem(s, &[], true),
                    &s.n,
                    open,
                )?)
            })
            .collect()
    }

    /// GP faces of a subdomain: the listed physical faces it touches.
    pub fn gp_faces_of(&self, sub: &Sub, gp: &[Face]) -> Vec<Face> {
        sub.physical
            .iter()
            .copied()
            .filter(|f| gp.contains(f))
            .collect()
    }

    /// Nets per label. Branches are one per GP face (configured constant
    /// data) followed by one per open face; with `iteration_free` the GP
    /// branches carry the whole outer face and there are no open faces.
    pub fn neural_solvers(
        &self,
        nets: &BTreeMap<String, Arc<OperatorNet>>,
        gp: &[Face],
        iteration_free: bool,
    ) -> CliResult<Vec<SubdomainSolver>> {
        let global = StructuredGrid::new(self.domain, &self.n)?;
        self.subs
            .iter()
            .map(|s| {
                let net = nets.get(&s.label).ok_or_else(|| {
                    CliError::CheckpointNotFound(format!("{}.ddon", s.label).into())
                })?;
                let grid = StructuredGrid::new(s.bx, &s.n)?;
                let mut branches = Vec::new();
                let faces = if iteration_free {
                    gp.to_vec()
                } else {
                    self.gp_faces_of(s, gp)
                };
                for f in faces {
                    let count = if iteration_free {
                        global.face_nodes(f).len()
                    } else {
                        grid.face_nodes(f).len()
                    };
                    branches.push(vec![BranchPiece::Fixed(vec![self.face(f).1; count])]);
                }
                let mut open = Vec::new();
                if !iteration_free {
                    for (i, &f) in s.open.iter().enumerate() {
                        open.push(OpenFace::new(s.bx.face_patch(f)));
                        branches.push(vec![BranchPiece::Open(i)]);
                    }
                }
                Ok(SubdomainSolver::neural(
                    &s.label,
                    grid,
                    net.clone(),
                    branches,
                    open,
                )?)
            })
            .collect()
    }

    pub fn oracle(&self) -> CliResult<Field> {
        Ok(solve_elliptic(&self.global_problem(), &self.n)?)
    }
}

pub fn decomposition(g: &GeometryBlock, v: Option<&VariantBlock>) -> Decomposition {
    let overlap = v
        .and_then(|v| v.overlap)
        .or(if v.is_some_and(|v| v.cuts.is_some()) {
            None
        } else {
            g.overlap
        });
    let cuts = v
        .and_then(|v| v.cuts.clone())
        .or(if v.is_some_and(|v| v.overlap.is_some()) {
            None
        } else {
            g.cuts.clone()
        });
    match (overlap, cuts) {
        (Some(o), _) => Decomposition::Overlap(o),
        (None, Some(c)) => Decomposition::Cuts(c),
        (None, None) => Decomposition::Whole,
    }
}

/// Schedule of the solver block with the variant's overrides applied.
pub fn schedule(s: &SolverBlock, v: Option<&VariantBlock>) -> (Scheme, DdmSchedule) {
    let scheme = v.and_then(|v| v.scheme).unwrap_or(s.scheme);
    let transmission = v
        .and_then(|v| v.transmission)
        .or(s.transmission)
        .map(|t| t.resolve())
        .unwrap_or(Transmission::DIRICHLET_DIRICHLET);
    let mut sched = match scheme {
        Scheme::Schwarz => DdmSchedule::schwarz(),
        Scheme::Framework1 => DdmSchedule::framework1(transmission),
        Scheme::Framework2 | Scheme::IterationFree => DdmSchedule::framework2(),
    };
    if let Some(t) = v.and_then(|v| v.theta).or(s.theta) {
        sched.theta = t;
    }
    if let Some(t) = v.and_then(|v| v.tolerance).or(s.tolerance) {
        sched.tolerance = t;
    }
    if let Some(m) = v.and_then(|v| v.max_iterations).or(s.max_iterations) {
        sched.max_iterations = m;
    }
    if let Some(t) = v.and_then(|v| v.termination).or(s.termination) {
        sched.termination = t;
    }
    if let Some(c) = s.initial {
        sched.initial = InitialGuess::Constant(c);
    }
    if let Some(w) = s.robin_weight {
        sched.robin_weight = w;
    }
    sched.order = s.order.clone();
    (scheme, sched)
}
