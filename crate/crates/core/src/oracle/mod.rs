//! Second-order finite-difference solvers for the elliptic problems of the
//! toolkit: the ground-truth oracle, the training-data generator and the
//! classical subdomain solver inside interface iterations.
//!
//! Boundary conditions are written as `alpha u + beta du/dn = g` with `n`
//! the outward normal of the box; the flux entering the discrete balance is
//! `c_n du/dn`, with `c_n` the diffusion coefficient along the face normal.

mod assembly;
mod multimedium;
mod resistance;

pub(crate) use assembly::{Assembly, BcSpec, BlockSpec};
pub use multimedium::{solve_multimedium, MaterialStack, MultimediumSolution, LOWER, UPPER};
pub use resistance::{counts_for_spacing, solve_resistance_potential, PotentialSolution};

use crate::error::{Error, Result};
use crate::geometry::{AxisBox, Face, Patch};
use crate::grid::{Field, StructuredGrid};
pub use crate::linalg::LinearSolverOptions;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BcKind {
    Dirichlet,
    Neumann,
    /// `alpha u + beta du/dn = g`.
    Robin {
        alpha: f64,
        beta: f64,
    },
}

impl BcKind {
    /// `(alpha, beta)` in `alpha u + beta du/dn = g`.
    pub fn coefficients(&self) -> (f64, f64) {
        match *self {
            BcKind::Dirichlet => (1.0, 0.0),
            BcKind::Neumann => (0.0, 1.0),
            BcKind::Robin { alpha, beta } => (alpha, beta),
        }
    }

    pub fn from_coefficients(alpha: f64, beta: f64) -> BcKind {
        if beta == 0.0 && alpha == 1.0 {
            BcKind::Dirichlet
        } else if alpha == 0.0 && beta == 1.0 {
            BcKind::Neumann
        } else {
            BcKind::Robin { alpha, beta }
        }
    }
}

/// Boundary data: one constant, or one value per patch node (row-major over
/// the patch's tangential axes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BcData {
    Constant(f64),
    Nodal(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCondition {
    pub patch: Patch,
    pub kind: BcKind,
    pub data: BcData,
}

impl BoundaryCondition {
    pub fn dirichlet(patch: Patch, data: BcData) -> Self {
        BoundaryCondition {
            patch,
            kind: BcKind::Dirichlet,
            data,
        }
    }

    pub fn neumann(patch: Patch, data: BcData) -> Self {
        BoundaryCondition {
            patch,
            kind: BcKind::Neumann,
            data,
        }
    }

    pub fn robin(patch: Patch, alpha: f64, beta: f64, data: BcData) -> Self {
        BoundaryCondition {
            patch,
            kind: BcKind::Robin { alpha, beta },
            data,
        }
    }
}

/// Volume source `p`, constant or nodal on the solve grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Source {
    Constant(f64),
    Nodal(Vec<f64>),
}

/// `-sum_k c_k d2u/dx_k2 = p` on a box with boundary conditions covering
/// every face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeProblem {
    pub bx: AxisBox,
    pub diffusion: Vec<f64>,
    pub source: Source,
    pub bcs: Vec<BoundaryCondition>,
}

impl PdeProblem {
    /// Laplace problem with the given boundary conditions.
    pub fn laplace(bx: AxisBox, bcs: Vec<BoundaryCondition>) -> Self {
        PdeProblem {
            diffusion: vec![1.0; bx.dim()],
            bx,
            source: Source::Constant(0.0),
            bcs,
        }
    }

    fn validate(&self, grid: &StructuredGrid) -> Result<()> {
        if self.diffusion.len() != self.bx.dim() || self.diffusion.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::Precondition(
                "diffusion coefficients must be positive, one per axis".into(),
            ));
        }
        if let Source::Nodal(v) = &self.source {
            if v.len() != grid.len() {
                return Err(Error::Shape(format!(
                    "nodal source has {} values for {} nodes",
                    v.len(),
                    grid.len()
                )));
            }
        }
        for (i, bc) in self.bcs.iter().enumerate() {
            if !bc.patch.lies_on(&self.bx, bc.patch.face) {
                return Err(Error::Geometry(format!(
                    "boundary condition {i} does not lie on the box face it names"
                )));
            }
            check_data(grid, &bc.patch, &bc.data)?;
        }
        for face in Face::all(self.bx.dim()) {
            let full = self.bx.face_patch(face).area();
            let covered: f64 = self
                .bcs
                .iter()
                .filter(|bc| bc.patch.face == face)
                .map(|bc| bc.patch.area())
                .sum();
            if covered < full * (1.0 - 1e-9) {
                return Err(Error::Precondition(format!(
                    "face (axis {}, {:?}) is not fully covered by boundary conditions",
                    face.axis, face.side
                )));
            }
        }
        Ok(())
    }
}

fn check_data(grid: &StructuredGrid, patch: &Patch, data: &BcData) -> Result<()> {
    if let BcData::Nodal(v) = data {
        let n = grid.patch_nodes(patch)?.len();
        if v.len() != n {
            return Err(Error::Shape(format!(
                "boundary data has {} values for {n} patch nodes",
                v.len()
            )));
        }
    }
    Ok(())
}

/// Uniform face conditions: one condition per face, taken from `f`.
pub fn face_bcs(bx: &AxisBox, f: impl Fn(Face) -> (BcKind, BcData)) -> Vec<BoundaryCondition> {
    Face::all(bx.dim())
        .into_iter()
        .map(|face| {
            let (kind, data) = f(face);
            BoundaryCondition {
                patch: bx.face_patch(face),
                kind,
                data,
            }
        })
        .collect()
}

/// A discretized single-box problem with its matrix factorized once.
///
/// Boundary data and source may be replaced per solve as long as the kinds
/// of the conditions stay the same, which is what interface iterations and
/// dataset generation need.
#[derive(Debug, Clone)]
pub struct FdSolver {
    problem: PdeProblem,
    grid: StructuredGrid,
    assembly: Assembly,
}

impl FdSolver {
    pub fn new(problem: &PdeProblem, grid_n: &[usize], opts: LinearSolverOptions) -> Result<Self> {
        let grid = StructuredGrid::new(problem.bx, grid_n)?;
        problem.validate(&grid)?;
        let mut coeff = [1.0; 3];
        coeff[..problem.bx.dim()].copy_from_slice(&problem.diffusion);
        let specs: Vec<BcSpec> = problem
            .bcs
            .iter()
            .map(|bc| BcSpec {
                block: 0,
                patch: bc.patch,
                kind: bc.kind,
            })
            .collect();
        let assembly = Assembly::new(&[BlockSpec { grid: &grid, coeff }], &specs, opts)?;
        Ok(FdSolver {
            problem: problem.clone(),
            grid,
            assembly,
        })
    }

    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    pub fn problem(&self) -> &PdeProblem {
        &self.problem
    }

    pub fn solve(&self) -> Result<Field> {
        self.solve_with(&[], None)
    }

    /// Solves with the data of selected conditions replaced
    /// (`(condition index, data)` pairs) and optionally a different source.
    pub fn solve_with(
        &self,
        replace: &[(usize, &BcData)],
        source: Option<&Source>,
    ) -> Result<Field> {
        let mut data: Vec<&BcData> = self.problem.bcs.iter().map(|bc| &bc.data).collect();
        for &(i, d) in replace {
            let bc = self.problem.bcs.get(i).ok_or_else(|| {
                Error::Precondition(format!("no boundary condition with index {i}"))
            })?;
            check_data(&self.grid, &bc.patch, d)?;
            data[i] = d;
        }
        let src = source.unwrap_or(&self.problem.source);
        if let Source::Nodal(v) = src {
            if v.len() != self.grid.len() {
                return Err(Error::Shape("nodal source length mismatch".into()));
            }
        }
        let mut values = self.assembly.solve(&data, &[src])?;
        Field::new(self.grid.clone(), values.pop().unwrap())
    }
}

/// One-shot solve of `problem` on a grid with `grid_n` nodes per axis.
pub fn solve_elliptic(problem: &PdeProblem, grid_n: &[usize]) -> Result<Field> {
    FdSolver::new(problem, grid_n, LinearSolverOptions::default())?.solve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::interpolate;
    use approx::assert_abs_diff_eq;

    fn unit_square() -> AxisBox {
        AxisBox::unit(2).unwrap()
    }

    #[test]
    fn linear_laplace_is_exact() {
        let bx = unit_square();
        let bcs = face_bcs(&bx, |f| match (f.axis, f.side) {
            (0, crate::geometry::Side::Lo) => (BcKind::Dirichlet, BcData::Constant(0.0)),
            (0, _) => (BcKind::Dirichlet, BcData::Constant(1.0)),
            _ => (BcKind::Neumann, BcData::Constant(0.0)),
        });
        let u = solve_elliptic(&PdeProblem::laplace(bx, bcs), &[11, 9]).unwrap();
        for (i, v) in u.values.iter().enumerate() {
            assert_abs_diff_eq!(*v, u.grid.point(i)[0], epsilon = 1e-12);
        }
        let v = interpolate(&u, &[[0.5, 0.25, 0.0]]).unwrap()[0];
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn poisson_quadratic_midpoint() {
        // -u'' = 1, u(0) = u(1) = 0, laterally insulated: u = x(1-x)/2
        let bx = unit_square();
        let bcs = face_bcs(&bx, |f| {
            if f.axis == 0 {
                (BcKind::Dirichlet, BcData::Constant(0.0))
            } else {
                (BcKind::Neumann, BcData::Constant(0.0))
            }
        });
        let p = PdeProblem {
            source: Source::Constant(1.0),
            ..PdeProblem::laplace(bx, bcs)
        };
        let u = solve_elliptic(&p, &[11, 3]).unwrap();
        let mid = interpolate(&u, &[[0.5, 0.5, 0.0]]).unwrap()[0];
        assert_abs_diff_eq!(mid, 0.125, epsilon = 1e-12);
    }

    #[test]
    fn pure_neumann_is_singular() {
        let bx = unit_square();
        let bcs = face_bcs(&bx, |_| (BcKind::Neumann, BcData::Constant(0.0)));
        assert!(matches!(
            solve_elliptic(&PdeProblem::laplace(bx, bcs), &[5, 5]),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn uncovered_face_is_rejected() {
        let bx = unit_square();
        let mut bcs = face_bcs(&bx, |_| (BcKind::Dirichlet, BcData::Constant(0.0)));
        bcs.pop();
        assert!(matches!(
            solve_elliptic(&PdeProblem::laplace(bx, bcs), &[5, 5]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn robin_face_matches_analytic_profile() {
        // u'' = 0 on [0,1], u(0) = 0, u + u' = 3 at x = 1 -> u = 1.5 x
        let bx = unit_square();
        let bcs = face_bcs(&bx, |f| match (f.axis, f.side) {
            (0, crate::geometry::Side::Lo) => (BcKind::Dirichlet, BcData::Constant(0.0)),
            (0, _) => (
                BcKind::Robin {
                    alpha: 1.0,
                    beta: 1.0,
                },
                BcData::Constant(3.0),
            ),
            _ => (BcKind::Neumann, BcData::Constant(0.0)),
        });
        let u = solve_elliptic(&PdeProblem::laplace(bx, bcs), &[9, 4]).unwrap();
        for (i, v) in u.values.iter().enumerate() {
            assert_abs_diff_eq!(*v, 1.5 * u.grid.point(i)[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn manufactured_solution_converges_at_second_order() {
        use std::f64::consts::PI;
        let mut errs = Vec::new();
        for n in [9, 17, 33] {
            let bx = unit_square();
            let grid = StructuredGrid::new(bx, &[n, n]).unwrap();
            let exact = |p: &[f64; 3]| (PI * p[0]).sin() * (PI * p[1]).sin();
            let src = Source::Nodal(
                (0..grid.len())
                    .map(|i| 2.0 * PI * PI * exact(&grid.point(i)))
                    .collect(),
            );
            let bcs = face_bcs(&bx, |_| (BcKind::Dirichlet, BcData::Constant(0.0)));
            let p = PdeProblem {
                source: src,
                ..PdeProblem::laplace(bx, bcs)
            };
            let u = solve_elliptic(&p, &[n, n]).unwrap();
            let e = (0..grid.len())
                .map(|i| (u.values[i] - exact(&grid.point(i))).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!((r - 4.0).abs() <= 0.6, "ratio {r}");
        }
    }

    #[test]
    fn maximum_principle_holds() {
        let bx = AxisBox::unit(3).unwrap();
        let grid = StructuredGrid::new(bx, &[7, 7, 7]).unwrap();
        let top = grid.patch_nodes(&bx.face_patch(Face::hi(2))).unwrap();
        let data: Vec<f64> = (0..top.len())
            .map(|i| -1.0 + 3.0 * ((i * 7919) % 97) as f64 / 96.0)
            .collect();
        let bcs = face_bcs(&bx, |f| {
            if f == Face::hi(2) {
                (BcKind::Dirichlet, BcData::Nodal(data.clone()))
            } else if f == Face::lo(2) {
                (BcKind::Dirichlet, BcData::Constant(0.5))
            } else {
                (BcKind::Neumann, BcData::Constant(0.0))
            }
        });
        let u = solve_elliptic(&PdeProblem::laplace(bx, bcs), &[7, 7, 7]).unwrap();
        for v in &u.values {
            assert!(*v >= -1.0 - 1e-10 && *v <= 2.0 + 1e-10);
        }
    }
}
