//! Subdomain solvers with open interface faces whose data is supplied per
//! solve.

use crate::error::{Error, Result};
use crate::geometry::{AffineMap, AxisBox, Patch, Point};
use crate::grid::{Field, StructuredGrid};
use crate::neuralop::{OperatorNet, TrunkPoints};
use crate::oracle::{BcData, BcKind, FdSolver, LinearSolverOptions, PdeProblem};
use crate::pipeline::grid_trunk;
use ndarray::{Array2, ArrayView2};
use std::sync::Arc;

/// An interface face of a subdomain, in the subdomain's local coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenFace {
    pub patch: Patch,
    /// Physical conductivity multiplying the normal derivative in Robin
    /// transmission conditions (`lambda u + conductivity du/dn = g`).
    pub conductivity: f64,
}

impl OpenFace {
    pub fn new(patch: Patch) -> Self {
        OpenFace {
            patch,
            conductivity: 1.0,
        }
    }
}

/// One piece of a branch input vector.
#[derive(Debug, Clone, PartialEq)]
pub enum BranchPiece {
    /// Nodal data of open face `i`, in patch node order.
    Open(usize),
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct NeuralSolver {
    pub net: Arc<OperatorNet>,
    /// Concatenation recipe for each branch input.
    pub branches: Vec<Vec<BranchPiece>>,
    pub trunk: TrunkPoints,
}

#[derive(Debug, Clone)]
pub enum SolverKind {
    Classical(PdeProblem),
    Neural(NeuralSolver),
}

/// A subdomain and the solver that produces its field from open-face data.
///
/// The solver works in local coordinates; `to_local` maps physical points
/// into them (identity unless the subdomain was stretched or translated).
#[derive(Debug, Clone)]
pub struct SubdomainSolver {
    pub label: String,
    pub grid: StructuredGrid,
    pub to_local: AffineMap,
    pub open: Vec<OpenFace>,
    pub kind: SolverKind,
}

impl SubdomainSolver {
    /// Finite-difference solver. Each open face must coincide with one
    /// boundary condition of `problem`, whose kind and data get replaced.
    pub fn classical(
        label: &str,
        problem: PdeProblem,
        grid_n: &[usize],
        open: Vec<OpenFace>,
    ) -> Result<Self> {
        let grid = StructuredGrid::new(problem.bx, grid_n)?;
        for (i, o) in open.iter().enumerate() {
            if !problem
                .bcs
                .iter()
                .any(|bc| bc.patch.same_region(&o.patch) && bc.patch.face == o.patch.face)
            {
                return Err(Error::Precondition(format!(
                    "subdomain `{label}`: open face {i} matches no boundary condition"
                )));
            }
        }
        Ok(SubdomainSolver {
            label: label.into(),
            to_local: AffineMap::identity(problem.bx.dim()),
            grid,
            open,
            kind: SolverKind::Classical(problem),
        })
    }

    /// Operator-net solver predicting the field on `grid` nodes. The trunk
    /// sees the local node coordinates.
    pub fn neural(
        label: &str,
        grid: StructuredGrid,
        net: Arc<OperatorNet>,
        branches: Vec<Vec<BranchPiece>>,
        open: Vec<OpenFace>,
    ) -> Result<Self> {
        let trunk = grid_trunk(&grid);
        Self::neural_with_trunk(label, grid, net, branches, open, trunk)
    }

    /// As [`SubdomainSolver::neural`] with explicit trunk inputs, one row
    /// per grid node (e.g. translated coordinates).
    pub fn neural_with_trunk(
        label: &str,
        grid: StructuredGrid,
        net: Arc<OperatorNet>,
        branches: Vec<Vec<BranchPiece>>,
        open: Vec<OpenFace>,
        trunk: TrunkPoints,
    ) -> Result<Self> {
        if branches.len() != net.branches.len() {
            return Err(Error::Shape(format!(
                "subdomain `{label}`: {} branch recipes for {} branches",
                branches.len(),
                net.branches.len()
            )));
        }
        if trunk.nrows() != grid.len() || trunk.ncols() != net.trunk_dim() {
            return Err(Error::Shape(format!(
                "subdomain `{label}`: trunk inputs are {}x{}, expected {}x{}",
                trunk.nrows(),
                trunk.ncols(),
                grid.len(),
                net.trunk_dim()
            )));
        }
        let solver = SubdomainSolver {
            label: label.into(),
            to_local: AffineMap::identity(grid.dim()),
            grid,
            open,
            kind: SolverKind::Neural(NeuralSolver {
                net,
                branches,
                trunk,
            }),
        };
        // widths are checked against the net once, with the sensor counts
        for (b, recipe) in solver.neural_parts().unwrap().branches.iter().enumerate() {
            let mut width = 0;
            for piece in recipe {
                width += match piece {
                    BranchPiece::Open(i) => {
                        let o = solver.open.get(*i).ok_or_else(|| {
                            Error::Shape(format!("branch {b} refers to missing open face {i}"))
                        })?;
                        solver.grid.patch_nodes(&o.patch)?.len()
                    }
                    BranchPiece::Fixed(v) => v.len(),
                };
            }
            let expected = solver.neural_parts().unwrap().net.branches[b].input_width();
            if width != expected {
                return Err(Error::Shape(format!(
                    "subdomain `{label}` branch {b}: sensors give width {width}, the net expects {expected}"
                )));
            }
        }
        Ok(solver)
    }

    pub fn with_map(mut self, to_local: AffineMap) -> Self {
        self.to_local = to_local;
        self
    }

    fn neural_parts(&self) -> Option<&NeuralSolver> {
        match &self.kind {
            SolverKind::Neural(n) => Some(n),
            SolverKind::Classical(_) => None,
        }
    }

    pub fn is_neural(&self) -> bool {
        self.neural_parts().is_some()
    }

    /// Box in physical coordinates.
    pub fn physical_box(&self) -> Result<AxisBox> {
        let b = self.grid.bx();
        let d = b.dim();
        let lo = self.to_local.invert(b.lo());
        let hi = self.to_local.invert(b.hi());
        AxisBox::new(&lo[..d], &hi[..d])
    }

    pub fn to_physical(&self, p: &Point) -> Point {
        self.to_local.invert(&p[..self.grid.dim()])
    }

    /// Node indices and physical coordinates of open face `i`.
    pub fn open_nodes(&self, i: usize) -> Result<(Vec<usize>, Vec<Point>)> {
        let nodes = self.grid.patch_nodes(&self.open[i].patch)?;
        let phys = nodes
            .iter()
            .map(|&n| self.to_physical(&self.grid.point(n)))
            .collect();
        Ok((nodes, phys))
    }

    /// Binds the kinds of the open faces for a run.
    pub fn prepare(&self, kinds: &[BcKind]) -> Result<PreparedSolver<'_>> {
        if kinds.len() != self.open.len() {
            return Err(Error::Precondition(format!(
                "subdomain `{}`: {} kinds for {} open faces",
                self.label,
                kinds.len(),
                self.open.len()
            )));
        }
        match &self.kind {
            SolverKind::Classical(problem) => {
                let mut p = problem.clone();
                let mut slots = Vec::with_capacity(self.open.len());
                for (o, kind) in self.open.iter().zip(kinds) {
                    let i = p
                        .bcs
                        .iter()
                        .position(|bc| {
                            bc.patch.same_region(&o.patch) && bc.patch.face == o.patch.face
                        })
                        .unwrap();
                    p.bcs[i].kind = *kind;
                    p.bcs[i].data = BcData::Constant(0.0);
                    slots.push(i);
                }
                let fd = FdSolver::new(&p, self.grid.counts(), LinearSolverOptions::default())
                    .map_err(|e| e.in_subdomain(&self.label))?;
                Ok(PreparedSolver {
                    owner: self,
                    inner: Inner::Classical {
                        fd: Box::new(fd),
                        slots,
                    },
                })
            }
            SolverKind::Neural(n) => Ok(PreparedSolver {
                owner: self,
                inner: Inner::Neural(n),
            }),
        }
    }
}

enum Inner<'a> {
    Classical {
        fd: Box<FdSolver>,
        slots: Vec<usize>,
    },
    Neural(&'a NeuralSolver),
}

pub struct PreparedSolver<'a> {
    owner: &'a SubdomainSolver,
    inner: Inner<'a>,
}

impl PreparedSolver<'_> {
    pub fn owner(&self) -> &SubdomainSolver {
        self.owner
    }

    /// Field for the given open-face data (one nodal vector per open face).
    pub fn solve(&self, data: &[Vec<f64>]) -> Result<Field> {
        let s = self.owner;
        let run = || -> Result<Field> {
            match &self.inner {
                Inner::Classical { fd, slots } => {
                    let owned: Vec<BcData> =
                        data.iter().map(|v| BcData::Nodal(v.clone())).collect();
                    let replace: Vec<(usize, &BcData)> =
                        slots.iter().copied().zip(owned.iter()).collect();
                    fd.solve_with(&replace, None)
                }
                Inner::Neural(n) => {
                    let inputs: Vec<Array2<f64>> = n
                        .branches
                        .iter()
                        .map(|recipe| {
                            let mut v = Vec::new();
                            for piece in recipe {
                                match piece {
                                    BranchPiece::Open(i) => v.extend_from_slice(&data[*i]),
                                    BranchPiece::Fixed(f) => v.extend_from_slice(f),
                                }
                            }
                            Array2::from_shape_vec((1, v.len()), v).unwrap()
                        })
                        .collect();
                    let views: Vec<ArrayView2<f64>> = inputs.iter().map(|a| a.view()).collect();
                    let pred = n.net.predict(&views, n.trunk.view())?;
                    Field::new(s.grid.clone(), pred.row(0).to_vec())
                }
            }
        };
        let field = run().map_err(|e| e.in_subdomain(&s.label))?;
        if !field.is_finite() {
            return Err(Error::SingularSystem("non-finite field".into()).in_subdomain(&s.label));
        }
        Ok(field)
    }
}
