//! Two stacked material layers: `-eps_i lap u = 1` in each, `u = 1` on the
//! top of the upper block, `eps du/dn = 1 - u` on the bottom of the lower
//! block, insulated elsewhere. Continuity of `u` and of `eps du/dn` across
//! the contact patch is enforced by sharing the contact nodes.

use super::{Assembly, BcData, BcSpec, BlockSpec, BoundaryCondition, PdeProblem, Source};
use crate::error::{Error, Result};
use crate::geometry::{AxisBox, Face, Interface, Patch, GEOM_TOL};
use crate::grid::{Field, StructuredGrid};
use crate::linalg::LinearSolverOptions;
use serde::{Deserialize, Serialize};

pub const LOWER: &str = "lower";
pub const UPPER: &str = "upper";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialStack {
    pub lower: AxisBox,
    pub upper: AxisBox,
    pub eps_lower: f64,
    pub eps_upper: f64,
}

impl MaterialStack {
    /// Upper block of size `upper_size` placed on the lower block's top face
    /// with its low corner at `offset` (tangential coordinates).
    pub fn new(
        lower: AxisBox,
        eps_lower: f64,
        upper_size: &[f64],
        offset: &[f64],
        eps_upper: f64,
    ) -> Result<Self> {
        let d = lower.dim();
        let v = d - 1;
        if upper_size.len() != d || offset.len() != v {
            return Err(Error::Precondition(
                "upper size needs one entry per axis and offset one per tangential axis".into(),
            ));
        }
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for k in 0..v {
            lo[k] = offset[k];
            hi[k] = offset[k] + upper_size[k];
        }
        lo[v] = lower.hi()[v];
        hi[v] = lower.hi()[v] + upper_size[v];
        let upper = AxisBox::new(&lo[..d], &hi[..d])?;
        let stack = MaterialStack {
            lower,
            upper,
            eps_lower,
            eps_upper,
        };
        stack.validate()?;
        Ok(stack)
    }

    /// Cube of edge `upper_edge` centred on top of a cube of edge
    /// `lower_edge` sitting at the origin.
    pub fn centered_cubes(
        lower_edge: f64,
        upper_edge: f64,
        eps_lower: f64,
        eps_upper: f64,
    ) -> Result<Self> {
        let lower = AxisBox::new(&[0.0; 3], &[lower_edge; 3])?;
        let off = 0.5 * (lower_edge - upper_edge);
        MaterialStack::new(lower, eps_lower, &[upper_edge; 3], &[off, off], eps_upper)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps_lower", self.eps_lower), ("eps_upper", self.eps_upper)] {
            if !(v > 0.0) {
                return Err(Error::NonPositive { name, value: v });
            }
        }
        let d = self.lower.dim();
        let v = d - 1;
        if self.upper.dim() != d {
            return Err(Error::Precondition("blocks differ in dimension".into()));
        }
        if (self.upper.lo()[v] - self.lower.hi()[v]).abs() > GEOM_TOL {
            return Err(Error::Precondition(
                "upper block must sit on the lower block's top face".into(),
            ));
        }
        for k in 0..v {
            if self.upper.lo()[k] < self.lower.lo()[k] - GEOM_TOL
                || self.upper.hi()[k] > self.lower.hi()[k] + GEOM_TOL
            {
                return Err(Error::Precondition(format!(
                    "upper footprint leaves the lower top face along axis {k}"
                )));
            }
        }
        Ok(())
    }

    pub fn vertical_axis(&self) -> usize {
        self.lower.dim() - 1
    }

    /// Contact patch, oriented as the top face of the lower block.
    pub fn interface(&self) -> Interface {
        let v = self.vertical_axis();
        let mut patch = self.upper.face_patch(Face::lo(v));
        patch.face = Face::hi(v);
        Interface {
            owner_a: LOWER.into(),
            owner_b: UPPER.into(),
            patch,
        }
    }

    fn lower_top_rest(&self) -> Result<Vec<Patch>> {
        let v = self.vertical_axis();
        self.lower
            .face_patch(Face::hi(v))
            .complement(&self.interface().patch)
    }

    /// Stand-alone problems for the two blocks. The contact patch carries a
    /// homogeneous Neumann placeholder as the first condition of each
    /// problem, to be replaced by interface data.
    pub fn subdomain_problems(&self) -> Result<[PdeProblem; 2]> {
        let v = self.vertical_axis();
        let d = self.lower.dim();
        let itf = self.interface().patch;
        let zero = BcData::Constant(0.0);
        let mut lower_bcs = vec![BoundaryCondition::neumann(itf, zero.clone())];
        for p in self.lower_top_rest()? {
            lower_bcs.push(BoundaryCondition::neumann(p, zero.clone()));
        }
        let mut upper_bcs = vec![BoundaryCondition::neumann(itf.flipped(), zero.clone())];
        for face in Face::all(d) {
            if face == Face::lo(v) {
                lower_bcs.push(self.bottom_bc());
                upper_bcs.push(BoundaryCondition::dirichlet(
                    self.upper.face_patch(Face::hi(v)),
                    BcData::Constant(1.0),
                ));
            } else if face.axis != v {
                lower_bcs.push(BoundaryCondition::neumann(
                    self.lower.face_patch(face),
                    zero.clone(),
                ));
                upper_bcs.push(BoundaryCondition::neumann(
                    self.upper.face_patch(face),
                    zero.clone(),
                ));
            }
        }
        Ok([
            PdeProblem {
                bx: self.lower,
                diffusion: vec![self.eps_lower; d],
                source: Source::Constant(1.0),
                bcs: lower_bcs,
            },
            PdeProblem {
                bx: self.upper,
                diffusion: vec![self.eps_upper; d],
                source: Source::Constant(1.0),
                bcs: upper_bcs,
            },
        ])
    }

    fn bottom_bc(&self) -> BoundaryCondition {
        // eps du/dn = 1 - u  <=>  u + eps du/dn = 1
        BoundaryCondition::robin(
            self.lower.face_patch(Face::lo(self.vertical_axis())),
            1.0,
            self.eps_lower,
            BcData::Constant(1.0),
        )
    }
}

#[derive(Debug, Clone)]
pub struct MultimediumSolution {
    pub lower: Field,
    pub upper: Field,
    /// Max |u_lower - u_upper| over the contact nodes.
    pub continuity_residual: f64,
    /// Max discrete flux imbalance at contact nodes, relative to the total
    /// flux through the top.
    pub flux_jump_residual: f64,
    /// `integral eps du/dn` (outward) through the top Dirichlet face.
    pub top_flux: f64,
    /// `integral eps du/dn` (outward) through the bottom Robin face.
    pub bottom_flux: f64,
    pub source_integral: f64,
    /// |top + bottom + source| relative to the largest of the three.
    pub flux_balance: f64,
}

/// Monolithic solve of the stacked layers. Contact nodes of the two grids
/// must coincide one-to-one.
pub fn solve_multimedium(
    stack: &MaterialStack,
    n_lower: &[usize],
    n_upper: &[usize],
) -> Result<MultimediumSolution> {
    stack.validate()?;
    let gl = StructuredGrid::new(stack.lower, n_lower)?;
    let gu = StructuredGrid::new(stack.upper, n_upper)?;
    let itf = stack.interface().patch;
    let lower_nodes = gl.patch_nodes(&itf).map_err(|_| {
        Error::GridMismatch("contact patch holds no node plane of the lower grid".into())
    })?;
    let upper_nodes = gu.patch_nodes(&itf.flipped())?;
    if lower_nodes.len() != upper_nodes.len()
        || lower_nodes.iter().zip(&upper_nodes).any(|(&a, &b)| {
            let (p, q) = (gl.point(a), gu.point(b));
            (0..3).any(|k| (p[k] - q[k]).abs() > GEOM_TOL)
        })
    {
        return Err(Error::GridMismatch(format!(
            "{} lower and {} upper contact nodes do not coincide",
            lower_nodes.len(),
            upper_nodes.len()
        )));
    }

    let d = stack.lower.dim();
    let mut cl = [1.0; 3];
    let mut cu = [1.0; 3];
    cl[..d].fill(stack.eps_lower);
    cu[..d].fill(stack.eps_upper);
    let [pl, pu] = stack.subdomain_problems()?;
    // the contact patch is interior to the monolithic assembly; skip placeholders
    let mut specs = Vec::new();
    let mut data = Vec::new();
    for (block, p) in [(0, &pl), (1, &pu)] {
        for bc in &p.bcs[1..] {
            specs.push(BcSpec {
                block,
                patch: bc.patch,
                kind: bc.kind,
            });
            data.push(&bc.data);
        }
    }
    let asm = Assembly::new(
        &[
            BlockSpec {
                grid: &gl,
                coeff: cl,
            },
            BlockSpec {
                grid: &gu,
                coeff: cu,
            },
        ],
        &specs,
        LinearSolverOptions::default(),
    )?;
    let src = Source::Constant(1.0);
    let u = asm.solve_global(&data, &[&src, &src])?;
    let balance = asm.balance(&u, &data, &[&src, &src]);
    let top_flux: f64 = (0..asm.n_global())
        .filter(|&g| asm.is_dirichlet(g))
        .map(|g| balance[g])
        .sum();
    let bottom_flux = asm.natural_boundary_flux(&u, &data);
    let source_integral = stack.lower.volume() + stack.upper.volume();
    let scale = top_flux.abs().max(bottom_flux.abs()).max(source_integral);
    let flux_balance = (top_flux + bottom_flux + source_integral).abs() / scale;
    let flux_jump = lower_nodes
        .iter()
        .map(|&i| balance[asm.block_map(0)[i]].abs())
        .fold(0.0, f64::max)
        / top_flux.abs().max(f64::MIN_POSITIVE);

    let mut fields = asm.scatter(&u);
    let upper = Field::new(gu, fields.pop().unwrap())?;
    let lower = Field::new(gl, fields.pop().unwrap())?;
    let continuity_residual = lower_nodes
        .iter()
        .zip(&upper_nodes)
        .map(|(&a, &b)| (lower.values[a] - upper.values[b]).abs())
        .fold(0.0, f64::max);
    Ok(MultimediumSolution {
        lower,
        upper,
        continuity_residual,
        flux_jump_residual: flux_jump,
        top_flux,
        bottom_flux,
        source_integral,
        flux_balance,
    })
}
