//! Vertex-centred second-order assembly over one or more node-matched blocks.
//!
//! Every block is a structured grid with its own per-axis diffusion
//! coefficients. Coincident nodes of different blocks become a single
//! unknown. Rows are scaled by the node's dual-cell volume, which makes the
//! operator symmetric; on a single uniform grid this is exactly the
//! central-difference scheme with ghost nodes eliminated through the
//! Neumann/Robin relation.

use super::{BcData, BcKind, Source};
use crate::error::{Error, Result};
use crate::geometry::{Face, Patch, Point, Side};
use crate::grid::StructuredGrid;
use crate::linalg::{CsrMatrix, LinearSolverOptions, SpdSolver};
use std::collections::HashMap;

pub(crate) struct BlockSpec<'a> {
    pub grid: &'a StructuredGrid,
    pub coeff: [f64; 3],
}

pub(crate) struct BcSpec {
    pub block: usize,
    pub patch: Patch,
    pub kind: BcKind,
}

#[derive(Debug, Clone, Copy)]
struct DataRef {
    bc: usize,
    idx: usize,
}

/// Assembled and factorized operator; right-hand sides are supplied per solve.
#[derive(Debug, Clone)]
pub(crate) struct Assembly {
    n_global: usize,
    block_maps: Vec<Vec<usize>>,
    dual_volumes: Vec<Vec<f64>>,
    full: CsrMatrix,
    dirichlet: Vec<Option<(DataRef, f64)>>,
    free_index: Vec<Option<usize>>,
    free_nodes: Vec<usize>,
    couplings: Vec<(usize, usize, f64)>,
    loads: Vec<(usize, f64, DataRef)>,
    solver: SpdSolver,
}

fn node_key(p: &Point) -> [i64; 3] {
    let q = |v: f64| (v * 1e9).round() as i64;
    [q(p[0]), q(p[1]), q(p[2])]
}

fn data_value(data: &BcData, idx: usize) -> f64 {
    match data {
        BcData::Constant(c) => *c,
        BcData::Nodal(v) => v[idx],
    }
}

impl Assembly {
    pub fn new(blocks: &[BlockSpec], bcs: &[BcSpec], opts: LinearSolverOptions) -> Result<Self> {
        let dim = blocks[0].grid.dim();
        // merge coincident nodes
        let mut keys: HashMap<[i64; 3], usize> = HashMap::new();
        let mut block_maps = Vec::with_capacity(blocks.len());
        for b in blocks {
            let map: Vec<usize> = (0..b.grid.len())
                .map(|i| {
                    let next = keys.len();
                    *keys.entry(node_key(&b.grid.point(i))).or_insert(next)
                })
                .collect();
            block_maps.push(map);
        }
        let n_global = keys.len();

        // patch node lookup per boundary condition
        let mut patch_index: Vec<HashMap<usize, usize>> = Vec::with_capacity(bcs.len());
        for (i, bc) in bcs.iter().enumerate() {
            if let BcKind::Robin { alpha, beta } = bc.kind {
                if alpha == 0.0 && beta == 0.0 {
                    return Err(Error::Precondition(format!(
                        "boundary condition {i}: Robin needs alpha or beta non-zero"
                    )));
                }
            }
            let nodes = blocks[bc.block].grid.patch_nodes(&bc.patch)?;
            patch_index.push(nodes.into_iter().enumerate().map(|(k, n)| (n, k)).collect());
        }

        let mut triplets = Vec::new();
        let mut dirichlet: Vec<Option<(DataRef, f64)>> = vec![None; n_global];
        let mut robin_diag: Vec<(usize, f64)> = Vec::new();
        let mut loads_global: Vec<(usize, f64, DataRef)> = Vec::new();
        let mut has_robin_mass = false;
        let mut dual_volumes = Vec::with_capacity(blocks.len());

        for (bi, b) in blocks.iter().enumerate() {
            let g = b.grid;
            let h: Vec<f64> = (0..dim).map(|k| g.spacing(k)).collect();
            let cell_vol: f64 = h.iter().product();
            let corners = 1usize << dim;
            let share = 1.0 / (1usize << (dim - 1)) as f64;
            let mut dual = vec![0.0; g.len()];
            let ncell: Vec<usize> = (0..3)
                .map(|k| if k < dim { g.count(k) - 1 } else { 1 })
                .collect();
            for ci in 0..ncell[0] {
                for cj in 0..ncell[1] {
                    for ck in 0..ncell[2] {
                        let c = [ci, cj, ck];
                        for corner in 0..corners {
                            let idx = offset(&c, corner, dim);
                            dual[g.flat(&idx)] += cell_vol / corners as f64;
                        }
                        // edges
                        for k in 0..dim {
                            let area: f64 = (0..dim).filter(|&j| j != k).map(|j| h[j]).product();
                            let w = b.coeff[k] * area * share / h[k];
                            for corner in 0..corners {
                                if corner >> k & 1 == 1 {
                                    continue;
                                }
                                let a = block_maps[bi][g.flat(&offset(&c, corner, dim))];
                                let e = block_maps[bi][g.flat(&offset(&c, corner | 1 << k, dim))];
                                triplets.push((a, a, w));
                                triplets.push((e, e, w));
                                triplets.push((a, e, -w));
                                triplets.push((e, a, -w));
                            }
                        }
                        // boundary faces of this cell
                        for k in 0..dim {
                            for side in [Side::Lo, Side::Hi] {
                                let on_face = match side {
                                    Side::Lo => c[k] == 0,
                                    Side::Hi => c[k] == ncell[k] - 1,
                                };
                                if !on_face {
                                    continue;
                                }
                                let face = Face::new(k, side);
                                let mut center = g.node(&c);
                                for j in 0..dim {
                                    center[j] += 0.5 * h[j];
                                }
                                center[k] = g.bx().face_coord(face);
                                let mut probe = center;
                                probe[k] += side.sign() * 1e-7 * h[k];
                                let interior = blocks
                                    .iter()
                                    .enumerate()
                                    .any(|(oj, o)| oj != bi && o.grid.bx().contains(&probe, 0.0));
                                if interior {
                                    continue;
                                }
                                let bci = bcs
                                    .iter()
                                    .position(|bc| {
                                        bc.block == bi
                                            && bc.patch.face == face
                                            && bc.patch.contains(&center, 1e-12)
                                    })
                                    .ok_or_else(|| {
                                        Error::Precondition(format!(
                                            "block {bi}: face (axis {k}, {side:?}) near {:?} has no boundary condition",
                                            &center[..dim]
                                        ))
                                    })?;
                                let area: f64 =
                                    (0..dim).filter(|&j| j != k).map(|j| h[j]).product::<f64>()
                                        * share;
                                for corner in 0..corners {
                                    let bit = match side {
                                        Side::Lo => 0,
                                        Side::Hi => 1,
                                    };
                                    if (corner >> k & 1) != bit {
                                        continue;
                                    }
                                    let local = g.flat(&offset(&c, corner, dim));
                                    let gn = block_maps[bi][local];
                                    let dref = DataRef {
                                        bc: bci,
                                        idx: patch_index[bci][&local],
                                    };
                                    match effective(bcs[bci].kind) {
                                        Eff::Dirichlet(alpha) => {
                                            if dirichlet[gn].is_none() {
                                                dirichlet[gn] = Some((dref, alpha));
                                            }
                                        }
                                        Eff::Robin(alpha, beta) => {
                                            let cn = b.coeff[k];
                                            if alpha != 0.0 {
                                                has_robin_mass = true;
                                                robin_diag.push((gn, cn * alpha / beta * area));
                                            }
                                            loads_global.push((gn, cn / beta * area, dref));
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            dual_volumes.push(dual);
        }
        for (gn, v) in robin_diag {
            triplets.push((gn, gn, v));
        }
        if dirichlet.iter().all(Option::is_none) && !has_robin_mass {
            return Err(Error::SingularSystem(
                "no Dirichlet or Robin boundary: pure Neumann problem".into(),
            ));
        }
        let full = CsrMatrix::from_triplets(n_global, triplets);

        let mut free_index = vec![None; n_global];
        let mut free_nodes = Vec::new();
        for gn in 0..n_global {
            if dirichlet[gn].is_none() {
                free_index[gn] = Some(free_nodes.len());
                free_nodes.push(gn);
            }
        }
        let mut reduced = Vec::new();
        let mut couplings = Vec::new();
        for (fi, &gn) in free_nodes.iter().enumerate() {
            for (j, v) in full.row(gn) {
                match free_index[j] {
                    Some(fj) => reduced.push((fi, fj, v)),
                    None => couplings.push((fi, j, v)),
                }
            }
        }
        let loads = loads_global
            .into_iter()
            .filter_map(|(gn, w, d)| free_index[gn].map(|fi| (fi, w, d)))
            .collect();
        let solver = SpdSolver::new(CsrMatrix::from_triplets(free_nodes.len(), reduced), opts)?;
        Ok(Assembly {
            n_global,
            block_maps,
            dual_volumes,
            full,
            dirichlet,
            free_index,
            free_nodes,
            couplings,
            loads,
            solver,
        })
    }

    /// Nodal load from the volume source of every block.
    fn source_load(&self, sources: &[&Source]) -> Vec<f64> {
        let mut load = vec![0.0; self.n_global];
        for (bi, src) in sources.iter().enumerate() {
            for (local, &gn) in self.block_maps[bi].iter().enumerate() {
                let p = match src {
                    Source::Constant(c) => *c,
                    Source::Nodal(v) => v[local],
                };
                load[gn] += p * self.dual_volumes[bi][local];
            }
        }
        load
    }

    /// Solves for the given boundary data (one entry per boundary condition,
    /// in assembly order) and per-block sources. Returns global nodal values.
    pub fn solve_global(&self, data: &[&BcData], sources: &[&Source]) -> Result<Vec<f64>> {
        let mut u = vec![0.0; self.n_global];
        for (gn, d) in self.dirichlet.iter().enumerate() {
            if let Some((r, alpha)) = d {
                u[gn] = data_value(data[r.bc], r.idx) / alpha;
            }
        }
        let src = self.source_load(sources);
        let mut rhs: Vec<f64> = self.free_nodes.iter().map(|&gn| src[gn]).collect();
        for &(fi, w, r) in &self.loads {
            rhs[fi] += w * data_value(data[r.bc], r.idx);
        }
        for &(fi, gj, v) in &self.couplings {
            rhs[fi] -= v * u[gj];
        }
        let x = self.solver.solve(&rhs)?;
        for (fi, &gn) in self.free_nodes.iter().enumerate() {
            u[gn] = x[fi];
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem("non-finite solution".into()));
        }
        Ok(u)
    }

    pub fn scatter(&self, u: &[f64]) -> Vec<Vec<f64>> {
        self.block_maps
            .iter()
            .map(|m| m.iter().map(|&gn| u[gn]).collect())
            .collect()
    }

    pub fn solve(&self, data: &[&BcData], sources: &[&Source]) -> Result<Vec<Vec<f64>>> {
        Ok(self.scatter(&self.solve_global(data, sources)?))
    }

    /// Per-node balance `K u - loads` over all nodes. On free nodes this is the
    /// algebraic residual; on Dirichlet nodes it is the discrete flux leaving
    /// the domain through that node.
    pub fn balance(&self, u: &[f64], data: &[&BcData], sources: &[&Source]) -> Vec<f64> {
        let mut r = vec![0.0; self.n_global];
        self.full.mul_vec(u, &mut r);
        let src = self.source_load(sources);
        for gn in 0..self.n_global {
            r[gn] -= src[gn];
        }
        for &(fi, w, d) in &self.loads {
            r[self.free_nodes[fi]] -= w * data_value(data[d.bc], d.idx);
        }
        r
    }

    /// Total `c du/dn` (outward normal) through Neumann/Robin faces at free nodes.
    pub fn natural_boundary_flux(&self, u: &[f64], data: &[&BcData]) -> f64 {
        let loads: f64 = self
            .loads
            .iter()
            .map(|&(_, w, d)| w * data_value(data[d.bc], d.idx))
            .sum();
        // edge couplings cancel in a row sum, leaving the Robin mass term
        let mass: f64 = self
            .free_nodes
            .iter()
            .map(|&gn| self.full.row(gn).map(|(_, v)| v).sum::<f64>() * u[gn])
            .sum();
        loads - mass
    }

    pub fn is_dirichlet(&self, gn: usize) -> bool {
        self.dirichlet[gn].is_some()
    }

    pub fn block_map(&self, block: usize) -> &[usize] {
        &self.block_maps[block]
    }

    pub fn n_global(&self) -> usize {
        self.n_global
    }

    #[allow(dead_code)]
    pub fn free_index(&self, gn: usize) -> Option<usize> {
        self.free_index[gn]
    }
}

enum Eff {
    Dirichlet(f64),
    Robin(f64, f64),
}

fn effective(kind: BcKind) -> Eff {
    match kind {
        BcKind::Dirichlet => Eff::Dirichlet(1.0),
        BcKind::Neumann => Eff::Robin(0.0, 1.0),
        BcKind::Robin { alpha, beta: 0.0 } => Eff::Dirichlet(alpha),
        BcKind::Robin { alpha, beta } => Eff::Robin(alpha, beta),
    }
}

fn offset(c: &[usize; 3], corner: usize, dim: usize) -> [usize; 3] {
    let mut idx = *c;
    for (k, i) in idx.iter_mut().enumerate().take(dim) {
        *i += corner >> k & 1;
    }
    idx
}
