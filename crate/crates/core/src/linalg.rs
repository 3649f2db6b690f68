//! Sparse symmetric positive-definite solves: envelope Cholesky under a
//! reverse Cuthill-McKee ordering for small systems, Jacobi-preconditioned
//! conjugate gradients above a cost threshold.

use crate::error::{Error, Result};
use std::collections::VecDeque;

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).find(|&(j, _)| j == i).map_or(0.0, |(_, v)| v))
            .collect()
    }
}

/// Reverse Cuthill-McKee permutation: `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut nbrs = Vec::new();
    while order.len() < n {
        // seed each component from a pseudo-peripheral node
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| degree[i])
            .unwrap();
        let start = pseudo_peripheral(a, seed, &visited);
        visited[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            nbrs.clear();
            nbrs.extend(a.row(i).map(|(j, _)| j).filter(|&j| !visited[j]));
            nbrs.sort_unstable_by_key(|&j| (degree[j], j));
            for &j in &nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(a: &CsrMatrix, seed: usize, blocked: &[bool]) -> usize {
    let mut start = seed;
    let mut best_depth = 0;
    for _ in 0..4 {
        let (far, depth) = bfs_farthest(a, start, blocked);
        if depth <= best_depth {
            break;
        }
        best_depth = depth;
        start = far;
    }
    start
}

fn bfs_farthest(a: &CsrMatrix, start: usize, blocked: &[bool]) -> (usize, usize) {
    let mut level = vec![usize::MAX; a.n()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut far = start;
    while let Some(i) = queue.pop_front() {
        if level[i] > level[far] {
            far = i;
        }
        for (j, _) in a.row(i) {
            if !blocked[j] && level[j] == usize::MAX {
                level[j] = level[i] + 1;
                queue.push_back(j);
            }
        }
    }
    (far, level[far])
}

/// Cholesky factor stored row-wise over each row's envelope.
#[derive(Debug, Clone)]
struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    fn envelope(a: &CsrMatrix, perm: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let n = a.n();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let first: Vec<usize> = (0..n)
            .map(|i| {
                a.row(perm[i])
                    .map(|(j, _)| inv[j])
                    .filter(|&j| j <= i)
                    .min()
                    .unwrap_or(i)
            })
            .collect();
        (inv, first)
    }

    fn cost(first: &[usize]) -> (f64, usize) {
        let mut flops = 0.0;
        let mut size = 0;
        for (i, &f) in first.iter().enumerate() {
            let w = (i - f) as f64;
            flops += w * w;
            size += i - f + 1;
        }
        (flops, size)
    }

    fn factor(a: &CsrMatrix, perm: Vec<usize>, inv: &[usize], first: Vec<usize>) -> Result<Self> {
        let n = a.n();
        let mut start = vec![0; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for i in 0..n {
            for (j, v) in a.row(perm[i]) {
                let jj = inv[j];
                if jj <= i {
                    data[start[i] + jj - first[i]] += v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let (before, rest) = data.split_at_mut(start[i]);
            let row_i = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let row_j = &before[start[j]..start[j] + (j - fj + 1)];
                let mut s = row_i[j - fi];
                let ri = &row_i[lo - fi..j - fi];
                let rj = &row_j[lo - fj..j - fj];
                s -= ri.iter().zip(rj).map(|(x, y)| x * y).sum::<f64>();
                row_i[j - fi] = s / row_j[j - fj];
            }
            let d = row_i[i - fi] - row_i[..i - fi].iter().map(|x| x * x).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::SingularSystem(format!(
                    "matrix not positive definite at pivot {i} ({d:e})"
                )));
            }
            row_i[i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            perm,
            first,
            start,
            data,
        })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let s: f64 = row[..i - fi]
                .iter()
                .zip(&y[fi..i])
                .map(|(l, v)| l * v)
                .sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let xi = y[i];
            for (j, l) in (fi..i).zip(row) {
                y[j] -= l * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Options for [`SpdSolver`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolverOptions {
    /// Relative residual target for the iterative path.
    pub tol: f64,
    /// Direct factorization is used when its flop estimate stays below this.
    pub direct_cost_limit: f64,
    /// Upper bound on factor storage, in entries.
    pub direct_size_limit: usize,
    pub max_iterations: usize,
}

impl Default for LinearSolverOptions {
    fn default() -> Self {
        LinearSolverOptions {
            tol: 1e-10,
            direct_cost_limit: 4e9,
            direct_size_limit: 40_000_000,
            max_iterations: 20_000,
        }
    }
}

/// Prepared solver for a fixed SPD matrix; reusable across right-hand sides.
#[derive(Debug, Clone)]
pub enum SpdSolver {
    Direct(Box<EnvelopeCholeskyHandle>),
    Iterative {
        matrix: CsrMatrix,
        inv_diag: Vec<f64>,
        opts: LinearSolverOptions,
    },
}

#[derive(Debug, Clone)]
pub struct EnvelopeCholeskyHandle(EnvelopeCholesky);

impl SpdSolver {
    pub fn new(matrix: CsrMatrix, opts: LinearSolverOptions) -> Result<Self> {
        if matrix.n() == 0 {
            return Ok(SpdSolver::Iterative {
                matrix,
                inv_diag: Vec::new(),
                opts,
            });
        }
        let perm = reverse_cuthill_mckee(&matrix);
        let (inv, first) = EnvelopeCholesky::envelope(&matrix, &perm);
        let (flops, size) = EnvelopeCholesky::cost(&first);
        if flops <= opts.direct_cost_limit && size <= opts.direct_size_limit {
            let f = EnvelopeCholesky::factor(&matrix, perm, &inv, first)?;
            return Ok(SpdSolver::Direct(Box::new(EnvelopeCholeskyHandle(f))));
        }
        let diag = matrix.diagonal();
        if diag.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::SingularSystem("non-positive diagonal entry".into()));
        }
        Ok(SpdSolver::Iterative {
            inv_diag: diag.iter().map(|d| 1.0 / d).collect(),
            matrix,
            opts,
        })
    }

    pub fn is_direct(&self) -> bool {
        matches!(self, SpdSolver::Direct(_))
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            SpdSolver::Direct(f) => Ok(f.0.solve(b)),
            SpdSolver::Iterative {
                matrix,
                inv_diag,
                opts,
            } => pcg(matrix, inv_diag, b, opts),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pcg(a: &CsrMatrix, inv_diag: &[f64], b: &[f64], opts: &LinearSolverOptions) -> Result<Vec<f64>> {
    let n = a.n();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 0..opts.max_iterations {
        a.mul_vec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = dot(&r, &r).sqrt();
        if rnorm <= opts.tol * bnorm {
            return Ok(x);
        }
        if !rnorm.is_finite() {
            return Err(Error::Convergence {
                iterations: it,
                residual: rnorm / bnorm,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let mut res = vec![0.0; n];
    a.mul_vec(&x, &mut res);
    let rn = res
        .iter()
        .zip(b)
        .map(|(ax, b)| (b - ax) * (b - ax))
        .sum::<f64>()
        .sqrt();
    Err(Error::Convergence {
        iterations: opts.max_iterations,
        residual: rn / bnorm,
    })
}
