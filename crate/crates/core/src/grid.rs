//! Node-centred tensor-product grids, nodal fields, multilinear interpolation
//! and the one-sided second-order normal derivative.

use crate::error::{Error, Result};
use crate::geometry::{AxisBox, Face, Patch, Point, Side, GEOM_TOL};
use serde::{Deserialize, Serialize};

/// Slack allowed when a query point sits marginally outside a box.
pub const POINT_SLACK: f64 = 1e-12;

/// Equidistant node-centred grid on a box, boundary nodes included.
///
/// Flat indices are row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredGrid {
    bx: AxisBox,
    n: [usize; 3],
}

impl StructuredGrid {
    pub fn new(bx: AxisBox, n: &[usize]) -> Result<Self> {
        let d = bx.dim();
        if n.len() != d {
            return Err(Error::Shape(format!(
                "expected {d} node counts, got {}",
                n.len()
            )));
        }
        let mut counts = [1; 3];
        for k in 0..d {
            if n[k] < 3 {
                return Err(Error::Shape(format!(
                    "axis {k} needs at least 3 nodes, got {}",
                    n[k]
                )));
            }
            counts[k] = n[k];
        }
        Ok(StructuredGrid { bx, n: counts })
    }

    /// Grid whose spacing along each axis is as close as possible to `h`.
    pub fn with_spacing(bx: AxisBox, h: f64) -> Result<Self> {
        let n: Vec<usize> = (0..bx.dim())
            .map(|k| ((bx.extent(k) / h).round() as usize + 1).max(3))
            .collect();
        StructuredGrid::new(bx, &n)
    }

    pub fn bx(&self) -> &AxisBox {
        &self.bx
    }

    pub fn dim(&self) -> usize {
        self.bx.dim()
    }

    pub fn counts(&self) -> &[usize] {
        &self.n[..self.dim()]
    }

    pub fn count(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.bx.extent(axis) / (self.n[axis] - 1) as f64
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.n[axis + 1..].iter().product()
    }

    pub fn flat(&self, idx: &[usize; 3]) -> usize {
        (idx[0] * self.n[1] + idx[1]) * self.n[2] + idx[2]
    }

    pub fn multi(&self, flat: usize) -> [usize; 3] {
        let k2 = flat % self.n[2];
        let rest = flat / self.n[2];
        [rest / self.n[1], rest % self.n[1], k2]
    }

    /// Node coordinate `lo + i * h`, per axis.
    pub fn node(&self, idx: &[usize; 3]) -> Point {
        let mut p = [0.0; 3];
        for k in 0..self.dim() {
            p[k] = self.bx.lo()[k] + idx[k] as f64 * self.spacing(k);
        }
        p
    }

    pub fn point(&self, flat: usize) -> Point {
        self.node(&self.multi(flat))
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Index of the node plane at `coord` along `axis`, if one exists.
    pub fn plane_index(&self, axis: usize, coord: f64) -> Option<usize> {
        let h = self.spacing(axis);
        let t = (coord - self.bx.lo()[axis]) / h;
        let i = t.round();
        if i < 0.0 || i > (self.n[axis] - 1) as f64 {
            return None;
        }
        ((t - i).abs() * h <= GEOM_TOL).then_some(i as usize)
    }

    fn face_plane(&self, face: Face) -> usize {
        match face.side {
            Side::Lo => 0,
            Side::Hi => self.n[face.axis] - 1,
        }
    }

    /// Flat indices of the nodes on `face`, row-major over the tangential axes.
    pub fn face_nodes(&self, face: Face) -> Vec<usize> {
        self.plane_nodes(face.axis, self.face_plane(face), |_| true)
    }

    /// Flat indices of the face nodes within `patch`.
    pub fn patch_nodes(&self, patch: &Patch) -> Result<Vec<usize>> {
        let axis = patch.normal_axis();
        let plane = self.plane_index(axis, patch.coord()).ok_or_else(|| {
            Error::Geometry(format!(
                "patch plane {} on axis {axis} is not a node plane",
                patch.coord()
            ))
        })?;
        let nodes = self.plane_nodes(axis, plane, |p| patch.contains(p, GEOM_TOL));
        if nodes.is_empty() {
            return Err(Error::Geometry("patch contains no grid nodes".into()));
        }
        Ok(nodes)
    }

    /// Node counts of `patch` along its tangential axes.
    pub fn patch_shape(&self, patch: &Patch) -> Vec<usize> {
        patch
            .tangential_axes()
            .into_iter()
            .map(|k| {
                let h = self.spacing(k);
                let lo = ((patch.lo()[k] - self.bx.lo()[k]) / h - 1e-9).ceil() as i64;
                let hi = ((patch.hi()[k] - self.bx.lo()[k]) / h + 1e-9).floor() as i64;
                (hi - lo + 1).max(0) as usize
            })
            .collect()
    }

    fn plane_nodes(&self, axis: usize, plane: usize, keep: impl Fn(&Point) -> bool) -> Vec<usize> {
        let mut out = Vec::new();
        for i in 0..self.n[0] {
            for j in 0..self.n[1] {
                for k in 0..self.n[2] {
                    let idx = [i, j, k];
                    if idx[axis] != plane {
                        continue;
                    }
                    if keep(&self.node(&idx)) {
                        out.push(self.flat(&idx));
                    }
                }
            }
        }
        out
    }
}

/// Scalar nodal values on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub grid: StructuredGrid,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: StructuredGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: StructuredGrid) -> Self {
        let values = vec![0.0; grid.len()];
        Field { grid, values }
    }

    pub fn from_fn(grid: StructuredGrid, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Field { grid, values }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Exact nodal values on `patch`.
    pub fn trace(&self, patch: &Patch) -> Result<FaceTrace> {
        let nodes = self.grid.patch_nodes(patch)?;
        Ok(FaceTrace {
            patch: *patch,
            points: nodes.iter().map(|&i| self.grid.point(i)).collect(),
            values: nodes.iter().map(|&i| self.values[i]).collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Values sampled on the nodes of an interface or boundary patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceTrace {
    pub patch: Patch,
    pub points: Vec<Point>,
    pub values: Vec<f64>,
}

/// Multilinear interpolation of `field` at `points`; exact at nodes.
pub fn interpolate(field: &Field, points: &[Point]) -> Result<Vec<f64>> {
    let grid = &field.grid;
    let d = grid.dim();
    let lo = grid.bx().lo();
    let mut out = Vec::with_capacity(points.len());
    for (pi, p) in points.iter().enumerate() {
        if !grid.bx().contains(p, POINT_SLACK * (1.0 + max_abs(p, d))) {
            return Err(Error::OutOfDomain {
                index: pi,
                point: p[..d].to_vec(),
            });
        }
        let mut base = [0usize; 3];
        let mut w = [0.0f64; 3];
        for k in 0..d {
            let n = grid.count(k);
            let t = ((p[k] - lo[k]) / grid.spacing(k)).clamp(0.0, (n - 1) as f64);
            let i = (t.floor() as usize).min(n - 2);
            base[k] = i;
            w[k] = t - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut idx = base;
            let mut weight = 1.0;
            for k in 0..d {
                if corner >> k & 1 == 1 {
                    idx[k] += 1;
                    weight *= w[k];
                } else {
                    weight *= 1.0 - w[k];
                }
            }
            if weight != 0.0 {
                acc += weight * field.values[grid.flat(&idx)];
            }
        }
        out.push(acc);
    }
    Ok(out)
}

fn max_abs(p: &Point, d: usize) -> f64 {
    p[..d].iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Derivative along `dir * e_axis` on the node plane `plane`, using the
/// one-sided stencil `(3u(x) - 4u(x - h) + u(x - 2h)) / (2h)` where
/// `x - h` steps against `dir`. When the grid ends on that side the mirrored
/// stencil is used and negated.
pub fn one_sided_derivative(
    field: &Field,
    axis: usize,
    plane: usize,
    dir: f64,
    nodes: &[usize],
) -> Result<Vec<f64>> {
    let grid = &field.grid;
    let n = grid.count(axis);
    if n < 3 {
        return Err(Error::DerivativeUnavailable(format!(
            "axis {axis} has {n} nodes, the stencil needs 3"
        )));
    }
    let h = grid.spacing(axis);
    let stride = grid.stride(axis) as isize;
    // step towards the stencil's interior nodes
    let back: isize = if dir > 0.0 { -1 } else { 1 };
    let (step, sign) = if in_range(plane, 2 * back, n) {
        (back, 1.0)
    } else if in_range(plane, -2 * back, n) {
        (-back, -1.0)
    } else {
        return Err(Error::DerivativeUnavailable(format!(
            "plane {plane} on axis {axis} has no two neighbouring nodes on either side"
        )));
    };
    let s = step * stride;
    Ok(nodes
        .iter()
        .map(|&i| {
            let i0 = i as isize;
            let u0 = field.values[i];
            let u1 = field.values[(i0 + s) as usize];
            let u2 = field.values[(i0 + 2 * s) as usize];
            sign * (3.0 * u0 - 4.0 * u1 + u2) / (2.0 * h)
        })
        .collect())
}

fn in_range(plane: usize, offset: isize, n: usize) -> bool {
    let j = plane as isize + offset;
    j >= 0 && (j as usize) < n
}

/// Outward normal derivative of `field` on the nodes of `patch`, which must
/// lie on face `patch.face` of the field's box.
pub fn normal_derivative(field: &Field, patch: &Patch) -> Result<FaceTrace> {
    let grid = &field.grid;
    if !patch.lies_on(grid.bx(), patch.face) {
        return Err(Error::Geometry(
            "patch does not lie on the indicated face of the field's box".into(),
        ));
    }
    let axis = patch.normal_axis();
    let nodes = grid.patch_nodes(patch)?;
    let plane = grid.face_plane(patch.face);
    let values = one_sided_derivative(field, axis, plane, patch.face.side.sign(), &nodes)?;
    Ok(FaceTrace {
        patch: *patch,
        points: nodes.iter().map(|&i| grid.point(i)).collect(),
        values,
    })
}

/// Resamples `field` onto a new grid on `subbox` by interpolation.
pub fn restrict(field: &Field, subbox: &AxisBox, subgrid_n: &[usize]) -> Result<Field> {
    let grid = StructuredGrid::new(*subbox, subgrid_n)?;
    let values = interpolate(field, &grid.points())?;
    Field::new(grid, values)
}
