//! Axis-aligned boxes, composite domains built from them, partitions into
//! subdomains and the affine maps that normalize a subdomain to the unit box.
//!
//! Coordinates are stored in fixed `[f64; 3]` arrays; for two-dimensional
//! boxes the third component is unused and kept at zero.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Absolute tolerance for coincidence tests between coordinates.
pub const GEOM_TOL: f64 = 1e-10;

pub type Point = [f64; 3];

/// Side of an axis: the face at `lo[axis]` or the face at `hi[axis]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Lo,
    Hi,
}

impl Side {
    /// Sign of the outward normal on this side.
    pub fn sign(self) -> f64 {
        match self {
            Side::Lo => -1.0,
            Side::Hi => 1.0,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Lo => Side::Hi,
            Side::Hi => Side::Lo,
        }
    }
}

/// A face of a box, identified by its normal axis and side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Face {
    pub axis: usize,
    pub side: Side,
}

impl Face {
    pub const fn new(axis: usize, side: Side) -> Self {
        Face { axis, side }
    }

    pub const fn lo(axis: usize) -> Self {
        Face {
            axis,
            side: Side::Lo,
        }
    }

    pub const fn hi(axis: usize) -> Self {
        Face {
            axis,
            side: Side::Hi,
        }
    }

    /// All `2 * dim` faces in a fixed order: axis-major, `Lo` before `Hi`.
    pub fn all(dim: usize) -> Vec<Face> {
        (0..dim)
            .flat_map(|axis| [Face::lo(axis), Face::hi(axis)])
            .collect()
    }
}

/// Axis-aligned box in two or three dimensions with strictly positive extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    dim: usize,
    lo: Point,
    hi: Point,
}

impl AxisBox {
    pub fn new(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let dim = lo.len();
        if !(2..=3).contains(&dim) || hi.len() != dim {
            return Err(Error::InvalidBox(format!(
                "corners must both have length 2 or 3 (got {} and {})",
                lo.len(),
                hi.len()
            )));
        }
        let mut l = [0.0; 3];
        let mut h = [0.0; 3];
        for k in 0..dim {
            if !(lo[k].is_finite() && hi[k].is_finite()) || hi[k] <= lo[k] {
                return Err(Error::InvalidBox(format!(
                    "axis {k}: need lo < hi, got [{}, {}]",
                    lo[k], hi[k]
                )));
            }
            l[k] = lo[k];
            h[k] = hi[k];
        }
        Ok(AxisBox { dim, lo: l, hi: h })
    }

    /// Unit box `[0,1]^dim`.
    pub fn unit(dim: usize) -> Result<Self> {
        AxisBox::new(&vec![0.0; dim], &vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo[..self.dim]
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi[..self.dim]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn extents(&self) -> Vec<f64> {
        (0..self.dim).map(|k| self.extent(k)).collect()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|k| self.extent(k)).product()
    }

    /// Coordinate of the plane carrying `face`.
    pub fn face_coord(&self, face: Face) -> f64 {
        match face.side {
            Side::Lo => self.lo[face.axis],
            Side::Hi => self.hi[face.axis],
        }
    }

    /// Closed containment with absolute slack `tol`.
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        (0..self.dim).all(|k| p[k] >= self.lo[k] - tol && p[k] <= self.hi[k] + tol)
    }

    /// Strict interior containment.
    pub fn contains_interior(&self, p: &[f64]) -> bool {
        (0..self.dim).all(|k| p[k] > self.lo[k] && p[k] < self.hi[k])
    }

    pub fn contains_box(&self, other: &AxisBox, tol: f64) -> bool {
        self.dim == other.dim
            && (0..self.dim)
                .all(|k| other.lo[k] >= self.lo[k] - tol && other.hi[k] <= self.hi[k] + tol)
    }

    /// Positive-volume intersection, if any.
    pub fn intersection(&self, other: &AxisBox) -> Option<AxisBox> {
        if self.dim != other.dim {
            return None;
        }
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for k in 0..self.dim {
            lo[k] = self.lo[k].max(other.lo[k]);
            hi[k] = self.hi[k].min(other.hi[k]);
            if hi[k] - lo[k] <= GEOM_TOL {
                return None;
            }
        }
        Some(AxisBox {
            dim: self.dim,
            lo,
            hi,
        })
    }

    /// The whole of `face` as a patch.
    pub fn face_patch(&self, face: Face) -> Patch {
        let c = self.face_coord(face);
        let mut lo = self.lo;
        let mut hi = self.hi;
        lo[face.axis] = c;
        hi[face.axis] = c;
        Patch {
            dim: self.dim,
            face,
            lo,
            hi,
        }
    }

    /// Copy with `axis` restricted to `[lo, hi]`.
    pub fn with_axis(&self, axis: usize, lo: f64, hi: f64) -> Result<AxisBox> {
        let mut l = self.lo;
        let mut h = self.hi;
        l[axis] = lo;
        h[axis] = hi;
        AxisBox::new(&l[..self.dim], &h[..self.dim])
    }
}

/// A face patch: a box with zero extent along `face.axis`.
///
/// `face` records which side of its owning box the patch sits on, so the
/// outward normal of the owner is `face.side.sign()` along `face.axis`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    dim: usize,
    pub face: Face,
    lo: Point,
    hi: Point,
}

impl Patch {
    pub fn new(face: Face, coord: f64, lo: &[f64], hi: &[f64]) -> Result<Self> {
        let dim = lo.len();
        if !(2..=3).contains(&dim) || hi.len() != dim || face.axis >= dim {
            return Err(Error::Geometry("malformed patch corners".into()));
        }
        let mut l = [0.0; 3];
        let mut h = [0.0; 3];
        for k in 0..dim {
            if k == face.axis {
                l[k] = coord;
                h[k] = coord;
            } else {
                if hi[k] <= lo[k] {
                    return Err(Error::Geometry(format!(
                        "patch axis {k} has non-positive extent"
                    )));
                }
                l[k] = lo[k];
                h[k] = hi[k];
            }
        }
        Ok(Patch {
            dim,
            face,
            lo: l,
            hi: h,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normal_axis(&self) -> usize {
        self.face.axis
    }

    pub fn coord(&self) -> f64 {
        self.lo[self.face.axis]
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo[..self.dim]
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi[..self.dim]
    }

    pub fn tangential_axes(&self) -> Vec<usize> {
        (0..self.dim).filter(|&k| k != self.face.axis).collect()
    }

    pub fn area(&self) -> f64 {
        self.tangential_axes()
            .iter()
            .map(|&k| self.hi[k] - self.lo[k])
            .product()
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        (0..self.dim).all(|k| p[k] >= self.lo[k] - tol && p[k] <= self.hi[k] + tol)
    }

    /// True when the patch lies on `face` of `bx` (within its closure).
    pub fn lies_on(&self, bx: &AxisBox, face: Face) -> bool {
        self.face.axis == face.axis
            && (self.coord() - bx.face_coord(face)).abs() <= GEOM_TOL
            && self
                .tangential_axes()
                .iter()
                .all(|&k| self.lo[k] >= bx.lo[k] - GEOM_TOL && self.hi[k] <= bx.hi[k] + GEOM_TOL)
    }

    /// Same geometric patch seen from the other side.
    pub fn flipped(&self) -> Patch {
        Patch {
            face: Face::new(self.face.axis, self.face.side.opposite()),
            ..*self
        }
    }

    /// Patches tiling this patch minus `hole`, which must lie inside it.
    pub fn complement(&self, hole: &Patch) -> Result<Vec<Patch>> {
        let t = self.tangential_axes();
        if hole.face.axis != self.face.axis
            || (hole.coord() - self.coord()).abs() > GEOM_TOL
            || t.iter()
                .any(|&k| hole.lo[k] < self.lo[k] - GEOM_TOL || hole.hi[k] > self.hi[k] + GEOM_TOL)
        {
            return Err(Error::Geometry("hole does not lie inside the patch".into()));
        }
        let mut out = Vec::new();
        let mut push = |lo: Point, hi: Point| {
            if t.iter().all(|&k| hi[k] - lo[k] > GEOM_TOL) {
                out.push(Patch {
                    dim: self.dim,
                    face: self.face,
                    lo,
                    hi,
                });
            }
        };
        // slabs below and above the hole along the first tangential axis,
        // then the strips beside it along the second
        let a = t[0];
        let mut lo = self.lo;
        let mut hi = self.hi;
        hi[a] = hole.lo[a];
        push(lo, hi);
        lo = self.lo;
        hi = self.hi;
        lo[a] = hole.hi[a];
        push(lo, hi);
        if let Some(&b) = t.get(1) {
            let mut lo = self.lo;
            let mut hi = self.hi;
            lo[a] = hole.lo[a];
            hi[a] = hole.hi[a];
            hi[b] = hole.lo[b];
            push(lo, hi);
            let mut lo = self.lo;
            let mut hi = self.hi;
            lo[a] = hole.lo[a];
            hi[a] = hole.hi[a];
            lo[b] = hole.hi[b];
            push(lo, hi);
        }
        Ok(out)
    }

    pub fn same_region(&self, other: &Patch) -> bool {
        self.dim == other.dim
            && self.face.axis == other.face.axis
            && (0..self.dim).all(|k| {
                (self.lo[k] - other.lo[k]).abs() <= GEOM_TOL
                    && (self.hi[k] - other.hi[k]).abs() <= GEOM_TOL
            })
    }
}

/// Shared boundary between two subdomains.
///
/// `patch.face` is the face of `owner_a` carrying the interface, so
/// `orientation_from_a` is the sign of `owner_a`'s outward normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interface {
    pub owner_a: String,
    pub owner_b: String,
    pub patch: Patch,
}

impl Interface {
    pub fn normal_axis(&self) -> usize {
        self.patch.face.axis
    }

    pub fn orientation_from_a(&self) -> f64 {
        self.patch.face.side.sign()
    }
}

/// Union of labelled boxes with the full-face interfaces between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeGeometry {
    boxes: Vec<AxisBox>,
    labels: Vec<String>,
    interfaces: Vec<Interface>,
}

impl CompositeGeometry {
    /// Builds a face-matched composite. Boxes must be interior-disjoint,
    /// every contact must be a full shared face and the union connected.
    pub fn new(boxes: Vec<AxisBox>, labels: Vec<String>) -> Result<Self> {
        if boxes.is_empty() || boxes.len() != labels.len() {
            return Err(Error::Geometry("need one label per box".into()));
        }
        let dim = boxes[0].dim();
        if boxes.iter().any(|b| b.dim() != dim) {
            return Err(Error::Geometry("mixed dimensions".into()));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::Geometry(format!("duplicate label `{l}`")));
            }
        }
        let mut interfaces = Vec::new();
        let mut adjacency = vec![Vec::new(); boxes.len()];
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if boxes[i].intersection(&boxes[j]).is_some() {
                    return Err(Error::Geometry(format!(
                        "boxes `{}` and `{}` overlap",
                        labels[i], labels[j]
                    )));
                }
                if let Some(face) = shared_face(&boxes[i], &boxes[j])? {
                    interfaces.push(Interface {
                        owner_a: labels[i].clone(),
                        owner_b: labels[j].clone(),
                        patch: boxes[i].face_patch(face),
                    });
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        let mut visited = vec![false; boxes.len()];
        let mut stack = vec![0];
        visited[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &adjacency[i] {
                if !visited[j] {
                    visited[j] = true;
                    stack.push(j);
                }
            }
        }
        if visited.iter().any(|v| !v) {
            return Err(Error::Geometry("union of boxes is not connected".into()));
        }
        Ok(CompositeGeometry {
            boxes,
            labels,
            interfaces,
        })
    }

    pub fn boxes(&self) -> &[AxisBox] {
        &self.boxes
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn interfaces(&self) -> &[Interface] {
        &self.interfaces
    }

    pub fn dim(&self) -> usize {
        self.boxes[0].dim()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn volume(&self) -> f64 {
        self.boxes.iter().map(AxisBox::volume).sum()
    }

    /// True when `face` of box `index` touches no other box.
    pub fn is_exterior_face(&self, index: usize, face: Face) -> bool {
        !self.interfaces.iter().any(|itf| {
            let a = self.index_of(&itf.owner_a) == Some(index) && itf.patch.face == face;
            let b = self.index_of(&itf.owner_b) == Some(index)
                && itf.patch.face == Face::new(face.axis, face.side.opposite());
            a || b
        })
    }
}

/// Face of `a` shared with `b`, when the two boxes touch.
///
/// Contacts of positive (d-1)-measure must cover the full face of both
/// boxes; anything partial is rejected.
fn shared_face(a: &AxisBox, b: &AxisBox) -> Result<Option<Face>> {
    let dim = a.dim();
    for axis in 0..dim {
        for side in [Side::Lo, Side::Hi] {
            let face = Face::new(axis, side);
            if (a.face_coord(face) - b.face_coord(Face::new(axis, side.opposite()))).abs()
                > GEOM_TOL
            {
                continue;
            }
            let mut overlap_positive = true;
            let mut full = true;
            for k in (0..dim).filter(|&k| k != axis) {
                let lo = a.lo[k].max(b.lo[k]);
                let hi = a.hi[k].min(b.hi[k]);
                if hi - lo <= GEOM_TOL {
                    overlap_positive = false;
                }
                if (a.lo[k] - b.lo[k]).abs() > GEOM_TOL || (a.hi[k] - b.hi[k]).abs() > GEOM_TOL {
                    full = false;
                }
            }
            if !overlap_positive {
                continue;
            }
            if !full {
                return Err(Error::Geometry(format!(
                    "partial face contact on axis {axis}; interfaces must be full shared faces"
                )));
            }
            return Ok(Some(face));
        }
    }
    Ok(None)
}

/// Two overlapping subdomains and their fictitious boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapPartition {
    pub a: AxisBox,
    pub b: AxisBox,
    /// `[0]`: boundary of `a` at `cut_hi` (inside `b`);
    /// `[1]`: boundary of `b` at `cut_lo` (inside `a`).
    pub interfaces: [Interface; 2],
}

pub const SUBDOMAIN_A: &str = "sub1";
pub const SUBDOMAIN_B: &str = "sub2";

/// Splits `domain` along `axis` into `a = [lo, cut_hi]` and `b = [cut_lo, hi]`.
pub fn make_overlap_partition(
    domain: &AxisBox,
    axis: usize,
    cut_lo: f64,
    cut_hi: f64,
) -> Result<OverlapPartition> {
    check_axis(domain, axis)?;
    if cut_lo >= cut_hi {
        return Err(Error::Ordering(format!(
            "cut_lo ({cut_lo}) must be below cut_hi ({cut_hi})"
        )));
    }
    let (lo, hi) = (domain.lo[axis], domain.hi[axis]);
    if !(cut_lo > lo && cut_hi < hi) {
        return Err(Error::Range(format!(
            "cuts [{cut_lo}, {cut_hi}] must lie strictly inside ({lo}, {hi})"
        )));
    }
    let a = domain.with_axis(axis, lo, cut_hi)?;
    let b = domain.with_axis(axis, cut_lo, hi)?;
    let interfaces = [
        Interface {
            owner_a: SUBDOMAIN_A.into(),
            owner_b: SUBDOMAIN_B.into(),
            patch: a.face_patch(Face::hi(axis)),
        },
        Interface {
            owner_a: SUBDOMAIN_B.into(),
            owner_b: SUBDOMAIN_A.into(),
            patch: b.face_patch(Face::lo(axis)),
        },
    ];
    Ok(OverlapPartition { a, b, interfaces })
}

/// Tiling of `domain` by `cuts.len() + 1` boxes, labelled `sub1`, `sub2`, ...
pub fn make_nonoverlap_partition(
    domain: &AxisBox,
    axis: usize,
    cuts: &[f64],
) -> Result<CompositeGeometry> {
    check_axis(domain, axis)?;
    let (lo, hi) = (domain.lo[axis], domain.hi[axis]);
    for (i, &c) in cuts.iter().enumerate() {
        if !(c > lo && c < hi) {
            return Err(Error::Range(format!(
                "cut {c} must lie strictly inside ({lo}, {hi})"
            )));
        }
        if i > 0 && c <= cuts[i - 1] {
            return Err(Error::Ordering(format!(
                "cuts must be strictly ascending ({} then {c})",
                cuts[i - 1]
            )));
        }
    }
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(lo);
    edges.extend_from_slice(cuts);
    edges.push(hi);
    let boxes = edges
        .windows(2)
        .map(|w| domain.with_axis(axis, w[0], w[1]))
        .collect::<Result<Vec<_>>>()?;
    let labels = (1..=boxes.len()).map(|i| format!("sub{i}")).collect();
    CompositeGeometry::new(boxes, labels)
}

fn check_axis(domain: &AxisBox, axis: usize) -> Result<()> {
    if axis >= domain.dim() {
        return Err(Error::Range(format!(
            "axis {axis} out of range for a {}-d box",
            domain.dim()
        )));
    }
    Ok(())
}

/// Shape parameters shared by the L- and T-shaped interconnects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub h: f64,
    pub w1: f64,
    pub w2: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl ShapeParams {
    /// Sampling ranges per parameter, in the order `h, w1, w2, l1, l2, l3`.
    pub const RANGES: [(f64, f64); 6] = [
        (1.0, 3.0),
        (1.0, 3.0),
        (1.0, 3.0),
        (4.0, 6.0),
        (5.0, 8.0),
        (2.0, 5.0),
    ];
    const NAMES: [&'static str; 6] = ["h", "w1", "w2", "l1", "l2", "l3"];

    pub fn as_array(&self) -> [f64; 6] {
        [self.h, self.w1, self.w2, self.l1, self.l2, self.l3]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        ShapeParams {
            h: v[0],
            w1: v[1],
            w2: v[2],
            l1: v[3],
            l2: v[4],
            l3: v[5],
        }
    }

    /// Rejects non-positive values; warns when a value leaves its range.
    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.as_array().into_iter().enumerate() {
            if !(v > 0.0) {
                return Err(Error::NonPositive {
                    name: Self::NAMES[i],
                    value: v,
                });
            }
            let (lo, hi) = Self::RANGES[i];
            if v < lo || v > hi {
                log::warn!(
                    "shape parameter {} = {v} outside its sampling range [{lo}, {hi}]",
                    Self::NAMES[i]
                );
            }
        }
        Ok(())
    }
}

/// A port: a whole exterior face of one box of a composite geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub box_index: usize,
    pub face: Face,
}

/// L-shaped conductor split into three cuboids.
///
/// ```text
///        y
///        ^
///  w1+l2 +------+
///        | sub3 |                  (height h along z)
///        |      |
///     w1 +------+-----------------------+
///        | sub2 |         sub1          |
///      0 +------+-----------------------+--> x
///        0      w2                w2+l1+l3
/// ```
///
/// `sub1` is the arm along +x (length `l1 + l3`, width `w1`), `sub2` the
/// `w2 x w1 x h` corner, `sub3` the arm along +y (length `l2`, width `w2`).
/// Current enters at the far end of `sub1` and leaves at the far end of `sub3`.
pub fn decompose_l_shape(p: &ShapeParams) -> Result<CompositeGeometry> {
    p.validate()?;
    let arm_x = p.l1 + p.l3;
    let sub1 = AxisBox::new(&[p.w2, 0.0, 0.0], &[p.w2 + arm_x, p.w1, p.h])?;
    let sub2 = AxisBox::new(&[0.0, 0.0, 0.0], &[p.w2, p.w1, p.h])?;
    let sub3 = AxisBox::new(&[0.0, p.w1, 0.0], &[p.w2, p.w1 + p.l2, p.h])?;
    CompositeGeometry::new(
        vec![sub1, sub2, sub3],
        vec!["sub1".into(), "sub2".into(), "sub3".into()],
    )
}

/// Input and output ports of [`decompose_l_shape`].
pub fn l_shape_ports() -> (Port, Port) {
    (
        Port {
            box_index: 0,
            face: Face::hi(0),
        },
        Port {
            box_index: 2,
            face: Face::hi(1),
        },
    )
}

/// T-shaped conductor split into four cuboids.
///
/// ```text
///        y
///        ^
///  w1+l2        +------+
///               | sub4 |
///               |      |
///     w1 +------+------+-----------+
///        | sub1 | sub2 |   sub3    |
///      0 +------+------+-----------+--> x
///        0      l3   l3+w2     l3+w2+l1
/// ```
///
/// The bar is `sub1`, `sub2`, `sub3` (width `w1`), the stem is `sub2` plus
/// `sub4` (width `w2`, length `l2` above the bar). Current enters at the
/// end of `sub4` and leaves at the far end of `sub3`; the end of `sub1` is
/// insulated.
pub fn decompose_t_shape(p: &ShapeParams) -> Result<CompositeGeometry> {
    p.validate()?;
    let sub1 = AxisBox::new(&[0.0, 0.0, 0.0], &[p.l3, p.w1, p.h])?;
    let sub2 = AxisBox::new(&[p.l3, 0.0, 0.0], &[p.l3 + p.w2, p.w1, p.h])?;
    let sub3 = AxisBox::new(&[p.l3 + p.w2, 0.0, 0.0], &[p.l3 + p.w2 + p.l1, p.w1, p.h])?;
    let sub4 = AxisBox::new(&[p.l3, p.w1, 0.0], &[p.l3 + p.w2, p.w1 + p.l2, p.h])?;
    CompositeGeometry::new(
        vec![sub1, sub2, sub3, sub4],
        vec!["sub1".into(), "sub2".into(), "sub3".into(), "sub4".into()],
    )
}

/// Input and output ports of [`decompose_t_shape`].
pub fn t_shape_ports() -> (Port, Port) {
    (
        Port {
            box_index: 3,
            face: Face::hi(1),
        },
        Port {
            box_index: 2,
            face: Face::hi(0),
        },
    )
}

/// Per-axis affine map `x -> scale * (x + shift)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        AffineMap {
            scale: vec![1.0; dim],
            shift: vec![0.0; dim],
        }
    }

    pub fn translation(shift: &[f64]) -> Self {
        AffineMap {
            scale: vec![1.0; shift.len()],
            shift: shift.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn apply(&self, p: &[f64]) -> Point {
        let mut out = [0.0; 3];
        for k in 0..self.dim() {
            out[k] = self.scale[k] * (p[k] + self.shift[k]);
        }
        out
    }

    pub fn invert(&self, q: &[f64]) -> Point {
        let mut out = [0.0; 3];
        for k in 0..self.dim() {
            out[k] = q[k] / self.scale[k] - self.shift[k];
        }
        out
    }

    pub fn apply_box(&self, bx: &AxisBox) -> Result<AxisBox> {
        let a = self.apply(bx.lo());
        let b = self.apply(bx.hi());
        let d = bx.dim();
        AxisBox::new(&a[..d], &b[..d])
    }
}

/// Map sending `bx` onto the unit box, plus the per-axis coefficients
/// `1 / len_k^2` that carry the Laplacian over to the unit box.
pub fn stretching_map(bx: &AxisBox) -> (AffineMap, Vec<f64>) {
    let d = bx.dim();
    let scale: Vec<f64> = (0..d).map(|k| 1.0 / bx.extent(k)).collect();
    let shift: Vec<f64> = (0..d).map(|k| -bx.lo()[k]).collect();
    let coeffs = (0..d)
        .map(|k| 1.0 / (bx.extent(k) * bx.extent(k)))
        .collect();
    (AffineMap { scale, shift }, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit_y(len: f64) -> AxisBox {
        AxisBox::new(&[0.0, 0.0], &[1.0, len]).unwrap()
    }

    #[test]
    fn box_rejects_degenerate_extent() {
        assert!(AxisBox::new(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(AxisBox::new(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn complement_tiles_face_around_hole() {
        let bx = AxisBox::unit(3).unwrap();
        let top = bx.face_patch(Face::hi(2));
        let hole = Patch::new(Face::hi(2), 1.0, &[0.4, 0.4, 1.0], &[0.6, 0.6, 1.0]).unwrap();
        let parts = top.complement(&hole).unwrap();
        assert_eq!(parts.len(), 4);
        let area: f64 = parts.iter().map(Patch::area).sum();
        assert_abs_diff_eq!(area + hole.area(), 1.0, epsilon = 1e-14);
        let corner = Patch::new(Face::hi(2), 1.0, &[0.0, 0.0, 1.0], &[0.5, 1.0, 1.0]).unwrap();
        assert_eq!(top.complement(&corner).unwrap().len(), 1);
    }

    #[test]
    fn overlap_partition_matches_dd_layout() {
        let p = make_overlap_partition(&unit_y(2.0), 1, 0.75, 1.25).unwrap();
        assert_eq!(p.a.lo()[1], 0.0);
        assert_eq!(p.a.hi()[1], 1.25);
        assert_eq!(p.b.lo()[1], 0.75);
        assert_eq!(p.b.hi()[1], 2.0);
        assert_eq!(p.interfaces[0].patch.coord(), 1.25);
        assert_eq!(p.interfaces[0].orientation_from_a(), 1.0);
        assert_eq!(p.interfaces[1].patch.coord(), 0.75);
        assert_eq!(p.interfaces[1].orientation_from_a(), -1.0);
        assert!(p.interfaces[0].patch.lies_on(&p.a, Face::hi(1)));
        assert!(p.b.contains(&[0.5, 1.25], 0.0));
    }

    #[test]
    fn overlap_partition_thin_and_errors() {
        assert!(make_overlap_partition(&unit_y(2.0), 1, 0.999, 1.001).is_ok());
        assert!(matches!(
            make_overlap_partition(&unit_y(2.0), 1, 1.25, 0.75),
            Err(Error::Ordering(_))
        ));
        assert!(matches!(
            make_overlap_partition(&unit_y(2.0), 1, 0.0, 1.0),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn nonoverlap_partition_cases() {
        let g = make_nonoverlap_partition(&unit_y(2.0), 1, &[1.0]).unwrap();
        assert_eq!(g.boxes().len(), 2);
        assert_eq!(g.interfaces().len(), 1);
        assert_eq!(g.interfaces()[0].patch.coord(), 1.0);
        assert_abs_diff_eq!(g.boxes()[0].extent(1), 1.0);

        let g = make_nonoverlap_partition(&unit_y(2.0), 1, &[]).unwrap();
        assert_eq!(g.boxes().len(), 1);
        assert!(g.interfaces().is_empty());

        let g = make_nonoverlap_partition(&unit_y(3.0), 1, &[1.0, 2.0]).unwrap();
        assert_eq!(g.boxes().len(), 3);
        assert_eq!(g.interfaces().len(), 2);

        assert!(matches!(
            make_nonoverlap_partition(&unit_y(3.0), 1, &[2.0, 1.0]),
            Err(Error::Ordering(_))
        ));
        assert!(matches!(
            make_nonoverlap_partition(&unit_y(3.0), 1, &[3.0]),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn l_shape_volume_and_adjacency() {
        let p = ShapeParams::from_array([2.0, 2.0, 2.0, 5.0, 6.0, 3.0]);
        let g = decompose_l_shape(&p).unwrap();
        assert_eq!(g.boxes().len(), 3);
        assert_eq!(g.interfaces().len(), 2);
        // arm along x: 8*2*2, corner: 2*2*2, arm along y: 6*2*2
        assert_abs_diff_eq!(g.volume(), 32.0 + 8.0 + 24.0, epsilon = 1e-12);
        for itf in g.interfaces() {
            assert!(itf.owner_a == "sub2" || itf.owner_b == "sub2");
        }
        let (pin, pout) = l_shape_ports();
        assert!(g.is_exterior_face(pin.box_index, pin.face));
        assert!(g.is_exterior_face(pout.box_index, pout.face));
        assert!(!g.is_exterior_face(1, Face::hi(0)));
    }

    #[test]
    fn l_shape_edge_cases() {
        let p = ShapeParams::from_array([1.0, 1.0, 1.0, 4.0, 5.0, 2.0]);
        assert!(decompose_l_shape(&p).is_ok());
        let p = ShapeParams::from_array([2.0, 2.0, 2.0, 0.0, 6.0, 3.0]);
        assert!(matches!(
            decompose_l_shape(&p),
            Err(Error::NonPositive { name: "l1", .. })
        ));
    }

    #[test]
    fn t_shape_has_junction_with_three_neighbours() {
        let p = ShapeParams::from_array([2.0, 2.0, 2.0, 5.0, 6.0, 3.0]);
        let g = decompose_t_shape(&p).unwrap();
        assert_eq!(g.interfaces().len(), 3);
        let touching_junction = g
            .interfaces()
            .iter()
            .filter(|i| i.owner_a == "sub2" || i.owner_b == "sub2")
            .count();
        assert_eq!(touching_junction, 3);
    }

    #[test]
    fn partial_face_contact_is_rejected() {
        let a = AxisBox::new(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let b = AxisBox::new(&[1.0, 0.5], &[2.0, 1.5]).unwrap();
        assert!(CompositeGeometry::new(vec![a, b], vec!["a".into(), "b".into()]).is_err());
    }

    #[test]
    fn stretching_examples() {
        let (m, c) = stretching_map(&AxisBox::new(&[0.0, 0.0], &[2.0, 1.0]).unwrap());
        assert_eq!(m.scale, vec![0.5, 1.0]);
        assert_eq!(c, vec![0.25, 1.0]);

        let (m, c) = stretching_map(&AxisBox::unit(3).unwrap());
        assert_eq!(m, AffineMap::identity(3));
        assert_eq!(c, vec![1.0; 3]);

        let (m, c) = stretching_map(&AxisBox::new(&[1.0; 3], &[3.0; 3]).unwrap());
        assert_eq!(m.shift, vec![-1.0; 3]);
        assert_eq!(m.scale, vec![0.5; 3]);
        assert_eq!(c, vec![0.25; 3]);
        let unit = m
            .apply_box(&AxisBox::new(&[1.0; 3], &[3.0; 3]).unwrap())
            .unwrap();
        assert_eq!(unit, AxisBox::unit(3).unwrap());
    }

    fn arb_box3() -> impl Strategy<Value = AxisBox> {
        (
            prop::array::uniform3(-5.0f64..5.0),
            prop::array::uniform3(0.1f64..4.0),
        )
            .prop_map(|(lo, len)| {
                let hi = [lo[0] + len[0], lo[1] + len[1], lo[2] + len[2]];
                AxisBox::new(&lo, &hi).unwrap()
            })
    }

    proptest! {
        #[test]
        fn nonoverlap_volumes_sum_to_parent(bx in arb_box3(), fr in prop::collection::vec(0.01f64..0.99, 0..5)) {
            let mut fr = fr;
            fr.sort_by(|a, b| a.partial_cmp(b).unwrap());
            fr.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            let cuts: Vec<f64> = fr.iter().map(|f| bx.lo()[2] + f * bx.extent(2)).collect();
            let g = make_nonoverlap_partition(&bx, 2, &cuts).unwrap();
            let rel = (g.volume() - bx.volume()).abs() / bx.volume();
            prop_assert!(rel < 1e-12);
        }

        #[test]
        fn overlap_volumes_inclusion_exclusion(bx in arb_box3(), f1 in 0.05f64..0.5, f2 in 0.5f64..0.95) {
            let c1 = bx.lo()[0] + f1 * bx.extent(0);
            let c2 = bx.lo()[0] + f2 * bx.extent(0);
            prop_assume!(c2 - c1 > 1e-6);
            let p = make_overlap_partition(&bx, 0, c1, c2).unwrap();
            let inter = p.a.intersection(&p.b).unwrap();
            let total = p.a.volume() + p.b.volume() - inter.volume();
            prop_assert!((total - bx.volume()).abs() / bx.volume() < 1e-12);
        }

        #[test]
        fn stretching_round_trip(bx in arb_box3(), pts in prop::collection::vec(prop::array::uniform3(-10.0f64..10.0), 1000)) {
            let (m, _) = stretching_map(&bx);
            for p in &pts {
                let back = m.invert(&m.apply(p));
                for k in 0..3 {
                    prop_assert!((back[k] - p[k]).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn l_shape_boxes_are_interior_disjoint(v in prop::array::uniform6(0.0f64..1.0)) {
            let mut a = [0.0; 6];
            for i in 0..6 {
                let (lo, hi) = ShapeParams::RANGES[i];
                a[i] = lo + v[i] * (hi - lo);
            }
            let g = decompose_l_shape(&ShapeParams::from_array(a)).unwrap();
            for i in 0..3 {
                for j in i + 1..3 {
                    prop_assert!(g.boxes()[i].intersection(&g.boxes()[j]).is_none());
                }
            }
        }
    }
}
