//! Interface iterations coupling subdomain solvers.
//!
//! Every open face of a subdomain is a slot. Its sender is the other
//! subdomain whose box holds all of the slot's nodes: the neighbour across a
//! shared face, or the subdomain covering a fictitious boundary when the
//! boxes overlap. Traces are stored per slot, in the receiver's patch node
//! order.

mod solver;

pub use solver::{
    BranchPiece, NeuralSolver, OpenFace, PreparedSolver, SolverKind, SubdomainSolver,
};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::grid::{interpolate, one_sided_derivative, Field, StructuredGrid};
use crate::oracle::BcKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const POINT_TOL: f64 = 1e-9;
const DIVERGENCE_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Schwarz,
    Framework1,
    Framework2,
    IterationFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// Mean absolute change over all nodes of all subdomains.
    Mae,
    /// Sum over subdomains of the maximum absolute change.
    MaxNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialGuess {
    Constant(f64),
    /// One vector per slot, slots ordered by subdomain then open face.
    Traces(Vec<Vec<f64>>),
}

/// Coefficients of the two transmitted quantities in the sequential
/// framework: `Q = a.0 u + a.1 du/dn` goes to the later subdomain and
/// `P = b.0 u + b.1 du/dn` to the earlier one, with the derivative taken
/// along the receiver's outward normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transmission {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

impl Transmission {
    pub const DIRICHLET_DIRICHLET: Transmission = Transmission {
        a: (1.0, 0.0),
        b: (1.0, 0.0),
    };
    pub const DIRICHLET_ROBIN: Transmission = Transmission {
        a: (1.0, 1.0),
        b: (1.0, 0.0),
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdmSchedule {
    /// Schwarz: weight of the new iterate. Framework 1: weight of the old
    /// trace. Framework 2: weight of the new trace.
    pub theta: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub termination: Termination,
    pub initial: InitialGuess,
    pub transmission: Transmission,
    /// `lambda` in the Robin exchange `lambda u + k du/dn = g`.
    pub robin_weight: f64,
    /// Solve order within a framework-2 iteration; results do not depend on it.
    pub order: Option<Vec<usize>>,
}

impl Default for DdmSchedule {
    fn default() -> Self {
        DdmSchedule {
            theta: 0.5,
            max_iterations: 200,
            tolerance: 1e-9,
            termination: Termination::Mae,
            initial: InitialGuess::Constant(0.0),
            transmission: Transmission::DIRICHLET_DIRICHLET,
            robin_weight: 1.0,
            order: None,
        }
    }
}

impl DdmSchedule {
    pub fn schwarz() -> Self {
        DdmSchedule {
            theta: 1.0,
            ..Default::default()
        }
    }

    pub fn framework1(transmission: Transmission) -> Self {
        DdmSchedule {
            theta: 0.0,
            transmission,
            ..Default::default()
        }
    }

    pub fn framework2() -> Self {
        DdmSchedule::default()
    }

    fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() || !(self.tolerance >= 0.0) {
            return Err(Error::Precondition(
                "theta must be finite and tolerance non-negative".into(),
            ));
        }
        if !(self.robin_weight > 0.0) {
            return Err(Error::NonPositive {
                name: "robin_weight",
                value: self.robin_weight,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
    /// Change of the stored traces: mean absolute under `Mae`, largest
    /// absolute under `MaxNorm`.
    pub trace_change: f64,
    /// Largest mismatch between a receiver's value and its sender's value
    /// on any slot node.
    pub interface_mismatch: f64,
}

#[derive(Debug, Clone)]
pub struct DdmResult {
    pub labels: Vec<String>,
    pub fields: Vec<Field>,
    pub iterations_used: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub records: Vec<IterationRecord>,
    pub traces: Vec<Vec<f64>>,
}

struct Slot {
    sub: usize,
    open: usize,
    nodes: Vec<usize>,
    sender: usize,
    /// Slot nodes in the sender's local coordinates.
    sender_points: Vec<Point>,
    axis: usize,
    /// Receiver's outward direction along `axis`.
    dir: f64,
    /// Matching slot of the sender and, per node, the index of the
    /// coinciding node there.
    pair: Option<(usize, Vec<usize>)>,
}

struct Layout<'a> {
    solvers: &'a [SubdomainSolver],
    slots: Vec<Slot>,
}

fn close(a: &Point, b: &Point, d: usize) -> bool {
    (0..d).all(|k| (a[k] - b[k]).abs() <= POINT_TOL * (1.0 + a[k].abs()))
}

impl<'a> Layout<'a> {
    fn new(solvers: &'a [SubdomainSolver]) -> Result<Self> {
        if solvers.is_empty() {
            return Err(Error::Precondition("no subdomains".into()));
        }
        let d = solvers[0].grid.dim();
        if solvers.iter().any(|s| s.grid.dim() != d) {
            return Err(Error::Precondition("subdomains differ in dimension".into()));
        }
        let boxes = solvers
            .iter()
            .map(|s| s.physical_box())
            .collect::<Result<Vec<_>>>()?;
        let mut slots = Vec::new();
        let mut phys_of = Vec::new();
        for (i, s) in solvers.iter().enumerate() {
            for o in 0..s.open.len() {
                let (nodes, phys) = s.open_nodes(o)?;
                let sender = (0..solvers.len())
                    .find(|&j| {
                        j != i
                            && phys.iter().all(|p| {
                                boxes[j].contains(
                                    p,
                                    POINT_TOL
                                        * (1.0 + p[..d].iter().fold(0.0f64, |m, v| m.max(v.abs()))),
                                )
                            })
                    })
                    .ok_or_else(|| {
                        Error::Precondition(format!(
                            "open face {o} of `{}` is not covered by another subdomain",
                            s.label
                        ))
                    })?;
                let to_sender = &solvers[sender].to_local;
                let patch = s.open[o].patch;
                slots.push(Slot {
                    sub: i,
                    open: o,
                    nodes,
                    sender,
                    sender_points: phys.iter().map(|p| to_sender.apply(&p[..d])).collect(),
                    axis: patch.normal_axis(),
                    dir: patch.face.side.sign(),
                    pair: None,
                });
                phys_of.push(phys);
            }
        }
        for a in 0..slots.len() {
            let found = (0..slots.len()).find(|&b| {
                slots[b].sub == slots[a].sender
                    && slots[b].sender == slots[a].sub
                    && slots[b].axis == slots[a].axis
                    && slots[b].nodes.len() == slots[a].nodes.len()
                    && phys_of[a]
                        .iter()
                        .all(|p| phys_of[b].iter().any(|q| close(p, q, d)))
            });
            if let Some(b) = found {
                let perm = phys_of[a]
                    .iter()
                    .map(|p| phys_of[b].iter().position(|q| close(p, q, d)).unwrap())
                    .collect();
                slots[a].pair = Some((b, perm));
            }
        }
        Ok(Layout { solvers, slots })
    }

    fn slots_of(&self, sub: usize) -> impl Iterator<Item = usize> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter(move |(_, s)| s.sub == sub)
            .map(|(k, _)| k)
    }

    /// Local derivative scale of the receiver along the slot normal.
    fn scale(&self, s: usize) -> f64 {
        let slot = &self.slots[s];
        self.solvers[slot.sub].to_local.scale[slot.axis]
    }

    fn sender_values(&self, s: usize, fields: &[Field]) -> Result<Vec<f64>> {
        let slot = &self.slots[s];
        interpolate(&fields[slot.sender], &slot.sender_points)
    }

    /// Sender's physical derivative along the receiver's outward normal.
    fn sender_derivative(&self, s: usize, fields: &[Field]) -> Result<Vec<f64>> {
        let slot = &self.slots[s];
        let field = &fields[slot.sender];
        let grid = &field.grid;
        let unavailable = || {
            Error::DerivativeUnavailable(format!(
                "slot nodes of `{}` are not nodes of `{}`",
                self.solvers[slot.sub].label, self.solvers[slot.sender].label
            ))
        };
        let d = grid.dim();
        let mut nodes = Vec::with_capacity(slot.sender_points.len());
        for q in &slot.sender_points {
            let mut idx = [0usize; 3];
            for k in 0..d {
                idx[k] = grid.plane_index(k, q[k]).ok_or_else(unavailable)?;
            }
            nodes.push(grid.flat(&idx));
        }
        let plane = grid.multi(nodes[0])[slot.axis];
        let deriv = one_sided_derivative(field, slot.axis, plane, slot.dir, &nodes)
            .map_err(|e| e.in_subdomain(&self.solvers[slot.sender].label))?;
        let scale = self.solvers[slot.sender].to_local.scale[slot.axis];
        Ok(deriv.into_iter().map(|v| v * scale).collect())
    }

    /// `c.0 u + c.1 du/dn` from the sender.
    fn combination(&self, s: usize, fields: &[Field], c: (f64, f64)) -> Result<Vec<f64>> {
        let mut v = self.sender_values(s, fields)?;
        if c.0 != 1.0 {
            v.iter_mut().for_each(|x| *x *= c.0);
        }
        if c.1 != 0.0 {
            let t = self.sender_derivative(s, fields)?;
            v.iter_mut().zip(t).for_each(|(x, t)| *x += c.1 * t);
        }
        Ok(v)
    }

    fn initial_traces(&self, guess: &InitialGuess) -> Result<Vec<Vec<f64>>> {
        match guess {
            InitialGuess::Constant(c) => {
                Ok(self.slots.iter().map(|s| vec![*c; s.nodes.len()]).collect())
            }
            InitialGuess::Traces(t) => {
                if t.len() != self.slots.len()
                    || t.iter()
                        .zip(&self.slots)
                        .any(|(v, s)| v.len() != s.nodes.len())
                {
                    return Err(Error::Shape(format!(
                        "initial traces do not match the {} interface slots",
                        self.slots.len()
                    )));
                }
                Ok(t.clone())
            }
        }
    }

    fn prepare(&self, kind: impl Fn(usize) -> BcKind) -> Result<Vec<PreparedSolver<'a>>> {
        (0..self.solvers.len())
            .map(|i| {
                let kinds: Vec<BcKind> = self.slots_of(i).map(&kind).collect();
                self.solvers[i].prepare(&kinds)
            })
            .collect()
    }

    fn data_for(&self, sub: usize, traces: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut data = vec![Vec::new(); self.solvers[sub].open.len()];
        for k in self.slots_of(sub) {
            data[self.slots[k].open] = traces[k].clone();
        }
        data
    }

    fn mismatch(&self, fields: &[Field]) -> Result<f64> {
        let mut m = 0.0f64;
        for (k, s) in self.slots.iter().enumerate() {
            let theirs = self.sender_values(k, fields)?;
            for (&n, t) in s.nodes.iter().zip(theirs) {
                m = m.max((fields[s.sub].values[n] - t).abs());
            }
        }
        Ok(m)
    }
}

fn field_change(a: &[Field], b: &[Field], termination: Termination) -> f64 {
    match termination {
        Termination::Mae => {
            let (sum, n) = a.iter().zip(b).fold((0.0, 0usize), |(s, n), (x, y)| {
                let d: f64 = x
                    .values
                    .iter()
                    .zip(&y.values)
                    .map(|(p, q)| (p - q).abs())
                    .sum();
                (s + d, n + x.values.len())
            });
            sum / n as f64
        }
        Termination::MaxNorm => a.iter().zip(b).map(|(x, y)| x.max_abs_diff(y)).sum(),
    }
}

/// Trace change in the norm of the termination criterion.
fn trace_change(a: &[Vec<f64>], b: &[Vec<f64>], termination: Termination) -> f64 {
    let diffs = a
        .iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()));
    match termination {
        Termination::Mae => {
            let (sum, n) = diffs.fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        }
        Termination::MaxNorm => diffs.fold(0.0, f64::max),
    }
}

/// Residual bookkeeping shared by the iterative schemes.
struct Monitor {
    history: Vec<f64>,
    records: Vec<IterationRecord>,
    growing: usize,
}

impl Monitor {
    fn new() -> Self {
        Monitor {
            history: Vec::new(),
            records: Vec::new(),
            growing: 0,
        }
    }

    /// Records an iteration; returns true once both the fields and the
    /// stored traces are stationary to within `tolerance`.
    fn push(&mut self, record: IterationRecord, tolerance: f64) -> Result<bool> {
        let r = record.residual;
        let it = record.iteration;
        if !r.is_finite() {
            return Err(Error::IterationDivergence {
                iteration: it,
                detail: "non-finite residual".into(),
            });
        }
        if let Some(&last) = self.history.last() {
            self.growing = if r > last { self.growing + 1 } else { 0 };
        }
        self.history.push(r);
        self.records.push(record);
        log::debug!("ddm iteration {it}: residual {r:e}");
        if self.growing >= DIVERGENCE_WINDOW {
            return Err(Error::IterationDivergence {
                iteration: it,
                detail: format!(
                    "residual grew for {DIVERGENCE_WINDOW} consecutive iterations (now {r:e})"
                ),
            });
        }
        // a sweep that leaves the fields in place while traces still move
        // has not converged unless the fields held still on the sweep before
        let n = self.history.len();
        let held = n >= 2 && self.history[n - 2] < tolerance;
        let settled = self.records.last().unwrap().trace_change <= tolerance.max(1e-14);
        Ok(r < tolerance && (settled || held))
    }

    fn finish(
        self,
        layout: &Layout,
        fields: Vec<Field>,
        traces: Vec<Vec<f64>>,
        converged: bool,
    ) -> DdmResult {
        DdmResult {
            labels: layout.solvers.iter().map(|s| s.label.clone()).collect(),
            iterations_used: self.history.len(),
            residual_history: self.history,
            converged,
            records: self.records,
            fields,
            traces,
        }
    }
}

fn solve_all(
    prepared: &[PreparedSolver],
    layout: &Layout,
    traces: &[Vec<f64>],
    order: &[usize],
) -> Result<Vec<Field>> {
    let mut out: Vec<Option<Field>> = vec![None; prepared.len()];
    let solved: Vec<(usize, Result<Field>)> = order
        .par_iter()
        .map(|&i| (i, prepared[i].solve(&layout.data_for(i, traces))))
        .collect();
    for (i, f) in solved {
        out[i] = Some(f?);
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

fn identity_order(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Alternating Schwarz on two overlapping subdomains with Dirichlet data on
/// the fictitious boundaries and relaxation `(1 - theta) u_old + theta u_new`.
pub fn run_schwarz(solvers: &[SubdomainSolver], schedule: &DdmSchedule) -> Result<DdmResult> {
    schedule.validate()?;
    if solvers.len() != 2 {
        return Err(Error::Precondition(
            "alternating Schwarz takes exactly two subdomains".into(),
        ));
    }
    let (a, b) = (solvers[0].physical_box()?, solvers[1].physical_box()?);
    if overlap_volume(&a, &b) <= 0.0 {
        return Err(Error::NotOverlapping(format!(
            "`{}` and `{}` share no volume",
            solvers[0].label, solvers[1].label
        )));
    }
    let layout = Layout::new(solvers)?;
    let prepared = layout.prepare(|_| BcKind::Dirichlet)?;
    let mut traces = layout.initial_traces(&schedule.initial)?;
    let mut fields = solve_all(&prepared, &layout, &traces, &[0, 1])?;
    let mut monitor = Monitor::new();
    let mut converged = false;
    let theta = schedule.theta;
    for it in 1..=schedule.max_iterations {
        let before = fields.clone();
        let old_traces = traces.clone();
        for i in 0..2 {
            for k in layout.slots_of(i).collect::<Vec<_>>() {
                traces[k] = layout.sender_values(k, &fields)?;
            }
            let new = prepared[i].solve(&layout.data_for(i, &traces))?;
            fields[i] = if theta == 1.0 {
                new
            } else {
                let v = fields[i]
                    .values
                    .iter()
                    .zip(&new.values)
                    .map(|(o, n)| (1.0 - theta) * o + theta * n)
                    .collect();
                Field::new(new.grid, v)?
            };
        }
        let record = IterationRecord {
            iteration: it,
            residual: field_change(&fields, &before, schedule.termination),
            trace_change: trace_change(&traces, &old_traces, schedule.termination),
            interface_mismatch: layout.mismatch(&fields)?,
        };
        if monitor.push(record, schedule.tolerance)? {
            converged = true;
            break;
        }
    }
    Ok(monitor.finish(&layout, fields, traces, converged))
}

/// Sequential framework on a chain of subdomains taken in list order.
///
/// A subdomain receives `Q` (transmission `a`) from earlier neighbours,
/// computed from their fields of the current sweep, and `P` (transmission
/// `b`) from later ones. After each sweep the stored `P` becomes
/// `(1 - theta) P_new + theta P_old`.
pub fn run_framework1(solvers: &[SubdomainSolver], schedule: &DdmSchedule) -> Result<DdmResult> {
    schedule.validate()?;
    let layout = Layout::new(solvers)?;
    let tr = schedule.transmission;
    let is_p = |k: usize| layout.slots[k].sender > layout.slots[k].sub;
    let prepared = layout.prepare(|k| {
        let c = if is_p(k) { tr.b } else { tr.a };
        BcKind::from_coefficients(c.0, c.1 * layout.scale(k))
    })?;
    let n = solvers.len();
    let mut traces = layout.initial_traces(&schedule.initial)?;
    let mut fields = solve_all(&prepared, &layout, &traces, &identity_order(n))?;
    let mut monitor = Monitor::new();
    let mut converged = false;
    let theta = schedule.theta;
    for it in 1..=schedule.max_iterations {
        let before = fields.clone();
        let old_traces = traces.clone();
        for i in 0..n {
            for k in layout.slots_of(i).filter(|&k| !is_p(k)).collect::<Vec<_>>() {
                traces[k] = layout.combination(k, &fields, tr.a)?;
            }
            fields[i] = prepared[i].solve(&layout.data_for(i, &traces))?;
        }
        for k in (0..layout.slots.len()).filter(|&k| is_p(k)) {
            let fresh = layout.combination(k, &fields, tr.b)?;
            for (p, f) in traces[k].iter_mut().zip(fresh) {
                *p = (1.0 - theta) * f + theta * *p;
            }
        }
        let record = IterationRecord {
            iteration: it,
            residual: field_change(&fields, &before, schedule.termination),
            trace_change: trace_change(&traces, &old_traces, schedule.termination),
            interface_mismatch: layout.mismatch(&fields)?,
        };
        if monitor.push(record, schedule.tolerance)? {
            converged = true;
            break;
        }
    }
    Ok(monitor.finish(&layout, fields, traces, converged))
}

/// Concurrent Robin exchange on non-overlapping subdomains.
///
/// Slot `s` of subdomain `a` carries `g_s` in `lambda u + k_a du/dn = g_s`.
/// With `t` the matching slot on the neighbour `b`, every iteration sets
/// `g_s = (1 - theta) g_s + theta (2 lambda u_b - g_t)` from the previous
/// fields and then solves all subdomains from the new traces.
pub fn run_framework2(solvers: &[SubdomainSolver], schedule: &DdmSchedule) -> Result<DdmResult> {
    schedule.validate()?;
    let boxes = solvers
        .iter()
        .map(|s| s.physical_box())
        .collect::<Result<Vec<_>>>()?;
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            let v = overlap_volume(&boxes[i], &boxes[j]);
            if v > POINT_TOL * boxes[i].volume().min(boxes[j].volume()) {
                return Err(Error::Overlap(format!(
                    "`{}` and `{}` share volume {v:e}",
                    solvers[i].label, solvers[j].label
                )));
            }
        }
    }
    let layout = Layout::new(solvers)?;
    for s in &layout.slots {
        if s.pair.is_none() {
            return Err(Error::GridMismatch(format!(
                "open face {} of `{}` has no matching face with coincident nodes on `{}`",
                s.open, solvers[s.sub].label, solvers[s.sender].label
            )));
        }
    }
    let order = match &schedule.order {
        Some(o) => {
            let mut sorted = o.clone();
            sorted.sort_unstable();
            if sorted != identity_order(solvers.len()) {
                return Err(Error::Precondition(
                    "solve order must be a permutation of the subdomains".into(),
                ));
            }
            o.clone()
        }
        None => identity_order(solvers.len()),
    };
    let lambda = schedule.robin_weight;
    let prepared = layout.prepare(|k| {
        let s = &layout.slots[k];
        BcKind::from_coefficients(
            lambda,
            solvers[s.sub].open[s.open].conductivity * layout.scale(k),
        )
    })?;
    let mut traces = layout.initial_traces(&schedule.initial)?;
    let mut fields = solve_all(&prepared, &layout, &traces, &order)?;
    let mut monitor = Monitor::new();
    let mut converged = false;
    let theta = schedule.theta;
    for it in 1..=schedule.max_iterations {
        let before = fields.clone();
        let old = traces.clone();
        for (k, slot) in layout.slots.iter().enumerate() {
            let (t, perm) = slot.pair.as_ref().unwrap();
            let u = layout.sender_values(k, &fields)?;
            for (j, g) in traces[k].iter_mut().enumerate() {
                *g = (1.0 - theta) * old[k][j] + theta * (2.0 * lambda * u[j] - old[*t][perm[j]]);
            }
        }
        fields = solve_all(&prepared, &layout, &traces, &order)?;
        let record = IterationRecord {
            iteration: it,
            residual: field_change(&fields, &before, schedule.termination),
            trace_change: trace_change(&traces, &old, schedule.termination),
            interface_mismatch: layout.mismatch(&fields)?,
        };
        if monitor.push(record, schedule.tolerance)? {
            converged = true;
            break;
        }
    }
    Ok(monitor.finish(&layout, fields, traces, converged))
}

/// One solve per subdomain with no interface exchange. Solvers must have no
/// open faces; their inputs are fixed.
pub fn run_iteration_free(solvers: &[SubdomainSolver]) -> Result<DdmResult> {
    if let Some(s) = solvers.iter().find(|s| !s.open.is_empty()) {
        return Err(Error::Precondition(format!(
            "`{}` has open faces; iteration-free assembly needs fixed inputs only",
            s.label
        )));
    }
    let fields = solvers
        .par_iter()
        .map(|s| s.prepare(&[])?.solve(&[]))
        .collect::<Result<Vec<_>>>()?;
    Ok(DdmResult {
        labels: solvers.iter().map(|s| s.label.clone()).collect(),
        fields,
        iterations_used: 0,
        residual_history: Vec::new(),
        converged: true,
        records: Vec::new(),
        traces: Vec::new(),
    })
}

/// Dispatches on `scheme`.
pub fn run_ddm(
    scheme: Scheme,
    solvers: &[SubdomainSolver],
    schedule: &DdmSchedule,
) -> Result<DdmResult> {
    match scheme {
        Scheme::Schwarz => run_schwarz(solvers, schedule),
        Scheme::Framework1 => run_framework1(solvers, schedule),
        Scheme::Framework2 => run_framework2(solvers, schedule),
        Scheme::IterationFree => run_iteration_free(solvers),
    }
}

fn overlap_volume(a: &crate::geometry::AxisBox, b: &crate::geometry::AxisBox) -> f64 {
    (0..a.dim())
        .map(|k| (a.hi()[k].min(b.hi()[k]) - a.lo()[k].max(b.lo()[k])).max(0.0))
        .product()
}

/// Samples subdomain fields on `grid` (physical coordinates). Each node
/// takes the value of the first subdomain containing it.
pub fn assemble(
    solvers: &[SubdomainSolver],
    fields: &[Field],
    grid: &StructuredGrid,
) -> Result<Field> {
    if solvers.len() != fields.len() {
        return Err(Error::Shape(format!(
            "{} solvers, {} fields",
            solvers.len(),
            fields.len()
        )));
    }
    let boxes = solvers
        .iter()
        .map(|s| s.physical_box())
        .collect::<Result<Vec<_>>>()?;
    let d = grid.dim();
    let mut owner: Vec<Vec<(usize, Point)>> = vec![Vec::new(); solvers.len()];
    for n in 0..grid.len() {
        let p = grid.point(n);
        let tol = POINT_TOL * (1.0 + p[..d].iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let i = boxes
            .iter()
            .position(|b| b.contains(&p, tol))
            .ok_or(Error::OutOfDomain {
                index: n,
                point: p[..d].to_vec(),
            })?;
        owner[i].push((n, solvers[i].to_local.apply(&p[..d])));
    }
    let mut values = vec![0.0; grid.len()];
    for (i, list) in owner.iter().enumerate() {
        let pts: Vec<Point> = list.iter().map(|(_, q)| *q).collect();
        for ((n, _), v) in list.iter().zip(interpolate(&fields[i], &pts)?) {
            values[*n] = v;
        }
    }
    Field::new(grid.clone(), values)
}

#[cfg(test)]
mod tests;
