use super::*;
use crate::geometry::{AxisBox, Face, Side};
use crate::metrics::ml2re;
use crate::neuralop::{Architecture, Fusion, OperatorNet};
use crate::oracle::{
    face_bcs, solve_elliptic, solve_multimedium, BcData, MaterialStack, PdeProblem,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;

const H: f64 = 0.05;

fn nodes(len: f64) -> usize {
    (len / H).round() as usize + 1
}

/// `-Lap u = 0` on `[0,2]x[0,1]`, `u = left(y)` at x = 0, `u = 2` at x = 2,
/// insulated top and bottom.
fn strip_problem(x0: f64, x1: f64, left: &dyn Fn(f64) -> f64) -> PdeProblem {
    let bx = AxisBox::new(&[x0, 0.0], &[x1, 1.0]).unwrap();
    let ny = nodes(1.0);
    let left_data: Vec<f64> = (0..ny).map(|j| left(j as f64 * H)).collect();
    let bcs = face_bcs(&bx, |f| match (f.axis, f.side) {
        (0, Side::Lo) if x0 == 0.0 => (BcKind::Dirichlet, BcData::Nodal(left_data.clone())),
        (0, Side::Hi) if x1 == 2.0 => (BcKind::Dirichlet, BcData::Constant(2.0)),
        _ => (BcKind::Neumann, BcData::Constant(0.0)),
    });
    PdeProblem::laplace(bx, bcs)
}

fn strip_solver(label: &str, x0: f64, x1: f64, left: &dyn Fn(f64) -> f64) -> SubdomainSolver {
    let p = strip_problem(x0, x1, left);
    let mut open = Vec::new();
    if x0 > 0.0 {
        open.push(OpenFace::new(p.bx.face_patch(Face::lo(0))));
    }
    if x1 < 2.0 {
        open.push(OpenFace::new(p.bx.face_patch(Face::hi(0))));
    }
    SubdomainSolver::classical(label, p, &[nodes(x1 - x0), nodes(1.0)], open).unwrap()
}

fn linear(_: f64) -> f64 {
    0.0
}

fn wavy(y: f64) -> f64 {
    (PI * y).cos() + 0.3 * (2.0 * PI * y).cos()
}

fn global_error(solvers: &[SubdomainSolver], res: &DdmResult, left: &dyn Fn(f64) -> f64) -> f64 {
    let truth = solve_elliptic(&strip_problem(0.0, 2.0, left), &[nodes(2.0), nodes(1.0)]).unwrap();
    let got = assemble(solvers, &res.fields, &truth.grid).unwrap();
    ml2re(&[got.values], &[truth.values]).unwrap()
}

fn pair(left: &dyn Fn(f64) -> f64, a: (f64, f64), b: (f64, f64)) -> Vec<SubdomainSolver> {
    vec![
        strip_solver("sub1", a.0, a.1, left),
        strip_solver("sub2", b.0, b.1, left),
    ]
}

fn tight(mut s: DdmSchedule) -> DdmSchedule {
    s.tolerance = 1e-13;
    s.max_iterations = 400;
    s
}

#[test]
fn schwarz_reproduces_the_monolithic_solution() {
    for left in [&linear as &dyn Fn(f64) -> f64, &wavy] {
        let s = pair(left, (0.0, 1.25), (0.75, 2.0));
        let res = run_schwarz(&s, &tight(DdmSchedule::schwarz())).unwrap();
        assert!(res.converged);
        assert!(global_error(&s, &res, left) < 1e-8);
    }
}

#[test]
fn schwarz_needs_overlap() {
    let s = pair(&linear, (0.0, 1.0), (1.0, 2.0));
    assert!(matches!(
        run_schwarz(&s, &DdmSchedule::schwarz()),
        Err(Error::NotOverlapping(_))
    ));
}

#[test]
fn framework1_dirichlet_dirichlet_with_overlap() {
    let s = pair(&wavy, (0.0, 1.25), (0.75, 2.0));
    let res = run_framework1(
        &s,
        &tight(DdmSchedule::framework1(Transmission::DIRICHLET_DIRICHLET)),
    )
    .unwrap();
    assert!(res.converged);
    assert!(global_error(&s, &res, &wavy) < 1e-8);
    let h = &res.residual_history;
    assert!(h.windows(2).skip(1).all(|w| w[1] < w[0]), "{h:?}");
}

#[test]
fn framework1_dirichlet_robin_without_overlap() {
    let s = pair(&linear, (0.0, 1.0), (1.0, 2.0));
    let sched = tight(DdmSchedule::framework1(Transmission::DIRICHLET_ROBIN));
    let res = run_framework1(&s, &sched).unwrap();
    assert!(res.converged);
    // the one-sided derivative is exact for linear fields
    assert!(global_error(&s, &res, &linear) < 1e-8);

    let s = pair(&wavy, (0.0, 1.0), (1.0, 2.0));
    let res = run_framework1(&s, &sched).unwrap();
    assert!(res.converged);
    assert!(global_error(&s, &res, &wavy) < 1e-3);
}

#[test]
fn framework1_theta_one_freezes_the_trace() {
    let s = pair(&wavy, (0.0, 1.0), (1.0, 2.0));
    let mut sched = DdmSchedule::framework1(Transmission::DIRICHLET_ROBIN);
    sched.theta = 1.0;
    sched.max_iterations = 5;
    sched.initial = InitialGuess::Constant(0.7);
    let res = run_framework1(&s, &sched).unwrap();
    // slot 0 is sub1's P trace
    assert!(res.traces[0]
        .iter()
        .all(|v| v.to_bits() == 0.7f64.to_bits()));
}

#[test]
fn framework2_reproduces_the_monolithic_solution() {
    let s = pair(&wavy, (0.0, 1.0), (1.0, 2.0));
    let res = run_framework2(&s, &tight(DdmSchedule::framework2())).unwrap();
    assert!(res.converged);
    assert!(global_error(&s, &res, &wavy) < 1e-8);
    assert!(res.records.last().unwrap().interface_mismatch < 1e-10);
}

#[test]
fn framework2_chain_of_three() {
    let s = vec![
        strip_solver("sub1", 0.0, 0.5, &wavy),
        strip_solver("sub2", 0.5, 1.4, &wavy),
        strip_solver("sub3", 1.4, 2.0, &wavy),
    ];
    let res = run_framework2(&s, &tight(DdmSchedule::framework2())).unwrap();
    assert!(res.converged);
    assert!(global_error(&s, &res, &wavy) < 1e-8);
}

#[test]
fn framework2_rejects_overlap() {
    let s = pair(&linear, (0.0, 1.25), (0.75, 2.0));
    assert!(matches!(
        run_framework2(&s, &DdmSchedule::framework2()),
        Err(Error::Overlap(_))
    ));
}

#[test]
fn framework2_theta_zero_freezes_traces() {
    let s = pair(&wavy, (0.0, 1.0), (1.0, 2.0));
    let mut sched = DdmSchedule::framework2();
    sched.theta = 0.0;
    sched.max_iterations = 4;
    sched.initial = InitialGuess::Constant(2.0);
    let res = run_framework2(&s, &sched).unwrap();
    assert!(res.traces.iter().flatten().all(|v| *v == 2.0));
}

#[test]
fn framework2_solve_order_does_not_matter() {
    let s = vec![
        strip_solver("sub1", 0.0, 0.5, &wavy),
        strip_solver("sub2", 0.5, 1.4, &wavy),
        strip_solver("sub3", 1.4, 2.0, &wavy),
    ];
    let mut sched = DdmSchedule::framework2();
    sched.max_iterations = 7;
    let a = run_framework2(&s, &sched).unwrap();
    sched.order = Some(vec![2, 0, 1]);
    let b = run_framework2(&s, &sched).unwrap();
    for (x, y) in a.fields.iter().zip(&b.fields) {
        assert!(x
            .values
            .iter()
            .zip(&y.values)
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    sched.order = Some(vec![0, 0, 1]);
    assert!(run_framework2(&s, &sched).is_err());
}

#[test]
fn framework2_exact_traces_are_a_fixed_point() {
    // u = x: outward derivative +1 on sub1's right face and -1 on sub2's left
    let s = pair(&linear, (0.0, 1.0), (1.0, 2.0));
    let n = nodes(1.0);
    let mut sched = DdmSchedule::framework2();
    sched.max_iterations = 1;
    sched.initial = InitialGuess::Traces(vec![vec![2.0; n], vec![0.0; n]]);
    let res = run_framework2(&s, &sched).unwrap();
    assert!(res.records[0].trace_change < 1e-10);
    assert!(res.residual_history[0] < 1e-10);
}

#[test]
fn zero_iterations_returns_initial_fields() {
    let s = pair(&wavy, (0.0, 1.0), (1.0, 2.0));
    let mut sched = DdmSchedule::framework2();
    sched.max_iterations = 0;
    let res = run_framework2(&s, &sched).unwrap();
    assert!(!res.converged);
    assert_eq!(res.iterations_used, 0);
    assert_eq!(res.fields.len(), 2);
}

#[test]
fn overrelaxed_exchange_is_reported_as_divergent() {
    let s = pair(&wavy, (0.0, 1.0), (1.0, 2.0));
    let mut sched = DdmSchedule::framework2();
    sched.theta = 3.0;
    sched.initial = InitialGuess::Constant(1.0);
    assert!(matches!(
        run_framework2(&s, &sched),
        Err(Error::IterationDivergence { .. })
    ));
}

#[test]
fn robin_derivative_needs_sender_nodes() {
    // sub2's grid is offset so sub1's fictitious boundary misses its nodes
    let p = strip_problem(0.76, 2.0, &linear);
    let open = vec![OpenFace::new(p.bx.face_patch(Face::lo(0)))];
    let b = SubdomainSolver::classical("sub2", p, &[26, 21], open).unwrap();
    let s = vec![strip_solver("sub1", 0.0, 1.25, &linear), b];
    let mut sched = DdmSchedule::framework1(Transmission {
        a: (1.0, 0.0),
        b: (1.0, 1.0),
    });
    sched.max_iterations = 3;
    assert!(matches!(
        run_framework1(&s, &sched),
        Err(Error::DerivativeUnavailable(_))
    ));
}

#[test]
fn open_face_must_match_a_condition() {
    let p = strip_problem(0.0, 1.0, &linear);
    let bad = OpenFace::new(p.bx.face_patch(Face::lo(1)).flipped());
    assert!(SubdomainSolver::classical("x", p, &[21, 21], vec![bad]).is_err());
}

#[test]
fn multimedium_framework2_matches_the_coupled_solve() {
    let stack = MaterialStack::centered_cubes(1.0, 0.2, 10.0, 0.1).unwrap();
    let (nl, nu) = ([21, 21, 21], [5, 5, 5]);
    let truth = solve_multimedium(&stack, &nl, &nu).unwrap();
    let [lo, up] = stack.subdomain_problems().unwrap();
    let open = |p: &PdeProblem, eps: f64| {
        vec![OpenFace {
            patch: p.bcs[0].patch,
            conductivity: eps,
        }]
    };
    let ol = open(&lo, stack.eps_lower);
    let ou = open(&up, stack.eps_upper);
    let s = vec![
        SubdomainSolver::classical("lower", lo, &nl, ol).unwrap(),
        SubdomainSolver::classical("upper", up, &nu, ou).unwrap(),
    ];
    let mut sched = DdmSchedule::framework2();
    sched.tolerance = 1e-12;
    sched.max_iterations = 2000;
    sched.initial = InitialGuess::Constant(2.0);
    let res = run_framework2(&s, &sched).unwrap();
    assert!(res.converged, "{:?}", res.residual_history.last());
    let e = ml2re(
        &[res.fields[0].values.clone(), res.fields[1].values.clone()],
        &[truth.lower.values.clone(), truth.upper.values.clone()],
    )
    .unwrap();
    assert!(e < 1e-6, "{e}");
}

fn tiny_net(branches: Vec<Vec<usize>>, trunk_in: usize) -> Arc<OperatorNet> {
    let arch = Architecture {
        branches,
        trunk: vec![trunk_in, 6, 4],
        fusion: Fusion::Product,
    };
    Arc::new(OperatorNet::new(&arch, &mut ChaCha8Rng::seed_from_u64(3)).unwrap())
}

#[test]
fn neural_solver_checks_sensor_widths() {
    let grid = StructuredGrid::new(AxisBox::unit(2).unwrap(), &[5, 5]).unwrap();
    let open = vec![OpenFace::new(grid.bx().face_patch(Face::hi(0)))];
    let ok = SubdomainSolver::neural(
        "n",
        grid.clone(),
        tiny_net(vec![vec![7, 4]], 2),
        vec![vec![
            BranchPiece::Open(0),
            BranchPiece::Fixed(vec![0.0, 1.0]),
        ]],
        open.clone(),
    );
    assert!(ok.is_ok());
    let bad = SubdomainSolver::neural(
        "n",
        grid,
        tiny_net(vec![vec![6, 4]], 2),
        vec![vec![
            BranchPiece::Open(0),
            BranchPiece::Fixed(vec![0.0, 1.0]),
        ]],
        open,
    );
    assert!(matches!(bad, Err(Error::Shape(_))));
}

#[test]
fn iteration_free_evaluates_each_net_once() {
    let g1 = StructuredGrid::new(AxisBox::new(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), &[4, 4]).unwrap();
    let g2 = StructuredGrid::new(AxisBox::new(&[1.0, 0.0], &[2.0, 1.0]).unwrap(), &[4, 4]).unwrap();
    let net = tiny_net(vec![vec![3, 4]], 2);
    let input = vec![0.5, -1.0, 2.0];
    let mk = |l: &str, g: &StructuredGrid| {
        SubdomainSolver::neural(
            l,
            g.clone(),
            net.clone(),
            vec![vec![BranchPiece::Fixed(input.clone())]],
            vec![],
        )
        .unwrap()
    };
    let s = vec![mk("sub1", &g1), mk("sub2", &g2)];
    let res = run_iteration_free(&s).unwrap();
    let expect = net.forward(&[&input], &g2.points()).unwrap();
    assert_eq!(res.fields[1].values, expect);
    let global =
        StructuredGrid::new(AxisBox::new(&[0.0, 0.0], &[2.0, 1.0]).unwrap(), &[7, 4]).unwrap();
    let f = assemble(&s, &res.fields, &global).unwrap();
    assert_eq!(f.values.len(), 28);
}
