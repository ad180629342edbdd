//! Cross-check the ADMM engine against exhaustive active-set enumeration.

mod common;

use common::{random_box_qp, solve_by_enumeration};
use sls_core::qp::{kkt_check, solve, ProgramBuilder, SolveStatus};

#[test]
fn agrees_with_active_set_enumeration() {
    for seed in 0..60 {
        let case = random_box_qp(seed, 1 + (seed as usize % 6), seed % 3 == 0);
        let prog = case.program();
        let res = solve(&prog, 1e-8, 200_000);
        assert_eq!(res.status, SolveStatus::Optimal, "seed {seed}: {:?}", res.kkt);
        assert!(res.kkt.max() <= 1e-8, "seed {seed}: {:?}", res.kkt);
        let oracle = solve_by_enumeration(&case).expect("oracle found no feasible point");
        let err = res.x.iter().zip(&oracle).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1e-6, "seed {seed}: |x - x_oracle| = {err}");
    }
}

#[test]
fn solves_are_deterministic() {
    let case = random_box_qp(7, 5, true);
    let a = solve(&case.program(), 1e-8, 200_000);
    let b = solve(&case.program(), 1e-8, 200_000);
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.x, b.x);
}

#[test]
fn argmin_is_invariant_to_cost_scaling() {
    for seed in 0..10 {
        let case = random_box_qp(100 + seed, 4, false);
        let prog = case.program();
        let mut scaled = prog.clone();
        scaled.scale_cost(37.5);
        let a = solve(&prog, 1e-8, 200_000);
        let b = solve(&scaled, 1e-8, 200_000);
        assert_eq!(a.status, SolveStatus::Optimal);
        assert_eq!(b.status, SolveStatus::Optimal);
        let err = a.x.iter().zip(&b.x).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        assert!(err <= 1e-8, "seed {seed}: {err}");
    }
}

#[test]
fn kkt_check_matches_reported_residuals() {
    let case = random_box_qp(3, 6, true);
    let prog = case.program();
    let res = solve(&prog, 1e-8, 200_000);
    let k = kkt_check(&prog, &res.x, &res.duals).unwrap();
    assert_eq!(k, res.kkt);
}

#[test]
fn warm_started_resolve_tracks_new_cost() {
    use sls_core::qp::{QpSolver, Settings};
    let mut b = ProgramBuilder::new(2);
    b.add_quadratic(0, 0, 2.0).add_quadratic(1, 1, 2.0);
    b.add_equality(&[(0, 1.0), (1, 1.0)], 1.0);
    b.nonneg(0).nonneg(1);
    let mut s = QpSolver::new(b.build().unwrap(), Settings::default()).unwrap();
    let r = s.solve();
    assert!((r.x[0] - 0.5).abs() < 1e-8);
    // shift the optimum onto the boundary x0 = 0
    s.set_linear_cost(vec![3.0, 0.0]).unwrap();
    let r = s.solve();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!(r.x[0].abs() < 1e-8 && (r.x[1] - 1.0).abs() < 1e-8, "{:?}", r.x);
}
