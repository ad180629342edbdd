mod common;

use std::sync::OnceLock;

use common::chain;
use sls_core::distributed::{run, DistributedOptions, DistributedRun, Payload};
use sls_core::lti::affine_residual;
use sls_core::synthesis::{synthesize_centralized, SynthesisOptions};
use sls_core::verify::check_robust_feasibility;

const X_MAX: f64 = 1.3;

fn binding_run() -> &'static DistributedRun {
    static RUN: OnceLock<DistributedRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let c = chain(5, X_MAX);
        run(&c.sys, &c.spec, &c.support, &DistributedOptions::default()).unwrap()
    })
}

#[test]
fn converged_iterate_is_nearly_feasible() {
    let c = chain(5, X_MAX);
    let out = binding_run();
    assert!(out.converged());
    let eps = DistributedOptions::default().epsilon;
    assert!(affine_residual(&c.sys, &out.result.phi).unwrap() <= 1e-6);
    let audit = check_robust_feasibility(&out.result.phi, &c.spec).unwrap();
    assert!(audit.min_slack() >= -eps, "slack {}", audit.min_slack());
    let last = out.trace.last().unwrap();
    assert!(last.max_violation <= eps && last.complementarity <= eps);
}

#[test]
fn agrees_with_centralized_synthesis() {
    let c = chain(5, X_MAX);
    let central = synthesize_centralized(&c.sys, &c.spec, &c.support, &SynthesisOptions::default()).unwrap();
    let out = binding_run();
    let rel = (out.result.cost - central.cost).abs() / central.cost;
    assert!(rel <= 1e-3, "{} vs {}", out.result.cost, central.cost);
    // the multipliers of the budget rows approach the centralized ones
    let gap = (&out.dual.sigma - &central.cert.sigma).amax();
    assert!(gap <= 0.1 * central.cert.sigma.amax().max(1.0), "σ gap {gap}");
}

#[test]
fn only_neighbors_exchange_messages() {
    let out = binding_run();
    assert!(out.messages_are_local());
    assert!(out.messages.iter().any(|m| matches!(m.payload, Payload::Budget(_))));
    assert!(out.messages.iter().any(|m| matches!(m.payload, Payload::Sigma(_))));
    for m in &out.messages {
        assert!(out.decomposition.are_neighbors(m.from, m.to));
    }
}

#[test]
fn message_order_does_not_change_the_result() {
    let c = chain(5, X_MAX);
    let opts = DistributedOptions {
        seed: 42,
        ..DistributedOptions::default()
    };
    let other = run(&c.sys, &c.spec, &c.support, &opts).unwrap();
    let out = binding_run();
    assert_eq!(other.trace.len(), out.trace.len());
    assert_eq!(other.result.phi, out.result.phi);
    assert_eq!(other.dual.sigma, out.dual.sigma);
}

#[test]
fn grouped_patches_reach_the_same_cost() {
    let c = chain(5, X_MAX);
    let opts = DistributedOptions {
        groups: Some(vec![vec![0, 1], vec![2], vec![3, 4]]),
        ..DistributedOptions::default()
    };
    let grouped = run(&c.sys, &c.spec, &c.support, &opts).unwrap();
    assert!(grouped.converged());
    assert_eq!(grouped.decomposition.num_patches(), 3);
    assert!(grouped.messages_are_local());
    let out = binding_run();
    let rel = (grouped.result.cost - out.result.cost).abs() / out.result.cost;
    assert!(rel <= 1e-3, "{} vs {}", grouped.result.cost, out.result.cost);
}

#[test]
fn trace_csv_has_one_row_per_round() {
    let out = binding_run();
    let mut buf = Vec::new();
    out.write_trace_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "round,primal_residual,max_violation,complementarity,alpha,wall_time_s");
    assert_eq!(lines.len(), out.trace.len() + 1);
}
