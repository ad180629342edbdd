mod common;

use common::{chain, random_w, stable_chain, HORIZON};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sls_core::lti::{simulate_closed_loop, FirResponse};
use sls_core::saturation::{
    run_compensated, run_imc, run_naive_saturated, CompensatorBank, InputBox, SaturatedRun,
};
use sls_core::synthesis::{synthesize_centralized, SynthesisOptions};
use sls_core::verify::small_gain_margin;

fn nominal(c: &common::Chain) -> FirResponse {
    let r = synthesize_centralized(&c.sys, &c.spec, &c.support, &SynthesisOptions::default()).unwrap();
    assert!(r.is_optimal());
    r.phi
}

fn max_gap(a: &SaturatedRun, b: &SaturatedRun) -> f64 {
    let x = a.traj.max_deviation(&b.traj);
    let u = a
        .u_cmd
        .iter()
        .zip(&b.u_cmd)
        .map(|(p, q)| (p - q).amax())
        .fold(0.0, f64::max);
    x.max(u)
}

fn push(n: usize, node: usize, magnitude: f64, len: usize) -> Vec<DVector<f64>> {
    (0..len)
        .map(|_| {
            let mut w = DVector::zeros(n);
            w[node] = magnitude;
            w
        })
        .collect()
}

#[test]
fn imc_with_exact_model_is_the_convolution() {
    let c = chain(6, 1.6);
    let phi = nominal(&c);
    let steps = 10 * HORIZON;
    for seed in 0..20 {
        let w = random_w(seed, 6, steps, common::W_MAX);
        let run = run_imc(&c.sys, c.sys.a(), &phi, None, &w, steps).unwrap();
        let conv = simulate_closed_loop(&phi, &w);
        assert!(run.traj.max_deviation(&conv) <= 1e-8, "seed {seed}");
        assert!(run.traj.plant_residual(&c.sys) <= 1e-10);
        assert_eq!(run.saturation_count(), 0);
    }
}

#[test]
fn nominal_compensators_reproduce_the_naive_loop() {
    let c = chain(6, 1.6);
    let phi = nominal(&c);
    let bank = CompensatorBank::nominal(&phi);
    let steps = 10 * HORIZON;
    for (i, bound) in [0.2, 0.5, 1.0].into_iter().enumerate() {
        let bx = InputBox::symmetric(&[bound; 6]).unwrap();
        for seed in 0..20 {
            let w: Vec<_> = random_w(100 + seed, 6, steps, 2.0);
            let naive = run_naive_saturated(&c.sys, &phi, Some(&bx), &w, steps);
            let comp = run_compensated(&c.sys, &phi, &bank, Some(&bx), &w, steps).unwrap();
            assert!(max_gap(&naive, &comp) <= 1e-8, "bound {bound}, seed {seed}");
            if i == 0 {
                assert!(naive.saturation_count() > 0);
            }
        }
    }
}

#[test]
fn wide_box_is_the_unsaturated_loop() {
    let c = chain(5, 1.3);
    let phi = nominal(&c);
    let (bank, failed) = CompensatorBank::synthesize_all(&c.sys, &c.support, &SynthesisOptions::default()).unwrap();
    assert!(failed.is_empty());
    let bx = InputBox::symmetric(&[1e6; 5]).unwrap();
    let w = random_w(3, 5, 30, 1.0);
    let conv = simulate_closed_loop(&phi, &w);
    let naive = run_naive_saturated(&c.sys, &phi, Some(&bx), &w, 30);
    let comp = run_compensated(&c.sys, &phi, &bank, Some(&bx), &w, 30).unwrap();
    assert_eq!(naive.saturation_count(), 0);
    assert_eq!(comp.saturation_count(), 0);
    assert!(naive.traj.max_deviation(&conv) <= 1e-9);
    assert!(comp.traj.max_deviation(&conv) <= 1e-9);
}

#[test]
fn compensated_runs_respect_the_box_and_the_plant() {
    let c = chain(5, 1.3);
    let phi = nominal(&c);
    let (bank, failed) = CompensatorBank::synthesize_all(&c.sys, &c.support, &SynthesisOptions::default()).unwrap();
    assert!(failed.is_empty());
    for comp in bank.iter() {
        for tap in comp.phi_bar.phi_u() {
            assert!(tap.row(comp.saturated_node).iter().all(|&v| v == 0.0));
        }
    }
    let bx = InputBox::symmetric(&[0.4; 5]).unwrap();
    for node in 0..5 {
        let w = push(5, node, 2.5, 6);
        let run = run_compensated(&c.sys, &phi, &bank, Some(&bx), &w, 60).unwrap();
        assert!(run.saturation_count() > 0);
        assert!(run.traj.u_seq.iter().all(|u| u.amax() <= 0.4 + 1e-15));
        assert!(run.traj.plant_residual(&c.sys) <= 1e-10);
        assert!(run.traj.peak_state().is_finite());
    }
}

#[test]
fn mismatched_model_within_margin_stays_bounded() {
    let c = stable_chain(5, 1.6);
    let phi = nominal(&c);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a_hat = c.sys.a() + DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-0.05..0.05));
    let gain = small_gain_margin(&c.sys, &a_hat, &phi, 1024).unwrap();
    assert!(gain.margin + gain.truncation_bound < 1.0, "{gain:?}");
    let steps = 100 * HORIZON;
    let w = random_w(5, 5, steps, 1.0);
    let run = run_imc(&c.sys, &a_hat, &phi, None, &w, steps).unwrap();
    assert!(run.traj.peak_state() <= 1e3);
}

#[test]
fn large_push_under_saturation_stays_bounded_on_a_stable_chain() {
    let c = stable_chain(5, 1.6);
    let phi = nominal(&c);
    let bx = InputBox::symmetric(&[0.3; 5]).unwrap();
    let w = push(5, 2, 20.0, 1);
    let run = run_imc(&c.sys, c.sys.a(), &phi, Some(&bx), &w, 200).unwrap();
    assert!(run.saturation_count() > 0);
    assert!(run.traj.peak_state() <= 1e3 * 20.0);
    assert!(run.traj.x_seq.last().unwrap().amax() < 1e-3);
}

#[test]
fn compensation_shortens_the_tail_of_a_sustained_push() {
    let c = chain(10, 1.6);
    let phi = nominal(&c);
    let (bank, failed) = CompensatorBank::synthesize_all(&c.sys, &c.support, &SynthesisOptions::default()).unwrap();
    assert!(failed.is_empty());
    let bx = InputBox::symmetric(&[0.5; 10]).unwrap();
    let w = push(10, 0, 3.0, 10);
    let naive = run_naive_saturated(&c.sys, &phi, Some(&bx), &w, 80);
    let comp = run_compensated(&c.sys, &phi, &bank, Some(&bx), &w, 80).unwrap();
    let last = naive.last_saturation().max(comp.last_saturation()).expect("saturation");
    let (a, b) = (naive.energy_from(last + 1), comp.energy_from(last + 1));
    assert!(b <= a, "compensated {b} vs naive {a}");
}
