mod common;

use std::sync::OnceLock;

use nalgebra::DVector;
use proptest::prelude::*;
use sls_core::lti::{locality_support, make_chain_system, simulate_closed_loop, FirResponse};
use sls_core::saturation::{cutoff, saturate, InputBox};
use sls_core::synthesis::{synthesize_centralized, SynthesisOptions};

const N: usize = 5;

fn fixture() -> &'static (common::Chain, FirResponse) {
    static F: OnceLock<(common::Chain, FirResponse)> = OnceLock::new();
    F.get_or_init(|| {
        let c = common::chain(N, 1.3);
        let r = synthesize_centralized(&c.sys, &c.spec, &c.support, &SynthesisOptions::default()).unwrap();
        assert!(r.is_optimal());
        (c, r.phi)
    })
}

fn disturbance(len: usize, bound: f64) -> impl Strategy<Value = Vec<DVector<f64>>> {
    prop::collection::vec(prop::collection::vec(-bound..=bound, N), 1..=len)
        .prop_map(|v| v.into_iter().map(DVector::from_vec).collect())
}

fn boxed_input() -> impl Strategy<Value = (DVector<f64>, InputBox)> {
    prop::collection::vec((-5.0..5.0f64, -3.0..0.0f64, 0.0..3.0f64), 1..6).prop_map(|v| {
        let u = DVector::from_iterator(v.len(), v.iter().map(|t| t.0));
        let lo = DVector::from_iterator(v.len(), v.iter().map(|t| t.1));
        let hi = DVector::from_iterator(v.len(), v.iter().map(|t| t.2));
        (u, InputBox::new(lo, hi).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_loop_obeys_the_plant(w in disturbance(30, 2.0)) {
        let (c, phi) = fixture();
        let traj = simulate_closed_loop(phi, &w);
        prop_assert!(traj.plant_residual(&c.sys) <= 1e-8);
    }

    #[test]
    fn robust_bounds_hold_for_admissible_disturbances(w in disturbance(5 * common::HORIZON, common::W_MAX)) {
        let (c, phi) = fixture();
        let traj = simulate_closed_loop(phi, &w);
        let h = c.spec.h_mat();
        for (x, u) in traj.x_seq.iter().zip(&traj.u_seq) {
            let xu = DVector::from_iterator(2 * N, x.iter().chain(u.iter()).copied());
            let v = h * xu - c.spec.h();
            prop_assert!(v.max() <= 1e-6);
        }
    }

    #[test]
    fn impulse_response_reads_back_the_taps(j in 0..N, scale in 0.1..3.0f64) {
        let (_, phi) = fixture();
        let mut w = vec![DVector::zeros(N); common::HORIZON + 3];
        w[0][j] = scale;
        let traj = simulate_closed_loop(phi, &w);
        for k in 1..=common::HORIZON {
            let col = phi.phi_x()[k - 1].column(j) * scale;
            prop_assert!((&traj.x_seq[k] - col).amax() <= 1e-12);
            let col = phi.phi_u()[k - 1].column(j) * scale;
            prop_assert!((&traj.u_seq[k] - col).amax() <= 1e-12);
        }
        for x in &traj.x_seq[common::HORIZON + 1..] {
            prop_assert!(x.amax() == 0.0);
        }
    }

    #[test]
    fn locality_mask_is_symmetric_and_nested(n in 2usize..12, d in 0usize..5, horizon in 1usize..4) {
        let sys = make_chain_system(n, 0.4, 1.0).unwrap();
        let s = locality_support(&sys, d, horizon);
        let wider = locality_support(&sys, d + 1, horizon);
        for k in 0..horizon {
            prop_assert_eq!(&s.x_support[k], &s.x_support[k].transpose());
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(s.x_support[k][(i, j)], i.abs_diff(j) <= d);
                    prop_assert!(!s.x_support[k][(i, j)] || wider.x_support[k][(i, j)]);
                }
            }
        }
    }

    #[test]
    fn saturation_splits_the_command((u, b) in boxed_input()) {
        let s = saturate(&u, &b);
        let co = cutoff(&u, &b);
        prop_assert!((&s + &co - &u).amax() <= 1e-15);
        prop_assert_eq!(saturate(&s, &b), s.clone());
        prop_assert!(b.contains(&s));
        prop_assert_eq!(co.iter().all(|&v| v == 0.0), b.contains(&u));
        for i in 0..u.len() {
            // the cutoff points away from the box
            prop_assert!(co[i] * (u[i] - s[i]) >= 0.0);
        }
    }
}
