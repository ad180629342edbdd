#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sls_core::lti::{locality_support, make_chain_system, LinearSystem, SupportMask};
use sls_core::qp::{ConvexProgram, ProgramBuilder};
use sls_core::synthesis::RobustSpec;

/// A strictly convex QP with box bounds and an optional equality row.
pub struct BoxQp {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// bounds `lo = 0` encoded through the nonnegative index set
    pub use_nonneg: Vec<bool>,
    pub eq: Option<(Vec<f64>, f64)>,
}

pub fn random_box_qp(seed: u64, n: usize, with_equality: bool) -> BoxQp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let c = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut use_nonneg = Vec::new();
    for _ in 0..n {
        if rng.gen_bool(0.3) {
            lo.push(0.0);
            use_nonneg.push(true);
        } else {
            lo.push(rng.gen_range(-2.0..0.0));
            use_nonneg.push(false);
        }
        hi.push(rng.gen_range(0.2..2.0));
    }
    let eq = if with_equality {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // a point strictly inside the box keeps the row satisfiable
        let mid: f64 = a.iter().zip(lo.iter().zip(&hi)).map(|(ai, (l, h))| ai * 0.5 * (l + h)).sum();
        Some((a, mid))
    } else {
        None
    };
    BoxQp {
        q,
        c,
        lo,
        hi,
        use_nonneg,
        eq,
    }
}

impl BoxQp {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn program(&self) -> ConvexProgram {
        let n = self.n();
        let mut b = ProgramBuilder::new(n);
        for i in 0..n {
            for j in i..n {
                b.add_quadratic(i, j, self.q[(i, j)]);
            }
            b.add_linear(i, self.c[i]);
            b.add_inequality(&[(i, 1.0)], self.hi[i]);
            if self.use_nonneg[i] {
                b.nonneg(i);
            } else {
                b.add_inequality(&[(i, -1.0)], -self.lo[i]);
            }
        }
        if let Some((a, rhs)) = &self.eq {
            let coeffs: Vec<_> = a.iter().copied().enumerate().collect();
            b.add_equality(&coeffs, *rhs);
        }
        b.build().unwrap()
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x)
    }
}

/// Enumerate every assignment of each variable to {free, lower, upper},
/// solve the resulting equality-constrained KKT system densely, and keep the
/// feasible candidate with the smallest objective.
pub fn solve_by_enumeration(p: &BoxQp) -> Option<Vec<f64>> {
    let n = p.n();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut state = vec![0u8; n];
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
        let mut x = DVector::zeros(n);
        for i in 0..n {
            match state[i] {
                1 => x[i] = p.lo[i],
                2 => x[i] = p.hi[i],
                _ => {}
            }
        }
        let ne = usize::from(p.eq.is_some());
        let nf = free.len();
        let dim = nf + ne;
        let mut k = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                k[(a, b)] = p.q[(i, j)];
            }
            let mut r = -p.c[i];
            for j in 0..n {
                if state[j] != 0 {
                    r -= p.q[(i, j)] * x[j];
                }
            }
            rhs[a] = r;
        }
        if let Some((arow, b)) = &p.eq {
            let mut r = *b;
            for j in 0..n {
                if state[j] != 0 {
                    r -= arow[j] * x[j];
                }
            }
            for (a, &i) in free.iter().enumerate() {
                k[(a, nf)] = arow[i];
                k[(nf, a)] = arow[i];
            }
            rhs[nf] = r;
        }
        if dim > 0 {
            let Some(sol) = k.lu().solve(&rhs) else { continue };
            for (a, &i) in free.iter().enumerate() {
                x[i] = sol[a];
            }
        }
        let feasible = (0..n).all(|i| x[i] >= p.lo[i] - 1e-10 && x[i] <= p.hi[i] + 1e-10)
            && p.eq.as_ref().is_none_or(|(a, b)| {
                (a.iter().zip(x.iter()).map(|(u, v)| u * v).sum::<f64>() - b).abs() < 1e-9
            });
        if !feasible {
            continue;
        }
        let f = p.objective(&x);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best.map(|(_, x)| x.iter().copied().collect())
}

pub const HORIZON: usize = 4;
pub const RADIUS: usize = 3;
pub const W_MAX: f64 = 1.0;
pub const U_MAX: f64 = 4.0;

/// Chain benchmark with box bounds.
pub struct Chain {
    pub sys: LinearSystem,
    pub spec: RobustSpec,
    pub support: SupportMask,
}

pub fn chain_with(n: usize, rho: f64, x_max: f64, u_max: f64) -> Chain {
    let sys = make_chain_system(n, 0.4, rho).unwrap();
    let spec = RobustSpec::from_box(&vec![W_MAX; n], &vec![x_max; n], &vec![u_max; n], HORIZON).unwrap();
    let support = locality_support(&sys, RADIUS, HORIZON);
    Chain { sys, spec, support }
}

/// Marginally stable chain (`ρ = 1`).
pub fn chain(n: usize, x_max: f64) -> Chain {
    chain_with(n, 1.0, x_max, U_MAX)
}

/// Strictly stable chain (`ρ = 0.9`).
pub fn stable_chain(n: usize, x_max: f64) -> Chain {
    chain_with(n, 0.9, x_max, U_MAX)
}

/// Uniform disturbances in `[-w_max, w_max]`.
pub fn random_w(seed: u64, n: usize, len: usize, w_max: f64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-w_max..=w_max))).collect()
}
