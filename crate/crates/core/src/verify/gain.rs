use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{evaluate_taps, spectral_radius, FirResponse, LinearSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Frequency-gridded H∞ norm of a loop gain with error bounds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GainReport {
    /// largest singular value over the grid
    pub margin: f64,
    pub grid_points: usize,
    /// the true H∞ norm lies in `[margin, margin + truncation_bound]`
    pub truncation_bound: f64,
    /// `Σ_t ‖L[t]‖₂` over the impulse response (with a tail bound): an upper
    /// bound on the H∞ norm that needs no gridding
    pub impulse_bound: f64,
    /// ℓ∞-induced norm `Σ_t ‖L[t]‖_∞` (with a tail bound)
    pub l1_norm: f64,
    pub verdict: Verdict,
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn complex_spectral_norm(m: DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.svd(false, false).singular_values.max()
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Powers `A^0 … A^{K−1}` until `‖A^K‖₂ ≤ ½`, returning the powers and
/// `‖A^K‖₂`. Each tail `Σ_{s≥S} ‖A^s‖` is then bounded geometrically.
struct PowerSeries {
    powers: Vec<DMatrix<f64>>,
    contraction: f64,
}

impl PowerSeries {
    const MAX_TERMS: usize = 100_000;

    fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let mut powers = vec![DMatrix::identity(n, n)];
        loop {
            let next = a * powers.last().unwrap();
            let c = spectral_norm(&next);
            if c <= 0.5 {
                return Ok(Self { powers, contraction: c });
            }
            if powers.len() >= Self::MAX_TERMS {
                return Err(Error::Unstable(spectral_radius(a)));
            }
            powers.push(next);
        }
    }

    /// Upper bound on `Σ_{s ≥ from} ‖A^s‖₂`.
    fn tail(&self, from: usize) -> f64 {
        let k = self.powers.len();
        // A^{jK+r} = (A^K)^j A^r, so the sum is at most Σ_{r<K} ‖A^r‖ · Σ_{j ≥ ⌊from/K⌋} c^j
        let block: f64 = self.powers.iter().map(spectral_norm).sum();
        let j0 = (from / k) as i32;
        block * self.contraction.powi(j0) / (1.0 - self.contraction)
    }

    fn total(&self) -> f64 {
        self.tail(0)
    }
}

/// H∞ norm of `(A − Â)(zI − A)^{-1} B zΦu` on a uniform frequency grid.
///
/// The factor `B` maps the controller output back into state space so the
/// loop is square (`n × n`). Requires `A` to be Schur stable.
pub fn small_gain_margin(sys: &LinearSystem, a_hat: &DMatrix<f64>, phi: &FirResponse, grid: usize) -> Result<GainReport> {
    let n = sys.n();
    if a_hat.shape() != (n, n) {
        return Err(Error::Dimension(format!("model matrix is {:?}, expected ({n}, {n})", a_hat.shape())));
    }
    if phi.n() != n || phi.m() != sys.m() {
        return Err(Error::Dimension("response does not match the system".into()));
    }
    if grid == 0 {
        return Err(Error::Invalid("grid must have at least one point".into()));
    }
    let rho = sys.spectral_radius();
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    let a = sys.a();
    let b = sys.b();
    let mismatch = a - a_hat;
    let taps = phi.phi_u();
    let horizon = taps.len();

    let mut margin: f64 = 0.0;
    let eye = DMatrix::<Complex64>::identity(n, n);
    let ac = a.map(|v| Complex64::new(v, 0.0));
    let mc = mismatch.map(|v| Complex64::new(v, 0.0));
    let bc = b.map(|v| Complex64::new(v, 0.0));
    if mismatch.amax() > 0.0 {
        for s in 0..grid {
            let theta = 2.0 * PI * s as f64 / grid as f64;
            let z = Complex64::from_polar(1.0, theta);
            let f = &bc * evaluate_taps(taps, theta, 1);
            let resolved = (&eye * z - &ac)
                .lu()
                .solve(&f)
                .ok_or_else(|| Error::Unstable(rho))?;
            margin = margin.max(complex_spectral_norm(&mc * resolved));
        }
    }

    let series = PowerSeries::new(a)?;
    let r_norm = series.total();
    let (m_norm, b_norm) = (spectral_norm(&mismatch), spectral_norm(b));
    let f0: f64 = taps.iter().map(spectral_norm).sum();
    let f1: f64 = taps.iter().enumerate().map(|(k, t)| k as f64 * spectral_norm(t)).sum();
    // |d/dθ ‖L‖| ≤ ‖M‖‖B‖(‖R‖² f0 + ‖R‖ f1); the grid leaves gaps of π/grid
    let lipschitz = m_norm * b_norm * (r_norm * r_norm * f0 + r_norm * f1);
    let truncation_bound = lipschitz * PI / grid as f64;

    // impulse response L[t] = Σ_k M A^{t−k} B Φu[k] for t ≥ k
    let bphi: Vec<DMatrix<f64>> = taps.iter().map(|t| b * t).collect();
    let explicit = series.powers.len() + horizon;
    let mut impulse_bound = 0.0;
    let mut l1_norm = 0.0;
    if m_norm > 0.0 {
        for t in 1..=explicit {
            let mut lt = DMatrix::zeros(n, n);
            for (k, bp) in bphi.iter().enumerate() {
                // tap k+1 of zΦu is delayed by k; (zI−A)^{-1} contributes A^{s} z^{-(s+1)}
                if t > k {
                    let s = t - k - 1;
                    let pow = if s < series.powers.len() {
                        series.powers[s].clone()
                    } else {
                        a.pow(s as u32)
                    };
                    lt += &mismatch * pow * bp;
                }
            }
            impulse_bound += spectral_norm(&lt);
            l1_norm += inf_norm(&lt);
        }
        let from = explicit + 1 - horizon;
        let sqrt_n = (n as f64).sqrt();
        let tail_2 = m_norm * b_norm * f0 * series.tail(from);
        // ‖X‖_∞ ≤ √n ‖X‖₂
        let tail_inf = sqrt_n * tail_2;
        impulse_bound += tail_2;
        l1_norm += tail_inf;
    }

    Ok(GainReport {
        verdict: if margin < 1.0 { Verdict::Pass } else { Verdict::Fail },
        margin,
        grid_points: grid,
        truncation_bound,
        impulse_bound,
        l1_norm,
    })
}

/// H∞ norm of `zΦ̄u`; passes when it is at most one.
pub fn compensator_gain(phi_bar_u: &[DMatrix<f64>], grid: usize) -> Result<GainReport> {
    if grid == 0 {
        return Err(Error::Invalid("grid must have at least one point".into()));
    }
    let mut margin: f64 = 0.0;
    for s in 0..grid {
        let theta = 2.0 * PI * s as f64 / grid as f64;
        margin = margin.max(complex_spectral_norm(evaluate_taps(phi_bar_u, theta, 1)));
    }
    let lipschitz: f64 = phi_bar_u.iter().enumerate().map(|(k, t)| k as f64 * spectral_norm(t)).sum();
    Ok(GainReport {
        verdict: if margin <= 1.0 { Verdict::Pass } else { Verdict::Fail },
        margin,
        grid_points: grid,
        truncation_bound: lipschitz * PI / grid as f64,
        impulse_bound: phi_bar_u.iter().map(spectral_norm).sum(),
        l1_norm: phi_bar_u.iter().map(inf_norm).sum(),
    })
}
