use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::system::LinearSystem;
use crate::error::{Error, Result};
use crate::json::{from_rows, to_rows};

/// Finite impulse response closed-loop maps `Φx = Σ Φx[k] z^{-k}`,
/// `Φu = Σ Φu[k] z^{-k}` for `k = 1..=T`.
///
/// Index `k - 1` of `phi_x()` / `phi_u()` holds the spectral element `Φ[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FirJson", into = "FirJson")]
pub struct FirResponse {
    phi_x: Vec<DMatrix<f64>>,
    phi_u: Vec<DMatrix<f64>>,
}

impl FirResponse {
    pub fn new(phi_x: Vec<DMatrix<f64>>, phi_u: Vec<DMatrix<f64>>) -> Result<Self> {
        if phi_x.is_empty() {
            return Err(Error::Invalid("horizon must be at least 1".into()));
        }
        if phi_u.len() != phi_x.len() {
            return Err(Error::Dimension(format!(
                "{} state taps but {} input taps",
                phi_x.len(),
                phi_u.len()
            )));
        }
        let n = phi_x[0].nrows();
        let m = phi_u[0].nrows();
        for (k, (px, pu)) in phi_x.iter().zip(&phi_u).enumerate() {
            if px.shape() != (n, n) || pu.shape() != (m, n) {
                return Err(Error::Dimension(format!(
                    "tap {}: Φx is {:?}, Φu is {:?}, expected ({n}, {n}) and ({m}, {n})",
                    k + 1,
                    px.shape(),
                    pu.shape()
                )));
            }
        }
        Ok(Self { phi_x, phi_u })
    }

    /// `Φx[1] = I`, all other taps zero.
    pub fn identity(n: usize, m: usize, horizon: usize) -> Self {
        let mut phi_x = vec![DMatrix::zeros(n, n); horizon.max(1)];
        phi_x[0] = DMatrix::identity(n, n);
        Self {
            phi_u: vec![DMatrix::zeros(m, n); phi_x.len()],
            phi_x,
        }
    }

    pub fn horizon(&self) -> usize {
        self.phi_x.len()
    }

    pub fn n(&self) -> usize {
        self.phi_x[0].nrows()
    }

    pub fn m(&self) -> usize {
        self.phi_u[0].nrows()
    }

    pub fn phi_x(&self) -> &[DMatrix<f64>] {
        &self.phi_x
    }

    pub fn phi_u(&self) -> &[DMatrix<f64>] {
        &self.phi_u
    }

    pub fn phi_x_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.phi_x
    }

    pub fn phi_u_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.phi_u
    }

    /// Stacked `[Φx[k]; Φu[k]]`, an `(n+m) × n` block.
    pub fn stacked(&self, k: usize) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut s = DMatrix::zeros(n + m, n);
        s.view_mut((0, 0), (n, n)).copy_from(&self.phi_x[k]);
        s.view_mut((n, 0), (m, n)).copy_from(&self.phi_u[k]);
        s
    }

    /// Sum of squared Frobenius norms of all taps.
    pub fn h2_cost(&self) -> f64 {
        self.phi_x
            .iter()
            .chain(&self.phi_u)
            .map(|m| m.norm_squared())
            .sum()
    }
}

/// Largest entrywise violation of `Φx[1] = I`, `Φx[k+1] = AΦx[k] + BΦu[k]`
/// and `AΦx[T] + BΦu[T] = 0`.
pub fn affine_residual(sys: &LinearSystem, phi: &FirResponse) -> Result<f64> {
    if phi.n() != sys.n() || phi.m() != sys.m() {
        return Err(Error::Dimension(format!(
            "response is for n={}, m={}, system has n={}, m={}",
            phi.n(),
            phi.m(),
            sys.n(),
            sys.m()
        )));
    }
    let n = sys.n();
    let t = phi.horizon();
    let mut worst = (&phi.phi_x[0] - DMatrix::<f64>::identity(n, n)).amax();
    for k in 0..t {
        let next = sys.a() * &phi.phi_x[k] + sys.b() * &phi.phi_u[k];
        let r = if k + 1 < t { (next - &phi.phi_x[k + 1]).amax() } else { next.amax() };
        worst = worst.max(r);
    }
    Ok(worst)
}

/// States, inputs and disturbances of a simulation of length `N`.
///
/// `x_seq` and `u_seq` hold `N + 1` samples (times `0..=N`), `w_seq` holds
/// `N` samples; `x(k+1) = A x(k) + B u(k) + w(k)` for `k < N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub x_seq: Vec<DVector<f64>>,
    pub u_seq: Vec<DVector<f64>>,
    pub w_seq: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.w_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w_seq.is_empty()
    }

    /// `max_k ‖x(k+1) − A x(k) − B u(k) − w(k)‖∞`.
    pub fn plant_residual(&self, sys: &LinearSystem) -> f64 {
        (0..self.len())
            .map(|k| {
                let r = &self.x_seq[k + 1] - sys.a() * &self.x_seq[k] - sys.b() * &self.u_seq[k] - &self.w_seq[k];
                r.amax()
            })
            .fold(0.0, f64::max)
    }

    /// Largest entrywise gap between two trajectories' states and inputs.
    pub fn max_deviation(&self, other: &Trajectory) -> f64 {
        let xs = self.x_seq.iter().zip(&other.x_seq).map(|(a, b)| (a - b).amax());
        let us = self.u_seq.iter().zip(&other.u_seq).map(|(a, b)| (a - b).amax());
        let len_gap = if self.x_seq.len() == other.x_seq.len() { 0.0 } else { f64::INFINITY };
        xs.chain(us).fold(len_gap, f64::max)
    }

    /// `Σ_{t ≥ from} ‖x(t)‖²`.
    pub fn state_energy_from(&self, from: usize) -> f64 {
        self.x_seq.iter().skip(from).map(|x| x.norm_squared()).sum()
    }

    pub fn peak_state(&self) -> f64 {
        self.x_seq.iter().map(|x| x.amax()).fold(0.0, f64::max)
    }
}

/// Drive the closed loop by convolution:
/// `x(k) = Σ_{t=1}^{min(k,T)} Φx[t] w(k−t)`, and likewise for `u`, with
/// `x(0) = 0`.
pub fn simulate_closed_loop(phi: &FirResponse, w_seq: &[DVector<f64>]) -> Trajectory {
    let (n, m) = (phi.n(), phi.m());
    let steps = w_seq.len();
    let mut x_seq = Vec::with_capacity(steps + 1);
    let mut u_seq = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let mut x = DVector::zeros(n);
        let mut u = DVector::zeros(m);
        for t in 1..=k.min(phi.horizon()) {
            let w = &w_seq[k - t];
            x.gemv(1.0, &phi.phi_x[t - 1], w, 1.0);
            u.gemv(1.0, &phi.phi_u[t - 1], w, 1.0);
        }
        x_seq.push(x);
        u_seq.push(u);
    }
    Trajectory {
        x_seq,
        u_seq,
        w_seq: w_seq.to_vec(),
    }
}

/// `Σ_k taps[k] e^{−i(k − shift)θ}` where `taps[0]` is the coefficient of `z^{-1}`.
pub fn evaluate_taps(taps: &[DMatrix<f64>], theta: f64, shift: i32) -> DMatrix<Complex64> {
    let (r, c) = taps.first().map_or((0, 0), |t| t.shape());
    let mut out = DMatrix::from_element(r, c, Complex64::new(0.0, 0.0));
    for (idx, tap) in taps.iter().enumerate() {
        let power = (idx as i32 + 1 - shift) as f64;
        let z = Complex64::from_polar(1.0, -power * theta);
        out.zip_apply(tap, |o, t| *o += z * t);
    }
    out
}

/// Frequency response of `z^shift Φx` and `z^shift Φu` at `e^{iθ}`.
pub fn evaluate_transfer(phi: &FirResponse, theta: f64, shift: i32) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    (evaluate_taps(&phi.phi_x, theta, shift), evaluate_taps(&phi.phi_u, theta, shift))
}

#[derive(Serialize, Deserialize)]
struct FirJson {
    #[serde(rename = "T")]
    horizon: usize,
    phi_x: Vec<Vec<Vec<f64>>>,
    phi_u: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<FirJson> for FirResponse {
    type Error = Error;

    fn try_from(j: FirJson) -> Result<Self> {
        if j.phi_x.len() != j.horizon || j.phi_u.len() != j.horizon {
            return Err(Error::Dimension(format!(
                "T = {} but {} state and {} input taps",
                j.horizon,
                j.phi_x.len(),
                j.phi_u.len()
            )));
        }
        let phi_x = j
            .phi_x
            .iter()
            .map(|r| from_rows(r, 0, "phi_x"))
            .collect::<Result<Vec<_>>>()?;
        let n = phi_x.first().map_or(0, |p| p.nrows());
        let phi_u = j
            .phi_u
            .iter()
            .map(|r| from_rows(r, n, "phi_u"))
            .collect::<Result<Vec<_>>>()?;
        FirResponse::new(phi_x, phi_u)
    }
}

impl From<FirResponse> for FirJson {
    fn from(f: FirResponse) -> Self {
        FirJson {
            horizon: f.horizon(),
            phi_x: f.phi_x.iter().map(to_rows).collect(),
            phi_u: f.phi_u.iter().map(to_rows).collect(),
        }
    }
}
