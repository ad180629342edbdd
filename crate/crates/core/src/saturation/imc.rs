use std::collections::VecDeque;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use super::{cutoff, saturate, CompensatorBank, InputBox};
use crate::error::{Error, Result};
use crate::lti::{FirResponse, LinearSystem, Trajectory};

/// Internal-model realization `u = zΦu (x − z^{-1}(Â x + B u))`.
///
/// The innovation is `δ̂(t) = x(t) − Â x(t−1) − B u(t−1)` where `u` is the
/// input that actually reached the plant, so with `Â = A` the innovation is
/// exactly the previous disturbance, saturated or not.
#[derive(Clone, Debug)]
pub struct ImcController {
    phi: FirResponse,
    a_hat: DMatrix<f64>,
    b: DMatrix<f64>,
    /// most recent innovation first; always `T` entries
    delta: VecDeque<DVector<f64>>,
    x_prev: DVector<f64>,
    u_prev: DVector<f64>,
}

impl ImcController {
    pub fn new(phi: FirResponse, a_hat: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let (n, m) = (phi.n(), phi.m());
        if a_hat.shape() != (n, n) || b.shape() != (n, m) {
            return Err(Error::Dimension("model matrices do not match the response".into()));
        }
        let delta = VecDeque::from(vec![DVector::zeros(n); phi.horizon()]);
        Ok(Self {
            phi,
            a_hat,
            b,
            delta,
            x_prev: DVector::zeros(n),
            u_prev: DVector::zeros(m),
        })
    }

    pub fn reset(&mut self) {
        for d in self.delta.iter_mut() {
            d.fill(0.0);
        }
        self.x_prev.fill(0.0);
        self.u_prev.fill(0.0);
    }

    /// Innovations `δ̂(t), δ̂(t−1), …` (length `T`).
    pub fn innovations(&self) -> &VecDeque<DVector<f64>> {
        &self.delta
    }

    /// Record `x(t)` and return the unsaturated command `u0(t)` plus `offset`.
    /// The caller must report the applied input through [`Self::commit`].
    pub fn command(&mut self, x: &DVector<f64>, offset: Option<&DVector<f64>>) -> DVector<f64> {
        let innovation = x - &self.a_hat * &self.x_prev - &self.b * &self.u_prev;
        self.delta.pop_back();
        self.delta.push_front(innovation);
        self.x_prev.copy_from(x);
        let mut u0 = offset.cloned().unwrap_or_else(|| DVector::zeros(self.phi.m()));
        for (tap, d) in self.phi.phi_u().iter().zip(&self.delta) {
            u0.gemv(1.0, tap, d, 1.0);
        }
        u0
    }

    pub fn commit(&mut self, applied: &DVector<f64>) {
        self.u_prev.copy_from(applied);
    }

    /// One control step: returns the applied input.
    pub fn step(&mut self, x: &DVector<f64>, input_box: Option<&InputBox>) -> DVector<f64> {
        let u0 = self.command(x, None);
        let u = match input_box {
            Some(b) => saturate(&u0, b),
            None => u0,
        };
        self.commit(&u);
        u
    }
}

/// Free-function form of [`ImcController::step`].
pub fn imc_step(ctrl: &mut ImcController, x: &DVector<f64>, input_box: Option<&InputBox>) -> DVector<f64> {
    ctrl.step(x, input_box)
}

/// The original state-feedback realization
/// `δ = x − x̂`, `x̂ = Σ_{k≥2} Φx[k] δ(t+1−k)`, `u0 = Σ_k Φu[k] δ(t+1−k)`.
///
/// It has no plant model; behind a saturating actuator it is blind to the
/// clipped part of its command.
#[derive(Clone, Debug)]
pub struct SlsRealization {
    phi: FirResponse,
    delta: VecDeque<DVector<f64>>,
}

impl SlsRealization {
    pub fn new(phi: FirResponse) -> Self {
        let delta = VecDeque::from(vec![DVector::zeros(phi.n()); phi.horizon()]);
        Self { phi, delta }
    }

    /// Commanded input for the measured state.
    pub fn step(&mut self, x: &DVector<f64>) -> DVector<f64> {
        self.delta.pop_back();
        let mut d = x.clone();
        // after the pop, delta[k−2] holds δ(t+1−k) for k ≥ 2
        for (tap, past) in self.phi.phi_x().iter().skip(1).zip(&self.delta) {
            d.gemv(-1.0, tap, past, 1.0);
        }
        self.delta.push_front(d);
        let mut u0 = DVector::zeros(self.phi.m());
        for (tap, past) in self.phi.phi_u().iter().zip(&self.delta) {
            u0.gemv(1.0, tap, past, 1.0);
        }
        u0
    }
}

/// A closed-loop run through a (possibly) saturating actuator.
#[derive(Clone, Debug)]
pub struct SaturatedRun {
    pub traj: Trajectory,
    /// commanded input before saturation, per time step
    pub u_cmd: Vec<DVector<f64>>,
    /// per time step and actuator: was the command clipped
    pub saturated: Vec<Vec<bool>>,
    /// `‖B Δu(t)‖₂`, the size of the pseudo-disturbance created by clipping
    pub w_bar_norm: Vec<f64>,
}

impl SaturatedRun {
    pub fn first_saturation(&self) -> Option<usize> {
        self.saturated.iter().position(|s| s.iter().any(|&b| b))
    }

    pub fn last_saturation(&self) -> Option<usize> {
        self.saturated.iter().rposition(|s| s.iter().any(|&b| b))
    }

    pub fn saturation_count(&self) -> usize {
        self.saturated.iter().flatten().filter(|&&b| b).count()
    }

    /// `Σ_{t ≥ from} ‖x(t)‖²`.
    pub fn energy_from(&self, from: usize) -> f64 {
        self.traj.state_energy_from(from)
    }

    /// CSV with columns `t, x1..xn, u1..um, sat1..satm, wbar`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.traj.x_seq.first().map_or(0, |x| x.len());
        let m = self.traj.u_seq.first().map_or(0, |u| u.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|a| format!("u{a}")));
        header.extend((1..=m).map(|a| format!("sat{a}")));
        header.push("wbar".into());
        writeln!(w, "{}", header.join(","))?;
        for t in 0..self.traj.x_seq.len() {
            let mut row = vec![t.to_string()];
            row.extend(self.traj.x_seq[t].iter().map(|v| v.to_string()));
            row.extend(self.traj.u_seq[t].iter().map(|v| v.to_string()));
            row.extend(self.saturated[t].iter().map(|&s| u8::from(s).to_string()));
            row.push(self.w_bar_norm[t].to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Plant loop `x(t+1) = A x(t) + B u(t) + w(t)` from `x(0) = 0`. The policy
/// maps the measured state to `(commanded, applied)` inputs. Disturbances
/// beyond the end of `w_seq` are zero.
fn run_loop(
    sys: &LinearSystem,
    w_seq: &[DVector<f64>],
    horizon: usize,
    mut policy: impl FnMut(&DVector<f64>) -> (DVector<f64>, DVector<f64>),
) -> SaturatedRun {
    let (n, m) = (sys.n(), sys.m());
    let mut x = DVector::zeros(n);
    let mut run = SaturatedRun {
        traj: Trajectory {
            x_seq: Vec::with_capacity(horizon + 1),
            u_seq: Vec::with_capacity(horizon + 1),
            w_seq: Vec::with_capacity(horizon),
        },
        u_cmd: Vec::with_capacity(horizon + 1),
        saturated: Vec::with_capacity(horizon + 1),
        w_bar_norm: Vec::with_capacity(horizon + 1),
    };
    for t in 0..=horizon {
        let (u0, u) = policy(&x);
        let clipped = &u0 - &u;
        run.saturated.push(clipped.iter().map(|&c| c != 0.0).collect());
        run.w_bar_norm.push((sys.b() * &clipped).norm());
        run.traj.x_seq.push(x.clone());
        run.traj.u_seq.push(u.clone());
        run.u_cmd.push(u0);
        if t == horizon {
            break;
        }
        let w = w_seq.get(t).cloned().unwrap_or_else(|| DVector::zeros(n));
        let next = sys.a() * &x + sys.b() * &u + &w;
        run.traj.w_seq.push(w);
        x = next;
    }
    debug_assert_eq!(run.traj.u_seq.first().map_or(m, |u| u.len()), m);
    run
}

fn apply(u0: &DVector<f64>, input_box: Option<&InputBox>) -> DVector<f64> {
    input_box.map_or_else(|| u0.clone(), |b| saturate(u0, b))
}

/// Original SLS realization behind the actuator: `u = Sat(u0)`.
pub fn run_naive_saturated(
    sys: &LinearSystem,
    phi: &FirResponse,
    input_box: Option<&InputBox>,
    w_seq: &[DVector<f64>],
    horizon: usize,
) -> SaturatedRun {
    let mut ctrl = SlsRealization::new(phi.clone());
    run_loop(sys, w_seq, horizon, |x| {
        let u0 = ctrl.step(x);
        let u = apply(&u0, input_box);
        (u0, u)
    })
}

/// Internal-model realization with model `a_hat`, fed the applied input.
pub fn run_imc(
    sys: &LinearSystem,
    a_hat: &DMatrix<f64>,
    phi: &FirResponse,
    input_box: Option<&InputBox>,
    w_seq: &[DVector<f64>],
    horizon: usize,
) -> Result<SaturatedRun> {
    let mut ctrl = ImcController::new(phi.clone(), a_hat.clone(), sys.b().clone())?;
    Ok(run_loop(sys, w_seq, horizon, |x| {
        let u0 = ctrl.command(x, None);
        let u = apply(&u0, input_box);
        ctrl.commit(&u);
        (u0, u)
    }))
}

/// Internal-model realization plus saturation compensation.
///
/// Clipping at node `i` creates the pseudo-disturbance
/// `w̄_i(t) = B_i Δu_i(t)` (columns of B for node `i`'s actuators). The
/// internal model cancels it, so the compensator of node `i` re-injects
/// `−Σ_k Φ̄u^{(i)}[k] w̄_i(t−k)` into later commands; compensators of
/// simultaneously saturated nodes superimpose. A node without a compensator
/// falls back to the nominal `Φu`, which reproduces the original realization
/// for that node.
pub fn run_compensated(
    sys: &LinearSystem,
    phi: &FirResponse,
    compensators: &CompensatorBank,
    input_box: Option<&InputBox>,
    w_seq: &[DVector<f64>],
    horizon: usize,
) -> Result<SaturatedRun> {
    let (n, m) = (sys.n(), sys.m());
    if compensators.len() != n {
        return Err(Error::Dimension(format!("{} compensators for {n} nodes", compensators.len())));
    }
    let mut ctrl = ImcController::new(phi.clone(), sys.a().clone(), sys.b().clone())?;
    let filters: Vec<&FirResponse> = (0..n)
        .map(|i| compensators.get(i).map_or(phi, |c| &c.phi_bar))
        .collect();
    let mut warned = vec![false; n];
    // w̄_i history, most recent first
    let mut history: Vec<VecDeque<DVector<f64>>> = filters
        .iter()
        .map(|f| VecDeque::from(vec![DVector::zeros(n); f.horizon()]))
        .collect();
    Ok(run_loop(sys, w_seq, horizon, |x| {
        let mut offset = DVector::zeros(m);
        for (f, hist) in filters.iter().zip(&history) {
            for (tap, wb) in f.phi_u().iter().zip(hist) {
                offset.gemv(-1.0, tap, wb, 1.0);
            }
        }
        let u0 = ctrl.command(x, Some(&offset));
        let u = apply(&u0, input_box);
        ctrl.commit(&u);
        let clipped = input_box.map_or_else(|| DVector::zeros(m), |b| cutoff(&u0, b));
        for (i, hist) in history.iter_mut().enumerate() {
            let mut wb = DVector::zeros(n);
            for &a in sys.node_actuators(i) {
                if clipped[a] != 0.0 {
                    wb.axpy(clipped[a], &sys.b().column(a), 1.0);
                }
            }
            if wb.amax() > 0.0 && compensators.get(i).is_none() && !warned[i] {
                log::warn!("node {i} saturated without a compensator; using the nominal response");
                warned[i] = true;
            }
            hist.pop_back();
            hist.push_front(wb);
        }
        (u0, u)
    }))
}
