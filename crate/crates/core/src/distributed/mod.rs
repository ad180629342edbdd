//! Distributed synthesis by dual decomposition.
//!
//! With decoupled bounds the program separates by Φ column except for the
//! budget rows `Σ_k Λ[k] ĝ ≤ h`. Each patch minimizes its local cost plus
//! the dual penalty, the owners of the budget rows collect the partial
//! budgets from their neighbors and take a projected ascent step on `σ`,
//! and the new multipliers are sent back.

mod agent;
mod bus;
mod dual;
mod patch;

use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use agent::{PatchAgent, PrimalUpdate};
pub use bus::{Message, MessageBus, Payload};
pub use dual::{dual_update, DualState, StoppingResiduals};
pub use patch::{decompose, decompose_grouped, Decomposition, Patch};

use crate::error::{Error, Result};
use crate::lti::{FirResponse, LinearSystem, SupportMask};
use crate::qp::{KktResiduals, Settings};
use crate::synthesis::{DualCertificate, H2Weights, RobustSpec, SynthesisResult, SynthesisStatus};

#[derive(Clone, Debug)]
pub struct DistributedOptions {
    /// dual step size; [`default_step_size`] when `None`
    pub alpha: Option<f64>,
    pub epsilon: f64,
    pub max_rounds: usize,
    /// shrink the step when the residual grows for `backoff_patience` rounds in a row
    pub backoff: bool,
    pub backoff_factor: f64,
    pub backoff_patience: usize,
    /// rounds compared by the oscillation detector; 0 disables it
    pub oscillation_window: usize,
    /// seeds the order in which patches post their messages
    pub seed: u64,
    /// node groups forming the patches; one patch per node when `None`
    pub groups: Option<Vec<Vec<usize>>>,
    pub weights: Option<H2Weights>,
    pub settings: Settings,
}

impl Default for DistributedOptions {
    fn default() -> Self {
        Self {
            alpha: None,
            epsilon: 1e-4,
            max_rounds: 5000,
            backoff: true,
            backoff_factor: 0.5,
            backoff_patience: 3,
            oscillation_window: 25,
            seed: 0,
            groups: None,
            weights: None,
            // patch programs are small; a tighter cap bounds the time lost on
            // pathological dual iterates
            settings: Settings {
                max_iter: 20_000,
                ..Settings::default()
            },
        }
    }
}

/// `1 / (T ‖ĝ‖∞ p)`.
pub fn default_step_size(spec: &RobustSpec) -> f64 {
    let g_inf = spec.g().amax().max(f64::MIN_POSITIVE);
    1.0 / (spec.horizon() as f64 * g_inf * spec.p().max(1) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributedStatus {
    Converged,
    /// the residual stopped improving while moving up and down
    Oscillating,
    MaxRounds,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub primal_residual: f64,
    pub max_violation: f64,
    pub complementarity: f64,
    pub alpha: f64,
    /// seconds spent in this round
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct DistributedRun {
    /// converged iterate, or the one with the smallest residual
    pub result: SynthesisResult,
    pub status: DistributedStatus,
    pub dual: DualState,
    pub trace: Vec<TraceRow>,
    pub messages: Vec<Message>,
    pub decomposition: Decomposition,
}

impl DistributedRun {
    pub fn converged(&self) -> bool {
        self.status == DistributedStatus::Converged
    }

    /// Every logged message went between neighboring patches.
    pub fn messages_are_local(&self) -> bool {
        self.messages
            .iter()
            .all(|m| m.from != m.to && self.decomposition.are_neighbors(m.from, m.to))
    }

    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "round,primal_residual,max_violation,complementarity,alpha,wall_time_s")?;
        for r in &self.trace {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.round, r.primal_residual, r.max_violation, r.complementarity, r.alpha, r.wall_time
            )?;
        }
        Ok(())
    }
}

struct Best {
    residual: f64,
    phi: FirResponse,
    cert: DualCertificate,
    sigma: DVector<f64>,
    round: usize,
}

/// Run the primal-dual iteration on a simulated neighbor-only network.
pub fn run(sys: &LinearSystem, spec: &RobustSpec, support: &SupportMask, opts: &DistributedOptions) -> Result<DistributedRun> {
    if !(opts.epsilon >= 0.0) {
        return Err(Error::Invalid("epsilon must be nonnegative".into()));
    }
    let dec = match &opts.groups {
        Some(groups) => decompose_grouped(sys, support, spec, groups)?,
        None => decompose(sys, support, spec)?,
    };
    let weights = opts.weights.clone().unwrap_or_else(|| H2Weights::identity(sys.n(), sys.m()));
    let mut agents: Vec<PatchAgent> = (0..dec.num_patches())
        .map(|i| PatchAgent::new(sys, support, spec, &weights, &dec, i, &opts.settings))
        .collect::<Result<_>>()?;
    let mut alpha = opts.alpha.unwrap_or_else(|| default_step_size(spec));
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Invalid(format!("step size must be positive, got {alpha}")));
    }

    let (p, horizon) = (spec.p(), spec.horizon());
    let h = spec.h();
    let mut bus = MessageBus::new(dec.patches.iter().map(|p| p.neighbor_ids.clone()).collect());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..agents.len()).collect();
    // each patch's copy of σ, meaningful on its coupled rows
    let mut local_sigma = vec![DVector::<f64>::zeros(p); agents.len()];
    let mut state = DualState::zeros(p);
    let mut phi = FirResponse::identity(sys.n(), sys.m(), horizon);
    let mut cert = DualCertificate::zeros(p, spec.q(), horizon);
    let mut trace = Vec::new();
    let mut best: Option<Best> = None;
    let mut status = DistributedStatus::MaxRounds;
    let mut kkt = KktResiduals::default();
    let mut rising = 0;

    for round in 1..=opts.max_rounds {
        let start = Instant::now();
        let updates: Vec<PrimalUpdate> = agents
            .par_iter_mut()
            .zip(local_sigma.par_iter())
            .map(|(a, s)| a.primal_update(s))
            .collect::<Result<_>>()?;
        kkt = KktResiduals::default();
        for (a, u) in agents.iter().zip(&updates) {
            a.scatter(u, &mut phi, &mut cert);
            kkt.stationarity = kkt.stationarity.max(u.kkt.stationarity);
            kkt.primal = kkt.primal.max(u.kkt.primal);
            kkt.complementarity = kkt.complementarity.max(u.kkt.complementarity);
        }

        // partial budgets travel to the row owners
        order.shuffle(&mut rng);
        let mut budget = DVector::zeros(p);
        let mut own = vec![Vec::new(); agents.len()];
        for &i in &order {
            let mut outgoing: Vec<Vec<(usize, f64)>> = vec![Vec::new(); agents.len()];
            for &(r, v) in &updates[i].budget {
                match dec.row_owner[r] {
                    Some(o) if o == i => own[i].push((r, v)),
                    Some(o) => outgoing[o].push((r, v)),
                    None => {}
                }
            }
            for (to, payload) in outgoing.into_iter().enumerate().filter(|(_, v)| !v.is_empty()) {
                bus.send(Message {
                    from: i,
                    to,
                    round,
                    payload: Payload::Budget(payload),
                })?;
            }
        }
        for o in 0..agents.len() {
            let mut inbox = bus.drain(o);
            inbox.sort_by_key(|m| m.from);
            let mut parts = std::mem::take(&mut own[o]);
            for m in inbox {
                if let Payload::Budget(v) = m.payload {
                    parts.extend(v);
                }
            }
            for (r, v) in parts {
                budget[r] += v;
            }
        }
        cert.sigma.copy_from(&state.sigma);

        let res = StoppingResiduals::new(&state.sigma, &budget, h);
        let combined = res.combined();
        trace.push(TraceRow {
            round,
            primal_residual: res.primal_residual,
            max_violation: res.max_violation,
            complementarity: res.complementarity,
            alpha,
            wall_time: start.elapsed().as_secs_f64(),
        });
        state.residual_history.push(combined);
        if best.as_ref().is_none_or(|b| combined < b.residual) {
            best = Some(Best {
                residual: combined,
                phi: phi.clone(),
                cert: cert.clone(),
                sigma: state.sigma.clone(),
                round,
            });
        }
        if res.converged(opts.epsilon) {
            status = DistributedStatus::Converged;
            break;
        }
        if oscillating(&state.residual_history, opts.oscillation_window) {
            status = DistributedStatus::Oscillating;
            break;
        }
        let hist = &state.residual_history;
        if opts.backoff && hist.len() >= 2 {
            rising = if hist[hist.len() - 1] > hist[hist.len() - 2] { rising + 1 } else { 0 };
            if rising >= opts.backoff_patience.max(1) {
                alpha *= opts.backoff_factor;
                rising = 0;
                log::debug!("round {round}: residual rising, step size now {alpha:e}");
            }
        }

        let residual_history = std::mem::take(&mut state.residual_history);
        state = dual_update(&state, &budget, h, alpha)?;
        state.residual_history = residual_history;

        // owners send the new σ back to every patch that reads the row
        for &o in &order {
            let owned = &dec.patches[o].owned_rows;
            for &r in owned {
                local_sigma[o][r] = state.sigma[r];
            }
            for &to in &dec.patches[o].neighbor_ids {
                let rows: Vec<(usize, f64)> = owned
                    .iter()
                    .filter(|r| dec.patches[to].coupled_rows.binary_search(r).is_ok())
                    .map(|&r| (r, state.sigma[r]))
                    .collect();
                if !rows.is_empty() {
                    bus.send(Message {
                        from: o,
                        to,
                        round,
                        payload: Payload::Sigma(rows),
                    })?;
                }
            }
        }
        for (i, sigma) in local_sigma.iter_mut().enumerate() {
            for m in bus.drain(i) {
                if let Payload::Sigma(v) = m.payload {
                    for (r, s) in v {
                        sigma[r] = s;
                    }
                }
            }
        }
    }

    let rounds = trace.len();
    let (phi, cert) = if status == DistributedStatus::Converged {
        (phi, cert)
    } else {
        let b = best.expect("at least one round ran");
        log::warn!(
            "distributed synthesis stopped ({status:?}) after {rounds} rounds; returning round {} with residual {:e}",
            b.round,
            b.residual
        );
        let mut cert = b.cert;
        cert.sigma = b.sigma;
        (b.phi, cert)
    };
    Ok(DistributedRun {
        result: SynthesisResult {
            cost: weights.cost(&phi),
            phi,
            cert,
            status: if status == DistributedStatus::Converged {
                SynthesisStatus::Optimal
            } else {
                SynthesisStatus::MaxIter
            },
            iterations: rounds,
            kkt,
            infeasibility: None,
        },
        status,
        dual: state,
        trace,
        messages: bus.log().to_vec(),
        decomposition: dec,
    })
}

/// The last `window` residuals moved up at least a third of the time and
/// never beat the best residual seen before them.
fn oscillating(history: &[f64], window: usize) -> bool {
    if window < 2 || history.len() < 2 * window {
        return false;
    }
    let (before, recent) = history.split_at(history.len() - window);
    let best_before = before.iter().copied().fold(f64::INFINITY, f64::min);
    let best_recent = recent.iter().copied().fold(f64::INFINITY, f64::min);
    let rises = recent.windows(2).filter(|w| w[1] > w[0]).count();
    rises * 3 >= window && best_recent >= best_before
}
