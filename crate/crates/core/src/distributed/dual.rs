use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multipliers of the budget rows `Σ_k Λ[k] ĝ ≤ h`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualState {
    pub sigma: DVector<f64>,
    pub iteration: usize,
    pub residual_history: Vec<f64>,
}

impl DualState {
    pub fn zeros(p: usize) -> Self {
        Self {
            sigma: DVector::zeros(p),
            iteration: 0,
            residual_history: Vec::new(),
        }
    }
}

/// Projected ascent `σ ← max(0, σ + α(Λĝ − h))`.
pub fn dual_update(state: &DualState, lambda_budget: &DVector<f64>, h: &DVector<f64>, alpha: f64) -> Result<DualState> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Invalid(format!("step size must be positive, got {alpha}")));
    }
    let p = state.sigma.len();
    if lambda_budget.len() != p || h.len() != p {
        return Err(Error::Dimension("dual update vectors differ in length".into()));
    }
    let sigma = DVector::from_fn(p, |r, _| (state.sigma[r] + alpha * (lambda_budget[r] - h[r])).max(0.0));
    Ok(DualState {
        sigma,
        iteration: state.iteration + 1,
        residual_history: state.residual_history.clone(),
    })
}

/// Residuals of the stopping test for a budget vector and the duals that
/// produced it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StoppingResiduals {
    /// `max_r (Λĝ − h)_r`
    pub max_violation: f64,
    /// `‖max(0, Λĝ − h)‖₂`
    pub primal_residual: f64,
    /// `Σ_r |σ_r (Λĝ − h)_r|`
    pub complementarity: f64,
}

impl StoppingResiduals {
    pub fn new(sigma: &DVector<f64>, lambda_budget: &DVector<f64>, h: &DVector<f64>) -> Self {
        let gap = lambda_budget - h;
        Self {
            max_violation: gap.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            primal_residual: gap.map(|v| v.max(0.0)).norm(),
            complementarity: sigma.iter().zip(gap.iter()).map(|(s, v)| (s * v).abs()).sum(),
        }
    }

    /// `Λĝ ≤ h + ε` and `|σ(Λĝ − h)| ≤ ε`.
    pub fn converged(&self, eps: f64) -> bool {
        self.max_violation <= eps && self.complementarity <= eps
    }

    /// Single scalar used for progress tracking.
    pub fn combined(&self) -> f64 {
        self.max_violation.max(0.0).max(self.complementarity)
    }
}
