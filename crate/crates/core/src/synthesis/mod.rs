//! Centralized constrained SLS synthesis.
//!
//! Every robust performance row `H_r [x; u] ≤ h_r`, required for all
//! disturbance sequences with `G w(t) ≤ g`, is replaced by its LP dual:
//! multipliers `Λ[k] ≥ 0` with `H Φ[k] = Λ[k] G` for each tap and the budget
//! `Σ_k Λ[k] g ≤ h`. The result is a convex QP in `(Φ, Λ)`.

mod dual;
pub(crate) mod program;
mod spec;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use dual::{
    dual_pattern, dualize_row, h_phi_pattern, prune_dual, BlockStructure, CertificateResiduals, DualCertificate,
    DualSparsity, RowDualization,
};
pub use program::H2Weights;
pub use spec::{BoundFamily, RobustSpec};

use crate::error::Result;
use crate::lti::{FirResponse, LinearSystem, SupportMask};
use crate::qp::{self, KktResiduals, Settings, SolveStatus};
use program::{assemble, Scope};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisStatus {
    Optimal,
    Infeasible,
    /// iteration budget exhausted; the returned iterate is not certified
    MaxIter,
}

/// Which bounds an infeasibility certificate implicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    /// performance rows whose budget constraint carries weight in the certificate
    pub rows: Vec<usize>,
    pub families: Vec<BoundFamily>,
}

impl InfeasibilityReport {
    pub fn summary(&self) -> String {
        if self.rows.is_empty() {
            return "the affine and locality constraints alone are infeasible".into();
        }
        let fam: Vec<&str> = self
            .families
            .iter()
            .map(|f| match f {
                BoundFamily::State => "state",
                BoundFamily::Input => "input",
                BoundFamily::Mixed => "mixed",
                BoundFamily::Empty => "empty",
            })
            .collect();
        format!("{} bounds implicated (rows {:?})", fam.join(" and "), self.rows)
    }
}

#[derive(Clone, Debug)]
pub struct SynthesisResult {
    /// Optimal response when `status` is optimal, otherwise the last iterate.
    pub phi: FirResponse,
    pub cert: DualCertificate,
    pub cost: f64,
    pub status: SynthesisStatus,
    pub iterations: usize,
    pub kkt: KktResiduals,
    pub infeasibility: Option<InfeasibilityReport>,
}

impl SynthesisResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SynthesisStatus::Optimal
    }
}

#[derive(Clone, Debug)]
pub struct SynthesisOptions {
    pub dual_sparsity: DualSparsity,
    /// identity weights when `None`
    pub weights: Option<H2Weights>,
    pub settings: Settings,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            dual_sparsity: DualSparsity::Full,
            weights: None,
            settings: Settings::default(),
        }
    }
}

/// Minimize the H2 cost subject to the affine constraint, the locality mask
/// and the dualized robust constraints.
pub fn synthesize_centralized(
    sys: &LinearSystem,
    spec: &RobustSpec,
    support: &SupportMask,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult> {
    let all: Vec<usize> = (0..sys.n()).collect();
    let lambda_cols: Vec<usize> = (0..spec.q()).collect();
    let pattern = match opts.dual_sparsity {
        DualSparsity::Full => None,
        DualSparsity::PhiPattern => Some(dual_pattern(spec, support, DualSparsity::PhiPattern)),
    };
    let scope = Scope {
        cols: &all,
        lambda_cols: &lambda_cols,
        spec: Some(spec),
        pattern: pattern.as_deref(),
        budget_rows: true,
    };
    solve_scope(sys, spec.p(), spec.q(), support, opts, &scope, Some(spec))
}

/// Plain localized H2 synthesis: affine constraint and locality mask only.
pub fn synthesize_localized(sys: &LinearSystem, support: &SupportMask, opts: &SynthesisOptions) -> Result<SynthesisResult> {
    let all: Vec<usize> = (0..sys.n()).collect();
    let scope = Scope {
        cols: &all,
        lambda_cols: &[],
        spec: None,
        pattern: None,
        budget_rows: false,
    };
    solve_scope(sys, 0, 0, support, opts, &scope, None)
}

fn solve_scope(
    sys: &LinearSystem,
    p: usize,
    q: usize,
    support: &SupportMask,
    opts: &SynthesisOptions,
    scope: &Scope,
    spec: Option<&RobustSpec>,
) -> Result<SynthesisResult> {
    let weights = opts.weights.clone().unwrap_or_else(|| H2Weights::identity(sys.n(), sys.m()));
    let sls = assemble(sys, support, &weights, scope)?;
    log::debug!(
        "synthesis program: {} variables, {} equalities, {} inequalities",
        sls.layout.num_vars,
        sls.program.eq_rhs().len(),
        sls.program.ineq_rhs().len()
    );
    let res = qp::solve_with(&sls.program, &opts.settings);
    let horizon = support.horizon();
    let mut phi = FirResponse::identity(sys.n(), sys.m(), horizon);
    let mut cert = DualCertificate::zeros(p, q, horizon);
    sls.layout.scatter(&res.x, &mut phi, &mut cert);
    for (r, &row) in sls.layout.budget_row.iter().enumerate() {
        if row != program::NONE {
            cert.sigma[r] = res.duals.ineq.get(row).copied().unwrap_or(0.0).max(0.0);
        }
    }
    let status = match res.status {
        SolveStatus::Optimal => SynthesisStatus::Optimal,
        SolveStatus::Infeasible => SynthesisStatus::Infeasible,
        // the cost is bounded below, so a dual infeasibility flag can only
        // come from numerical trouble
        SolveStatus::Unbounded | SolveStatus::MaxIter => SynthesisStatus::MaxIter,
    };
    let infeasibility = match (&res.certificate, spec) {
        (Some(c), Some(spec)) if status == SynthesisStatus::Infeasible => {
            Some(implicated_rows(spec, &sls.layout.budget_row, &c.ineq))
        }
        _ if status == SynthesisStatus::Infeasible => Some(InfeasibilityReport {
            rows: Vec::new(),
            families: Vec::new(),
        }),
        _ => None,
    };
    Ok(SynthesisResult {
        cost: res.objective + sls.layout.constant,
        phi,
        cert,
        status,
        iterations: res.iterations,
        kkt: res.kkt,
        infeasibility,
    })
}

fn implicated_rows(spec: &RobustSpec, budget_row: &[usize], ineq_cert: &[f64]) -> InfeasibilityReport {
    let weight: Vec<f64> = budget_row
        .iter()
        .map(|&row| if row == program::NONE { 0.0 } else { ineq_cert.get(row).copied().unwrap_or(0.0).abs() })
        .collect();
    let top = weight.iter().copied().fold(0.0, f64::max);
    let rows: Vec<usize> = (0..weight.len()).filter(|&r| top > 0.0 && weight[r] > 1e-6 * top).collect();
    let mut families = Vec::new();
    for &r in &rows {
        let f = spec.row_family(r);
        if !families.contains(&f) {
            families.push(f);
        }
    }
    InfeasibilityReport { rows, families }
}

/// Certified worst case `Σ_k Λ[k] g` per row.
pub fn certified_bounds(cert: &DualCertificate, spec: &RobustSpec) -> DVector<f64> {
    cert.budget(spec.g())
}
