use nalgebra::DVector;

use super::patch::{Decomposition, Patch};
use crate::error::{Error, Result};
use crate::lti::{FirResponse, LinearSystem, SupportMask};
use crate::qp::{KktResiduals, QpSolver, Settings, SolveStatus};
use crate::synthesis::program::{assemble, Layout, Scope, NONE};
use crate::synthesis::{DualCertificate, H2Weights, RobustSpec};

/// Output of one patch's primal step.
#[derive(Clone, Debug)]
pub struct PrimalUpdate {
    pub patch: usize,
    x: Vec<f64>,
    /// minimal multipliers for the new columns, `[k][(r, c)]` flattened as `(k, r, c, value)`
    lambda: Vec<(usize, usize, usize, f64)>,
    /// `(row, Σ_k Λ[k](row, owned) ĝ)` for every coupled row
    pub budget: Vec<(usize, f64)>,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// An agent owning a column block of Φ and the matching Λ columns. The QP
/// solver is kept between rounds so each solve warm-starts from the last.
pub struct PatchAgent {
    patch: Patch,
    solver: QpSolver,
    layout: Layout,
    spec: RobustSpec,
}

impl PatchAgent {
    pub fn new(
        sys: &LinearSystem,
        support: &SupportMask,
        spec: &RobustSpec,
        weights: &H2Weights,
        dec: &Decomposition,
        patch: usize,
        settings: &Settings,
    ) -> Result<Self> {
        let patch = dec
            .patches
            .get(patch)
            .ok_or_else(|| Error::Invalid(format!("patch {patch} does not exist")))?
            .clone();
        let scope = Scope {
            cols: &patch.owned_columns,
            lambda_cols: &patch.lambda_cols,
            spec: Some(spec),
            pattern: Some(&dec.pattern),
            budget_rows: false,
        };
        let sls = assemble(sys, support, weights, &scope)?;
        Ok(Self {
            solver: QpSolver::new(sls.program, settings.clone())?,
            layout: sls.layout,
            patch,
            spec: spec.clone(),
        })
    }

    pub fn patch(&self) -> &Patch {
        &self.patch
    }

    /// Minimize the local H2 cost plus `Σ_r σ_r Σ_k Λ[k](r, :) ĝ` over the
    /// owned columns, then replace the multipliers by the cheapest ones that
    /// certify the new columns.
    pub fn primal_update(&mut self, sigma: &DVector<f64>) -> Result<PrimalUpdate> {
        self.solver.set_linear_cost(self.layout.dual_penalty(sigma, self.spec.g()))?;
        let res = self.solver.solve();
        match res.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                return Err(Error::Infeasible(format!(
                    "patch {} has no feasible local program",
                    self.patch.id
                )))
            }
            SolveStatus::Unbounded | SolveStatus::MaxIter => {
                log::warn!("patch {} solve ended with {:?}", self.patch.id, res.status);
            }
        }
        let (lambda, budget) = self.min_budget(&res.x);
        Ok(PrimalUpdate {
            patch: self.patch.id,
            x: res.x,
            lambda,
            budget,
            kkt: res.kkt,
            iterations: res.iterations,
            status: res.status,
        })
    }

    /// For each tap, coupled row and owned column the link constraint reads
    /// `Σ_c Λ[k](r, c) G(c, j) = (H Φ[k])(r, j)` over the G rows touching
    /// column `j` only, so the cheapest multiplier puts all weight on the row
    /// with the smallest `g_c / |G(c, j)|` of matching sign.
    fn min_budget(&self, x: &[f64]) -> (Vec<(usize, usize, usize, f64)>, Vec<(usize, f64)>) {
        let (n, m) = (self.spec.n(), self.spec.m());
        let (h, gm, g) = (self.spec.h_mat(), self.spec.g_mat(), self.spec.g());
        let value = |idx: usize| if idx == NONE { 0.0 } else { x[idx] };
        let mut lambda = Vec::new();
        let mut budget = vec![0.0; self.spec.p()];
        for k in 0..self.spec.horizon() {
            let lam = &self.layout.lam[k];
            for &j in &self.patch.owned_columns {
                let cands: Vec<usize> = self.patch.lambda_cols.iter().copied().filter(|&c| gm[(c, j)] != 0.0).collect();
                for &r in &self.patch.coupled_rows {
                    let mut v = 0.0;
                    for s in 0..n {
                        if h[(r, s)] != 0.0 {
                            let phi = if k == 0 {
                                if s == j {
                                    1.0
                                } else {
                                    0.0
                                }
                            } else {
                                value(self.layout.px[k][(s, j)])
                            };
                            v += h[(r, s)] * phi;
                        }
                    }
                    for a in 0..m {
                        if h[(r, n + a)] != 0.0 {
                            v += h[(r, n + a)] * value(self.layout.pu[k][(a, j)]);
                        }
                    }
                    if v == 0.0 {
                        continue;
                    }
                    let best = cands
                        .iter()
                        .copied()
                        .filter(|&c| lam[(r, c)] != NONE && gm[(c, j)] * v > 0.0)
                        .min_by(|&a, &b| (g[a] / gm[(a, j)].abs()).total_cmp(&(g[b] / gm[(b, j)].abs())));
                    if let Some(c) = best {
                        let l = v / gm[(c, j)];
                        lambda.push((k, r, c, l));
                        budget[r] += g[c] * l;
                    }
                }
            }
        }
        let budget = self.patch.coupled_rows.iter().map(|&r| (r, budget[r])).collect();
        (lambda, budget)
    }

    /// Copy the patch's columns and multipliers into the global iterate.
    pub fn scatter(&self, update: &PrimalUpdate, phi: &mut FirResponse, cert: &mut DualCertificate) {
        self.layout.scatter(&update.x, phi, cert);
        for k in 0..cert.lambda.len() {
            for &c in &self.patch.lambda_cols {
                cert.lambda[k].column_mut(c).fill(0.0);
            }
        }
        for &(k, r, c, l) in &update.lambda {
            cert.lambda[k][(r, c)] = l;
        }
    }
}
