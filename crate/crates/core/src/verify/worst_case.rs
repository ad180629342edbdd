use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lti::FirResponse;
use crate::qp::{self, ProgramBuilder, SolveStatus};
use crate::synthesis::RobustSpec;

const LP_TOL: f64 = 1e-10;

/// A disturbance sequence maximizing one performance row at time `T`.
#[derive(Clone, Debug)]
pub struct WorstCaseResult {
    /// `w(0), …, w(T−1)`
    pub w_seq: Vec<DVector<f64>>,
    pub achieved_value: f64,
    pub row_index: usize,
}

/// Coefficients of `H_row [x(T); u(T)]` with respect to each `w(t)`:
/// `c_t = H_row [Φx[T−t]; Φu[T−t]]`.
pub fn attack_coefficients(phi: &FirResponse, h_row: &DVector<f64>) -> Vec<DVector<f64>> {
    let horizon = phi.horizon();
    (0..horizon)
        .map(|t| (h_row.transpose() * phi.stacked(horizon - 1 - t)).transpose())
        .collect()
}

/// Solve `max H_row Σ_t [Φx[T−t]; Φu[T−t]] w(t)` subject to `G w(t) ≤ g`
/// for every `t`. Coordinates with a zero coefficient are pinned to zero
/// whenever the disturbance set allows it.
pub fn worst_case_disturbance(phi: &FirResponse, spec: &RobustSpec, row: usize) -> Result<WorstCaseResult> {
    if row >= spec.p() {
        return Err(Error::Invalid(format!("row {row} out of range (p = {})", spec.p())));
    }
    if phi.n() != spec.n() || phi.m() != spec.m() {
        return Err(Error::Dimension("response does not match the spec".into()));
    }
    let h_row = spec.h_mat().row(row).transpose();
    let coeffs = attack_coefficients(phi, &h_row);
    let x = match solve_attack(&coeffs, spec, true)? {
        Some(x) => x,
        None => solve_attack(&coeffs, spec, false)?
            .ok_or_else(|| Error::Infeasible("disturbance set is empty".into()))?,
    };
    let n = spec.n();
    let w_seq: Vec<DVector<f64>> = (0..phi.horizon()).map(|t| DVector::from_column_slice(&x[t * n..(t + 1) * n])).collect();
    let achieved_value = coeffs.iter().zip(&w_seq).map(|(c, w)| c.dot(w)).sum();
    Ok(WorstCaseResult {
        w_seq,
        achieved_value,
        row_index: row,
    })
}

fn solve_attack(coeffs: &[DVector<f64>], spec: &RobustSpec, pin_zeros: bool) -> Result<Option<Vec<f64>>> {
    let n = spec.n();
    let (gm, g) = (spec.g_mat(), spec.g());
    let mut b = ProgramBuilder::new(coeffs.len() * n);
    for (t, c) in coeffs.iter().enumerate() {
        for j in 0..n {
            b.add_linear(t * n + j, -c[j]);
            if pin_zeros && c[j] == 0.0 {
                b.add_equality(&[(t * n + j, 1.0)], 0.0);
            }
        }
        for r in 0..spec.q() {
            let row: Vec<(usize, f64)> = (0..n).filter(|&j| gm[(r, j)] != 0.0).map(|j| (t * n + j, gm[(r, j)])).collect();
            b.add_inequality(&row, g[r]);
        }
    }
    let res = qp::solve(&b.build()?, LP_TOL, 200_000);
    match res.status {
        SolveStatus::Optimal => {
            let mut x = res.x;
            if pin_zeros {
                for (t, c) in coeffs.iter().enumerate() {
                    for j in 0..n {
                        if c[j] == 0.0 {
                            x[t * n + j] = 0.0;
                        }
                    }
                }
            }
            Ok(Some(x))
        }
        SolveStatus::Infeasible => Ok(None),
        SolveStatus::Unbounded => Err(Error::Unbounded("worst-case disturbance LP".into())),
        SolveStatus::MaxIter => Err(Error::Invalid("worst-case disturbance LP did not converge".into())),
    }
}

/// `Σ_t Σ_j |c_t[j]| w_max[j]`: the exact worst case over a symmetric box.
pub fn box_worst_case(coeffs: &[DVector<f64>], w_max: &[f64]) -> f64 {
    coeffs
        .iter()
        .map(|c| c.iter().zip(w_max).map(|(v, w)| v.abs() * w).sum::<f64>())
        .sum()
}

/// Closed-form worst case of `row` for box disturbance sets.
pub fn box_worst_case_oracle(phi: &FirResponse, spec: &RobustSpec, row: usize) -> Result<f64> {
    let w_max = spec
        .box_half_widths()
        .ok_or_else(|| Error::Invalid("disturbance set is not a symmetric box".into()))?;
    if row >= spec.p() {
        return Err(Error::Invalid(format!("row {row} out of range")));
    }
    let h_row = spec.h_mat().row(row).transpose();
    Ok(box_worst_case(&attack_coefficients(phi, &h_row), &w_max))
}

/// Per-row worst cases and slacks `h − worst case`.
#[derive(Clone, Debug)]
pub struct FeasibilityAudit {
    pub bound: DVector<f64>,
    pub worst_case: DVector<f64>,
    pub slack: DVector<f64>,
}

impl FeasibilityAudit {
    pub fn min_slack(&self) -> f64 {
        self.slack.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Row with the smallest slack.
    pub fn binding_row(&self) -> usize {
        self.slack.argmin().0
    }

    pub fn violated_rows(&self, tol: f64) -> Vec<usize> {
        (0..self.slack.len()).filter(|&r| self.slack[r] < -tol).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W, attack_ref: impl Fn(usize) -> String) -> std::io::Result<()> {
        writeln!(w, "row,bound,worst_case,slack,attack")?;
        for r in 0..self.slack.len() {
            writeln!(w, "{r},{},{},{},{}", self.bound[r], self.worst_case[r], self.slack[r], attack_ref(r))?;
        }
        Ok(())
    }
}

/// Audit every performance row by solving its worst-case LP. Rows are
/// processed in parallel.
pub fn check_robust_feasibility(phi: &FirResponse, spec: &RobustSpec) -> Result<FeasibilityAudit> {
    let worst: Vec<f64> = (0..spec.p())
        .into_par_iter()
        .map(|r| worst_case_disturbance(phi, spec, r).map(|w| w.achieved_value))
        .collect::<Result<_>>()?;
    let worst_case = DVector::from_vec(worst);
    Ok(FeasibilityAudit {
        bound: spec.h().clone(),
        slack: spec.h() - &worst_case,
        worst_case,
    })
}

/// Stack `T` disturbance vectors into an `n × T` matrix (column `t` = `w(t)`).
pub fn attack_matrix(w_seq: &[DVector<f64>]) -> DMatrix<f64> {
    let n = w_seq.first().map_or(0, |w| w.len());
    DMatrix::from_fn(n, w_seq.len(), |i, t| w_seq[t][i])
}
