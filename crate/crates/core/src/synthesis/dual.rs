use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::spec::RobustSpec;
use crate::error::{Error, Result};
use crate::json::{from_rows, to_rows};
use crate::lti::{FirResponse, LinearSystem, SupportMask};
use crate::qp::{self, ConvexProgram, ProgramBuilder, SolveStatus};

/// Multipliers `Λ[1..T]` (each `p × q`, entrywise nonnegative) certifying
/// `H Φ[k] = Λ[k] G` and `Σ_k Λ[k] g ≤ h`, plus the multiplier `σ` of the
/// budget rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CertJson", into = "CertJson")]
pub struct DualCertificate {
    pub lambda: Vec<DMatrix<f64>>,
    pub sigma: DVector<f64>,
}

/// Largest violations of the certificate relations.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CertificateResiduals {
    /// `max |H Φ[k] − Λ[k] G|`
    pub link: f64,
    /// `max (Σ_k Λ[k] g − h)_+`
    pub budget: f64,
    /// `max (−Λ)_+` together with `max (−σ)_+`
    pub sign: f64,
}

impl CertificateResiduals {
    pub fn max(&self) -> f64 {
        self.link.max(self.budget).max(self.sign)
    }
}

impl DualCertificate {
    pub fn zeros(p: usize, q: usize, horizon: usize) -> Self {
        Self {
            lambda: vec![DMatrix::zeros(p, q); horizon],
            sigma: DVector::zeros(p),
        }
    }

    /// `Σ_k Λ[k] g`, the certified worst case of every performance row.
    pub fn budget(&self, g: &DVector<f64>) -> DVector<f64> {
        let p = self.sigma.len();
        self.lambda.iter().fold(DVector::zeros(p), |acc, l| acc + l * g)
    }

    pub fn residuals(&self, spec: &RobustSpec, phi: &FirResponse) -> Result<CertificateResiduals> {
        if self.lambda.len() != phi.horizon() {
            return Err(Error::Dimension(format!(
                "certificate has {} taps, response has {}",
                self.lambda.len(),
                phi.horizon()
            )));
        }
        if phi.n() != spec.n() || phi.m() != spec.m() {
            return Err(Error::Dimension("response does not match the spec".into()));
        }
        let mut res = CertificateResiduals::default();
        for (k, l) in self.lambda.iter().enumerate() {
            if l.shape() != (spec.p(), spec.q()) {
                return Err(Error::Dimension(format!("Λ[{}] has shape {:?}", k + 1, l.shape())));
            }
            let gap = spec.h_mat() * phi.stacked(k) - l * spec.g_mat();
            res.link = res.link.max(gap.amax());
            res.sign = res.sign.max(l.iter().fold(0.0f64, |m, &v| m.max(-v)));
        }
        let over = self.budget(spec.g()) - spec.h();
        res.budget = over.iter().fold(0.0f64, |m, &v| m.max(v));
        res.sign = res.sign.max(self.sigma.iter().fold(0.0f64, |m, &v| m.max(-v)));
        Ok(res)
    }
}

/// Ownership of performance and disturbance rows by graph nodes.
///
/// A row is owned by the unique node whose state or actuators it touches; a
/// zero row has no owner. The structure only exists when every row touches at
/// most one node, which is the decoupling hypothesis of the dual-pruning result.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockStructure {
    pub h_owner: Vec<Option<usize>>,
    pub g_owner: Vec<Option<usize>>,
}

impl BlockStructure {
    pub fn new(sys: &LinearSystem, spec: &RobustSpec) -> Result<Self> {
        let n = sys.n();
        if spec.n() != n || spec.m() != sys.m() {
            return Err(Error::Dimension(format!(
                "spec is for n={}, m={}, system has n={}, m={}",
                spec.n(),
                spec.m(),
                n,
                sys.m()
            )));
        }
        let node_of_col = |c: usize| if c < n { c } else { sys.actuator_host(c - n) };
        let owner = |row: nalgebra::DVectorView<f64>, which: &str, r: usize| -> Result<Option<usize>> {
            let mut owner = None;
            for (c, &v) in row.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let node = node_of_col(c);
                match owner {
                    None => owner = Some(node),
                    Some(o) if o != node => {
                        return Err(Error::NotDecoupled(format!("{which} row {r} touches nodes {o} and {node}")));
                    }
                    _ => {}
                }
            }
            Ok(owner)
        };
        let h_owner = (0..spec.p())
            .map(|r| owner(spec.h_mat().row(r).transpose().as_view(), "H", r))
            .collect::<Result<Vec<_>>>()?;
        let g_owner = (0..spec.q())
            .map(|r| owner(spec.g_mat().row(r).transpose().as_view(), "G", r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { h_owner, g_owner })
    }

    /// Performance rows owned by `node`.
    pub fn h_rows_of(&self, node: usize) -> Vec<usize> {
        owned(&self.h_owner, node)
    }

    /// Disturbance rows (columns of Λ) owned by `node`.
    pub fn g_rows_of(&self, node: usize) -> Vec<usize> {
        owned(&self.g_owner, node)
    }
}

fn owned(owner: &[Option<usize>], node: usize) -> Vec<usize> {
    owner
        .iter()
        .enumerate()
        .filter(|(_, o)| **o == Some(node))
        .map(|(r, _)| r)
        .collect()
}

/// Which entries of each `Λ[k]` are decision variables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualSparsity {
    /// every entry whose G row is nonzero
    #[default]
    Full,
    /// only entries paired with a structurally nonzero block of `H Φ[k]`
    PhiPattern,
}

/// Structural support of `H Φ[k]` given the locality mask (`Φx[1] = I`).
pub fn h_phi_pattern(spec: &RobustSpec, support: &SupportMask) -> Vec<DMatrix<bool>> {
    let (n, m) = (spec.n(), spec.m());
    let h = spec.h_mat();
    (0..support.horizon())
        .map(|k| {
            DMatrix::from_fn(spec.p(), n, |r, j| {
                (0..n).any(|s| {
                    h[(r, s)] != 0.0 && if k == 0 { s == j } else { support.x_support[k][(s, j)] }
                }) || (0..m).any(|a| h[(r, n + a)] != 0.0 && support.u_support[k][(a, j)])
            })
        })
        .collect()
}

/// Allowed entries of `Λ[k]`. Under [`DualSparsity::PhiPattern`], `Λ[k](r, c)`
/// is kept iff row `r` of `H Φ[k]` is structurally nonzero on a column that
/// G row `c` touches.
pub fn dual_pattern(spec: &RobustSpec, support: &SupportMask, sparsity: DualSparsity) -> Vec<DMatrix<bool>> {
    let g = spec.g_mat();
    let nonzero_g: Vec<bool> = (0..spec.q()).map(|c| g.row(c).iter().any(|&v| v != 0.0)).collect();
    match sparsity {
        DualSparsity::Full => vec![DMatrix::from_fn(spec.p(), spec.q(), |_, c| nonzero_g[c]); spec.horizon()],
        DualSparsity::PhiPattern => h_phi_pattern(spec, support)
            .into_iter()
            .map(|hp| {
                DMatrix::from_fn(spec.p(), spec.q(), |r, c| {
                    (0..spec.n()).any(|j| g[(c, j)] != 0.0 && hp[(r, j)])
                })
            })
            .collect(),
    }
}

/// Zero every multiplier outside the Φ-derived pattern.
///
/// Requires decoupled H and G (checked through `blocks`, which must match
/// the spec) and `g ≥ 0`, so that dropping a multiplier never raises a budget.
pub fn prune_dual(
    cert: &DualCertificate,
    spec: &RobustSpec,
    support: &SupportMask,
    blocks: &BlockStructure,
) -> Result<DualCertificate> {
    if blocks.h_owner.len() != spec.p() || blocks.g_owner.len() != spec.q() {
        return Err(Error::Dimension("block structure does not match the spec".into()));
    }
    if spec.g().iter().any(|&v| v < 0.0) {
        return Err(Error::Invalid("pruning needs g ≥ 0 (disturbance set containing the origin)".into()));
    }
    let pattern = dual_pattern(spec, support, DualSparsity::PhiPattern);
    let lambda = cert
        .lambda
        .iter()
        .zip(&pattern)
        .map(|(l, mask)| l.zip_map(mask, |v, keep| if keep { v } else { 0.0 }))
        .collect();
    Ok(DualCertificate {
        lambda,
        sigma: cert.sigma.clone(),
    })
}

/// Dualized form of one robust row `H_row [x; u] ≤ h_i` for a fixed response.
///
/// Variables are `λ_row[k]` for `k = 1..T`, laid out as `k * q + c`.
#[derive(Clone, Debug)]
pub struct RowDualization {
    pub horizon: usize,
    pub q: usize,
    /// `(k, j, coefficients, rhs)`: `Σ_c λ_row[k]_c G(c, j) = (H_row Φ[k])_j`
    pub equalities: Vec<(usize, usize, Vec<(usize, f64)>, f64)>,
    /// every variable is nonnegative
    pub nonneg: Vec<usize>,
    /// `Σ_k λ_row[k] g ≤ h_i`
    pub budget: (Vec<(usize, f64)>, f64),
}

pub fn dualize_row(
    h_row: &DVector<f64>,
    h_i: f64,
    phi: &FirResponse,
    g_mat: &DMatrix<f64>,
    g: &DVector<f64>,
) -> Result<RowDualization> {
    let (n, m) = (phi.n(), phi.m());
    if h_row.len() != n + m || g_mat.ncols() != n || g.len() != g_mat.nrows() {
        return Err(Error::Dimension("row, response and disturbance set disagree".into()));
    }
    let q = g.len();
    let horizon = phi.horizon();
    let mut equalities = Vec::new();
    for k in 0..horizon {
        let coeff = h_row.transpose() * phi.stacked(k);
        for j in 0..n {
            let row: Vec<(usize, f64)> = (0..q)
                .filter(|&c| g_mat[(c, j)] != 0.0)
                .map(|c| (k * q + c, g_mat[(c, j)]))
                .collect();
            equalities.push((k, j, row, coeff[j]));
        }
    }
    let budget = ((0..horizon * q).map(|v| (v, g[v % q])).collect(), h_i);
    Ok(RowDualization {
        horizon,
        q,
        equalities,
        nonneg: (0..horizon * q).collect(),
        budget,
    })
}

impl RowDualization {
    /// LP `min Σ λ g` over the link equalities and `λ ≥ 0`; its optimal value
    /// is the row's worst case over the disturbance set.
    pub fn min_budget_program(&self) -> Result<ConvexProgram> {
        let mut b = ProgramBuilder::new(self.horizon * self.q);
        for (_, _, row, rhs) in &self.equalities {
            b.add_equality(row, *rhs);
        }
        for &v in &self.nonneg {
            b.nonneg(v);
        }
        for &(v, gv) in &self.budget.0 {
            b.add_linear(v, gv);
        }
        b.build()
    }

    /// Solve for the smallest certified budget and compare it with `h_i`.
    /// Returns the minimizing multipliers, or `None` when the link equalities
    /// alone are unsatisfiable.
    pub fn solve(&self, tol: f64) -> Result<Option<(Vec<f64>, f64)>> {
        let res = qp::solve(&self.min_budget_program()?, tol, 200_000);
        match res.status {
            SolveStatus::Optimal => {
                let value = self.budget.0.iter().map(|&(v, g)| res.x[v] * g).sum();
                Ok(Some((res.x, value)))
            }
            SolveStatus::Infeasible => Ok(None),
            SolveStatus::Unbounded => Err(Error::Unbounded("row budget LP".into())),
            SolveStatus::MaxIter => Err(Error::Invalid("row budget LP did not converge".into())),
        }
    }

    /// Whether the emitted constraint set is satisfiable.
    pub fn is_satisfiable(&self, tol: f64) -> Result<bool> {
        Ok(self.solve(tol)?.is_some_and(|(_, v)| v <= self.budget.1 + tol))
    }
}

#[derive(Serialize, Deserialize)]
struct CertJson {
    lambda: Vec<Vec<Vec<f64>>>,
    sigma: Vec<f64>,
}

impl TryFrom<CertJson> for DualCertificate {
    type Error = Error;

    fn try_from(j: CertJson) -> Result<Self> {
        let lambda = j
            .lambda
            .iter()
            .map(|l| from_rows(l, 0, "lambda"))
            .collect::<Result<Vec<_>>>()?;
        if lambda.iter().any(|l| l.nrows() != j.sigma.len()) {
            return Err(Error::Dimension("lambda rows must match sigma length".into()));
        }
        Ok(Self {
            lambda,
            sigma: DVector::from_vec(j.sigma),
        })
    }
}

impl From<DualCertificate> for CertJson {
    fn from(c: DualCertificate) -> Self {
        CertJson {
            lambda: c.lambda.iter().map(to_rows).collect(),
            sigma: c.sigma.iter().copied().collect(),
        }
    }
}
