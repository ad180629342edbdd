//! Assembly of the SLS quadratic program over a subset of Φ columns.
//!
//! The affine and link constraints separate by Φ column, so the same
//! assembler produces the centralized program (all columns, with budget rows)
//! and the per-patch programs of the distributed iteration (owned columns,
//! budget rows left to the dual).

use nalgebra::{DMatrix, DVector};

use super::dual::DualCertificate;
use super::spec::RobustSpec;
use crate::error::{Error, Result};
use crate::lti::{FirResponse, LinearSystem, SupportMask};
use crate::qp::{ConvexProgram, ProgramBuilder};

pub(crate) const NONE: usize = usize::MAX;

/// Diagonal weights of the H2 objective
/// `Σ_k Σ_{i,j} qx_i Φx[k](i,j)² + Σ_k Σ_{a,j} ru_a Φu[k](a,j)²`.
#[derive(Clone, Debug, PartialEq)]
pub struct H2Weights {
    pub state: DVector<f64>,
    pub input: DVector<f64>,
}

impl H2Weights {
    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            state: DVector::from_element(n, 1.0),
            input: DVector::from_element(m, 1.0),
        }
    }

    /// Weighted H2 cost of a response.
    pub fn cost(&self, phi: &FirResponse) -> f64 {
        let x: f64 = phi
            .phi_x()
            .iter()
            .map(|t| t.row_iter().zip(self.state.iter()).map(|(r, w)| w * r.norm_squared()).sum::<f64>())
            .sum();
        let u: f64 = phi
            .phi_u()
            .iter()
            .map(|t| t.row_iter().zip(self.input.iter()).map(|(r, w)| w * r.norm_squared()).sum::<f64>())
            .sum();
        x + u
    }

    pub(crate) fn check(&self, n: usize, m: usize) -> Result<()> {
        if self.state.len() != n || self.input.len() != m {
            return Err(Error::Dimension("H2 weights do not match the system".into()));
        }
        if self.state.iter().chain(self.input.iter()).any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Invalid("H2 weights must be positive".into()));
        }
        Ok(())
    }
}

/// Which pieces of the program to assemble.
pub(crate) struct Scope<'a> {
    pub cols: &'a [usize],
    /// columns of Λ (disturbance rows) whose multipliers are variables
    pub lambda_cols: &'a [usize],
    /// `None` drops the robust constraints entirely (plain localized SLS)
    pub spec: Option<&'a RobustSpec>,
    pub pattern: Option<&'a [DMatrix<bool>]>,
    pub budget_rows: bool,
}

/// Variable indices of an assembled program.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub px: Vec<DMatrix<usize>>,
    pub pu: Vec<DMatrix<usize>>,
    pub lam: Vec<DMatrix<usize>>,
    /// inequality row of each budget constraint
    pub budget_row: Vec<usize>,
    pub num_vars: usize,
    /// cost contribution of the fixed `Φx[1] = I`
    pub constant: f64,
}

pub(crate) struct SlsProgram {
    pub program: ConvexProgram,
    pub layout: Layout,
}

pub(crate) fn assemble(
    sys: &LinearSystem,
    support: &SupportMask,
    weights: &H2Weights,
    scope: &Scope,
) -> Result<SlsProgram> {
    let (n, m) = (sys.n(), sys.m());
    let horizon = support.horizon();
    if support.n() != n || support.m() != m || horizon == 0 {
        return Err(Error::Dimension("support mask does not match the system".into()));
    }
    if !support.admits_identity() {
        return Err(Error::Invalid("locality mask excludes the diagonal of Φx[1]".into()));
    }
    weights.check(n, m)?;
    let (p, q) = scope.spec.map_or((0, 0), |s| (s.p(), s.q()));
    if let Some(spec) = scope.spec {
        if spec.n() != n || spec.m() != m {
            return Err(Error::Dimension("spec does not match the system".into()));
        }
        if spec.horizon() != horizon {
            return Err(Error::Dimension(format!(
                "spec horizon {} but support horizon {horizon}",
                spec.horizon()
            )));
        }
    }

    let mut nv = 0;
    let mut next = || {
        nv += 1;
        nv - 1
    };
    let mut px = vec![DMatrix::from_element(n, n, NONE); horizon];
    let mut pu = vec![DMatrix::from_element(m, n, NONE); horizon];
    for &j in scope.cols {
        for k in 0..horizon {
            if k > 0 {
                for i in 0..n {
                    if support.x_support[k][(i, j)] {
                        px[k][(i, j)] = next();
                    }
                }
            }
            for a in 0..m {
                if support.u_support[k][(a, j)] {
                    pu[k][(a, j)] = next();
                }
            }
        }
    }
    let mut lam = vec![DMatrix::from_element(p, q, NONE); horizon];
    if let Some(spec) = scope.spec {
        let g = spec.g_mat();
        for &c in scope.lambda_cols {
            if g.row(c).iter().all(|&v| v == 0.0) {
                continue;
            }
            for k in 0..horizon {
                for r in 0..p {
                    if scope.pattern.is_none_or(|pat| pat[k][(r, c)]) {
                        lam[k][(r, c)] = next();
                    }
                }
            }
        }
    }

    let mut b = ProgramBuilder::new(nv);
    let mut constant = 0.0;
    for &j in scope.cols {
        constant += weights.state[j];
        for k in 0..horizon {
            for i in 0..n {
                if px[k][(i, j)] != NONE {
                    b.add_quadratic(px[k][(i, j)], px[k][(i, j)], 2.0 * weights.state[i]);
                }
            }
            for a in 0..m {
                if pu[k][(a, j)] != NONE {
                    b.add_quadratic(pu[k][(a, j)], pu[k][(a, j)], 2.0 * weights.input[a]);
                }
            }
        }
    }

    let (a_mat, b_mat) = (sys.a(), sys.b());
    let mut row: Vec<(usize, f64)> = Vec::new();
    // Φx[k+1] = A Φx[k] + B Φu[k], and A Φx[T] + B Φu[T] = 0
    for &j in scope.cols {
        for k in 0..horizon {
            let last = k + 1 == horizon;
            for i in 0..n {
                row.clear();
                let sign = if last { 1.0 } else { -1.0 };
                let mut rhs = 0.0;
                if !last && px[k + 1][(i, j)] != NONE {
                    row.push((px[k + 1][(i, j)], 1.0));
                }
                if k == 0 {
                    rhs -= sign * a_mat[(i, j)];
                } else {
                    for s in 0..n {
                        if a_mat[(i, s)] != 0.0 && px[k][(s, j)] != NONE {
                            row.push((px[k][(s, j)], sign * a_mat[(i, s)]));
                        }
                    }
                }
                for a in 0..m {
                    if b_mat[(i, a)] != 0.0 && pu[k][(a, j)] != NONE {
                        row.push((pu[k][(a, j)], sign * b_mat[(i, a)]));
                    }
                }
                if !row.is_empty() || rhs != 0.0 {
                    b.add_equality(&row, rhs);
                }
            }
        }
    }

    let mut budget_row = vec![NONE; p];
    if let Some(spec) = scope.spec {
        let (h, g) = (spec.h_mat(), spec.g_mat());
        // H Φ[k] = Λ[k] G, column by column
        for &j in scope.cols {
            for k in 0..horizon {
                for r in 0..p {
                    row.clear();
                    let mut rhs = 0.0;
                    if k == 0 {
                        rhs -= h[(r, j)];
                    } else {
                        for s in 0..n {
                            if h[(r, s)] != 0.0 && px[k][(s, j)] != NONE {
                                row.push((px[k][(s, j)], h[(r, s)]));
                            }
                        }
                    }
                    for a in 0..m {
                        if h[(r, n + a)] != 0.0 && pu[k][(a, j)] != NONE {
                            row.push((pu[k][(a, j)], h[(r, n + a)]));
                        }
                    }
                    for c in 0..q {
                        if g[(c, j)] != 0.0 && lam[k][(r, c)] != NONE {
                            row.push((lam[k][(r, c)], -g[(c, j)]));
                        }
                    }
                    if !row.is_empty() || rhs != 0.0 {
                        b.add_equality(&row, rhs);
                    }
                }
            }
        }
        for k in 0..horizon {
            for v in lam[k].iter().filter(|&&v| v != NONE) {
                b.nonneg(*v);
            }
        }
        if scope.budget_rows {
            let gv = spec.g();
            for r in 0..p {
                row.clear();
                for k in 0..horizon {
                    for c in 0..q {
                        if lam[k][(r, c)] != NONE && gv[c] != 0.0 {
                            row.push((lam[k][(r, c)], gv[c]));
                        }
                    }
                }
                budget_row[r] = b.add_inequality(&row, spec.h()[r]);
            }
        }
    }

    Ok(SlsProgram {
        program: b.build()?,
        layout: Layout {
            px,
            pu,
            lam,
            budget_row,
            num_vars: nv,
            constant,
        },
    })
}

impl Layout {
    /// Write the owned columns of Φ and the owned multipliers from `x`.
    /// Multipliers are clamped at zero to remove solver round-off.
    pub fn scatter(&self, x: &[f64], phi: &mut FirResponse, cert: &mut DualCertificate) {
        for (k, idx) in self.px.iter().enumerate() {
            let target = &mut phi.phi_x_mut()[k];
            for (dst, &v) in target.iter_mut().zip(idx.iter()) {
                if v != NONE {
                    *dst = x[v];
                }
            }
        }
        for (k, idx) in self.pu.iter().enumerate() {
            let target = &mut phi.phi_u_mut()[k];
            for (dst, &v) in target.iter_mut().zip(idx.iter()) {
                if v != NONE {
                    *dst = x[v];
                }
            }
        }
        for (k, idx) in self.lam.iter().enumerate() {
            for (dst, &v) in cert.lambda[k].iter_mut().zip(idx.iter()) {
                if v != NONE {
                    *dst = x[v].max(0.0);
                }
            }
        }
    }

    /// Linear cost `Σ_{k,r,c} σ_r g_c Λ[k](r, c)` over the multipliers.
    pub fn dual_penalty(&self, sigma: &DVector<f64>, g: &DVector<f64>) -> Vec<f64> {
        let mut c = vec![0.0; self.num_vars];
        for idx in &self.lam {
            for r in 0..idx.nrows() {
                for col in 0..idx.ncols() {
                    let v = idx[(r, col)];
                    if v != NONE {
                        c[v] = sigma[r] * g[col];
                    }
                }
            }
        }
        c
    }
}
