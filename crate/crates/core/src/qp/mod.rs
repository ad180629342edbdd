//! Sparse convex quadratic programming.
//!
//! Programs have the form
//!
//! ```text
//! minimize    ½ xᵀQx + cᵀx
//! subject to  E x  = f
//!             M x ≤ v
//!             x_i ≥ 0   for i in the nonnegative index set
//! ```
//!
//! and are solved by an operator-splitting (ADMM) method over the stacked
//! constraint matrix, followed by an active-set polishing step that recovers
//! high-accuracy primal and dual solutions.

mod admm;
pub mod csc;
pub mod ldl;

use std::io::Write;

pub use admm::QpSolver;
pub use csc::CscMatrix;

use crate::error::{Error, Result};

/// A validated convex program. Construct it with [`ProgramBuilder`].
#[derive(Clone, Debug)]
pub struct ConvexProgram {
    n: usize,
    /// full symmetric quadratic term
    q: CscMatrix,
    c: Vec<f64>,
    eq: CscMatrix,
    eq_rhs: Vec<f64>,
    ineq: CscMatrix,
    ineq_rhs: Vec<f64>,
    nonneg: Vec<usize>,
}

impl ConvexProgram {
    pub fn new(
        q: CscMatrix,
        c: Vec<f64>,
        eq: CscMatrix,
        eq_rhs: Vec<f64>,
        ineq: CscMatrix,
        ineq_rhs: Vec<f64>,
        mut nonneg: Vec<usize>,
    ) -> Result<Self> {
        let n = c.len();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::Dimension(format!("Q is {}x{}, expected {n}x{n}", q.nrows(), q.ncols())));
        }
        if eq.ncols() != n || eq.nrows() != eq_rhs.len() {
            return Err(Error::Dimension("equality block does not match variables or rhs".into()));
        }
        if ineq.ncols() != n || ineq.nrows() != ineq_rhs.len() {
            return Err(Error::Dimension("inequality block does not match variables or rhs".into()));
        }
        nonneg.sort_unstable();
        nonneg.dedup();
        if nonneg.last().is_some_and(|&i| i >= n) {
            return Err(Error::Dimension("nonnegative index out of range".into()));
        }
        if !q.is_symmetric(1e-12) {
            return Err(Error::NotPsd);
        }
        check_psd(&q)?;
        Ok(Self {
            n,
            q,
            c,
            eq,
            eq_rhs,
            ineq,
            ineq_rhs,
            nonneg,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> &CscMatrix {
        &self.q
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn eq(&self) -> &CscMatrix {
        &self.eq
    }

    pub fn eq_rhs(&self) -> &[f64] {
        &self.eq_rhs
    }

    pub fn ineq(&self) -> &CscMatrix {
        &self.ineq
    }

    pub fn ineq_rhs(&self) -> &[f64] {
        &self.ineq_rhs
    }

    pub fn nonneg(&self) -> &[usize] {
        &self.nonneg
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let qx = self.q.mul_vec(x);
        0.5 * dot(x, &qx) + dot(&self.c, x)
    }

    /// Replace the linear cost.
    pub fn set_linear_cost(&mut self, c: Vec<f64>) -> Result<()> {
        if c.len() != self.n {
            return Err(Error::Dimension("linear cost length".into()));
        }
        self.c = c;
        Ok(())
    }

    /// Replace the right-hand sides of the equality and inequality blocks.
    pub fn set_rhs(&mut self, eq_rhs: Vec<f64>, ineq_rhs: Vec<f64>) -> Result<()> {
        if eq_rhs.len() != self.eq_rhs.len() || ineq_rhs.len() != self.ineq_rhs.len() {
            return Err(Error::Dimension("rhs length".into()));
        }
        self.eq_rhs = eq_rhs;
        self.ineq_rhs = ineq_rhs;
        Ok(())
    }

    /// Multiply the cost `(Q, c)` by a positive scalar.
    pub fn scale_cost(&mut self, s: f64) {
        self.q.scale(s);
        self.c.iter_mut().for_each(|v| *v *= s);
    }

    /// Write the program as text, one constraint per line, for cross-checking
    /// with external solvers.
    pub fn write_debug<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# vars {}", self.n)?;
        for (i, j, v) in self.q.triplets() {
            if i <= j {
                writeln!(w, "Q {i} {j} {v:e}")?;
            }
        }
        for (i, v) in self.c.iter().enumerate() {
            if *v != 0.0 {
                writeln!(w, "c {i} {v:e}")?;
            }
        }
        write_rows(&mut w, "eq", &self.eq, &self.eq_rhs)?;
        write_rows(&mut w, "le", &self.ineq, &self.ineq_rhs)?;
        for i in &self.nonneg {
            writeln!(w, "ge0 {i}")?;
        }
        Ok(())
    }
}

fn write_rows<W: Write>(w: &mut W, tag: &str, m: &CscMatrix, rhs: &[f64]) -> std::io::Result<()> {
    let mt = m.transpose();
    for (r, b) in rhs.iter().enumerate() {
        write!(w, "{tag}")?;
        for (j, v) in mt.col(r) {
            write!(w, " {j}:{v:e}")?;
        }
        writeln!(w, " | {b:e}")?;
    }
    Ok(())
}

fn check_psd(q: &CscMatrix) -> Result<()> {
    if q.is_diagonal() {
        return if q.diagonal().iter().all(|&d| d >= 0.0) {
            Ok(())
        } else {
            Err(Error::NotPsd)
        };
    }
    let n = q.ncols();
    let scale = q.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let shift = 1e-9 * scale;
    let mut t = q.upper_triangle().triplets();
    t.extend((0..n).map(|i| (i, i, shift)));
    let shifted = CscMatrix::from_triplets(n, n, &t);
    match ldl::Ldl::new(&shifted) {
        Ok(f) if f.d().iter().all(|&d| d > 0.0) => Ok(()),
        _ => Err(Error::NotPsd),
    }
}

/// Incremental construction of a [`ConvexProgram`].
#[derive(Clone, Debug, Default)]
pub struct ProgramBuilder {
    n: usize,
    q: Vec<(usize, usize, f64)>,
    c: Vec<f64>,
    eq: Vec<(usize, usize, f64)>,
    eq_rhs: Vec<f64>,
    ineq: Vec<(usize, usize, f64)>,
    ineq_rhs: Vec<f64>,
    nonneg: Vec<usize>,
}

impl ProgramBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            c: vec![0.0; n],
            ..Default::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    /// Add `v` to `Q[i,j]` and, for `i != j`, to `Q[j,i]`.
    pub fn add_quadratic(&mut self, i: usize, j: usize, v: f64) -> &mut Self {
        self.q.push((i, j, v));
        if i != j {
            self.q.push((j, i, v));
        }
        self
    }

    pub fn add_linear(&mut self, i: usize, v: f64) -> &mut Self {
        self.c[i] += v;
        self
    }

    /// Append `Σ coeffs = rhs`; returns the row index.
    pub fn add_equality(&mut self, coeffs: &[(usize, f64)], rhs: f64) -> usize {
        let r = self.eq_rhs.len();
        self.eq.extend(coeffs.iter().map(|&(j, v)| (r, j, v)));
        self.eq_rhs.push(rhs);
        r
    }

    /// Append `Σ coeffs ≤ rhs`; returns the row index.
    pub fn add_inequality(&mut self, coeffs: &[(usize, f64)], rhs: f64) -> usize {
        let r = self.ineq_rhs.len();
        self.ineq.extend(coeffs.iter().map(|&(j, v)| (r, j, v)));
        self.ineq_rhs.push(rhs);
        r
    }

    pub fn nonneg(&mut self, i: usize) -> &mut Self {
        self.nonneg.push(i);
        self
    }

    pub fn build(self) -> Result<ConvexProgram> {
        let n = self.n;
        let out_of_range = |t: &[(usize, usize, f64)]| t.iter().any(|&(_, j, _)| j >= n);
        if out_of_range(&self.eq) || out_of_range(&self.ineq) || self.q.iter().any(|&(i, j, _)| i >= n || j >= n) {
            return Err(Error::Dimension("variable index out of range".into()));
        }
        ConvexProgram::new(
            CscMatrix::from_triplets(n, n, &self.q),
            self.c,
            CscMatrix::from_triplets(self.eq_rhs.len(), n, &self.eq),
            self.eq_rhs,
            CscMatrix::from_triplets(self.ineq_rhs.len(), n, &self.ineq),
            self.ineq_rhs,
            self.nonneg,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// A primal infeasibility certificate was found.
    Infeasible,
    /// A dual infeasibility certificate was found (objective unbounded below).
    Unbounded,
    MaxIter,
}

/// Multipliers in the sign convention
/// `Qx + c + Eᵀy − μ + Mᵀν = 0`, `μ ≥ 0`, `ν ≥ 0`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Duals {
    pub eq: Vec<f64>,
    /// one entry per variable; zero outside the nonnegative set
    pub nonneg: Vec<f64>,
    pub ineq: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

/// Farkas-type certificate: multipliers `δy ≠ 0` with `Aᵀδy ≈ 0` and a
/// strictly negative support value, split by constraint block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InfeasibilityCertificate {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub nonneg: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub duals: Duals,
    pub status: SolveStatus,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub objective: f64,
    pub polished: bool,
    pub certificate: Option<InfeasibilityCertificate>,
}

#[derive(Clone, Debug)]
pub struct Settings {
    pub tol: f64,
    pub max_iter: usize,
    /// over-relaxation parameter
    pub alpha: f64,
    pub rho: f64,
    pub sigma: f64,
    pub adaptive_rho: bool,
    pub polish: bool,
    /// relative tolerance of the infeasibility certificates
    pub eps_infeasible: f64,
    pub check_interval: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200_000,
            alpha: 1.6,
            rho: 0.1,
            sigma: 1e-6,
            adaptive_rho: true,
            polish: true,
            eps_infeasible: 1e-5,
            check_interval: 25,
        }
    }
}

/// Solve a program from a cold start.
pub fn solve(prog: &ConvexProgram, tol: f64, max_iter: usize) -> SolveResult {
    let settings = Settings {
        tol,
        max_iter,
        ..Settings::default()
    };
    solve_with(prog, &settings)
}

pub fn solve_with(prog: &ConvexProgram, settings: &Settings) -> SolveResult {
    match QpSolver::new(prog.clone(), settings.clone()) {
        Ok(mut s) => s.solve(),
        Err(e) => {
            // the KKT matrix is quasi-definite by construction; a failed
            // factorization means non-finite data
            log::error!("KKT factorization failed: {e}");
            SolveResult {
                x: vec![0.0; prog.n],
                duals: Duals::default(),
                status: SolveStatus::MaxIter,
                kkt: KktResiduals {
                    stationarity: f64::INFINITY,
                    primal: f64::INFINITY,
                    complementarity: f64::INFINITY,
                },
                iterations: 0,
                objective: f64::NAN,
                polished: false,
                certificate: None,
            }
        }
    }
}

/// Stationarity, primal feasibility and complementarity residuals
/// (infinity norms) of a candidate primal-dual pair. Negative multipliers
/// count toward stationarity.
pub fn kkt_check(prog: &ConvexProgram, x: &[f64], duals: &Duals) -> Result<KktResiduals> {
    let n = prog.n;
    if x.len() != n
        || duals.eq.len() != prog.eq_rhs.len()
        || duals.ineq.len() != prog.ineq_rhs.len()
        || duals.nonneg.len() != n
    {
        return Err(Error::Dimension("kkt_check: vector lengths".into()));
    }
    let mut grad = prog.q.mul_vec(x);
    for (g, c) in grad.iter_mut().zip(&prog.c) {
        *g += c;
    }
    let ety = prog.eq.tmul_vec(&duals.eq);
    let mtv = prog.ineq.tmul_vec(&duals.ineq);
    for i in 0..n {
        grad[i] += ety[i] + mtv[i] - duals.nonneg[i];
    }
    let mut in_set = vec![false; n];
    for &i in &prog.nonneg {
        in_set[i] = true;
    }
    let mut stationarity = inf_norm(&grad);
    for i in 0..n {
        if !in_set[i] {
            stationarity = stationarity.max(duals.nonneg[i].abs());
        } else {
            stationarity = stationarity.max((-duals.nonneg[i]).max(0.0));
        }
    }
    stationarity = duals.ineq.iter().fold(stationarity, |m, &v| m.max((-v).max(0.0)));

    let ex = prog.eq.mul_vec(x);
    let mx = prog.ineq.mul_vec(x);
    let mut primal = ex.iter().zip(&prog.eq_rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    primal = mx.iter().zip(&prog.ineq_rhs).fold(primal, |m, (a, b)| m.max(a - b));
    primal = prog.nonneg.iter().fold(primal, |m, &i| m.max(-x[i]));

    let mut complementarity = prog.nonneg.iter().fold(0.0f64, |m, &i| m.max((duals.nonneg[i] * x[i]).abs()));
    complementarity = mx
        .iter()
        .zip(&prog.ineq_rhs)
        .zip(&duals.ineq)
        .fold(complementarity, |m, ((a, b), v)| m.max((v * (a - b)).abs()));

    Ok(KktResiduals {
        stationarity,
        primal,
        complementarity,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
