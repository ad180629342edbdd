use super::csc::CscMatrix;
use super::ldl::Ldl;
use super::{
    dot, inf_norm, kkt_check, ConvexProgram, Duals, InfeasibilityCertificate, KktResiduals, Settings,
    SolveResult, SolveStatus,
};
use crate::error::Result;

/// Equality rows get a larger penalty than inequality rows.
const EQ_RHO_FACTOR: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
/// Regularization of the polishing system; removed by iterative refinement.
const POLISH_DELTA: f64 = 1e-7;
const POLISH_REFINE_STEPS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq)]
enum RowKind {
    Eq(usize),
    Ineq(usize),
    NonNeg(usize),
}

/// A reusable ADMM solver. The KKT factorization and the last iterate are
/// kept between calls, so re-solving after [`QpSolver::set_linear_cost`] or
/// [`QpSolver::set_rhs`] warm-starts from the previous solution.
pub struct QpSolver {
    prog: ConvexProgram,
    settings: Settings,
    a: CscMatrix,
    at: CscMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    kinds: Vec<RowKind>,
    empty_eq: Vec<usize>,
    empty_ineq: Vec<usize>,
    kkt: CscMatrix,
    rho_diag_pos: Vec<usize>,
    ldl: Ldl,
    rho: f64,
    r: Vec<f64>,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
}

impl QpSolver {
    pub fn new(prog: ConvexProgram, settings: Settings) -> Result<Self> {
        let n = prog.n;
        let eq_t = prog.eq.transpose();
        let ineq_t = prog.ineq.transpose();

        let mut kinds = Vec::new();
        let mut trip = Vec::new();
        let mut empty_eq = Vec::new();
        let mut empty_ineq = Vec::new();
        for r in 0..prog.eq.nrows() {
            let row = kinds.len();
            let mut any = false;
            for (j, v) in eq_t.col(r) {
                trip.push((row, j, v));
                any = true;
            }
            if any {
                kinds.push(RowKind::Eq(r));
            } else {
                empty_eq.push(r);
            }
        }
        for r in 0..prog.ineq.nrows() {
            let row = kinds.len();
            let mut any = false;
            for (j, v) in ineq_t.col(r) {
                trip.push((row, j, v));
                any = true;
            }
            if any {
                kinds.push(RowKind::Ineq(r));
            } else {
                empty_ineq.push(r);
            }
        }
        for &i in &prog.nonneg {
            trip.push((kinds.len(), i, 1.0));
            kinds.push(RowKind::NonNeg(i));
        }
        let m = kinds.len();
        let a = CscMatrix::from_triplets(m, n, &trip);
        let at = a.transpose();

        let rho = settings.rho;
        let r: Vec<f64> = kinds.iter().map(|k| row_rho(*k, rho)).collect();

        let mut kt: Vec<(usize, usize, f64)> = prog.q.upper_triangle().triplets();
        kt.extend((0..n).map(|i| (i, i, settings.sigma)));
        for i in 0..m {
            kt.extend(at.col(i).map(|(j, v)| (j, n + i, v)));
            kt.push((n + i, n + i, -1.0 / r[i]));
        }
        let kkt = CscMatrix::from_triplets(n + m, n + m, &kt);
        // the diagonal is the last entry of each constraint column
        let rho_diag_pos: Vec<usize> = (0..m).map(|i| kkt.colptr()[n + i + 1] - 1).collect();
        let ldl = Ldl::new(&kkt)?;

        let mut solver = Self {
            l: vec![0.0; m],
            u: vec![0.0; m],
            prog,
            settings,
            a,
            at,
            kinds,
            empty_eq,
            empty_ineq,
            kkt,
            rho_diag_pos,
            ldl,
            rho,
            r,
            x: vec![0.0; n],
            z: vec![0.0; m],
            y: vec![0.0; m],
        };
        solver.refresh_bounds();
        Ok(solver)
    }

    fn refresh_bounds(&mut self) {
        for (i, k) in self.kinds.iter().enumerate() {
            let (l, u) = match *k {
                RowKind::Eq(r) => (self.prog.eq_rhs[r], self.prog.eq_rhs[r]),
                RowKind::Ineq(r) => (f64::NEG_INFINITY, self.prog.ineq_rhs[r]),
                RowKind::NonNeg(_) => (0.0, f64::INFINITY),
            };
            self.l[i] = l;
            self.u[i] = u;
        }
    }

    pub fn program(&self) -> &ConvexProgram {
        &self.prog
    }

    pub fn set_linear_cost(&mut self, c: Vec<f64>) -> Result<()> {
        self.prog.set_linear_cost(c)
    }

    pub fn set_rhs(&mut self, eq_rhs: Vec<f64>, ineq_rhs: Vec<f64>) -> Result<()> {
        self.prog.set_rhs(eq_rhs, ineq_rhs)?;
        self.refresh_bounds();
        Ok(())
    }

    /// Use `x` as the initial primal point of the next solve.
    pub fn warm_start(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.x.len());
        self.x.copy_from_slice(x);
        let ax = self.a.mul_vec(&self.x);
        for i in 0..ax.len() {
            self.z[i] = ax[i].clamp(self.l[i], self.u[i]);
        }
    }

    fn set_rho(&mut self, rho: f64) -> Result<()> {
        self.rho = rho;
        let mut vals = self.kkt.values().to_vec();
        for (i, k) in self.kinds.iter().enumerate() {
            self.r[i] = row_rho(*k, rho);
            vals[self.rho_diag_pos[i]] = -1.0 / self.r[i];
        }
        self.ldl.refactor(&vals)
    }

    fn presolve_infeasible(&self) -> Option<InfeasibilityCertificate> {
        let tol = self.settings.tol;
        let bad_eq = self.empty_eq.iter().find(|&&r| self.prog.eq_rhs[r].abs() > tol);
        let bad_ineq = self.empty_ineq.iter().find(|&&r| self.prog.ineq_rhs[r] < -tol);
        if bad_eq.is_none() && bad_ineq.is_none() {
            return None;
        }
        let mut cert = InfeasibilityCertificate {
            eq: vec![0.0; self.prog.eq_rhs.len()],
            ineq: vec![0.0; self.prog.ineq_rhs.len()],
            nonneg: vec![0.0; self.prog.n],
        };
        if let Some(&r) = bad_eq {
            cert.eq[r] = self.prog.eq_rhs[r].signum();
        } else if let Some(&r) = bad_ineq {
            cert.ineq[r] = 1.0;
        }
        Some(cert)
    }

    fn duals_from(&self, y: &[f64]) -> Duals {
        let mut d = Duals {
            eq: vec![0.0; self.prog.eq_rhs.len()],
            nonneg: vec![0.0; self.prog.n],
            ineq: vec![0.0; self.prog.ineq_rhs.len()],
        };
        for (i, k) in self.kinds.iter().enumerate() {
            match *k {
                RowKind::Eq(r) => d.eq[r] = y[i],
                RowKind::Ineq(r) => d.ineq[r] = y[i],
                RowKind::NonNeg(j) => d.nonneg[j] = -y[i],
            }
        }
        d
    }

    fn certificate_from(&self, dy: &[f64]) -> InfeasibilityCertificate {
        let d = self.duals_from(dy);
        InfeasibilityCertificate {
            eq: d.eq,
            ineq: d.ineq,
            nonneg: d.nonneg.iter().map(|v| -v).collect(),
        }
    }

    fn finish(&self, x: Vec<f64>, y: &[f64], status: SolveStatus, iterations: usize, polished: bool) -> SolveResult {
        let duals = self.duals_from(y);
        let kkt = kkt_check(&self.prog, &x, &duals).unwrap_or(KktResiduals {
            stationarity: f64::INFINITY,
            primal: f64::INFINITY,
            complementarity: f64::INFINITY,
        });
        let objective = self.prog.objective(&x);
        SolveResult {
            x,
            duals,
            status,
            kkt,
            iterations,
            objective,
            polished,
            certificate: None,
        }
    }

    pub fn solve(&mut self) -> SolveResult {
        let n = self.prog.n;
        let m = self.kinds.len();
        let tol = self.settings.tol;
        let alpha = self.settings.alpha;
        let sigma = self.settings.sigma;
        let eps_inf = self.settings.eps_infeasible;

        if let Some(cert) = self.presolve_infeasible() {
            let mut res = self.finish(self.x.clone(), &vec![0.0; m], SolveStatus::Infeasible, 0, false);
            res.certificate = Some(cert);
            return res;
        }

        // keep z consistent with the current bounds
        for i in 0..m {
            self.z[i] = self.z[i].clamp(self.l[i], self.u[i]);
        }

        let mut rhs = vec![0.0; n + m];
        let mut polish_threshold = 1e-4f64;
        let mut x_prev = self.x.clone();
        let mut y_prev = self.y.clone();

        for iter in 1..=self.settings.max_iter {
            x_prev.copy_from_slice(&self.x);
            y_prev.copy_from_slice(&self.y);

            for i in 0..n {
                rhs[i] = sigma * self.x[i] - self.prog.c[i];
            }
            for i in 0..m {
                rhs[n + i] = self.z[i] - self.y[i] / self.r[i];
            }
            self.ldl.solve_in_place(&mut rhs);
            for i in 0..n {
                self.x[i] = alpha * rhs[i] + (1.0 - alpha) * self.x[i];
            }
            for i in 0..m {
                let zt = self.z[i] + (rhs[n + i] - self.y[i]) / self.r[i];
                let zrel = alpha * zt + (1.0 - alpha) * self.z[i];
                let znew = (zrel + self.y[i] / self.r[i]).clamp(self.l[i], self.u[i]);
                self.y[i] += self.r[i] * (zrel - znew);
                self.z[i] = znew;
            }

            if iter % self.settings.check_interval != 0 && iter != 1 {
                continue;
            }

            let ax = self.a.mul_vec(&self.x);
            let qx = self.prog.q.mul_vec(&self.x);
            let aty = self.at.mul_vec(&self.y);
            let r_prim = ax.iter().zip(&self.z).fold(0.0f64, |acc, (a, z)| acc.max((a - z).abs()));
            let r_dual = (0..n).fold(0.0f64, |acc, i| acc.max((qx[i] + self.prog.c[i] + aty[i]).abs()));
            let scale_prim = inf_norm(&ax).max(inf_norm(&self.z));
            let scale_dual = inf_norm(&qx).max(inf_norm(&aty)).max(inf_norm(&self.prog.c));

            if r_prim <= tol && r_dual <= tol {
                let res = self.finish(self.x.clone(), &self.y.clone(), SolveStatus::Optimal, iter, false);
                if res.kkt.max() <= tol {
                    return res;
                }
            }
            if self.settings.polish
                && r_prim <= polish_threshold * (1.0 + scale_prim)
                && r_dual <= polish_threshold * (1.0 + scale_dual)
            {
                if let Some((xp, yp)) = self.polish() {
                    let res = self.finish(xp, &yp, SolveStatus::Optimal, iter, true);
                    if res.kkt.max() <= tol {
                        self.adopt(&res.x, yp);
                        return res;
                    }
                }
                polish_threshold = (polish_threshold * 0.1).max(tol);
            }

            // primal infeasibility certificate from successive dual iterates
            let mut dy: Vec<f64> = self.y.iter().zip(&y_prev).map(|(a, b)| a - b).collect();
            for i in 0..m {
                if self.u[i] == f64::INFINITY {
                    dy[i] = dy[i].min(0.0);
                }
                if self.l[i] == f64::NEG_INFINITY {
                    dy[i] = dy[i].max(0.0);
                }
            }
            let dy_norm = inf_norm(&dy);
            if dy_norm > 1e-20 {
                let atdy = self.at.mul_vec(&dy);
                let support: f64 = (0..m)
                    .map(|i| {
                        if dy[i] > 0.0 {
                            self.u[i] * dy[i]
                        } else if dy[i] < 0.0 {
                            self.l[i] * dy[i]
                        } else {
                            0.0
                        }
                    })
                    .sum();
                if inf_norm(&atdy) <= eps_inf * dy_norm && support <= -eps_inf * dy_norm {
                    let cert = self.certificate_from(&dy);
                    let mut res = self.finish(self.x.clone(), &self.y.clone(), SolveStatus::Infeasible, iter, false);
                    res.certificate = Some(cert);
                    return res;
                }
            }

            // dual infeasibility certificate from successive primal iterates
            let dx: Vec<f64> = self.x.iter().zip(&x_prev).map(|(a, b)| a - b).collect();
            let dx_norm = inf_norm(&dx);
            if dx_norm > 1e-20 {
                let qdx = self.prog.q.mul_vec(&dx);
                let adx = self.a.mul_vec(&dx);
                let cdx = dot(&self.prog.c, &dx);
                let bound = eps_inf * dx_norm;
                let recession_ok = (0..m).all(|i| {
                    let (lf, uf) = (self.l[i].is_finite(), self.u[i].is_finite());
                    match (lf, uf) {
                        (true, true) => adx[i].abs() <= bound,
                        (true, false) => adx[i] >= -bound,
                        (false, true) => adx[i] <= bound,
                        (false, false) => true,
                    }
                });
                if inf_norm(&qdx) <= bound && cdx <= -bound && recession_ok {
                    return self.finish(self.x.clone(), &self.y.clone(), SolveStatus::Unbounded, iter, false);
                }
            }

            if self.settings.adaptive_rho && m > 0 {
                let num = r_prim / scale_prim.max(1e-10);
                let den = r_dual / scale_dual.max(1e-10);
                if num > 0.0 && den > 0.0 {
                    let new_rho = (self.rho * (num / den).sqrt()).clamp(RHO_MIN, RHO_MAX);
                    if (new_rho > 5.0 * self.rho || new_rho < 0.2 * self.rho) && self.set_rho(new_rho).is_err() {
                        log::warn!("refactorization failed at rho={new_rho}; keeping previous factor");
                    }
                }
            }
        }

        if self.settings.polish {
            if let Some((xp, yp)) = self.polish() {
                let res = self.finish(xp, &yp, SolveStatus::Optimal, self.settings.max_iter, true);
                if res.kkt.max() <= tol {
                    return res;
                }
            }
        }
        self.finish(self.x.clone(), &self.y.clone(), SolveStatus::MaxIter, self.settings.max_iter, false)
    }

    fn adopt(&mut self, x: &[f64], y: Vec<f64>) {
        self.warm_start(x);
        self.y = y;
    }

    /// Guess the active set from the current iterate and solve the reduced
    /// equality-constrained KKT system.
    fn polish(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.prog.n;
        let m = self.kinds.len();
        let mut active = Vec::new();
        let mut b = Vec::new();
        for i in 0..m {
            if self.l[i] == self.u[i] {
                active.push(i);
                b.push(self.l[i]);
            } else if self.z[i] - self.l[i] < -self.y[i] {
                active.push(i);
                b.push(self.l[i]);
            } else if self.u[i] - self.z[i] < self.y[i] {
                active.push(i);
                b.push(self.u[i]);
            }
        }
        let na = active.len();
        let dim = n + na;

        let q_upper = self.prog.q.upper_triangle().triplets();
        let mut exact: Vec<(usize, usize, f64)> = q_upper.clone();
        for (k, &i) in active.iter().enumerate() {
            exact.extend(self.at.col(i).map(|(j, v)| (j, n + k, v)));
        }
        let mut reg = exact.clone();
        reg.extend((0..n).map(|i| (i, i, POLISH_DELTA)));
        reg.extend((0..na).map(|k| (n + k, n + k, -POLISH_DELTA)));
        let reg = CscMatrix::from_triplets(dim, dim, &reg);
        let ldl = Ldl::new(&reg).ok()?;

        // full symmetric unregularized matrix for residuals
        let mut full = Vec::with_capacity(2 * exact.len());
        for &(i, j, v) in &exact {
            full.push((i, j, v));
            if i != j {
                full.push((j, i, v));
            }
        }
        let k_full = CscMatrix::from_triplets(dim, dim, &full);

        let mut rhs = vec![0.0; dim];
        for i in 0..n {
            rhs[i] = -self.prog.c[i];
        }
        rhs[n..].copy_from_slice(&b);
        let rhs_norm = inf_norm(&rhs).max(1.0);

        let mut sol = rhs.clone();
        ldl.solve_in_place(&mut sol);
        for _ in 0..POLISH_REFINE_STEPS {
            let ks = k_full.mul_vec(&sol);
            let mut res: Vec<f64> = rhs.iter().zip(&ks).map(|(a, b)| a - b).collect();
            if inf_norm(&res) <= 1e-14 * rhs_norm {
                break;
            }
            ldl.solve_in_place(&mut res);
            for (s, d) in sol.iter_mut().zip(&res) {
                *s += d;
            }
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let x = sol[..n].to_vec();
        let mut y = vec![0.0; m];
        for (k, &i) in active.iter().enumerate() {
            y[i] = sol[n + k];
        }
        Some((x, y))
    }
}

fn row_rho(kind: RowKind, rho: f64) -> f64 {
    match kind {
        RowKind::Eq(_) => EQ_RHO_FACTOR * rho,
        _ => rho,
    }
}
