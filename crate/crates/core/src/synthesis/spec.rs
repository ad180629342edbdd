use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{from_rows, to_rows, vec_from};
use crate::lti::Polytope;

/// Which signal a performance row constrains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundFamily {
    State,
    Input,
    Mixed,
    /// row of zeros
    Empty,
}

/// Disturbance set `{w | G w ≤ g}` per time step, performance constraints
/// `H [x; u] ≤ h` at every time step, and the FIR horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecJson", into = "SpecJson")]
pub struct RobustSpec {
    disturbance: Polytope,
    performance: Polytope,
    horizon: usize,
}

impl RobustSpec {
    pub fn new(disturbance: Polytope, performance: Polytope, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Invalid("horizon must be at least 1".into()));
        }
        let n = disturbance.dim();
        if performance.dim() < n {
            return Err(Error::Dimension(format!(
                "H has {} columns, fewer than the {n} disturbance coordinates",
                performance.dim()
            )));
        }
        if disturbance.q.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("g must be finite".into()));
        }
        Ok(Self {
            disturbance,
            performance,
            horizon,
        })
    }

    /// `|w_i| ≤ w_max_i`, `|x_i| ≤ x_max_i`, `|u_a| ≤ u_max_a`.
    ///
    /// Performance rows are ordered: state upper bounds, state lower bounds,
    /// input upper bounds, input lower bounds.
    pub fn from_box(w_max: &[f64], x_max: &[f64], u_max: &[f64], horizon: usize) -> Result<Self> {
        let n = x_max.len();
        let m = u_max.len();
        if w_max.len() != n {
            return Err(Error::Dimension(format!("w_max has {} entries, x_max has {n}", w_max.len())));
        }
        let g = Polytope::symmetric_box(w_max)?;
        let xb = Polytope::symmetric_box(x_max)?;
        let ub = Polytope::symmetric_box(u_max)?;
        let mut h_mat = DMatrix::zeros(2 * n + 2 * m, n + m);
        h_mat.view_mut((0, 0), (2 * n, n)).copy_from(&xb.p);
        h_mat.view_mut((2 * n, n), (2 * m, m)).copy_from(&ub.p);
        let h = DVector::from_iterator(2 * n + 2 * m, xb.q.iter().chain(ub.q.iter()).copied());
        Self::new(g, Polytope::new(h_mat, h)?, horizon)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.disturbance.dim()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.performance.dim() - self.n()
    }

    /// Number of performance rows.
    pub fn p(&self) -> usize {
        self.performance.rows()
    }

    /// Number of disturbance rows.
    pub fn q(&self) -> usize {
        self.disturbance.rows()
    }

    pub fn g_mat(&self) -> &DMatrix<f64> {
        &self.disturbance.p
    }

    pub fn g(&self) -> &DVector<f64> {
        &self.disturbance.q
    }

    pub fn h_mat(&self) -> &DMatrix<f64> {
        &self.performance.p
    }

    pub fn h(&self) -> &DVector<f64> {
        &self.performance.q
    }

    pub fn disturbance(&self) -> &Polytope {
        &self.disturbance
    }

    pub fn performance(&self) -> &Polytope {
        &self.performance
    }

    pub fn with_h(&self, h: DVector<f64>) -> Result<Self> {
        Self::new(
            self.disturbance.clone(),
            Polytope::new(self.performance.p.clone(), h)?,
            self.horizon,
        )
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Self::new(self.disturbance.clone(), self.performance.clone(), horizon)
    }

    pub fn row_family(&self, r: usize) -> BoundFamily {
        let n = self.n();
        let row = self.h_mat().row(r);
        let xs = row.iter().take(n).any(|&v| v != 0.0);
        let us = row.iter().skip(n).any(|&v| v != 0.0);
        match (xs, us) {
            (true, false) => BoundFamily::State,
            (false, true) => BoundFamily::Input,
            (true, true) => BoundFamily::Mixed,
            (false, false) => BoundFamily::Empty,
        }
    }

    /// Half-widths if the disturbance set is exactly `{|w_i| ≤ w_max_i}`
    /// in the row order produced by [`Polytope::symmetric_box`].
    pub fn box_half_widths(&self) -> Option<Vec<f64>> {
        let n = self.n();
        let g = self.g();
        if g.len() != 2 * n || g.rows(0, n) != g.rows(n, n) {
            return None;
        }
        let w: Vec<f64> = g.rows(0, n).iter().copied().collect();
        let expected = Polytope::symmetric_box(&w).ok()?;
        (expected.p == *self.g_mat()).then_some(w)
    }

    /// `true` when `w` satisfies `G w ≤ g + tol`.
    pub fn admits(&self, w: &DVector<f64>, tol: f64) -> bool {
        self.disturbance.contains(w, tol)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SpecJson {
    General {
        #[serde(rename = "G")]
        g_mat: Vec<Vec<f64>>,
        g: Vec<f64>,
        #[serde(rename = "H")]
        h_mat: Vec<Vec<f64>>,
        h: Vec<f64>,
        #[serde(rename = "T")]
        horizon: usize,
    },
    Box {
        w_max: Vec<f64>,
        x_max: Vec<f64>,
        u_max: Vec<f64>,
        #[serde(rename = "T")]
        horizon: usize,
    },
}

impl TryFrom<SpecJson> for RobustSpec {
    type Error = Error;

    fn try_from(j: SpecJson) -> Result<Self> {
        match j {
            SpecJson::General {
                g_mat,
                g,
                h_mat,
                h,
                horizon,
            } => {
                let gm = from_rows(&g_mat, 0, "G")?;
                let hm = from_rows(&h_mat, 0, "H")?;
                RobustSpec::new(
                    Polytope::new(gm, vec_from(&g, "g")?)?,
                    Polytope::new(hm, vec_from(&h, "h")?)?,
                    horizon,
                )
            }
            SpecJson::Box {
                w_max,
                x_max,
                u_max,
                horizon,
            } => RobustSpec::from_box(&w_max, &x_max, &u_max, horizon),
        }
    }
}

impl From<RobustSpec> for SpecJson {
    fn from(s: RobustSpec) -> Self {
        SpecJson::General {
            g_mat: to_rows(s.g_mat()),
            g: s.g().iter().copied().collect(),
            h_mat: to_rows(s.h_mat()),
            h: s.h().iter().copied().collect(),
            horizon: s.horizon,
        }
    }
}
