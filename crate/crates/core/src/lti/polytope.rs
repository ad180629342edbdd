use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `{ x | P x ≤ q }`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
}

impl Polytope {
    pub fn new(p: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        if p.nrows() != q.len() {
            return Err(Error::Dimension(format!("P has {} rows, q has {} entries", p.nrows(), q.len())));
        }
        if p.iter().any(|v| !v.is_finite()) || q.iter().any(|v| v.is_nan()) {
            return Err(Error::Invalid("polytope data must be finite".into()));
        }
        Ok(Self { p, q })
    }

    /// `|x_i| ≤ bound_i`, encoded as `[I; −I] x ≤ [bound; bound]`.
    pub fn symmetric_box(bound: &[f64]) -> Result<Self> {
        if bound.iter().any(|&b| b.is_nan() || b < 0.0) {
            return Err(Error::Invalid("box half-widths must be nonnegative".into()));
        }
        let s = bound.len();
        let p = DMatrix::from_fn(2 * s, s, |r, c| match r {
            r if r == c => 1.0,
            r if r == c + s => -1.0,
            _ => 0.0,
        });
        let q = DVector::from_fn(2 * s, |r, _| bound[r % s]);
        Ok(Self { p, q })
    }

    pub fn rows(&self) -> usize {
        self.q.len()
    }

    pub fn dim(&self) -> usize {
        self.p.ncols()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        (&self.p * x - &self.q).iter().all(|&v| v <= tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_rows() {
        let b = Polytope::symmetric_box(&[1.0, 2.0]).unwrap();
        assert_eq!(b.rows(), 4);
        assert_eq!(b.p[(3, 1)], -1.0);
        assert_eq!(b.q[3], 2.0);
        assert!(b.contains(&DVector::from_vec(vec![-1.0, 2.0]), 0.0));
        assert!(!b.contains(&DVector::from_vec(vec![1.1, 0.0]), 1e-9));
    }

    #[test]
    fn rejects_mismatch() {
        assert!(Polytope::new(DMatrix::zeros(2, 1), DVector::zeros(3)).is_err());
    }
}
