//! Actuator saturation: the internal-model realization of an SLS controller,
//! the original realization driven through a saturating actuator, and
//! saturation compensation.

mod compensator;
mod imc;

use nalgebra::DVector;

use crate::error::{Error, Result};

pub use compensator::{synthesize_compensator, Compensator, CompensatorBank};
pub use imc::{
    imc_step, run_compensated, run_imc, run_naive_saturated, ImcController, SaturatedRun, SlsRealization,
};

/// Box `u_min ≤ u ≤ u_max` containing the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct InputBox {
    u_min: DVector<f64>,
    u_max: DVector<f64>,
}

impl InputBox {
    pub fn new(u_min: DVector<f64>, u_max: DVector<f64>) -> Result<Self> {
        if u_min.len() != u_max.len() {
            return Err(Error::Dimension("u_min and u_max differ in length".into()));
        }
        if u_min.iter().any(|&v| v.is_nan() || v > 0.0) || u_max.iter().any(|&v| v.is_nan() || v < 0.0) {
            return Err(Error::Invalid("input box must contain the origin".into()));
        }
        Ok(Self { u_min, u_max })
    }

    /// `|u_a| ≤ bound_a`.
    pub fn symmetric(bound: &[f64]) -> Result<Self> {
        let b = DVector::from_column_slice(bound);
        Self::new(-&b, b)
    }

    pub fn dim(&self) -> usize {
        self.u_max.len()
    }

    pub fn u_min(&self) -> &DVector<f64> {
        &self.u_min
    }

    pub fn u_max(&self) -> &DVector<f64> {
        &self.u_max
    }

    pub fn contains(&self, u: &DVector<f64>) -> bool {
        u.iter().zip(self.u_min.iter().zip(self.u_max.iter())).all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

/// Projection onto the box (entrywise clamp).
pub fn saturate(u: &DVector<f64>, b: &InputBox) -> DVector<f64> {
    DVector::from_iterator(
        u.len(),
        u.iter().zip(b.u_min.iter().zip(b.u_max.iter())).map(|(v, (lo, hi))| v.clamp(*lo, *hi)),
    )
}

/// The part of `u` removed by saturation, `u − saturate(u)`.
pub fn cutoff(u: &DVector<f64>, b: &InputBox) -> DVector<f64> {
    u - saturate(u, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn clamp_examples() {
        let b1 = InputBox::symmetric(&[1.0]).unwrap();
        assert_eq!(saturate(&v(&[0.3]), &b1), v(&[0.3]));
        assert_eq!(saturate(&v(&[2.0]), &b1), v(&[1.0]));
        assert_eq!(cutoff(&v(&[0.3]), &b1), v(&[0.0]));
        assert_eq!(cutoff(&v(&[2.0]), &b1), v(&[1.0]));
        let b2 = InputBox::symmetric(&[1.0, 1.0]).unwrap();
        assert_eq!(saturate(&v(&[2.0, -3.0]), &b2), v(&[1.0, -1.0]));
    }

    #[test]
    fn box_must_contain_origin() {
        assert!(InputBox::new(v(&[0.5]), v(&[1.0])).is_err());
        assert!(InputBox::new(v(&[-1.0]), v(&[1.0, 2.0])).is_err());
        assert!(InputBox::new(v(&[0.0]), v(&[0.0])).is_ok());
    }
}
