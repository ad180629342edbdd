use nalgebra::DMatrix;

use super::system::LinearSystem;

/// Allowed (structurally nonzero) entries of each spectral element.
///
/// `x_support[k]` and `u_support[k]` describe `Φx[k+1]` and `Φu[k+1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportMask {
    pub x_support: Vec<DMatrix<bool>>,
    pub u_support: Vec<DMatrix<bool>>,
}

impl SupportMask {
    pub fn dense(n: usize, m: usize, horizon: usize) -> Self {
        Self {
            x_support: vec![DMatrix::from_element(n, n, true); horizon],
            u_support: vec![DMatrix::from_element(m, n, true); horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.x_support.len()
    }

    pub fn n(&self) -> usize {
        self.x_support.first().map_or(0, |m| m.ncols())
    }

    pub fn m(&self) -> usize {
        self.u_support.first().map_or(0, |m| m.nrows())
    }

    /// `Φx[1] = I` requires every diagonal entry of the first tap.
    pub fn admits_identity(&self) -> bool {
        self.x_support
            .first()
            .is_some_and(|m| (0..m.nrows()).all(|i| m[(i, i)]))
    }

    pub fn is_dense(&self) -> bool {
        self.x_support.iter().chain(&self.u_support).all(|m| m.iter().all(|&b| b))
    }

    /// Number of free entries across all taps.
    pub fn count(&self) -> usize {
        self.x_support
            .iter()
            .chain(&self.u_support)
            .map(|m| m.iter().filter(|&&b| b).count())
            .sum()
    }
}

/// d-hop locality: `Φx[k](i, j)` is free iff node `i` is within `d` hops of
/// node `j`, and `Φu[k](a, j)` iff the node hosting actuator `a` is. The same
/// pattern is used for every tap.
pub fn locality_support(sys: &LinearSystem, d: usize, horizon: usize) -> SupportMask {
    let n = sys.n();
    let dist = sys.graph().distance_matrix();
    let near = |i: usize, j: usize| dist[i][j].is_some_and(|h| h <= d);
    let x = DMatrix::from_fn(n, n, &near);
    let u = DMatrix::from_fn(sys.m(), n, |a, j| near(sys.actuator_host(a), j));
    SupportMask {
        x_support: vec![x; horizon],
        u_support: vec![u; horizon],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::make_chain_system;

    #[test]
    fn one_hop_on_a_path() {
        let sys = make_chain_system(5, 0.4, 1.0).unwrap();
        let s = locality_support(&sys, 1, 3);
        for k in 0..3 {
            let row: Vec<bool> = (0..5).map(|j| s.x_support[k][(2, j)]).collect();
            assert_eq!(row, vec![false, true, true, true, false]);
        }
        assert!(s.admits_identity());
    }

    #[test]
    fn radius_at_diameter_is_dense() {
        let sys = make_chain_system(5, 0.4, 1.0).unwrap();
        assert!(locality_support(&sys, 4, 2).is_dense());
        assert!(!locality_support(&sys, 3, 2).is_dense());
    }

    #[test]
    fn zero_radius_is_diagonal() {
        let sys = make_chain_system(4, 0.4, 1.0).unwrap();
        let s = locality_support(&sys, 0, 2);
        assert_eq!(s.x_support[0], DMatrix::from_fn(4, 4, |i, j| i == j));
        assert_eq!(s.u_support[1], DMatrix::from_fn(4, 4, |i, j| i == j));
    }
}
