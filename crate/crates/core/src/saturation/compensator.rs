use crate::error::{Error, Result};
use crate::lti::{FirResponse, LinearSystem, SupportMask};
use crate::synthesis::{synthesize_localized, SynthesisOptions, SynthesisStatus};

/// Closed-loop response to the pseudo-disturbance caused by clipping at
/// `saturated_node`, designed with that node's actuators unavailable.
#[derive(Clone, Debug, PartialEq)]
pub struct Compensator {
    pub phi_bar: FirResponse,
    pub saturated_node: usize,
}

/// One optional compensator per node.
#[derive(Clone, Debug, Default)]
pub struct CompensatorBank {
    slots: Vec<Option<Compensator>>,
}

impl CompensatorBank {
    pub fn empty(n: usize) -> Self {
        Self { slots: vec![None; n] }
    }

    /// Every node uses the nominal response as its compensator.
    pub fn nominal(phi: &FirResponse) -> Self {
        Self {
            slots: (0..phi.n())
                .map(|i| {
                    Some(Compensator {
                        phi_bar: phi.clone(),
                        saturated_node: i,
                    })
                })
                .collect(),
        }
    }

    pub fn insert(&mut self, c: Compensator) {
        let i = c.saturated_node;
        self.slots[i] = Some(c);
    }

    pub fn get(&self, node: usize) -> Option<&Compensator> {
        self.slots.get(node).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Compensator> {
        self.slots.iter().flatten()
    }

    /// Synthesize a compensator for every node; nodes whose program is
    /// infeasible are left empty and returned in the second component.
    pub fn synthesize_all(
        sys: &LinearSystem,
        support: &SupportMask,
        opts: &SynthesisOptions,
    ) -> Result<(Self, Vec<usize>)> {
        let mut bank = Self::empty(sys.n());
        let mut failed = Vec::new();
        for i in 0..sys.n() {
            match synthesize_compensator(sys, support, i, opts) {
                Ok(c) => bank.insert(c),
                Err(Error::Infeasible(_)) => failed.push(i),
                Err(e) => return Err(e),
            }
        }
        Ok((bank, failed))
    }
}

/// H2-optimal localized response with every `Φ̄u[k]` row of the saturated
/// node's actuators fixed to zero.
pub fn synthesize_compensator(
    sys: &LinearSystem,
    support: &SupportMask,
    saturated_node: usize,
    opts: &SynthesisOptions,
) -> Result<Compensator> {
    if saturated_node >= sys.n() {
        return Err(Error::Invalid(format!("node {saturated_node} does not exist")));
    }
    let mut mask = support.clone();
    for u in mask.u_support.iter_mut() {
        for &a in sys.node_actuators(saturated_node) {
            u.row_mut(a).fill(false);
        }
    }
    let r = synthesize_localized(sys, &mask, opts)?;
    match r.status {
        SynthesisStatus::Optimal => Ok(Compensator {
            phi_bar: r.phi,
            saturated_node,
        }),
        SynthesisStatus::Infeasible => Err(Error::Infeasible(format!(
            "no compensator for node {saturated_node}: the plant cannot be driven to rest in {} steps without its actuators",
            support.horizon()
        ))),
        SynthesisStatus::MaxIter => Err(Error::Invalid(format!(
            "compensator synthesis for node {saturated_node} did not converge"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{affine_residual, locality_support, make_chain_system, Graph};
    use nalgebra::DMatrix;

    #[test]
    fn zero_rows_are_exact() {
        let sys = make_chain_system(5, 0.4, 1.0).unwrap();
        let support = locality_support(&sys, 3, 4);
        let c = synthesize_compensator(&sys, &support, 2, &SynthesisOptions::default()).unwrap();
        for tap in c.phi_bar.phi_u() {
            assert!(tap.row(2).iter().all(|&v| v == 0.0));
        }
        assert_eq!(c.phi_bar.phi_x()[0], DMatrix::<f64>::identity(5, 5));
        assert!(affine_residual(&sys, &c.phi_bar).unwrap() <= 1e-6);
    }

    #[test]
    fn lone_node_without_actuator_is_infeasible() {
        let sys = LinearSystem::new(DMatrix::from_element(1, 1, 0.2), DMatrix::from_element(1, 1, 1.0), Graph::empty(1))
            .unwrap();
        let support = SupportMask::dense(1, 1, 4);
        let err = synthesize_compensator(&sys, &support, 0, &SynthesisOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Infeasible(ref s) if s.contains("node 0")), "{err}");
    }
}
