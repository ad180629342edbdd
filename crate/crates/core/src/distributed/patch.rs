use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{LinearSystem, SupportMask};
use crate::synthesis::{dual_pattern, BlockStructure, DualSparsity, RobustSpec};

/// One agent's share of the synthesis program.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub id: usize,
    pub nodes: Vec<usize>,
    /// Φ columns optimized by this patch
    pub owned_columns: Vec<usize>,
    /// G rows whose Λ columns this patch holds
    pub lambda_cols: Vec<usize>,
    /// budget rows this patch's multipliers contribute to
    pub coupled_rows: Vec<usize>,
    /// budget rows whose dual variable this patch updates
    pub owned_rows: Vec<usize>,
    pub neighbor_ids: Vec<usize>,
}

/// Result of splitting the program into patches.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub patches: Vec<Patch>,
    /// patch updating each budget row's dual; `None` for rows with a zero H row
    pub row_owner: Vec<Option<usize>>,
    /// allowed entries of each `Λ[k]`
    pub pattern: Vec<DMatrix<bool>>,
}

impl Decomposition {
    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn are_neighbors(&self, a: usize, b: usize) -> bool {
        self.patches.get(a).is_some_and(|p| p.neighbor_ids.binary_search(&b).is_ok())
    }
}

/// One patch per node.
pub fn decompose(sys: &LinearSystem, support: &SupportMask, spec: &RobustSpec) -> Result<Decomposition> {
    let groups: Vec<Vec<usize>> = (0..sys.n()).map(|i| vec![i]).collect();
    decompose_grouped(sys, support, spec, &groups)
}

/// Patches made of the given node groups, which must partition the nodes.
pub fn decompose_grouped(
    sys: &LinearSystem,
    support: &SupportMask,
    spec: &RobustSpec,
    groups: &[Vec<usize>],
) -> Result<Decomposition> {
    let n = sys.n();
    if support.n() != n || support.m() != sys.m() {
        return Err(Error::Dimension("support mask does not match the system".into()));
    }
    if spec.horizon() != support.horizon() {
        return Err(Error::Dimension("spec and support horizons differ".into()));
    }
    let blocks = BlockStructure::new(sys, spec).map_err(|e| match e {
        Error::NotDecoupled(msg) => {
            Error::NotDecoupled(format!("{msg}; use centralized synthesis for coupled bounds"))
        }
        other => other,
    })?;

    if spec.g().iter().any(|&v| v < 0.0) {
        return Err(Error::Invalid("distributed synthesis needs g ≥ 0 (disturbance set containing the origin)".into()));
    }

    let mut group_of = vec![None; n];
    for (g, nodes) in groups.iter().enumerate() {
        if nodes.is_empty() {
            return Err(Error::Invalid(format!("group {g} is empty")));
        }
        for &i in nodes {
            if i >= n || group_of[i].is_some() {
                return Err(Error::Invalid(format!("groups must partition the nodes (node {i})")));
            }
            group_of[i] = Some(g);
        }
    }
    if let Some(i) = group_of.iter().position(Option::is_none) {
        return Err(Error::Invalid(format!("node {i} belongs to no group")));
    }
    let group_of: Vec<usize> = group_of.into_iter().flatten().collect();

    for (r, owner) in blocks.h_owner.iter().enumerate() {
        if owner.is_none() && spec.h()[r] < 0.0 {
            return Err(Error::Infeasible(format!("row {r} reads 0 ≤ {}", spec.h()[r])));
        }
    }
    let row_owner: Vec<Option<usize>> = blocks.h_owner.iter().map(|o| o.map(|i| group_of[i])).collect();
    let pattern = dual_pattern(spec, support, DualSparsity::PhiPattern);

    let mut patches: Vec<Patch> = groups
        .iter()
        .enumerate()
        .map(|(id, nodes)| {
            let mut nodes = nodes.clone();
            nodes.sort_unstable();
            let lambda_cols: Vec<usize> = (0..spec.q())
                .filter(|&c| blocks.g_owner[c].is_some_and(|i| group_of[i] == id))
                .collect();
            let coupled_rows: Vec<usize> = (0..spec.p())
                .filter(|&r| pattern.iter().any(|pk| lambda_cols.iter().any(|&c| pk[(r, c)])))
                .collect();
            let owned_rows = (0..spec.p()).filter(|&r| row_owner[r] == Some(id)).collect();
            Patch {
                id,
                owned_columns: nodes.clone(),
                nodes,
                lambda_cols,
                coupled_rows,
                owned_rows,
                neighbor_ids: Vec::new(),
            }
        })
        .collect();

    let mut nbrs = vec![BTreeSet::new(); patches.len()];
    for p in &patches {
        for &r in &p.coupled_rows {
            if let Some(o) = row_owner[r] {
                if o != p.id {
                    nbrs[p.id].insert(o);
                    nbrs[o].insert(p.id);
                }
            }
        }
    }
    for (p, set) in patches.iter_mut().zip(nbrs) {
        p.neighbor_ids = set.into_iter().collect();
    }
    Ok(Decomposition {
        patches,
        row_owner,
        pattern,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{locality_support, make_chain_system};

    fn chain(n: usize, d: usize) -> Decomposition {
        let sys = make_chain_system(n, 0.4, 1.0).unwrap();
        let spec = RobustSpec::from_box(&vec![1.0; n], &vec![2.0; n], &vec![2.0; n], 4).unwrap();
        decompose(&sys, &locality_support(&sys, d, 4), &spec).unwrap()
    }

    fn row_nodes(n: usize, rows: &[usize]) -> BTreeSet<usize> {
        // box rows: x upper, x lower, u upper, u lower, n each
        rows.iter().map(|r| r % n).collect()
    }

    #[test]
    fn one_hop_chain() {
        let dec = chain(5, 1);
        let p = &dec.patches[2];
        assert_eq!(p.neighbor_ids, vec![1, 3]);
        assert_eq!(row_nodes(5, &p.coupled_rows), BTreeSet::from([1, 2, 3]));
        assert_eq!(p.coupled_rows.len(), 12);
        assert_eq!(p.owned_rows, vec![2, 7, 12, 17]);
    }

    #[test]
    fn radius_at_diameter_couples_everyone() {
        let dec = chain(5, 4);
        for p in &dec.patches {
            let others: Vec<usize> = (0..5).filter(|&j| j != p.id).collect();
            assert_eq!(p.neighbor_ids, others);
        }
    }

    #[test]
    fn three_hop_ball_from_the_end() {
        let dec = chain(5, 3);
        assert_eq!(row_nodes(5, &dec.patches[0].coupled_rows), BTreeSet::from([0, 1, 2, 3]));
    }

    #[test]
    fn neighbor_relation_is_symmetric() {
        let dec = chain(7, 2);
        for p in &dec.patches {
            for &q in &p.neighbor_ids {
                assert!(dec.are_neighbors(q, p.id));
            }
        }
    }

    #[test]
    fn coupled_bounds_are_refused() {
        let sys = make_chain_system(3, 0.4, 1.0).unwrap();
        let spec = RobustSpec::from_box(&[1.0; 3], &[2.0; 3], &[2.0; 3], 2).unwrap();
        let mut h = spec.h_mat().clone();
        h[(0, 1)] = 1.0;
        let perf = crate::lti::Polytope::new(h, spec.h().clone()).unwrap();
        let spec = RobustSpec::new(spec.disturbance().clone(), perf, 2).unwrap();
        let err = decompose(&sys, &locality_support(&sys, 1, 2), &spec).unwrap_err();
        assert!(matches!(err, Error::NotDecoupled(ref s) if s.contains("centralized")), "{err}");
    }

    #[test]
    fn grouping_merges_columns() {
        let sys = make_chain_system(4, 0.4, 1.0).unwrap();
        let spec = RobustSpec::from_box(&[1.0; 4], &[2.0; 4], &[2.0; 4], 3).unwrap();
        let support = locality_support(&sys, 1, 3);
        let dec = decompose_grouped(&sys, &support, &spec, &[vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(dec.patches[0].owned_columns, vec![0, 1]);
        assert_eq!(dec.patches[0].neighbor_ids, vec![1]);
        assert!(decompose_grouped(&sys, &support, &spec, &[vec![0, 1], vec![1, 2, 3]]).is_err());
        assert!(decompose_grouped(&sys, &support, &spec, &[vec![0, 1]]).is_err());
    }
}
