//! Sparse LDLᵀ factorization for quasi-definite matrices.
//!
//! The symbolic phase computes a minimum-degree ordering and the elimination
//! tree once; numeric refactorizations with the same pattern reuse both. No
//! pivoting is performed, so the input must be quasi-definite (or positive
//! definite) for the factorization to exist under every ordering.

use std::collections::BTreeSet;

use super::csc::CscMatrix;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct Ldl {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    // permuted upper-triangular pattern
    ap: Vec<usize>,
    ai: Vec<usize>,
    ax: Vec<f64>,
    /// position of each input entry inside `ax`
    map: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
}

impl Ldl {
    /// Analyze and factor the symmetric matrix whose upper triangle is `upper`.
    pub fn new(upper: &CscMatrix) -> Result<Self> {
        let n = upper.ncols();
        if upper.nrows() != n {
            return Err(Error::Dimension("LDL input must be square".into()));
        }
        let perm = minimum_degree(upper);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // permuted pattern, keeping track of where every input entry lands
        let mut entries: Vec<(usize, usize, usize)> = Vec::with_capacity(upper.nnz());
        let mut k = 0;
        for j in 0..n {
            for (i, _) in upper.col(j) {
                assert!(i <= j, "LDL input must be upper triangular");
                let (pi, pj) = (iperm[i], iperm[j]);
                let (r, c) = if pi <= pj { (pi, pj) } else { (pj, pi) };
                entries.push((c, r, k));
                k += 1;
            }
        }
        entries.sort_unstable();
        let mut ap = vec![0usize; n + 1];
        let mut ai = Vec::with_capacity(entries.len());
        let mut map = vec![0usize; entries.len()];
        for (pos, &(c, r, orig)) in entries.iter().enumerate() {
            ap[c + 1] += 1;
            ai.push(r);
            map[orig] = pos;
        }
        for c in 0..n {
            ap[c + 1] += ap[c];
        }

        let (etree, lnz) = elimination_tree(n, &ap, &ai)?;
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let nnz_l = lp[n];
        let mut ldl = Self {
            n,
            perm,
            ap,
            ai,
            ax: vec![0.0; entries.len()],
            map,
            etree,
            lp,
            li: vec![0; nnz_l],
            lx: vec![0.0; nnz_l],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
        };
        ldl.refactor(upper.values())?;
        Ok(ldl)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric refactorization with new values in the original input order.
    pub fn refactor(&mut self, values: &[f64]) -> Result<()> {
        assert_eq!(values.len(), self.map.len(), "value count changed");
        for (k, &v) in values.iter().enumerate() {
            self.ax[self.map[k]] = v;
        }
        self.numeric()
    }

    fn numeric(&mut self) -> Result<()> {
        let n = self.n;
        let mut y_markers = vec![false; n];
        let mut y_vals = vec![0.0; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();

        for k in 0..n {
            let mut nnz_y = 0;
            self.d[k] = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let bidx = self.ai[p];
                if bidx == k {
                    self.d[k] = self.ax[p];
                    continue;
                }
                y_vals[bidx] = self.ax[p];
                let mut next = bidx;
                if !y_markers[next] {
                    y_markers[next] = true;
                    elim[0] = next;
                    let mut nnz_e = 1;
                    next = self.etree[bidx];
                    while next != NONE && next < k {
                        if y_markers[next] {
                            break;
                        }
                        y_markers[next] = true;
                        elim[nnz_e] = next;
                        nnz_e += 1;
                        next = self.etree[next];
                    }
                    while nnz_e > 0 {
                        nnz_e -= 1;
                        y_idx[nnz_y] = elim[nnz_e];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let tmp = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..tmp {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[tmp] = k;
                self.lx[tmp] = yc * self.dinv[c];
                self.d[k] -= yc * self.lx[tmp];
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_markers[c] = false;
            }
            if self.d[k] == 0.0 || !self.d[k].is_finite() {
                return Err(Error::Factorization(format!("zero pivot at step {k}")));
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        Ok(())
    }

    /// Diagonal of D (in factor order).
    pub fn d(&self) -> &[f64] {
        &self.d
    }

    /// Solve `K x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.lp[i]..self.lp[i + 1] {
                    x[self.li[j]] -= self.lx[j] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                s -= self.lx[j] * x[self.li[j]];
            }
            x[i] = s;
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }
}

fn elimination_tree(n: usize, ap: &[usize], ai: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut work = vec![NONE; n];
    let mut lnz = vec![0usize; n];
    let mut etree = vec![NONE; n];
    for j in 0..n {
        work[j] = j;
        for &start in &ai[ap[j]..ap[j + 1]] {
            let mut i = start;
            if i > j {
                return Err(Error::Factorization("permuted pattern not upper triangular".into()));
            }
            while work[i] != j {
                if etree[i] == NONE {
                    etree[i] = j;
                }
                lnz[i] += 1;
                work[i] = j;
                i = etree[i];
            }
        }
    }
    Ok((etree, lnz))
}

/// Greedy minimum-degree ordering on the explicit elimination graph.
/// Ties are broken by the smallest index, so the ordering is deterministic.
fn minimum_degree(upper: &CscMatrix) -> Vec<usize> {
    let n = upper.ncols();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 0..n {
        for (i, _) in upper.col(j) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (adj[v].len(), v)).collect();
    let mut eliminated = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    let mut mark = vec![NONE; n];

    while let Some((_, v)) = queue.pop_first() {
        eliminated[v] = true;
        perm.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        // remaining graph is a clique: order is irrelevant from here
        if queue.len() == nbrs.len() {
            perm.extend(queue.iter().map(|&(_, u)| u));
            break;
        }
        for &a in &nbrs {
            queue.remove(&(adj[a].len(), a));
        }
        for &a in &nbrs {
            // adj[a] ∪ nbrs \ {a, v}
            for &b in &adj[a] {
                mark[b] = a;
            }
            let mut merged: Vec<usize> = adj[a].iter().copied().filter(|&b| b != v).collect();
            for &b in &nbrs {
                if b != a && mark[b] != a {
                    merged.push(b);
                }
            }
            merged.sort_unstable();
            adj[a] = merged;
        }
        for &a in &nbrs {
            debug_assert!(!eliminated[a]);
            queue.insert((adj[a].len(), a));
        }
    }
    debug_assert_eq!(perm.len(), n);
    perm
}
