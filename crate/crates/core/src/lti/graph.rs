use std::collections::VecDeque;

/// Undirected interaction graph over `n` nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self { adj: vec![Vec::new(); n] }
    }

    pub fn path(n: usize) -> Self {
        let mut g = Self::empty(n);
        for i in 1..n {
            g.add_edge(i - 1, i);
        }
        g
    }

    /// Build from an edge list. Self loops are ignored, duplicates merged.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Option<Self> {
        let mut g = Self::empty(n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return None;
            }
            g.add_edge(i, j);
        }
        Some(g)
    }

    pub fn add_edge(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        if let Err(p) = self.adj[i].binary_search(&j) {
            self.adj[i].insert(p, j);
        }
        if let Err(p) = self.adj[j].binary_search(&i) {
            self.adj[j].insert(p, i);
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&j).is_ok()
    }

    /// Edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, nb) in self.adj.iter().enumerate() {
            out.extend(nb.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    /// BFS hop counts from `src`; `None` for unreachable nodes.
    pub fn distances_from(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.adj.len()];
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(v) = queue.pop_front() {
            let dv = dist[v].unwrap();
            for &u in &self.adj[v] {
                if dist[u].is_none() {
                    dist[u] = Some(dv + 1);
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    /// All-pairs hop distances.
    pub fn distance_matrix(&self) -> Vec<Vec<Option<usize>>> {
        (0..self.adj.len()).map(|i| self.distances_from(i)).collect()
    }

    /// Nodes within `d` hops of `src`, including `src`, sorted.
    pub fn ball(&self, src: usize, d: usize) -> Vec<usize> {
        self.distances_from(src)
            .iter()
            .enumerate()
            .filter(|(_, h)| h.is_some_and(|h| h <= d))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        self.adj.is_empty() || self.distances_from(0).iter().all(Option::is_some)
    }

    /// Longest shortest path, or `None` if disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for i in 0..self.adj.len() {
            for h in self.distances_from(i) {
                best = best.max(h?);
            }
        }
        Some(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_distances() {
        let g = Graph::path(5);
        assert_eq!(g.neighbors(2), &[1, 3]);
        assert_eq!(g.distances_from(0)[4], Some(4));
        assert_eq!(g.ball(2, 1), vec![1, 2, 3]);
        assert_eq!(g.diameter(), Some(4));
    }

    #[test]
    fn disconnected() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        assert!(!g.is_connected());
        assert_eq!(g.distances_from(0)[2], None);
        assert_eq!(g.diameter(), None);
        assert!(Graph::from_edges(2, &[(0, 2)]).is_none());
    }
}
