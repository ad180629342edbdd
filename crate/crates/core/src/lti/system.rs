use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::graph::Graph;
use crate::error::{Error, Result};
use crate::json::{from_rows, to_rows};

/// Discrete-time plant `x(k+1) = A x(k) + B u(k) + w(k)` on an interaction graph.
///
/// Each actuator (column of B) is hosted by exactly one node. By default the
/// host is the node with the largest entry in that column of B.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemJson", into = "SystemJson")]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    graph: Graph,
    node_actuators: Vec<Vec<usize>>,
    actuator_host: Vec<usize>,
}

impl LinearSystem {
    /// Validates dimensions and that every off-diagonal nonzero of A is an
    /// edge of the graph (the graph may contain extra edges).
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, graph: Graph) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!("A is {}x{}", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!("B has {} rows, A has {n}", b.nrows())));
        }
        if graph.num_nodes() != n {
            return Err(Error::Dimension(format!(
                "graph has {} nodes, A has {n} states",
                graph.num_nodes()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("A and B must be finite".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && a[(i, j)] != 0.0 && !graph.has_edge(i, j) {
                    return Err(Error::Invalid(format!(
                        "A[{i},{j}] is nonzero but the graph has no edge ({i},{j})"
                    )));
                }
            }
        }
        let host: Vec<usize> = (0..b.ncols())
            .map(|c| {
                let col = b.column(c);
                let mut best = 0;
                for i in 1..n {
                    if col[i].abs() > col[best].abs() {
                        best = i;
                    }
                }
                best
            })
            .collect();
        Self::assemble(a, b, graph, host)
    }

    fn assemble(a: DMatrix<f64>, b: DMatrix<f64>, graph: Graph, actuator_host: Vec<usize>) -> Result<Self> {
        let n = a.nrows();
        let mut node_actuators = vec![Vec::new(); n];
        for (act, &h) in actuator_host.iter().enumerate() {
            node_actuators[h].push(act);
        }
        Ok(Self {
            a,
            b,
            graph,
            node_actuators,
            actuator_host,
        })
    }

    /// Override the actuator placement. Every actuator must appear exactly once.
    pub fn with_node_actuators(self, node_actuators: Vec<Vec<usize>>) -> Result<Self> {
        let n = self.n();
        let m = self.m();
        if node_actuators.len() != n {
            return Err(Error::Dimension(format!(
                "node_actuators has {} entries, expected {n}",
                node_actuators.len()
            )));
        }
        let mut host = vec![usize::MAX; m];
        for (node, acts) in node_actuators.iter().enumerate() {
            for &a in acts {
                if a >= m || host[a] != usize::MAX {
                    return Err(Error::Invalid(format!("actuator {a} invalid or assigned twice")));
                }
                host[a] = node;
            }
        }
        if let Some(a) = host.iter().position(|&h| h == usize::MAX) {
            return Err(Error::Invalid(format!("actuator {a} has no host node")));
        }
        Self::assemble(self.a, self.b, self.graph, host)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn node_actuators(&self, node: usize) -> &[usize] {
        &self.node_actuators[node]
    }

    pub fn actuator_host(&self, actuator: usize) -> usize {
        self.actuator_host[actuator]
    }

    /// True when graph edges coincide exactly with the off-diagonal support of A.
    pub fn graph_matches_dynamics(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| {
            (0..n).all(|j| i == j || self.graph.has_edge(i, j) == (self.a[(i, j)] != 0.0 || self.a[(j, i)] != 0.0))
        })
    }

    /// Same system with the dynamics matrix replaced (e.g. a mismatched model).
    pub fn with_a(&self, a: DMatrix<f64>) -> Result<Self> {
        let s = Self::new(a, self.b.clone(), self.graph.clone())?;
        s.with_node_actuators(self.node_actuators.clone())
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Chain benchmark: node `i` evolves as
/// `ρ(1 − |N_i|α) x_i + ρα Σ_{j∈N_i} x_j + u_i` on a path graph, with every
/// node actuated.
pub fn make_chain_system(n: usize, alpha: f64, rho: f64) -> Result<LinearSystem> {
    if n < 2 {
        return Err(Error::Dimension(format!("chain needs at least 2 nodes, got {n}")));
    }
    if !alpha.is_finite() || !rho.is_finite() {
        return Err(Error::Invalid("alpha and rho must be finite".into()));
    }
    let graph = Graph::path(n);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let deg = graph.neighbors(i).len() as f64;
        a[(i, i)] = rho * (1.0 - deg * alpha);
        for &j in graph.neighbors(i) {
            a[(i, j)] = rho * alpha;
        }
    }
    LinearSystem::new(a, DMatrix::identity(n, n), graph)
}

#[derive(Serialize, Deserialize)]
struct SystemJson {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    graph: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node_actuators: Option<Vec<Vec<usize>>>,
}

impl TryFrom<SystemJson> for LinearSystem {
    type Error = Error;

    fn try_from(j: SystemJson) -> Result<Self> {
        let a = from_rows(&j.a, 0, "A")?;
        let b = from_rows(&j.b, 0, "B")?;
        let graph = Graph::from_edges(a.nrows(), &j.graph)
            .ok_or_else(|| Error::Invalid("graph edge references a missing node".into()))?;
        let sys = LinearSystem::new(a, b, graph)?;
        match j.node_actuators {
            Some(na) => sys.with_node_actuators(na),
            None => Ok(sys),
        }
    }
}

impl From<LinearSystem> for SystemJson {
    fn from(s: LinearSystem) -> Self {
        SystemJson {
            a: to_rows(&s.a),
            b: to_rows(&s.b),
            graph: s.graph.edges(),
            node_actuators: Some(s.node_actuators),
        }
    }
}
