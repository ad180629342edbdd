//! Experiment configuration files.
//!
//! Relative paths inside a config resolve against the directory holding the
//! config file.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sls_core::lti::{locality_support, make_chain_system};
use sls_core::qp::Settings;
use sls_core::saturation::InputBox;
use sls_core::{json, DVector, FirResponse, LinearSystem, RobustSpec, SupportMask};

use crate::Failure;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSource,
    pub bounds: Bounds,
    #[serde(rename = "T")]
    pub horizon: usize,
    /// locality radius in hops
    #[serde(rename = "d")]
    pub radius: usize,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub distributed: DistributedConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    /// actuator box for the saturation experiments
    #[serde(default)]
    pub saturation: Option<SaturationConfig>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSource {
    Chain { n: usize, alpha: f64, rho: f64 },
    File(PathBuf),
}

/// A scalar applies to every entry.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerNode {
    All(f64),
    Each(Vec<f64>),
}

impl PerNode {
    fn expand(&self, len: usize, what: &str) -> Result<Vec<f64>, Failure> {
        match self {
            PerNode::All(v) => Ok(vec![*v; len]),
            PerNode::Each(v) if v.len() == len => Ok(v.clone()),
            PerNode::Each(v) => Err(Failure::Config(format!("{what} has {} entries, expected {len}", v.len()))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Bounds {
    Box { w_max: PerNode, x_max: PerNode, u_max: PerNode },
    /// a spec file in the `RobustSpec` JSON format
    File(PathBuf),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = Settings::default();
        Self {
            tol: s.tol,
            max_iter: s.max_iter,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributedConfig {
    /// dual step size; derived from the spec when absent
    pub alpha: Option<f64>,
    pub epsilon: f64,
    pub max_rounds: usize,
    pub seed: u64,
}

impl Default for DistributedConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            epsilon: 1e-4,
            max_rounds: 5000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub steps: usize,
    pub scenario: Scenario,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            steps: 40,
            scenario: Scenario::Impulse { node: 0, magnitude: 1.0 },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    Zero,
    Impulse {
        node: usize,
        magnitude: f64,
    },
    /// constant disturbance at one node for `duration` steps
    Push {
        node: usize,
        magnitude: f64,
        duration: usize,
    },
    /// i.i.d. uniform entries in `[-amplitude, amplitude]` (ChaCha8 seeded from `seed`)
    Random {
        seed: u64,
        amplitude: f64,
    },
    /// the sequence maximizing one performance row at time T
    WorstCase {
        row: usize,
    },
    /// JSON array of per-step disturbance vectors
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationConfig {
    pub u_max: PerNode,
}

/// A config with its files loaded.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub base: PathBuf,
    pub sys: LinearSystem,
    pub spec: RobustSpec,
    pub support: SupportMask,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if self.horizon == 0 {
            return Err(Failure::Config("T must be at least 1".into()));
        }
        if !(self.distributed.epsilon > 0.0) {
            return Err(Failure::Config("distributed.epsilon must be positive".into()));
        }
        if self.distributed.alpha.is_some_and(|a| !(a > 0.0)) {
            return Err(Failure::Config("distributed.alpha must be positive".into()));
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(Failure::Config("solver tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }

    pub fn settings(&self) -> Settings {
        Settings {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            ..Settings::default()
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn existing(base: &Path, p: &Path) -> Result<PathBuf, Failure> {
    let full = resolve(base, p);
    if full.is_file() {
        Ok(full)
    } else {
        Err(Failure::Config(format!("referenced file {} does not exist", full.display())))
    }
}

pub fn read_artifact<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    json::read_json(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let config = ExperimentConfig::from_file(path)?;
        config.validate()?;
        let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        let sys = match &config.system {
            SystemSource::Chain { n, alpha, rho } => {
                make_chain_system(*n, *alpha, *rho).map_err(|e| Failure::Config(e.to_string()))?
            }
            SystemSource::File(p) => read_artifact(&existing(&base, p)?)?,
        };
        let spec = match &config.bounds {
            Bounds::Box { w_max, x_max, u_max } => RobustSpec::from_box(
                &w_max.expand(sys.n(), "w_max")?,
                &x_max.expand(sys.n(), "x_max")?,
                &u_max.expand(sys.m(), "u_max")?,
                config.horizon,
            )
            .map_err(|e| Failure::Config(e.to_string()))?,
            Bounds::File(p) => {
                let spec: RobustSpec = read_artifact(&existing(&base, p)?)?;
                if spec.horizon() != config.horizon {
                    return Err(Failure::Config(format!(
                        "spec file has T = {}, config has T = {}",
                        spec.horizon(),
                        config.horizon
                    )));
                }
                spec
            }
        };
        if spec.n() != sys.n() || spec.m() != sys.m() {
            return Err(Failure::Config("bounds do not match the system dimensions".into()));
        }
        if let Scenario::File { path } = &config.simulation.scenario {
            existing(&base, path)?;
        }
        let support = locality_support(&sys, config.radius, config.horizon);
        Ok(Self {
            config,
            base,
            sys,
            spec,
            support,
        })
    }

    pub fn input_box(&self) -> Result<Option<InputBox>, Failure> {
        let Some(sat) = &self.config.saturation else {
            return Ok(None);
        };
        let u = sat.u_max.expand(self.sys.m(), "saturation.u_max")?;
        InputBox::symmetric(&u).map(Some).map_err(|e| Failure::Config(e.to_string()))
    }

    /// Disturbance sequence of the configured scenario, `steps` long.
    pub fn disturbance(&self, phi: &FirResponse, seed: Option<u64>) -> Result<Vec<DVector<f64>>, Failure> {
        let n = self.sys.n();
        let steps = self.config.simulation.steps;
        let mut w = vec![DVector::zeros(n); steps];
        let node_ok = |node: usize| {
            if node < n {
                Ok(())
            } else {
                Err(Failure::Config(format!("scenario node {node} does not exist")))
            }
        };
        match &self.config.simulation.scenario {
            Scenario::Zero => {}
            Scenario::Impulse { node, magnitude } => {
                node_ok(*node)?;
                if let Some(v) = w.first_mut() {
                    v[*node] = *magnitude;
                }
            }
            Scenario::Push {
                node,
                magnitude,
                duration,
            } => {
                node_ok(*node)?;
                for v in w.iter_mut().take(*duration) {
                    v[*node] = *magnitude;
                }
            }
            Scenario::Random { seed: s, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(*s));
                let a = amplitude.abs();
                for v in w.iter_mut() {
                    for x in v.iter_mut() {
                        *x = rng.gen_range(-a..=a);
                    }
                }
            }
            Scenario::WorstCase { row } => {
                let wc = sls_core::verify::worst_case_disturbance(phi, &self.spec, *row)
                    .map_err(|e| Failure::Config(e.to_string()))?;
                for (dst, src) in w.iter_mut().zip(wc.w_seq) {
                    *dst = src;
                }
            }
            Scenario::File { path } => {
                let rows: Vec<Vec<f64>> = read_artifact(&resolve(&self.base, path))?;
                for (t, (dst, src)) in w.iter_mut().zip(&rows).enumerate() {
                    if src.len() != n {
                        return Err(Failure::Config(format!("disturbance at step {t} has {} entries", src.len())));
                    }
                    *dst = DVector::from_column_slice(src);
                }
            }
        }
        Ok(w)
    }
}
