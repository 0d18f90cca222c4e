//! Experiment configuration files.

use std::path::{Path, PathBuf};

use ndgd_core::engine::Algorithm;
use ndgd_core::objectives::{
    generate_logistic_data, make_logistic, make_quartic, random_quartic_coeffs, LiftedPoint, ObjectiveSet,
};
use ndgd_core::topology::{build_regular_graph, lazy_metropolis_mixing, Graph, MixingMatrix};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Quartic,
    Logistic,
    /// Quartic with explicit per-agent coefficients.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepSource {
    Schedule,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: Kind,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_degree")]
    pub degree: usize,
    /// Seed of the random regular graph.
    #[serde(default)]
    pub seed: u64,
    /// Edge-list file replacing the random regular graph.
    #[serde(default)]
    pub graph_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    /// Quartic coefficient seed.
    #[serde(default)]
    pub coeff_seed: u64,
    /// `[a, b, c, d]` per agent, for `kind = "custom"`.
    #[serde(default)]
    pub coefficients: Option<Vec<[f64; 4]>>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub data_seed: u64,
    /// Logistic feature dimension.
    #[serde(default = "one")]
    pub features: usize,
    /// Logistic inner width.
    #[serde(default = "one")]
    pub inner_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    /// Common starting point of every agent; defaults depend on the kind.
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    #[serde(default = "default_step")]
    pub step: StepSource,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "one")]
    pub record_every: usize,
    /// Master seed of the noise streams; algorithm `i` uses stream `i`.
    #[serde(default)]
    pub noise_seed: u64,
    /// Stop once the schedule's stationarity thresholds hold.
    #[serde(default)]
    pub stop_on_stationarity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_m() -> usize {
    20
}
fn default_degree() -> usize {
    4
}
fn default_eta() -> f64 {
    0.1
}
fn one() -> usize {
    1
}
fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Dgd, Algorithm::Ndgd]
}
fn default_step() -> StepSource {
    StepSource::Schedule
}
fn default_rho() -> f64 {
    6.0
}
fn default_max_iters() -> usize {
    10_000
}
fn default_dir() -> PathBuf {
    PathBuf::from("ndgd-out")
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        toml::from_str("").expect("all objective fields have defaults")
    }
}

impl Default for RunSection {
    fn default() -> Self {
        toml::from_str("").expect("all run fields have defaults")
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

/// The network and objective a config describes.
pub struct Instance {
    pub graph: Graph,
    pub mixing: MixingMatrix,
    pub objective: ObjectiveSet,
    pub x0: LiftedPoint,
}

impl ExperimentConfig {
    pub fn default_quartic() -> Self {
        toml::from_str("[experiment]\nkind = \"quartic\"\n").expect("valid default")
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        // relative paths inside the file are relative to the file
        if let Some(base) = path.parent() {
            if let Some(g) = &cfg.experiment.graph_file {
                if g.is_relative() {
                    cfg.experiment.graph_file = Some(base.join(g));
                }
            }
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        let r = &self.run;
        if r.algorithms.is_empty() {
            return Err("run.algorithms is empty".into());
        }
        if r.step == StepSource::Manual {
            match (r.alpha, r.sigma) {
                (Some(a), Some(s)) if a > 0.0 && a.is_finite() && s >= 0.0 && s.is_finite() => {}
                (Some(_), Some(_)) => return Err("manual step needs alpha > 0 and sigma >= 0".into()),
                _ => return Err("step = \"manual\" needs run.alpha and run.sigma".into()),
            }
        }
        if !(r.rho >= 1.0) {
            return Err(format!("run.rho must be >= 1, got {}", r.rho));
        }
        if r.record_every == 0 {
            return Err("run.record_every must be >= 1".into());
        }
        if self.experiment.kind == Kind::Custom && self.objective.coefficients.is_none() {
            return Err("kind = \"custom\" needs objective.coefficients".into());
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Instance, String> {
        let e = &self.experiment;
        let o = &self.objective;
        let graph = match &e.graph_file {
            Some(p) => Graph::read_edge_list(p).map_err(|err| format!("{}: {err}", p.display()))?,
            None => build_regular_graph(e.m, e.degree, e.seed).map_err(|err| err.to_string())?,
        };
        let m = graph.m();
        let mixing = lazy_metropolis_mixing(&graph).map_err(|err| err.to_string())?;
        let objective = match e.kind {
            Kind::Quartic => make_quartic(&random_quartic_coeffs(m, o.coeff_seed)),
            Kind::Custom => {
                let coeffs: Vec<_> =
                    o.coefficients.as_ref().expect("validated").iter().map(|c| (c[0], c[1], c[2], c[3])).collect();
                if coeffs.len() != m {
                    return Err(format!("{} coefficient rows for {m} agents", coeffs.len()));
                }
                make_quartic(&coeffs)
            }
            Kind::Logistic => make_logistic(&generate_logistic_data(m, o.features, o.data_seed), o.eta, o.inner_dim),
        }
        .map_err(|err| err.to_string())?;
        let init = match &self.run.init {
            Some(v) => v.clone(),
            None => default_init(e.kind, objective.n()),
        };
        if init.len() != objective.n() {
            return Err(format!("run.init has length {}, objective dimension is {}", init.len(), objective.n()));
        }
        let x0 = LiftedPoint::consensual(m, &init);
        Ok(Instance { graph, mixing, objective, x0 })
    }
}

/// Just off the stable manifold of the saddle at the origin.
fn default_init(kind: Kind, n: usize) -> Vec<f64> {
    match (kind, n) {
        (Kind::Logistic, 2) => vec![1.0 - 1e-5, -1.0 - 1e-5],
        (Kind::Logistic, _) => vec![1e-5; n],
        _ => vec![1.0 - 1e-5, 1e-5],
    }
}
