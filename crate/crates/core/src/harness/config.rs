//! Experiment configuration: JSON text, every field optional, filled from a
//! named preset.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::dkf::{default_delta, ConsensusParams};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::graph::Graph;
use crate::model::{NodeOutput, Plant};
use crate::pushsum::default_eps;

/// Name of the preset reproducing the simulation study.
pub const PAPER5: &str = "paper5";
/// Small preset for quick checks.
pub const SMOKE: &str = "smoke";

#[derive(Debug, Clone, PartialEq)]
pub enum PlantSpec {
    PlanarTracker { tau: f64, sigma: f64, sigma_g: f64 },
    Matrices(MatrixPlant),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixPlant {
    pub a: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    /// One entry per node; `null` for a node without sensors.
    pub outputs: Vec<Option<OutputSpec>>,
    pub x0_mean: Vec<f64>,
    pub x0_cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub c: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Default,
    File(PathBuf),
    Edges { n: usize, edges: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaSpec {
    /// `ρ(L̄) + 0.5`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Frozen,
    Live,
}

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub plant: PlantSpec,
    pub graph: GraphSpec,
    pub p_beta: Vec<f64>,
    pub gamma: Vec<usize>,
    pub delta: DeltaSpec,
    pub allow_small_delta: bool,
    pub trials: usize,
    pub horizon: usize,
    /// Fraction of the horizon excluded from the MSE window.
    pub burn_in: f64,
    pub seed: u64,
    pub mode: RunMode,
    pub out_dir: PathBuf,
    pub leader: usize,
    /// Push-Sum stopping threshold; `None` uses [`default_eps`].
    pub eps: Option<f64>,
    pub pushsum_max_rounds: usize,
    pub exec: ExecMode,
    /// Trials per evaluation in the minimal-`p_β` sweep.
    pub sweep_trials: usize,
    /// Bisection steps per γ in the sweep.
    pub sweep_iterations: usize,
    /// Samples for the disconnection probability when the graph is too
    /// large to enumerate.
    pub pd_trials: usize,
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Option<Self> {
        let paper5 = ExperimentConfig {
            plant: PlantSpec::PlanarTracker {
                tau: 0.25,
                sigma: 0.05,
                sigma_g: 0.1,
            },
            graph: GraphSpec::Default,
            p_beta: vec![1.0, 0.7, 0.6, 0.5],
            gamma: vec![1, 2, 3, 4, 8, 16, 20],
            delta: DeltaSpec::Auto,
            allow_small_delta: false,
            trials: 300,
            horizon: 450,
            burn_in: 0.2,
            seed: 2024,
            mode: RunMode::Frozen,
            out_dir: PathBuf::from("out"),
            leader: 0,
            eps: None,
            pushsum_max_rounds: 1000,
            exec: ExecMode::default(),
            sweep_trials: 60,
            sweep_iterations: 6,
            pd_trials: 100_000,
        };
        match name {
            PAPER5 => Some(paper5),
            SMOKE => Some(ExperimentConfig {
                p_beta: vec![1.0, 0.7],
                gamma: vec![2, 8],
                trials: 20,
                horizon: 100,
                sweep_trials: 10,
                sweep_iterations: 3,
                pd_trials: 10_000,
                ..paper5
            }),
            _ => None,
        }
    }

    pub fn build_plant(&self) -> Result<Plant> {
        match &self.plant {
            PlantSpec::PlanarTracker { tau, sigma, sigma_g } => Plant::planar_tracker(*tau, *sigma, *sigma_g),
            PlantSpec::Matrices(m) => {
                let a = matrix("plant.a", &m.a)?;
                let n = a.nrows();
                let outputs = m
                    .outputs
                    .iter()
                    .enumerate()
                    .map(|(i, o)| match o {
                        None => Ok(NodeOutput::none(n)),
                        Some(o) => Ok(NodeOutput::new(
                            matrix(&format!("plant.outputs[{i}].c"), &o.c)?,
                            matrix(&format!("plant.outputs[{i}].r"), &o.r)?,
                        )),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Plant::new(
                    a,
                    matrix("plant.q", &m.q)?,
                    outputs,
                    DVector::from_column_slice(&m.x0_mean),
                    matrix("plant.x0_cov", &m.x0_cov)?,
                )
            }
        }
    }

    pub fn build_graph(&self) -> Result<Graph> {
        match &self.graph {
            GraphSpec::Default => Ok(Graph::default_topology()),
            GraphSpec::File(path) => Graph::read_edge_list(path),
            GraphSpec::Edges { n, edges } => Graph::new(*n, edges),
        }
    }

    pub fn delta_for(&self, graph: &Graph) -> Result<f64> {
        match self.delta {
            DeltaSpec::Auto => default_delta(graph),
            DeltaSpec::Fixed(d) => Ok(d),
        }
    }

    /// Consensus parameters for one γ, with the warning raised when the
    /// spectral condition is overridden.
    pub fn params(&self, graph: &Graph, gamma: usize) -> Result<(ConsensusParams, Option<String>)> {
        ConsensusParams::new(self.delta_for(graph)?, gamma, graph, self.allow_small_delta)
    }

    pub fn eps_for(&self, plant: &Plant) -> f64 {
        self.eps.unwrap_or_else(|| default_eps(plant))
    }

    /// First time index of the MSE window.
    pub fn window_start(&self) -> usize {
        ((self.burn_in * self.horizon as f64).round() as usize).max(1)
    }
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension(format!("{field}: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    plant: Option<RawPlant>,
    graph: Option<RawGraph>,
    p_beta: Option<Vec<f64>>,
    gamma: Option<Vec<usize>>,
    delta: Option<RawDelta>,
    allow_small_delta: Option<bool>,
    trials: Option<usize>,
    horizon: Option<usize>,
    burn_in: Option<f64>,
    seed: Option<u64>,
    mode: Option<RunMode>,
    out_dir: Option<PathBuf>,
    leader: Option<usize>,
    eps: Option<f64>,
    pushsum_max_rounds: Option<usize>,
    exec: Option<ExecMode>,
    sweep_trials: Option<usize>,
    sweep_iterations: Option<usize>,
    pd_trials: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawPlant {
    PlanarTracker {
        tau: Option<f64>,
        sigma: Option<f64>,
        sigma_g: Option<f64>,
    },
    Matrices(MatrixPlant),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawGraph {
    Name(String),
    File { file: PathBuf },
    Edges { n: usize, edges: Vec<(usize, usize)> },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawDelta {
    Number(f64),
    Name(String),
}

/// Parses and validates a configuration. Relative graph paths are resolved
/// against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        Error::Config {
            field: if field == "." { "<root>".into() } else { field },
            line: inner.line(),
            message: inner.to_string(),
        }
    })?;
    let invalid = |field: &str, message: String| Error::Config {
        field: field.to_string(),
        line: key_line(text, field),
        message,
    };

    let preset = raw.preset.as_deref().unwrap_or(PAPER5);
    let mut cfg = ExperimentConfig::preset(preset)
        .ok_or_else(|| invalid("preset", format!("unknown preset `{preset}` (known: {PAPER5}, {SMOKE})")))?;

    if let Some(p) = raw.plant {
        cfg.plant = match p {
            RawPlant::PlanarTracker { tau, sigma, sigma_g } => {
                let (t0, s0, g0) = match cfg.plant {
                    PlantSpec::PlanarTracker { tau, sigma, sigma_g } => (tau, sigma, sigma_g),
                    PlantSpec::Matrices(_) => unreachable!("presets use the tracker"),
                };
                PlantSpec::PlanarTracker {
                    tau: tau.unwrap_or(t0),
                    sigma: sigma.unwrap_or(s0),
                    sigma_g: sigma_g.unwrap_or(g0),
                }
            }
            RawPlant::Matrices(m) => PlantSpec::Matrices(m),
        };
    }
    if let Some(g) = raw.graph {
        cfg.graph = match g {
            RawGraph::Name(name) if name == "default" => GraphSpec::Default,
            RawGraph::Name(name) => {
                return Err(invalid("graph", format!("unknown graph `{name}`; use \"default\", {{\"file\": ...}} or {{\"n\": ..., \"edges\": ...}}")))
            }
            RawGraph::File { file } => GraphSpec::File(if file.is_relative() { base_dir.join(file) } else { file }),
            RawGraph::Edges { n, edges } => GraphSpec::Edges { n, edges },
        };
    }
    if let Some(d) = raw.delta {
        cfg.delta = match d {
            RawDelta::Number(x) => DeltaSpec::Fixed(x),
            RawDelta::Name(s) if s == "auto" => DeltaSpec::Auto,
            RawDelta::Name(s) => return Err(invalid("delta", format!("expected \"auto\" or a number, got `{s}`"))),
        };
    }
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = raw.$f { cfg.$f = v; } )* };
    }
    set!(p_beta, gamma, allow_small_delta, trials, horizon, burn_in, seed, mode, out_dir, leader, pushsum_max_rounds, exec, sweep_trials, sweep_iterations, pd_trials);
    if raw.eps.is_some() {
        cfg.eps = raw.eps;
    }
    validate(&cfg).map_err(|(field, message)| invalid(field, message))?;
    Ok(cfg)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, path.parent().unwrap_or(Path::new("")))
}

fn validate(cfg: &ExperimentConfig) -> std::result::Result<(), (&'static str, String)> {
    if cfg.trials < 1 {
        return Err(("trials", "must be at least 1".into()));
    }
    if cfg.horizon < 10 {
        return Err(("horizon", format!("must be at least 10, got {}", cfg.horizon)));
    }
    if !(cfg.burn_in >= 0.0 && cfg.burn_in < 1.0) {
        return Err(("burn_in", format!("must lie in [0, 1), got {}", cfg.burn_in)));
    }
    if cfg.p_beta.is_empty() {
        return Err(("p_beta", "list is empty".into()));
    }
    if let Some(p) = cfg.p_beta.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(("p_beta", format!("values must lie in (0, 1], got {p}")));
    }
    if cfg.gamma.is_empty() {
        return Err(("gamma", "list is empty".into()));
    }
    if cfg.gamma.contains(&0) {
        return Err(("gamma", "values must be at least 1".into()));
    }
    if let DeltaSpec::Fixed(d) = cfg.delta {
        if !(d > 0.0 && d.is_finite()) {
            return Err(("delta", format!("must be positive, got {d}")));
        }
    }
    if let Some(eps) = cfg.eps {
        if !(eps >= 0.0) {
            return Err(("eps", format!("must be non-negative, got {eps}")));
        }
    }
    if cfg.pushsum_max_rounds < 1 {
        return Err(("pushsum_max_rounds", "must be at least 1".into()));
    }
    if cfg.sweep_trials < 1 {
        return Err(("sweep_trials", "must be at least 1".into()));
    }
    if cfg.pd_trials < 1 {
        return Err(("pd_trials", "must be at least 1".into()));
    }
    Ok(())
}

/// Line of the first occurrence of `"field"` as a key, or 0 if absent.
fn key_line(text: &str, field: &str) -> usize {
    let needle = format!("\"{field}\"");
    text.lines()
        .position(|l| l.contains(&needle))
        .map_or(0, |i| i + 1)
}
