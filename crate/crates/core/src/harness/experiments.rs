//! Monte-Carlo runners behind the `dkf-net` subcommands.

use crate::analysis::{bounds_report, BoundsReport};
use crate::dkf::FrozenGains;
use crate::error::Result;
use crate::exec::map_indices;
use crate::graph::{Graph, LinkFailureModel};
use crate::model::{solve_riccati, CentralizedSolution, Plant, RICCATI_MAX_ITER, RICCATI_TOL};
use crate::pushsum::{gain_errors, PushSumNetwork};
use crate::sim::{summarize, GainSource, TrialRecord, TrialSetup};

use super::config::{ExperimentConfig, RunMode};

/// Lower end of the `p_β` bisection.
pub const SWEEP_P_MIN: f64 = 0.05;

/// A trial set counts as admissible only below this divergence fraction.
pub const SWEEP_MAX_DIVERGED: f64 = 0.0;

/// Plant, graph and centralized solution built from a configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub plant: Plant,
    pub graph: Graph,
    pub sol: CentralizedSolution,
    pub delta: f64,
    pub eps: f64,
    /// Raised when `δ ≤ ρ(L̄)` was allowed by the override flag.
    pub warning: Option<String>,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let plant = cfg.build_plant()?;
        let graph = cfg.build_graph()?;
        if graph.n_nodes() != plant.n_nodes() {
            return Err(crate::Error::Dimension(format!(
                "graph has {} nodes but the plant has {}",
                graph.n_nodes(),
                plant.n_nodes()
            )));
        }
        if !graph.is_connected() {
            return Err(crate::Error::Disconnected);
        }
        if cfg.leader >= graph.n_nodes() {
            return Err(crate::Error::InvalidParameter(format!("leader {} is not a node", cfg.leader)));
        }
        let (params, warning) = cfg.params(&graph, 1)?;
        let sol = solve_riccati(&plant, RICCATI_TOL, RICCATI_MAX_ITER)?;
        let eps = cfg.eps_for(&plant);
        Ok(Setup {
            plant,
            graph,
            sol,
            delta: params.delta,
            eps,
            warning,
        })
    }

    fn links(&self, cfg: &ExperimentConfig, p_beta: f64) -> Result<LinkFailureModel> {
        LinkFailureModel::new(self.graph.clone(), p_beta, cfg.seed)
    }

    fn gain_source(&self, cfg: &ExperimentConfig) -> GainSource {
        match cfg.mode {
            RunMode::Frozen => GainSource::Frozen {
                leader: cfg.leader,
                eps: self.eps,
                max_rounds: cfg.pushsum_max_rounds,
            },
            RunMode::Live => GainSource::Live {
                leader: cfg.leader,
                eps: self.eps,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseRow {
    pub p_beta: f64,
    pub gamma: usize,
    pub mse_mean: f64,
    pub mse_stderr: f64,
    pub diverged_fraction: f64,
    pub ckf_mse: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MseTable {
    pub rows: Vec<MseRow>,
}

impl MseTable {
    pub fn get(&self, p_beta: f64, gamma: usize) -> Option<&MseRow> {
        self.rows.iter().find(|r| r.p_beta == p_beta && r.gamma == gamma)
    }
}

/// MSE for every `(p_β, γ)` of the configuration with `trials` trials each.
/// The agreement phase of each trial is computed once per `p_β` and shared
/// by all γ; process noise is shared by every cell.
pub fn run_mse_grid(cfg: &ExperimentConfig, setup: &Setup, p_betas: &[f64], gammas: &[usize], trials: usize) -> Result<MseTable> {
    let mut rows = Vec::new();
    for &p in p_betas {
        let links = setup.links(cfg, p)?;
        let mut trial = TrialSetup {
            plant: &setup.plant,
            sol: &setup.sol,
            links: &links,
            params: cfg.params(&setup.graph, 1)?.0,
            gains: setup.gain_source(cfg),
            horizon: cfg.horizon,
            window_start: cfg.window_start(),
            noise_seed: cfg.seed,
        };
        let cached: Option<Vec<FrozenGains>> = match cfg.mode {
            RunMode::Frozen => Some(trial.frozen_gains_many(trials, cfg.exec)?),
            RunMode::Live => None,
        };
        for &gamma in gammas {
            trial.params = cfg.params(&setup.graph, gamma)?.0;
            let outcomes = trial.run_many(trials, cached.as_deref(), TrialRecord::default(), cfg.exec)?;
            let s = summarize(&outcomes);
            rows.push(MseRow {
                p_beta: p,
                gamma,
                mse_mean: s.mse_mean,
                mse_stderr: s.mse_stderr,
                diverged_fraction: s.diverged_fraction,
                ckf_mse: s.ckf_mse,
                trials: s.trials,
            });
        }
    }
    Ok(MseTable { rows })
}

pub fn run_mse_experiment(cfg: &ExperimentConfig) -> Result<MseTable> {
    let setup = Setup::new(cfg)?;
    run_mse_grid(cfg, &setup, &cfg.p_beta, &cfg.gamma, cfg.trials)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsRow {
    pub p_beta: f64,
    /// The report, or the reason it could not be computed.
    pub report: std::result::Result<BoundsReport, String>,
}

pub fn run_bounds_report(cfg: &ExperimentConfig) -> Result<Vec<BoundsRow>> {
    let setup = Setup::new(cfg)?;
    cfg.p_beta
        .iter()
        .map(|&p| {
            let links = setup.links(cfg, p)?;
            Ok(BoundsRow {
                p_beta: p,
                report: bounds_report(&setup.plant, &setup.sol, &links, setup.delta, cfg.pd_trials).map_err(|e| e.to_string()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub gamma: usize,
    /// Smallest admissible `p_β` found, `None` when even `p_β = 1` fails.
    pub min_p_beta: Option<f64>,
    /// Relative MSE excess at `min_p_beta` (or at `p_β = 1` when none).
    pub excess: f64,
}

/// Whether a cell keeps every trial bounded and its MSE within `tol` of
/// the centralized filter.
pub fn admissible(row: &MseRow, tol: f64) -> bool {
    row.diverged_fraction <= SWEEP_MAX_DIVERGED && relative_excess(row) <= tol
}

pub fn relative_excess(row: &MseRow) -> f64 {
    if row.mse_mean.is_nan() {
        f64::INFINITY
    } else {
        (row.mse_mean - row.ckf_mse) / row.ckf_mse
    }
}

/// For each γ, bisection on `p_β ∈ [0.05, 1]` for the smallest value whose
/// MSE stays within `tol` of the centralized filter, using
/// `cfg.sweep_trials` trials per evaluation. Admissibility is assumed
/// monotone in `p_β`.
pub fn run_min_pbeta_sweep(cfg: &ExperimentConfig, tol: f64) -> Result<Vec<SweepRow>> {
    let setup = Setup::new(cfg)?;
    let eval = |p: f64, gamma: usize| -> Result<MseRow> {
        Ok(run_mse_grid(cfg, &setup, &[p], &[gamma], cfg.sweep_trials)?.rows[0])
    };
    let mut out = Vec::new();
    for &gamma in &cfg.gamma {
        let top = eval(1.0, gamma)?;
        if !admissible(&top, tol) {
            out.push(SweepRow {
                gamma,
                min_p_beta: None,
                excess: relative_excess(&top),
            });
            continue;
        }
        let bottom = eval(SWEEP_P_MIN, gamma)?;
        if admissible(&bottom, tol) {
            out.push(SweepRow {
                gamma,
                min_p_beta: Some(SWEEP_P_MIN),
                excess: relative_excess(&bottom),
            });
            continue;
        }
        let (mut lo, mut hi, mut hi_row) = (SWEEP_P_MIN, 1.0, top);
        for _ in 0..cfg.sweep_iterations {
            let mid = 0.5 * (lo + hi);
            let row = eval(mid, gamma)?;
            if admissible(&row, tol) {
                hi = mid;
                hi_row = row;
            } else {
                lo = mid;
            }
        }
        out.push(SweepRow {
            gamma,
            min_p_beta: Some(hi),
            excess: relative_excess(&hi_row),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushSumRow {
    pub p_beta: f64,
    pub trials: usize,
    /// Trials in which every node stopped within the round budget.
    pub completed: usize,
    pub rounds_mean: f64,
    pub rounds_max: usize,
    pub g_err_median: f64,
    pub g_err_p95: f64,
    pub g_err_max: f64,
    pub n_err_max: f64,
}

/// Runs the agreement phase alone for every `p_β` and trial and reports the
/// worst-node relative errors of the gain estimates.
pub fn run_pushsum_report(cfg: &ExperimentConfig) -> Result<Vec<PushSumRow>> {
    let setup = Setup::new(cfg)?;
    cfg.p_beta
        .iter()
        .map(|&p| {
            let links = setup.links(cfg, p)?;
            let runs = map_indices(cfg.exec, cfg.trials, |k| -> Result<_> {
                let mut net = PushSumNetwork::new(&setup.plant, &links.for_trial(k as u64), cfg.leader, setup.eps)?;
                net.run(cfg.pushsum_max_rounds);
                let (g, n) = gain_errors(net.gains(), &setup.plant);
                Ok((net.rounds(), net.all_stopped(), g, n))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let mut g: Vec<f64> = runs.iter().map(|r| r.2).collect();
            g.sort_by(f64::total_cmp);
            Ok(PushSumRow {
                p_beta: p,
                trials: runs.len(),
                completed: runs.iter().filter(|r| r.1).count(),
                rounds_mean: runs.iter().map(|r| r.0 as f64).sum::<f64>() / runs.len() as f64,
                rounds_max: runs.iter().map(|r| r.0).max().unwrap_or(0),
                g_err_median: quantile(&g, 0.5),
                g_err_p95: quantile(&g, 0.95),
                g_err_max: g.last().copied().unwrap_or(f64::NAN),
                n_err_max: runs.iter().map(|r| r.3).fold(0.0, f64::max),
            })
        })
        .collect()
}

/// Nearest-rank quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
