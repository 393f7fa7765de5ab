//! Monte-Carlo trials of the distributed filter against the centralized one
//! on identical noise.

use nalgebra::{DMatrix, DVector};

use crate::dkf::{ConsensusParams, DkfNetwork, FrozenGains, DIVERGENCE_THRESHOLD};
use crate::error::Result;
use crate::exec::{map_indices, ExecMode};
use crate::graph::LinkFailureModel;
use crate::model::{centralized_kf, CentralizedSolution, Plant};
use crate::rng::{self, DOMAIN_PLANT};

/// How the nodes obtain `(G_i, N_i)`, `P^(i)` and `K^(i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainSource {
    /// Push-Sum to stop, then local Riccati to convergence.
    Frozen { leader: usize, eps: f64, max_rounds: usize },
    /// Push-Sum and Riccati interleaved with estimation.
    Live { leader: usize, eps: f64 },
    /// Exact `G`, `N` at every node; skips the agreement phase.
    Exact,
}

#[derive(Debug, Clone)]
pub struct TrialSetup<'a> {
    pub plant: &'a Plant,
    pub sol: &'a CentralizedSolution,
    /// Failure law; trial `k` draws from `links.for_trial(k)`.
    pub links: &'a LinkFailureModel,
    pub params: ConsensusParams,
    pub gains: GainSource,
    pub horizon: usize,
    /// First time index of the averaging window `[window_start, horizon]`.
    pub window_start: usize,
    /// Seed for process and measurement noise, shared across failure laws
    /// and consensus settings so every configuration sees the same noise.
    pub noise_seed: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrialRecord {
    /// Keep the stacked error `E_t` for every `t`.
    pub errors: bool,
    /// Keep each node's time-averaged error outer product over the window.
    pub node_cov: bool,
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    /// Time step at which `‖E_t‖` crossed the divergence threshold.
    pub diverged_at: Option<usize>,
    /// Window average of `(1/N) Σ_i ‖e^(i)_t‖²`; NaN for divergent trials.
    pub mse: f64,
    /// Window average of the centralized filter's `‖e_t‖²`.
    pub ckf_mse: f64,
    pub node_cov: Vec<DMatrix<f64>>,
    /// `errors[t] = E_t`, `t = 0..=horizon` (truncated at divergence).
    pub errors: Vec<DVector<f64>>,
    pub pushsum_rounds: usize,
}

impl TrialOutcome {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

impl<'a> TrialSetup<'a> {
    /// Agreement phase of trial `trial`, reusable across consensus settings.
    pub fn frozen_gains(&self, trial: u64) -> Result<FrozenGains> {
        match self.gains {
            GainSource::Frozen { leader, eps, max_rounds } => {
                FrozenGains::compute(self.plant, &self.links.for_trial(trial), leader, eps, max_rounds)
            }
            _ => FrozenGains::exact(self.plant),
        }
    }

    /// Runs trial `trial`. `cached` replaces the agreement phase when given.
    pub fn run(&self, trial: u64, cached: Option<&FrozenGains>, record: TrialRecord) -> Result<TrialOutcome> {
        let plant = self.plant;
        let links = self.links.for_trial(trial);
        let mut noise_rng = rng::stream(self.noise_seed, DOMAIN_PLANT, trial);
        let traj = plant.simulate(self.horizon, &mut noise_rng);

        let owned;
        let mut net = match self.gains {
            GainSource::Live { leader, eps } => DkfNetwork::live(plant, &links, self.params, leader, eps)?,
            _ => {
                let gains = match cached {
                    Some(g) => g,
                    None => {
                        owned = self.frozen_gains(trial)?;
                        &owned
                    }
                };
                DkfNetwork::frozen(plant, &links, self.params, gains)?
            }
        };

        let x_hat0 = DVector::zeros(plant.n());
        let ckf = centralized_kf(plant, self.sol, &traj, &x_hat0, self.window_start)?;

        let n = plant.n();
        let nn = plant.n_nodes();
        let mut node_cov = if record.node_cov {
            vec![DMatrix::zeros(n, n); nn]
        } else {
            Vec::new()
        };
        let mut errors = Vec::new();
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut diverged_at = None;

        let first = net.error_vector(&traj.states[0]);
        if record.errors {
            errors.push(first.e);
        }
        for t in 1..=self.horizon {
            net.step(plant, &traj.measurements[t - 1])?;
            let e = net.error_vector(&traj.states[t]);
            let sq = e.norm_squared();
            if !(sq.sqrt() <= DIVERGENCE_THRESHOLD) {
                diverged_at = Some(t);
                break;
            }
            if t >= self.window_start {
                sum += sq / nn as f64;
                count += 1;
                if record.node_cov {
                    for (i, cov) in node_cov.iter_mut().enumerate() {
                        let ei = e.e.rows(i * n, n);
                        *cov += ei * ei.transpose();
                    }
                }
            }
            if record.errors {
                errors.push(e.e);
            }
        }
        if record.node_cov && count > 0 {
            for cov in &mut node_cov {
                *cov /= count as f64;
            }
        }
        let mse = if diverged_at.is_some() || count == 0 {
            f64::NAN
        } else {
            sum / count as f64
        };
        Ok(TrialOutcome {
            diverged_at,
            mse,
            ckf_mse: ckf.mse,
            node_cov,
            errors,
            pushsum_rounds: net_pushsum_rounds(cached, &self.gains),
        })
    }

    /// Runs trials `0..trials` in index order of the results.
    pub fn run_many(&self, trials: usize, cached: Option<&[FrozenGains]>, record: TrialRecord, mode: ExecMode) -> Result<Vec<TrialOutcome>> {
        map_indices(mode, trials, |k| self.run(k as u64, cached.map(|c| &c[k]), record))
            .into_iter()
            .collect()
    }

    /// Agreement phase for trials `0..trials`.
    pub fn frozen_gains_many(&self, trials: usize, mode: ExecMode) -> Result<Vec<FrozenGains>> {
        map_indices(mode, trials, |k| self.frozen_gains(k as u64)).into_iter().collect()
    }
}

fn net_pushsum_rounds(cached: Option<&FrozenGains>, source: &GainSource) -> usize {
    match (cached, source) {
        (Some(g), _) => g.pushsum_rounds,
        _ => 0,
    }
}

/// Summary of a batch of trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSummary {
    pub mse_mean: f64,
    pub mse_stderr: f64,
    pub diverged_fraction: f64,
    pub ckf_mse: f64,
    pub trials: usize,
}

/// Divergent trials are excluded from the MSE mean and counted separately.
pub fn summarize(outcomes: &[TrialOutcome]) -> TrialSummary {
    let finite: Vec<f64> = outcomes.iter().filter(|o| !o.diverged()).map(|o| o.mse).collect();
    let (mse_mean, mse_stderr) = mean_stderr(&finite);
    let ckf: Vec<f64> = outcomes.iter().map(|o| o.ckf_mse).collect();
    TrialSummary {
        mse_mean,
        mse_stderr,
        diverged_fraction: (outcomes.len() - finite.len()) as f64 / outcomes.len().max(1) as f64,
        ckf_mse: mean_stderr(&ckf).0,
        trials: outcomes.len(),
    }
}

/// Sample mean and standard error; NaN mean for an empty sample, zero error
/// for a single value.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
