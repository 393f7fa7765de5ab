//! Broadcast Push-Sum with self-substitution of lost packets.
//!
//! Every node splits its accumulators `(C̃, ñ, w)` into `ν̄^(i)` equal shares,
//! keeps one and broadcasts the others. When the link to a neighbor fails
//! (symmetrically, so both ends know), the node adds its own share in place
//! of the missing one. The network update is therefore the column-stochastic
//! matrix `Θ(t, ω) = I − L(ω)(I + D)⁻¹` acting on the stacked accumulators,
//! and `C̃/w`, `ñ/w` converge to `G = Σ C_iᵀR_i⁻¹C_i` and `N`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{Graph, LinkFailureModel};
use crate::linalg::spectral_norm;
use crate::model::Plant;
use crate::rng::RoundKey;

/// Weights at or below this magnitude are treated as zero in the ratio
/// estimates.
pub const WEIGHT_GUARD: f64 = 1e-14;

/// Consecutive rounds in which the stop rule must hold before a node stops.
pub const STOP_PATIENCE: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct PushSumNodeState {
    pub c_tilde: DMatrix<f64>,
    pub n_tilde: f64,
    pub w: f64,
    pub nu_bar: usize,
    pub stopped: bool,
    pub eps: f64,
}

/// A node's current estimate of `(G, N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainEstimate {
    pub g: DMatrix<f64>,
    pub n: f64,
}

/// Closed-form no-failure limit of one node's accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct PushSumLimit {
    pub c_tilde: DMatrix<f64>,
    pub n_tilde: f64,
    pub w: f64,
}

/// Stopping threshold used when none is configured:
/// `1e-9 · max(1, max_i ‖C_iᵀR_i⁻¹C_i‖)`.
pub fn default_eps(plant: &Plant) -> f64 {
    let scale = (0..plant.n_nodes())
        .map(|i| spectral_norm(plant.info_matrix(i)))
        .fold(1.0, f64::max);
    1e-9 * scale
}

pub fn init_pushsum(plant: &Plant, g: &Graph, leader: usize, eps: f64) -> Result<Vec<PushSumNodeState>> {
    if plant.n_nodes() != g.n_nodes() {
        return Err(Error::Dimension(format!(
            "plant has {} nodes, graph has {}",
            plant.n_nodes(),
            g.n_nodes()
        )));
    }
    if leader >= g.n_nodes() {
        return Err(Error::InvalidParameter(format!("leader {leader} is not a node")));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("stopping threshold must be >= 0, got {eps}")));
    }
    Ok((0..g.n_nodes())
        .map(|i| PushSumNodeState {
            c_tilde: plant.info_matrix(i).clone(),
            n_tilde: 1.0,
            w: if i == leader { 1.0 } else { 0.0 },
            nu_bar: g.nu_bar(i),
            stopped: false,
            eps,
        })
        .collect())
}

/// One synchronous round on the surviving sub-graph. Stopped nodes keep
/// their state but their last shares are still delivered to neighbors.
pub fn pushsum_round(states: &[PushSumNodeState], subgraph: &Graph, base: &Graph) -> Result<Vec<PushSumNodeState>> {
    if states.len() != base.n_nodes() {
        return Err(Error::Dimension("one state per node is required".into()));
    }
    if !subgraph.is_subgraph_of(base) {
        return Err(Error::InvalidGraph("failure sub-graph has edges outside the base graph".into()));
    }
    let mask: Vec<bool> = base.edges().iter().map(|&(a, b)| subgraph.has_edge(a, b)).collect();
    Ok(round_with_mask(states, base, &mask))
}

/// [`pushsum_round`] with the surviving edges given as a mask over
/// `base.edges()`.
pub fn round_with_mask(states: &[PushSumNodeState], base: &Graph, mask: &[bool]) -> Vec<PushSumNodeState> {
    let shares: Vec<_> = states
        .iter()
        .map(|s| {
            let k = 1.0 / s.nu_bar as f64;
            (&s.c_tilde * k, s.n_tilde * k, s.w * k)
        })
        .collect();
    // Each node starts from ν̄ copies of its own share (one kept, one per
    // incident link); a surviving link swaps the copy for the neighbor's.
    let mut next: Vec<_> = states
        .iter()
        .zip(&shares)
        .map(|(s, (c, n, w))| {
            let k = s.nu_bar as f64;
            (c * k, n * k, w * k)
        })
        .collect();
    for (&(i, j), &up) in base.edges().iter().zip(mask) {
        if !up {
            continue;
        }
        let (ci, ni, wi) = &shares[i];
        let (cj, nj, wj) = &shares[j];
        let delta_c = cj - ci;
        next[i].0 += &delta_c;
        next[i].1 += nj - ni;
        next[i].2 += wj - wi;
        next[j].0 -= &delta_c;
        next[j].1 -= nj - ni;
        next[j].2 -= wj - wi;
    }
    states
        .iter()
        .zip(next)
        .map(|(s, (c, n, w))| {
            if s.stopped {
                s.clone()
            } else {
                PushSumNodeState {
                    c_tilde: c,
                    n_tilde: n,
                    w,
                    ..s.clone()
                }
            }
        })
        .collect()
}

/// Ratio estimate of `(G, N)`, falling back to the node's own information
/// when its weight is still zero.
pub fn gain_estimate(s: &PushSumNodeState, local_info: &DMatrix<f64>) -> GainEstimate {
    if s.w.abs() > WEIGHT_GUARD {
        GainEstimate {
            g: &s.c_tilde / s.w,
            n: s.n_tilde / s.w,
        }
    } else {
        GainEstimate {
            g: local_info.clone(),
            n: 1.0,
        }
    }
}

/// `‖C̃_{t+1}‖ > 0` and `‖C̃_{t+1} − C̃_t‖ < ε`, spectral norms.
pub fn stop_check(current: &DMatrix<f64>, previous: &DMatrix<f64>, eps: f64) -> bool {
    spectral_norm(current) > 0.0 && spectral_norm(&(current - previous)) < eps
}

/// `ν̄^(i) / Σ_j ν̄^(j) · (G, N, 1)` for every node.
pub fn pushsum_limits_oracle(plant: &Plant, g: &Graph) -> Result<Vec<PushSumLimit>> {
    if plant.n_nodes() != g.n_nodes() {
        return Err(Error::Dimension("plant and graph disagree on the node count".into()));
    }
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let total: usize = (0..g.n_nodes()).map(|i| g.nu_bar(i)).sum();
    let big_g = plant.aggregate_info();
    let n = g.n_nodes() as f64;
    Ok((0..g.n_nodes())
        .map(|i| {
            let share = g.nu_bar(i) as f64 / total as f64;
            PushSumLimit {
                c_tilde: &big_g * share,
                n_tilde: n * share,
                w: share,
            }
        })
        .collect())
}

/// Step-by-step driver for the gain agreement phase. Round `t` draws its
/// link failures with key `(t, ⊥)`.
#[derive(Debug, Clone)]
pub struct PushSumNetwork {
    links: LinkFailureModel,
    info: Vec<DMatrix<f64>>,
    states: Vec<PushSumNodeState>,
    gains: Vec<GainEstimate>,
    stop_round: Vec<Option<usize>>,
    streak: Vec<usize>,
    patience: usize,
    round: usize,
    mask: Vec<bool>,
}

impl PushSumNetwork {
    pub fn new(plant: &Plant, links: &LinkFailureModel, leader: usize, eps: f64) -> Result<Self> {
        let states = init_pushsum(plant, links.base(), leader, eps)?;
        let info: Vec<_> = (0..plant.n_nodes()).map(|i| plant.info_matrix(i).clone()).collect();
        let gains = states.iter().zip(&info).map(|(s, c)| gain_estimate(s, c)).collect();
        Ok(PushSumNetwork {
            links: links.clone(),
            info,
            stop_round: vec![None; states.len()],
            streak: vec![0; states.len()],
            patience: STOP_PATIENCE,
            states,
            gains,
            round: 0,
            mask: vec![false; links.base().n_edges()],
        })
    }

    /// Number of consecutive qualifying rounds required before a node stops
    /// (at least 1).
    pub fn with_patience(mut self, patience: usize) -> Self {
        self.patience = patience.max(1);
        self
    }

    /// One round of updates, gain estimates and stop checks.
    ///
    /// A round counts towards stopping only if the node received at least
    /// one packet (with every link down its accumulators are unchanged by
    /// construction), its weight is nonzero, and [`stop_check`] holds. The
    /// node stops after `patience` such rounds in a row; a single small
    /// change can be an exact cancellation of in- and outflow in the first
    /// rounds, long before the ratios are meaningful.
    pub fn step(&mut self) {
        let base = self.links.base();
        self.links.fill_mask(RoundKey::outer(self.round as u64), &mut self.mask);
        let next = round_with_mask(&self.states, base, &self.mask);
        let mut heard = vec![false; self.states.len()];
        for (&(i, j), &up) in base.edges().iter().zip(&self.mask) {
            if up {
                heard[i] = true;
                heard[j] = true;
            }
        }
        self.round += 1;
        for (i, mut s) in next.into_iter().enumerate() {
            if !s.stopped {
                self.gains[i] = gain_estimate(&s, &self.info[i]);
                if heard[i] {
                    if s.w.abs() > WEIGHT_GUARD && stop_check(&s.c_tilde, &self.states[i].c_tilde, s.eps) {
                        self.streak[i] += 1;
                    } else {
                        self.streak[i] = 0;
                    }
                }
                if self.streak[i] >= self.patience {
                    s.stopped = true;
                    self.stop_round[i] = Some(self.round);
                }
            }
            self.states[i] = s;
        }
    }

    pub fn all_stopped(&self) -> bool {
        self.states.iter().all(|s| s.stopped)
    }

    /// Steps until every node has stopped or `max_rounds` rounds have run.
    pub fn run(&mut self, max_rounds: usize) {
        while self.round < max_rounds && !self.all_stopped() {
            self.step();
        }
    }

    pub fn rounds(&self) -> usize {
        self.round
    }

    pub fn states(&self) -> &[PushSumNodeState] {
        &self.states
    }

    pub fn gains(&self) -> &[GainEstimate] {
        &self.gains
    }

    /// Round after which each node stopped, if it did.
    pub fn stop_rounds(&self) -> &[Option<usize>] {
        &self.stop_round
    }
}

/// Worst relative error `max_i ‖G_i − G‖ / ‖G‖` and `max_i |N_i − N| / N`.
pub fn gain_errors(gains: &[GainEstimate], plant: &Plant) -> (f64, f64) {
    let g = plant.aggregate_info();
    let gn = spectral_norm(&g).max(f64::MIN_POSITIVE);
    let n = plant.n_nodes() as f64;
    gains.iter().fold((0.0_f64, 0.0_f64), |(eg, en), est| {
        (
            eg.max(spectral_norm(&(&est.g - &g)) / gn),
            en.max((est.n - n).abs() / n),
        )
    })
}
