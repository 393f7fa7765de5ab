//! Per-node filter recursion and consensus averaging under link failures.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{Graph, LinkFailureModel};
use crate::linalg::spectral_norm;
use crate::model::{riccati_step, Plant, RICCATI_MAX_ITER, RICCATI_TOL};
use crate::pushsum::{GainEstimate, PushSumNetwork};
use crate::rng::RoundKey;

/// A trial is labeled divergent once `‖E_t‖` exceeds this value.
pub const DIVERGENCE_THRESHOLD: f64 = 1e8;

/// Consensus gain δ and number of consensus rounds γ per time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusParams {
    pub delta: f64,
    pub gamma: usize,
}

impl ConsensusParams {
    /// Checks `δ > ρ(L̄)`. With `allow_small_delta` the check is skipped and
    /// only `δ > 0` is required; `Ok((params, warning))` then carries a
    /// message when the bound is violated.
    pub fn new(delta: f64, gamma: usize, graph: &Graph, allow_small_delta: bool) -> Result<(Self, Option<String>)> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("consensus gain must be positive, got {delta}")));
        }
        let rho = graph.laplacian_radius()?;
        let mut warning = None;
        if delta <= rho {
            let msg = format!("consensus gain {delta} does not exceed the Laplacian spectral radius {rho:.6}");
            if !allow_small_delta {
                return Err(Error::InvalidParameter(msg));
            }
            warning = Some(msg);
        }
        Ok((ConsensusParams { delta, gamma }, warning))
    }
}

/// Margin added to a spectral bound when δ is chosen automatically.
pub const DELTA_MARGIN: f64 = 0.5;

/// `ρ(L̄) + 0.5`, the automatic consensus gain.
pub fn default_delta(graph: &Graph) -> Result<f64> {
    Ok(graph.laplacian_radius()? + DELTA_MARGIN)
}

/// `max_{(i,j) ∈ ℰ} (ν^(i) + ν^(j)) + 0.5`.
///
/// The largest degree sum over an edge bounds ρ(L̄) from above and can be
/// agreed on with a max-consensus over neighbor degrees, so it is usable
/// when the topology is not known centrally. The maximum degree alone is not
/// enough: ρ(L̄) ≥ max_i ν^(i) + 1 on every graph with an edge.
pub fn local_delta_bound(graph: &Graph) -> f64 {
    let bound = graph
        .edges()
        .iter()
        .map(|&(i, j)| graph.degree(i) + graph.degree(j))
        .max()
        .unwrap_or(0);
    bound as f64 + DELTA_MARGIN
}

#[derive(Debug, Clone, PartialEq)]
pub struct DkfNodeState {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub x_hat: DVector<f64>,
    pub z: DVector<f64>,
    pub gains: GainEstimate,
}

impl DkfNodeState {
    /// `x̂_0 = 0` and `P_0 = I` with the given gain estimates.
    pub fn initial(plant: &Plant, i: usize, gains: GainEstimate) -> Self {
        let n = plant.n();
        DkfNodeState {
            p: DMatrix::identity(n, n),
            k: DMatrix::zeros(n, plant.output(i).dim()),
            x_hat: DVector::zeros(n),
            z: DVector::zeros(n),
            gains,
        }
    }
}

/// Local Riccati and gain: `P⁺ = (APAᵀ+Q)(I + G_i(APAᵀ+Q))⁻¹`,
/// `K⁺ = N_i P⁺ C_iᵀ R_i⁻¹`, or zero for a node without sensors.
pub fn local_gain_update(s: &DkfNodeState, plant: &Plant, i: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = riccati_step(plant.a(), plant.q(), &s.p, &s.gains.g)?;
    let k = node_gain(plant, i, &p, s.gains.n);
    Ok((p, k))
}

fn node_gain(plant: &Plant, i: usize, p: &DMatrix<f64>, n_est: f64) -> DMatrix<f64> {
    let out = plant.output(i);
    if out.has_sensor() {
        p * out.c.transpose() * plant.r_inv(i) * n_est
    } else {
        DMatrix::zeros(plant.n(), out.dim())
    }
}

/// `z_0 = A x̂ + K (y − C_i A x̂)`; pure prediction for a node without
/// measurements.
pub fn local_correct(
    x_hat: &DVector<f64>,
    k: &DMatrix<f64>,
    y: &DVector<f64>,
    plant: &Plant,
    i: usize,
) -> Result<DVector<f64>> {
    let out = plant.output(i);
    if x_hat.len() != plant.n() {
        return Err(Error::Dimension("estimate has the wrong length".into()));
    }
    let pred = plant.a() * x_hat;
    if out.dim() == 0 {
        return Ok(pred);
    }
    if y.len() != out.dim() || k.shape() != (plant.n(), out.dim()) {
        return Err(Error::Dimension(format!("measurement or gain of node {i} has the wrong size")));
    }
    let innov = y - &out.c * &pred;
    Ok(pred + k * innov)
}

/// `z^(i)⁺ = z^(i) + (1/δ) Σ_{j ∈ 𝒩^(i)(ω)} (z^(j) − z^(i))` on the surviving
/// sub-graph.
pub fn consensus_round(z: &[DVector<f64>], subgraph: &Graph, delta: f64) -> Vec<DVector<f64>> {
    assert_eq!(z.len(), subgraph.n_nodes(), "one value per node");
    let mut next = z.to_vec();
    for &(i, j) in subgraph.edges() {
        let d = (&z[j] - &z[i]) / delta;
        next[i] += &d;
        next[j] -= &d;
    }
    next
}

/// Consensus round on the columns of `z` (one column per node), writing into
/// `out`. Only edges of `base` whose mask entry is true take part.
pub fn consensus_round_into(z: &DMatrix<f64>, out: &mut DMatrix<f64>, base: &Graph, mask: &[bool], delta: f64) {
    out.copy_from(z);
    let inv = 1.0 / delta;
    let n = z.nrows();
    for (&(i, j), &up) in base.edges().iter().zip(mask) {
        if !up {
            continue;
        }
        for r in 0..n {
            let d = (z[(r, j)] - z[(r, i)]) * inv;
            out[(r, i)] += d;
            out[(r, j)] -= d;
        }
    }
}

/// Stacked network error `E = col(x − x̂^(i))`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkError {
    pub e: DVector<f64>,
    pub n: usize,
}

impl NetworkError {
    pub fn node(&self, i: usize) -> DVector<f64> {
        self.e.rows(i * self.n, self.n).into_owned()
    }

    pub fn norm_squared(&self) -> f64 {
        self.e.norm_squared()
    }
}

/// Gains after the agreement phase and local Riccati convergence, shared by
/// every run of one trial.
#[derive(Debug, Clone)]
pub struct FrozenGains {
    pub gains: Vec<GainEstimate>,
    pub p: Vec<DMatrix<f64>>,
    pub k: Vec<DMatrix<f64>>,
    pub pushsum_rounds: usize,
}

impl FrozenGains {
    /// Runs Push-Sum until every node stops (or `max_rounds`), then iterates
    /// each node's Riccati map from `P_0 = I` to convergence.
    pub fn compute(plant: &Plant, links: &LinkFailureModel, leader: usize, eps: f64, max_rounds: usize) -> Result<Self> {
        let mut ps = PushSumNetwork::new(plant, links, leader, eps)?;
        ps.run(max_rounds);
        let gains = ps.gains().to_vec();
        let mut p = Vec::with_capacity(gains.len());
        let mut k = Vec::with_capacity(gains.len());
        for (i, g) in gains.iter().enumerate() {
            let pi = local_riccati_fixed_point(plant, &g.g)?;
            k.push(node_gain(plant, i, &pi, g.n));
            p.push(pi);
        }
        Ok(FrozenGains {
            gains,
            p,
            k,
            pushsum_rounds: ps.rounds(),
        })
    }

    /// Gains every node would use with exact knowledge of `G` and `N`.
    pub fn exact(plant: &Plant) -> Result<Self> {
        let g = plant.aggregate_info();
        let n = plant.n_nodes() as f64;
        let p_inf = local_riccati_fixed_point(plant, &g)?;
        let gains = vec![GainEstimate { g, n }; plant.n_nodes()];
        let k = (0..plant.n_nodes()).map(|i| node_gain(plant, i, &p_inf, n)).collect();
        Ok(FrozenGains {
            gains,
            p: vec![p_inf; plant.n_nodes()],
            k,
            pushsum_rounds: 0,
        })
    }
}

fn local_riccati_fixed_point(plant: &Plant, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = plant.n();
    let mut p = DMatrix::identity(n, n);
    for it in 0..RICCATI_MAX_ITER {
        let next = riccati_step(plant.a(), plant.q(), &p, g)?;
        let change = (&next - &p).norm();
        p = next;
        if !change.is_finite() {
            return Err(Error::RiccatiNoConvergence {
                iterations: it + 1,
                residual: change,
            });
        }
        if change < RICCATI_TOL * p.norm().max(1.0) {
            return Ok(p);
        }
    }
    Err(Error::RiccatiNoConvergence {
        iterations: RICCATI_MAX_ITER,
        residual: f64::NAN,
    })
}

/// Gain handling of a [`DkfNetwork`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainMode {
    /// Gains fixed before estimation starts.
    #[default]
    Frozen,
    /// One Push-Sum round and one Riccati step per time step, as long as
    /// Push-Sum has not stopped everywhere.
    Live,
}

/// The whole network of filters for one trial.
#[derive(Debug, Clone)]
pub struct DkfNetwork {
    links: LinkFailureModel,
    params: ConsensusParams,
    nodes: Vec<DkfNodeState>,
    pushsum: Option<PushSumNetwork>,
    mode: GainMode,
    t: u64,
    z: DMatrix<f64>,
    scratch: DMatrix<f64>,
    mask: Vec<bool>,
}

impl DkfNetwork {
    pub fn frozen(plant: &Plant, links: &LinkFailureModel, params: ConsensusParams, gains: &FrozenGains) -> Result<Self> {
        check_sizes(plant, links)?;
        let nodes = (0..plant.n_nodes())
            .map(|i| DkfNodeState {
                p: gains.p[i].clone(),
                k: gains.k[i].clone(),
                ..DkfNodeState::initial(plant, i, gains.gains[i].clone())
            })
            .collect();
        Ok(Self::assemble(plant, links, params, nodes, None, GainMode::Frozen))
    }

    pub fn live(plant: &Plant, links: &LinkFailureModel, params: ConsensusParams, leader: usize, eps: f64) -> Result<Self> {
        check_sizes(plant, links)?;
        let ps = PushSumNetwork::new(plant, links, leader, eps)?;
        let nodes = (0..plant.n_nodes())
            .map(|i| DkfNodeState::initial(plant, i, ps.gains()[i].clone()))
            .collect();
        Ok(Self::assemble(plant, links, params, nodes, Some(ps), GainMode::Live))
    }

    fn assemble(
        plant: &Plant,
        links: &LinkFailureModel,
        params: ConsensusParams,
        nodes: Vec<DkfNodeState>,
        pushsum: Option<PushSumNetwork>,
        mode: GainMode,
    ) -> Self {
        let (n, nn) = (plant.n(), plant.n_nodes());
        DkfNetwork {
            links: links.clone(),
            params,
            nodes,
            pushsum,
            mode,
            t: 0,
            z: DMatrix::zeros(n, nn),
            scratch: DMatrix::zeros(n, nn),
            mask: vec![false; links.base().n_edges()],
        }
    }

    pub fn nodes(&self) -> &[DkfNodeState] {
        &self.nodes
    }

    pub fn links(&self) -> &LinkFailureModel {
        &self.links
    }

    pub fn params(&self) -> ConsensusParams {
        self.params
    }

    pub fn mode(&self) -> GainMode {
        self.mode
    }

    /// Number of completed time steps.
    pub fn time(&self) -> u64 {
        self.t
    }

    /// Sets every node's estimate.
    pub fn set_estimates(&mut self, x_hat: &DVector<f64>) {
        for node in &mut self.nodes {
            node.x_hat.copy_from(x_hat);
        }
    }

    /// One filter time step using the measurements `ys[i] = y_{t+1}^(i)`.
    /// Consensus sub-round `h` at time `t` draws its failures with key
    /// `(t, h)`.
    pub fn step(&mut self, plant: &Plant, ys: &[DVector<f64>]) -> Result<()> {
        if ys.len() != self.nodes.len() {
            return Err(Error::Dimension("one measurement per node is required".into()));
        }
        if let Some(ps) = self.pushsum.as_mut() {
            if !ps.all_stopped() {
                ps.step();
            }
            for (i, node) in self.nodes.iter_mut().enumerate() {
                node.gains = ps.gains()[i].clone();
                let (p, k) = local_gain_update(node, plant, i)?;
                node.p = p;
                node.k = k;
            }
        }
        for (i, node) in self.nodes.iter_mut().enumerate() {
            let z0 = local_correct(&node.x_hat, &node.k, &ys[i], plant, i)?;
            self.z.set_column(i, &z0);
        }
        for h in 0..self.params.gamma {
            self.links.fill_mask(RoundKey::inner(self.t, h as u32), &mut self.mask);
            consensus_round_into(&self.z, &mut self.scratch, self.links.base(), &self.mask, self.params.delta);
            std::mem::swap(&mut self.z, &mut self.scratch);
        }
        for (i, node) in self.nodes.iter_mut().enumerate() {
            node.z.copy_from(&self.z.column(i));
            node.x_hat.copy_from(&node.z);
        }
        self.t += 1;
        Ok(())
    }

    pub fn error_vector(&self, x_true: &DVector<f64>) -> NetworkError {
        error_vector(&self.nodes, x_true)
    }
}

fn check_sizes(plant: &Plant, links: &LinkFailureModel) -> Result<()> {
    if plant.n_nodes() != links.base().n_nodes() {
        return Err(Error::Dimension(format!(
            "plant has {} nodes, graph has {}",
            plant.n_nodes(),
            links.base().n_nodes()
        )));
    }
    Ok(())
}

pub fn error_vector(nodes: &[DkfNodeState], x_true: &DVector<f64>) -> NetworkError {
    let n = x_true.len();
    let mut e = DVector::zeros(n * nodes.len());
    for (i, node) in nodes.iter().enumerate() {
        e.rows_mut(i * n, n).copy_from(&(x_true - &node.x_hat));
    }
    NetworkError { e, n }
}

/// Worst relative distance of the nodes' gains from `N P_∞ C_iᵀ R_i⁻¹`.
pub fn gain_deviation(nodes: &[DkfNodeState], target: &[DMatrix<f64>]) -> f64 {
    nodes
        .iter()
        .zip(target)
        .filter(|(_, t)| !t.is_empty())
        .map(|(s, t)| spectral_norm(&(&s.k - t)) / spectral_norm(t).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}
