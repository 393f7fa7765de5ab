//! Expected Kronecker squares of random matrices.
//!
//! For a random matrix `A`, `ρ(E[A ⊗ A]) < 1` certifies mean-square
//! stability of `x⁺ = A x`. The radius is computed on the equivalent
//! operator `X ↦ E[A X Aᵀ]`, which preserves the PSD cone, so shifted
//! power iteration from `X = I` finds it without forming the `d² × d²`
//! matrix.
//!
//! For the filter error the random factor is `H = 𝒯ᵀ (M^(γ) ⊗ I_n) 𝒜 𝒯`,
//! where `𝒜 = diag(A_i)` is deterministic and all randomness sits in the
//! consensus product `M^(γ)`. Its second moment is therefore carried by the
//! `N² × N²` matrix `E[M^(γ) ⊗ M^(γ)]`, which factors over independent
//! rounds: `E[M^(γ) ⊗ M^(γ)] = E[M ⊗ M]^γ`. The orthogonal `𝒯` does not
//! change the radius, so the operator works in node coordinates.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{map_indices, ExecMode};
use crate::graph::{laplacian_of_mask, Graph};
use crate::linalg::{perron_radius, PowerIteration};
use crate::model::{CentralizedSolution, Plant};
use crate::rng::{self, DOMAIN_MC};

/// Largest number of random edges enumerated in exact mode.
pub const EXACT_ENUMERATION_LIMIT: usize = 20;

/// Batches used for the Monte-Carlo standard error.
pub const MC_BATCHES: usize = 10;

/// A random square matrix that can be sampled and, optionally, enumerated.
pub trait RandomMatrixSource: Sync {
    fn dim(&self) -> usize;

    fn sample(&self, rng: &mut ChaCha8Rng) -> DMatrix<f64>;

    /// Every outcome with its probability, if the support is small enough
    /// to list.
    fn support(&self) -> Option<Vec<(f64, DMatrix<f64>)>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KronMode {
    /// Exact expectation over the enumerated support.
    Exact,
    /// `draws` samples; draw `k` uses its own stream keyed by `(seed, k)`.
    MonteCarlo { draws: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KronEstimate {
    pub rho: f64,
    /// Standard error from batch means; `None` for exact evaluations.
    pub stderr: Option<f64>,
    pub draws: usize,
    pub iterations: usize,
}

/// `ρ(Σ_k w_k A_k ⊗ A_k)` through `X ↦ Σ_k w_k A_k X A_kᵀ`.
pub fn weighted_kron_radius(terms: &[(f64, DMatrix<f64>)]) -> Result<(f64, usize)> {
    let d = terms.first().map(|(_, a)| a.nrows()).unwrap_or(0);
    if d == 0 {
        return Err(Error::Dimension("no matrices to average".into()));
    }
    perron_radius(
        |x| {
            let mut out = DMatrix::zeros(d, d);
            for (w, a) in terms {
                out += a * x * a.transpose() * *w;
            }
            out
        },
        &DMatrix::identity(d, d),
        PowerIteration::default(),
    )
}

/// Estimated `ρ(E[A ⊗ A])` for a generic source.
pub fn kron_square_radius(source: &dyn RandomMatrixSource, mode: KronMode) -> Result<KronEstimate> {
    match mode {
        KronMode::Exact => {
            let support = source.support().ok_or_else(|| {
                Error::InvalidParameter("source has no enumerable support; use Monte-Carlo".into())
            })?;
            let draws = support.len();
            let (rho, iterations) = weighted_kron_radius(&support)?;
            Ok(KronEstimate {
                rho,
                stderr: None,
                draws,
                iterations,
            })
        }
        KronMode::MonteCarlo { draws, seed } => {
            if draws < MC_BATCHES {
                return Err(Error::InvalidParameter(format!(
                    "Monte-Carlo needs at least {MC_BATCHES} draws, got {draws}"
                )));
            }
            let samples: Vec<DMatrix<f64>> = map_indices(ExecMode::default(), draws, |k| {
                source.sample(&mut rng::stream(seed, DOMAIN_MC, k as u64))
            });
            let w = 1.0 / draws as f64;
            let all: Vec<_> = samples.iter().map(|a| (w, a.clone())).collect();
            let (rho, iterations) = weighted_kron_radius(&all)?;
            let batch_rhos = batches(draws)
                .map(|range| {
                    let wb = 1.0 / range.len() as f64;
                    let part: Vec<_> = samples[range].iter().map(|a| (wb, a.clone())).collect();
                    weighted_kron_radius(&part).map(|r| r.0)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(KronEstimate {
                rho,
                stderr: Some(batch_stderr(&batch_rhos)),
                draws,
                iterations,
            })
        }
    }
}

fn batches(draws: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    let size = draws / MC_BATCHES;
    (0..MC_BATCHES).map(move |b| {
        let end = if b + 1 == MC_BATCHES { draws } else { (b + 1) * size };
        b * size..end
    })
}

fn batch_stderr(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// One consensus round `M(ω) = I − L(ω)/δ` for a mask over `graph.edges()`.
pub fn consensus_matrix(graph: &Graph, mask: &[bool], delta: f64) -> DMatrix<f64> {
    let n = graph.n_nodes();
    DMatrix::<f64>::identity(n, n) - laplacian_of_mask(graph, mask) / delta
}

/// Draws `γ` independent rounds and multiplies them.
pub fn sample_consensus_product(graph: &Graph, p_beta: f64, delta: f64, gamma: u32, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = graph.n_nodes();
    let mut mask = vec![false; graph.n_edges()];
    let mut m = DMatrix::identity(n, n);
    for _ in 0..gamma {
        for b in mask.iter_mut() {
            *b = rng.random::<f64>() < p_beta;
        }
        m = consensus_matrix(graph, &mask, delta) * m;
    }
    m
}

/// Every failure pattern of one round with its probability.
pub fn enumerate_masks(graph: &Graph, p_beta: f64) -> Result<Vec<(f64, Vec<bool>)>> {
    let m = graph.n_edges();
    if m > EXACT_ENUMERATION_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "{m} edges exceed the exact enumeration limit of {EXACT_ENUMERATION_LIMIT}"
        )));
    }
    Ok((0..1u64 << m)
        .map(|bits| {
            let mask: Vec<bool> = (0..m).map(|e| bits >> e & 1 == 1).collect();
            let up = mask.iter().filter(|&&b| b).count() as i32;
            (p_beta.powi(up) * (1.0 - p_beta).powi(m as i32 - up), mask)
        })
        .filter(|(w, _)| *w > 0.0)
        .collect())
}

/// `E[M ⊗ M]` for one round by summing over all failure patterns.
pub fn round_kron_moment_enumerated(graph: &Graph, p_beta: f64, delta: f64) -> Result<DMatrix<f64>> {
    let n = graph.n_nodes();
    let mut out = DMatrix::zeros(n * n, n * n);
    for (w, mask) in enumerate_masks(graph, p_beta)? {
        let m = consensus_matrix(graph, &mask, delta);
        out += m.kronecker(&m) * w;
    }
    Ok(out)
}

/// `E[M ⊗ M]` for one round from the first two moments of the edge
/// indicators:
/// `I − (p/δ)(L̄ ⊗ I + I ⊗ L̄) + (p² L̄ ⊗ L̄ + (p − p²) Σ_e L_e ⊗ L_e)/δ²`.
pub fn round_kron_moment(graph: &Graph, p_beta: f64, delta: f64) -> DMatrix<f64> {
    let n = graph.n_nodes();
    let id = DMatrix::<f64>::identity(n, n);
    let l = graph.laplacian().into_inner();
    let mut edge_sum = DMatrix::zeros(n * n, n * n);
    let m = graph.n_edges();
    for e in 0..m {
        let mut mask = vec![false; m];
        mask[e] = true;
        let le = laplacian_of_mask(graph, &mask);
        edge_sum += le.kronecker(&le);
    }
    let p = p_beta;
    DMatrix::<f64>::identity(n * n, n * n) - (l.kronecker(&id) + id.kronecker(&l)) * (p / delta)
        + (l.kronecker(&l) * (p * p) + edge_sum * (p - p * p)) / (delta * delta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentMode {
    /// Closed-form per-round moment.
    Closed,
    /// Per-round enumeration of failure patterns.
    Exact,
    /// Sampled `γ`-round products.
    MonteCarlo { draws: usize, seed: u64 },
}

/// `E[M^(γ) ⊗ M^(γ)]`, with per-batch estimates in Monte-Carlo mode.
pub fn consensus_kron_moment(
    graph: &Graph,
    p_beta: f64,
    delta: f64,
    gamma: u32,
    mode: MomentMode,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    match mode {
        MomentMode::Closed | MomentMode::Exact => {
            let round = if mode == MomentMode::Closed {
                round_kron_moment(graph, p_beta, delta)
            } else {
                round_kron_moment_enumerated(graph, p_beta, delta)?
            };
            let n2 = round.nrows();
            let mut out = DMatrix::identity(n2, n2);
            for _ in 0..gamma {
                out = &round * out;
            }
            Ok((out, Vec::new()))
        }
        MomentMode::MonteCarlo { draws, seed } => {
            if draws < MC_BATCHES {
                return Err(Error::InvalidParameter(format!(
                    "Monte-Carlo needs at least {MC_BATCHES} draws, got {draws}"
                )));
            }
            let n = graph.n_nodes();
            let ranges: Vec<_> = batches(draws).collect();
            let sums = map_indices(ExecMode::default(), ranges.len(), |b| {
                let mut acc = DMatrix::zeros(n * n, n * n);
                for k in ranges[b].clone() {
                    let mut rng = rng::stream(seed, DOMAIN_MC, k as u64);
                    let m = sample_consensus_product(graph, p_beta, delta, gamma, &mut rng);
                    acc += m.kronecker(&m);
                }
                acc
            });
            let total = sums.iter().fold(DMatrix::zeros(n * n, n * n), |a, s| a + s) / draws as f64;
            let per_batch = sums.into_iter().zip(&ranges).map(|(s, r)| s / r.len() as f64).collect();
            Ok((total, per_batch))
        }
    }
}

/// `A_i = (I − K_i C_i) A` with the converged node gains `K_i = N P_∞ C_iᵀR_i⁻¹`.
pub fn local_closed_loop(plant: &Plant, sol: &CentralizedSolution) -> Vec<DMatrix<f64>> {
    let n = plant.n();
    (0..plant.n_nodes())
        .map(|i| {
            let k = sol.node_gain(plant, i);
            (DMatrix::<f64>::identity(n, n) - k * &plant.output(i).c) * plant.a()
        })
        .collect()
}

/// `ρ` of `X ↦ E[(M ⊗ I) 𝒜 X 𝒜ᵀ (M ⊗ I)ᵀ]` given `K = E[M ⊗ M]` and the
/// diagonal blocks of `𝒜`.
pub fn error_kron_radius(kron: &DMatrix<f64>, blocks: &[DMatrix<f64>]) -> Result<(f64, usize)> {
    let nn = blocks.len();
    if nn == 0 || kron.shape() != (nn * nn, nn * nn) {
        return Err(Error::Dimension("moment matrix does not match the node count".into()));
    }
    let n = blocks[0].nrows();
    let d = n * nn;
    // Row `k·N + l` of `y` holds vec(A_k X_kl A_lᵀ) (column-major); one product with the
    // moment matrix then yields every output block.
    let mut y = DMatrix::zeros(nn * nn, n * n);
    perron_radius(
        |x| {
            for k in 0..nn {
                for l in 0..nn {
                    let ykl = &blocks[k] * x.view((k * n, l * n), (n, n)) * blocks[l].transpose();
                    y.row_mut(k * nn + l).copy_from_slice(ykl.as_slice());
                }
            }
            let z = kron * &y;
            let mut out = DMatrix::zeros(d, d);
            for i in 0..nn {
                for j in 0..nn {
                    let zij = z.row(i * nn + j).transpose();
                    out.view_mut((i * n, j * n), (n, n)).copy_from_slice(zij.as_slice());
                }
            }
            out
        },
        &DMatrix::identity(d, d),
        PowerIteration::default(),
    )
}

/// `ρ(E[H ⊗ H])` for the filter error with converged gains, failure law
/// `p_beta`, gain `delta` and `gamma` rounds per step.
pub fn dkf_kron_radius(
    plant: &Plant,
    sol: &CentralizedSolution,
    graph: &Graph,
    p_beta: f64,
    delta: f64,
    gamma: u32,
    mode: MomentMode,
) -> Result<KronEstimate> {
    if graph.n_nodes() != plant.n_nodes() {
        return Err(Error::Dimension("plant and graph disagree on the node count".into()));
    }
    let blocks = local_closed_loop(plant, sol);
    let (kron, per_batch) = consensus_kron_moment(graph, p_beta, delta, gamma, mode)?;
    let (rho, iterations) = error_kron_radius(&kron, &blocks)?;
    let (stderr, draws) = match mode {
        MomentMode::MonteCarlo { draws, .. } => {
            let rhos = per_batch
                .iter()
                .map(|k| error_kron_radius(k, &blocks).map(|r| r.0))
                .collect::<Result<Vec<_>>>()?;
            (Some(batch_stderr(&rhos)), draws)
        }
        _ => (None, 0),
    };
    Ok(KronEstimate {
        rho,
        stderr,
        draws,
        iterations,
    })
}

/// Explicit `E[H ⊗ H]` in transformed coordinates,
/// `(𝒯ᵀ ⊗ 𝒯ᵀ) E[(M ⊗ I) ⊗ (M ⊗ I)] (𝒜 ⊗ 𝒜)(𝒯 ⊗ 𝒯)`, for small `nN`.
/// The first block row of `H` is deterministic because `vᵀ M = vᵀ`.
pub fn transformed_kron_moment(kron: &DMatrix<f64>, blocks: &[DMatrix<f64>], t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let nn = blocks.len();
    let n = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let d = n * nn;
    if d == 0 || d > 24 || kron.shape() != (nn * nn, nn * nn) || t.shape() != (nn, nn) {
        return Err(Error::Dimension("explicit assembly needs matching shapes and nN <= 24".into()));
    }
    // E[(M ⊗ I_n) ⊗ (M ⊗ I_n)] entry ((i,a),(j,b)),((k,c),(l,e)) = E[M_ik M_jl] δ_ac δ_be.
    let mut big = DMatrix::zeros(d * d, d * d);
    for i in 0..nn {
        for j in 0..nn {
            for k in 0..nn {
                for l in 0..nn {
                    let c = kron[(i * nn + j, k * nn + l)];
                    if c == 0.0 {
                        continue;
                    }
                    for a in 0..n {
                        for b in 0..n {
                            big[((i * n + a) * d + j * n + b, (k * n + a) * d + l * n + b)] = c;
                        }
                    }
                }
            }
        }
    }
    let t_lift = t.kronecker(&DMatrix::<f64>::identity(n, n));
    let t2 = t_lift.kronecker(&t_lift);
    let diag = crate::linalg::block_diag(blocks);
    let a2 = diag.kronecker(&diag);
    Ok(t2.transpose() * big * a2 * t2)
}

/// `E[S ⊗ S]^γ` with `S = Wᵀ M W`, from the node-coordinate moment.
pub fn disagreement_kron_moment(kron_round: &DMatrix<f64>, w: &DMatrix<f64>, gamma: u32) -> DMatrix<f64> {
    let w2 = w.kronecker(w);
    let round = w2.transpose() * kron_round * &w2;
    let d = round.nrows();
    let mut out = DMatrix::identity(d, d);
    for _ in 0..gamma {
        out = &round * out;
    }
    out
}
