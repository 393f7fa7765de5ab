//! Stability analysis: transformed coordinates, weighted norms, the bound
//! matrices `A_R(γ)` and `A_S(γ)`, expected consensus matrices and the
//! second-moment machinery in [`kron`].

pub mod kron;

use nalgebra::{Cholesky, DMatrix, DVector, Matrix2};

use crate::error::{Error, Result};
use crate::graph::{estimate_disconnection_probability, laplacian_of_mask, orthonormal_complement, Graph, LinkFailureModel};
use crate::linalg::{self, jacobi_eigen, perron_radius, spectral_norm, sym_sqrt_pair, PowerIteration};
use crate::model::{CentralizedSolution, Plant};

/// Regularization added to `P_∞` before inverting its square root.
pub const LYAPUNOV_REGULARIZATION: f64 = 1e-12;

/// Largest γ searched by [`minimal_gamma`].
pub const GAMMA_SEARCH_LIMIT: u64 = 1 << 40;

/// Orthogonal change of coordinates `T = (v W)` with `v = 𝟙/√N`.
#[derive(Debug, Clone)]
pub struct TransformBasis {
    pub v: DVector<f64>,
    pub w: DMatrix<f64>,
    pub t: DMatrix<f64>,
}

impl TransformBasis {
    pub fn new(n: usize) -> Result<Self> {
        let w = orthonormal_complement(n)?;
        let v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let mut t = DMatrix::zeros(n, n);
        t.set_column(0, &v);
        t.columns_mut(1, n - 1).copy_from(&w);
        Ok(TransformBasis { v, w, t })
    }

    /// `T ⊗ I_n`.
    pub fn lifted(&self, n: usize) -> DMatrix<f64> {
        self.t.kronecker(&DMatrix::<f64>::identity(n, n))
    }
}

/// `‖N‖_M = √ρ(M^{-1/2} Nᵀ M N M^{-1/2})`, the operator norm induced by
/// `⟨x, y⟩_M = xᵀ M y`.
pub fn weighted_norm(nmat: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<f64> {
    require_pd(m)?;
    if nmat.shape() != m.shape() {
        return Err(Error::Dimension(format!(
            "weighted norm of a {:?} matrix under a {:?} weight",
            nmat.shape(),
            m.shape()
        )));
    }
    let (_, inv_sqrt) = sym_sqrt_pair(m)?;
    let inner = &inv_sqrt * nmat.transpose() * m * nmat * &inv_sqrt;
    Ok(jacobi_eigen(&inner)?.max().max(0.0).sqrt())
}

fn require_pd(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension("weight matrix must be square".into()));
    }
    let asym = linalg::asymmetry(m);
    if asym > 1e-9 * m.norm().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Cholesky::new(linalg::symmetrize(m))
        .map(|_| ())
        .ok_or_else(|| Error::NotPositiveDefinite("weight matrix".into()))
}

/// Smallest λ with `A_C P A_Cᵀ ⪯ λ P`, i.e. `‖A_Cᵀ‖²_P`.
pub fn lyapunov_rate(a_c: &DMatrix<f64>, p_inf: &DMatrix<f64>) -> Result<f64> {
    let n = p_inf.nrows();
    let p = p_inf + DMatrix::<f64>::identity(n, n) * LYAPUNOV_REGULARIZATION;
    let lambda = weighted_norm(&a_c.transpose(), &p)?.powi(2);
    if lambda >= 1.0 {
        return Err(Error::LyapunovInfeasible(lambda));
    }
    Ok(lambda)
}

/// `c_B = (1 + N ‖P‖ ‖G‖_P) ‖A‖_P`.
pub fn coupling_constant(a: &DMatrix<f64>, p_inf: &DMatrix<f64>, g: &DMatrix<f64>, n_nodes: usize) -> Result<f64> {
    let a_p = weighted_norm(a, p_inf)?;
    let g_p = weighted_norm(g, p_inf)?;
    Ok((1.0 + n_nodes as f64 * spectral_norm(p_inf) * g_p) * a_p)
}

pub fn coupling_constant_for(plant: &Plant, sol: &CentralizedSolution) -> Result<f64> {
    coupling_constant(plant.a(), &sol.p_inf, &sol.g, sol.n_nodes)
}

/// `θ_{p_β} = 1 − (p_β/δ)(1 − cos(π/N))` and `θ_{p_d} = (1 − p_d) θ_{p_β}² + p_d`.
pub fn theta_values(p_beta: f64, p_d: f64, delta: f64, n: usize) -> Result<(f64, f64)> {
    if !(p_beta > 0.0 && p_beta <= 1.0) {
        return Err(Error::InvalidParameter(format!("p_beta must lie in (0, 1], got {p_beta}")));
    }
    if !(p_d >= 0.0 && p_d < 1.0) {
        return Err(Error::InvalidParameter(format!("p_d must lie in [0, 1), got {p_d}")));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if n < 2 {
        return Err(Error::InvalidParameter("theta needs at least two nodes".into()));
    }
    let theta = 1.0 - p_beta / delta * (1.0 - (std::f64::consts::PI / n as f64).cos());
    if theta < 0.0 {
        return Err(Error::InvalidParameter(format!("delta {delta} is too small: theta = {theta}")));
    }
    Ok((theta, (1.0 - p_d) * theta * theta + p_d))
}

/// `A_R(γ) = [[√λ, θ^γ c_B], [c_B, θ^γ c_B]]` and its spectral radius.
pub fn bound_matrix_ar(gamma: u64, lambda: f64, c_b: f64, theta: f64) -> (Matrix2<f64>, f64) {
    let tg = powu(theta, gamma);
    let m = Matrix2::new(lambda.sqrt(), tg * c_b, c_b, tg * c_b);
    (m, radius_2x2(&m))
}

/// Spectral radius of a 2×2 matrix with non-negative off-diagonal product.
pub fn radius_2x2(m: &Matrix2<f64>) -> f64 {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let disc = (a - d).powi(2) + 4.0 * b * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        ((a + d + s) / 2.0).abs().max(((a + d - s) / 2.0).abs())
    } else {
        (a * d - b * c).abs().sqrt()
    }
}

/// The 4×4 mean-square bound matrix `A_S(γ)` and its spectral radius.
pub fn bound_matrix_as(gamma: u64, lambda: f64, c_b: f64, theta: f64, theta_pd: f64) -> Result<(DMatrix<f64>, f64)> {
    let tg = powu(theta, gamma);
    let tdg = powu(theta_pd, gamma);
    let sl = lambda.sqrt();
    let c2 = c_b * c_b;
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        lambda,          c_b * sl,        c_b * sl,        c2,
        c_b * tg * sl,   c_b * tg * sl,   c2 * tg,         c2 * tg,
        c_b * tg * sl,   c2 * tg,         c_b * tg * sl,   c2 * tg,
        c2 * tdg,        c2 * tdg,        c2 * tdg,        c2 * tdg,
    ]);
    let rho = match perron_radius(|x| &m * x, &DMatrix::from_element(4, 1, 1.0), PowerIteration::default()) {
        Ok((rho, _)) => rho,
        // Strongly non-normal instances with a tiny radius stall the shifted
        // iteration; the Schur form settles them directly.
        Err(Error::PowerIteration { .. }) => m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
        Err(e) => return Err(e),
    };
    Ok((m, rho))
}

fn powu(x: f64, k: u64) -> f64 {
    if k <= i32::MAX as u64 {
        x.powi(k as i32)
    } else {
        x.powf(k as f64)
    }
}

/// Minimal consensus step counts from the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinimalGamma {
    /// Smallest γ with `ρ(A_R(γ)) < 1`.
    pub mean: u64,
    /// Smallest γ with `ρ(A_S(γ)) < 1`.
    pub mean_square: u64,
    /// Smallest γ with `θ_{p_β}^γ < ((1 − √λ)/c_B)²`.
    pub closed_form: u64,
}

/// Smallest γ ≥ 1 satisfying a predicate that is monotone in γ: doubling
/// until it holds, then bisection.
fn smallest_gamma(mut holds: impl FnMut(u64) -> Result<bool>) -> Result<u64> {
    if holds(1)? {
        return Ok(1);
    }
    let mut lo = 1u64;
    let mut hi = 2u64;
    while !holds(hi)? {
        lo = hi;
        hi *= 2;
        if hi > GAMMA_SEARCH_LIMIT {
            return Err(Error::InvalidParameter(format!(
                "no admissible gamma below {GAMMA_SEARCH_LIMIT}"
            )));
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if holds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Whether `θ^γ < ((1 − √λ)/c_B)²`.
pub fn closed_form_holds(gamma: u64, lambda: f64, c_b: f64, theta: f64) -> bool {
    let rhs = ((1.0 - lambda.sqrt()) / c_b).powi(2);
    powu(theta, gamma) < rhs
}

pub fn minimal_gamma(lambda: f64, c_b: f64, theta: f64, theta_pd: f64) -> Result<MinimalGamma> {
    if !(lambda >= 0.0 && lambda < 1.0) {
        return Err(Error::LyapunovInfeasible(lambda));
    }
    if !(theta >= 0.0 && theta < 1.0 && theta_pd >= 0.0 && theta_pd < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "theta values must lie in [0, 1), got {theta} and {theta_pd}"
        )));
    }
    let mean = smallest_gamma(|g| Ok(bound_matrix_ar(g, lambda, c_b, theta).1 < 1.0))?;
    let mean_square = smallest_gamma(|g| Ok(bound_matrix_as(g, lambda, c_b, theta, theta_pd)?.1 < 1.0))?;
    let closed_form = if c_b == 0.0 || theta == 0.0 {
        1
    } else {
        // Logarithmic estimate, then settle the boundary exactly.
        let rhs = ((1.0 - lambda.sqrt()) / c_b).powi(2);
        let guess = if rhs >= 1.0 { 1.0 } else { (rhs.ln() / theta.ln()).floor() + 1.0 };
        let mut g = (guess.max(1.0) as u64).max(1);
        while g > 1 && closed_form_holds(g - 1, lambda, c_b, theta) {
            g -= 1;
        }
        while !closed_form_holds(g, lambda, c_b, theta) {
            g += 1;
        }
        g
    };
    Ok(MinimalGamma {
        mean,
        mean_square,
        closed_form,
    })
}

/// `M̄^(γ) = (I − (p_β/δ) L̄)^γ` and its eigenvalues `(1 − (p_β/δ) λ_i)^γ`,
/// ascending in `λ_i`.
pub fn expected_m(graph: &Graph, p_beta: f64, delta: f64, gamma: u32) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let n = graph.n_nodes();
    let l = graph.laplacian();
    let base = DMatrix::<f64>::identity(n, n) - l.as_matrix() * (p_beta / delta);
    let mut m = DMatrix::identity(n, n);
    for _ in 0..gamma {
        m = &m * &base;
    }
    let eig = crate::graph::spectrum(&l)?;
    let values = eig.iter().map(|&li| (1.0 - p_beta / delta * li).powi(gamma as i32)).collect();
    Ok((m, values))
}

/// `S(ω) = I − Wᵀ L(ω) W / δ` for one failure pattern and
/// `S̄ = I − (p_β/δ) Wᵀ L̄ W`.
pub fn s_matrices(
    base: &Graph,
    mask: &[bool],
    p_beta: f64,
    delta: f64,
    w: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let rho = base.laplacian_radius()?;
    if !(delta > rho) {
        return Err(Error::InvalidParameter(format!(
            "delta {delta} must exceed the Laplacian spectral radius {rho}"
        )));
    }
    let n = base.n_nodes();
    if w.shape() != (n, n - 1) {
        return Err(Error::Dimension("complement basis has the wrong shape".into()));
    }
    let id = DMatrix::<f64>::identity(n - 1, n - 1);
    let l = laplacian_of_mask(base, mask);
    let s = &id - w.transpose() * l * w / delta;
    let s_bar = &id - w.transpose() * base.laplacian().as_matrix() * w * (p_beta / delta);
    Ok((linalg::symmetrize(&s), linalg::symmetrize(&s_bar)))
}

/// Limit of the transformed noise covariance for γ → ∞: the upper-left
/// `n × n` block `N[(I − K C) Q (I − K C)ᵀ + P Cᵀ R⁻¹ C P]`, zero elsewhere.
pub fn noise_covariance_limit(plant: &Plant, sol: &CentralizedSolution) -> DMatrix<f64> {
    noise_covariance_limit_from(
        plant.q(),
        &sol.p_inf,
        &sol.k_inf,
        &plant.stacked_c(),
        &plant.stacked_r_inv(),
        sol.n_nodes,
    )
}

pub fn noise_covariance_limit_from(
    q: &DMatrix<f64>,
    p_inf: &DMatrix<f64>,
    k_inf: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r_inv: &DMatrix<f64>,
    n_nodes: usize,
) -> DMatrix<f64> {
    let n = q.nrows();
    let ikc = DMatrix::<f64>::identity(n, n) - k_inf * c;
    let block = (&ikc * q * ikc.transpose() + p_inf * c.transpose() * r_inv * c * p_inf) * n_nodes as f64;
    let mut out = DMatrix::zeros(n * n_nodes, n * n_nodes);
    out.view_mut((0, 0), (n, n)).copy_from(&block);
    out
}

/// Spectral stability quantities for one failure law.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub p_beta: f64,
    pub delta: f64,
    pub rho_l: f64,
    pub lambda: f64,
    pub c_b: f64,
    pub theta_pbeta: f64,
    pub theta_pd: f64,
    pub p_d: f64,
    pub p_d_half_width: f64,
    pub p_d_exact: bool,
    pub gamma_min_mean: u64,
    pub gamma_min_ms: u64,
    pub gamma_closed_form: u64,
}

/// Evaluates every bound for the failure law `links` with consensus gain
/// `delta`; `p_d` comes from [`estimate_disconnection_probability`] with
/// `pd_trials` samples when the graph is too large to enumerate.
pub fn bounds_report(
    plant: &Plant,
    sol: &CentralizedSolution,
    links: &LinkFailureModel,
    delta: f64,
    pd_trials: usize,
) -> Result<BoundsReport> {
    let graph = links.base();
    let rho_l = graph.laplacian_radius()?;
    let lambda = lyapunov_rate(&sol.a_c, &sol.p_inf)?;
    let c_b = coupling_constant_for(plant, sol)?;
    let pd = estimate_disconnection_probability(links, pd_trials)?;
    let (theta_pbeta, theta_pd) = theta_values(links.p_beta(), pd.p_hat, delta, graph.n_nodes())?;
    let gm = minimal_gamma(lambda, c_b, theta_pbeta, theta_pd)?;
    Ok(BoundsReport {
        p_beta: links.p_beta(),
        delta,
        rho_l,
        lambda,
        c_b,
        theta_pbeta,
        theta_pd,
        p_d: pd.p_hat,
        p_d_half_width: pd.half_width,
        p_d_exact: pd.exact,
        gamma_min_mean: gm.mean,
        gamma_min_ms: gm.mean_square,
        gamma_closed_form: gm.closed_form,
    })
}
