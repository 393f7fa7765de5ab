//! Linear time-invariant plant observed by a network of sensors, and the
//! centralized Kalman filter used as the optimality reference.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, asymmetry, min_eigenvalue, psd_sqrt, rank, spectral_radius};

/// Tolerance on the minimum eigenvalue of matrices required to be PSD.
pub const PSD_TOL: f64 = 1e-10;
/// Relative singular-value threshold in rank tests.
pub const RANK_TOL: f64 = 1e-9;
pub const RICCATI_TOL: f64 = 1e-12;
pub const RICCATI_MAX_ITER: usize = 100_000;

/// Measurement model of one node. A node without sensors has `q_i = 0`,
/// i.e. a `0 × n` matrix `c` and a `0 × 0` matrix `r`.
#[derive(Debug, Clone)]
pub struct NodeOutput {
    pub c: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl NodeOutput {
    pub fn new(c: DMatrix<f64>, r: DMatrix<f64>) -> Self {
        NodeOutput { c, r }
    }

    pub fn none(n: usize) -> Self {
        NodeOutput {
            c: DMatrix::zeros(0, n),
            r: DMatrix::zeros(0, 0),
        }
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn has_sensor(&self) -> bool {
        self.dim() > 0 && self.c.iter().any(|&v| v != 0.0)
    }
}

/// `x_{t+1} = A x_t + f_t`, `y_{t+1}^(i) = C_i x_{t+1} + g_{t+1}^(i)`.
#[derive(Debug, Clone)]
pub struct Plant {
    a: DMatrix<f64>,
    q: DMatrix<f64>,
    outputs: Vec<NodeOutput>,
    x0_mean: DVector<f64>,
    x0_cov: DMatrix<f64>,
    r_inv: Vec<DMatrix<f64>>,
    info: Vec<DMatrix<f64>>,
    q_factor: DMatrix<f64>,
    r_factor: Vec<DMatrix<f64>>,
    x0_factor: DMatrix<f64>,
}

impl Plant {
    pub fn new(
        a: DMatrix<f64>,
        q: DMatrix<f64>,
        outputs: Vec<NodeOutput>,
        x0_mean: DVector<f64>,
        x0_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(Error::InvalidPlant(format!("A must be square and non-empty, got {:?}", a.shape())));
        }
        if outputs.is_empty() {
            return Err(Error::InvalidPlant("at least one node is required".into()));
        }
        check_psd("Q", &q, n)?;
        check_psd("initial covariance", &x0_cov, n)?;
        if x0_mean.len() != n {
            return Err(Error::Dimension(format!("initial mean has length {}, expected {n}", x0_mean.len())));
        }
        let mut r_inv = Vec::with_capacity(outputs.len());
        let mut info = Vec::with_capacity(outputs.len());
        let mut r_factor = Vec::with_capacity(outputs.len());
        for (i, out) in outputs.iter().enumerate() {
            let qi = out.c.nrows();
            if out.c.ncols() != n {
                return Err(Error::Dimension(format!("C_{i} has {} columns, expected {n}", out.c.ncols())));
            }
            if out.r.shape() != (qi, qi) {
                return Err(Error::Dimension(format!("R_{i} is {:?}, expected {qi}x{qi}", out.r.shape())));
            }
            if qi == 0 {
                r_inv.push(DMatrix::zeros(0, 0));
                info.push(DMatrix::zeros(n, n));
                r_factor.push(DMatrix::zeros(0, 0));
                continue;
            }
            let asym = asymmetry(&out.r);
            if asym > 1e-12 {
                return Err(Error::NotSymmetric(asym));
            }
            let chol = Cholesky::new(out.r.clone())
                .ok_or_else(|| Error::NotPositiveDefinite(format!("R_{i}")))?;
            let ri = chol.inverse();
            info.push(linalg::symmetrize(&(out.c.transpose() * &ri * &out.c)));
            r_factor.push(chol.l());
            r_inv.push(ri);
        }

        let stacked = stack_outputs(&outputs, n);
        if stacked.nrows() == 0 || rank(&observability_matrix(&a, &stacked), RANK_TOL) < n {
            return Err(Error::InvalidPlant("the pair (C, A) is not observable".into()));
        }
        let q_factor = psd_sqrt(&q)?;
        if rank(&controllability_matrix(&a, &q_factor), RANK_TOL) < n {
            return Err(Error::InvalidPlant("the pair (A, Q^1/2) is not controllable".into()));
        }
        let x0_factor = psd_sqrt(&x0_cov)?;
        Ok(Plant {
            a,
            q,
            outputs,
            x0_mean,
            x0_cov,
            r_inv,
            info,
            q_factor,
            r_factor,
            x0_factor,
        })
    }

    /// Planar double-integrator tracked by ten nodes; node 4 measures the
    /// first position coordinate and node 9 the second. Position and
    /// velocity noise come from a continuous white acceleration of
    /// intensity `sigma²` sampled with step `tau`.
    pub fn planar_tracker(tau: f64, sigma: f64, sigma_g: f64) -> Result<Self> {
        if !(tau > 0.0 && sigma > 0.0 && sigma_g > 0.0) {
            return Err(Error::InvalidPlant(format!(
                "tracker parameters must be positive (tau={tau}, sigma={sigma}, sigma_g={sigma_g})"
            )));
        }
        let i2 = DMatrix::<f64>::identity(2, 2);
        let mut a = DMatrix::<f64>::identity(4, 4);
        a.view_mut((0, 2), (2, 2)).copy_from(&(&i2 * tau));
        let mut q = DMatrix::<f64>::zeros(4, 4);
        q.view_mut((0, 0), (2, 2)).copy_from(&(&i2 * (tau.powi(3) / 3.0)));
        q.view_mut((0, 2), (2, 2)).copy_from(&(&i2 * (tau * tau / 2.0)));
        q.view_mut((2, 0), (2, 2)).copy_from(&(&i2 * (tau * tau / 2.0)));
        q.view_mut((2, 2), (2, 2)).copy_from(&i2);
        q *= sigma * sigma;

        let r = DMatrix::from_element(1, 1, sigma_g * sigma_g);
        let mut outputs = vec![NodeOutput::none(4); 10];
        outputs[4] = NodeOutput::new(DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]), r.clone());
        outputs[9] = NodeOutput::new(DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 0.0, 0.0]), r);
        Plant::new(
            a,
            q,
            outputs,
            DVector::from_row_slice(&TRACKER_X0_MEAN),
            DMatrix::identity(4, 4),
        )
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_nodes(&self) -> usize {
        self.outputs.len()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn outputs(&self) -> &[NodeOutput] {
        &self.outputs
    }

    pub fn output(&self, i: usize) -> &NodeOutput {
        &self.outputs[i]
    }

    pub fn r_inv(&self, i: usize) -> &DMatrix<f64> {
        &self.r_inv[i]
    }

    /// C_iᵀ R_i⁻¹ C_i (zero for nodes without sensors).
    pub fn info_matrix(&self, i: usize) -> &DMatrix<f64> {
        &self.info[i]
    }

    /// G = Σ_i C_iᵀ R_i⁻¹ C_i.
    pub fn aggregate_info(&self) -> DMatrix<f64> {
        self.info.iter().fold(DMatrix::zeros(self.n(), self.n()), |acc, g| acc + g)
    }

    pub fn x0_mean(&self) -> &DVector<f64> {
        &self.x0_mean
    }

    pub fn x0_cov(&self) -> &DMatrix<f64> {
        &self.x0_cov
    }

    /// All measurement rows stacked in node order.
    pub fn stacked_c(&self) -> DMatrix<f64> {
        stack_outputs(&self.outputs, self.n())
    }

    /// diag(R_i) matching [`Plant::stacked_c`].
    pub fn stacked_r(&self) -> DMatrix<f64> {
        linalg::block_diag(&self.outputs.iter().map(|o| o.r.clone()).collect::<Vec<_>>())
    }

    pub fn stacked_r_inv(&self) -> DMatrix<f64> {
        linalg::block_diag(&self.r_inv)
    }

    pub fn sample_x0<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        &self.x0_mean + &self.x0_factor * gaussian(self.n(), rng)
    }

    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> NoiseDraw {
        let f = &self.q_factor * gaussian(self.n(), rng);
        let g = self
            .r_factor
            .iter()
            .map(|l| l * gaussian(l.nrows(), rng))
            .collect();
        NoiseDraw { f, g }
    }

    /// Deterministic step with given noises: returns `x⁺` and every node's
    /// measurement of it.
    pub fn propagate(&self, x: &DVector<f64>, noise: &NoiseDraw) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
        if x.len() != self.n() {
            return Err(Error::Dimension(format!("state has length {}, expected {}", x.len(), self.n())));
        }
        if noise.f.len() != self.n() || noise.g.len() != self.n_nodes() {
            return Err(Error::Dimension("noise draw does not match the plant".into()));
        }
        let next = &self.a * x + &noise.f;
        let mut ys = Vec::with_capacity(self.n_nodes());
        for (out, g) in self.outputs.iter().zip(&noise.g) {
            if g.len() != out.dim() {
                return Err(Error::Dimension("measurement noise does not match the output".into()));
            }
            ys.push(&out.c * &next + g);
        }
        Ok((next, ys))
    }

    /// One random step.
    pub fn step<R: Rng + ?Sized>(&self, x: &DVector<f64>, rng: &mut R) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
        let noise = self.draw_noise(rng);
        self.propagate(x, &noise)
    }

    /// Draws `x_0` and runs `horizon` steps from one stream.
    pub fn simulate<R: Rng + ?Sized>(&self, horizon: usize, rng: &mut R) -> Trajectory {
        let x0 = self.sample_x0(rng);
        let noises: Vec<_> = (0..horizon).map(|_| self.draw_noise(rng)).collect();
        self.simulate_with(x0, noises).expect("noise drawn from this plant")
    }

    pub fn simulate_with(&self, x0: DVector<f64>, noises: Vec<NoiseDraw>) -> Result<Trajectory> {
        let mut states = Vec::with_capacity(noises.len() + 1);
        let mut measurements = Vec::with_capacity(noises.len());
        states.push(x0);
        for noise in &noises {
            let (next, ys) = self.propagate(states.last().expect("non-empty"), noise)?;
            states.push(next);
            measurements.push(ys);
        }
        Ok(Trajectory {
            states,
            measurements,
            noises,
        })
    }
}

/// Mean of the initial state used by [`Plant::planar_tracker`].
pub const TRACKER_X0_MEAN: [f64; 4] = [5.0, -5.0, 1.0, 1.0];

/// Noise for one step: `f_t` and every node's `g^(i)`.
#[derive(Debug, Clone)]
pub struct NoiseDraw {
    pub f: DVector<f64>,
    pub g: Vec<DVector<f64>>,
}

/// `states[k] = x_k` for `k = 0..=T`; `measurements[k-1][i] = y_k^(i)` and
/// `noises[k-1]` produced step `k`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub measurements: Vec<Vec<DVector<f64>>>,
    pub noises: Vec<NoiseDraw>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.measurements.len()
    }
}

fn gaussian<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

fn check_psd(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.shape() != (n, n) {
        return Err(Error::Dimension(format!("{name} is {:?}, expected {n}x{n}", m.shape())));
    }
    let asym = asymmetry(m);
    if asym > 1e-12 {
        return Err(Error::NotSymmetric(asym));
    }
    let min = min_eigenvalue(m)?;
    if min < -PSD_TOL {
        return Err(Error::InvalidPlant(format!("{name} is not PSD (min eigenvalue {min:e})")));
    }
    Ok(())
}

fn stack_outputs(outputs: &[NodeOutput], n: usize) -> DMatrix<f64> {
    let rows: usize = outputs.iter().map(NodeOutput::dim).sum();
    let mut c = DMatrix::zeros(rows, n);
    let mut at = 0;
    for o in outputs {
        c.rows_mut(at, o.dim()).copy_from(&o.c);
        at += o.dim();
    }
    c
}

pub fn observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let q = c.nrows();
    let mut out = DMatrix::zeros(q * n, n);
    let mut block = c.clone();
    for k in 0..n {
        out.rows_mut(k * q, q).copy_from(&block);
        block = &block * a;
    }
    out
}

pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = DMatrix::zeros(n, m * n);
    let mut block = b.clone();
    for k in 0..n {
        out.columns_mut(k * m, m).copy_from(&block);
        block = a * &block;
    }
    out
}

/// One step of the information-form Riccati map
/// `P ↦ (A P Aᵀ + Q)(I + G (A P Aᵀ + Q))⁻¹`.
pub fn riccati_step(a: &DMatrix<f64>, q: &DMatrix<f64>, p: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = a * p * a.transpose() + q;
    let lhs = DMatrix::identity(n, n) + g * &m;
    // P⁺ = M L⁻¹  ⇔  L ᵀ P⁺ᵀ = Mᵀ.
    let next = lhs
        .transpose()
        .lu()
        .solve(&m.transpose())
        .ok_or(Error::Singular("riccati update"))?
        .transpose();
    Ok(linalg::symmetrize(&next))
}

/// Steady-state solution of the centralized filter.
#[derive(Debug, Clone)]
pub struct CentralizedSolution {
    pub p_inf: DMatrix<f64>,
    /// n × Σq_i, columns in stacked node order.
    pub k_inf: DMatrix<f64>,
    pub a_c: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub n_nodes: usize,
    pub iterations: usize,
    /// Frobenius residual of the fixed-point identity.
    pub residual: f64,
}

impl CentralizedSolution {
    /// Gain of node `i` in the distributed filter once its gain estimates
    /// have converged: `N P_∞ C_iᵀ R_i⁻¹`.
    pub fn node_gain(&self, plant: &Plant, i: usize) -> DMatrix<f64> {
        let out = plant.output(i);
        &self.p_inf * out.c.transpose() * plant.r_inv(i) * self.n_nodes as f64
    }
}

/// Iterates the Riccati map with the aggregate information matrix from
/// `P_0 = Ψ_0` (or `I` if `Ψ_0 = 0`) until the Frobenius change between
/// iterates drops below `tol · max(1, ‖P‖_F)`.
pub fn solve_riccati(plant: &Plant, tol: f64, max_iter: usize) -> Result<CentralizedSolution> {
    let n = plant.n();
    let g = plant.aggregate_info();
    let mut p = if plant.x0_cov().iter().all(|&v| v == 0.0) {
        DMatrix::identity(n, n)
    } else {
        plant.x0_cov().clone()
    };
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = riccati_step(plant.a(), plant.q(), &p, &g)?;
        change = (&next - &p).norm();
        p = next;
        iterations += 1;
        if change < tol * p.norm().max(1.0) {
            break;
        }
    }
    if !(change < tol * p.norm().max(1.0)) {
        return Err(Error::RiccatiNoConvergence {
            iterations,
            residual: change,
        });
    }

    let c = plant.stacked_c();
    let r_inv = plant.stacked_r_inv();
    let k_inf = &p * c.transpose() * &r_inv;
    let ikc = DMatrix::identity(n, n) - &k_inf * &c;
    let a_c = &ikc * plant.a();

    let m = plant.a() * &p * plant.a().transpose() + plant.q();
    let rebuilt = &ikc * m * ikc.transpose() + &p * c.transpose() * &r_inv * &c * &p;
    let residual = (&rebuilt - &p).norm();
    if residual > 1e-9 * p.norm().max(1.0) {
        return Err(Error::RiccatiNoConvergence { iterations, residual });
    }
    let rho = spectral_radius(&a_c);
    if rho >= 1.0 {
        return Err(Error::InvalidPlant(format!("closed-loop matrix is not Schur (spectral radius {rho})")));
    }
    Ok(CentralizedSolution {
        p_inf: p,
        k_inf,
        a_c,
        g,
        n_nodes: plant.n_nodes(),
        iterations,
        residual,
    })
}

/// Output of a steady-gain centralized filter run.
#[derive(Debug, Clone)]
pub struct CkfRun {
    /// `estimates[k] = x̂_{k|k}` for `k = 0..=T`.
    pub estimates: Vec<DVector<f64>>,
    /// `x_k − x̂_{k|k}`.
    pub errors: Vec<DVector<f64>>,
    /// Time average of `e_k e_kᵀ` over `k ∈ [window_start, T]`.
    pub empirical_cov: DMatrix<f64>,
    /// Time average of `‖e_k‖²` over the same window.
    pub mse: f64,
}

/// Runs the centralized filter with gain `K_∞` on a trajectory.
pub fn centralized_kf(
    plant: &Plant,
    sol: &CentralizedSolution,
    traj: &Trajectory,
    x_hat0: &DVector<f64>,
    window_start: usize,
) -> Result<CkfRun> {
    let n = plant.n();
    if x_hat0.len() != n {
        return Err(Error::Dimension("initial estimate has the wrong length".into()));
    }
    let c = plant.stacked_c();
    let ca = &c * plant.a();
    let mut estimates = Vec::with_capacity(traj.states.len());
    estimates.push(x_hat0.clone());
    for ys in &traj.measurements {
        let prev = estimates.last().expect("non-empty");
        let y = linalg::stack(ys);
        let pred = plant.a() * prev;
        let innov = y - &ca * prev;
        estimates.push(pred + &sol.k_inf * innov);
    }
    let errors: Vec<_> = traj.states.iter().zip(&estimates).map(|(x, xh)| x - xh).collect();
    let (empirical_cov, mse) = window_stats(&errors, window_start);
    Ok(CkfRun {
        estimates,
        errors,
        empirical_cov,
        mse,
    })
}

/// Average outer product and average squared norm of `errors[k]` for
/// `k ∈ [start, len)`.
pub fn window_stats(errors: &[DVector<f64>], start: usize) -> (DMatrix<f64>, f64) {
    let n = errors.first().map_or(0, |e| e.len());
    let mut cov = DMatrix::zeros(n, n);
    let mut mse = 0.0;
    let count = errors.len().saturating_sub(start);
    for e in errors.iter().skip(start) {
        cov += e * e.transpose();
        mse += e.norm_squared();
    }
    if count > 0 {
        cov /= count as f64;
        mse /= count as f64;
    }
    (cov, mse)
}
