//! Small dense linear-algebra helpers on top of `nalgebra`.
//!
//! Symmetric eigen-problems go through a cyclic Jacobi solver; the matrices
//! handled here are at most a few hundred rows, where Jacobi is accurate to
//! machine precision and its convergence is easy to reason about.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Off-diagonal Frobenius norm threshold, relative to the matrix norm.
pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalue floor used when taking square roots of near-PSD matrices.
pub const SQRT_EIGEN_FLOOR: f64 = 1e-14;

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Eigenvectors stored column-wise, in the order of `values`.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn max(&self) -> f64 {
        *self.values.last().expect("non-empty spectrum")
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    /// Rebuilds `V f(Λ) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &v) in self.values.iter().enumerate() {
            let fv = f(v);
            for i in 0..n {
                scaled[(i, j)] *= fv;
            }
        }
        let out = &scaled * self.vectors.transpose();
        symmetrize(&out)
    }
}

/// Largest absolute asymmetry `max |m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Cyclic Jacobi eigen-solver. The input is assumed symmetric; only its
/// symmetric part is used.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> Result<SymEigen> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Dimension(format!(
            "eigen-solver needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if n == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let mut a = symmetrize(m);
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm();
    let mut converged = false;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off <= JACOBI_TOL * scale || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // A <- A J
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                // A <- Jᵀ A
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > JACOBI_TOL * scale {
        return Err(Error::EigenNoConvergence(JACOBI_MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEigen { values, vectors })
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

/// Spectral radius of a general square matrix (real Schur form).
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    match m.nrows() {
        0 => 0.0,
        1 => m[(0, 0)].abs(),
        _ => m
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
    }
}

/// Operator 2-norm.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = m.transpose() * m;
    match jacobi_eigen(&gram) {
        Ok(e) => e.max().max(0.0).sqrt(),
        Err(_) => m.clone().svd(false, false).singular_values.max(),
    }
}

/// `(M^{1/2}, M^{-1/2})` of a symmetric PSD matrix, with eigenvalues
/// clamped from below at [`SQRT_EIGEN_FLOOR`].
pub fn sym_sqrt_pair(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = jacobi_eigen(m)?;
    let sqrt = eig.map(|l| l.max(SQRT_EIGEN_FLOOR).sqrt());
    let inv_sqrt = eig.map(|l| 1.0 / l.max(SQRT_EIGEN_FLOOR).sqrt());
    Ok((sqrt, inv_sqrt))
}

/// Square root of a symmetric PSD matrix; negative round-off eigenvalues map to 0.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = jacobi_eigen(m)?;
    Ok(eig.map(|l| l.max(0.0).sqrt()))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    Ok(jacobi_eigen(m)?.min())
}

/// Numerical rank with singular-value threshold `rel_tol * σ_max`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

pub fn inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    m.clone().try_inverse().ok_or(Error::Singular(what))
}

/// Block-diagonal assembly; blocks may have zero size.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Vertical stacking of vectors.
pub fn stack(parts: &[DVector<f64>]) -> DVector<f64> {
    let len = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(len);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.len()).copy_from(p);
        at += p.len();
    }
    out
}

/// Stopping rule for [`perron_radius`].
#[derive(Debug, Clone, Copy)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        PowerIteration {
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

/// Spectral radius of a cone-preserving linear operator by shifted power
/// iteration.
///
/// `apply` must map the cone into itself (non-negative vectors, or PSD
/// matrices for `X ↦ E[A X Aᵀ]`), and `start` must lie in its interior.
/// The Perron root `r` is then an eigenvalue with `|μ| ≤ r` for every other
/// eigenvalue `μ`; iterating `L + cI` with `c > 0` makes `r + c` strictly
/// dominant even when other eigenvalues share the modulus `r`.
pub fn perron_radius<F>(mut apply: F, start: &DMatrix<f64>, opts: PowerIteration) -> Result<(f64, usize)>
where
    F: FnMut(&DMatrix<f64>) -> DMatrix<f64>,
{
    let norm0 = start.norm();
    if norm0 == 0.0 {
        return Err(Error::InvalidParameter("power iteration start is zero".into()));
    }
    let mut x = start / norm0;
    let first = apply(&x);
    let shift = 0.5 * first.norm();
    if shift == 0.0 {
        return Ok((0.0, 1));
    }
    let mut y = first + &x * shift;
    let mut mu = y.norm();
    x = y / mu;
    let mut change = f64::INFINITY;
    for k in 1..opts.max_iter {
        y = apply(&x) + &x * shift;
        let next = y.norm();
        change = (next - mu).abs() / next;
        mu = next;
        x = y / mu;
        if change <= opts.tol {
            return Ok(((mu - shift).max(0.0), k + 1));
        }
    }
    Err(Error::PowerIteration {
        iterations: opts.max_iter,
        estimate: mu - shift,
        change,
    })
}
