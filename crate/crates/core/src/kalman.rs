//! Steady-state Kalman filtering for a noiseless anti-stable plant observed
//! through white or ARMA-colored measurement noise.
//!
//! With colored noise the measurements are whitened first; for a plant
//! `x[k+1] = A x[k]` the whitened output is `Chat x[k] + w[k]`, where `Chat`
//! follows from the whitening filter evaluated at the eigenvalues of `A`.
//! [`compute_chat`] builds it in Kronecker/`vec` form and
//! [`design_c_for_identity`] inverts that map so that `Chat = I`.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::noise::ArmaNoise;
use crate::tol;

/// One step of `P' = A P A' - A P C' (C P C' + V)^-1 C P A'`, symmetrized.
pub fn riccati_step(p: &Mat, a: &Mat, c: &Mat, v: &Mat) -> Result<Mat> {
    check_filter_shapes(p, a, c, v)?;
    let apc = a * p * c.transpose();
    let s = c * p * c.transpose() + v;
    let next = a * p * a.transpose() - &apc * linalg::solve(&s, &apc.transpose())?;
    Ok(linalg::symmetrize(&next))
}

/// Observer gain `K = A P C' (C P C' + V)^-1`.
pub fn observer_gain(p: &Mat, a: &Mat, c: &Mat, v: &Mat) -> Result<Mat> {
    check_filter_shapes(p, a, c, v)?;
    let apc = a * p * c.transpose();
    let s = c * p * c.transpose() + v;
    // K = apc * s^-1  <=>  s' K' = apc'
    Ok(linalg::solve(&s.transpose(), &apc.transpose())?.transpose())
}

/// `‖P - riccati_step(P)‖_∞`.
pub fn are_residual(p: &Mat, a: &Mat, c: &Mat, v: &Mat) -> Result<f64> {
    Ok(linalg::inf_norm(&(p - riccati_step(p, a, c, v)?)))
}

fn check_filter_shapes(p: &Mat, a: &Mat, c: &Mat, v: &Mat) -> Result<()> {
    linalg::ensure_square(a, "A")?;
    let n = a.nrows();
    let m = c.nrows();
    if p.shape() != (n, n) || c.ncols() != n || v.shape() != (m, m) {
        return Err(Error::Dimension(format!(
            "Riccati data: A {n}x{n}, P {:?}, C {:?}, V {:?}",
            p.shape(),
            c.shape(),
            v.shape()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FilterSolution {
    /// Steady-state error covariance.
    pub p: Mat,
    /// Steady-state observer gain.
    pub gain: Mat,
    /// Output matrix the filter runs against (equals `C` for white noise).
    pub chat: Mat,
    pub iterations: usize,
    /// `‖P - riccati_step(P)‖_∞` at the returned `P`.
    pub residual: f64,
    /// Spectral radius of `A - K Chat`.
    pub closed_loop_radius: f64,
    /// The iteration is heading to a marginal closed loop (e.g. `|λ| = 1`
    /// modes, where `P` collapses to zero only sublinearly).
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct AreOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AreOptions {
    fn default() -> Self {
        Self {
            tol: tol::ARE_TOL,
            max_iter: tol::ARE_MAX_ITER,
        }
    }
}

const DEGENERATE_MARGIN: f64 = 1e-3;

pub fn solve_are(a: &Mat, c: &Mat, v: &Mat, p0: &Mat) -> Result<FilterSolution> {
    solve_are_with(a, c, v, p0, AreOptions::default())
}

/// Fixed-point Riccati iteration from `p0` until
/// `‖P[k+1] - P[k]‖ ≤ tol (1 + ‖P[k]‖)`.
pub fn solve_are_with(
    a: &Mat,
    c: &Mat,
    v: &Mat,
    p0: &Mat,
    opts: AreOptions,
) -> Result<FilterSolution> {
    check_filter_shapes(p0, a, c, v)?;
    if p0.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidArgument(
            "P0 = 0 is a fixed point of the Riccati map; start from a positive definite P0".into(),
        ));
    }
    let mut p = linalg::symmetrize(p0);
    let mut iterations = 0;
    let mut step = f64::INFINITY;
    let mut converged = false;
    while iterations < opts.max_iter {
        let next = riccati_step(&p, a, c, v)?;
        step = linalg::inf_norm(&(&next - &p));
        let scale = 1.0 + linalg::inf_norm(&p);
        p = next;
        iterations += 1;
        if !step.is_finite() {
            break;
        }
        if step <= opts.tol * scale {
            converged = true;
            break;
        }
    }
    let gain = observer_gain(&p, a, c, v)?;
    let closed_loop_radius = linalg::spectral_radius(&(a - &gain * c));
    let degenerate = closed_loop_radius > 1.0 - DEGENERATE_MARGIN;
    if !converged && !degenerate {
        return Err(Error::NonConvergence {
            what: "Riccati iteration",
            iterations,
            residual: step,
        });
    }
    if degenerate {
        log::debug!(
            "Riccati iteration degenerate after {iterations} steps (closed-loop radius {closed_loop_radius})"
        );
    }
    Ok(FilterSolution {
        residual: are_residual(&p, a, c, v)?,
        p,
        gain,
        chat: c.clone(),
        iterations,
        closed_loop_radius,
        degenerate,
    })
}

/// Real diagonalization `A = T diag(λ) T^-1` of a system matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Modal {
    pub t: Mat,
    pub eigenvalues: Vec<f64>,
}

impl Modal {
    /// Requires `T` invertible and every `|λ| ≥ 1`.
    pub fn new(t: Mat, eigenvalues: Vec<f64>) -> Result<Self> {
        linalg::ensure_square(&t, "T")?;
        if eigenvalues.len() != t.nrows() {
            return Err(Error::Dimension(format!(
                "{} eigenvalues for a {}x{} modal matrix",
                eigenvalues.len(),
                t.nrows(),
                t.ncols()
            )));
        }
        if let Some(l) = eigenvalues.iter().find(|l| !(l.abs() >= 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "eigenvalue {l} has modulus below 1; A must be anti-stable"
            )));
        }
        if linalg::numerical_rank(&t, tol::RANK_TOL) < t.nrows() {
            return Err(Error::Singular("modal matrix T".into()));
        }
        Ok(Self { t, eigenvalues })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `T diag(λ) T^-1`.
    pub fn matrix(&self) -> Result<Mat> {
        let lambda = Mat::from_diagonal(&Vector::from_column_slice(&self.eigenvalues));
        let tl = &self.t * lambda;
        // A = tl T^-1  <=>  T' A' = tl'
        Ok(linalg::solve(&self.t.transpose(), &tl.transpose())?.transpose())
    }

    /// `sum_i Λ^-i ⊗ M_i` over coefficient matrices `M_1, M_2, ...`.
    fn kron_series(&self, coeffs: &[Mat]) -> Mat {
        let n = self.dim();
        let mut out = Mat::zeros(n * n, n * n);
        for (i, m) in coeffs.iter().enumerate() {
            let powers = Vector::from_iterator(
                n,
                self.eigenvalues.iter().map(|l| l.powi(-(i as i32 + 1))),
            );
            out += linalg::kron(&Mat::from_diagonal(&powers), m);
        }
        out
    }
}

fn check_noise_dim(modal: &Modal, noise: &ArmaNoise) -> Result<()> {
    if modal.dim() != noise.dim() {
        return Err(Error::Dimension(format!(
            "plant has {} states, noise has {} channels",
            modal.dim(),
            noise.dim()
        )));
    }
    Ok(())
}

/// Equivalent output matrix seen after whitening the measurements:
///
/// `vec(Chat) = (T^-T ⊗ I) (I + sum Λ^-j ⊗ G_j)^-1 (I - sum Λ^-i ⊗ F_i) (T^T ⊗ I) vec(C)`.
pub fn compute_chat(modal: &Modal, c: &Mat, noise: &ArmaNoise) -> Result<Mat> {
    check_noise_dim(modal, noise)?;
    let n = modal.dim();
    if c.shape() != (n, n) {
        return Err(Error::Dimension(format!("C must be {n}x{n}")));
    }
    let id_n = Mat::identity(n, n);
    let id_nn = Mat::identity(n * n, n * n);
    let ar = &id_nn - modal.kron_series(noise.ar());
    let ma = &id_nn + modal.kron_series(noise.ma());
    let right = linalg::kron(&modal.t.transpose(), &id_n) * linalg::vec(c)?;
    let middle = linalg::solve_vec(&ma, &(ar * right))
        .map_err(|_| Error::Internal("MA factor singular at the plant eigenvalues".into()))?;
    let left = linalg::kron(&linalg::inverse(&modal.t)?.transpose(), &id_n);
    linalg::unvec(&(left * middle), n)
}

/// Output matrix `C` for which [`compute_chat`] returns the identity:
///
/// `vec(C) = (T^-T ⊗ I) (I - sum Λ^-i ⊗ F_i)^-1 (I + sum Λ^-j ⊗ G_j) (T^T ⊗ I) vec(I)`.
pub fn design_c_for_identity(modal: &Modal, noise: &ArmaNoise) -> Result<Mat> {
    check_noise_dim(modal, noise)?;
    let n = modal.dim();
    let id_n = Mat::identity(n, n);
    let id_nn = Mat::identity(n * n, n * n);
    let ar = &id_nn - modal.kron_series(noise.ar());
    let ma = &id_nn + modal.kron_series(noise.ma());
    let right = linalg::kron(&modal.t.transpose(), &id_n) * linalg::vec(&id_n)?;
    let middle = linalg::solve_vec(&ar, &(ma * right))
        .map_err(|_| Error::Internal("AR factor singular at the plant eigenvalues".into()))?;
    let left = linalg::kron(&linalg::inverse(&modal.t)?.transpose(), &id_n);
    let c = linalg::unvec(&(left * middle), n)?;

    let chat = compute_chat(modal, &c, noise)?;
    let err = linalg::inf_norm(&(chat - id_n));
    if err > tol::CHAT_TOL {
        return Err(Error::Internal(format!(
            "designed C gives ‖Chat - I‖ = {err:.3e}"
        )));
    }
    Ok(c)
}

/// Same `C` as [`design_c_for_identity`], assembled column by column:
/// column `l` of `C T` is the shaping gain at `λ_l` applied to column `l` of `T`.
///
/// Costs `O(n^4)` instead of an `n^2 x n^2` solve; used inside the optimizers.
pub fn design_c_blockwise(modal: &Modal, noise: &ArmaNoise) -> Result<Mat> {
    check_noise_dim(modal, noise)?;
    let n = modal.dim();
    let mut ct = Mat::zeros(n, n);
    for (l, &lambda) in modal.eigenvalues.iter().enumerate() {
        let gain = noise.shaping_gain(lambda)?;
        ct.set_column(l, &(gain * modal.t.column(l)));
    }
    // C = ct T^-1
    Ok(linalg::solve(&modal.t.transpose(), &ct.transpose())?.transpose())
}

/// Rank of the observability matrix `[C; C A; ...; C A^(n-1)]`.
pub fn observability_rank(a: &Mat, c: &Mat) -> usize {
    let n = a.nrows();
    let m = c.nrows();
    let mut obs = Mat::zeros(m * n, n);
    let mut block = c.clone();
    for k in 0..n {
        obs.view_mut((k * m, 0), (m, n)).copy_from(&block);
        block = &block * a;
    }
    linalg::numerical_rank(&obs, tol::RANK_TOL)
}
