//! Vector ARMA colored Gaussian noise.
//!
//! The noise obeys
//!
//! ```text
//! v[k] = sum_i F_i v[k-i] + w[k] + sum_j G_j w[k-j],     w[k] ~ N(0, V)
//! ```
//!
//! i.e. `v = F(z) w` with shaping filter `F(z) = (I - sum F_i z^-i)^-1 (I + sum G_j z^-j)`.
//! Its inverse, the whitening filter, is `(I + sum G_j z^-j)^-1 (I - sum F_i z^-i)`;
//! the factor order matters once the coefficient matrices do not commute.

use nalgebra::Cholesky;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Mat};
use crate::tol;

#[derive(Debug, Clone, PartialEq)]
pub struct ArmaNoise {
    ar: Vec<Mat>,
    ma: Vec<Mat>,
    innovation_cov: Mat,
}

/// Outcome of [`ArmaNoise::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub min_innovation_eig: f64,
    /// Largest root modulus of `det(I - sum F_i z^-i)`; zero without AR part.
    pub ar_root_modulus: f64,
    /// Largest root modulus of `det(I + sum G_j z^-j)`; zero without MA part.
    pub ma_root_modulus: f64,
}

impl Diagnostics {
    pub fn covariance_ok(&self) -> bool {
        self.min_innovation_eig > 0.0
    }

    pub fn stable(&self) -> bool {
        self.ar_root_modulus < 1.0
    }

    pub fn minimum_phase(&self) -> bool {
        self.ma_root_modulus < 1.0
    }

    pub fn passed(&self) -> bool {
        self.covariance_ok() && self.stable() && self.minimum_phase()
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.covariance_ok() {
            out.push(format!(
                "innovation covariance is not positive definite (min eigenvalue {})",
                self.min_innovation_eig
            ));
        }
        if !self.stable() {
            out.push(format!(
                "AR polynomial root modulus {} ≥ 1",
                self.ar_root_modulus
            ));
        }
        if !self.minimum_phase() {
            out.push(format!(
                "MA polynomial root modulus {} ≥ 1",
                self.ma_root_modulus
            ));
        }
        out
    }
}

/// Taps `H_1..H_L` of the whitening filter written as `I - sum_i H_i z^-i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub taps: Vec<Mat>,
}

impl ImpulseResponse {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// `‖H_L‖ / max_i ‖H_i‖`, zero for an empty response.
    pub fn tail_ratio(&self) -> f64 {
        let peak = self.taps.iter().map(linalg::inf_norm).fold(0.0, f64::max);
        match self.taps.last() {
            Some(last) if peak > 0.0 => linalg::inf_norm(last) / peak,
            _ => 0.0,
        }
    }
}

/// A sampled noise trajectory; row `k` holds time step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub noise: Mat,
    pub innovations: Mat,
}

impl ArmaNoise {
    pub fn new(ar: Vec<Mat>, ma: Vec<Mat>, innovation_cov: Mat) -> Result<Self> {
        linalg::ensure_square(&innovation_cov, "innovation covariance")?;
        let n = innovation_cov.nrows();
        for (kind, list) in [("AR", &ar), ("MA", &ma)] {
            for (i, m) in list.iter().enumerate() {
                if m.shape() != (n, n) {
                    return Err(Error::Dimension(format!(
                        "{kind} coefficient {} is {}x{}, expected {n}x{n}",
                        i + 1,
                        m.nrows(),
                        m.ncols()
                    )));
                }
                linalg::ensure_finite(m)?;
            }
        }
        linalg::ensure_finite(&innovation_cov)?;
        let asymmetry = linalg::inf_norm(&(&innovation_cov - innovation_cov.transpose()));
        let tolerance = tol::SYM_TOL * linalg::inf_norm(&innovation_cov).max(f64::MIN_POSITIVE);
        if asymmetry > tolerance {
            return Err(Error::NotSymmetric {
                asymmetry,
                tolerance,
            });
        }
        Ok(Self {
            ar,
            ma,
            innovation_cov: linalg::symmetrize(&innovation_cov),
        })
    }

    pub fn white(innovation_cov: Mat) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), innovation_cov)
    }

    /// Single-channel model from scalar coefficients.
    pub fn scalar(ar: &[f64], ma: &[f64], variance: f64) -> Result<Self> {
        let one = |x: f64| Mat::from_element(1, 1, x);
        Self::new(
            ar.iter().map(|&f| one(f)).collect(),
            ma.iter().map(|&g| one(g)).collect(),
            one(variance),
        )
    }

    pub fn dim(&self) -> usize {
        self.innovation_cov.nrows()
    }

    pub fn ar(&self) -> &[Mat] {
        &self.ar
    }

    pub fn ma(&self) -> &[Mat] {
        &self.ma
    }

    pub fn innovation_cov(&self) -> &Mat {
        &self.innovation_cov
    }

    pub fn ar_order(&self) -> usize {
        self.ar.len()
    }

    pub fn ma_order(&self) -> usize {
        self.ma.len()
    }

    pub fn max_order(&self) -> usize {
        self.ar.len().max(self.ma.len())
    }

    pub fn is_white(&self) -> bool {
        self.ar.iter().chain(&self.ma).all(|m| m.iter().all(|&x| x == 0.0))
    }

    /// True when every coefficient matrix and the innovation covariance are diagonal,
    /// i.e. the channels are independent.
    pub fn is_diagonal(&self) -> bool {
        self.ar
            .iter()
            .chain(&self.ma)
            .chain(std::iter::once(&self.innovation_cov))
            .all(linalg::is_diagonal)
    }

    /// Scalar coefficients of channel `l` for a diagonal model.
    pub fn channel_coefficients(&self, l: usize) -> (Vec<f64>, Vec<f64>, f64) {
        (
            self.ar.iter().map(|m| m[(l, l)]).collect(),
            self.ma.iter().map(|m| m[(l, l)]).collect(),
            self.innovation_cov[(l, l)],
        )
    }

    /// Coefficients `[I, -F_1, ..., -F_p]` of `I - sum F_i z^-i`.
    pub fn ar_polynomial(&self) -> Vec<Mat> {
        let n = self.dim();
        std::iter::once(Mat::identity(n, n))
            .chain(self.ar.iter().map(|f| -f))
            .collect()
    }

    /// Coefficients `[I, G_1, ..., G_q]` of `I + sum G_j z^-j`.
    pub fn ma_polynomial(&self) -> Vec<Mat> {
        let n = self.dim();
        std::iter::once(Mat::identity(n, n))
            .chain(self.ma.iter().cloned())
            .collect()
    }

    pub fn validate(&self) -> Result<Diagnostics> {
        let max_modulus = |coeffs: &[Mat]| -> Result<f64> {
            Ok(linalg::polynomial_matrix_roots(coeffs)?
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max))
        };
        let eig = linalg::sym_eig(&self.innovation_cov)?;
        Ok(Diagnostics {
            min_innovation_eig: eig.values[eig.values.len() - 1],
            ar_root_modulus: max_modulus(&self.ar_polynomial())?,
            ma_root_modulus: max_modulus(&self.ma_polynomial())?,
        })
    }

    /// [`validate`](Self::validate), turning any failed invariant into an error.
    pub fn ensure_valid(&self) -> Result<Diagnostics> {
        let diag = self.validate()?;
        if diag.passed() {
            Ok(diag)
        } else {
            Err(Error::InvalidModel(diag.failures().join("; ")))
        }
    }

    /// Steps discarded before recording samples.
    pub fn burn_in(&self) -> usize {
        200.max(20 * self.max_order())
    }

    /// First `len` taps of the whitening filter.
    ///
    /// Matching powers of `z^-1` in `(I + sum G_j z^-j)(I - sum H_i z^-i) = I - sum F_i z^-i`
    /// gives `H_k = F_k + G_k - sum_{j<k} G_j H_{k-j}`.
    pub fn inverse_filter_taps(&self, len: usize) -> Result<ImpulseResponse> {
        if len < self.max_order() {
            return Err(Error::InvalidArgument(format!(
                "impulse response length {len} is shorter than the model order {}",
                self.max_order()
            )));
        }
        if self.is_white() {
            return Ok(ImpulseResponse { taps: Vec::new() });
        }
        let mut taps = Vec::with_capacity(len);
        for k in 1..=len {
            taps.push(self.next_tap(k, &taps));
        }
        Ok(ImpulseResponse { taps })
    }

    /// Whitening-filter taps truncated once they have decayed to
    /// [`tol::TRUNC_TOL`] of their peak (capped at [`tol::MAX_TAPS`]).
    pub fn impulse_response(&self) -> ImpulseResponse {
        if self.is_white() {
            return ImpulseResponse { taps: Vec::new() };
        }
        let window = self.ma_order().max(1);
        let mut taps: Vec<Mat> = Vec::new();
        let mut peak: f64 = 0.0;
        for k in 1..=tol::MAX_TAPS {
            let tap = self.next_tap(k, &taps);
            peak = peak.max(linalg::inf_norm(&tap));
            taps.push(tap);
            if k >= self.max_order()
                && taps[k - window..]
                    .iter()
                    .all(|h| linalg::inf_norm(h) <= tol::TRUNC_TOL * peak)
            {
                break;
            }
        }
        ImpulseResponse { taps }
    }

    fn next_tap(&self, k: usize, previous: &[Mat]) -> Mat {
        let n = self.dim();
        let mut h = Mat::zeros(n, n);
        if let Some(f) = self.ar.get(k - 1) {
            h += f;
        }
        if let Some(g) = self.ma.get(k - 1) {
            h += g;
        }
        for (j, g) in self.ma.iter().enumerate().take(k - 1) {
            h -= g * &previous[k - 2 - j];
        }
        h
    }

    /// Draw `steps` samples of the noise and its innovations.
    ///
    /// Innovations are `chol(V) * z` with `z` standard normal from a ChaCha20
    /// stream seeded by `seed`. The recursion starts from zero and
    /// [`burn_in`](Self::burn_in) steps are discarded.
    pub fn sample_path(&self, steps: usize, seed: u64) -> Result<NoisePath> {
        if steps == 0 {
            return Err(Error::InvalidArgument("number of steps must be positive".into()));
        }
        let n = self.dim();
        let chol = Cholesky::new(self.innovation_cov.clone())
            .ok_or_else(|| Error::InvalidModel("innovation covariance is not positive definite".into()))?;
        let lower = chol.l();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let burn_in = self.burn_in();
        let total = burn_in + steps;

        let p = self.ar_order();
        let q = self.ma_order();
        // v_hist[i] = v[k-1-i], w_hist[j] = w[k-1-j]
        let mut v_hist = vec![vec![0.0; n]; p];
        let mut w_hist = vec![vec![0.0; n]; q];
        let mut noise = Mat::zeros(steps, n);
        let mut innovations = Mat::zeros(steps, n);
        let mut z = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut v = vec![0.0; n];

        for k in 0..total {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            for r in 0..n {
                w[r] = (0..=r).map(|c| lower[(r, c)] * z[c]).sum();
            }
            v.copy_from_slice(&w);
            for (f, past) in self.ar.iter().zip(&v_hist) {
                mat_vec_acc(f, past, &mut v, 1.0);
            }
            for (g, past) in self.ma.iter().zip(&w_hist) {
                mat_vec_acc(g, past, &mut v, 1.0);
            }
            push_history(&mut v_hist, &v);
            push_history(&mut w_hist, &w);
            if k >= burn_in {
                let row = k - burn_in;
                for c in 0..n {
                    noise[(row, c)] = v[c];
                    innovations[(row, c)] = w[c];
                }
            }
        }
        Ok(NoisePath { noise, innovations })
    }

    /// Recover innovations from a noise trajectory (rows are time steps)
    /// by running the whitening recursion from zero initial conditions.
    pub fn whiten_path(&self, v: &Mat) -> Result<Mat> {
        let n = self.dim();
        if v.ncols() != n {
            return Err(Error::Dimension(format!(
                "path has {} columns, model has {n} channels",
                v.ncols()
            )));
        }
        let mut v_hist = vec![vec![0.0; n]; self.ar_order()];
        let mut w_hist = vec![vec![0.0; n]; self.ma_order()];
        let mut out = Mat::zeros(v.nrows(), n);
        let mut vk = vec![0.0; n];
        let mut wk = vec![0.0; n];
        for k in 0..v.nrows() {
            for c in 0..n {
                vk[c] = v[(k, c)];
            }
            wk.copy_from_slice(&vk);
            for (f, past) in self.ar.iter().zip(&v_hist) {
                mat_vec_acc(f, past, &mut wk, -1.0);
            }
            for (g, past) in self.ma.iter().zip(&w_hist) {
                mat_vec_acc(g, past, &mut wk, -1.0);
            }
            push_history(&mut v_hist, &vk);
            push_history(&mut w_hist, &wk);
            for c in 0..n {
                out[(k, c)] = wk[c];
            }
        }
        Ok(out)
    }

    /// `I - sum F_i z^-i` evaluated at a complex point.
    pub fn ar_at(&self, z: Complex64) -> CMat {
        poly_at(&self.ar_polynomial(), z)
    }

    /// `I + sum G_j z^-j` evaluated at a complex point.
    pub fn ma_at(&self, z: Complex64) -> CMat {
        poly_at(&self.ma_polynomial(), z)
    }

    /// Whitening filter `(I + sum G_j z^-j)^-1 (I - sum F_i z^-i)` at `z`.
    pub fn whitening_at(&self, z: Complex64) -> Result<CMat> {
        self.ma_at(z)
            .lu()
            .solve(&self.ar_at(z))
            .ok_or_else(|| Error::Singular("MA polynomial on the evaluation contour".into()))
    }

    /// Shaping-filter gain `(I - sum F_i x^-i)^-1 (I + sum G_j x^-j)` at a real point `|x| ≥ 1`.
    pub fn shaping_gain(&self, x: f64) -> Result<Mat> {
        let n = self.dim();
        let mut ar = Mat::identity(n, n);
        let mut ma = Mat::identity(n, n);
        let inv = 1.0 / x;
        let mut power = inv;
        for i in 0..self.max_order() {
            if let Some(f) = self.ar.get(i) {
                ar -= f * power;
            }
            if let Some(g) = self.ma.get(i) {
                ma += g * power;
            }
            power *= inv;
        }
        linalg::solve(&ar, &ma)
    }
}

fn poly_at(coeffs: &[Mat], z: Complex64) -> CMat {
    let n = coeffs[0].nrows();
    let inv = z.inv();
    let mut power = Complex64::new(1.0, 0.0);
    let mut out = CMat::zeros(n, n);
    for c in coeffs {
        out += c.map(|x| Complex64::new(x, 0.0)) * power;
        power *= inv;
    }
    out
}

/// `out += sign * m * x` for small dense `m`.
pub(crate) fn mat_vec_acc(m: &Mat, x: &[f64], out: &mut [f64], sign: f64) {
    for (r, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, xc) in x.iter().enumerate() {
            acc += m[(r, c)] * xc;
        }
        *o += sign * acc;
    }
}

/// Shift a newest-first history by one slot and store `latest` in front.
pub(crate) fn push_history(hist: &mut [Vec<f64>], latest: &[f64]) {
    if hist.is_empty() {
        return;
    }
    hist.rotate_right(1);
    hist[0].copy_from_slice(latest);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn validate_scalar_examples() {
        let ok = ArmaNoise::scalar(&[0.5], &[0.3], 1.0).unwrap().validate().unwrap();
        assert!(ok.passed());
        assert_abs_diff_eq!(ok.ar_root_modulus, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(ok.ma_root_modulus, 0.3, epsilon = 1e-14);

        let bad = ArmaNoise::scalar(&[1.1], &[], 1.0).unwrap().validate().unwrap();
        assert!(!bad.stable());
        assert_abs_diff_eq!(bad.ar_root_modulus, 1.1, epsilon = 1e-14);
        assert!(bad.failures()[0].contains("AR polynomial root modulus 1.1"));

        // unit-modulus boundary fails
        let edge = ArmaNoise::scalar(&[], &[-1.0], 1.0).unwrap().validate().unwrap();
        assert!(!edge.minimum_phase());
        assert_abs_diff_eq!(edge.ma_root_modulus, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn non_positive_covariance_fails() {
        let d = ArmaNoise::scalar(&[], &[], -1.0).unwrap().validate().unwrap();
        assert!(!d.covariance_ok());
        assert!(ArmaNoise::scalar(&[], &[], 0.0).unwrap().ensure_valid().is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let err = ArmaNoise::new(vec![Mat::zeros(1, 1)], vec![], Mat::identity(2, 2)).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn taps_examples() {
        let white = ArmaNoise::white(Mat::identity(2, 2)).unwrap();
        assert!(white.inverse_filter_taps(4).unwrap().is_empty());

        let ar = ArmaNoise::scalar(&[0.5], &[], 1.0).unwrap();
        let h = ar.inverse_filter_taps(4).unwrap();
        assert_eq!(h.taps[0][(0, 0)], 0.5);
        assert!(h.taps[1..].iter().all(|t| t[(0, 0)] == 0.0));

        let ma = ArmaNoise::scalar(&[], &[0.5], 1.0).unwrap();
        let h = ma.inverse_filter_taps(3).unwrap();
        // long division of 1 / (1 + 0.5 z^-1) = 1 - 0.5 z^-1 + 0.25 z^-2 - ...
        for (i, tap) in h.taps.iter().enumerate() {
            assert_abs_diff_eq!(tap[(0, 0)], -(-0.5f64).powi(i as i32 + 1), epsilon = 1e-15);
        }
    }

    #[test]
    fn taps_reject_short_length() {
        let m = ArmaNoise::scalar(&[0.1, 0.1], &[], 1.0).unwrap();
        assert!(m.inverse_filter_taps(1).is_err());
    }

    #[test]
    fn adaptive_truncation_meets_tail_tolerance() {
        let m = ArmaNoise::scalar(&[0.7], &[0.6], 1.0).unwrap();
        let h = m.impulse_response();
        assert!(h.tail_ratio() <= tol::TRUNC_TOL);
        assert!(h.len() < 200);
    }

    #[test]
    fn whiten_ma1_impulse() {
        let ma = ArmaNoise::scalar(&[], &[0.5], 1.0).unwrap();
        let mut v = Mat::zeros(6, 1);
        v[(0, 0)] = 1.0;
        let w = ma.whiten_path(&v).unwrap();
        for k in 0..6 {
            assert_abs_diff_eq!(w[(k, 0)], (-0.5f64).powi(k as i32), epsilon = 1e-15);
        }
    }

    #[test]
    fn whiten_white_is_identity() {
        let white = ArmaNoise::white(Mat::identity(2, 2)).unwrap();
        let path = white.sample_path(50, 3).unwrap();
        assert_eq!(white.whiten_path(&path.noise).unwrap(), path.noise);
        assert_eq!(path.noise, path.innovations);
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = ArmaNoise::scalar(&[0.4], &[0.2], 2.0).unwrap();
        assert_eq!(m.sample_path(100, 11).unwrap(), m.sample_path(100, 11).unwrap());
        assert_ne!(m.sample_path(100, 11).unwrap(), m.sample_path(100, 12).unwrap());
        assert!(m.sample_path(0, 1).is_err());
    }

    #[test]
    fn burn_in_rule() {
        assert_eq!(ArmaNoise::scalar(&[0.1], &[], 1.0).unwrap().burn_in(), 200);
        let long = ArmaNoise::scalar(&[0.01; 12], &[], 1.0).unwrap();
        assert_eq!(long.burn_in(), 240);
    }

    #[test]
    fn shaping_gain_scalar() {
        let m = ArmaNoise::scalar(&[0.5], &[0.25], 1.0).unwrap();
        assert_abs_diff_eq!(m.shaping_gain(2.0).unwrap()[(0, 0)], 1.125 / 0.75, epsilon = 1e-15);
    }
}
