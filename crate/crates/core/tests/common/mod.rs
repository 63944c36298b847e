#![allow(dead_code)]

use acgn::linalg::{Mat, Vector};
use acgn::noise::ArmaNoise;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal_mat(rng: &mut ChaCha20Rng, n: usize, scale: f64) -> Mat {
    Mat::from_fn(n, n, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

pub fn diag(v: &[f64]) -> Mat {
    Mat::from_diagonal(&Vector::from_column_slice(v))
}

/// Scale `M_i -> s^i M_i`, which scales every root of the matrix polynomial by `s`.
fn shrink(coeffs: &mut [Mat], s: f64) {
    for (i, m) in coeffs.iter_mut().enumerate() {
        *m *= s.powi(i as i32 + 1);
    }
}

/// Random ARMA model whose AR and MA roots have modulus at most 0.9.
/// `diagonal` keeps every coefficient matrix and the innovation
/// covariance diagonal.
pub fn random_noise(rng: &mut ChaCha20Rng, n: usize, p: usize, q: usize, diagonal: bool) -> ArmaNoise {
    let coeff = |rng: &mut ChaCha20Rng, i: usize| {
        let m = normal_mat(rng, n, 0.6 / (i + 1) as f64);
        if diagonal {
            Mat::from_diagonal(&m.diagonal())
        } else {
            m
        }
    };
    let mut ar: Vec<Mat> = (0..p).map(|i| coeff(rng, i)).collect();
    let mut ma: Vec<Mat> = (0..q).map(|j| coeff(rng, j)).collect();
    let cov = if diagonal {
        diag(&(0..n).map(|_| rng.random_range(0.3..3.0)).collect::<Vec<_>>())
    } else {
        let b = normal_mat(rng, n, 1.0);
        &b * b.transpose() + Mat::identity(n, n) * 0.2
    };
    let cov = (&cov + cov.transpose()) * 0.5;
    for _ in 0..4 {
        let d = ArmaNoise::new(ar.clone(), ma.clone(), cov.clone())
            .unwrap()
            .validate()
            .unwrap();
        if d.ar_root_modulus <= 0.9 && d.ma_root_modulus <= 0.9 {
            break;
        }
        if d.ar_root_modulus > 0.9 {
            shrink(&mut ar, 0.899 / d.ar_root_modulus);
        }
        if d.ma_root_modulus > 0.9 {
            shrink(&mut ma, 0.899 / d.ma_root_modulus);
        }
    }
    let noise = ArmaNoise::new(ar, ma, cov).unwrap();
    noise.ensure_valid().unwrap();
    noise
}

/// Random orthogonal matrix (QR of a Gaussian matrix).
pub fn random_orthogonal(rng: &mut ChaCha20Rng, n: usize) -> Mat {
    normal_mat(rng, n, 1.0).qr().q()
}

/// Taps of `(I + sum G_j z^-j)^-1 (I - sum F_i z^-i) = I - sum_i H_i z^-i`,
/// from matching coefficients of `(I + G(z)) (I - H(z)) = I - F(z)`.
pub struct WhiteningTaps<'a> {
    noise: &'a ArmaNoise,
    taps: Vec<Mat>,
}

impl<'a> WhiteningTaps<'a> {
    pub fn new(noise: &'a ArmaNoise) -> Self {
        WhiteningTaps { noise, taps: Vec::new() }
    }
}

impl Iterator for WhiteningTaps<'_> {
    type Item = Mat;

    fn next(&mut self) -> Option<Mat> {
        let n = self.noise.dim();
        let k = self.taps.len() + 1;
        let pick = |m: &[Mat], i: usize| m.get(i - 1).cloned().unwrap_or_else(|| Mat::zeros(n, n));
        let mut hk = pick(self.noise.ar(), k) + pick(self.noise.ma(), k);
        for j in 1..k.min(self.noise.ma().len() + 1) {
            hk -= &self.noise.ma()[j - 1] * &self.taps[k - j - 1];
        }
        self.taps.push(hk.clone());
        Some(hk)
    }
}

pub fn whitening_taps(noise: &ArmaNoise, len: usize) -> Vec<Mat> {
    WhiteningTaps::new(noise).take(len).collect()
}

/// `C - sum_i H_i C A^-i`, summed until the terms vanish.
pub fn chat_series(noise: &ArmaNoise, a: &Mat, c: &Mat) -> Mat {
    let a_inv = a.clone().try_inverse().unwrap();
    let mut out = c.clone();
    let mut power = a_inv.clone();
    for h in WhiteningTaps::new(noise).take(5000) {
        let term = &h * c * &power;
        out -= &term;
        if term.norm() < 1e-18 && h.norm() < 1e-13 {
            break;
        }
        power = &power * &a_inv;
    }
    out
}
