//! Dense real-matrix helpers on top of `nalgebra`.
//!
//! Everything here is small-dimension numerics: Kronecker products and the
//! column-stacking `vec` operator, a symmetric eigensolver with a fixed
//! ordering, spectral radii, and the block-companion root finder used to
//! check stability and minimum phase of matrix polynomials.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tol;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMat = DMatrix<Complex64>;

/// Induced infinity norm (maximum absolute row sum).
pub fn inf_norm(m: &Mat) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn ensure_finite(m: &Mat) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

pub fn ensure_square(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() == m.ncols() && m.nrows() > 0 {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what} must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn is_diagonal(m: &Mat) -> bool {
    m.iter()
        .enumerate()
        .all(|(k, &x)| k % m.nrows() == k / m.nrows() || x == 0.0)
}

/// Kronecker product `a ⊗ b`; block `(i, j)` equals `a[(i, j)] * b`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Column-stacking vectorization of a square matrix.
pub fn vec(m: &Mat) -> Result<Vector> {
    ensure_square(m, "vec argument")?;
    // nalgebra storage is column-major, which is exactly column stacking.
    Ok(Vector::from_column_slice(m.as_slice()))
}

/// Inverse of [`vec()`] for an `n x n` matrix.
pub fn unvec(v: &Vector, n: usize) -> Result<Mat> {
    if n == 0 || v.len() != n * n {
        return Err(Error::Dimension(format!(
            "unvec expects {} entries for n = {n}, got {}",
            n * n,
            v.len()
        )));
    }
    Ok(Mat::from_column_slice(n, n, v.as_slice()))
}

/// Eigendecomposition `m = vectors * diag(values) * vectors^T` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Orthogonal matrix whose columns are eigenvectors.
    pub vectors: Mat,
    /// Eigenvalues in descending order.
    pub values: Vector,
}

impl SymEig {
    pub fn reconstruct(&self) -> Mat {
        &self.vectors * Mat::from_diagonal(&self.values) * self.vectors.transpose()
    }
}

pub fn sym_eig(m: &Mat) -> Result<SymEig> {
    ensure_square(m, "symmetric eigenproblem")?;
    ensure_finite(m)?;
    let scale = inf_norm(m).max(f64::MIN_POSITIVE);
    let asymmetry = inf_norm(&(m - m.transpose()));
    let tolerance = tol::SYM_TOL * scale;
    if asymmetry > tolerance {
        return Err(Error::NotSymmetric {
            asymmetry,
            tolerance,
        });
    }
    let eig = symmetrize(m).symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = Vector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEig { vectors, values })
}

/// All eigenvalues of a general square matrix, in no particular order.
pub fn eigenvalues(m: &Mat) -> Vec<Complex64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    match Schur::try_new(m.clone(), f64::EPSILON, 10_000) {
        Some(schur) => schur.complex_eigenvalues().iter().copied().collect(),
        None => {
            log::warn!("Schur iteration failed; falling back to Gelfand estimate");
            vec![Complex64::new(gelfand_radius(m), 0.0)]
        }
    }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Mat) -> f64 {
    eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

// ‖M^(2^k)‖^(1/2^k) with renormalisation at every squaring.
fn gelfand_radius(m: &Mat) -> f64 {
    let mut power = m.clone();
    let mut log_scale = 0.0;
    let mut exponent = 1.0;
    for _ in 0..40 {
        let norm = inf_norm(&power);
        if norm == 0.0 {
            return 0.0;
        }
        power /= norm;
        log_scale += norm.ln() / exponent;
        power = &power * &power;
        exponent *= 2.0;
    }
    (log_scale + inf_norm(&power).max(f64::MIN_POSITIVE).ln() / exponent).exp()
}

/// Roots of `det(sum_k coeffs[k] z^(d-k)) = 0`, where `coeffs[k]` multiplies
/// `z^-k` in the matrix polynomial `sum_k coeffs[k] z^-k`.
///
/// The roots are the eigenvalues of the block companion matrix of the
/// polynomial made monic by `coeffs[0]^-1`.
pub fn polynomial_matrix_roots(coeffs: &[Mat]) -> Result<Vec<Complex64>> {
    let Some(lead) = coeffs.first() else {
        return Ok(Vec::new());
    };
    ensure_square(lead, "polynomial coefficient")?;
    let n = lead.nrows();
    if coeffs.iter().any(|c| c.shape() != (n, n)) {
        return Err(Error::Dimension(
            "polynomial coefficients must share one square shape".into(),
        ));
    }
    let d = coeffs.len() - 1;
    if d == 0 {
        return Ok(Vec::new());
    }
    let lu = lead.clone().lu();
    let mut companion = Mat::zeros(n * d, n * d);
    for (k, coeff) in coeffs.iter().enumerate().skip(1) {
        let block = lu
            .solve(coeff)
            .ok_or_else(|| Error::Singular("leading polynomial coefficient".into()))?;
        companion
            .view_mut((0, (k - 1) * n), (n, n))
            .copy_from(&(-block));
    }
    for k in 0..d - 1 {
        companion
            .view_mut(((k + 1) * n, k * n), (n, n))
            .fill_with_identity();
    }
    Ok(eigenvalues(&companion))
}

/// Solve `a x = b`.
pub fn solve(a: &Mat, b: &Mat) -> Result<Mat> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular(format!("{}x{} linear system", a.nrows(), a.ncols())))
}

/// Solve `a x = b` for a vector right-hand side.
pub fn solve_vec(a: &Mat, b: &Vector) -> Result<Vector> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular(format!("{}x{} linear system", a.nrows(), a.ncols())))
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("{}x{} inverse", a.nrows(), a.ncols())))
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numerical_rank(m: &Mat, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// Orthonormal basis of the reachable subspace `span[b, mb, m^2 b, ...]`.
///
/// Directions whose residual after orthogonalisation falls below
/// `rel_tol` times the largest input column norm are dropped.
pub fn reachable_basis(m: &Mat, b: &Mat, rel_tol: f64) -> Mat {
    let dim = m.nrows();
    let scale = b
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut basis: Vec<Vector> = Vec::new();
    let mut frontier: Vec<Vector> = b.column_iter().map(|c| c.into_owned()).collect();
    while !frontier.is_empty() && basis.len() < dim {
        let mut next = Vec::new();
        for mut v in frontier {
            // Two passes of Gram-Schmidt keep the basis orthonormal to
            // working precision.
            for _ in 0..2 {
                for q in &basis {
                    let proj = q.dot(&v);
                    v.axpy(-proj, q, 1.0);
                }
            }
            let norm = v.norm();
            if norm > rel_tol * scale && basis.len() < dim {
                v /= norm;
                next.push(m * &v);
                basis.push(v);
            }
        }
        frontier = next
            .into_iter()
            .map(|w| {
                let n = w.norm();
                if n > 0.0 {
                    w * (scale / n)
                } else {
                    w
                }
            })
            .collect();
    }
    let mut out = Mat::zeros(dim, basis.len());
    for (k, q) in basis.iter().enumerate() {
        out.set_column(k, q);
    }
    out
}

/// Spectral radius of `m` restricted to the subspace reachable from `b`.
pub fn reachable_spectral_radius(m: &Mat, b: &Mat, rel_tol: f64) -> f64 {
    let q = reachable_basis(m, b, rel_tol);
    if q.ncols() == 0 {
        return 0.0;
    }
    spectral_radius(&(q.transpose() * m * &q))
}

/// Build a matrix from row lists; all rows must have the same length.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!(
            "ragged matrix literal: rows of length {ncols} and {}",
            bad.len()
        )));
    }
    Ok(Mat::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Serde adapter storing a matrix as a list of rows.
pub mod rows {
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    use super::Mat;

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::from_rows(&rows).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mat(rows: &[&[f64]]) -> Mat {
        Mat::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn kron_of_diagonal_with_identity() {
        let a = Mat::from_diagonal(&Vector::from_vec(vec![2.0, 3.0]));
        let k = kron(&a, &Mat::identity(2, 2));
        assert_eq!(k, Mat::from_diagonal(&Vector::from_vec(vec![2.0, 2.0, 3.0, 3.0])));
        assert_eq!(kron(&mat(&[&[2.0]]), &mat(&[&[3.0]])), mat(&[&[6.0]]));
    }

    #[test]
    fn vec_is_column_stacking() {
        let m = mat(&[&[1.0, 3.0], &[2.0, 4.0]]);
        assert_eq!(vec(&m).unwrap().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vec(&Mat::identity(2, 2)).unwrap().as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        let v = Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(unvec(&v, 2).unwrap(), m);
        let v = Vector::from_vec(vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(unvec(&v, 2).unwrap(), Mat::identity(2, 2));
    }

    #[test]
    fn vec_rejects_bad_shapes() {
        assert!(vec(&Mat::zeros(2, 3)).is_err());
        assert!(unvec(&Vector::zeros(5), 2).is_err());
    }

    #[test]
    fn sym_eig_known_cases() {
        let e = sym_eig(&mat(&[&[2.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(e.values.as_slice(), &[2.0, 1.0]);
        assert_abs_diff_eq!(e.vectors[(0, 0)].abs(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.vectors[(1, 1)].abs(), 1.0, epsilon = 1e-14);

        let e = sym_eig(&mat(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert_abs_diff_eq!(e.values[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], -1.0, epsilon = 1e-14);
    }

    #[test]
    fn sym_eig_rejects_asymmetric() {
        let err = sym_eig(&mat(&[&[1.0, 1.0], &[0.0, 1.0]])).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { .. }));
    }

    #[test]
    fn spectral_radius_examples() {
        assert_abs_diff_eq!(spectral_radius(&Mat::identity(2, 2)), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(spectral_radius(&mat(&[&[0.5]])), 0.5, epsilon = 1e-14);
        // companion of z^2 - z - 1
        let c = mat(&[&[1.0, 1.0], &[1.0, 0.0]]);
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(spectral_radius(&c), golden, epsilon = 1e-12);
    }

    #[test]
    fn gelfand_fallback_matches_schur() {
        let m = mat(&[&[0.3, 2.0], &[-0.1, 0.4]]);
        assert_abs_diff_eq!(gelfand_radius(&m), spectral_radius(&m), epsilon = 1e-8);
    }

    #[test]
    fn polynomial_roots_scalar_and_diagonal() {
        let roots = polynomial_matrix_roots(&[mat(&[&[1.0]]), mat(&[&[-0.5]])]).unwrap();
        assert_eq!(roots.len(), 1);
        assert_abs_diff_eq!(roots[0].re, 0.5, epsilon = 1e-14);

        let roots = polynomial_matrix_roots(&[mat(&[&[1.0]]), mat(&[&[0.9]])]).unwrap();
        assert_abs_diff_eq!(roots[0].re, -0.9, epsilon = 1e-14);

        // I - diag(0.5, -0.3) z^-1
        let f1 = Mat::from_diagonal(&Vector::from_vec(vec![0.5, -0.3]));
        let mut roots: Vec<f64> = polynomial_matrix_roots(&[Mat::identity(2, 2), -f1])
            .unwrap()
            .iter()
            .map(|z| z.re)
            .collect();
        roots.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(roots[0], -0.3, epsilon = 1e-14);
        assert_abs_diff_eq!(roots[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn polynomial_roots_singular_lead() {
        let err = polynomial_matrix_roots(&[Mat::zeros(2, 2), Mat::identity(2, 2)]).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&Mat::identity(3, 3), tol::RANK_TOL), 3);
        assert_eq!(numerical_rank(&mat(&[&[1.0, 0.0], &[0.0, 0.0]]), tol::RANK_TOL), 1);
    }

    #[test]
    fn reachable_radius_ignores_unexcited_mode() {
        let m = Mat::from_diagonal(&Vector::from_vec(vec![0.5, 1.0]));
        let b = mat(&[&[1.0], &[0.0]]);
        assert_abs_diff_eq!(reachable_spectral_radius(&m, &b, 1e-9), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(spectral_radius(&m), 1.0, epsilon = 1e-14);
    }
}
