//! Dense real linear-algebra kernel.
//!
//! Every coordinate representation of an operator or bilinear form in this
//! crate is a [`Matrix`]. Validating operations take an explicit
//! [`Tolerance`]; rank decisions use the threshold `atol + rtol * sigma_max`
//! on singular values, so borderline cases can be constructed on purpose.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumError {
    #[error("matrix is not symmetric (residual {residual:e})")]
    NotSymmetric { residual: f64 },
    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular")]
    Singular,
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("invalid tolerance: atol={atol}, rtol={rtol}")]
    InvalidTolerance { atol: f64, rtol: f64 },
}

/// Absolute and relative tolerance pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub atol: f64,
    pub rtol: f64,
}

impl Tolerance {
    pub const DEFAULT_ATOL: f64 = 1e-9;
    pub const DEFAULT_RTOL: f64 = 1e-9;

    pub fn new(atol: f64, rtol: f64) -> Result<Self, NumError> {
        let ok = atol.is_finite() && rtol.is_finite() && atol >= 0.0 && rtol >= 0.0;
        if !ok || (atol == 0.0 && rtol == 0.0) {
            return Err(NumError::InvalidTolerance { atol, rtol });
        }
        Ok(Self { atol, rtol })
    }

    /// Same absolute and relative tolerance.
    pub fn uniform(tol: f64) -> Self {
        Self { atol: tol, rtol: tol }
    }

    /// `atol + rtol * scale`
    pub fn threshold(&self, scale: f64) -> f64 {
        self.atol + self.rtol * scale
    }

    pub fn accepts(&self, residual: f64, scale: f64) -> bool {
        residual <= self.threshold(scale)
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            atol: Self::DEFAULT_ATOL,
            rtol: Self::DEFAULT_RTOL,
        }
    }
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.norm()
}

pub fn ensure_finite(m: &Matrix) -> Result<(), NumError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NumError::NonFinite)
    }
}

pub fn ensure_square(m: &Matrix) -> Result<usize, NumError> {
    if m.nrows() == m.ncols() {
        Ok(m.nrows())
    } else {
        Err(NumError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

pub fn ensure_same_dim(a: &Matrix, b: &Matrix) -> Result<(), NumError> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(NumError::DimensionMismatch {
            expected: format!("{}x{}", a.nrows(), a.ncols()),
            found: format!("{}x{}", b.nrows(), b.ncols()),
        })
    }
}

/// Build a matrix from nested row-major rows.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix, NumError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(NumError::DimensionMismatch {
            expected: format!("{ncols} columns"),
            found: format!("{} columns", bad.len()),
        });
    }
    let m = Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
    ensure_finite(&m)?;
    Ok(m)
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// `‖m − mᵀ‖_F`
pub fn symmetry_residual(m: &Matrix) -> f64 {
    (m - m.transpose()).norm()
}

/// `‖m + mᵀ‖_F`
pub fn skew_residual(m: &Matrix) -> f64 {
    (m + m.transpose()).norm()
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn inverse(m: &Matrix) -> Result<Matrix, NumError> {
    ensure_square(m)?;
    m.clone().try_inverse().ok_or(NumError::Singular)
}

/// Block-diagonal matrix `diag(a, b)`.
pub fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = Matrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

/// Columns side by side.
pub fn hstack(blocks: &[&Matrix]) -> Matrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order. Eigenvector signs are fixed so the entry of largest
/// magnitude (first one on ties) is positive.
pub fn symmetric_eigen_sorted(m: &Matrix) -> (Vector, Matrix) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = Vector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        canonical_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

fn canonical_sign(v: &mut Vector) {
    let mut best = 0.0_f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best * (1.0 + 1e-12) {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.neg_mut();
    }
}

/// Symmetric positive-definite square root.
///
/// Returns the unique symmetric positive-definite `R` with `R·R = m`.
pub fn spd_sqrt(m: &Matrix, tol: Tolerance) -> Result<Matrix, NumError> {
    ensure_square(m)?;
    ensure_finite(m)?;
    let scale = m.norm();
    let asym = symmetry_residual(m);
    if asym > tol.threshold(scale) {
        return Err(NumError::NotSymmetric { residual: asym });
    }
    let (values, vectors) = symmetric_eigen_sorted(m);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if m.nrows() > 0 && min <= tol.atol {
        return Err(NumError::NotPositiveDefinite { min_eigenvalue: min });
    }
    let roots = Matrix::from_diagonal(&values.map(f64::sqrt));
    Ok(symmetrize(&(&vectors * roots * vectors.transpose())))
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    let (values, _) = symmetric_eigen_sorted(m);
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn is_positive_definite(m: &Matrix, tol: Tolerance) -> bool {
    m.nrows() > 0 && symmetry_residual(m) <= tol.threshold(m.norm()) && min_eigenvalue(m) > tol.atol
}

/// Adjoint of `a` with respect to the bilinear form with matrix `g`:
/// `A* = g⁻¹·aᵀ·g`, so that `g(A*u, v) = g(u, Av)`.
pub fn metric_adjoint(a: &Matrix, g: &Matrix) -> Result<Matrix, NumError> {
    ensure_square(a)?;
    ensure_square(g)?;
    ensure_same_dim(g, a)?;
    let lu = g.clone().lu();
    let rhs = a.transpose() * g;
    lu.solve(&rhs).ok_or(NumError::Singular)
}

/// Inertia of a symmetric matrix: counts of positive, negative and zero
/// eigenvalues, using `atol` as the zero band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl Inertia {
    pub fn is_nondegenerate(&self) -> bool {
        self.zero == 0
    }

    pub fn is_neutral(&self) -> bool {
        self.zero == 0 && self.positive == self.negative
    }
}

pub fn inertia(m: &Matrix, tol: Tolerance) -> Inertia {
    let (values, _) = symmetric_eigen_sorted(m);
    let band = tol.atol;
    let mut out = Inertia {
        positive: 0,
        negative: 0,
        zero: 0,
    };
    for &v in values.iter() {
        if v > band {
            out.positive += 1;
        } else if v < -band {
            out.negative += 1;
        } else {
            out.zero += 1;
        }
    }
    out
}

/// Result of [`kernel_and_image`]: orthonormal bases stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelImage {
    pub kernel: Matrix,
    pub image: Matrix,
    pub rank: usize,
    pub singular_values: Vector,
}

/// Orthonormal bases for the kernel and the column space of `a`.
///
/// Singular values at or below `atol + rtol * sigma_max` count as zero.
pub fn kernel_and_image(a: &Matrix, tol: Tolerance) -> KernelImage {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return KernelImage {
            kernel: Matrix::identity(n, n),
            image: Matrix::zeros(m, 0),
            rank: 0,
            singular_values: Vector::zeros(0),
        };
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let sigma = Vector::from_iterator(order.len(), order.iter().map(|&k| svd.singular_values[k]));
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = tol.threshold(sigma_max);
    let rank = sigma.iter().filter(|&&s| s > cutoff).count();

    let mut image = Matrix::zeros(m, rank);
    let mut row_space = Matrix::zeros(n, rank);
    for (dst, &src) in order.iter().take(rank).enumerate() {
        let mut col = u.column(src).into_owned();
        canonical_sign(&mut col);
        image.set_column(dst, &col);
        row_space.set_column(dst, &v_t.row(src).transpose());
    }
    let kernel = orthogonal_complement(&row_space);
    KernelImage {
        kernel,
        image,
        rank,
        singular_values: sigma,
    }
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// (orthonormal) columns of `basis`.
pub fn orthogonal_complement(basis: &Matrix) -> Matrix {
    let n = basis.nrows();
    let k = basis.ncols();
    let projector = Matrix::identity(n, n) - basis * basis.transpose();
    let (values, vectors) = symmetric_eigen_sorted(&projector);
    let keep = n - k.min(n);
    let mut out = Matrix::zeros(n, keep);
    for j in 0..keep {
        debug_assert!(values[j] > 0.5);
        out.set_column(j, &vectors.column(j));
    }
    out
}

/// Deterministic orthonormal basis of a subspace, independent of which
/// spanning set was supplied.
///
/// The orthogonal projector onto `span(spanning)` is formed and its columns
/// are Gram–Schmidt orthonormalized in index order; at each step the first
/// column whose residual is at least half the largest one is taken.
pub fn canonical_basis(spanning: &Matrix, tol: Tolerance) -> Matrix {
    let q = orthonormal_span(spanning, tol);
    let n = q.nrows();
    let k = q.ncols();
    let projector = &q * q.transpose();
    let mut chosen: Vec<Vector> = Vec::with_capacity(k);
    let mut used = vec![false; n];
    while chosen.len() < k {
        let residuals: Vec<(usize, Vector)> = (0..n)
            .filter(|&j| !used[j])
            .map(|j| {
                let mut v = projector.column(j).into_owned();
                for c in &chosen {
                    let coef = c.dot(&v);
                    v.axpy(-coef, c, 1.0);
                }
                // second pass against cancellation
                for c in &chosen {
                    let coef = c.dot(&v);
                    v.axpy(-coef, c, 1.0);
                }
                (j, v)
            })
            .collect();
        let best = residuals.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max);
        let (j, v) = residuals
            .into_iter()
            .find(|(_, v)| v.norm() >= 0.5 * best)
            .expect("projector of rank k has k independent columns");
        used[j] = true;
        let norm = v.norm();
        chosen.push(v / norm);
    }
    let mut out = Matrix::zeros(n, k);
    for (j, c) in chosen.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// Orthonormal basis of the column span of `a` (rank decided by `tol`).
pub fn orthonormal_span(a: &Matrix, tol: Tolerance) -> Matrix {
    kernel_and_image(a, tol).image
}

/// Largest principal-angle sine between two subspaces given by orthonormal
/// column bases. Returns 1 when the dimensions differ.
pub fn subspace_distance(a: &Matrix, b: &Matrix) -> f64 {
    if a.ncols() != b.ncols() || a.nrows() != b.nrows() {
        return 1.0;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    // ‖(I − BBᵀ)A‖₂ is the sine of the largest principal angle.
    let residual = a - b * (b.transpose() * a);
    residual
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Rank of `a` under `tol`.
pub fn rank(a: &Matrix, tol: Tolerance) -> usize {
    kernel_and_image(a, tol).rank
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn tolerance_rejects_zero_pair_and_negatives() {
        assert!(Tolerance::new(0.0, 0.0).is_err());
        assert!(Tolerance::new(-1.0, 1e-9).is_err());
        assert!(Tolerance::new(0.0, 1e-9).is_ok());
    }

    #[test]
    fn sqrt_identity_and_diagonal() {
        let r = spd_sqrt(&Matrix::identity(4, 4), tol()).unwrap();
        assert!((r - Matrix::identity(4, 4)).norm() < 1e-14);
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![4.0, 9.0]));
        let r = spd_sqrt(&m, tol()).unwrap();
        let expected = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 3.0]));
        assert!((r - expected).norm() < 1e-14);
    }

    #[test]
    fn sqrt_errors() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(spd_sqrt(&m, tol()), Err(NumError::NotSymmetric { .. })));
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(spd_sqrt(&m, tol()), Err(NumError::NotPositiveDefinite { .. })));
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(spd_sqrt(&m, tol()), Err(NumError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn adjoint_euclidean_is_transpose() {
        let a = Matrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0]);
        let adj = metric_adjoint(&a, &Matrix::identity(3, 3)).unwrap();
        assert!((adj - a.transpose()).norm() < 1e-14);
    }

    #[test]
    fn adjoint_fixed_point_for_self_adjoint_input() {
        // a = g⁻¹·s with s symmetric is g-self-adjoint
        let g = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let s = Matrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 5.0]);
        let a = g.clone().try_inverse().unwrap() * s;
        let adj = metric_adjoint(&a, &g).unwrap();
        assert!((adj - &a).norm() < 1e-12);
    }

    #[test]
    fn adjoint_dimension_mismatch() {
        let err = metric_adjoint(&Matrix::identity(2, 2), &Matrix::identity(3, 3)).unwrap_err();
        assert!(matches!(err, NumError::DimensionMismatch { .. }));
    }

    #[test]
    fn kernel_image_trivial_cases() {
        let k = kernel_and_image(&Matrix::zeros(3, 3), tol());
        assert_eq!((k.rank, k.kernel.ncols(), k.image.ncols()), (0, 3, 0));
        let k = kernel_and_image(&Matrix::identity(3, 3), tol());
        assert_eq!((k.rank, k.kernel.ncols(), k.image.ncols()), (3, 0, 3));
    }

    #[test]
    fn kernel_image_nilpotent_block() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let k = kernel_and_image(&a, tol());
        assert_eq!(k.rank, 1);
        let e1 = Matrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!(subspace_distance(&k.kernel, &e1) < 1e-14);
        assert!(subspace_distance(&k.image, &e1) < 1e-14);
    }

    #[test]
    fn kernel_image_rectangular() {
        let wide = Matrix::from_row_slice(2, 4, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        let k = kernel_and_image(&wide, tol());
        assert_eq!(k.rank, 2);
        assert_eq!(k.kernel.ncols(), 2);
        assert!((&wide * &k.kernel).norm() < 1e-12);
        let tall = wide.transpose();
        let k = kernel_and_image(&tall, tol());
        assert_eq!((k.rank, k.kernel.ncols(), k.image.nrows()), (2, 0, 4));
    }

    #[test]
    fn rank_threshold_is_borderline_constructible() {
        let t = Tolerance::new(1e-6, 0.0).unwrap();
        let below = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.9e-6]));
        let above = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 1.1e-6]));
        assert_eq!(rank(&below, t), 1);
        assert_eq!(rank(&above, t), 2);
    }

    #[test]
    fn canonical_basis_ignores_spanning_set() {
        let a = Matrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, -1.0, 0.0, 0.0]);
        let b = Matrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 3.0, 0.0, 0.0]);
        let ca = canonical_basis(&a, tol());
        let cb = canonical_basis(&b, tol());
        assert!((&ca - &cb).norm() < 1e-12);
        assert!((ca - Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn inertia_counts() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, -1.0, 0.0, 3.0]));
        let i = inertia(&m, tol());
        assert_eq!((i.positive, i.negative, i.zero), (2, 1, 1));
    }
}
