//! Seeded random generators for the structures this crate checks.
//!
//! Used by the property suites and by the randomized CLI subcommands; all
//! draws go through [`ChaCha8Rng`] so output is reproducible per seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numkernel::{block_diag, Matrix, Vector};

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut SampleRng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut SampleRng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn uniform(rng: &mut SampleRng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Haar-distributed orthogonal matrix.
pub fn orthogonal(rng: &mut SampleRng, n: usize) -> Matrix {
    let qr = gaussian(rng, n, n).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Qᵀ·D·Q` with eigenvalues drawn from `[lo, hi]`.
pub fn spd_with_spectrum(rng: &mut SampleRng, n: usize, lo: f64, hi: f64) -> (Matrix, Vector, Matrix) {
    let q = orthogonal(rng, n);
    let d = Vector::from_fn(n, |_, _| rng.random_range(lo..hi));
    let m = q.transpose() * Matrix::from_diagonal(&d) * &q;
    (crate::numkernel::symmetrize(&m), d, q)
}

pub fn spd(rng: &mut SampleRng, n: usize) -> Matrix {
    spd_with_spectrum(rng, n, 0.5, 3.0).0
}

/// Invertible matrix with singular values in `[0.5, 2]`.
pub fn invertible(rng: &mut SampleRng, n: usize) -> Matrix {
    let u = orthogonal(rng, n);
    let v = orthogonal(rng, n);
    let s = Vector::from_fn(n, |_, _| rng.random_range(0.5..2.0));
    u * Matrix::from_diagonal(&s) * v.transpose()
}

/// Canonical skew matrix `[[0, Id], [−Id, 0]]` on `ℝ^{2n}`.
pub fn canonical_skew(n: usize) -> Matrix {
    let mut s = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        s[(i, n + i)] = 1.0;
        s[(n + i, i)] = -1.0;
    }
    s
}

/// Canonical complex structure `[[0, −Id], [Id, 0]]` on `ℝ^{2n}`.
pub fn canonical_complex(n: usize) -> Matrix {
    canonical_skew(n).transpose()
}

/// Canonical para-complex structure `[[0, Id], [Id, 0]]` on `ℝ^{2n}`.
pub fn canonical_para(n: usize) -> Matrix {
    let mut s = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        s[(i, n + i)] = 1.0;
        s[(n + i, i)] = 1.0;
    }
    s
}

/// Canonical tangent structure `[[0, Id], [0, 0]]` on `ℝ^{2n}`.
pub fn canonical_tangent(n: usize) -> Matrix {
    let mut s = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        s[(i, n + i)] = 1.0;
    }
    s
}

/// Random nondegenerate skew matrix `Pᵀ·S_can·P` on `ℝ^{2n}`.
pub fn nondegenerate_skew(rng: &mut SampleRng, n: usize) -> Matrix {
    let p = invertible(rng, 2 * n);
    let s = p.transpose() * canonical_skew(n) * &p;
    (&s - s.transpose()) * 0.5
}

/// Random element of `Sp(2n)` for the canonical skew form.
pub fn symplectic(rng: &mut SampleRng, n: usize) -> Matrix {
    let sym = |rng: &mut SampleRng| {
        let a = gaussian(rng, n, n) * 0.5;
        (&a + a.transpose()) * 0.5
    };
    let mut upper = Matrix::identity(2 * n, 2 * n);
    upper.view_mut((0, n), (n, n)).copy_from(&sym(rng));
    let mut lower = Matrix::identity(2 * n, 2 * n);
    lower.view_mut((n, 0), (n, n)).copy_from(&sym(rng));
    let a = invertible(rng, n);
    let a_inv_t = a.clone().try_inverse().expect("invertible by construction").transpose();
    let diag = block_diag(&a, &a_inv_t);
    upper * lower * diag
}

pub fn rotation(theta: f64) -> Matrix {
    let (s, c) = theta.sin_cos();
    Matrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Block-diagonal rotation on `ℝ^{2n}` acting in each plane `(e_{2k}, e_{2k+1})`.
pub fn block_rotation(angles: &[f64]) -> Matrix {
    let n = angles.len();
    let mut out = Matrix::zeros(2 * n, 2 * n);
    for (k, &t) in angles.iter().enumerate() {
        out.view_mut((2 * k, 2 * k), (2, 2)).copy_from(&rotation(t));
    }
    out
}
