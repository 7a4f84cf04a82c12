//! Helpers shared by the integration suites.
#![allow(dead_code)]

use limstruct::numkernel::{Matrix, Tolerance};
use limstruct::poly::{Poly, PolyMatrix};
use limstruct::sample::{gaussian, SampleRng};
use limstruct::tensor::{Role, StructureMatrix};

pub fn tol() -> Tolerance {
    Tolerance::default()
}

/// Linearized isotropy condition as a matrix acting on column-major
/// `vec(X)`: `XT − TX` for endomorphisms, `XᵀS + SX` for forms. With
/// `skew`, the rows of `X + Xᵀ` are appended.
fn isotropy_operator(model: &StructureMatrix, skew: bool) -> Matrix {
    let n = model.dim();
    let t = &model.matrix;
    let rows = if skew { 2 * n * n } else { n * n };
    let mut op = Matrix::zeros(rows, n * n);
    for k in 0..n * n {
        let mut e = Matrix::zeros(n, n);
        e[k] = 1.0;
        let image = match model.role {
            Role::Endomorphism => &e * t - t * &e,
            _ => e.transpose() * t + t * &e,
        };
        op.view_mut((0, k), (n * n, 1)).copy_from_slice(image.as_slice());
        if skew {
            let sym = &e + e.transpose();
            op.view_mut((n * n, k), (n * n, 1)).copy_from_slice(sym.as_slice());
        }
    }
    op
}

/// Frobenius-orthonormal basis of the isotropy algebra of `model`
/// (intersected with the skew matrices when `skew`).
pub fn algebra_basis(model: &StructureMatrix, skew: bool) -> Vec<Matrix> {
    let n = model.dim();
    let op = isotropy_operator(model, skew);
    // null space from the eigenvectors of opᵀop with zero eigenvalue
    let gram = op.transpose() * &op;
    let eig = gram.symmetric_eigen();
    (0..n * n)
        .filter(|&k| eig.eigenvalues[k].abs() < 1e-10)
        .map(|k| Matrix::from_column_slice(n, n, eig.eigenvectors.column(k).as_slice()))
        .collect()
}

pub fn random_algebra_element(rng: &mut SampleRng, basis: &[Matrix], n: usize, scale: f64) -> Matrix {
    let c = gaussian(rng, basis.len().max(1), 1);
    let mut x = Matrix::zeros(n, n);
    for (b, ci) in basis.iter().zip(c.iter()) {
        x += b * (*ci * scale);
    }
    x
}

/// Remove the components along an orthonormal family.
pub fn project_out(y: &Matrix, basis: &[Matrix]) -> Matrix {
    let mut out = y.clone();
    for b in basis {
        out -= b * b.dot(y);
    }
    out
}

/// `x + q(x) + c(x)` with random quadratic and cubic terms of the given
/// sizes: a polynomial diffeomorphism near the origin when both are small.
pub fn random_polynomial_map(rng: &mut SampleRng, dim: usize, quadratic: f64, cubic: f64) -> PolyMatrix {
    let mut phi = PolyMatrix::coordinates(dim);
    for r in 0..dim {
        let mut extra = Poly::zero(dim);
        for i in 0..dim {
            for j in i..dim {
                let c = gaussian(rng, 1, 1)[0];
                extra = &extra + &Poly::monomial(dim, &[(i, 1), (j, 1)], quadratic * c);
                for k in j..dim {
                    let c = gaussian(rng, 1, 1)[0];
                    extra = &extra + &Poly::monomial(dim, &[(i, 1), (j, 1), (k, 1)], cubic * c);
                }
            }
        }
        let e = phi.get(r, 0) + &extra;
        *phi.get_mut(r, 0) = e;
    }
    phi
}

/// Smallest `|det DΦ|` over a lattice of the cube `[lo, hi]^dim`.
pub fn min_jacobian_det(phi: &PolyMatrix, lo: f64, hi: f64, count: usize) -> f64 {
    let d = phi.jacobian();
    limstruct::calculus::Grid::cube(phi.nvars, lo, hi, count)
        .points()
        .iter()
        .map(|x| d.eval(x).determinant().abs())
        .fold(f64::INFINITY, f64::min)
}
