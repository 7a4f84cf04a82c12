//! Linear tensor structures on a finite-dimensional space: symplectic and
//! Darboux forms, Krein and neutral inner products, tangent, cotangent,
//! complex and para-complex structures.
//!
//! Coordinates: a bilinear form `B` is stored as the matrix `S` with
//! `B(u, v) = uᵀ·S·v`, and its flat map `B♭(u)` has coordinate vector `Sᵀ·u`.
//! For a symmetric `G` this makes `g♭ = G`.
//!
//! Weak and strong nondegeneracy coincide in finite dimension, so validators
//! only report "nondegenerate". Constructors never reject structures that
//! fail their invariants: a failed invariant is an entry in the report
//! returned by [`Structure::validate`].

use thiserror::Error;

use crate::numkernel::{
    self, block_diag, canonical_basis, hstack, inertia, kernel_and_image, orthogonal_complement, skew_residual,
    subspace_distance, symmetric_eigen_sorted, symmetry_residual, Matrix, NumError, Tolerance, Vector,
};
use crate::report::Report;
use crate::sample::{canonical_complex, canonical_skew, canonical_tangent};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinError {
    #[error("invalid decomposition: {0}")]
    InvalidDecomposition(String),
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    #[error("structure carries no decomposition")]
    MissingDecomposition,
    #[error("degenerate form: rank {rank} < dimension {dim}")]
    Degenerate { rank: usize, dim: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type Result<T> = std::result::Result<T, LinError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    Symmetric,
    Skew,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilinearForm {
    pub matrix: Matrix,
    pub symmetry: Symmetry,
}

impl BilinearForm {
    pub fn new(matrix: Matrix, symmetry: Symmetry) -> Result<Self> {
        numkernel::ensure_square(&matrix)?;
        numkernel::ensure_finite(&matrix)?;
        Ok(Self { matrix, symmetry })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eval(&self, u: &Vector, v: &Vector) -> f64 {
        u.dot(&(&self.matrix * v))
    }

    /// Coordinates of `B♭(u) = B(u, ·)`.
    pub fn flat(&self, u: &Vector) -> Vector {
        self.matrix.transpose() * u
    }

    fn symmetry_residual(&self) -> f64 {
        match self.symmetry {
            Symmetry::Symmetric => symmetry_residual(&self.matrix),
            Symmetry::Skew => skew_residual(&self.matrix),
        }
    }

    fn validate_into(&self, report: &mut Report, tol: Tolerance) {
        let scale = self.matrix.norm();
        let name = match self.symmetry {
            Symmetry::Symmetric => "symmetric",
            Symmetry::Skew => "skew",
        };
        report.check(name, self.symmetry_residual(), tol.threshold(scale));
        report.push("dimension >= 1", self.dim() >= 1, 0.0);
    }
}

/// Rank defect of a square matrix, as a float for reports.
fn rank_defect(m: &Matrix, tol: Tolerance) -> f64 {
    (m.nrows() - kernel_and_image(m, tol).rank) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticForm {
    pub form: BilinearForm,
}

impl SymplecticForm {
    pub fn new(matrix: Matrix) -> Result<Self> {
        Ok(Self {
            form: BilinearForm::new(matrix, Symmetry::Skew)?,
        })
    }

    /// `[[0, Id], [−Id, 0]]` on `ℝ^{2n}`.
    pub fn canonical(n: usize) -> Self {
        Self {
            form: BilinearForm {
                matrix: canonical_skew(n),
                symmetry: Symmetry::Skew,
            },
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.form.matrix
    }

    pub fn dim(&self) -> usize {
        self.form.dim()
    }

    pub fn eval(&self, u: &Vector, v: &Vector) -> f64 {
        self.form.eval(u, v)
    }

    pub fn is_nondegenerate(&self, tol: Tolerance) -> bool {
        rank_defect(self.matrix(), tol) == 0.0
    }

    fn validate_into(&self, report: &mut Report, tol: Tolerance) {
        self.form.validate_into(report, tol);
        report.check("nondegenerate", rank_defect(self.matrix(), tol), 0.0);
        report.push("even dimension", self.dim().is_multiple_of(2), (self.dim() % 2) as f64);
    }
}

/// Symmetric form with a splitting into a positive- and a negative-definite
/// part.
#[derive(Debug, Clone, PartialEq)]
pub struct KreinMetric {
    pub form: BilinearForm,
    /// Basis of `𝔼⁺` as columns.
    pub plus_basis: Matrix,
    /// Basis of `𝔼⁻` as columns.
    pub minus_basis: Matrix,
    /// Declared neutral (`dim 𝔼⁺ = dim 𝔼⁻`); checked by validation.
    pub neutral: bool,
}

impl KreinMetric {
    pub fn new(matrix: Matrix, plus_basis: Matrix, minus_basis: Matrix) -> Result<Self> {
        let form = BilinearForm::new(matrix, Symmetry::Symmetric)?;
        let n = form.dim();
        if plus_basis.nrows() != n || minus_basis.nrows() != n {
            return Err(LinError::Shape(format!("decomposition bases must have {n} rows")));
        }
        Ok(Self {
            form,
            plus_basis,
            minus_basis,
            neutral: false,
        })
    }

    /// Splitting by the eigenvectors of the matrix (orthogonal for both the
    /// Euclidean product and `g`).
    pub fn from_matrix(matrix: Matrix, tol: Tolerance) -> Result<Self> {
        let form = BilinearForm::new(matrix, Symmetry::Symmetric)?;
        let n = form.dim();
        let (values, vectors) = symmetric_eigen_sorted(&form.matrix);
        let signs = inertia(&form.matrix, tol);
        if signs.zero > 0 {
            return Err(LinError::Degenerate {
                rank: n - signs.zero,
                dim: n,
            });
        }
        let p = signs.positive;
        debug_assert!(values[p.saturating_sub(1)] > 0.0 || p == 0);
        let plus_basis = vectors.columns(0, p).into_owned();
        let minus_basis = vectors.columns(p, n - p).into_owned();
        Ok(Self {
            form,
            plus_basis,
            minus_basis,
            neutral: false,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.form.matrix
    }

    pub fn dim(&self) -> usize {
        self.form.dim()
    }

    /// `(dim 𝔼⁺, dim 𝔼⁻)`
    pub fn signature(&self) -> (usize, usize) {
        (self.plus_basis.ncols(), self.minus_basis.ncols())
    }

    pub fn is_neutral(&self) -> bool {
        let (p, q) = self.signature();
        p == q
    }

    fn validate_into(&self, report: &mut Report, tol: Tolerance) {
        self.form.validate_into(report, tol);
        let g = self.matrix();
        let scale = g.norm().max(1.0);
        let basis = hstack(&[&self.plus_basis, &self.minus_basis]);
        let span_defect = if basis.ncols() == self.dim() {
            rank_defect(&basis, tol)
        } else {
            self.dim().abs_diff(basis.ncols()) as f64
        };
        report.check("E+ and E- span the space", span_defect, 0.0);
        let plus = self.plus_basis.transpose() * g * &self.plus_basis;
        let minus = self.minus_basis.transpose() * g * &self.minus_basis;
        // margins are smallest eigenvalues of ±g restricted; empty parts pass
        let margin = |m: Matrix| {
            if m.nrows() == 0 {
                None
            } else {
                Some(numkernel::min_eigenvalue(&m))
            }
        };
        for (name, value) in [
            ("g positive definite on E+", margin(plus)),
            ("g negative definite on E-", margin(-minus)),
        ] {
            match value {
                Some(v) => report.push(name, v > tol.atol, v),
                None => report.push(name, true, 0.0),
            };
        }
        let cross = (self.plus_basis.transpose() * g * &self.minus_basis).norm();
        report.check("E+ and E- g-orthogonal", cross, tol.threshold(scale));
        if self.neutral {
            let (p, q) = self.signature();
            report.push("neutral: dim E+ = dim E-", p == q, p.abs_diff(q) as f64);
        }
    }
}

/// Splitting `𝔼 = 𝔼₁ ⊕ 𝔼₂` with an isomorphism `I: 𝔼₂ → 𝔼₁` such that the
/// complex structure reads `[[0, −I], [I⁻¹, 0]]` in the adapted basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexDecomposition {
    pub e1: Matrix,
    pub e2: Matrix,
    /// Coordinates of `I` with respect to the bases `e2` and `e1`.
    pub iso: Matrix,
}

impl ComplexDecomposition {
    pub fn basis(&self) -> Matrix {
        hstack(&[&self.e1, &self.e2])
    }

    /// Block form `[[0, −I], [I⁻¹, 0]]`.
    pub fn block_form(&self) -> Result<Matrix> {
        let k = self.iso.nrows();
        let iso_inv = numkernel::inverse(&self.iso)?;
        let mut m = Matrix::zeros(2 * k, 2 * k);
        m.view_mut((0, k), (k, k)).copy_from(&(-&self.iso));
        m.view_mut((k, 0), (k, k)).copy_from(&iso_inv);
        Ok(m)
    }

    /// The symmetry `𝓢` acting as `−Id` on `𝔼₁` and `Id` on `𝔼₂`.
    pub fn symmetry(&self) -> Result<Matrix> {
        let b = self.basis();
        let k = self.e1.ncols();
        let d = block_diag(&-Matrix::identity(k, k), &Matrix::identity(k, k));
        Ok(&b * d * numkernel::inverse(&b)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexStructure {
    pub matrix: Matrix,
    pub decomposition: Option<ComplexDecomposition>,
}

impl ComplexStructure {
    pub fn new(matrix: Matrix) -> Result<Self> {
        numkernel::ensure_square(&matrix)?;
        numkernel::ensure_finite(&matrix)?;
        Ok(Self {
            matrix,
            decomposition: None,
        })
    }

    /// `[[0, −Id], [Id, 0]]` on `ℝ^{2n}`, decomposed along the two factors.
    pub fn canonical(n: usize) -> Self {
        let id = Matrix::identity(2 * n, 2 * n);
        Self {
            matrix: canonical_complex(n),
            decomposition: Some(ComplexDecomposition {
                e1: id.columns(0, n).into_owned(),
                e2: id.columns(n, n).into_owned(),
                iso: Matrix::identity(n, n),
            }),
        }
    }

    pub fn with_decomposition(mut self, decomposition: ComplexDecomposition) -> Result<Self> {
        let n = self.dim();
        let d = &decomposition;
        let k = d.iso.nrows();
        if d.e1.nrows() != n || d.e2.nrows() != n || d.e1.ncols() != k || d.e2.ncols() != k || d.iso.ncols() != k {
            return Err(LinError::Shape(format!(
                "decomposition of a {n}-dimensional structure needs two {n}x{k} bases and a {k}x{k} isomorphism"
            )));
        }
        self.decomposition = Some(decomposition);
        Ok(self)
    }

    /// Attach a decomposition built from a totally real subspace `𝔼₁`
    /// (greedily spanned by standard basis vectors) and `𝔼₂ = 𝓘𝔼₁`, so the
    /// isomorphism is the identity in these bases.
    pub fn decompose(mut self, tol: Tolerance) -> Result<Self> {
        let n = self.dim();
        if !n.is_multiple_of(2) {
            return Err(LinError::InvalidStructure("odd dimension".into()));
        }
        let k = n / 2;
        let mut chosen: Vec<Vector> = Vec::with_capacity(k);
        let mut span = Matrix::zeros(n, 0);
        let mut used = vec![false; n];
        while chosen.len() < k {
            let q = if span.ncols() == 0 {
                Matrix::zeros(n, 0)
            } else {
                numkernel::orthonormal_span(&span, tol)
            };
            let residual = |j: usize| {
                let e = Vector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
                let r = &e - &q * (q.transpose() * &e);
                r.norm()
            };
            let scores: Vec<(usize, f64)> = (0..n).filter(|&j| !used[j]).map(|j| (j, residual(j))).collect();
            let best = scores.iter().map(|s| s.1).fold(0.0, f64::max);
            if best <= 1e-8 {
                return Err(LinError::InvalidStructure(
                    "no totally real subspace found; is this a complex structure?".into(),
                ));
            }
            let (j, _) = *scores.iter().find(|s| s.1 >= 0.5 * best).expect("nonempty");
            used[j] = true;
            let e = Vector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
            let ie = &self.matrix * &e;
            span = hstack(&[
                &span,
                &Matrix::from_column_slice(n, 1, e.as_slice()),
                &Matrix::from_column_slice(n, 1, ie.as_slice()),
            ]);
            chosen.push(e);
        }
        let e1 = Matrix::from_columns(&chosen);
        let e2 = &self.matrix * &e1;
        self.decomposition = Some(ComplexDecomposition {
            e1,
            e2,
            iso: Matrix::identity(k, k),
        });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn square_residual(&self) -> f64 {
        let n = self.dim();
        (&self.matrix * &self.matrix + Matrix::identity(n, n)).norm()
    }

    fn validate_into(&self, report: &mut Report, tol: Tolerance) {
        let n = self.dim();
        report.check("I^2 = -Id", self.square_residual(), tol.threshold((n as f64).sqrt()));
        report.push("even dimension", n.is_multiple_of(2), (n % 2) as f64);
        if let Some(d) = &self.decomposition {
            let b = d.basis();
            match (numkernel::inverse(&b), d.block_form()) {
                (Ok(b_inv), Ok(block)) if b.is_square() => {
                    let residual = (b_inv * &self.matrix * &b - &block).norm();
                    report.check("decomposition block form", residual, tol.threshold(block.norm()));
                }
                _ => {
                    report.push("decomposition block form", false, f64::MAX);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParaComplexStructure {
    pub matrix: Matrix,
    pub eigen_plus: Matrix,
    pub eigen_minus: Matrix,
}

impl ParaComplexStructure {
    /// Eigenspace bases are orthonormal and canonical (see
    /// [`numkernel::canonical_basis`]); `+1` first.
    pub fn from_matrix(matrix: Matrix, tol: Tolerance) -> Result<Self> {
        let n = numkernel::ensure_square(&matrix)?;
        numkernel::ensure_finite(&matrix)?;
        let id = Matrix::identity(n, n);
        let plus = kernel_and_image(&(&matrix - &id), tol).kernel;
        let minus = kernel_and_image(&(&matrix + &id), tol).kernel;
        Ok(Self {
            eigen_plus: canonical_basis(&plus, tol),
            eigen_minus: canonical_basis(&minus, tol),
            matrix,
        })
    }

    /// `[[0, Id], [Id, 0]]` on `ℝ^{2n}`.
    pub fn canonical(n: usize) -> Self {
        Self::from_matrix(crate::sample::canonical_para(n), Tolerance::default())
            .expect("canonical matrix is square and finite")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn square_residual(&self) -> f64 {
        let n = self.dim();
        (&self.matrix * &self.matrix - Matrix::identity(n, n)).norm()
    }

    fn validate_into(&self, report: &mut Report, tol: Tolerance) {
        let n = self.dim();
        let root_n = (n as f64).sqrt();
        report.check("J^2 = Id", self.square_residual(), tol.threshold(root_n));
        report.check("trace J = 0", self.matrix.trace().abs(), tol.threshold(n as f64));
        let (p, q) = (self.eigen_plus.ncols(), self.eigen_minus.ncols());
        report.push("dim E+ = dim E-", p == q, p.abs_diff(q) as f64);
        report.push("E+ + E- spans", p + q == n, n.abs_diff(p + q) as f64);
        let r_plus = (&self.matrix * &self.eigen_plus - &self.eigen_plus).norm();
        let r_minus = (&self.matrix * &self.eigen_minus + &self.eigen_minus).norm();
        report.check("J = +Id on E+", r_plus, tol.threshold(root_n));
        report.check("J = -Id on E-", r_minus, tol.threshold(root_n));
    }
}

/// Nilpotent endomorphism with `im J = ker J`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentStructure {
    pub matrix: Matrix,
    pub kernel_basis: Matrix,
    /// Basis of a complement `𝕂` of `ker J`.
    pub complement_basis: Matrix,
}

impl TangentStructure {
    /// Kernel basis canonical orthonormal, complement its orthogonal
    /// complement.
    pub fn from_matrix(matrix: Matrix, tol: Tolerance) -> Result<Self> {
        numkernel::ensure_square(&matrix)?;
        numkernel::ensure_finite(&matrix)?;
        let kernel = canonical_basis(&kernel_and_image(&matrix, tol).kernel, tol);
        let complement = canonical_basis(&orthogonal_complement(&kernel), tol);
        Ok(Self {
            matrix,
            kernel_basis: kernel,
            complement_basis: complement,
        })
    }

    pub fn with_complement(mut self, complement: Matrix) -> Result<Self> {
        if complement.nrows() != self.dim() {
            return Err(LinError::Shape("complement basis row count".into()));
        }
        self.complement_basis = complement;
        Ok(self)
    }

    pub fn canonical(n: usize) -> Self {
        Self::from_matrix(canonical_tangent(n), Tolerance::default()).expect("canonical")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn validate_into(&self, report: &mut Report, tol: Tolerance) {
        let n = self.dim();
        let scale = self.matrix.norm();
        report.push("even dimension", n.is_multiple_of(2), (n % 2) as f64);
        report.check(
            "J^2 = 0",
            (&self.matrix * &self.matrix).norm(),
            tol.threshold(scale * scale),
        );
        let ki = kernel_and_image(&self.matrix, tol);
        report.push(
            "rank J = dim/2",
            2 * ki.rank == n,
            (2 * ki.rank).abs_diff(n) as f64 / 2.0,
        );
        let angle = subspace_distance(&ki.image, &ki.kernel);
        report.check("im J = ker J", angle, tol.threshold(1.0));
        let k = self.complement_basis.ncols();
        let jk = &self.matrix * &self.complement_basis;
        let jk_rank = kernel_and_image(&jk, tol).rank;
        let iso = k == ki.kernel.ncols() && jk_rank == k;
        report.push(
            "J restricted to K is an isomorphism onto ker J",
            iso,
            k.abs_diff(jk_rank) as f64,
        );
        if self.kernel_basis.ncols() > 0 {
            report.check(
                "kernel basis annihilated",
                (&self.matrix * &self.kernel_basis).norm(),
                tol.threshold(scale),
            );
        }
    }
}

/// Symplectic form with a Lagrangian subspace `𝕃` and a complement `𝕂`.
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentStructure {
    pub symplectic: SymplecticForm,
    pub lagrangian_basis: Matrix,
    pub complement_basis: Matrix,
}

impl CotangentStructure {
    pub fn new(symplectic: SymplecticForm, lagrangian_basis: Matrix, complement_basis: Matrix) -> Result<Self> {
        let n = symplectic.dim();
        if lagrangian_basis.nrows() != n || complement_basis.nrows() != n {
            return Err(LinError::Shape(format!("bases must have {n} rows")));
        }
        Ok(Self {
            symplectic,
            lagrangian_basis,
            complement_basis,
        })
    }

    /// Lagrangian `𝕃 = span(e_i)` and complement `span(f_i)` from a Darboux
    /// basis.
    pub fn from_symplectic(symplectic: SymplecticForm, tol: Tolerance) -> Result<Self> {
        let basis = darboux_basis(&symplectic, tol)?.basis;
        let k = basis.ncols() / 2;
        Ok(Self {
            lagrangian_basis: basis.columns(0, k).into_owned(),
            complement_basis: basis.columns(k, k).into_owned(),
            symplectic,
        })
    }

    fn validate_into(&self, report: &mut Report, tol: Tolerance) {
        self.symplectic.validate_into(report, tol);
        let s = self.symplectic.matrix();
        let n = self.symplectic.dim();
        let l = &self.lagrangian_basis;
        let iso = (l.transpose() * s * l).norm();
        report.check(
            "Omega vanishes on L x L",
            iso,
            tol.threshold(s.norm() * l.norm() * l.norm()),
        );
        let dim_l = kernel_and_image(l, tol).rank;
        report.push(
            "L maximal isotropic (dim L = dim/2)",
            2 * dim_l == n,
            (2 * dim_l).abs_diff(n) as f64,
        );
        let k = self.complement_basis.ncols();
        report.push("dim L = dim K", l.ncols() == k, l.ncols().abs_diff(k) as f64);
        let both = hstack(&[l, &self.complement_basis]);
        let rank = kernel_and_image(&both, tol).rank;
        report.push("L + K spans", rank == n, n.abs_diff(rank) as f64);
    }
}

/// Any structure accepted by [`Structure::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Structure {
    Bilinear(BilinearForm),
    Symplectic(SymplecticForm),
    Krein(KreinMetric),
    Complex(ComplexStructure),
    ParaComplex(ParaComplexStructure),
    Tangent(TangentStructure),
    Cotangent(CotangentStructure),
}

impl Structure {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Structure::Bilinear(_) => "bilinear",
            Structure::Symplectic(_) => "symplectic",
            Structure::Krein(_) => "krein",
            Structure::Complex(_) => "complex",
            Structure::ParaComplex(_) => "para_complex",
            Structure::Tangent(_) => "tangent",
            Structure::Cotangent(_) => "cotangent",
        }
    }

    /// Check every defining invariant; failures are report entries.
    pub fn validate(&self, tol: Tolerance) -> Report {
        let mut report = Report::new(format!("{} structure", self.kind_name()));
        match self {
            Structure::Bilinear(b) => b.validate_into(&mut report, tol),
            Structure::Symplectic(s) => s.validate_into(&mut report, tol),
            Structure::Krein(k) => k.validate_into(&mut report, tol),
            Structure::Complex(c) => c.validate_into(&mut report, tol),
            Structure::ParaComplex(p) => p.validate_into(&mut report, tol),
            Structure::Tangent(t) => t.validate_into(&mut report, tol),
            Structure::Cotangent(c) => c.validate_into(&mut report, tol),
        }
        report
    }
}

macro_rules! impl_from_structure {
    ($($variant:ident($ty:ty)),*) => {$(
        impl From<$ty> for Structure {
            fn from(s: $ty) -> Self {
                Structure::$variant(s)
            }
        }
    )*};
}

impl_from_structure!(
    Bilinear(BilinearForm),
    Symplectic(SymplecticForm),
    Krein(KreinMetric),
    Complex(ComplexStructure),
    ParaComplex(ParaComplexStructure),
    Tangent(TangentStructure),
    Cotangent(CotangentStructure)
);

/// The fundamental symmetry `J(u⁺ + u⁻) = u⁺ − u⁻` of a Krein metric and
/// the positive inner product `γ(u, v) = g(u, Jv)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalSymmetry {
    pub symmetry: Matrix,
    pub gamma: BilinearForm,
}

pub fn fundamental_symmetry(g: &KreinMetric, tol: Tolerance) -> Result<FundamentalSymmetry> {
    let n = g.dim();
    let (p, q) = g.signature();
    if p + q != n {
        return Err(LinError::InvalidDecomposition(format!(
            "dim E+ + dim E- = {} but dimension is {n}",
            p + q
        )));
    }
    let basis = hstack(&[&g.plus_basis, &g.minus_basis]);
    let basis_inv =
        numkernel::inverse(&basis).map_err(|_| LinError::InvalidDecomposition("E+ and E- do not span".into()))?;
    let signs = block_diag(&Matrix::identity(p, p), &-Matrix::identity(q, q));
    let symmetry = &basis * signs * basis_inv;
    let gamma = g.matrix() * &symmetry;
    let asym = symmetry_residual(&gamma);
    if asym > tol.threshold(gamma.norm()) {
        return Err(LinError::InvalidDecomposition(format!(
            "E+ and E- are not g-orthogonal (asymmetry {asym:e})"
        )));
    }
    let gamma = numkernel::symmetrize(&gamma);
    if !numkernel::is_positive_definite(&gamma, tol) {
        return Err(LinError::InvalidDecomposition("g is not definite on E+ or E-".into()));
    }
    Ok(FundamentalSymmetry {
        symmetry,
        gamma: BilinearForm {
            matrix: gamma,
            symmetry: Symmetry::Symmetric,
        },
    })
}

/// Basis `F = [f⁺ | f⁻]` with `Fᵀ·G·F = diag(Id_p, −Id_q)`.
fn krein_frame(g: &KreinMetric) -> Result<Matrix> {
    let normalize = |basis: &Matrix, sign: f64| -> Result<Matrix> {
        if basis.ncols() == 0 {
            return Ok(basis.clone());
        }
        let gram = basis.transpose() * g.matrix() * basis * sign;
        let chol = nalgebra::Cholesky::new(numkernel::symmetrize(&gram))
            .ok_or_else(|| LinError::InvalidDecomposition("restriction not definite".into()))?;
        let l_inv_t = numkernel::inverse(&chol.l())?.transpose();
        Ok(basis * l_inv_t)
    };
    let plus = normalize(&g.plus_basis, 1.0)?;
    let minus = normalize(&g.minus_basis, -1.0)?;
    Ok(hstack(&[&plus, &minus]))
}

#[derive(Debug, Clone, PartialEq)]
pub enum KreinVerdict {
    /// `φ` with `φᵀ·G₂·φ = G₁`.
    Isomorphism(Matrix),
    IncompatibleSignature {
        first: (usize, usize),
        second: (usize, usize),
    },
}

pub fn krein_isomorphism(g1: &KreinMetric, g2: &KreinMetric, tol: Tolerance) -> Result<KreinVerdict> {
    if g1.dim() != g2.dim() {
        return Err(LinError::Shape(format!(
            "dimensions differ: {} vs {}",
            g1.dim(),
            g2.dim()
        )));
    }
    let (s1, s2) = (inertia(g1.matrix(), tol), inertia(g2.matrix(), tol));
    let sig1 = (s1.positive, s1.negative);
    let sig2 = (s2.positive, s2.negative);
    if sig1 != sig2 || g1.signature() != sig1 || g2.signature() != sig2 {
        return Ok(KreinVerdict::IncompatibleSignature {
            first: g1.signature(),
            second: g2.signature(),
        });
    }
    let f1 = krein_frame(g1)?;
    let f2 = krein_frame(g2)?;
    let phi = f2 * numkernel::inverse(&f1)?;
    Ok(KreinVerdict::Isomorphism(phi))
}

/// `A` with `A⁻¹·J_can·A = J`, `J_can = [[0, Id], [0, 0]]` on `ker J ⊕ ker J`.
pub fn tangent_normal_form(j: &TangentStructure, tol: Tolerance) -> Result<Matrix> {
    let report = Structure::Tangent(j.clone()).validate(tol);
    if !report.passed() {
        let failed: Vec<_> = report.failures().map(|e| e.name.clone()).collect();
        return Err(LinError::InvalidStructure(failed.join(", ")));
    }
    let kernel = canonical_basis(&j.kernel_basis, tol);
    let jk = &j.matrix * &j.complement_basis;
    let coords = kernel.transpose() * &jk;
    let lifted = &j.complement_basis * numkernel::inverse(&coords)?;
    let basis = hstack(&[&kernel, &lifted]);
    Ok(numkernel::inverse(&basis)?)
}

/// `A = diag(Id, I)·B⁻¹` with `B = [𝔼₁ | 𝔼₂]`, so `A⁻¹·𝓘_can·A = 𝓘`.
pub fn complex_normal_form(i: &ComplexStructure) -> Result<Matrix> {
    let d = i.decomposition.as_ref().ok_or(LinError::MissingDecomposition)?;
    let k = d.iso.nrows();
    let b_inv = numkernel::inverse(&d.basis())?;
    Ok(block_diag(&Matrix::identity(k, k), &d.iso) * b_inv)
}

/// `𝓙 = 𝓢·𝓘` for the symmetry `𝓢 = −Id ⊕ Id` of the decomposition.
pub fn para_from_complex(i: &ComplexStructure, tol: Tolerance) -> Result<ParaComplexStructure> {
    let d = i.decomposition.as_ref().ok_or(LinError::MissingDecomposition)?;
    let s = d.symmetry()?;
    ParaComplexStructure::from_matrix(s * &i.matrix, tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DarbouxBasis {
    /// Columns `[e₁ … e_k, f₁ … f_k]` with `Aᵀ·S·A = [[0, Id], [−Id, 0]]`.
    pub basis: Matrix,
    /// `‖Aᵀ·S·A − S_can‖_F`
    pub residual: f64,
}

/// Symplectic Gram–Schmidt.
///
/// Repeatedly pairs the two remaining vectors with the largest pairing
/// (first pair in index order on ties), scales the partner so the pairing is
/// one, and projects the pair out of the others with
/// `v ← v − Ω(v, f)·e + Ω(v, e)·f`.
pub fn darboux_basis(omega: &SymplecticForm, tol: Tolerance) -> Result<DarbouxBasis> {
    let s = omega.matrix();
    let n = omega.dim();
    let scale = s.norm();
    let degenerate = || LinError::Degenerate {
        rank: kernel_and_image(s, tol).rank,
        dim: n,
    };
    if !n.is_multiple_of(2) {
        return Err(degenerate());
    }
    let asym = skew_residual(s);
    if asym > tol.threshold(scale) {
        return Err(LinError::InvalidStructure(format!(
            "form is not skew (residual {asym:e})"
        )));
    }
    let pair = |u: &Vector, v: &Vector| u.dot(&(s * v));
    let mut remaining: Vec<Vector> = (0..n)
        .map(|j| Vector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 }))
        .collect();
    let mut es = Vec::with_capacity(n / 2);
    let mut fs = Vec::with_capacity(n / 2);
    while !remaining.is_empty() {
        let mut best = (0usize, 0usize, 0.0_f64);
        for a in 0..remaining.len() {
            for b in (a + 1)..remaining.len() {
                let w = pair(&remaining[a], &remaining[b]);
                if w.abs() > best.2.abs() {
                    best = (a, b, w);
                }
            }
        }
        let (a, b, w) = best;
        if w.abs() <= tol.threshold(scale) {
            return Err(degenerate());
        }
        let e = remaining[a].clone();
        let f = &remaining[b] / w;
        remaining.remove(b);
        remaining.remove(a);
        for v in remaining.iter_mut() {
            let vf = pair(v, &f);
            let ve = pair(v, &e);
            *v = &*v - &e * vf + &f * ve;
        }
        es.push(e);
        fs.push(f);
    }
    let mut cols = es;
    cols.extend(fs);
    let basis = Matrix::from_columns(&cols);
    let residual = (basis.transpose() * s * &basis - canonical_skew(n / 2)).norm();
    Ok(DarbouxBasis { basis, residual })
}
