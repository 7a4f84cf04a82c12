//! Finite towers of model spaces: projective systems of surjections and
//! direct systems of injections, coherent sequences of tensors on them,
//! level groups of intertwining tuples, the flag-preserving group of a
//! direct tower, and coherence of adapted connection forms.
//!
//! Levels are numbered from `0`. Maps between non-consecutive levels are
//! composed from consecutive ones; explicitly supplied ones are checked
//! against that composition.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkernel::{self, kernel_and_image, Matrix, Tolerance, Vector};
use crate::report::Report;
use crate::sample::{gaussian, invertible, SampleRng};
use crate::tensor::{Role, StructureMatrix, TensorKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LimitError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sequence is not coherent (max residual {0:e})")]
    IncoherentSequence(f64),
    #[error("entry at level {level} is not invertible")]
    NotInvertible { level: usize },
    #[error("matrix is singular")]
    Singular,
    #[error("operator does not preserve the flag (residual {0:e})")]
    NotMember(f64),
    #[error("direct tower with non-padding inclusions needs explicit projections")]
    MissingProjection,
    #[error("level {0} out of range")]
    Level(usize),
}

pub type Result<T> = std::result::Result<T, LimitError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variance {
    /// Surjections `λᵢʲ: ℝ^{dⱼ} → ℝ^{dᵢ}` for `i ≤ j`.
    Projective,
    /// Injections `ιᵢʲ: ℝ^{dᵢ} → ℝ^{dⱼ}` with left inverses `Pᵢʲ`.
    Direct,
}

/// `[Id 0]`, `d_small × d_big`.
pub fn coordinate_projection(d_small: usize, d_big: usize) -> Matrix {
    Matrix::identity(d_small, d_big)
}

/// `[Id; 0]`, `d_big × d_small`.
pub fn padding_inclusion(d_small: usize, d_big: usize) -> Matrix {
    Matrix::identity(d_big, d_small)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BondingSystem {
    pub dims: Vec<usize>,
    pub variance: Variance,
    /// `consecutive[n]` connects levels `n` and `n + 1`.
    pub consecutive: Vec<Matrix>,
    /// Direct variant: `projections[n] = Pₙⁿ⁺¹`.
    pub projections: Vec<Matrix>,
    /// Supplied non-consecutive maps, checked by [`validate_bonding`].
    pub explicit: BTreeMap<(usize, usize), Matrix>,
}

impl BondingSystem {
    /// Coordinate projections (projective) or zero padding with coordinate
    /// projections as left inverses (direct).
    pub fn padded(dims: Vec<usize>, variance: Variance) -> Self {
        let consecutive: Vec<Matrix> = dims
            .windows(2)
            .map(|w| match variance {
                Variance::Projective => coordinate_projection(w[0], w[1]),
                Variance::Direct => padding_inclusion(w[0], w[1]),
            })
            .collect();
        let projections = match variance {
            Variance::Projective => Vec::new(),
            Variance::Direct => dims.windows(2).map(|w| coordinate_projection(w[0], w[1])).collect(),
        };
        Self {
            dims,
            variance,
            consecutive,
            projections,
            explicit: BTreeMap::new(),
        }
    }

    /// For the direct variant `projections` may be omitted only when every
    /// inclusion is the zero padding.
    pub fn from_consecutive(
        dims: Vec<usize>,
        variance: Variance,
        consecutive: Vec<Matrix>,
        projections: Option<Vec<Matrix>>,
    ) -> Result<Self> {
        if consecutive.len() + 1 != dims.len() {
            return Err(LimitError::ShapeMismatch(format!(
                "{} levels need {} consecutive maps, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                consecutive.len()
            )));
        }
        let projections = match (variance, projections) {
            (Variance::Projective, _) => Vec::new(),
            (Variance::Direct, Some(p)) => p,
            (Variance::Direct, None) => {
                let padded = dims
                    .windows(2)
                    .zip(&consecutive)
                    .all(|(w, m)| *m == padding_inclusion(w[0], w[1]));
                if !padded {
                    return Err(LimitError::MissingProjection);
                }
                dims.windows(2).map(|w| coordinate_projection(w[0], w[1])).collect()
            }
        };
        Ok(Self {
            dims,
            variance,
            consecutive,
            projections,
            explicit: BTreeMap::new(),
        })
    }

    pub fn levels(&self) -> usize {
        self.dims.len()
    }

    fn level_ok(&self, n: usize) -> Result<()> {
        if n < self.levels() {
            Ok(())
        } else {
            Err(LimitError::Level(n))
        }
    }

    /// The composed bonding map between levels `i ≤ j`: `λᵢʲ` (`dᵢ × dⱼ`)
    /// or `ιᵢʲ` (`dⱼ × dᵢ`).
    pub fn map(&self, i: usize, j: usize) -> Result<Matrix> {
        self.level_ok(j)?;
        if i > j {
            return Err(LimitError::ShapeMismatch(format!(
                "bonding map needs i ≤ j, got ({i}, {j})"
            )));
        }
        let mut m = Matrix::identity(self.dims[i], self.dims[i]);
        for k in i..j {
            m = match self.variance {
                Variance::Projective => m * &self.consecutive[k],
                Variance::Direct => &self.consecutive[k] * m,
            };
        }
        Ok(m)
    }

    /// `Pᵢʲ = Pᵢⁱ⁺¹ ∘ … ∘ Pⱼ₋₁ʲ` (direct variant), `dᵢ × dⱼ`.
    pub fn projection(&self, i: usize, j: usize) -> Result<Matrix> {
        self.level_ok(j)?;
        if self.variance != Variance::Direct {
            return Err(LimitError::ShapeMismatch("projections belong to direct towers".into()));
        }
        if self.projections.len() + 1 != self.levels() {
            return Err(LimitError::MissingProjection);
        }
        let mut m = Matrix::identity(self.dims[i], self.dims[i]);
        for k in i..j {
            m *= &self.projections[k];
        }
        Ok(m)
    }

    /// Move a vector from level `from` towards level `to` along the bonding
    /// maps: down a projective tower, up a direct one.
    pub fn transfer(&self, v: &Vector, from: usize, to: usize) -> Result<Vector> {
        match self.variance {
            Variance::Projective => Ok(self.map(to, from)? * v),
            Variance::Direct => Ok(self.map(from, to)? * v),
        }
    }
}

fn expect_shape(m: &Matrix, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.nrows() == rows && m.ncols() == cols {
        Ok(())
    } else {
        Err(LimitError::ShapeMismatch(format!(
            "{what}: expected {rows}×{cols}, got {}×{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Shapes, surjectivity/injectivity, the composition law for supplied
/// maps, and for direct towers `Pᵢʲ∘ιᵢʲ = Id`.
pub fn validate_bonding(b: &BondingSystem, tol: Tolerance) -> Result<Report> {
    let mut report = Report::new(format!("{:?} bonding system, {} levels", b.variance, b.levels()).to_lowercase());
    let n = b.levels();
    if b.consecutive.len() + 1 != n {
        return Err(LimitError::ShapeMismatch("consecutive map count".into()));
    }
    for (k, m) in b.consecutive.iter().enumerate() {
        let (lo, hi) = (b.dims[k], b.dims[k + 1]);
        match b.variance {
            Variance::Projective => expect_shape(m, lo, hi, &format!("map {k}->{}", k + 1))?,
            Variance::Direct => expect_shape(m, hi, lo, &format!("map {k}->{}", k + 1))?,
        }
        let r = kernel_and_image(m, tol).rank;
        let name = match b.variance {
            Variance::Projective => format!("level {k}: surjective"),
            Variance::Direct => format!("level {k}: injective"),
        };
        report.push(name, r == lo, lo.abs_diff(r) as f64);
    }
    if b.variance == Variance::Direct {
        if b.projections.len() + 1 != n {
            return Err(LimitError::MissingProjection);
        }
        for (k, p) in b.projections.iter().enumerate() {
            expect_shape(p, b.dims[k], b.dims[k + 1], &format!("projection {k}<-{}", k + 1))?;
        }
        for i in 0..n {
            for j in i + 1..n {
                let r = (b.projection(i, j)? * b.map(i, j)? - Matrix::identity(b.dims[i], b.dims[i])).norm();
                report.check(format!("P({i},{j}) is a left inverse"), r, tol.threshold(1.0));
            }
        }
    }
    for (&(i, j), m) in &b.explicit {
        let composed = b.map(i, j)?;
        expect_shape(
            m,
            composed.nrows(),
            composed.ncols(),
            &format!("explicit map ({i},{j})"),
        )?;
        let r = (m - &composed).norm();
        report.check(format!("({i},{j}) composition law"), r, tol.threshold(composed.norm()));
    }
    Ok(report)
}

/// One structure per level of a tower.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentSequence {
    pub bonding: BondingSystem,
    pub levels: Vec<StructureMatrix>,
}

impl CoherentSequence {
    pub fn new(bonding: BondingSystem, levels: Vec<StructureMatrix>) -> Result<Self> {
        if levels.len() != bonding.levels() {
            return Err(LimitError::ShapeMismatch(format!(
                "{} structures for {} levels",
                levels.len(),
                bonding.levels()
            )));
        }
        for (n, s) in levels.iter().enumerate() {
            expect_shape(
                &s.matrix,
                bonding.dims[n],
                bonding.dims[n],
                &format!("structure at level {n}"),
            )?;
        }
        if levels.windows(2).any(|w| w[0].kind() != w[1].kind()) {
            return Err(LimitError::ShapeMismatch("mixed tensor kinds".into()));
        }
        Ok(Self { bonding, levels })
    }

    pub fn kind(&self) -> TensorKind {
        self.levels
            .first()
            .map(|s| s.kind())
            .unwrap_or(TensorKind::Endomorphism)
    }

    /// Residual of the coherence identity for the pair `i < j`:
    ///
    /// | variance   | (1,1)          | (2,0)           |
    /// |------------|----------------|-----------------|
    /// | projective | `Aᵢλ = λAⱼ`    | `ωⱼ = λᵀωᵢλ`    |
    /// | direct     | `ιAᵢ = Aⱼι`    | `ωᵢ = ιᵀωⱼι`    |
    pub fn pair_residual(&self, i: usize, j: usize) -> Result<f64> {
        let m = self.bonding.map(i, j)?;
        let (a, b) = (&self.levels[i].matrix, &self.levels[j].matrix);
        let r = match (self.bonding.variance, self.kind()) {
            (Variance::Projective, TensorKind::Endomorphism) => a * &m - &m * b,
            (Variance::Direct, TensorKind::Endomorphism) => &m * a - b * &m,
            (Variance::Projective, TensorKind::Bilinear) => b - m.transpose() * a * &m,
            (Variance::Direct, TensorKind::Bilinear) => a - m.transpose() * b * &m,
        };
        Ok(r.norm())
    }
}

/// Every pair `i < j`; passes iff each residual is within `tol`.
pub fn check_coherent(seq: &CoherentSequence, tol: Tolerance) -> Result<Report> {
    let mut report = Report::new(format!(
        "{} coherence, {} levels",
        match seq.bonding.variance {
            Variance::Projective => "projective",
            Variance::Direct => "direct",
        },
        seq.bonding.levels()
    ));
    let n = seq.bonding.levels();
    for i in 0..n {
        for j in i + 1..n {
            let scale = seq.levels[i].matrix.norm().max(seq.levels[j].matrix.norm());
            report.check(
                format!("pair ({i},{j})"),
                seq.pair_residual(i, j)?,
                tol.threshold(scale),
            );
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub enum LimitValue {
    Vector(Vector),
    Scalar(f64),
}

/// The level-`n` representative applied to `inputs`: `Aₙv` for (1,1),
/// `ωₙ(u, v)` for (2,0). Refuses incoherent sequences.
pub fn limit_eval(seq: &CoherentSequence, n: usize, inputs: &[Vector], tol: Tolerance) -> Result<LimitValue> {
    seq.bonding.level_ok(n)?;
    let report = check_coherent(seq, tol)?;
    if !report.passed() {
        return Err(LimitError::IncoherentSequence(report.max_residual()));
    }
    let d = seq.bonding.dims[n];
    if inputs.iter().any(|v| v.len() != d) {
        return Err(LimitError::ShapeMismatch(format!("inputs must have length {d}")));
    }
    let m = &seq.levels[n].matrix;
    match (seq.kind(), inputs) {
        (TensorKind::Endomorphism, [v]) => Ok(LimitValue::Vector(m * v)),
        (TensorKind::Bilinear, [u, v]) => Ok(LimitValue::Scalar(u.dot(&(m * v)))),
        _ => Err(LimitError::ShapeMismatch("one input for (1,1), two for (2,0)".into())),
    }
}

/// `(f₀, …, fₙ)` with `fᵢ` acting on level `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTuple {
    pub entries: Vec<Matrix>,
}

impl LevelTuple {
    pub fn identity(b: &BondingSystem, n: usize) -> Self {
        Self {
            entries: b.dims[..=n].iter().map(|&d| Matrix::identity(d, d)).collect(),
        }
    }

    pub fn level(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    /// `max ‖fᵢλᵢʲ − λᵢʲfⱼ‖` (projective) or `max ‖ιᵢʲfᵢ − fⱼιᵢʲ‖` (direct).
    pub fn constraint_residual(&self, b: &BondingSystem) -> Result<f64> {
        let mut worst = 0.0_f64;
        for i in 0..self.entries.len() {
            for j in i + 1..self.entries.len() {
                let m = b.map(i, j)?;
                let r = match b.variance {
                    Variance::Projective => &self.entries[i] * &m - &m * &self.entries[j],
                    Variance::Direct => &m * &self.entries[i] - &self.entries[j] * &m,
                };
                worst = worst.max(r.norm());
            }
        }
        Ok(worst)
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.entries.len() != other.entries.len() {
            return Err(LimitError::ShapeMismatch("tuples at different levels".into()));
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(f, g)| {
                if f.ncols() != g.nrows() {
                    Err(LimitError::ShapeMismatch("entry shapes differ".into()))
                } else {
                    Ok(f * g)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }

    pub fn inverse(&self) -> Result<Self> {
        let entries = self
            .entries
            .iter()
            .enumerate()
            .map(|(level, f)| numkernel::inverse(f).map_err(|_| LimitError::NotInvertible { level }))
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }

    /// `(h₀)ᵢⁿ`: drop the entries above level `i`.
    pub fn project(&self, i: usize) -> Result<Self> {
        if i > self.level() {
            return Err(LimitError::Level(i));
        }
        Ok(Self {
            entries: self.entries[..=i].to_vec(),
        })
    }

    /// A random intertwining tuple on a padded tower: each `fⱼ` is block
    /// triangular with `fⱼ₋₁` as its leading block (lower triangular for
    /// projective towers, upper for direct ones).
    pub fn random_padded(rng: &mut SampleRng, b: &BondingSystem, n: usize) -> Self {
        let mut entries: Vec<Matrix> = vec![invertible(rng, b.dims[0])];
        for k in 1..=n {
            let (lo, hi) = (b.dims[k - 1], b.dims[k]);
            let mut f = Matrix::zeros(hi, hi);
            f.view_mut((0, 0), (lo, lo)).copy_from(&entries[k - 1]);
            if hi > lo {
                f.view_mut((lo, lo), (hi - lo, hi - lo))
                    .copy_from(&invertible(rng, hi - lo));
                let off = gaussian(rng, hi - lo, lo) * 0.5;
                match b.variance {
                    Variance::Projective => f.view_mut((lo, 0), (hi - lo, lo)).copy_from(&off),
                    Variance::Direct => f.view_mut((0, lo), (lo, hi - lo)).copy_from(&off.transpose()),
                }
            }
            entries.push(f);
        }
        Self { entries }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelGroupOutcome {
    pub product: LevelTuple,
    pub inverse_first: LevelTuple,
    pub inverse_second: LevelTuple,
    pub report: Report,
}

/// Composition and inverses, with the intertwining constraint checked on
/// the inputs, the product and the inverses.
pub fn level_group_ops(
    a: &LevelTuple,
    b: &LevelTuple,
    bonding: &BondingSystem,
    tol: Tolerance,
) -> Result<LevelGroupOutcome> {
    let product = a.compose(b)?;
    let inverse_first = a.inverse()?;
    let inverse_second = b.inverse()?;
    let mut report = Report::new(format!("level group at level {}", a.level()));
    let scale = |t: &LevelTuple| t.entries.iter().map(|m| m.norm()).fold(1.0, f64::max);
    for (name, t) in [
        ("first", a),
        ("second", b),
        ("product", &product),
        ("inverse of first", &inverse_first),
        ("inverse of second", &inverse_second),
    ] {
        report.check(
            format!("{name} intertwines"),
            t.constraint_residual(bonding)?,
            tol.threshold(scale(t)),
        );
    }
    Ok(LevelGroupOutcome {
        product,
        inverse_first,
        inverse_second,
        report,
    })
}

/// Result of testing `A ∈ G(Eₙ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlagMembership {
    pub member: bool,
    pub residual: f64,
    /// Blocks of `A` in the adapted basis `[ι₀ⁿ | ι₁ⁿK₁ | …]`, `Kₖ` spanning
    /// `ker Pₖ₋₁ᵏ`; `blocks[r][c]` for `r ≤ c`, present for members.
    pub blocks: Option<Vec<Vec<Matrix>>>,
}

fn adapted_basis(b: &BondingSystem, n: usize, tol: Tolerance) -> Result<(Matrix, Vec<usize>)> {
    let mut cols: Vec<Matrix> = vec![b.map(0, n)?];
    let mut sizes = vec![b.dims[0]];
    for k in 1..=n {
        let p = &b.projections[k - 1];
        let ker = kernel_and_image(p, tol).kernel;
        sizes.push(ker.ncols());
        cols.push(b.map(k, n)? * ker);
    }
    let refs: Vec<&Matrix> = cols.iter().collect();
    Ok((numkernel::hstack(&refs), sizes))
}

/// `A` preserves every flag subspace `𝔼ₖ = im ιₖⁿ`, `k < n`.
pub fn gen_membership(a: &Matrix, b: &BondingSystem, n: usize, tol: Tolerance) -> Result<FlagMembership> {
    b.level_ok(n)?;
    if b.variance != Variance::Direct {
        return Err(LimitError::ShapeMismatch("flag membership needs a direct tower".into()));
    }
    expect_shape(a, b.dims[n], b.dims[n], "operator")?;
    if numkernel::inverse(a).is_err() {
        return Err(LimitError::Singular);
    }
    let mut residual = 0.0_f64;
    for k in 0..n {
        let iota = b.map(k, n)?;
        let q = numkernel::orthonormal_span(&iota, tol);
        let moved = a * &q;
        let off = &moved - &q * (q.transpose() * &moved);
        residual = residual.max(off.norm());
    }
    let member = residual <= tol.threshold(a.norm());
    let blocks = if member {
        let (basis, sizes) = adapted_basis(b, n, tol)?;
        let inv = numkernel::inverse(&basis).map_err(|_| LimitError::Singular)?;
        let local = inv * a * &basis;
        let offsets: Vec<usize> = sizes
            .iter()
            .scan(0, |acc, s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();
        Some(
            (0..sizes.len())
                .map(|r| {
                    (r..sizes.len())
                        .map(|c| local.view((offsets[r], offsets[c]), (sizes[r], sizes[c])).into_owned())
                        .collect()
                })
                .collect(),
        )
    } else {
        None
    };
    Ok(FlagMembership {
        member,
        residual,
        blocks,
    })
}

/// `θᵢʲ(A) = Pᵢʲ·A·ιᵢʲ` for a flag-preserving `A` at level `j`.
pub fn theta_projection(a: &Matrix, i: usize, j: usize, b: &BondingSystem, tol: Tolerance) -> Result<Matrix> {
    let m = gen_membership(a, b, j, tol)?;
    if !m.member {
        return Err(LimitError::NotMember(m.residual));
    }
    Ok(b.projection(i, j)? * a * b.map(i, j)?)
}

/// A random flag-preserving operator on a padded direct tower: block upper
/// triangular with invertible diagonal blocks.
pub fn random_flag_member(rng: &mut SampleRng, b: &BondingSystem, n: usize) -> Matrix {
    let d = b.dims[n];
    let mut a = gaussian(rng, d, d) * 0.5;
    let mut start = 0;
    for k in 0..=n {
        let end = b.dims[k];
        if end > start {
            a.view_mut((start, start), (end - start, end - start))
                .copy_from(&invertible(rng, end - start));
            for r in end..d {
                for c in start..end {
                    a[(r, c)] = 0.0;
                }
            }
        }
        start = end;
    }
    a
}

/// Row-major `vec(X)` for a `d × d` matrix.
pub fn vec_of(x: &Matrix) -> Vector {
    Vector::from_iterator(x.len(), x.transpose().iter().copied())
}

pub fn unvec(v: &Vector, d: usize) -> Matrix {
    Matrix::from_row_slice(d, d, v.as_slice())
}

/// Algebra morphism `X ↦` leading `d_small × d_small` block of `X`.
pub fn leading_block_morphism(d_small: usize, d_big: usize) -> Matrix {
    let mut m = Matrix::zeros(d_small * d_small, d_big * d_big);
    for r in 0..d_small {
        for c in 0..d_small {
            m[(r * d_small + c, r * d_big + c)] = 1.0;
        }
    }
    m
}

/// Algebra morphism `X ↦ diag(X, 0)`.
pub fn block_extension_morphism(d_small: usize, d_big: usize) -> Matrix {
    leading_block_morphism(d_small, d_big).transpose()
}

/// `ω(x)(v) = Σₐ vₐ·(Cₐ + Σ_b x_b·C_ab)` on a chart of a trivial bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionForm {
    pub fiber_dim: usize,
    pub constant: Vec<Matrix>,
    /// `linear[a][b] = C_ab`; may be empty for constant forms.
    pub linear: Vec<Vec<Matrix>>,
}

impl ConnectionForm {
    pub fn zero(base_dim: usize, fiber_dim: usize) -> Self {
        Self {
            fiber_dim,
            constant: vec![Matrix::zeros(fiber_dim, fiber_dim); base_dim],
            linear: Vec::new(),
        }
    }

    pub fn base_dim(&self) -> usize {
        self.constant.len()
    }

    pub fn eval(&self, x: &[f64], v: &[f64]) -> Matrix {
        let d = self.fiber_dim;
        let mut out = Matrix::zeros(d, d);
        for (a, va) in v.iter().enumerate() {
            let mut c = self.constant[a].clone();
            if let Some(row) = self.linear.get(a) {
                for (b, cab) in row.iter().enumerate() {
                    c += cab * x[b];
                }
            }
            out += c * *va;
        }
        out
    }
}

/// Per-level connection forms over a tower of base charts, with algebra
/// morphisms between levels and a model tensor per level.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionFormSequence {
    pub base: BondingSystem,
    pub fiber_dims: Vec<usize>,
    pub forms: Vec<ConnectionForm>,
    /// Consecutive morphisms on row-major `vec`: `γₙⁿ⁺¹` (`dₙ² × dₙ₊₁²`,
    /// projective) or `Iₙⁿ⁺¹` (`dₙ₊₁² × dₙ²`, direct).
    pub morphisms: Vec<Matrix>,
    pub models: Vec<StructureMatrix>,
}

impl ConnectionFormSequence {
    fn morphism(&self, i: usize, j: usize) -> Matrix {
        let mut m = Matrix::identity(self.fiber_dims[i].pow(2), self.fiber_dims[i].pow(2));
        for k in i..j {
            m = match self.base.variance {
                Variance::Projective => m * &self.morphisms[k],
                Variance::Direct => &self.morphisms[k] * m,
            };
        }
        m
    }

    fn validate_shapes(&self) -> Result<()> {
        let n = self.base.levels();
        if self.fiber_dims.len() != n
            || self.forms.len() != n
            || self.models.len() != n
            || self.morphisms.len() + 1 != n
        {
            return Err(LimitError::ShapeMismatch(
                "per-level data must cover every level".into(),
            ));
        }
        for k in 0..n {
            if self.forms[k].base_dim() != self.base.dims[k] || self.forms[k].fiber_dim != self.fiber_dims[k] {
                return Err(LimitError::ShapeMismatch(format!("form at level {k}")));
            }
            expect_shape(
                &self.models[k].matrix,
                self.fiber_dims[k],
                self.fiber_dims[k],
                &format!("model at level {k}"),
            )?;
        }
        for (k, m) in self.morphisms.iter().enumerate() {
            let (lo, hi) = (self.fiber_dims[k].pow(2), self.fiber_dims[k + 1].pow(2));
            match self.base.variance {
                Variance::Projective => expect_shape(m, lo, hi, &format!("morphism {k}"))?,
                Variance::Direct => expect_shape(m, hi, lo, &format!("morphism {k}"))?,
            }
        }
        Ok(())
    }
}

/// Linearized isotropy defect of `X`: `XT − TX` for (1,1) models,
/// `XᵀS + SX` for (2,0) models.
pub fn algebra_defect(x: &Matrix, model: &StructureMatrix) -> f64 {
    let t = &model.matrix;
    match model.role {
        Role::Endomorphism => (x * t - t * x).norm(),
        _ => (x.transpose() * t + t * x).norm(),
    }
}

/// Per level, `ωₙ(x)(v)` lies in the isotropy algebra of the level model;
/// per pair `i < j`, the variance relation holds:
///
/// * projective: `ωᵢ(λx)(λv) = γᵢʲ(ωⱼ(x)(v))`, with `x` at level `j`;
/// * direct: `ωⱼ(ιx)(ιv) = Iᵢʲ(ωᵢ(x)(v))`, with `x` at level `i`.
///
/// `samples` are points of the top-level base; lower-level points are
/// their images under `λ` (projective) or `P` (direct). Tangent vectors
/// run over the coordinate basis.
pub fn check_connection_coherence(
    seq: &ConnectionFormSequence,
    samples: &[Vec<f64>],
    tol: Tolerance,
) -> Result<Report> {
    seq.validate_shapes()?;
    let b = &seq.base;
    let n = b.levels();
    let top = n - 1;
    let mut report = Report::new(format!(
        "{} connection coherence, {} levels, {} samples",
        match b.variance {
            Variance::Projective => "projective",
            Variance::Direct => "direct",
        },
        n,
        samples.len()
    ));
    let mut at_level: Vec<Vec<Vector>> = vec![Vec::new(); n];
    for x in samples {
        if x.len() != b.dims[top] {
            return Err(LimitError::ShapeMismatch(format!(
                "samples must have length {}",
                b.dims[top]
            )));
        }
        let x = Vector::from_column_slice(x);
        for (k, pts) in at_level.iter_mut().enumerate() {
            let down = match b.variance {
                Variance::Projective => b.map(k, top)?,
                Variance::Direct => b.projection(k, top)?,
            };
            pts.push(down * &x);
        }
    }
    let unit = |d: usize, a: usize| Vector::from_fn(d, |r, _| if r == a { 1.0 } else { 0.0 });
    for k in 0..n {
        let model = &seq.models[k];
        let scale = model.matrix.norm().max(1.0);
        let mut worst = (0.0_f64, None::<String>);
        for (s, x) in at_level[k].iter().enumerate() {
            for a in 0..b.dims[k] {
                let v = unit(b.dims[k], a);
                let r = algebra_defect(&seq.forms[k].eval(x.as_slice(), v.as_slice()), model) / scale;
                if r >= worst.0 {
                    worst = (r, Some(format!("sample {s}, direction {a}")));
                }
            }
        }
        report.push_at(
            format!("level {k}: adapted"),
            worst.0 <= tol.threshold(1.0),
            worst.0,
            worst.1,
        );
    }
    for i in 0..n {
        for j in i + 1..n {
            let map = b.map(i, j)?;
            let morph = seq.morphism(i, j);
            let mut worst = (0.0_f64, None::<String>);
            let mut scale = 1.0_f64;
            let (src, dim) = match b.variance {
                Variance::Projective => (j, b.dims[j]),
                Variance::Direct => (i, b.dims[i]),
            };
            for (s, x) in at_level[src].iter().enumerate() {
                for a in 0..dim {
                    let v = unit(dim, a);
                    let (lhs, rhs) = match b.variance {
                        Variance::Projective => {
                            let lhs = seq.forms[i].eval((&map * x).as_slice(), (&map * &v).as_slice());
                            let upper = seq.forms[j].eval(x.as_slice(), v.as_slice());
                            (lhs, unvec(&(&morph * vec_of(&upper)), seq.fiber_dims[i]))
                        }
                        Variance::Direct => {
                            let lhs = seq.forms[j].eval((&map * x).as_slice(), (&map * &v).as_slice());
                            let lower = seq.forms[i].eval(x.as_slice(), v.as_slice());
                            (lhs, unvec(&(&morph * vec_of(&lower)), seq.fiber_dims[j]))
                        }
                    };
                    scale = scale.max(lhs.norm());
                    let r = (lhs - rhs).norm();
                    if r >= worst.0 {
                        worst = (r, Some(format!("sample {s}, direction {a}")));
                    }
                }
            }
            report.push_at(
                format!("pair ({i},{j}): relation"),
                worst.0 <= tol.threshold(scale),
                worst.0,
                worst.1,
            );
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::rng;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn diag_seq(b: BondingSystem) -> CoherentSequence {
        let levels = b
            .dims
            .iter()
            .map(|&d| StructureMatrix::endomorphism(Matrix::from_diagonal(&Vector::from_fn(d, |i, _| i as f64 + 1.0))))
            .collect();
        CoherentSequence::new(b, levels).unwrap()
    }

    #[test]
    fn padded_towers_validate() {
        for v in [Variance::Projective, Variance::Direct] {
            let b = BondingSystem::padded(vec![1, 2, 3, 5], v);
            assert!(validate_bonding(&b, tol()).unwrap().passed());
        }
    }

    #[test]
    fn perturbed_explicit_map_fails() {
        let mut b = BondingSystem::padded(vec![1, 2, 3], Variance::Projective);
        let mut m = b.map(0, 2).unwrap();
        m[(0, 2)] = 1e-3;
        b.explicit.insert((0, 2), m);
        let r = validate_bonding(&b, tol()).unwrap();
        assert!(!r.passed());
        assert!((r.entry("(0,2) composition law").unwrap().residual - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn direct_diag_sequence_is_coherent() {
        let seq = diag_seq(BondingSystem::padded(vec![1, 2, 3, 4], Variance::Direct));
        let r = check_coherent(&seq, tol()).unwrap();
        assert!(r.passed());
        assert_eq!(r.max_residual(), 0.0);
    }

    #[test]
    fn modified_entry_fails_at_pair() {
        let mut seq = diag_seq(BondingSystem::padded(vec![1, 2, 3], Variance::Direct));
        seq.levels[2].matrix[(0, 0)] = 7.0;
        let r = check_coherent(&seq, tol()).unwrap();
        assert!(!r.entry("pair (0,2)").unwrap().passed);
        assert!(r.entry("pair (0,1)").unwrap().passed);
        assert!(matches!(
            limit_eval(&seq, 1, &[Vector::zeros(2)], tol()),
            Err(LimitError::IncoherentSequence(_))
        ));
    }

    #[test]
    fn leading_blocks_are_direct_coherent_forms() {
        let s = Matrix::from_row_slice(3, 3, &[2.0, 1.0, 0.5, 1.0, 3.0, -1.0, 0.5, -1.0, 4.0]);
        let levels: Vec<StructureMatrix> = (1..=3)
            .map(|d| StructureMatrix::symmetric(s.view((0, 0), (d, d)).into_owned()))
            .collect();
        let direct =
            CoherentSequence::new(BondingSystem::padded(vec![1, 2, 3], Variance::Direct), levels.clone()).unwrap();
        assert!(check_coherent(&direct, tol()).unwrap().passed());
        // under coordinate projections a coherent (2,0) sequence is the
        // pullback of the bottom form, so leading blocks are not coherent
        let projective =
            CoherentSequence::new(BondingSystem::padded(vec![1, 2, 3], Variance::Projective), levels).unwrap();
        assert!(!check_coherent(&projective, tol()).unwrap().passed());
    }

    #[test]
    fn projective_pullback_forms_are_coherent() {
        let b = BondingSystem::padded(vec![2, 3, 4], Variance::Projective);
        let base = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let levels = (0..3)
            .map(|n| {
                let l = b.map(0, n).unwrap();
                StructureMatrix::symmetric(l.transpose() * &base * l)
            })
            .collect();
        let seq = CoherentSequence::new(b.clone(), levels).unwrap();
        assert_eq!(check_coherent(&seq, tol()).unwrap().max_residual(), 0.0);
        let u = Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let v = Vector::from_vec(vec![-1.0, 0.5, 2.0, 0.0]);
        let LimitValue::Scalar(top) = limit_eval(&seq, 2, &[u.clone(), v.clone()], tol()).unwrap() else {
            panic!()
        };
        let (pu, pv) = (b.transfer(&u, 2, 0).unwrap(), b.transfer(&v, 2, 0).unwrap());
        let LimitValue::Scalar(bottom) = limit_eval(&seq, 0, &[pu, pv], tol()).unwrap() else {
            panic!()
        };
        assert_eq!(top, bottom);
    }

    #[test]
    fn direct_limit_eval_commutes_with_inclusion() {
        let seq = diag_seq(BondingSystem::padded(vec![1, 2, 3, 4], Variance::Direct));
        let v = Vector::from_vec(vec![0.3, -1.2]);
        let LimitValue::Vector(low) = limit_eval(&seq, 1, std::slice::from_ref(&v), tol()).unwrap() else {
            panic!()
        };
        let up = seq.bonding.transfer(&v, 1, 3).unwrap();
        let LimitValue::Vector(high) = limit_eval(&seq, 3, &[up], tol()).unwrap() else {
            panic!()
        };
        assert_eq!(seq.bonding.transfer(&low, 1, 3).unwrap(), high);
    }

    #[test]
    fn level_group_closure() {
        let mut r = rng(1);
        for v in [Variance::Projective, Variance::Direct] {
            let b = BondingSystem::padded(vec![1, 2, 4, 5], v);
            let f = LevelTuple::random_padded(&mut r, &b, 3);
            let g = LevelTuple::random_padded(&mut r, &b, 3);
            let out = level_group_ops(&f, &g, &b, Tolerance::uniform(1e-10)).unwrap();
            assert!(out.report.passed(), "{}", out.report);
            let id = LevelTuple::identity(&b, 3);
            assert_eq!(f.compose(&id).unwrap(), f);
            let p = f.project(1).unwrap();
            assert_eq!(p.project(0).unwrap(), f.project(0).unwrap());
        }
    }

    #[test]
    fn singular_entry_reports_level() {
        let t = LevelTuple {
            entries: vec![
                Matrix::identity(1, 1),
                Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            ],
        };
        assert_eq!(t.inverse(), Err(LimitError::NotInvertible { level: 1 }));
    }

    #[test]
    fn flag_membership_and_theta() {
        let b = BondingSystem::padded(vec![1, 2, 3], Variance::Direct);
        let a = Matrix::from_row_slice(3, 3, &[2.0, 1.0, 4.0, 0.0, 3.0, 5.0, 0.0, 0.0, 6.0]);
        let m = gen_membership(&a, &b, 2, tol()).unwrap();
        assert!(m.member);
        let blocks = m.blocks.unwrap();
        assert_eq!(blocks[0][0], Matrix::from_row_slice(1, 1, &[2.0]));
        assert_eq!(
            theta_projection(&a, 0, 2, &b, tol()).unwrap(),
            Matrix::from_row_slice(1, 1, &[2.0])
        );
        assert_eq!(
            theta_projection(&a, 1, 2, &b, tol()).unwrap(),
            Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0])
        );

        let id = Matrix::identity(3, 3);
        let m = gen_membership(&id, &b, 2, tol()).unwrap();
        assert!(m.member);
        assert_eq!(theta_projection(&id, 0, 2, &b, tol()).unwrap(), Matrix::identity(1, 1));

        let rot = crate::sample::rotation(0.4);
        let mut mix = Matrix::identity(3, 3);
        mix.view_mut((0, 0), (2, 2)).copy_from(&rot);
        assert!(!gen_membership(&mix, &b, 2, tol()).unwrap().member);
        assert!(matches!(
            theta_projection(&mix, 0, 2, &b, tol()),
            Err(LimitError::NotMember(_))
        ));
    }

    #[test]
    fn morphisms_on_vec() {
        let x = Matrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let lead = unvec(&(leading_block_morphism(2, 3) * vec_of(&x)), 2);
        assert_eq!(lead, Matrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 5.0]));
        let ext = unvec(&(block_extension_morphism(2, 3) * vec_of(&lead)), 3);
        assert_eq!(
            ext,
            Matrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 4.0, 5.0, 0.0, 0.0, 0.0, 0.0])
        );
    }

    #[test]
    fn zero_connection_tower_passes() {
        for v in [Variance::Projective, Variance::Direct] {
            let base = BondingSystem::padded(vec![1, 2], v);
            let fiber_dims = vec![2, 4];
            let morphisms = vec![match v {
                Variance::Projective => leading_block_morphism(2, 4),
                Variance::Direct => block_extension_morphism(2, 4),
            }];
            let seq = ConnectionFormSequence {
                forms: vec![ConnectionForm::zero(1, 2), ConnectionForm::zero(2, 4)],
                models: vec![
                    StructureMatrix::symmetric(Matrix::identity(2, 2)),
                    StructureMatrix::symmetric(Matrix::identity(4, 4)),
                ],
                base,
                fiber_dims,
                morphisms,
            };
            assert!(check_connection_coherence(&seq, &[vec![0.1, 0.2]], tol())
                .unwrap()
                .passed());
        }
    }
}
