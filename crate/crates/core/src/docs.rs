//! JSON input documents and their conversion into library values.
//!
//! Matrices are nested row-major arrays; subspace bases are lists of
//! vectors. Shape problems are [`DocError::Invalid`]; inputs that parse but
//! cannot be turned into the requested object (a degenerate form with no
//! splitting, say) are [`DocError::Construction`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{Chart, ChartAtlas, MatrixField};
use crate::calculus::{named, ChartField, DerivativeMode, Grid, StructureKind, TensorFieldOnChart};
use crate::compat::{CompatibleTriple, Flavor, Pair};
use crate::limits::{
    block_extension_morphism, leading_block_morphism, BondingSystem, CoherentSequence, ConnectionForm,
    ConnectionFormSequence, Variance,
};
use crate::linstruct::{
    BilinearForm, ComplexDecomposition, ComplexStructure, CotangentStructure, KreinMetric, LinError,
    ParaComplexStructure, Structure, Symmetry, SymplecticForm, TangentStructure,
};
use crate::loopspace::DiscretizedLoopSpace;
use crate::numkernel::{self, Matrix, Tolerance};
use crate::poly::PolyMatrix;
use crate::tensor::{Role, StructureMatrix};

/// Row-major matrix.
pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DocError {
    #[error("invalid document: {0}")]
    Invalid(String),
    #[error("cannot construct: {0}")]
    Construction(String),
}

pub type Result<T> = std::result::Result<T, DocError>;

fn invalid(msg: impl Into<String>) -> DocError {
    DocError::Invalid(msg.into())
}

pub fn matrix(rows: &Rows, what: &str) -> Result<Matrix> {
    if rows.is_empty() {
        return Err(invalid(format!("{what}: empty matrix")));
    }
    numkernel::from_rows(rows).map_err(|e| invalid(format!("{what}: {e}")))
}

fn square(rows: &Rows, n: usize, what: &str) -> Result<Matrix> {
    let m = matrix(rows, what)?;
    if m.shape() != (n, n) {
        return Err(invalid(format!(
            "{what}: expected {n}x{n}, found {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m)
}

/// Columns from a list of vectors of length `n`; an empty list is an
/// `n × 0` basis.
pub fn basis(vectors: &[Vec<f64>], n: usize, what: &str) -> Result<Matrix> {
    if let Some(v) = vectors.iter().find(|v| v.len() != n) {
        return Err(invalid(format!("{what}: vector of length {}, expected {n}", v.len())));
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{what}: non-finite entry")));
    }
    Ok(Matrix::from_fn(n, vectors.len(), |r, c| vectors[c][r]))
}

/// Columns as a list of vectors.
pub fn vectors(m: &Matrix) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

pub fn rows(m: &Matrix) -> Rows {
    numkernel::to_rows(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureDocKind {
    Complex,
    ParaComplex,
    Tangent,
    Symplectic,
    Krein,
    Cotangent,
    /// A symmetric bilinear form with no further structure.
    Symmetric,
    /// A skew bilinear form, possibly degenerate.
    Skew,
}

/// Optional splitting data; which fields apply depends on the kind:
/// `e1`, `e2`, `iso` (complex), `plus`, `minus` (krein), `complement`
/// (tangent), `lagrangian` and `complement` (cotangent).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e1: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e2: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iso: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plus: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minus: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lagrangian: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complement: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureDoc {
    pub kind: StructureDocKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub matrix: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionDoc>,
}

fn construction(e: LinError) -> DocError {
    match e {
        LinError::Shape(s) => DocError::Invalid(s),
        other => DocError::Construction(other.to_string()),
    }
}

impl StructureDoc {
    pub fn new(kind: StructureDocKind, m: &Matrix) -> Self {
        Self {
            kind,
            dim: Some(m.nrows()),
            matrix: rows(m),
            decomposition: None,
        }
    }

    fn checked_matrix(&self) -> Result<Matrix> {
        let m = matrix(&self.matrix, "matrix")?;
        if !m.is_square() {
            return Err(invalid(format!(
                "matrix must be square, found {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if let Some(d) = self.dim {
            if d != m.nrows() {
                return Err(invalid(format!(
                    "dim {d} does not match a {}x{} matrix",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(m)
    }

    pub fn role(&self) -> Role {
        match self.kind {
            StructureDocKind::Complex | StructureDocKind::ParaComplex | StructureDocKind::Tangent => Role::Endomorphism,
            StructureDocKind::Symplectic | StructureDocKind::Cotangent | StructureDocKind::Skew => Role::SkewForm,
            StructureDocKind::Krein | StructureDocKind::Symmetric => Role::SymmetricForm,
        }
    }

    pub fn to_structure_matrix(&self) -> Result<StructureMatrix> {
        Ok(StructureMatrix::new(self.checked_matrix()?, self.role()))
    }

    /// Without decomposition data the library's canonical splitting is
    /// used where one exists; a complex structure that cannot be split is
    /// kept undecomposed so validation can report why.
    pub fn to_structure(&self, tol: Tolerance) -> Result<Structure> {
        let m = self.checked_matrix()?;
        let n = m.nrows();
        let dec = self.decomposition.clone().unwrap_or_default();
        let structure: Structure = match self.kind {
            StructureDocKind::Complex => {
                let c = ComplexStructure::new(m).map_err(construction)?;
                match (&dec.e1, &dec.e2) {
                    (Some(e1), Some(e2)) => {
                        let e1 = basis(e1, n, "e1")?;
                        let e2 = basis(e2, n, "e2")?;
                        let iso = match &dec.iso {
                            Some(r) => square(r, e1.ncols(), "iso")?,
                            None => Matrix::identity(e1.ncols(), e2.ncols()),
                        };
                        c.with_decomposition(ComplexDecomposition { e1, e2, iso })
                            .map_err(construction)?
                            .into()
                    }
                    (None, None) => c.clone().decompose(tol).unwrap_or(c).into(),
                    _ => return Err(invalid("complex decomposition needs both e1 and e2")),
                }
            }
            StructureDocKind::ParaComplex => ParaComplexStructure::from_matrix(m, tol).map_err(construction)?.into(),
            StructureDocKind::Tangent => {
                let t = TangentStructure::from_matrix(m, tol).map_err(construction)?;
                match &dec.complement {
                    Some(k) => t
                        .with_complement(basis(k, n, "complement")?)
                        .map_err(construction)?
                        .into(),
                    None => t.into(),
                }
            }
            StructureDocKind::Symplectic => SymplecticForm::new(m).map_err(construction)?.into(),
            StructureDocKind::Krein => match (&dec.plus, &dec.minus) {
                (Some(p), Some(q)) => KreinMetric::new(m, basis(p, n, "plus")?, basis(q, n, "minus")?)
                    .map_err(construction)?
                    .into(),
                (None, None) => KreinMetric::from_matrix(m, tol).map_err(construction)?.into(),
                _ => return Err(invalid("krein decomposition needs both plus and minus")),
            },
            StructureDocKind::Cotangent => {
                let omega = SymplecticForm::new(m).map_err(construction)?;
                match (&dec.lagrangian, &dec.complement) {
                    (Some(l), Some(k)) => {
                        CotangentStructure::new(omega, basis(l, n, "lagrangian")?, basis(k, n, "complement")?)
                            .map_err(construction)?
                            .into()
                    }
                    (None, None) => CotangentStructure::from_symplectic(omega, tol)
                        .map_err(construction)?
                        .into(),
                    _ => return Err(invalid("cotangent decomposition needs both lagrangian and complement")),
                }
            }
            StructureDocKind::Symmetric => BilinearForm::new(m, Symmetry::Symmetric).map_err(construction)?.into(),
            StructureDocKind::Skew => BilinearForm::new(m, Symmetry::Skew).map_err(construction)?.into(),
        };
        Ok(structure)
    }
}

/// Two of `metric`, `omega`, `structure`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairDoc {
    pub flavor: Flavor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<Rows>,
}

impl PairDoc {
    pub fn to_pair(&self) -> Result<Pair> {
        let m = |r: &Rows, what| matrix(r, what);
        match (&self.metric, &self.omega, &self.structure) {
            (Some(g), None, Some(t)) => Ok(Pair::MetricStructure {
                metric: m(g, "metric")?,
                structure: m(t, "structure")?,
            }),
            (None, Some(w), Some(t)) => Ok(Pair::OmegaStructure {
                omega: m(w, "omega")?,
                structure: m(t, "structure")?,
            }),
            (Some(g), Some(w), None) => Ok(Pair::MetricOmega {
                metric: m(g, "metric")?,
                omega: m(w, "omega")?,
            }),
            _ => Err(invalid("exactly two of metric, omega and structure are required")),
        }
    }
}

/// A complete triple, as emitted by triple completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleDoc {
    pub flavor: Flavor,
    pub omega: Rows,
    pub metric: Rows,
    pub structure: Rows,
}

impl TripleDoc {
    pub fn from_triple(t: &CompatibleTriple) -> Self {
        Self {
            flavor: t.flavor,
            omega: rows(&t.omega),
            metric: rows(&t.metric),
            structure: rows(&t.structure),
        }
    }

    pub fn to_triple(&self) -> Result<CompatibleTriple> {
        let omega = matrix(&self.omega, "omega")?;
        let n = omega.nrows();
        Ok(CompatibleTriple {
            omega: square(&self.omega, n, "omega")?,
            metric: square(&self.metric, n, "metric")?,
            structure: square(&self.structure, n, "structure")?,
            flavor: self.flavor,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartDoc {
    pub name: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapDoc {
    pub charts: [String; 2],
    pub samples: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleOverlapDoc {
    pub charts: [String; 3],
    pub samples: Vec<Vec<f64>>,
}

/// Exactly one of `constant` and `affine_field` (`[T₀, T₁, …]` read as
/// `x ↦ T₀ + Σ xᵢ·Tᵢ`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionDoc {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affine_field: Option<Vec<Rows>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtlasDoc {
    pub fiber_dim: usize,
    pub charts: Vec<ChartDoc>,
    pub overlaps: Vec<OverlapDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub triples: Vec<TripleOverlapDoc>,
    pub transitions: Vec<TransitionDoc>,
}

impl AtlasDoc {
    pub fn to_atlas(&self) -> Result<ChartAtlas> {
        let base_dim = self
            .charts
            .first()
            .map(|c| c.lower.len())
            .ok_or_else(|| invalid("atlas has no charts"))?;
        let d = self.fiber_dim;
        let mut atlas = ChartAtlas::new(d);
        for c in &self.charts {
            if c.lower.len() != base_dim || c.upper.len() != base_dim {
                return Err(invalid(format!(
                    "chart `{}`: box corners must have length {base_dim}",
                    c.name
                )));
            }
            atlas.add_chart(Chart::new(c.name.clone(), c.lower.clone(), c.upper.clone()));
        }
        let known = |name: &str| self.charts.iter().any(|c| c.name == name);
        let check_samples = |names: &[String], samples: &[Vec<f64>]| -> Result<()> {
            if let Some(n) = names.iter().find(|n| !known(n)) {
                return Err(invalid(format!("unknown chart `{n}`")));
            }
            if samples.iter().any(|s| s.len() != base_dim) {
                return Err(invalid(format!(
                    "samples on {} must have length {base_dim}",
                    names.join("|")
                )));
            }
            Ok(())
        };
        for o in &self.overlaps {
            check_samples(&o.charts, &o.samples)?;
            atlas.add_overlap(&o.charts[0], &o.charts[1], o.samples.clone());
        }
        for t in &self.triples {
            check_samples(&t.charts, &t.samples)?;
            atlas.add_triple([&t.charts[0], &t.charts[1], &t.charts[2]], t.samples.clone());
        }
        for t in &self.transitions {
            check_samples(&[t.from.clone(), t.to.clone()], &[])?;
            let what = format!("transition {}|{}", t.from, t.to);
            let field = match (&t.constant, &t.affine_field) {
                (Some(c), None) => MatrixField::Constant(square(c, d, &what)?),
                (None, Some(coeffs)) => {
                    if coeffs.len() != base_dim + 1 {
                        return Err(invalid(format!(
                            "{what}: affine_field needs {} coefficient matrices",
                            base_dim + 1
                        )));
                    }
                    let ms = coeffs.iter().map(|r| square(r, d, &what)).collect::<Result<Vec<_>>>()?;
                    MatrixField::Affine {
                        constant: ms[0].clone(),
                        linear: ms[1..].to_vec(),
                    }
                }
                _ => return Err(invalid(format!("{what}: exactly one of constant and affine_field"))),
            };
            atlas.set_transition(&t.from, &t.to, field);
        }
        Ok(atlas)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

impl GridDoc {
    pub fn to_grid(&self, dim: usize) -> Result<Grid> {
        if self.lower.len() != dim || self.upper.len() != dim || self.counts.len() != dim {
            return Err(invalid(format!("grid must have {dim} axes")));
        }
        if self.counts.contains(&0) {
            return Err(invalid("grid counts must be positive"));
        }
        Ok(Grid::new(self.lower.clone(), self.upper.clone(), self.counts.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Polynomial,
    FiniteDifference,
}

/// Source of a tensor field on a chart, tagged by `source`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSource {
    /// Polynomial entries in the chart coordinates.
    Polynomial {
        entries: PolyMatrix,
    },
    Constant {
        matrix: Rows,
    },
    /// `DΦᵀ·η·DΦ` for a polynomial map `Φ` (a column) and constant `η`.
    PullbackFlat {
        map: PolyMatrix,
        matrix: Rows,
    },
    /// `DΦ⁻¹·T₀·DΦ`; finite differences only.
    PullbackStructure {
        map: PolyMatrix,
        matrix: Rows,
    },
    /// Round unit sphere metric in stereographic coordinates; finite
    /// differences only.
    SphereStereographic {
        dim: usize,
    },
    /// Non-integrable para-complex field on `ℝ^{2k}`.
    TwistedParaComplex {
        k: usize,
        c: f64,
    },
}

impl FieldSource {
    fn exact(&self) -> bool {
        !matches!(
            self,
            FieldSource::PullbackStructure { .. } | FieldSource::SphereStereographic { .. }
        )
    }

    fn check_map(map: &PolyMatrix) -> Result<()> {
        if map.cols != 1 || map.rows != map.nvars || map.entries.len() != map.rows {
            return Err(invalid("map must be a column of nvars polynomials"));
        }
        Ok(())
    }

    /// `mode` defaults to exact polynomial derivatives when the source
    /// supports them.
    pub fn build(&self, role: Role, mode: Option<ModeName>, step: f64) -> Result<TensorFieldOnChart> {
        let fd = DerivativeMode::FiniteDifference { step };
        let mode = match mode {
            Some(ModeName::FiniteDifference) => fd,
            Some(ModeName::Polynomial) if !self.exact() => {
                return Err(invalid("this field source supports finite differences only"))
            }
            Some(ModeName::Polynomial) => DerivativeMode::Polynomial,
            None if self.exact() => DerivativeMode::Polynomial,
            None => fd,
        };
        let field = match self {
            FieldSource::Polynomial { entries } => {
                if entries.rows != entries.nvars
                    || entries.cols != entries.nvars
                    || entries.entries.len() != entries.rows * entries.cols
                {
                    return Err(invalid("polynomial field must be square with one row per coordinate"));
                }
                TensorFieldOnChart::new(ChartField::polynomial(entries.clone(), mode), role)
                    .map_err(|e| DocError::Construction(e.to_string()))?
            }
            FieldSource::Constant { matrix: m } => {
                let m = matrix(m, "matrix")?;
                if !m.is_square() {
                    return Err(invalid("constant field must be square"));
                }
                named::constant(&m, role, mode)
            }
            FieldSource::PullbackFlat { map, matrix: m } => {
                Self::check_map(map)?;
                named::pullback_flat(map, &square(m, map.nvars, "matrix")?, mode)
            }
            FieldSource::PullbackStructure { map, matrix: m } => {
                Self::check_map(map)?;
                named::pullback_structure(map, &square(m, map.nvars, "matrix")?, step)
            }
            FieldSource::SphereStereographic { dim } => {
                if *dim == 0 {
                    return Err(invalid("dim must be positive"));
                }
                named::sphere_stereographic(*dim, step)
            }
            FieldSource::TwistedParaComplex { k, c } => {
                if *k < 2 {
                    return Err(invalid("twisted_para_complex needs k >= 2"));
                }
                named::twisted_para_complex(*k, *c, mode)
            }
        };
        if field.role != role {
            return Err(invalid(format!(
                "field source has role {:?}, expected {:?}",
                field.role, role
            )));
        }
        Ok(field)
    }
}

/// Structure field for the Nijenhuis check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDoc {
    pub kind: StructureKind,
    pub field: FieldSource,
    pub grid: GridDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeName>,
}

/// Metric field for the curvature check. With `expected_sectional` the
/// sectional curvatures are compared against that constant (within
/// `sectional_tolerance`, default `1e-4`) instead of checking flatness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricDoc {
    pub field: FieldSource,
    pub grid: GridDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_sectional: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sectional_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelDoc {
    pub role: Role,
    pub matrix: Rows,
}

/// Bonding data shared by both tower documents. Without `maps` the tower
/// is the coordinate-padding one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BondingDoc {
    pub dims: Vec<usize>,
    pub variance: Variance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maps: Option<Vec<Rows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projections: Option<Vec<Rows>>,
}

impl BondingDoc {
    pub fn to_bonding(&self) -> Result<BondingSystem> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(invalid("dims must be nonempty and positive"));
        }
        let Some(maps) = &self.maps else {
            if self.projections.is_some() {
                return Err(invalid("projections given without maps"));
            }
            return Ok(BondingSystem::padded(self.dims.clone(), self.variance));
        };
        let shaped = |r: &Rows, rows: usize, cols: usize, what: String| -> Result<Matrix> {
            let m = matrix(r, &what)?;
            if m.shape() != (rows, cols) {
                return Err(invalid(format!(
                    "{what}: expected {rows}x{cols}, found {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            Ok(m)
        };
        if maps.len() + 1 != self.dims.len() {
            return Err(invalid(format!(
                "{} levels need {} maps",
                self.dims.len(),
                self.dims.len() - 1
            )));
        }
        let mut consecutive = Vec::new();
        for (k, (r, w)) in maps.iter().zip(self.dims.windows(2)).enumerate() {
            let (rows, cols) = match self.variance {
                Variance::Projective => (w[0], w[1]),
                Variance::Direct => (w[1], w[0]),
            };
            consecutive.push(shaped(r, rows, cols, format!("map {k}"))?);
        }
        let projections = match &self.projections {
            Some(ps) => {
                if ps.len() != maps.len() {
                    return Err(invalid("one projection per map"));
                }
                let mut out = Vec::new();
                for (k, (r, w)) in ps.iter().zip(self.dims.windows(2)).enumerate() {
                    out.push(shaped(r, w[0], w[1], format!("projection {k}"))?);
                }
                Some(out)
            }
            None => None,
        };
        BondingSystem::from_consecutive(self.dims.clone(), self.variance, consecutive, projections)
            .map_err(|e| invalid(e.to_string()))
    }
}

fn level_matrices(levels: &[LevelDoc], dims: &[usize], what: &str) -> Result<Vec<StructureMatrix>> {
    if levels.len() != dims.len() {
        return Err(invalid(format!("{} {what} for {} levels", levels.len(), dims.len())));
    }
    levels
        .iter()
        .zip(dims)
        .enumerate()
        .map(|(k, (l, &d))| {
            Ok(StructureMatrix::new(
                square(&l.matrix, d, &format!("{what} at level {k}"))?,
                l.role,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TowerDoc {
    #[serde(flatten)]
    pub bonding: BondingDoc,
    pub structures: Vec<LevelDoc>,
}

impl TowerDoc {
    pub fn to_sequence(&self) -> Result<CoherentSequence> {
        let b = self.bonding.to_bonding()?;
        let levels = level_matrices(&self.structures, &b.dims, "structure")?;
        CoherentSequence::new(b, levels).map_err(|e| invalid(e.to_string()))
    }
}

/// `constant[a]` and `linear[a][b]` as in [`ConnectionForm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormDoc {
    pub constant: Vec<Rows>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub linear: Vec<Vec<Rows>>,
}

/// Without `morphisms` the standard ones are used: leading blocks
/// (projective) or block extension by zero (direct).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionTowerDoc {
    #[serde(flatten)]
    pub bonding: BondingDoc,
    pub fiber_dims: Vec<usize>,
    pub forms: Vec<FormDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub morphisms: Option<Vec<Rows>>,
    pub models: Vec<LevelDoc>,
    /// Points of the top-level base.
    pub samples: Vec<Vec<f64>>,
}

impl ConnectionTowerDoc {
    pub fn to_sequence(&self) -> Result<ConnectionFormSequence> {
        let base = self.bonding.to_bonding()?;
        let n = base.levels();
        if self.fiber_dims.len() != n || self.forms.len() != n {
            return Err(invalid("fiber_dims and forms need one entry per level"));
        }
        let top = base.dims[n - 1];
        if self.samples.iter().any(|s| s.len() != top) {
            return Err(invalid(format!("samples must have length {top}")));
        }
        let mut forms = Vec::new();
        for (k, f) in self.forms.iter().enumerate() {
            let (b, d) = (base.dims[k], self.fiber_dims[k]);
            let what = format!("form at level {k}");
            if f.constant.len() != b
                || !(f.linear.is_empty() || f.linear.len() == b && f.linear.iter().all(|r| r.len() == b))
            {
                return Err(invalid(format!(
                    "{what}: coefficient counts must match base dimension {b}"
                )));
            }
            forms.push(ConnectionForm {
                fiber_dim: d,
                constant: f.constant.iter().map(|r| square(r, d, &what)).collect::<Result<_>>()?,
                linear: f
                    .linear
                    .iter()
                    .map(|row| row.iter().map(|r| square(r, d, &what)).collect::<Result<Vec<_>>>())
                    .collect::<Result<_>>()?,
            });
        }
        let morphisms = match &self.morphisms {
            Some(ms) => ms
                .iter()
                .enumerate()
                .map(|(k, r)| matrix(r, &format!("morphism {k}")))
                .collect::<Result<_>>()?,
            None => self
                .fiber_dims
                .windows(2)
                .map(|w| match base.variance {
                    Variance::Projective => leading_block_morphism(w[0], w[1]),
                    Variance::Direct => block_extension_morphism(w[0], w[1]),
                })
                .collect(),
        };
        let models = level_matrices(&self.models, &self.fiber_dims, "model")?;
        Ok(ConnectionFormSequence {
            base,
            fiber_dims: self.fiber_dims.clone(),
            forms,
            morphisms,
            models,
        })
    }
}

/// Target of a loop document: the canonical triple on `ℝ^{2m}` or an
/// explicit one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetDoc {
    Canonical { half_dim: usize, flavor: Flavor },
    Triple(TripleDoc),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopDoc {
    pub target: TargetDoc,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(rename = "loop", default, skip_serializing_if = "Option::is_none")]
    pub base_loop: Option<Rows>,
    /// `samples × dim` arrays.
    pub tangents: Vec<Rows>,
}

impl LoopDoc {
    pub fn to_space(&self) -> Result<(DiscretizedLoopSpace, Vec<Matrix>)> {
        if self.samples == 0 {
            return Err(invalid("samples must be positive"));
        }
        let target = match &self.target {
            TargetDoc::Canonical { half_dim, flavor } if *half_dim > 0 => {
                CompatibleTriple::canonical(*half_dim, *flavor)
            }
            TargetDoc::Canonical { .. } => return Err(invalid("half_dim must be positive")),
            TargetDoc::Triple(t) => t.to_triple()?,
        };
        let dim = target.dim();
        let array = |r: &Rows, what: &str| -> Result<Matrix> {
            let m = matrix(r, what)?;
            if m.shape() != (self.samples, dim) {
                return Err(invalid(format!("{what}: expected {}x{dim}", self.samples)));
            }
            Ok(m)
        };
        let mut space = DiscretizedLoopSpace::new(target, self.samples);
        if let Some(w) = &self.weights {
            space = space.with_weights(w.clone()).map_err(|e| invalid(e.to_string()))?;
        }
        if let Some(l) = &self.base_loop {
            space = space.with_loop(array(l, "loop")?).map_err(|e| invalid(e.to_string()))?;
        }
        let tangents = self
            .tangents
            .iter()
            .enumerate()
            .map(|(k, t)| array(t, &format!("tangent {k}")))
            .collect::<Result<_>>()?;
        Ok((space, tangents))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::{canonical_complex, canonical_skew};

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn structure_doc_round_trip_and_validation() {
        let doc = StructureDoc::new(StructureDocKind::Complex, &canonical_complex(2));
        let text = serde_json::to_string(&doc).unwrap();
        let back: StructureDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);
        assert!(back.to_structure(tol()).unwrap().validate(tol()).passed());
    }

    #[test]
    fn structure_doc_rejects_bad_shapes() {
        let bad = r#"{"kind":"symplectic","dim":3,"matrix":[[0,1],[-1,0]]}"#;
        let doc: StructureDoc = serde_json::from_str(bad).unwrap();
        assert!(matches!(doc.to_structure(tol()), Err(DocError::Invalid(_))));
        assert!(serde_json::from_str::<StructureDoc>(r#"{"kind":"complex","matrix":[[0]],"extra":1}"#).is_err());
        let ragged: StructureDoc = serde_json::from_str(r#"{"kind":"complex","matrix":[[0,1],[1]]}"#).unwrap();
        assert!(matches!(ragged.to_structure(tol()), Err(DocError::Invalid(_))));
    }

    #[test]
    fn odd_symplectic_doc_validates_as_failure() {
        let doc: StructureDoc =
            serde_json::from_str(r#"{"kind":"symplectic","matrix":[[0,1,0],[-1,0,0],[0,0,0]]}"#).unwrap();
        let report = doc.to_structure(tol()).unwrap().validate(tol());
        assert!(!report.passed());
    }

    #[test]
    fn pair_doc_needs_exactly_two() {
        let doc = PairDoc {
            flavor: Flavor::Kahler,
            metric: Some(rows(&Matrix::identity(2, 2))),
            omega: Some(rows(&canonical_skew(1))),
            structure: None,
        };
        assert!(matches!(doc.to_pair().unwrap(), Pair::MetricOmega { .. }));
        let three = PairDoc {
            structure: Some(rows(&canonical_complex(1))),
            ..doc
        };
        assert!(three.to_pair().is_err());
    }

    #[test]
    fn atlas_doc_builds_affine_transitions() {
        let text = r#"{
            "fiber_dim": 2,
            "charts": [{"name": "a", "lower": [0], "upper": [2]}, {"name": "b", "lower": [1], "upper": [3]}],
            "overlaps": [{"charts": ["a", "b"], "samples": [[1.5]]}],
            "transitions": [{"from": "a", "to": "b", "affine_field": [[[1, 0], [0, 1]], [[0, 1], [0, 0]]]}]
        }"#;
        let atlas = serde_json::from_str::<AtlasDoc>(text).unwrap().to_atlas().unwrap();
        let t = atlas.transition("a", "b", &[2.0]).unwrap();
        assert_eq!(t, Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]));
    }

    #[test]
    fn tower_doc_defaults_to_padding() {
        let text = r#"{"dims": [1, 2], "variance": "direct",
            "structures": [{"role": "endomorphism", "matrix": [[2]]}, {"role": "endomorphism", "matrix": [[2, 0], [0, 5]]}]}"#;
        let seq = serde_json::from_str::<TowerDoc>(text).unwrap().to_sequence().unwrap();
        assert_eq!(seq.pair_residual(0, 1).unwrap(), 0.0);
    }

    #[test]
    fn field_source_mode_rules() {
        let sphere = FieldSource::SphereStereographic { dim: 2 };
        assert!(sphere
            .build(Role::SymmetricForm, Some(ModeName::Polynomial), 1e-5)
            .is_err());
        let f = sphere.build(Role::SymmetricForm, None, 1e-5).unwrap();
        assert!(matches!(f.mode(), DerivativeMode::FiniteDifference { .. }));
        let twisted = FieldSource::TwistedParaComplex { k: 2, c: 1.0 };
        assert_eq!(
            twisted.build(Role::Endomorphism, None, 1e-5).unwrap().mode(),
            DerivativeMode::Polynomial
        );
        assert!(twisted.build(Role::SymmetricForm, None, 1e-5).is_err());
    }
}
