//! Chart atlases with matrix-valued transition functions, the tensor action
//! of `GL(𝔼)`, isotropy groups, and the reduction criterion: an atlas
//! carries a tensor structure modelled on `𝕋` iff its transitions lie in the
//! isotropy group of `𝕋`.
//!
//! Transitions are evaluated at declared sample points only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::numkernel::{self, inertia, rank, Matrix, NumError, Tolerance};
use crate::report::Report;
use crate::tensor::{Role, StructureMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BundleError {
    #[error("matrix is singular")]
    Singular,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no orbit invariant implemented for {0}")]
    UnsupportedKind(String),
    #[error("unknown chart `{0}`")]
    UnknownChart(String),
    #[error("no transition between `{0}` and `{1}`")]
    MissingTransition(String, String),
    #[error("model tensor does not match its role tag")]
    InvalidSpec,
    #[error("no field on chart `{0}`")]
    MissingField(String),
}

impl From<NumError> for BundleError {
    fn from(e: NumError) -> Self {
        match e {
            NumError::DimensionMismatch { expected, found } => {
                BundleError::Shape(format!("expected {expected}, found {found}"))
            }
            _ => BundleError::Singular,
        }
    }
}

pub type Result<T> = std::result::Result<T, BundleError>;

pub type MatrixFn = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;

/// A matrix-valued function on a chart or overlap.
#[derive(Clone)]
pub enum MatrixField {
    Constant(Matrix),
    /// `x ↦ T₀ + Σ xᵢ·Tᵢ`
    Affine {
        constant: Matrix,
        linear: Vec<Matrix>,
    },
    Function(MatrixFn),
}

impl MatrixField {
    pub fn function(f: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static) -> Self {
        MatrixField::Function(Arc::new(f))
    }

    pub fn eval(&self, x: &[f64]) -> Matrix {
        match self {
            MatrixField::Constant(m) => m.clone(),
            MatrixField::Affine { constant, linear } => {
                let mut m = constant.clone();
                for (xi, ti) in x.iter().zip(linear) {
                    m += ti * *xi;
                }
                m
            }
            MatrixField::Function(f) => f(x),
        }
    }
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixField::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            MatrixField::Affine { constant, linear } => f
                .debug_struct("Affine")
                .field("constant", constant)
                .field("linear", linear)
                .finish(),
            MatrixField::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// An open box `∏ (lowerᵢ, upperᵢ)` in the base coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub name: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Chart {
    pub fn new(name: impl Into<String>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
        }
    }

    /// Closed-box membership, so samples on a shared face count for both.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.lower.len()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Overlap {
    pub first: String,
    pub second: String,
    pub samples: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleOverlap {
    pub charts: [String; 3],
    pub samples: Vec<Vec<f64>>,
}

/// Charts, sampled overlaps and transitions `T_αβ` of a rank-`fiber_dim`
/// bundle.
#[derive(Debug, Clone)]
pub struct ChartAtlas {
    pub fiber_dim: usize,
    pub charts: Vec<Chart>,
    pub overlaps: Vec<Overlap>,
    /// Declared triple overlaps; when empty they are derived from the
    /// pairwise samples.
    pub triples: Vec<TripleOverlap>,
    pub transitions: BTreeMap<(String, String), MatrixField>,
}

fn fmt_point(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
    format!("x=[{}]", parts.join(", "))
}

impl ChartAtlas {
    pub fn new(fiber_dim: usize) -> Self {
        Self {
            fiber_dim,
            charts: Vec::new(),
            overlaps: Vec::new(),
            triples: Vec::new(),
            transitions: BTreeMap::new(),
        }
    }

    pub fn add_chart(&mut self, chart: Chart) -> &mut Self {
        self.charts.push(chart);
        self
    }

    pub fn add_overlap(&mut self, first: &str, second: &str, samples: Vec<Vec<f64>>) -> &mut Self {
        self.overlaps.push(Overlap {
            first: first.into(),
            second: second.into(),
            samples,
        });
        self
    }

    pub fn add_triple(&mut self, charts: [&str; 3], samples: Vec<Vec<f64>>) -> &mut Self {
        self.triples.push(TripleOverlap {
            charts: charts.map(String::from),
            samples,
        });
        self
    }

    pub fn set_transition(&mut self, from: &str, to: &str, field: MatrixField) -> &mut Self {
        self.transitions.insert((from.into(), to.into()), field);
        self
    }

    pub fn chart(&self, name: &str) -> Result<&Chart> {
        self.charts
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| BundleError::UnknownChart(name.into()))
    }

    /// `T_αβ(x)`: `Id` on the diagonal; the inverse of `T_βα(x)` when only
    /// the reverse direction is declared.
    pub fn transition(&self, alpha: &str, beta: &str, x: &[f64]) -> Result<Matrix> {
        let key = (alpha.to_string(), beta.to_string());
        if let Some(t) = self.transitions.get(&key) {
            return Ok(t.eval(x));
        }
        if alpha == beta {
            return Ok(Matrix::identity(self.fiber_dim, self.fiber_dim));
        }
        let rev = (beta.to_string(), alpha.to_string());
        match self.transitions.get(&rev) {
            Some(t) => Ok(numkernel::inverse(&t.eval(x))?),
            None => Err(BundleError::MissingTransition(alpha.into(), beta.into())),
        }
    }

    fn overlap_samples(&self, a: &str, b: &str) -> Vec<Vec<f64>> {
        self.overlaps
            .iter()
            .filter(|o| (o.first == a && o.second == b) || (o.first == b && o.second == a))
            .flat_map(|o| o.samples.iter().cloned())
            .collect()
    }

    /// Declared triples, or every triple of pairwise-overlapping charts with
    /// the pairwise samples lying in all three boxes.
    pub fn triple_overlaps(&self) -> Vec<TripleOverlap> {
        if !self.triples.is_empty() {
            return self.triples.clone();
        }
        let names: Vec<&str> = self.charts.iter().map(|c| c.name.as_str()).collect();
        let mut out = Vec::new();
        for i in 0..names.len() {
            for j in i + 1..names.len() {
                for k in j + 1..names.len() {
                    let (a, b, c) = (names[i], names[j], names[k]);
                    let pairs = [(a, b), (b, c), (a, c)];
                    if pairs.iter().any(|(p, q)| self.overlap_samples(p, q).is_empty()) {
                        continue;
                    }
                    let boxes: Vec<&Chart> = [a, b, c].iter().filter_map(|n| self.chart(n).ok()).collect();
                    let mut samples: Vec<Vec<f64>> = Vec::new();
                    for (p, q) in pairs {
                        for x in self.overlap_samples(p, q) {
                            if boxes.iter().all(|ch| ch.contains(&x)) && !samples.contains(&x) {
                                samples.push(x);
                            }
                        }
                    }
                    if !samples.is_empty() {
                        out.push(TripleOverlap {
                            charts: [a.into(), b.into(), c.into()],
                            samples,
                        });
                    }
                }
            }
        }
        out
    }

    /// Number of connected components of the overlap graph.
    pub fn components(&self) -> usize {
        let index: BTreeMap<&str, usize> = self
            .charts
            .iter()
            .enumerate()
            .map(|(i, c)| (c.name.as_str(), i))
            .collect();
        let mut parent: Vec<usize> = (0..self.charts.len()).collect();
        fn find(p: &mut Vec<usize>, i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        for o in &self.overlaps {
            if let (Some(&a), Some(&b)) = (index.get(o.first.as_str()), index.get(o.second.as_str())) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
        (0..self.charts.len())
            .map(|i| find(&mut parent, i))
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Structural invariants: known chart names, nonempty samples inside
    /// both boxes, invertible transitions at every sample, `T_αα = Id`.
    pub fn validate(&self, tol: Tolerance) -> Report {
        let mut report = Report::new("atlas");
        let n = self.fiber_dim;
        for o in &self.overlaps {
            let label = format!("{}|{}", o.first, o.second);
            let (ca, cb) = match (self.chart(&o.first), self.chart(&o.second)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => {
                    report.push(format!("{label}: charts declared"), false, 1.0);
                    continue;
                }
            };
            report.push(format!("{label}: samples nonempty"), !o.samples.is_empty(), 0.0);
            let outside = o.samples.iter().filter(|x| !(ca.contains(x) && cb.contains(x))).count();
            report.push(format!("{label}: samples inside overlap"), outside == 0, outside as f64);
            let mut worst = 0.0_f64;
            let mut ok = true;
            for x in &o.samples {
                match self.transition(&o.first, &o.second, x) {
                    Ok(t) if t.nrows() == n && t.ncols() == n => {
                        let smin = t.singular_values().min();
                        if !(smin > tol.atol) {
                            ok = false;
                            worst = worst.max(1.0);
                        }
                    }
                    _ => {
                        ok = false;
                        worst = worst.max(1.0);
                    }
                }
            }
            report.push(format!("{label}: transitions invertible"), ok, worst);
        }
        for c in &self.charts {
            if let Some(t) = self.transitions.get(&(c.name.clone(), c.name.clone())) {
                let x = c.center();
                let r = (t.eval(&x) - Matrix::identity(n, n)).norm();
                report.check(format!("{0}|{0}: identity", c.name), r, tol.threshold(1.0));
            }
        }
        report
    }
}

/// The action of `GL(𝔼)` on tensors, with `B(u, v) = uᵀ·S·v`:
///
/// * (1,1): `T ↦ g·T·g⁻¹`, so isotropy of an endomorphism is commutation;
/// * (2,0): `S ↦ g⁻ᵀ·S·g⁻¹`, i.e. `B(g⁻¹u, g⁻¹v)`.
///
/// Both are left actions: `action(gh, T) = action(g, action(h, T))`.
pub fn tensor_action(g: &Matrix, t: &StructureMatrix) -> Result<StructureMatrix> {
    if !g.is_square() || g.nrows() != t.dim() {
        return Err(BundleError::DimensionMismatch {
            expected: t.dim(),
            found: g.nrows(),
        });
    }
    let g_inv = numkernel::inverse(g).map_err(|_| BundleError::Singular)?;
    let matrix = match t.role {
        Role::Endomorphism => g * &t.matrix * &g_inv,
        _ => g_inv.transpose() * &t.matrix * &g_inv,
    };
    Ok(StructureMatrix::new(matrix, t.role))
}

/// The isotropy group `G(𝕋) = {g : action(g, 𝕋) = 𝕋}` of a model tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotropyGroupSpec {
    pub model: StructureMatrix,
}

impl IsotropyGroupSpec {
    pub fn new(model: StructureMatrix, tol: Tolerance) -> Result<Self> {
        if !model.role_consistent(tol) {
            return Err(BundleError::InvalidSpec);
        }
        Ok(Self { model })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// `‖action(g, 𝕋) − 𝕋‖ / ‖𝕋‖`
    pub fn residual(&self, g: &Matrix) -> Result<f64> {
        let moved = tensor_action(g, &self.model)?;
        let scale = self.model.matrix.norm().max(f64::MIN_POSITIVE);
        Ok((moved.matrix - &self.model.matrix).norm() / scale)
    }
}

/// `‖action(g, 𝕋) − 𝕋‖ ≤ tol·‖𝕋‖`, with `tol` read as `atol + rtol`.
pub fn in_isotropy(g: &Matrix, spec: &IsotropyGroupSpec, tol: Tolerance) -> Result<bool> {
    Ok(spec.residual(g)? <= tol.threshold(1.0))
}

/// `T_αγ(x) = T_αβ(x)·T_βγ(x)` on every triple overlap (all orderings), and
/// `T_αβ(x)·T_βα(x) = Id` on every pairwise overlap.
pub fn check_cocycle(atlas: &ChartAtlas, tol: Tolerance) -> Report {
    let mut report = Report::new("cocycle");
    let n = atlas.fiber_dim;
    let id = Matrix::identity(n, n);
    if atlas.components() > 1 {
        report.note(format!(
            "overlap graph has {} connected components; conclusions hold per component",
            atlas.components()
        ));
    }
    for o in &atlas.overlaps {
        let label = format!("{}|{}", o.first, o.second);
        let mut worst = (0.0_f64, None);
        let mut failed = false;
        for x in &o.samples {
            match (
                atlas.transition(&o.first, &o.second, x),
                atlas.transition(&o.second, &o.first, x),
            ) {
                (Ok(ab), Ok(ba)) => {
                    let r = (&ab * &ba - &id).norm();
                    if r > tol.threshold(ab.norm() * ba.norm()) {
                        failed = true;
                    }
                    if r >= worst.0 {
                        worst = (r, Some(fmt_point(x)));
                    }
                }
                _ => {
                    failed = true;
                    worst = (f64::MAX, Some(fmt_point(x)));
                }
            }
        }
        report.push_at(format!("{label}: inverse pair"), !failed, worst.0, worst.1);
    }
    let triples = atlas.triple_overlaps();
    if triples.is_empty() {
        report.note("no triple overlaps; cocycle condition is vacuous");
    }
    const ORDERINGS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for t in &triples {
        let label = t.charts.join("|");
        let mut worst = (0.0_f64, None::<String>);
        let mut failed = false;
        for x in &t.samples {
            for ord in ORDERINGS {
                let [a, b, c] = ord.map(|i| t.charts[i].as_str());
                let res = (|| -> Result<(f64, f64)> {
                    let ac = atlas.transition(a, c, x)?;
                    let ab = atlas.transition(a, b, x)?;
                    let bc = atlas.transition(b, c, x)?;
                    let scale = ab.norm() * bc.norm();
                    Ok(((ac - ab * bc).norm(), scale))
                })();
                let (r, scale) = res.unwrap_or((f64::MAX, 0.0));
                if r > tol.threshold(scale) {
                    failed = true;
                }
                if r >= worst.0 {
                    worst = (r, Some(format!("{} ({a}, {b}, {c})", fmt_point(x))));
                }
            }
        }
        report.push_at(format!("{label}: cocycle"), !failed, worst.0, worst.1);
    }
    report
}

/// Every sampled transition value lies in `G(𝕋)`. The cocycle entries are
/// included since the criterion presupposes them.
pub fn check_reduction(atlas: &ChartAtlas, spec: &IsotropyGroupSpec, tol: Tolerance) -> Report {
    let mut report = Report::new("reduction");
    let cocycle = check_cocycle(atlas, tol);
    if !cocycle.passed() {
        report.note("cocycle condition fails; reduction verdict is not meaningful");
    }
    report.extend(cocycle);
    if spec.dim() != atlas.fiber_dim {
        report.push(
            "model dimension matches fiber",
            false,
            spec.dim().abs_diff(atlas.fiber_dim) as f64,
        );
        return report;
    }
    for o in &atlas.overlaps {
        let mut worst = (0.0_f64, None::<String>);
        let mut failed = false;
        for x in &o.samples {
            for (a, b) in [(&o.first, &o.second), (&o.second, &o.first)] {
                let r = atlas
                    .transition(a, b, x)
                    .and_then(|t| spec.residual(&t))
                    .unwrap_or(f64::MAX);
                if r > tol.threshold(1.0) {
                    failed = true;
                }
                if r >= worst.0 {
                    worst = (r, Some(format!("{} T_{a}{b}", fmt_point(x))));
                }
            }
        }
        report.push_at(
            format!("{}|{}: in isotropy", o.first, o.second),
            !failed,
            worst.0,
            worst.1,
        );
    }
    report
}

/// Per-chart tensor field `𝓣_α(x)`.
#[derive(Debug, Clone)]
pub struct LocalTensorField {
    pub role: Role,
    pub charts: BTreeMap<String, MatrixField>,
}

impl LocalTensorField {
    pub fn new(role: Role) -> Self {
        Self {
            role,
            charts: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, chart: &str, field: MatrixField) -> &mut Self {
        self.charts.insert(chart.into(), field);
        self
    }

    /// `𝓣_α = action(h_α(x), 𝕋)` for a chart-wise frame `h_α`.
    pub fn pushed_forward(model: &StructureMatrix, frames: &BTreeMap<String, MatrixField>) -> Result<Self> {
        let mut out = Self::new(model.role);
        for (name, h) in frames {
            let model = model.clone();
            let h = h.clone();
            out.set(
                name,
                MatrixField::function(move |x| {
                    tensor_action(&h.eval(x), &model)
                        .map(|s| s.matrix)
                        .unwrap_or_else(|_| Matrix::from_element(model.dim(), model.dim(), f64::NAN))
                }),
            );
        }
        Ok(out)
    }
}

/// Conjugation/congruence invariant that decides orbit membership.
#[derive(Debug, Clone, PartialEq)]
pub enum OrbitInvariant {
    /// Inertia `(p, q, z)` of a symmetric form.
    Signature(usize, usize, usize),
    /// Rank of a skew form.
    SkewRank(usize),
    /// `T² = −Id`.
    Complex,
    /// `T² = Id` with eigenspace dimensions `(plus, minus)`.
    ParaComplex(usize, usize),
    /// Ranks of `T, T², …, Tⁿ` for nilpotent `T`.
    NilpotentRanks(Vec<usize>),
}

fn square_defect(t: &Matrix, sign: f64) -> f64 {
    let n = t.nrows();
    (t * t - Matrix::identity(n, n) * sign).norm()
}

fn power_ranks(t: &Matrix, tol: Tolerance) -> Vec<usize> {
    let mut p = t.clone();
    let mut out = Vec::with_capacity(t.nrows());
    for _ in 0..t.nrows() {
        out.push(rank(&p, tol));
        p = &p * t;
    }
    out
}

pub fn orbit_invariant(t: &StructureMatrix, tol: Tolerance) -> Result<OrbitInvariant> {
    let m = &t.matrix;
    let n = m.nrows();
    let scale = (n as f64).sqrt();
    match t.role {
        Role::SymmetricForm => {
            let s = inertia(m, tol);
            Ok(OrbitInvariant::Signature(s.positive, s.negative, s.zero))
        }
        Role::SkewForm => Ok(OrbitInvariant::SkewRank(rank(m, tol))),
        Role::Form => Err(BundleError::UnsupportedKind("general (2,0) tensor".into())),
        Role::Endomorphism => {
            let thr = tol.threshold(scale * (1.0 + m.norm_squared()));
            if square_defect(m, -1.0) <= thr {
                return Ok(OrbitInvariant::Complex);
            }
            if square_defect(m, 1.0) <= thr {
                let id = Matrix::identity(n, n);
                let plus = n - rank(&(m - &id), tol);
                let minus = n - rank(&(m + &id), tol);
                return Ok(OrbitInvariant::ParaComplex(plus, minus));
            }
            let mut p = m.clone();
            for _ in 1..n {
                p = &p * m;
            }
            if p.norm() <= tol.threshold(m.norm().powi(n as i32)) {
                return Ok(OrbitInvariant::NilpotentRanks(power_ranks(m, tol)));
            }
            Err(BundleError::UnsupportedKind(
                "endomorphism that is neither (para-)complex nor nilpotent".into(),
            ))
        }
    }
}

/// Distance of `value` from the orbit class `inv`: zero on a match, else a
/// count or norm defect.
fn orbit_defect(inv: &OrbitInvariant, value: &Matrix, tol: Tolerance) -> f64 {
    let n = value.nrows();
    match inv {
        OrbitInvariant::Signature(p, q, z) => {
            let s = inertia(value, tol);
            (s.positive.abs_diff(*p) + s.negative.abs_diff(*q) + s.zero.abs_diff(*z)) as f64
        }
        OrbitInvariant::SkewRank(r) => rank(value, tol).abs_diff(*r) as f64,
        OrbitInvariant::Complex => square_defect(value, -1.0) / (n as f64).sqrt(),
        OrbitInvariant::ParaComplex(p, q) => {
            let sq = square_defect(value, 1.0) / (n as f64).sqrt();
            if sq > tol.threshold(1.0) {
                return sq;
            }
            let id = Matrix::identity(n, n);
            let plus = n - rank(&(value - &id), tol);
            let minus = n - rank(&(value + &id), tol);
            (plus.abs_diff(*p) + minus.abs_diff(*q)) as f64
        }
        OrbitInvariant::NilpotentRanks(ranks) => {
            let got = power_ranks(value, tol);
            got.iter().zip(ranks).map(|(a, b)| a.abs_diff(*b)).sum::<usize>() as f64
        }
    }
}

fn orbit_tolerance(inv: &OrbitInvariant, tol: Tolerance) -> f64 {
    match inv {
        OrbitInvariant::Complex | OrbitInvariant::ParaComplex(..) => tol.threshold(1.0),
        _ => 0.0,
    }
}

/// At every sample of every chart, `𝓣_α(x)` lies in the orbit of `𝕋`
/// under the tensor action. Chart samples are the chart center and the
/// overlap samples inside the chart.
pub fn check_locally_modelled(
    field: &LocalTensorField,
    atlas: &ChartAtlas,
    spec: &IsotropyGroupSpec,
    tol: Tolerance,
) -> Result<Report> {
    let inv = orbit_invariant(&spec.model, tol)?;
    let limit = orbit_tolerance(&inv, tol);
    let mut report = Report::new("locally modelled");
    if field.role.kind() != spec.model.role.kind() {
        report.push("field kind matches model", false, 1.0);
        return Ok(report);
    }
    for chart in &atlas.charts {
        let f = field
            .charts
            .get(&chart.name)
            .ok_or_else(|| BundleError::MissingField(chart.name.clone()))?;
        let mut samples = vec![chart.center()];
        for o in atlas
            .overlaps
            .iter()
            .filter(|o| o.first == chart.name || o.second == chart.name)
        {
            samples.extend(o.samples.iter().filter(|x| chart.contains(x)).cloned());
        }
        let mut failed = 0usize;
        for x in &samples {
            let value = f.eval(x);
            if value.nrows() != spec.dim() || value.ncols() != spec.dim() || value.iter().any(|v| !v.is_finite()) {
                report.push_at(
                    format!("{}: finite value", chart.name),
                    false,
                    f64::MAX,
                    Some(fmt_point(x)),
                );
                failed += 1;
                continue;
            }
            let d = orbit_defect(&inv, &value, tol);
            if d > limit {
                report.push_at(format!("{}: orbit", chart.name), false, d, Some(fmt_point(x)));
                failed += 1;
            }
        }
        if failed == 0 {
            report.push(format!("{}: orbit", chart.name), true, 0.0);
        }
    }
    Ok(report)
}
