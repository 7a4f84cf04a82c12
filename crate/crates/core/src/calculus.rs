//! Differential computations on a single chart: Lie brackets, Nijenhuis
//! tensors, the Levi-Civita connection of a (pseudo-)metric, curvature,
//! covariant derivatives of structures and parallel transport.
//!
//! Fields carry a derivative mode. `FiniteDifference { step: h }` uses
//! central differences with step `h` for first derivatives and `10·h` for
//! second derivatives; `Polynomial` differentiates exact coefficients.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkernel::{self, rank, Matrix, Tolerance, Vector};
use crate::poly::PolyMatrix;
use crate::report::Report;
use crate::tensor::Role;

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Ratio between the second-derivative step and the first-derivative step;
/// keeps the `ε/H²` rounding term of second differences near `1e−8`.
pub const SECOND_STEP_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalcError {
    #[error("fields have different derivative modes")]
    ModeMismatch,
    #[error("polynomial mode requires a polynomial evaluator")]
    NotPolynomial,
    #[error("invalid structure at {x:?}: {reason}")]
    InvalidStructureAtPoint { x: Vec<f64>, reason: String },
    #[error("degenerate metric at {x:?}")]
    DegenerateMetricAtPoint { x: Vec<f64> },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("expected a {expected} field")]
    WrongKind { expected: &'static str },
}

pub type Result<T> = std::result::Result<T, CalcError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    FiniteDifference { step: f64 },
    Polynomial,
}

impl Default for DerivativeMode {
    fn default() -> Self {
        DerivativeMode::FiniteDifference { step: DEFAULT_FD_STEP }
    }
}

pub type PointFn = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;

#[derive(Clone)]
pub enum Evaluator {
    Polynomial(PolyMatrix),
    Function(PointFn),
}

impl fmt::Debug for Evaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Evaluator::Polynomial(p) => f.debug_tuple("Polynomial").field(&p.degree()).finish(),
            Evaluator::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// A matrix-valued function of `nvars` chart coordinates.
#[derive(Debug, Clone)]
pub struct ChartField {
    evaluator: Evaluator,
    rows: usize,
    cols: usize,
    nvars: usize,
    mode: DerivativeMode,
}

fn shift(x: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &(i, d) in moves {
        y[i] += d;
    }
    y
}

impl ChartField {
    pub fn polynomial(p: PolyMatrix, mode: DerivativeMode) -> Self {
        Self {
            rows: p.rows,
            cols: p.cols,
            nvars: p.nvars,
            evaluator: Evaluator::Polynomial(p),
            mode,
        }
    }

    pub fn function(
        nvars: usize,
        rows: usize,
        cols: usize,
        step: f64,
        f: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            evaluator: Evaluator::Function(Arc::new(f)),
            rows,
            cols,
            nvars,
            mode: DerivativeMode::FiniteDifference { step },
        }
    }

    pub fn constant(m: &Matrix, nvars: usize, mode: DerivativeMode) -> Self {
        Self::polynomial(PolyMatrix::constant(m, nvars), mode)
    }

    pub fn with_mode(mut self, mode: DerivativeMode) -> Result<Self> {
        if mode == DerivativeMode::Polynomial && !matches!(self.evaluator, Evaluator::Polynomial(_)) {
            return Err(CalcError::NotPolynomial);
        }
        self.mode = mode;
        Ok(self)
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn polynomial_form(&self) -> Option<&PolyMatrix> {
        match &self.evaluator {
            Evaluator::Polynomial(p) => Some(p),
            Evaluator::Function(_) => None,
        }
    }

    pub fn value(&self, x: &[f64]) -> Matrix {
        match &self.evaluator {
            Evaluator::Polynomial(p) => p.eval(x),
            Evaluator::Function(f) => f(x),
        }
    }

    /// `∂ᵢF(x)`
    pub fn partial(&self, i: usize, x: &[f64]) -> Result<Matrix> {
        match (self.mode, &self.evaluator) {
            (DerivativeMode::Polynomial, Evaluator::Polynomial(p)) => Ok(p.derivative(i).eval(x)),
            (DerivativeMode::Polynomial, Evaluator::Function(_)) => Err(CalcError::NotPolynomial),
            (DerivativeMode::FiniteDifference { step: h }, _) => {
                let plus = self.value(&shift(x, &[(i, h)]));
                let minus = self.value(&shift(x, &[(i, -h)]));
                Ok((plus - minus) / (2.0 * h))
            }
        }
    }

    /// `∂ᵢ∂ⱼF(x)`
    pub fn second_partial(&self, i: usize, j: usize, x: &[f64]) -> Result<Matrix> {
        match (self.mode, &self.evaluator) {
            (DerivativeMode::Polynomial, Evaluator::Polynomial(p)) => Ok(p.derivative(i).derivative(j).eval(x)),
            (DerivativeMode::Polynomial, Evaluator::Function(_)) => Err(CalcError::NotPolynomial),
            (DerivativeMode::FiniteDifference { step }, _) => {
                let h = SECOND_STEP_FACTOR * step;
                if i == j {
                    let plus = self.value(&shift(x, &[(i, h)]));
                    let minus = self.value(&shift(x, &[(i, -h)]));
                    Ok((plus + minus - self.value(x) * 2.0) / (h * h))
                } else {
                    let pp = self.value(&shift(x, &[(i, h), (j, h)]));
                    let pm = self.value(&shift(x, &[(i, h), (j, -h)]));
                    let mp = self.value(&shift(x, &[(i, -h), (j, h)]));
                    let mm = self.value(&shift(x, &[(i, -h), (j, -h)]));
                    Ok((pp - pm - mp + mm) / (4.0 * h * h))
                }
            }
        }
    }

    fn partials(&self, x: &[f64]) -> Result<Vec<Matrix>> {
        (0..self.nvars).map(|i| self.partial(i, x)).collect()
    }
}

/// A vector field on the chart (a column-valued [`ChartField`]).
#[derive(Debug, Clone)]
pub struct VectorField(pub ChartField);

impl VectorField {
    pub fn new(field: ChartField) -> Result<Self> {
        if field.cols != 1 || field.rows != field.nvars {
            return Err(CalcError::Shape(format!(
                "vector field must be {}×1, got {}×{}",
                field.nvars, field.rows, field.cols
            )));
        }
        Ok(Self(field))
    }

    pub fn constant(v: &[f64], mode: DerivativeMode) -> Self {
        Self(ChartField::constant(
            &Matrix::from_column_slice(v.len(), 1, v),
            v.len(),
            mode,
        ))
    }

    pub fn polynomial(p: PolyMatrix, mode: DerivativeMode) -> Result<Self> {
        Self::new(ChartField::polynomial(p, mode))
    }

    /// The coordinate field `∂ᵢ`.
    pub fn coordinate(n: usize, i: usize, mode: DerivativeMode) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Self::constant(&v, mode)
    }

    pub fn value(&self, x: &[f64]) -> Vector {
        self.0.value(x).column(0).into_owned()
    }

    /// Jacobian `DX(x)`, column `i` is `∂ᵢX`.
    pub fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let cols: Vec<Vector> = (0..self.0.nvars)
            .map(|i| self.0.partial(i, x).map(|m| m.column(0).into_owned()))
            .collect::<Result<_>>()?;
        Ok(Matrix::from_columns(&cols))
    }

    fn jet(&self, x: &[f64]) -> Result<Jet> {
        Ok(Jet {
            value: self.value(x),
            jacobian: self.jacobian(x)?,
        })
    }
}

/// A (1,1) or (2,0) tensor field on the chart.
#[derive(Debug, Clone)]
pub struct TensorFieldOnChart {
    pub field: ChartField,
    pub role: Role,
}

impl TensorFieldOnChart {
    pub fn new(field: ChartField, role: Role) -> Result<Self> {
        if field.rows != field.cols || field.rows != field.nvars {
            return Err(CalcError::Shape(format!(
                "tensor field must be {0}×{0}, got {1}×{2}",
                field.nvars, field.rows, field.cols
            )));
        }
        Ok(Self { field, role })
    }

    pub fn dim(&self) -> usize {
        self.field.nvars
    }

    pub fn value(&self, x: &[f64]) -> Matrix {
        self.field.value(x)
    }

    pub fn mode(&self) -> DerivativeMode {
        self.field.mode
    }
}

/// Value and Jacobian of a vector field at a point.
#[derive(Debug, Clone)]
struct Jet {
    value: Vector,
    jacobian: Matrix,
}

impl Jet {
    /// Jet of `A·X` by the product rule.
    fn apply(a: &Matrix, da: &[Matrix], x: &Jet) -> Jet {
        let value = a * &x.value;
        let cols: Vec<Vector> = da
            .iter()
            .enumerate()
            .map(|(i, dai)| dai * &x.value + a * x.jacobian.column(i))
            .collect();
        Jet {
            value,
            jacobian: Matrix::from_columns(&cols),
        }
    }

    /// `[U, V] = DV·U − DU·V`
    fn bracket(u: &Jet, v: &Jet) -> Vector {
        &v.jacobian * &u.value - &u.jacobian * &v.value
    }
}

fn same_mode(a: DerivativeMode, b: DerivativeMode) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(CalcError::ModeMismatch)
    }
}

/// `[X, Y] = DY·X − DX·Y`. Exact in polynomial mode, a pointwise
/// evaluator otherwise.
pub fn lie_bracket(x: &VectorField, y: &VectorField) -> Result<VectorField> {
    same_mode(x.0.mode, y.0.mode)?;
    if x.0.nvars != y.0.nvars {
        return Err(CalcError::Shape("fields on different charts".into()));
    }
    if let (DerivativeMode::Polynomial, Some(px), Some(py)) = (x.0.mode, x.0.polynomial_form(), y.0.polynomial_form()) {
        let b = &(&py.jacobian() * px) - &(&px.jacobian() * py);
        return VectorField::polynomial(b, DerivativeMode::Polynomial);
    }
    let DerivativeMode::FiniteDifference { step } = x.0.mode else {
        return Err(CalcError::NotPolynomial);
    };
    let (xf, yf) = (x.clone(), y.clone());
    let n = x.0.nvars;
    let f = move |p: &[f64]| {
        let jx = xf.jet(p).expect("finite-difference jet");
        let jy = yf.jet(p).expect("finite-difference jet");
        Matrix::from_column_slice(n, 1, Jet::bracket(&jx, &jy).as_slice())
    };
    VectorField::new(ChartField::function(n, n, 1, step, f))
}

fn nijenhuis_jets(a: &TensorFieldOnChart, jx: &Jet, jy: &Jet, x: &[f64]) -> Result<Vector> {
    let av = a.value(x);
    let da = a.field.partials(x)?;
    let ax = Jet::apply(&av, &da, jx);
    let ay = Jet::apply(&av, &da, jy);
    let n = Jet::bracket(&ax, &ay) - &av * Jet::bracket(&ax, jy) - &av * Jet::bracket(jx, &ay)
        + &av * &av * Jet::bracket(jx, jy);
    Ok(n)
}

/// `N_A(X, Y) = [AX, AY] − A[AX, Y] − A[X, AY] + A²[X, Y]` at `x`.
pub fn nijenhuis(a: &TensorFieldOnChart, x_field: &VectorField, y_field: &VectorField, x: &[f64]) -> Result<Vector> {
    if a.role != Role::Endomorphism {
        return Err(CalcError::WrongKind { expected: "(1,1)" });
    }
    same_mode(a.mode(), x_field.0.mode)?;
    same_mode(a.mode(), y_field.0.mode)?;
    nijenhuis_jets(a, &x_field.jet(x)?, &y_field.jet(x)?, x)
}

/// Rectangular lattice `counts[i]` points per axis, endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Grid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, counts: Vec<usize>) -> Self {
        Self { lower, upper, counts }
    }

    /// `count^dim` points on the cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64, count: usize) -> Self {
        Self::new(vec![lo; dim], vec![hi; dim], vec![count; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|i| {
                let k = self.counts[i];
                if k <= 1 {
                    vec![0.5 * (self.lower[i] + self.upper[i])]
                } else {
                    (0..k)
                        .map(|t| self.lower[i] + (self.upper[i] - self.lower[i]) * t as f64 / (k - 1) as f64)
                        .collect()
                }
            })
            .collect();
        let mut out = vec![Vec::new()];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    Tangent,
    ParaComplex,
    Complex,
}

/// Outcome of a grid-wide integrability check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// `integrable` / `not integrable`, or `formally integrable` /
    /// `not formally integrable` for complex structures, whose vanishing
    /// Nijenhuis tensor does not by itself yield holomorphic charts.
    pub label: String,
    pub holds: bool,
    pub max_residual: f64,
    pub worst_point: Vec<f64>,
    pub threshold: f64,
}

impl Verdict {
    fn new(formal: bool, max_residual: f64, worst_point: Vec<f64>, threshold: f64) -> Self {
        let holds = max_residual <= threshold;
        let base = if formal { "formally integrable" } else { "integrable" };
        let label = if holds { base.to_string() } else { format!("not {base}") };
        Self {
            label,
            holds,
            max_residual,
            worst_point,
            threshold,
        }
    }
}

fn structure_defect(m: &Matrix, kind: StructureKind, tol: Tolerance) -> Option<String> {
    let n = m.nrows();
    let id = Matrix::identity(n, n);
    let scale = tol.threshold((n as f64).sqrt() * (1.0 + m.norm_squared()));
    let sq = m * m;
    match kind {
        StructureKind::Tangent => {
            if sq.norm() > scale {
                return Some(format!("J² ≠ 0 (‖J²‖ = {:.3e})", sq.norm()));
            }
            let r = rank(m, tol);
            if 2 * r != n {
                return Some(format!("rank {r} is not half of {n}"));
            }
        }
        StructureKind::ParaComplex => {
            let d = (&sq - &id).norm();
            if d > scale {
                return Some(format!("J² ≠ Id (residual {d:.3e})"));
            }
            if m.trace().abs() > tol.threshold(n as f64) {
                return Some(format!("unbalanced eigenspaces (trace {:.3e})", m.trace()));
            }
        }
        StructureKind::Complex => {
            let d = (&sq + &id).norm();
            if d > scale {
                return Some(format!("I² ≠ −Id (residual {d:.3e})"));
            }
        }
    }
    None
}

/// Evaluate `N` on all pairs of coordinate fields at every grid point.
pub fn is_integrable_structure(
    field: &TensorFieldOnChart,
    kind: StructureKind,
    grid: &Grid,
    tol: Tolerance,
) -> Result<Verdict> {
    if field.role != Role::Endomorphism {
        return Err(CalcError::WrongKind { expected: "(1,1)" });
    }
    let n = field.dim();
    let coord = |i: usize| Jet {
        value: Vector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 }),
        jacobian: Matrix::zeros(n, n),
    };
    let mut worst = (0.0_f64, Vec::new());
    let mut scale = 0.0_f64;
    for x in grid.points() {
        let m = field.value(&x);
        if let Some(reason) = structure_defect(&m, kind, tol) {
            return Err(CalcError::InvalidStructureAtPoint { x, reason });
        }
        let da_norm: f64 = field.field.partials(&x)?.iter().map(|d| d.norm()).fold(0.0, f64::max);
        scale = scale.max(m.norm() * da_norm);
        for i in 0..n {
            for j in i + 1..n {
                let r = nijenhuis_jets(field, &coord(i), &coord(j), &x)?.norm();
                if r >= worst.0 {
                    worst = (r, x.clone());
                }
            }
        }
    }
    Ok(Verdict::new(
        kind == StructureKind::Complex,
        worst.0,
        worst.1,
        tol.threshold(scale),
    ))
}

/// `Γᵏᵢⱼ` stored at `(k·n + i)·n + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }

    fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.data[(k * self.n + i) * self.n + j] = v;
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `max |Γᵏᵢⱼ − Γᵏⱼᵢ|`
    pub fn torsion(&self) -> f64 {
        let n = self.n;
        let mut t = 0.0_f64;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    t = t.max((self.get(k, i, j) - self.get(k, j, i)).abs());
                }
            }
        }
        t
    }

    /// The matrix `(Γᵏᵢₘ)_{k,m}` for fixed `i`: the connection matrix along `∂ᵢ`.
    pub fn along(&self, i: usize) -> Matrix {
        Matrix::from_fn(self.n, self.n, |k, m| self.get(k, i, m))
    }
}

/// `Rⁱⱼₖₗ` stored at `((i·n + j)·n + k)·n + l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Riemann {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Riemann {
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.n;
        self.data[((i * n + j) * n + k) * n + l]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `max |Rⁱⱼₖₗ + Rⁱⱼₗₖ|`
    pub fn antisymmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut t = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        t = t.max((self.get(i, j, k, l) + self.get(i, j, l, k)).abs());
                    }
                }
            }
        }
        t
    }

    /// Sectional curvature of the `(∂ₐ, ∂_b)` plane:
    /// `g(R(∂ₐ, ∂_b)∂_b, ∂ₐ) / (g_aa·g_bb − g_ab²)`.
    pub fn sectional(&self, g: &Matrix, a: usize, b: usize) -> f64 {
        let num: f64 = (0..self.n).map(|i| g[(a, i)] * self.get(i, b, a, b)).sum();
        num / (g[(a, a)] * g[(b, b)] - g[(a, b)] * g[(a, b)])
    }
}

/// The Levi-Civita connection of a metric field, evaluated from the
/// metric's 2-jet: `Γᵏᵢⱼ = ½ gᵏᵐ (∂ᵢg_jm + ∂ⱼg_im − ∂ₘg_ij)`.
#[derive(Debug, Clone)]
pub struct ConnectionData {
    pub metric: TensorFieldOnChart,
    tol: Tolerance,
}

struct MetricJet {
    g: Matrix,
    g_inv: Matrix,
    dg: Vec<Matrix>,
}

pub fn levi_civita(g: &TensorFieldOnChart, tol: Tolerance) -> Result<ConnectionData> {
    if g.role != Role::SymmetricForm {
        return Err(CalcError::WrongKind {
            expected: "symmetric (2,0)",
        });
    }
    Ok(ConnectionData { metric: g.clone(), tol })
}

impl ConnectionData {
    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    fn jet(&self, x: &[f64]) -> Result<MetricJet> {
        let g = self.metric.value(x);
        let smin = g.singular_values().min();
        if !(smin > self.tol.atol) {
            return Err(CalcError::DegenerateMetricAtPoint { x: x.to_vec() });
        }
        let g_inv = numkernel::inverse(&g).map_err(|_| CalcError::DegenerateMetricAtPoint { x: x.to_vec() })?;
        let dg = self.metric.field.partials(x)?;
        Ok(MetricJet { g, g_inv, dg })
    }

    /// `Γ_{m,ij} = ½(∂ᵢg_jm + ∂ⱼg_im − ∂ₘg_ij)` from a family of first
    /// derivatives of `g`.
    fn first_kind(n: usize, dg: &[Matrix]) -> Vec<f64> {
        let mut out = vec![0.0; n * n * n];
        for m in 0..n {
            for i in 0..n {
                for j in 0..n {
                    out[(m * n + i) * n + j] = 0.5 * (dg[i][(j, m)] + dg[j][(i, m)] - dg[m][(i, j)]);
                }
            }
        }
        out
    }

    fn raise(n: usize, g_inv: &Matrix, lowered: &[f64]) -> Christoffel {
        let mut out = Christoffel::zeros(n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let v: f64 = (0..n).map(|m| g_inv[(k, m)] * lowered[(m * n + i) * n + j]).sum();
                    out.set(k, i, j, v);
                }
            }
        }
        out
    }

    pub fn christoffel(&self, x: &[f64]) -> Result<Christoffel> {
        let n = self.dim();
        let jet = self.jet(x)?;
        Ok(Self::raise(n, &jet.g_inv, &Self::first_kind(n, &jet.dg)))
    }

    /// `Γ` and `∂ₗΓ` for each `l`, using `∂g⁻¹ = −g⁻¹·∂g·g⁻¹`.
    pub fn christoffel_jet(&self, x: &[f64]) -> Result<(Christoffel, Vec<Christoffel>)> {
        let n = self.dim();
        let jet = self.jet(x)?;
        let lowered = Self::first_kind(n, &jet.dg);
        let gamma = Self::raise(n, &jet.g_inv, &lowered);
        let mut derivs = Vec::with_capacity(n);
        for l in 0..n {
            let ddg: Vec<Matrix> = (0..n)
                .map(|i| self.metric.field.second_partial(l, i, x))
                .collect::<Result<_>>()?;
            let d_lowered = Self::first_kind(n, &ddg);
            let d_inv = -(&jet.g_inv * &jet.dg[l] * &jet.g_inv);
            let a = Self::raise(n, &d_inv, &lowered);
            let b = Self::raise(n, &jet.g_inv, &d_lowered);
            derivs.push(Christoffel {
                n,
                data: a.data.iter().zip(&b.data).map(|(p, q)| p + q).collect(),
            });
        }
        Ok((gamma, derivs))
    }

    /// `max |(∇ᵢg)_jk|` with `(∇ᵢg)_jk = ∂ᵢg_jk − Γᵐᵢⱼ g_mk − Γᵐᵢₖ g_jm`.
    pub fn metric_compatibility_residual(&self, x: &[f64]) -> Result<f64> {
        let n = self.dim();
        let jet = self.jet(x)?;
        let gamma = Self::raise(n, &jet.g_inv, &Self::first_kind(n, &jet.dg));
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut v = jet.dg[i][(j, k)];
                    for m in 0..n {
                        v -= gamma.get(m, i, j) * jet.g[(m, k)] + gamma.get(m, i, k) * jet.g[(j, m)];
                    }
                    worst = worst.max(v.abs());
                }
            }
        }
        Ok(worst)
    }
}

/// `Rⁱⱼₖₗ = ∂ₖΓⁱₗⱼ − ∂ₗΓⁱₖⱼ + ΓⁱₖₘΓᵐₗⱼ − ΓⁱₗₘΓᵐₖⱼ`
pub fn curvature(conn: &ConnectionData, x: &[f64]) -> Result<Riemann> {
    let n = conn.dim();
    let (g, dg) = conn.christoffel_jet(x)?;
    let mut data = vec![0.0; n * n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut v = dg[k].get(i, l, j) - dg[l].get(i, k, j);
                    for m in 0..n {
                        v += g.get(i, k, m) * g.get(m, l, j) - g.get(i, l, m) * g.get(m, k, j);
                    }
                    data[((i * n + j) * n + k) * n + l] = v;
                }
            }
        }
    }
    Ok(Riemann { n, data })
}

/// Flatness of the Levi-Civita connection over the grid, `max ‖R(x)‖`.
pub fn is_metric_integrable(g: &TensorFieldOnChart, grid: &Grid, tol: Tolerance) -> Result<Verdict> {
    let conn = levi_civita(g, tol)?;
    let mut worst = (0.0_f64, Vec::new());
    for x in grid.points() {
        let r = curvature(&conn, &x)?.norm();
        if r >= worst.0 {
            worst = (r, x);
        }
    }
    Ok(Verdict::new(false, worst.0, worst.1, tol.threshold(1.0)))
}

/// `max_x ‖∇T(x)‖` over the grid, with
/// `(∇ᵢT)ʲₖ = ∂ᵢTʲₖ + ΓʲᵢₘTᵐₖ − TʲₘΓᵐᵢₖ`. Returns the worst point too.
pub fn covariant_derivative_of_structure(
    conn: &ConnectionData,
    field: &TensorFieldOnChart,
    grid: &Grid,
) -> Result<(f64, Vec<f64>)> {
    if field.role != Role::Endomorphism {
        return Err(CalcError::WrongKind { expected: "(1,1)" });
    }
    let n = conn.dim();
    let mut worst = (0.0_f64, Vec::new());
    for x in grid.points() {
        let gamma = conn.christoffel(&x)?;
        let t = field.value(&x);
        let mut total = 0.0;
        for i in 0..n {
            let c = gamma.along(i);
            let d = field.field.partial(i, &x)? + &c * &t - &t * &c;
            total += d.norm_squared();
        }
        let r = total.sqrt();
        if r >= worst.0 {
            worst = (r, x);
        }
    }
    Ok(worst)
}

/// Parallel transport of `v0` along the polygon through `path`, by RK4 on
/// `dvᵏ/dt = −Γᵏᵢⱼ ẋⁱ vʲ` with `steps` steps per segment.
pub fn parallel_transport(conn: &ConnectionData, path: &[Vec<f64>], v0: &Vector, steps: usize) -> Result<Vector> {
    let n = conn.dim();
    let mut v = v0.clone();
    for seg in path.windows(2) {
        let (a, b) = (&seg[0], &seg[1]);
        let vel: Vec<f64> = a.iter().zip(b).map(|(p, q)| q - p).collect();
        let at = |t: f64| -> Vec<f64> { a.iter().zip(&vel).map(|(p, d)| p + t * d).collect() };
        let rhs = |t: f64, w: &Vector| -> Result<Vector> {
            let gamma = conn.christoffel(&at(t))?;
            let mut out = Vector::zeros(n);
            for (i, vi) in vel.iter().enumerate() {
                out -= gamma.along(i) * w * *vi;
            }
            Ok(out)
        };
        let dt = 1.0 / steps as f64;
        for s in 0..steps {
            let t = s as f64 * dt;
            let k1 = rhs(t, &v)?;
            let k2 = rhs(t + 0.5 * dt, &(&v + &k1 * (0.5 * dt)))?;
            let k3 = rhs(t + 0.5 * dt, &(&v + &k2 * (0.5 * dt)))?;
            let k4 = rhs(t + dt, &(&v + &k3 * dt))?;
            v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
    }
    Ok(v)
}

/// Transport every coordinate vector from `from` to `to` along two
/// polygons and compare. This is a sampled stand-in for path independence
/// on a simply connected domain, not a proof of it.
pub fn path_independence(
    conn: &ConnectionData,
    first: &[Vec<f64>],
    second: &[Vec<f64>],
    steps: usize,
    tol: Tolerance,
) -> Result<Report> {
    let n = conn.dim();
    let mut report = Report::new("parallel transport path independence");
    report.note("sampled approximation: two polygonal paths, RK4 integration");
    let mut worst = 0.0_f64;
    for i in 0..n {
        let e = Vector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 });
        let a = parallel_transport(conn, first, &e, steps)?;
        let b = parallel_transport(conn, second, &e, steps)?;
        worst = worst.max((a - b).norm());
    }
    report.check("transported frames agree", worst, tol.threshold(1.0));
    Ok(report)
}

/// Built-in fields referenced by name in field documents.
pub mod named {
    use super::*;
    use crate::poly::Poly;
    use crate::sample::{gaussian, SampleRng};

    /// `g = 4/(1 + ‖x‖²)² · δ`, the round unit sphere in stereographic
    /// coordinates.
    pub fn sphere_stereographic(dim: usize, step: f64) -> TensorFieldOnChart {
        let f = move |x: &[f64]| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Matrix::identity(dim, dim) * (4.0 / ((1.0 + r2) * (1.0 + r2)))
        };
        TensorFieldOnChart {
            field: ChartField::function(dim, dim, dim, step, f),
            role: Role::SymmetricForm,
        }
    }

    pub fn constant(m: &Matrix, role: Role, mode: DerivativeMode) -> TensorFieldOnChart {
        TensorFieldOnChart {
            field: ChartField::constant(m, m.nrows(), mode),
            role,
        }
    }

    /// `Φ*η = DΦᵀ·η·DΦ` for a polynomial map `Φ` and a constant form `η`.
    pub fn pullback_flat(phi: &PolyMatrix, eta: &Matrix, mode: DerivativeMode) -> TensorFieldOnChart {
        let d = phi.jacobian();
        let e = PolyMatrix::constant(eta, phi.nvars);
        TensorFieldOnChart {
            field: ChartField::polynomial(&(&d.transpose() * &e) * &d, mode),
            role: Role::SymmetricForm,
        }
    }

    /// `Φ*T₀ = DΦ⁻¹·T₀·DΦ` for a constant endomorphism `T₀`.
    pub fn pullback_structure(phi: &PolyMatrix, t0: &Matrix, step: f64) -> TensorFieldOnChart {
        let d = phi.jacobian();
        let t0 = t0.clone();
        let n = phi.nvars;
        let f = move |x: &[f64]| {
            let dx = d.eval(x);
            match numkernel::inverse(&dx) {
                Ok(inv) => inv * &t0 * dx,
                Err(_) => Matrix::from_element(n, n, f64::NAN),
            }
        };
        TensorFieldOnChart {
            field: ChartField::function(n, n, n, step, f),
            role: Role::Endomorphism,
        }
    }

    /// `Φ(x) = x + Σ_r q_r(x)·e_r` with each `q_r` a quadratic form with
    /// Gaussian coefficients scaled by `amplitude`.
    pub fn random_quadratic_map(rng: &mut SampleRng, dim: usize, amplitude: f64) -> PolyMatrix {
        let mut phi = PolyMatrix::coordinates(dim);
        for r in 0..dim {
            let c = gaussian(rng, dim, dim);
            let mut q = Poly::zero(dim);
            for i in 0..dim {
                for j in i..dim {
                    q = &q + &Poly::monomial(dim, &[(i, 1), (j, 1)], amplitude * c[(i, j)]);
                }
            }
            let e = phi.get(r, 0) + &q;
            *phi.get_mut(r, 0) = e;
        }
        phi
    }

    /// `P·D·P⁻¹` with `D = diag(Id_k, −Id_k)` and
    /// `P = Id + c·x₀·E_{k, k−1}`: the `+1` eigenspace contains
    /// `e_{k−1} + c·x₀·e_k`, whose bracket with `∂₀` leaves it, so the field
    /// is not integrable for `c ≠ 0`. Requires `k ≥ 2`.
    pub fn twisted_para_complex(k: usize, c: f64, mode: DerivativeMode) -> TensorFieldOnChart {
        let n = 2 * k;
        let x0 = Poly::var(n, 0);
        let mut p = PolyMatrix::identity(n, n);
        let mut p_inv = PolyMatrix::identity(n, n);
        *p.get_mut(k, k - 1) = x0.scale(c);
        *p_inv.get_mut(k, k - 1) = x0.scale(-c);
        let mut d = Matrix::identity(n, n);
        for i in k..n {
            d[(i, i)] = -1.0;
        }
        let d = PolyMatrix::constant(&d, n);
        TensorFieldOnChart {
            field: ChartField::polynomial(&(&p * &d) * &p_inv, mode),
            role: Role::Endomorphism,
        }
    }
}
