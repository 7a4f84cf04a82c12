//! Compatible pairs and triples of a symplectic form `Ω`, a metric `g` and a
//! complex (Kähler flavor) or para-complex (para-Kähler flavor) structure.
//!
//! Conventions, with `B(u, v) = uᵀ·S·v`:
//!
//! | flavor      | `Ω` from `(g, 𝓘)`         | `g` from `(Ω, 𝓘)`          | structure from `(g, Ω)` |
//! |-------------|---------------------------|----------------------------|-------------------------|
//! | Kähler      | `Ω(u,v) = g(𝓘u, v)`: `𝓘ᵀG` | `g(u,v) = Ω(u, 𝓘v)`: `S𝓘`   | polar: `R⁻¹·A`           |
//! | para-Kähler | `Ω(u,v) = g(𝓙u, v)`: `𝓙ᵀG` | `g(u,v) = Ω(𝓙u, v)`: `𝓙ᵀS`  | `A = G⁻¹Sᵀ` directly      |
//!
//! where `A = (g♭)⁻¹∘Ω♭ = G⁻¹·Sᵀ`, i.e. `g(Au, v) = Ω(u, v)`.
//!
//! In the para flavor the three formulas are mutually inverse on compatible
//! data; `Ω(u, 𝓙v)` would give `−g`.

use thiserror::Error;

use crate::linstruct::{ComplexDecomposition, ComplexStructure, LinError, ParaComplexStructure, SymplecticForm};
use crate::numkernel::{
    self, hstack, inertia, kernel_and_image, metric_adjoint, skew_residual, spd_sqrt, symmetrize, symmetry_residual,
    Matrix, NumError, Tolerance, Vector,
};
use crate::report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Kahler,
    ParaKahler,
}

impl Flavor {
    /// `−1` for complex, `+1` for para-complex: the square of the structure.
    fn square_sign(self) -> f64 {
        match self {
            Flavor::Kahler => -1.0,
            Flavor::ParaKahler => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Flavor::Kahler => "kahler",
            Flavor::ParaKahler => "para_kahler",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompatError {
    #[error("incompatible inputs: {0}")]
    IncompatibleInputs(String),
    #[error("A·A* is not positive definite (smallest eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("(g♭)⁻¹Ω♭ is not involutive (‖J² − Id‖ = {0:e})")]
    NotInvolutive(f64),
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
    #[error("dimension mismatch")]
    DimensionMismatch,
    #[error(transparent)]
    Lin(#[from] LinError),
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type Result<T> = std::result::Result<T, CompatError>;

fn failures(report: &Report) -> String {
    report
        .failures()
        .map(|e| format!("{} ({:.3e})", e.name, e.residual))
        .collect::<Vec<_>>()
        .join(", ")
}

fn same_dim(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.is_square() && b.is_square() && a.nrows() == b.nrows() {
        Ok(())
    } else {
        Err(CompatError::DimensionMismatch)
    }
}

/// Two of the three members of a triple.
#[derive(Debug, Clone, PartialEq)]
pub enum Pair {
    MetricStructure { metric: Matrix, structure: Matrix },
    OmegaStructure { omega: Matrix, structure: Matrix },
    MetricOmega { metric: Matrix, omega: Matrix },
}

impl Pair {
    fn dims_ok(&self) -> Result<()> {
        match self {
            Pair::MetricStructure { metric, structure } => same_dim(metric, structure),
            Pair::OmegaStructure { omega, structure } => same_dim(omega, structure),
            Pair::MetricOmega { metric, omega } => same_dim(metric, omega),
        }
    }
}

/// `‖T² − sign·Id‖_F`
fn square_residual(t: &Matrix, flavor: Flavor) -> f64 {
    let n = t.nrows();
    (t * t - Matrix::identity(n, n) * flavor.square_sign()).norm()
}

fn metric_signature_check(report: &mut Report, name: &str, metric: &Matrix, flavor: Flavor, tol: Tolerance) {
    let signs = inertia(metric, tol);
    match flavor {
        Flavor::Kahler => {
            let margin = numkernel::min_eigenvalue(metric);
            report.push(format!("{name} positive definite"), margin > tol.atol, margin);
        }
        Flavor::ParaKahler => {
            let defect = signs.positive.abs_diff(signs.negative) + signs.zero;
            report.push(format!("{name} neutral"), signs.is_neutral(), defect as f64);
        }
    }
}

fn structure_square_check(report: &mut Report, structure: &Matrix, flavor: Flavor, tol: Tolerance) {
    let n = structure.nrows() as f64;
    let name = match flavor {
        Flavor::Kahler => "I^2 = -Id",
        Flavor::ParaKahler => "J^2 = Id",
    };
    report.check(name, square_residual(structure, flavor), tol.threshold(n.sqrt()));
    if flavor == Flavor::ParaKahler {
        report.check("trace J = 0", structure.trace().abs(), tol.threshold(n));
    }
}

/// Evaluate the defining identities of a compatible pair on the full
/// coordinate basis (as matrix identities), plus the positivity or
/// neutrality condition where the definition asks for one.
pub fn is_compatible(pair: &Pair, flavor: Flavor, tol: Tolerance) -> Report {
    let mut report = Report::new(format!("{} pair compatibility", flavor.name()));
    if pair.dims_ok().is_err() {
        report.push("dimensions agree", false, 1.0);
        return report;
    }
    // Ω(Tu, Tv) = ±Ω(u, v) and g(Tu, Tv) = ±g(u, v): sign is −1 for para
    let invariance_sign = -flavor.square_sign();
    match pair {
        Pair::OmegaStructure { omega, structure } => {
            let scale = omega.norm() * structure.norm().powi(2);
            report.check("Omega skew", skew_residual(omega), tol.threshold(omega.norm()));
            structure_square_check(&mut report, structure, flavor, tol);
            let inv = structure.transpose() * omega * structure - omega * invariance_sign;
            let name = match flavor {
                Flavor::Kahler => "Omega(Iu,Iv) = Omega(u,v)",
                Flavor::ParaKahler => "Omega(Ju,Jv) = -Omega(u,v)",
            };
            report.check(name, inv.norm(), tol.threshold(scale));
            let induced = omega * structure;
            report.check(
                "Omega(u,Tv) symmetric",
                symmetry_residual(&induced),
                tol.threshold(induced.norm()),
            );
            metric_signature_check(&mut report, "Omega(u,Tv)", &symmetrize(&induced), flavor, tol);
        }
        Pair::MetricStructure { metric, structure } => {
            let scale = metric.norm() * structure.norm().powi(2);
            report.check("g symmetric", symmetry_residual(metric), tol.threshold(metric.norm()));
            metric_signature_check(&mut report, "g", metric, flavor, tol);
            structure_square_check(&mut report, structure, flavor, tol);
            let inv = structure.transpose() * metric * structure - metric * invariance_sign;
            let name = match flavor {
                Flavor::Kahler => "g(Iu,Iv) = g(u,v)",
                Flavor::ParaKahler => "g(Ju,Jv) = -g(u,v)",
            };
            report.check(name, inv.norm(), tol.threshold(scale));
        }
        Pair::MetricOmega { metric, omega } => {
            report.check("g symmetric", symmetry_residual(metric), tol.threshold(metric.norm()));
            report.check("Omega skew", skew_residual(omega), tol.threshold(omega.norm()));
            metric_signature_check(&mut report, "g", metric, flavor, tol);
            match numkernel::inverse(metric) {
                Ok(g_inv) => {
                    let a = g_inv * omega.transpose();
                    structure_square_check(&mut report, &a, flavor, tol);
                }
                Err(_) => {
                    report.push("g invertible", false, 1.0);
                }
            }
        }
    }
    report
}

/// `Ω(u, v) = g(Tu, v)`, matrix `Tᵀ·G`.
pub fn omega_from(metric: &Matrix, structure: &Matrix, flavor: Flavor, tol: Tolerance) -> Result<SymplecticForm> {
    same_dim(metric, structure)?;
    let pre = is_compatible(
        &Pair::MetricStructure {
            metric: metric.clone(),
            structure: structure.clone(),
        },
        flavor,
        tol,
    );
    if !pre.passed() {
        return Err(CompatError::IncompatibleInputs(failures(&pre)));
    }
    let s = structure.transpose() * metric;
    let s = (&s - s.transpose()) * 0.5;
    let omega = SymplecticForm::new(s)?;
    if !omega.is_nondegenerate(tol) {
        return Err(CompatError::IncompatibleInputs("resulting form is degenerate".into()));
    }
    Ok(omega)
}

/// Kähler: `g(u, v) = Ω(u, 𝓘v)`; para-Kähler: `g(u, v) = Ω(𝓙u, v)`.
pub fn g_from(omega: &Matrix, structure: &Matrix, flavor: Flavor, tol: Tolerance) -> Result<Matrix> {
    same_dim(omega, structure)?;
    let pre = is_compatible(
        &Pair::OmegaStructure {
            omega: omega.clone(),
            structure: structure.clone(),
        },
        flavor,
        tol,
    );
    if !pre.passed() {
        return Err(CompatError::IncompatibleInputs(failures(&pre)));
    }
    let g = match flavor {
        Flavor::Kahler => omega * structure,
        Flavor::ParaKahler => structure.transpose() * omega,
    };
    let asym = symmetry_residual(&g);
    if asym > tol.threshold(g.norm()) {
        return Err(CompatError::IncompatibleInputs(format!(
            "metric not symmetric ({asym:e})"
        )));
    }
    let g = symmetrize(&g);
    let mut post = Report::new("g_from");
    metric_signature_check(&mut post, "g", &g, flavor, tol);
    if !post.passed() {
        return Err(CompatError::IncompatibleInputs(failures(&post)));
    }
    Ok(g)
}

/// Output of [`structure_from`].
#[derive(Debug, Clone, PartialEq)]
pub struct StructureConstruction {
    pub flavor: Flavor,
    /// `A = (g♭)⁻¹∘Ω♭ = G⁻¹·Sᵀ`
    pub operator_a: Matrix,
    /// `A*`, the `g`-adjoint of `A` (Kähler only).
    pub adjoint: Option<Matrix>,
    /// `R`, the `g`-self-adjoint positive square root of `A·A*` (Kähler only).
    pub root: Option<Matrix>,
    /// `𝓘 = R⁻¹·A` (Kähler) or `𝓙 = A` (para-Kähler).
    pub structure: Matrix,
    pub metric: Matrix,
    /// `ğ(u, v) = g(Ru, v)`; equal to `metric` in the para flavor.
    pub corrected_metric: Matrix,
}

/// `g`-self-adjoint positive square root of a `g`-self-adjoint operator `m`
/// for positive-definite `g`, computed in `g`-orthonormal coordinates.
fn metric_sqrt(m: &Matrix, g: &Matrix, tol: Tolerance) -> Result<Matrix> {
    let chol =
        nalgebra::Cholesky::new(g.clone()).ok_or_else(|| CompatError::NotPositive(numkernel::min_eigenvalue(g)))?;
    let l = chol.l();
    let lt = l.transpose();
    let lt_inv = numkernel::inverse(&lt)?;
    // y = Lᵀx turns g into the Euclidean product
    let m_euclid = symmetrize(&(&lt * m * &lt_inv));
    let root = spd_sqrt(&m_euclid, tol).map_err(|e| match e {
        NumError::NotPositiveDefinite { min_eigenvalue } => CompatError::NotPositive(min_eigenvalue),
        other => CompatError::Num(other),
    })?;
    Ok(lt_inv * root * lt)
}

/// Build the structure from a metric and a symplectic form.
///
/// Kähler flavor: `A = G⁻¹·Sᵀ`, `R² = A·A*`, `𝓘 = R⁻¹·A`, and
/// `ğ(u, v) = g(Ru, v)` is the metric compatible with both `Ω` and `𝓘`.
/// Para-Kähler flavor: `𝓙 = A`, accepted only if `𝓙² = Id` within `tol`.
pub fn structure_from(
    metric: &Matrix,
    omega: &Matrix,
    flavor: Flavor,
    tol: Tolerance,
) -> Result<StructureConstruction> {
    same_dim(metric, omega)?;
    let n = metric.nrows();
    let mut pre = Report::new("structure_from inputs");
    pre.check("g symmetric", symmetry_residual(metric), tol.threshold(metric.norm()));
    pre.check("Omega skew", skew_residual(omega), tol.threshold(omega.norm()));
    let rank = kernel_and_image(omega, tol).rank;
    pre.push("Omega nondegenerate", rank == n, (n - rank) as f64);
    if !pre.passed() {
        return Err(CompatError::IncompatibleInputs(failures(&pre)));
    }
    let g = symmetrize(metric);
    let a = numkernel::inverse(&g)? * omega.transpose();
    match flavor {
        Flavor::Kahler => {
            let margin = numkernel::min_eigenvalue(&g);
            if margin <= tol.atol {
                return Err(CompatError::NotPositive(margin));
            }
            let adjoint = metric_adjoint(&a, &g)?;
            let aa = &a * &adjoint;
            let root = metric_sqrt(&aa, &g, tol)?;
            let structure = numkernel::inverse(&root)? * &a;
            let corrected = symmetrize(&(root.transpose() * &g));
            Ok(StructureConstruction {
                flavor,
                operator_a: a,
                adjoint: Some(adjoint),
                root: Some(root),
                structure,
                metric: g,
                corrected_metric: corrected,
            })
        }
        Flavor::ParaKahler => {
            let signs = inertia(&g, tol);
            if !signs.is_neutral() {
                return Err(CompatError::IncompatibleInputs(format!(
                    "metric is not neutral: signature ({}, {}), {} zero",
                    signs.positive, signs.negative, signs.zero
                )));
            }
            let residual = square_residual(&a, flavor);
            if residual > tol.threshold((n as f64).sqrt()) {
                return Err(CompatError::NotInvolutive(residual));
            }
            if a.trace().abs() > tol.threshold(n as f64) {
                return Err(CompatError::IncompatibleInputs(format!(
                    "eigenspaces of J unbalanced (trace {:e})",
                    a.trace()
                )));
            }
            Ok(StructureConstruction {
                flavor,
                operator_a: a.clone(),
                adjoint: None,
                root: None,
                structure: a,
                metric: g.clone(),
                corrected_metric: g,
            })
        }
    }
}

/// A symplectic form, a metric and a (para-)complex structure, pairwise
/// compatible.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibleTriple {
    pub omega: Matrix,
    pub metric: Matrix,
    pub structure: Matrix,
    pub flavor: Flavor,
}

impl CompatibleTriple {
    /// `(Ω_can, Id, 𝓘_can)` or `(Ω_can, diag(−Id, Id), 𝓙_can)` on `ℝ^{2n}`.
    pub fn canonical(n: usize, flavor: Flavor) -> Self {
        use crate::sample::{canonical_complex, canonical_para, canonical_skew};
        let omega = canonical_skew(n);
        match flavor {
            Flavor::Kahler => Self {
                omega,
                metric: Matrix::identity(2 * n, 2 * n),
                structure: canonical_complex(n),
                flavor,
            },
            Flavor::ParaKahler => {
                let structure = canonical_para(n);
                let metric = structure.transpose() * &omega;
                Self {
                    omega,
                    metric,
                    structure,
                    flavor,
                }
            }
        }
    }

    /// Transport by a change of basis: `P*Ω`, `P*g` and `P⁻¹·T·P`.
    pub fn pullback(&self, p: &Matrix) -> Result<Self> {
        let p_inv = numkernel::inverse(p)?;
        Ok(Self {
            omega: p.transpose() * &self.omega * p,
            metric: symmetrize(&(p.transpose() * &self.metric * p)),
            structure: p_inv * &self.structure * p,
            flavor: self.flavor,
        })
    }

    pub fn dim(&self) -> usize {
        self.omega.nrows()
    }

    /// All three pairwise predicates.
    pub fn validate(&self, tol: Tolerance) -> Report {
        let mut report = Report::new(format!("{} triple", self.flavor.name()));
        let pairs = [
            (
                "(g, T)",
                Pair::MetricStructure {
                    metric: self.metric.clone(),
                    structure: self.structure.clone(),
                },
            ),
            (
                "(Omega, T)",
                Pair::OmegaStructure {
                    omega: self.omega.clone(),
                    structure: self.structure.clone(),
                },
            ),
            (
                "(g, Omega)",
                Pair::MetricOmega {
                    metric: self.metric.clone(),
                    omega: self.omega.clone(),
                },
            ),
        ];
        for (label, pair) in pairs {
            for mut e in is_compatible(&pair, self.flavor, tol).entries {
                e.name = format!("{label}: {}", e.name);
                report.entries.push(e);
            }
        }
        // the linking identity Ω(u, v) = g(Tu, v)
        let link = &self.omega - self.structure.transpose() * &self.metric;
        report.check(
            "Omega(u,v) = g(Tu,v)",
            link.norm(),
            tol.threshold(self.metric.norm() * self.structure.norm()),
        );
        report
    }

    pub fn complex_structure(&self) -> Result<ComplexStructure> {
        Ok(ComplexStructure::new(self.structure.clone())?)
    }

    pub fn para_complex_structure(&self, tol: Tolerance) -> Result<ParaComplexStructure> {
        Ok(ParaComplexStructure::from_matrix(self.structure.clone(), tol)?)
    }
}

/// Complete a compatible pair to a triple and check all three predicates.
/// For `(g, Ω)` the triple carries the corrected metric `ğ`.
pub fn complete_triple(pair: &Pair, flavor: Flavor, tol: Tolerance) -> Result<CompatibleTriple> {
    pair.dims_ok()?;
    let pre = is_compatible(pair, flavor, tol);
    if !pre.passed() {
        return Err(CompatError::IncompatibleInputs(failures(&pre)));
    }
    let triple = match pair {
        Pair::MetricStructure { metric, structure } => {
            let omega = omega_from(metric, structure, flavor, tol)?;
            CompatibleTriple {
                omega: omega.matrix().clone(),
                metric: symmetrize(metric),
                structure: structure.clone(),
                flavor,
            }
        }
        Pair::OmegaStructure { omega, structure } => {
            let metric = g_from(omega, structure, flavor, tol)?;
            CompatibleTriple {
                omega: omega.clone(),
                metric,
                structure: structure.clone(),
                flavor,
            }
        }
        Pair::MetricOmega { metric, omega } => {
            let built = structure_from(metric, omega, flavor, tol)?;
            CompatibleTriple {
                omega: omega.clone(),
                metric: built.corrected_metric,
                structure: built.structure,
                flavor,
            }
        }
    };
    let post = triple.validate(tol);
    if !post.passed() {
        return Err(CompatError::IncompatibleInputs(failures(&post)));
    }
    Ok(triple)
}

/// Splitting `𝔼 = 𝔼₁ ⊕ 𝔼₂` into Lagrangian subspaces of equal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianSplitting {
    pub e1: Matrix,
    pub e2: Matrix,
    pub report: Report,
}

impl LagrangianSplitting {
    /// The decomposition of the complex structure it came from (Kähler):
    /// `𝔼₂ = 𝓘𝔼₁`, so the isomorphism is the identity.
    pub fn as_complex_decomposition(&self) -> ComplexDecomposition {
        let k = self.e1.ncols();
        ComplexDecomposition {
            e1: self.e1.clone(),
            e2: self.e2.clone(),
            iso: Matrix::identity(k, k),
        }
    }
}

/// Kähler: `g`-orthonormal `u₁ … u_k` with `u_j ⊥ span(u_i, 𝓘u_i)`, then
/// `𝔼₁ = span(u)` and `𝔼₂ = 𝓘𝔼₁`.
///
/// Para-Kähler: with `e_i` an orthonormal basis of the `+1` eigenspace and
/// `f_i` the `g`-dual basis of the `−1` eigenspace, `𝔼₁ = span(e_i + f_i)`
/// and `𝔼₂ = span(e_i − f_i)`; `g` is positive on `𝔼₁` and negative on `𝔼₂`.
pub fn lagrangian_orthogonal_decomposition(triple: &CompatibleTriple, tol: Tolerance) -> Result<LagrangianSplitting> {
    let pre = triple.validate(tol);
    if !pre.passed() {
        return Err(CompatError::InvalidTriple(failures(&pre)));
    }
    let n = triple.dim();
    let k = n / 2;
    let g = &triple.metric;
    let (e1, e2) = match triple.flavor {
        Flavor::Kahler => {
            let i = &triple.structure;
            let mut chosen: Vec<Vector> = Vec::with_capacity(k);
            let mut frame: Vec<Vector> = Vec::with_capacity(n);
            let mut used = vec![false; n];
            let project = |v: &Vector, frame: &[Vector]| {
                let mut r = v.clone();
                for _ in 0..2 {
                    for f in frame {
                        let c = f.dot(&(g * &r));
                        r.axpy(-c, f, 1.0);
                    }
                }
                r
            };
            let g_norm = |v: &Vector| v.dot(&(g * v)).max(0.0).sqrt();
            while chosen.len() < k {
                let candidates: Vec<(usize, Vector)> = (0..n)
                    .filter(|&j| !used[j])
                    .map(|j| {
                        let e = Vector::from_fn(n, |r, _| if r == j { 1.0 } else { 0.0 });
                        (j, project(&e, &frame))
                    })
                    .collect();
                let best = candidates.iter().map(|(_, v)| g_norm(v)).fold(0.0, f64::max);
                let (j, v) = candidates
                    .into_iter()
                    .find(|(_, v)| g_norm(v) >= 0.5 * best)
                    .ok_or_else(|| CompatError::InvalidTriple("no complement direction".into()))?;
                used[j] = true;
                let u = &v / g_norm(&v);
                let iu = i * &u;
                frame.push(u.clone());
                frame.push(project(&iu, &frame[..frame.len() - 1]) / g_norm(&iu));
                chosen.push(u);
            }
            let e1 = Matrix::from_columns(&chosen);
            let e2 = i * &e1;
            (e1, e2)
        }
        Flavor::ParaKahler => {
            let j = triple.para_complex_structure(tol)?;
            let (plus, minus) = (&j.eigen_plus, &j.eigen_minus);
            if plus.ncols() != k || minus.ncols() != k {
                return Err(CompatError::InvalidTriple("unbalanced eigenspaces".into()));
            }
            let pairing = plus.transpose() * g * minus;
            let dual = minus * numkernel::inverse(&pairing)?;
            (plus + &dual, plus - &dual)
        }
    };
    let report = splitting_report(triple, &e1, &e2, tol);
    if !report.passed() {
        return Err(CompatError::InvalidTriple(failures(&report)));
    }
    Ok(LagrangianSplitting { e1, e2, report })
}

/// The defining conditions of a Lagrangian orthogonal splitting.
pub fn splitting_report(triple: &CompatibleTriple, e1: &Matrix, e2: &Matrix, tol: Tolerance) -> Report {
    let mut report = Report::new("lagrangian splitting");
    let n = triple.dim();
    let (s, g) = (&triple.omega, &triple.metric);
    let scale = |a: &Matrix, m: &Matrix, b: &Matrix| tol.threshold(a.norm() * m.norm() * b.norm());
    report.push(
        "dim E1 = dim E2",
        e1.ncols() == e2.ncols(),
        e1.ncols().abs_diff(e2.ncols()) as f64,
    );
    let both = hstack(&[e1, e2]);
    let rank = kernel_and_image(&both, tol).rank;
    report.push("E1 + E2 spans", rank == n, n.abs_diff(rank) as f64);
    report.check(
        "Omega vanishes on E1 x E1",
        (e1.transpose() * s * e1).norm(),
        scale(e1, s, e1),
    );
    report.check(
        "Omega vanishes on E2 x E2",
        (e2.transpose() * s * e2).norm(),
        scale(e2, s, e2),
    );
    match triple.flavor {
        Flavor::Kahler => {
            report.check("g(E1, E2) = 0", (e1.transpose() * g * e2).norm(), scale(e1, g, e2));
        }
        Flavor::ParaKahler => {
            let plus = numkernel::min_eigenvalue(&(e1.transpose() * g * e1));
            let minus = numkernel::min_eigenvalue(&-(e2.transpose() * g * e2));
            report.push("g positive definite on E1", plus > tol.atol, plus);
            report.push("g negative definite on E2", minus > tol.atol, minus);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::{canonical_complex, canonical_para, canonical_skew};

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn m(r: usize, c: usize, d: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, d)
    }

    #[test]
    fn omega_from_identity_and_canonical_complex() {
        let omega = omega_from(&Matrix::identity(2, 2), &canonical_complex(1), Flavor::Kahler, tol()).unwrap();
        let e1 = Vector::from_vec(vec![1.0, 0.0]);
        let e2 = Vector::from_vec(vec![0.0, 1.0]);
        assert_eq!(omega.eval(&e1, &e2), 1.0);
        assert_eq!(omega.matrix(), &canonical_skew(1));
    }

    #[test]
    fn omega_from_negated_structure_negates() {
        let a = omega_from(&Matrix::identity(2, 2), &canonical_complex(1), Flavor::Kahler, tol()).unwrap();
        let b = omega_from(&Matrix::identity(2, 2), &-canonical_complex(1), Flavor::Kahler, tol()).unwrap();
        assert_eq!(a.matrix(), &-b.matrix());
    }

    #[test]
    fn omega_from_neutral_metric_and_para() {
        let g = m(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let omega = omega_from(&g, &canonical_para(1), Flavor::ParaKahler, tol()).unwrap();
        let e1 = Vector::from_vec(vec![1.0, 0.0]);
        let e2 = Vector::from_vec(vec![0.0, 1.0]);
        assert_eq!(omega.eval(&e1, &e2), -1.0);
    }

    #[test]
    fn g_from_cases() {
        let g = g_from(&canonical_skew(1), &canonical_complex(1), Flavor::Kahler, tol()).unwrap();
        assert_eq!(g, Matrix::identity(2, 2));
        let g = g_from(&(canonical_skew(1) * 3.0), &canonical_complex(1), Flavor::Kahler, tol()).unwrap();
        assert_eq!(g, Matrix::identity(2, 2) * 3.0);
        // g(u,v) = Ω(𝓙u, v); the other ordering Ω(u, 𝓙v) would give diag(1, −1)
        let g = g_from(&canonical_skew(1), &canonical_para(1), Flavor::ParaKahler, tol()).unwrap();
        assert_eq!(g, m(2, 2, &[-1.0, 0.0, 0.0, 1.0]));
        let s = inertia(&g, tol());
        assert_eq!((s.positive, s.negative), (1, 1));
    }

    #[test]
    fn g_from_rejects_incompatible() {
        let err = g_from(&canonical_skew(1), &-canonical_complex(1), Flavor::Kahler, tol()).unwrap_err();
        assert!(matches!(err, CompatError::IncompatibleInputs(_)));
    }

    #[test]
    fn structure_from_identity_metric() {
        let c = structure_from(&Matrix::identity(2, 2), &canonical_skew(1), Flavor::Kahler, tol()).unwrap();
        assert!((&c.operator_a - canonical_complex(1)).norm() < 1e-15);
        assert!((&c.structure - canonical_complex(1)).norm() < 1e-14);
        assert!((c.root.unwrap() - Matrix::identity(2, 2)).norm() < 1e-14);
        assert!((c.corrected_metric - Matrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn structure_from_scaled_omega() {
        let s = m(2, 2, &[0.0, 2.0, -2.0, 0.0]);
        let c = structure_from(&Matrix::identity(2, 2), &s, Flavor::Kahler, tol()).unwrap();
        assert!((&c.operator_a - canonical_complex(1) * 2.0).norm() < 1e-14);
        assert!((c.root.unwrap() - Matrix::identity(2, 2) * 2.0).norm() < 1e-14);
        assert!((&c.structure - canonical_complex(1)).norm() < 1e-14);
        assert!((c.corrected_metric - Matrix::identity(2, 2) * 2.0).norm() < 1e-14);
    }

    #[test]
    fn structure_from_para_direct_route() {
        // G⁻¹Sᵀ = diag(1,−1)·[[0,−1],[1,0]] = [[0,−1],[−1,0]]: involutive
        let g = m(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let c = structure_from(&g, &canonical_skew(1), Flavor::ParaKahler, tol()).unwrap();
        assert_eq!(c.structure, m(2, 2, &[0.0, -1.0, -1.0, 0.0]));
        // a neutral metric whose A is not involutive
        let g = m(2, 2, &[2.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            structure_from(&g, &canonical_skew(1), Flavor::ParaKahler, tol()),
            Err(CompatError::NotInvolutive(_))
        ));
    }

    #[test]
    fn structure_from_rejects_indefinite_metric_for_kahler() {
        let g = m(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            structure_from(&g, &canonical_skew(1), Flavor::Kahler, tol()),
            Err(CompatError::NotPositive(_))
        ));
    }

    #[test]
    fn pair_predicates() {
        let ok = is_compatible(
            &Pair::OmegaStructure {
                omega: canonical_skew(1),
                structure: canonical_complex(1),
            },
            Flavor::Kahler,
            tol(),
        );
        assert!(ok.passed(), "{ok}");
        let para = is_compatible(
            &Pair::OmegaStructure {
                omega: canonical_skew(1),
                structure: m(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            },
            Flavor::ParaKahler,
            tol(),
        );
        assert!(para.entry("Omega(Ju,Jv) = -Omega(u,v)").unwrap().passed);
        assert!(para.passed(), "{para}");
        let neg = is_compatible(
            &Pair::OmegaStructure {
                omega: canonical_skew(1),
                structure: -canonical_complex(1),
            },
            Flavor::Kahler,
            tol(),
        );
        assert!(!neg.passed());
        assert!(!neg.entry("Omega(u,Tv) positive definite").unwrap().passed);
    }

    #[test]
    fn complete_canonical_triples() {
        let t = complete_triple(
            &Pair::MetricStructure {
                metric: Matrix::identity(2, 2),
                structure: canonical_complex(1),
            },
            Flavor::Kahler,
            tol(),
        )
        .unwrap();
        assert_eq!(t.omega, canonical_skew(1));
        let t = complete_triple(
            &Pair::OmegaStructure {
                omega: canonical_skew(1),
                structure: canonical_para(1),
            },
            Flavor::ParaKahler,
            tol(),
        )
        .unwrap();
        assert!(inertia(&t.metric, tol()).is_neutral());
        assert_eq!(t, CompatibleTriple::canonical(1, Flavor::ParaKahler));
    }

    #[test]
    fn canonical_splittings() {
        let t = CompatibleTriple::canonical(2, Flavor::Kahler);
        let s = lagrangian_orthogonal_decomposition(&t, tol()).unwrap();
        let id = Matrix::identity(4, 4);
        assert_eq!(s.e1, id.columns(0, 2).into_owned());
        assert_eq!(s.e2, id.columns(2, 2).into_owned());

        let t = CompatibleTriple::canonical(1, Flavor::ParaKahler);
        let s = lagrangian_orthogonal_decomposition(&t, tol()).unwrap();
        assert!(s.report.passed());
        // the ±1 eigenspaces are Lagrangian but g-null, so E1/E2 are the
        // g-definite combinations of them
        let j = t.para_complex_structure(tol()).unwrap();
        let plus = &j.eigen_plus;
        assert!((plus.transpose() * &t.metric * plus).norm() < 1e-15);
    }
}
