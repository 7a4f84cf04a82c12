//! Induced (para-)Kähler data on a discretized space of loops into a
//! constant-coefficient target `ℝ^{2m}`, and its coherence along an
//! ascending family of targets `ℝ² ⊂ ℝ⁴ ⊂ …`.
//!
//! A loop and its tangent vectors are `N × 2m` arrays, row `t` being the
//! value at the `t`-th sample of the circle. Induced forms are quadrature
//! sums `Σₜ νₜ·B(Xₜ, Yₜ)` evaluated in index order, so inserting zero
//! coordinates never changes a result.

use rand::Rng;
use thiserror::Error;

use crate::compat::{CompatibleTriple, Flavor};
use crate::limits::{check_coherent, BondingSystem, CoherentSequence, Variance};
use crate::numkernel::{inertia, Matrix, Tolerance};
use crate::report::Report;
use crate::sample::SampleRng;
use crate::tensor::StructureMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoopError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("quadrature weights must be positive and sum to 1")]
    InvalidWeights,
    #[error(transparent)]
    Limits(#[from] crate::limits::LimitError),
}

pub type Result<T> = std::result::Result<T, LoopError>;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedLoopSpace {
    pub target: CompatibleTriple,
    /// `ν`; uniform `1/N` by default, which is also the trapezoid rule on
    /// the circle.
    pub weights: Vec<f64>,
    /// The base loop `f`; the induced forms have constant coefficients and
    /// do not depend on it.
    pub base_loop: Matrix,
}

impl DiscretizedLoopSpace {
    pub fn new(target: CompatibleTriple, samples: usize) -> Self {
        let dim = target.dim();
        Self {
            target,
            weights: vec![1.0 / samples as f64; samples],
            base_loop: Matrix::zeros(samples, dim),
        }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.len() != self.samples() || weights.iter().any(|w| !(*w > 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(LoopError::InvalidWeights);
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn with_loop(mut self, base_loop: Matrix) -> Result<Self> {
        self.conforms(&base_loop)?;
        self.base_loop = base_loop;
        Ok(self)
    }

    pub fn samples(&self) -> usize {
        self.weights.len()
    }

    pub fn target_dim(&self) -> usize {
        self.target.dim()
    }

    fn conforms(&self, x: &Matrix) -> Result<()> {
        if x.nrows() == self.samples() && x.ncols() == self.target_dim() {
            Ok(())
        } else {
            Err(LoopError::ShapeMismatch(format!(
                "expected {}×{} array, got {}×{}",
                self.samples(),
                self.target_dim(),
                x.nrows(),
                x.ncols()
            )))
        }
    }

    /// `Σₜ νₜ·Xₜᵀ·B·Yₜ`, summed in index order.
    fn quadrature(&self, b: &Matrix, x: &Matrix, y: &Matrix) -> f64 {
        let d = self.target_dim();
        let mut total = 0.0;
        for (t, w) in self.weights.iter().enumerate() {
            let mut acc = 0.0;
            for a in 0..d {
                for c in 0..d {
                    acc += x[(t, a)] * b[(a, c)] * y[(t, c)];
                }
            }
            total += w * acc;
        }
        total
    }

    /// `(𝓘X)ₜ = 𝓘·Xₜ`
    pub fn apply_structure(&self, x: &Matrix) -> Result<Matrix> {
        self.conforms(x)?;
        let s = &self.target.structure;
        let d = self.target_dim();
        Ok(Matrix::from_fn(x.nrows(), d, |t, a| {
            let mut acc = 0.0;
            for c in 0..d {
                acc += s[(a, c)] * x[(t, c)];
            }
            acc
        }))
    }

    /// Block-diagonal `diag(ν₀B, …, ν_{N−1}B)`: the induced form as a
    /// matrix on `ℝ^{N·2m}`.
    pub fn induced_matrix(&self, b: &Matrix) -> Matrix {
        let d = self.target_dim();
        let n = self.samples();
        let mut m = Matrix::zeros(n * d, n * d);
        for (t, w) in self.weights.iter().enumerate() {
            m.view_mut((t * d, t * d), (d, d)).copy_from(&(b * *w));
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InducedValues {
    pub omega: f64,
    pub metric: f64,
    pub structure_x: Matrix,
}

/// `Ω_f(X, Y)`, `g_f(X, Y)` and `𝓘X`.
pub fn induced_forms(space: &DiscretizedLoopSpace, x: &Matrix, y: &Matrix) -> Result<InducedValues> {
    space.conforms(x)?;
    space.conforms(y)?;
    Ok(InducedValues {
        omega: space.quadrature(&space.target.omega, x, y),
        metric: space.quadrature(&space.target.metric, x, y),
        structure_x: space.apply_structure(x)?,
    })
}

/// Integer-valued tangent array: with integer target matrices and dyadic
/// weights every quadrature sum is computed exactly.
pub fn integer_tangent(rng: &mut SampleRng, samples: usize, dim: usize) -> Matrix {
    Matrix::from_fn(samples, dim, |_, _| rng.random_range(-4i32..=4) as f64)
}

/// Induced compatibility on `trials` random pairs of tangent arrays:
/// `Ω_f(𝓘X, 𝓘Y) = ±Ω_f(X, Y)`, `Ω_f(X, Y) = g_f(𝓘X, Y)` and the metric
/// identity of the flavor, plus the signature of the induced metric.
pub fn check_induced_compatibility(
    space: &DiscretizedLoopSpace,
    trials: usize,
    rng: &mut SampleRng,
    tol: Tolerance,
) -> Report {
    let flavor = space.target.flavor;
    let mut report = Report::new(format!(
        "induced {} structure, N = {}, target dim {}",
        flavor.name(),
        space.samples(),
        space.target_dim()
    ));
    let induced_g = space.induced_matrix(&space.target.metric);
    let signs = inertia(&induced_g, tol);
    report.note(format!(
        "induced metric signature ({}, {}), {} null",
        signs.positive, signs.negative, signs.zero
    ));
    match flavor {
        Flavor::Kahler => {
            let margin = crate::numkernel::min_eigenvalue(&induced_g);
            report.push("g_f positive definite", margin > tol.atol, margin);
        }
        Flavor::ParaKahler => {
            let defect = signs.positive.abs_diff(signs.negative) + signs.zero;
            report.push("g_f neutral", signs.is_neutral(), defect as f64);
        }
    }
    let invariance_sign = match flavor {
        Flavor::Kahler => 1.0,
        Flavor::ParaKahler => -1.0,
    };
    let (n, d) = (space.samples(), space.target_dim());
    let mut worst = [0.0_f64; 4];
    let mut positive_trials = true;
    for _ in 0..trials {
        let x = integer_tangent(rng, n, d);
        let y = integer_tangent(rng, n, d);
        let ix = space.apply_structure(&x).expect("conforming");
        let iy = space.apply_structure(&y).expect("conforming");
        let omega = space.quadrature(&space.target.omega, &x, &y);
        let g = &space.target.metric;
        worst[0] = worst[0].max((space.quadrature(&space.target.omega, &ix, &iy) - invariance_sign * omega).abs());
        worst[1] = worst[1].max((omega - space.quadrature(g, &ix, &y)).abs());
        let metric_identity = match flavor {
            Flavor::Kahler => space.quadrature(g, &x, &y) - space.quadrature(&space.target.omega, &x, &iy),
            Flavor::ParaKahler => space.quadrature(g, &x, &y) - space.quadrature(&space.target.omega, &ix, &y),
        };
        worst[2] = worst[2].max(metric_identity.abs());
        worst[3] = worst[3]
            .max((space.quadrature(&space.target.omega, &x, &y) + space.quadrature(&space.target.omega, &y, &x)).abs());
        if flavor == Flavor::Kahler && x.iter().any(|v| *v != 0.0) && space.quadrature(g, &x, &x) <= 0.0 {
            positive_trials = false;
        }
    }
    let scale = space.target.omega.norm() * 16.0 * d as f64;
    let thr = tol.threshold(scale);
    let invariance_name = match flavor {
        Flavor::Kahler => "Omega_f(IX,IY) = Omega_f(X,Y)",
        Flavor::ParaKahler => "Omega_f(JX,JY) = -Omega_f(X,Y)",
    };
    report.check(invariance_name, worst[0], thr);
    report.check("Omega_f(X,Y) = g_f(TX,Y)", worst[1], thr);
    let metric_name = match flavor {
        Flavor::Kahler => "g_f(X,Y) = Omega_f(X,IY)",
        Flavor::ParaKahler => "g_f(X,Y) = Omega_f(JX,Y)",
    };
    report.check(metric_name, worst[2], thr);
    report.check("Omega_f antisymmetric", worst[3], thr);
    if flavor == Flavor::Kahler {
        report.push("g_f(X,X) > 0 on trials", positive_trials, 0.0);
    }
    report
}

/// `ι(x, y) = (x, 0, y, 0)`: `ℝ^{2m} → ℝ^{2m′}` respecting the
/// `(x-block, y-block)` layout of the canonical structures.
pub fn symplectic_inclusion(m: usize, m_big: usize) -> Matrix {
    let mut i = Matrix::zeros(2 * m_big, 2 * m);
    for k in 0..m {
        i[(k, k)] = 1.0;
        i[(m_big + k, m + k)] = 1.0;
    }
    i
}

/// Direct tower of the targets' model spaces, with `ι` from
/// [`symplectic_inclusion`] and `P = ιᵀ`.
pub fn target_tower(targets: &[CompatibleTriple]) -> Result<BondingSystem> {
    let dims: Vec<usize> = targets.iter().map(|t| t.dim()).collect();
    if dims.iter().any(|d| d % 2 != 0) || dims.windows(2).any(|w| w[0] > w[1]) {
        return Err(LoopError::ShapeMismatch(
            "targets must have even, nondecreasing dimensions".into(),
        ));
    }
    let inclusions: Vec<Matrix> = dims
        .windows(2)
        .map(|w| symplectic_inclusion(w[0] / 2, w[1] / 2))
        .collect();
    let projections = inclusions.iter().map(|i| i.transpose()).collect();
    Ok(BondingSystem::from_consecutive(
        dims,
        Variance::Direct,
        inclusions,
        Some(projections),
    )?)
}

/// Coherence of the target structures as direct sequences, and of the
/// induced loop-space data: level-`i` values on `X, Y` equal level-`j`
/// values on `ιX, ιY`, and `𝓘ⱼ(ιX) = ι(𝓘ᵢX)`.
pub fn ascending_coherence(
    targets: &[CompatibleTriple],
    samples: usize,
    trials: usize,
    rng: &mut SampleRng,
    tol: Tolerance,
) -> Result<Report> {
    let tower = target_tower(targets)?;
    let mut report = Report::new(format!("ascending coherence, {} levels, N = {samples}", targets.len()));
    let sequences = [
        (
            "Omega",
            targets
                .iter()
                .map(|t| StructureMatrix::skew(t.omega.clone()))
                .collect::<Vec<_>>(),
        ),
        (
            "g",
            targets
                .iter()
                .map(|t| StructureMatrix::symmetric(t.metric.clone()))
                .collect(),
        ),
        (
            "I",
            targets
                .iter()
                .map(|t| StructureMatrix::endomorphism(t.structure.clone()))
                .collect(),
        ),
    ];
    for (name, levels) in sequences {
        let seq = CoherentSequence::new(tower.clone(), levels)?;
        for mut e in check_coherent(&seq, tol)?.entries {
            e.name = format!("target {name} {}", e.name);
            report.entries.push(e);
        }
    }
    let spaces: Vec<DiscretizedLoopSpace> = targets
        .iter()
        .map(|t| DiscretizedLoopSpace::new(t.clone(), samples))
        .collect();
    for i in 0..targets.len() {
        for j in i + 1..targets.len() {
            let iota = tower.map(i, j)?;
            let lift = |x: &Matrix| x * iota.transpose();
            let mut worst = [0.0_f64; 3];
            for _ in 0..trials {
                let x = integer_tangent(rng, samples, targets[i].dim());
                let y = integer_tangent(rng, samples, targets[i].dim());
                let low = induced_forms(&spaces[i], &x, &y)?;
                let high = induced_forms(&spaces[j], &lift(&x), &lift(&y))?;
                worst[0] = worst[0].max((low.omega - high.omega).abs());
                worst[1] = worst[1].max((low.metric - high.metric).abs());
                worst[2] = worst[2].max((lift(&low.structure_x) - high.structure_x).norm());
            }
            report.check(format!("loops ({i},{j}): Omega_f"), worst[0], tol.threshold(1.0));
            report.check(format!("loops ({i},{j}): g_f"), worst[1], tol.threshold(1.0));
            report.check(format!("loops ({i},{j}): I_f"), worst[2], tol.threshold(1.0));
        }
    }
    Ok(report)
}

/// Canonical targets `ℝ², ℝ⁴, …` of the given flavor, `levels` of them.
pub fn canonical_targets(levels: usize, flavor: Flavor) -> Vec<CompatibleTriple> {
    (1..=levels).map(|m| CompatibleTriple::canonical(m, flavor)).collect()
}

/// The demo: induced compatibility at every level plus ascending coherence,
/// for canonical targets.
pub fn demo(levels: usize, samples: usize, flavor: Flavor, rng: &mut SampleRng, tol: Tolerance) -> Result<Report> {
    let targets = canonical_targets(levels, flavor);
    let mut report = Report::new(format!("loop-space demo, {levels} levels, N = {samples}"));
    for (k, t) in targets.iter().enumerate() {
        let space = DiscretizedLoopSpace::new(t.clone(), samples);
        let sub = check_induced_compatibility(&space, 8, rng, tol);
        for mut e in sub.entries {
            e.name = format!("level {k}: {}", e.name);
            report.entries.push(e);
        }
        report
            .notes
            .extend(sub.notes.into_iter().map(|n| format!("level {k}: {n}")));
    }
    report.extend(ascending_coherence(&targets, samples, 8, rng, tol)?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::{canonical_complex, rng};

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn constant_arrays_reproduce_target_values() {
        let t = CompatibleTriple::canonical(1, Flavor::Kahler);
        let space = DiscretizedLoopSpace::new(t.clone(), 8);
        let x = Matrix::from_fn(8, 2, |_, c| [1.0, 2.0][c]);
        let y = Matrix::from_fn(8, 2, |_, c| [-3.0, 0.5][c]);
        let v = induced_forms(&space, &x, &y).unwrap();
        let (xv, yv) = (x.row(0).transpose(), y.row(0).transpose());
        assert!((v.omega - xv.dot(&(&t.omega * &yv))).abs() < 1e-14);
        let w = induced_forms(&space, &y, &x).unwrap();
        assert_eq!(v.omega, -w.omega);
    }

    #[test]
    fn metric_equals_omega_on_structure_pairs() {
        let t = CompatibleTriple::canonical(1, Flavor::Kahler);
        let space = DiscretizedLoopSpace::new(t, 8);
        let mut r = rng(4);
        let x = integer_tangent(&mut r, 8, 2);
        let ix = space.apply_structure(&x).unwrap();
        let v = induced_forms(&space, &x, &ix).unwrap();
        // g(X, X) = Ω(X, 𝓘X)
        assert_eq!(induced_forms(&space, &x, &x).unwrap().metric, v.omega);
    }

    #[test]
    fn compatibility_reports() {
        let mut r = rng(5);
        let kahler = DiscretizedLoopSpace::new(CompatibleTriple::canonical(1, Flavor::Kahler), 8);
        assert!(check_induced_compatibility(&kahler, 10, &mut r, tol()).passed());
        let para = DiscretizedLoopSpace::new(CompatibleTriple::canonical(1, Flavor::ParaKahler), 8);
        let rep = check_induced_compatibility(&para, 10, &mut r, tol());
        assert!(rep.passed(), "{rep}");
        assert!(rep.notes[0].contains("(8, 8)"));
        let mut wrong = CompatibleTriple::canonical(1, Flavor::Kahler);
        wrong.structure = -canonical_complex(1);
        let bad = DiscretizedLoopSpace::new(wrong, 8);
        assert!(!check_induced_compatibility(&bad, 10, &mut r, tol()).passed());
    }

    #[test]
    fn ascending_canonical_targets() {
        let mut r = rng(6);
        for flavor in [Flavor::Kahler, Flavor::ParaKahler] {
            let targets = canonical_targets(3, flavor);
            let rep = ascending_coherence(&targets, 8, 5, &mut r, tol()).unwrap();
            assert!(rep.passed(), "{rep}");
            assert_eq!(rep.max_residual(), 0.0);
        }
        let mut targets = canonical_targets(3, Flavor::Kahler);
        targets[1].structure[(0, 2)] += 1e-3;
        assert!(!ascending_coherence(&targets, 8, 5, &mut r, tol()).unwrap().passed());
    }

    #[test]
    fn weights_must_be_a_probability() {
        let space = DiscretizedLoopSpace::new(CompatibleTriple::canonical(1, Flavor::Kahler), 4);
        assert_eq!(
            space.clone().with_weights(vec![0.5, 0.5, 0.0, 0.0]),
            Err(LoopError::InvalidWeights)
        );
        assert!(space.with_weights(vec![0.1, 0.2, 0.3, 0.4]).is_ok());
    }
}
