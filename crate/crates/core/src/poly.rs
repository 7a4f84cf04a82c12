//! Multivariate polynomials with real coefficients and matrices of them:
//! the exact evaluator behind the polynomial derivative mode.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::numkernel::Matrix;

/// `Σ c_α · x^α` in `nvars` variables; zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PolyRepr", try_from = "PolyRepr")]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

/// Serialized form: `{"nvars": m, "terms": [[[e₁, …, e_m], c], …]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PolyRepr {
    nvars: usize,
    terms: Vec<(Vec<u32>, f64)>,
}

impl From<Poly> for PolyRepr {
    fn from(p: Poly) -> Self {
        PolyRepr {
            nvars: p.nvars,
            terms: p.terms.into_iter().collect(),
        }
    }
}

impl TryFrom<PolyRepr> for Poly {
    type Error = String;

    fn try_from(r: PolyRepr) -> Result<Self, String> {
        let mut p = Poly::zero(r.nvars);
        for (exps, c) in r.terms {
            if exps.len() != r.nvars {
                return Err(format!("monomial has {} exponents, expected {}", exps.len(), r.nvars));
            }
            if !c.is_finite() {
                return Err("non-finite coefficient".into());
            }
            p.add_term(exps, c);
        }
        Ok(p)
    }
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// The coordinate function `xᵢ`.
    pub fn var(nvars: usize, i: usize) -> Self {
        Self::monomial(nvars, &[(i, 1)], 1.0)
    }

    /// `c · Π x_i^{e_i}` from `(i, e_i)` pairs.
    pub fn monomial(nvars: usize, powers: &[(usize, u32)], c: f64) -> Self {
        let mut exps = vec![0; nvars];
        for &(i, e) in powers {
            exps[i] += e;
        }
        let mut p = Self::zero(nvars);
        p.add_term(exps, c);
        p
    }

    pub fn add_term(&mut self, exps: Vec<u32>, c: f64) {
        debug_assert_eq!(exps.len(), self.nvars);
        let entry = self.terms.entry(exps.clone()).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.remove(&exps);
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; `0` for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product::<f64>())
            .sum()
    }

    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut d = e.clone();
                d[i] -= 1;
                out.add_term(d, c * e[i] as f64);
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), c * s);
        }
        out
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self + &rhs.scale(-1.0)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }
}

/// Row-major matrix of polynomials in a common set of variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyMatrix {
    pub rows: usize,
    pub cols: usize,
    pub nvars: usize,
    pub entries: Vec<Poly>,
}

impl PolyMatrix {
    pub fn zeros(rows: usize, cols: usize, nvars: usize) -> Self {
        Self {
            rows,
            cols,
            nvars,
            entries: vec![Poly::zero(nvars); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, nvars: usize, f: impl Fn(usize, usize) -> Poly) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                entries.push(f(r, c));
            }
        }
        Self {
            rows,
            cols,
            nvars,
            entries,
        }
    }

    pub fn constant(m: &Matrix, nvars: usize) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), nvars, |r, c| Poly::constant(nvars, m[(r, c)]))
    }

    pub fn identity(n: usize, nvars: usize) -> Self {
        Self::constant(&Matrix::identity(n, n), nvars)
    }

    /// The identity map `x ↦ x` as a column.
    pub fn coordinates(nvars: usize) -> Self {
        Self::from_fn(nvars, 1, nvars, |r, _| Poly::var(nvars, r))
    }

    pub fn get(&self, r: usize, c: usize) -> &Poly {
        &self.entries[r * self.cols + c]
    }

    pub fn get_mut(&mut self, r: usize, c: usize) -> &mut Poly {
        &mut self.entries[r * self.cols + c]
    }

    pub fn degree(&self) -> u32 {
        self.entries.iter().map(Poly::degree).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c).eval(x))
    }

    pub fn derivative(&self, i: usize) -> Self {
        Self::from_fn(self.rows, self.cols, self.nvars, |r, c| self.get(r, c).derivative(i))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, self.nvars, |r, c| self.get(c, r).clone())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_fn(self.rows, self.cols, self.nvars, |r, c| self.get(r, c).scale(s))
    }

    /// Jacobian of a column `Φ`: entry `(r, i)` is `∂ᵢΦ_r`.
    pub fn jacobian(&self) -> Self {
        assert_eq!(self.cols, 1, "jacobian of a column");
        Self::from_fn(self.rows, self.nvars, self.nvars, |r, i| self.get(r, 0).derivative(i))
    }

    /// Substitute polynomials for the variables: `p(φ₁(y), …, φ_m(y))`.
    pub fn compose(&self, map: &PolyMatrix) -> Self {
        assert_eq!(map.cols, 1);
        assert_eq!(map.rows, self.nvars);
        let sub = |p: &Poly| {
            let mut out = Poly::zero(map.nvars);
            for (e, c) in p.terms() {
                let mut term = Poly::constant(map.nvars, c);
                for (i, &k) in e.iter().enumerate() {
                    for _ in 0..k {
                        term = &term * map.get(i, 0);
                    }
                }
                out = &out + &term;
            }
            out
        };
        Self::from_fn(self.rows, self.cols, map.nvars, |r, c| sub(self.get(r, c)))
    }
}

impl Add for &PolyMatrix {
    type Output = PolyMatrix;
    fn add(self, rhs: &PolyMatrix) -> PolyMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        PolyMatrix::from_fn(self.rows, self.cols, self.nvars, |r, c| self.get(r, c) + rhs.get(r, c))
    }
}

impl Sub for &PolyMatrix {
    type Output = PolyMatrix;
    fn sub(self, rhs: &PolyMatrix) -> PolyMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        PolyMatrix::from_fn(self.rows, self.cols, self.nvars, |r, c| self.get(r, c) - rhs.get(r, c))
    }
}

impl Mul for &PolyMatrix {
    type Output = PolyMatrix;
    fn mul(self, rhs: &PolyMatrix) -> PolyMatrix {
        assert_eq!(self.cols, rhs.rows);
        PolyMatrix::from_fn(self.rows, rhs.cols, self.nvars, |r, c| {
            let mut acc = Poly::zero(self.nvars);
            for k in 0..self.cols {
                acc = &acc + &(self.get(r, k) * rhs.get(k, c));
            }
            acc
        })
    }
}
