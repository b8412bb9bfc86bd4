//! Sparse polynomials in the normalized Hermite basis over Gaussian space.
//!
//! The basis is the probabilists' Hermite family normalized to unit variance
//! under the standard Gaussian: `H_0 = 1`, `H_1(x) = x`, and
//!
//! ```text
//! H_{r+1}(x) = (x H_r(x) - sqrt(r) H_{r-1}(x)) / sqrt(r + 1),
//! ```
//!
//! so that `E[H_r(X) H_s(X)] = 1{r = s}` for `X ~ N(0,1)`. A multivariate
//! basis element is indexed by a [`MultiIndex`] `sigma` (variable -> degree,
//! zero degrees never stored) and equals the product of the univariate
//! factors. A [`HermitePolynomial`] is a finite real combination of such
//! elements on a fixed number of variables.
//!
//! Working in this basis makes the quantities the rest of the crate needs
//! exact coefficient sums: for `rho`-correlated standard Gaussian vectors
//! `(X, Y)` (meaning `Y = rho X + sqrt(1 - rho^2) Z` coordinatewise),
//!
//! ```text
//! E[A(X) B(Y)] = sum_sigma rho^{|sigma|} Ahat(sigma) Bhat(sigma),
//! ```
//!
//! with `|sigma|` the total degree; the Ornstein-Uhlenbeck noise operator
//! acts diagonally, `U_nu A` having coefficients `nu^{|sigma|} Ahat(sigma)`;
//! and norms, variances, and coordinate influences are the evident squared
//! coefficient sums.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Sparse multi-index: map from variable index to a positive degree.
///
/// The canonical form never stores zero degrees, so two indices describing
/// the same monomial compare equal. Ordering is the lexicographic order on
/// the sorted `(variable, degree)` pair list, which makes iteration over a
/// polynomial's terms deterministic.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex {
    entries: BTreeMap<usize, u32>,
}

impl MultiIndex {
    /// The empty index (the constant basis element).
    pub fn empty() -> Self {
        MultiIndex {
            entries: BTreeMap::new(),
        }
    }

    /// Index with a single variable raised to `degree`.
    pub fn single(var: usize, degree: u32) -> Self {
        let mut entries = BTreeMap::new();
        if degree > 0 {
            entries.insert(var, degree);
        }
        MultiIndex { entries }
    }

    /// Builds an index from `(variable, degree)` pairs. Duplicate variables
    /// have their degrees summed; zero degrees are dropped.
    pub fn from_pairs<I: IntoIterator<Item = (usize, u32)>>(pairs: I) -> Self {
        let mut entries: BTreeMap<usize, u32> = BTreeMap::new();
        for (var, deg) in pairs {
            if deg > 0 {
                *entries.entry(var).or_insert(0) += deg;
            }
        }
        MultiIndex { entries }
    }

    /// Degree of `var` (zero when absent).
    pub fn degree_of(&self, var: usize) -> u32 {
        self.entries.get(&var).copied().unwrap_or(0)
    }

    /// Total degree `|sigma| = sum_i sigma_i`.
    pub fn total_degree(&self) -> u32 {
        self.entries.values().sum()
    }

    /// Number of variables appearing with nonzero degree.
    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    /// True when every stored degree equals one.
    pub fn is_multilinear(&self) -> bool {
        self.entries.values().all(|&d| d == 1)
    }

    /// True for the constant index.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest variable index appearing, if any.
    pub fn max_var(&self) -> Option<usize> {
        self.entries.keys().next_back().copied()
    }

    /// Iterates `(variable, degree)` pairs in increasing variable order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.entries.iter().map(|(&v, &d)| (v, d))
    }
}

/// Evaluates the normalized Hermite polynomial `H_r` at `x` via the stable
/// three-term recurrence.
///
/// `hermite_eval(0, x) = 1` and `hermite_eval(1, x) = x` exactly.
pub fn hermite_eval(r: u32, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("hermite_eval: non-finite input {x}")));
    }
    match r {
        0 => Ok(1.0),
        1 => Ok(x),
        _ => {
            let mut prev = 1.0; // H_0
            let mut cur = x; // H_1
            for s in 1..r {
                let next = (x * cur - (s as f64).sqrt() * prev) / ((s + 1) as f64).sqrt();
                prev = cur;
                cur = next;
            }
            Ok(cur)
        }
    }
}

/// Exact functionals of a polynomial, read off its coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Functionals {
    /// `||A||_2^2 = sum_sigma Ahat(sigma)^2`.
    pub norm2_sq: f64,
    /// Variance under the Gaussian measure: the same sum without the
    /// constant term.
    pub variance: f64,
    /// `influences[i] = sum over sigma with sigma_i != 0 of Ahat(sigma)^2`.
    pub influences: Vec<f64>,
    /// `sum_sigma |sigma| Ahat(sigma)^2` with `|sigma|` the total degree.
    /// Upper-bounds the sum of the coordinate influences; they agree on
    /// multilinear polynomials.
    pub total_influence: f64,
}

/// A sparse polynomial in the normalized Hermite basis on a fixed number of
/// variables. Immutable; every operation returns a new polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitePolynomial {
    num_vars: usize,
    coeffs: BTreeMap<MultiIndex, f64>,
    max_single_degree: u32,
}

impl HermitePolynomial {
    /// The zero polynomial (empty coefficient map).
    pub fn zero(num_vars: usize) -> Self {
        HermitePolynomial {
            num_vars,
            coeffs: BTreeMap::new(),
            max_single_degree: 0,
        }
    }

    /// A constant polynomial.
    pub fn constant(num_vars: usize, value: f64) -> Self {
        let mut coeffs = BTreeMap::new();
        if value != 0.0 {
            coeffs.insert(MultiIndex::empty(), value);
        }
        HermitePolynomial {
            num_vars,
            coeffs,
            max_single_degree: 0,
        }
    }

    /// Builds a polynomial from `(multi-index, coefficient)` terms.
    /// Coefficients of duplicate indices are summed; exact zeros are not
    /// stored. Fails when an index references a variable `>= num_vars` or a
    /// coefficient is not finite.
    pub fn from_terms<I>(num_vars: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, f64)>,
    {
        let mut coeffs: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (idx, c) in terms {
            if !c.is_finite() {
                return Err(Error::domain(format!("non-finite coefficient {c}")));
            }
            if let Some(v) = idx.max_var() {
                if v >= num_vars {
                    return Err(Error::shape(format!(
                        "term references variable {v} but the polynomial has {num_vars} variables"
                    )));
                }
            }
            *coeffs.entry(idx).or_insert(0.0) += c;
        }
        coeffs.retain(|_, c| *c != 0.0);
        Ok(Self::from_clean_map(num_vars, coeffs))
    }

    fn from_clean_map(num_vars: usize, coeffs: BTreeMap<MultiIndex, f64>) -> Self {
        let max_single_degree = coeffs
            .keys()
            .flat_map(|idx| idx.iter().map(|(_, d)| d))
            .max()
            .unwrap_or(0);
        HermitePolynomial {
            num_vars,
            coeffs,
            max_single_degree,
        }
    }

    /// Re-declares the polynomial on `num_vars` variables. Widening always
    /// succeeds; shrinking below a referenced variable is a shape error.
    pub fn with_num_vars(&self, num_vars: usize) -> Result<Self> {
        let needed = self
            .coeffs
            .keys()
            .filter_map(MultiIndex::max_var)
            .max()
            .map_or(0, |v| v + 1);
        if num_vars < needed {
            return Err(Error::shape(format!(
                "cannot shrink to {num_vars} variables: variable {} is in use",
                needed - 1
            )));
        }
        let mut out = self.clone();
        out.num_vars = num_vars;
        Ok(out)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Number of stored (nonzero) terms.
    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    /// Total degree: maximum `|sigma|` over stored terms, 0 for the zero
    /// polynomial.
    pub fn degree(&self) -> u32 {
        self.coeffs
            .keys()
            .map(MultiIndex::total_degree)
            .max()
            .unwrap_or(0)
    }

    /// Coefficient of `sigma` (zero when absent).
    pub fn coeff(&self, idx: &MultiIndex) -> f64 {
        self.coeffs.get(idx).copied().unwrap_or(0.0)
    }

    /// Iterates `(multi-index, coefficient)` in canonical index order.
    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> + '_ {
        self.coeffs.iter().map(|(idx, &c)| (idx, c))
    }

    /// True when every stored term is multilinear.
    pub fn is_multilinear(&self) -> bool {
        self.max_single_degree <= 1
    }

    /// Evaluates the polynomial at a point.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.num_vars {
            return Err(Error::shape(format!(
                "eval: point has {} coordinates, polynomial has {} variables",
                x.len(),
                self.num_vars
            )));
        }
        if self.coeffs.is_empty() {
            return Ok(0.0);
        }
        let width = self.max_single_degree as usize + 1;
        // Hermite table: table[v * width + r] = H_r(x[v]), filled by the
        // recurrence in one pass per variable.
        let mut table = vec![0.0f64; self.num_vars * width];
        for (v, &xv) in x.iter().enumerate() {
            if !xv.is_finite() {
                return Err(Error::domain(format!("eval: non-finite coordinate {xv}")));
            }
            let row = &mut table[v * width..(v + 1) * width];
            row[0] = 1.0;
            if width > 1 {
                row[1] = xv;
                for s in 1..(width - 1) {
                    row[s + 1] =
                        (xv * row[s] - (s as f64).sqrt() * row[s - 1]) / ((s + 1) as f64).sqrt();
                }
            }
        }
        let mut acc = 0.0;
        for (idx, &c) in &self.coeffs {
            let mut term = c;
            for (v, d) in idx.iter() {
                term *= table[v * width + d as usize];
            }
            acc += term;
        }
        Ok(acc)
    }

    /// Exact functionals (norm, variance, influences, total influence).
    pub fn functionals(&self) -> Functionals {
        let mut norm2_sq = 0.0;
        let mut variance = 0.0;
        let mut influences = vec![0.0; self.num_vars];
        let mut total_influence = 0.0;
        for (idx, &c) in &self.coeffs {
            let c2 = c * c;
            norm2_sq += c2;
            if !idx.is_empty() {
                variance += c2;
                for (v, _) in idx.iter() {
                    influences[v] += c2;
                }
                total_influence += idx.total_degree() as f64 * c2;
            }
        }
        Functionals {
            norm2_sq,
            variance,
            influences,
            total_influence,
        }
    }

    /// Keeps only terms of total degree `<= d`.
    pub fn degree_truncate(&self, d: u32) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(idx, _)| idx.total_degree() <= d)
            .map(|(idx, &c)| (idx.clone(), c))
            .collect();
        Self::from_clean_map(self.num_vars, coeffs)
    }

    /// Every coefficient multiplied by a finite `factor`.
    pub fn scale(&self, factor: f64) -> Result<Self> {
        if !factor.is_finite() {
            return Err(Error::domain(format!("scale: factor {factor} is not finite")));
        }
        Self::from_terms(
            self.num_vars,
            self.coeffs.iter().map(|(idx, &c)| (idx.clone(), c * factor)),
        )
    }

    /// Keeps only multilinear terms (every variable degree equal to one).
    pub fn multilinear_truncate(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(idx, _)| idx.is_multilinear())
            .map(|(idx, &c)| (idx.clone(), c))
            .collect();
        Self::from_clean_map(self.num_vars, coeffs)
    }

    /// Ornstein-Uhlenbeck smoothing `U_nu`: scales each coefficient by
    /// `nu^{|sigma|}`. Requires `nu` in `[0, 1]`.
    pub fn ou_smooth(&self, nu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&nu) {
            return Err(Error::domain(format!(
                "ou_smooth: nu = {nu} outside [0, 1]"
            )));
        }
        let coeffs = self
            .coeffs
            .iter()
            .map(|(idx, &c)| (idx.clone(), c * nu.powi(idx.total_degree() as i32)))
            .filter(|&(_, c)| c != 0.0)
            .collect();
        Ok(Self::from_clean_map(self.num_vars, coeffs))
    }

    /// Serializes to the textual term-per-line format:
    ///
    /// ```text
    /// <coefficient> <var>:<deg> [<var>:<deg> ...]
    /// ```
    ///
    /// A bare coefficient is the constant term; `#` starts a comment. Terms
    /// are emitted in canonical index order with variables ascending, and
    /// coefficients print in shortest round-trip form, so equal polynomials
    /// serialize identically.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (idx, &c) in &self.coeffs {
            write!(out, "{c}").unwrap();
            for (v, d) in idx.iter() {
                write!(out, " {v}:{d}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Parses the textual format produced by [`serialize`](Self::serialize).
    ///
    /// The number of variables is inferred as one plus the highest variable
    /// index referenced (zero for an empty file, which parses to the zero
    /// polynomial); use [`with_num_vars`](Self::with_num_vars) to widen.
    /// Duplicate multi-indices are rejected with the offending line number.
    pub fn parse(text: &str) -> Result<Self> {
        let mut coeffs: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        let mut num_vars = 0usize;
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut tokens = content.split_whitespace();
            let coeff_tok = tokens.next().unwrap();
            let c: f64 = coeff_tok.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("malformed coefficient {coeff_tok:?}"),
            })?;
            if !c.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("non-finite coefficient {coeff_tok:?}"),
                });
            }
            let mut pairs: BTreeMap<usize, u32> = BTreeMap::new();
            for tok in tokens {
                let (var_s, deg_s) = tok.split_once(':').ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("expected <var>:<deg>, got {tok:?}"),
                })?;
                let var: usize = var_s.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("malformed variable index {var_s:?}"),
                })?;
                let deg: u32 = deg_s.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("malformed degree {deg_s:?}"),
                })?;
                if deg == 0 {
                    return Err(Error::Parse {
                        line,
                        msg: format!("zero degree for variable {var} (omit the factor instead)"),
                    });
                }
                if pairs.insert(var, deg).is_some() {
                    return Err(Error::Parse {
                        line,
                        msg: format!("variable {var} repeated within one term"),
                    });
                }
                num_vars = num_vars.max(var + 1);
            }
            let idx = MultiIndex { entries: pairs };
            if coeffs.insert(idx, c).is_some() {
                return Err(Error::Parse {
                    line,
                    msg: "duplicate multi-index".to_string(),
                });
            }
        }
        coeffs.retain(|_, c| *c != 0.0);
        Ok(Self::from_clean_map(num_vars, coeffs))
    }
}

/// Exact correlation of two polynomials under `rho`-correlated standard
/// Gaussians:
///
/// ```text
/// <A, B>_rho = sum_sigma rho^{|sigma|} Ahat(sigma) Bhat(sigma).
/// ```
///
/// At `rho = 1` and `B = A` this reproduces `functionals().norm2_sq`
/// bit-for-bit (same terms, same order, same operations).
pub fn exact_correlation(a: &HermitePolynomial, b: &HermitePolynomial, rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!(
            "exact_correlation: rho = {rho} outside [0, 1]"
        )));
    }
    if a.num_vars != b.num_vars {
        return Err(Error::shape(format!(
            "exact_correlation: {} vs {} variables",
            a.num_vars, b.num_vars
        )));
    }
    let mut acc = 0.0;
    for (idx, &ca) in &a.coeffs {
        if let Some(&cb) = b.coeffs.get(idx) {
            acc += rho.powi(idx.total_degree() as i32) * ca * cb;
        }
    }
    Ok(acc)
}

/// Vector-level evaluation interface: `k` real outputs from `num_vars` real
/// inputs. Implemented by polynomial vectors, reduced evaluators, and ad hoc
/// closures; estimators in the rest of the crate consume this trait so they
/// work for both exact-coefficient and black-box functions.
pub trait VectorEval: Send + Sync {
    fn num_vars(&self) -> usize;
    fn k(&self) -> usize;
    /// Writes `f(x)` into `out`; `out.len()` must equal `k()`.
    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()>;
}

struct PolyVector {
    polys: Vec<HermitePolynomial>,
}

impl VectorEval for PolyVector {
    fn num_vars(&self) -> usize {
        self.polys[0].num_vars()
    }
    fn k(&self) -> usize {
        self.polys.len()
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, p) in out.iter_mut().zip(&self.polys) {
            *o = p.eval(x)?;
        }
        Ok(())
    }
}

struct FnVector<F> {
    num_vars: usize,
    k: usize,
    f: F,
}

impl<F> VectorEval for FnVector<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn num_vars(&self) -> usize {
        self.num_vars
    }
    fn k(&self) -> usize {
        self.k
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(x, out);
        Ok(())
    }
}

/// A `k`-component function of `num_vars` Gaussian inputs, held behind a
/// cheaply clonable handle.
#[derive(Clone)]
pub struct VectorFunction(Arc<dyn VectorEval>);

impl VectorFunction {
    /// Wraps `k >= 1` polynomials sharing a common number of variables.
    pub fn from_polys(polys: Vec<HermitePolynomial>) -> Result<Self> {
        if polys.is_empty() {
            return Err(Error::shape("vector function needs at least one component"));
        }
        let n = polys[0].num_vars();
        if polys.iter().any(|p| p.num_vars() != n) {
            return Err(Error::shape(
                "vector function components must share num_vars",
            ));
        }
        Ok(VectorFunction(Arc::new(PolyVector { polys })))
    }

    /// Wraps a black-box evaluator given as a closure.
    pub fn from_fn<F>(num_vars: usize, k: usize, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        VectorFunction(Arc::new(FnVector { num_vars, k, f }))
    }

    /// A constant function with the given value vector.
    pub fn constant(num_vars: usize, value: Vec<f64>) -> Self {
        let k = value.len();
        VectorFunction::from_fn(num_vars, k, move |_, out| out.copy_from_slice(&value))
    }

    /// Wraps any [`VectorEval`] implementation.
    pub fn wrap<E: VectorEval + 'static>(eval: E) -> Self {
        VectorFunction(Arc::new(eval))
    }

    pub fn num_vars(&self) -> usize {
        self.0.num_vars()
    }

    pub fn k(&self) -> usize {
        self.0.k()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.num_vars() {
            return Err(Error::shape(format!(
                "vector eval: point has {} coordinates, function has {} variables",
                x.len(),
                self.num_vars()
            )));
        }
        if out.len() != self.k() {
            return Err(Error::shape(format!(
                "vector eval: output buffer has {} slots, function has k = {}",
                out.len(),
                self.k()
            )));
        }
        self.0.eval_into(x, out)
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.k()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    /// True when the two handles point at the same underlying object.
    pub fn same_object(&self, other: &VectorFunction) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}
