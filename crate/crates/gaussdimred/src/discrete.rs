//! Finite joint probability spaces and their Fourier machinery.
//!
//! A [`JointSpace`] is a distribution on `[q] x [q]` with full-support
//! marginals. Its maximal correlation `rho` is the second singular value of
//! the normalized matrix `Q[x,y] = mu(x,y)/sqrt(mu_A(x) mu_B(y))`; the
//! leading pair is always `(sqrt mu_A, sqrt mu_B)` with value 1, so `rho`
//! is read off the deflated matrix `Q - u0 v0^T`.
//!
//! The singular pairs, rescaled by the square-root marginals, give
//! correlation-aligned orthonormal bases `X_0 = 1, X_1, ..., X_{q-1}` and
//! `Y_0 = 1, Y_1, ...` with `<X_i, Y_j>_mu = rho_i 1{i=j}` and
//! `rho_1 = rho`. Polynomials over `n` coordinates are stored as sparse
//! coefficient maps over multi-indices whose per-variable entry is a basis
//! label in `1..q-1`; the discrete degree of an index is the number of
//! coordinates it touches.
//!
//! The invariance maps transfer multilinear polynomials between this basis
//! and the Hermite basis: character `X^(l)_i` maps to the Gaussian variable
//! `l (q-1) + (i - 1)`, with B-side coefficients scaled by
//! `prod (rho_{sigma_i} / rho)` so that a single Gaussian correlation `rho`
//! reproduces the per-label correlations; the reverse map writes multilinear
//! Hermite coefficients verbatim onto top (`label 1`) characters.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{HermitePolynomial, MultiIndex};

/// Which marginal a function is defined over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// A joint distribution on `[q] x [q]` with full-support marginals.
#[derive(Clone, Debug, Serialize)]
pub struct JointSpace {
    q: usize,
    probs: Vec<Vec<f64>>,
    marginal_a: Vec<f64>,
    marginal_b: Vec<f64>,
    /// Smallest nonzero atom.
    alpha: f64,
    /// Maximal correlation.
    rho: f64,
}

/// One-sided Jacobi SVD of a small dense `q x q` matrix given in columns.
///
/// Rotates column pairs until all are mutually orthogonal to relative
/// round-off, which delivers machine-precision singular values for the tiny
/// alphabets used here. Columns of the result: `a = sum sigma_i u_i v_i^T`
/// with `sigma` descending; left vectors for (numerically) zero singular
/// values are left as zero columns.
fn jacobi_svd(q: usize, mut w: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut v: Vec<Vec<f64>> = (0..q)
        .map(|j| (0..q).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..q {
            for r in p + 1..q {
                let (wp, wr) = {
                    let (lo, hi) = w.split_at_mut(r);
                    (&mut lo[p], &mut hi[0])
                };
                let a: f64 = wp.iter().map(|x| x * x).sum();
                let b: f64 = wr.iter().map(|x| x * x).sum();
                let c: f64 = wp.iter().zip(wr.iter()).map(|(x, y)| x * y).sum();
                if c.abs() <= 1e-15 * (a * b).sqrt() || a == 0.0 || b == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (2.0 * c);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..q {
                    let (x, y) = (wp[i], wr[i]);
                    wp[i] = cs * x - sn * y;
                    wr[i] = sn * x + cs * y;
                }
                let (vp, vr) = {
                    let (lo, hi) = v.split_at_mut(r);
                    (&mut lo[p], &mut hi[0])
                };
                for i in 0..q {
                    let (x, y) = (vp[i], vr[i]);
                    vp[i] = cs * x - sn * y;
                    vr[i] = sn * x + cs * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..q).collect();
    let norms: Vec<f64> = w
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite"));
    let mut sigmas = Vec::with_capacity(q);
    let mut lefts = Vec::with_capacity(q);
    let mut rights = Vec::with_capacity(q);
    for &idx in &order {
        sigmas.push(norms[idx]);
        let u = if norms[idx] > 0.0 {
            w[idx].iter().map(|x| x / norms[idx]).collect()
        } else {
            vec![0.0; q]
        };
        lefts.push(u);
        rights.push(v[idx].clone());
    }
    (sigmas, lefts, rights)
}

fn deflated_singular_triples(
    q: usize,
    probs: &[Vec<f64>],
    mu_a: &[f64],
    mu_b: &[f64],
) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    // Column y of the deflated matrix Q[x,y] - sqrt(mu_a mu_b).
    let cols: Vec<Vec<f64>> = (0..q)
        .map(|y| {
            (0..q)
                .map(|x| {
                    probs[x][y] / (mu_a[x] * mu_b[y]).sqrt() - (mu_a[x] * mu_b[y]).sqrt()
                })
                .collect()
        })
        .collect();
    let (mut sigmas, lefts, rights) = jacobi_svd(q, cols);
    for s in sigmas.iter_mut() {
        *s = s.clamp(0.0, 1.0);
    }
    (sigmas, lefts, rights)
}

/// Validates a `q x q` matrix as a distribution and computes marginals,
/// smallest atom, and maximal correlation.
pub fn build_joint_space(probs: Vec<Vec<f64>>) -> Result<JointSpace> {
    let q = probs.len();
    if q == 0 {
        return Err(Error::domain("joint space: q must be at least 1"));
    }
    if probs.iter().any(|row| row.len() != q) {
        return Err(Error::shape("joint space: matrix must be q x q"));
    }
    let mut total = 0.0;
    let mut alpha = f64::INFINITY;
    for row in &probs {
        for &p in row {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::domain("joint space: entries must be finite and >= 0"));
            }
            if p > 0.0 {
                alpha = alpha.min(p);
            }
            total += p;
        }
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::domain(format!(
            "joint space: entries sum to {total}, not 1"
        )));
    }
    let marginal_a: Vec<f64> = probs.iter().map(|row| row.iter().sum()).collect();
    let marginal_b: Vec<f64> = (0..q).map(|y| probs.iter().map(|row| row[y]).sum()).collect();
    if marginal_a.iter().chain(&marginal_b).any(|&m| m <= 0.0) {
        return Err(Error::domain(
            "joint space: both marginals must have full support",
        ));
    }
    let rho = if q == 1 {
        0.0
    } else {
        deflated_singular_triples(q, &probs, &marginal_a, &marginal_b).0[0]
    };
    Ok(JointSpace {
        q,
        probs,
        marginal_a,
        marginal_b,
        alpha,
        rho,
    })
}

impl JointSpace {
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn marginal(&self, side: Side) -> &[f64] {
        match side {
            Side::A => &self.marginal_a,
            Side::B => &self.marginal_b,
        }
    }

    /// Draws one `(x, y)` atom.
    pub fn sample_pair(&self, rng: &mut ChaCha8Rng) -> (usize, usize) {
        let r: f64 = rng.gen();
        let mut acc = 0.0;
        for x in 0..self.q {
            for y in 0..self.q {
                acc += self.probs[x][y];
                if r < acc {
                    return (x, y);
                }
            }
        }
        (self.q - 1, self.q - 1)
    }

    /// Fills coordinatewise i.i.d. pairs from the product `mu^{tensor n}`.
    pub fn sample_pair_into(&self, rng: &mut ChaCha8Rng, xa: &mut [usize], xb: &mut [usize]) {
        for i in 0..xa.len() {
            let (x, y) = self.sample_pair(rng);
            xa[i] = x;
            xb[i] = y;
        }
    }

    /// Draws one symbol from a marginal.
    pub fn sample_marginal(&self, rng: &mut ChaCha8Rng, side: Side) -> usize {
        let m = self.marginal(side);
        let r: f64 = rng.gen();
        let mut acc = 0.0;
        for (s, &p) in m.iter().enumerate() {
            acc += p;
            if r < acc {
                return s;
            }
        }
        self.q - 1
    }
}

/// The doubly symmetric binary source: `+-1` bits with correlation `rho`.
pub fn dsbs(rho: f64) -> Result<JointSpace> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!("dsbs: rho = {rho} outside [0, 1]")));
    }
    let same = (1.0 + rho) / 4.0;
    let diff = (1.0 - rho) / 4.0;
    build_joint_space(vec![vec![same, diff], vec![diff, same]])
}

/// Uniform distribution on `{(0,0), (0,1), (1,0)}`.
pub fn triple_uniform() -> JointSpace {
    let third = 1.0 / 3.0;
    build_joint_space(vec![vec![third, third], vec![third, 0.0]]).expect("valid by construction")
}

/// Equality source on `[q]`: both parties see the same uniform symbol.
pub fn eq(q: usize) -> Result<JointSpace> {
    if q == 0 {
        return Err(Error::domain("eq: q must be at least 1"));
    }
    let mut probs = vec![vec![0.0; q]; q];
    for (x, row) in probs.iter_mut().enumerate() {
        row[x] = 1.0 / q as f64;
    }
    build_joint_space(probs)
}

/// Parses a source description: `dsbs:<rho>`, `triple-uniform`, `eq:<q>`,
/// or a JSON object `{"q": q, "probs": [row-major entries]}`.
pub fn parse_source_spec(text: &str) -> Result<JointSpace> {
    let text = text.trim();
    if text == "triple-uniform" {
        return Ok(triple_uniform());
    }
    if let Some(arg) = text.strip_prefix("dsbs:") {
        let rho: f64 = arg
            .parse()
            .map_err(|_| Error::config(format!("dsbs: bad correlation {arg:?}")))?;
        return dsbs(rho);
    }
    if let Some(arg) = text.strip_prefix("eq:") {
        let q: usize = arg
            .parse()
            .map_err(|_| Error::config(format!("eq: bad alphabet size {arg:?}")))?;
        return eq(q);
    }
    #[derive(Deserialize)]
    struct SourceJson {
        q: usize,
        probs: Vec<f64>,
    }
    let parsed: SourceJson = serde_json::from_str(text).map_err(|e| {
        Error::config(format!(
            "source spec {text:?} is not a named source or a JSON joint distribution: {e}"
        ))
    })?;
    if parsed.probs.len() != parsed.q * parsed.q {
        return Err(Error::shape(format!(
            "source spec: expected {} probabilities, got {}",
            parsed.q * parsed.q,
            parsed.probs.len()
        )));
    }
    build_joint_space(
        parsed
            .probs
            .chunks(parsed.q)
            .map(|row| row.to_vec())
            .collect(),
    )
}

/// Correlation-aligned orthonormal bases of the two marginals.
#[derive(Clone, Debug, Serialize)]
pub struct AlignedBases {
    q: usize,
    /// Row `i` holds the values of `X_i` on `[q]`.
    basis_a: Vec<Vec<f64>>,
    /// Row `i` holds the values of `Y_i` on `[q]`.
    basis_b: Vec<Vec<f64>>,
    /// `1 = rho_0 >= rho_1 >= ... >= rho_{q-1} >= 0`; `rho_1` is the
    /// maximal correlation.
    sigmas: Vec<f64>,
}

const SIGMA_TOL: f64 = 1e-9;

/// Orthonormalizes `candidate` against `accepted` (coordinate inner
/// product); returns `None` when it is numerically dependent.
fn gram_schmidt_step(candidate: &[f64], accepted: &[Vec<f64>]) -> Option<Vec<f64>> {
    let mut v = candidate.to_vec();
    for prev in accepted {
        let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
        for (vi, pi) in v.iter_mut().zip(prev) {
            *vi -= dot * pi;
        }
    }
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm < 1e-8 {
        return None;
    }
    v.iter_mut().for_each(|a| *a /= norm);
    Some(v)
}

fn sign_fix(u: &mut [f64], v: &mut [f64]) {
    if let Some(&lead) = u.iter().find(|&&x| x.abs() > 1e-12) {
        if lead < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Builds the aligned bases of a joint space from the deflated SVD.
///
/// Pairs with a positive singular value come from the SVD (joint sign fixed
/// by making the first nonzero left entry positive); the null directions are
/// completed independently per side by Gram-Schmidt over the standard basis,
/// which is valid because every cross-correlation against them vanishes.
pub fn aligned_bases(js: &JointSpace) -> AlignedBases {
    let q = js.q;
    let u0: Vec<f64> = js.marginal_a.iter().map(|m| m.sqrt()).collect();
    let v0: Vec<f64> = js.marginal_b.iter().map(|m| m.sqrt()).collect();
    let mut left: Vec<Vec<f64>> = vec![u0.clone()];
    let mut right: Vec<Vec<f64>> = vec![v0.clone()];
    let mut sigmas = vec![1.0];
    if q > 1 {
        let (svals, lefts, rights) = deflated_singular_triples(q, &js.probs, &js.marginal_a, &js.marginal_b);
        for i in 0..q - 1 {
            if svals[i] <= SIGMA_TOL {
                break;
            }
            // Exact arithmetic puts these orthogonal to the leading pair;
            // re-orthonormalize to absorb round-off.
            let (mut u, mut v) = match (
                gram_schmidt_step(&lefts[i], &left),
                gram_schmidt_step(&rights[i], &right),
            ) {
                (Some(u), Some(v)) => (u, v),
                _ => break,
            };
            sign_fix(&mut u, &mut v);
            left.push(u);
            right.push(v);
            sigmas.push(svals[i]);
        }
    }
    let complete = |acc: &mut Vec<Vec<f64>>| {
        let mut e = 0usize;
        while acc.len() < q {
            let mut candidate = vec![0.0; q];
            candidate[e] = 1.0;
            if let Some(mut v) = gram_schmidt_step(&candidate, acc) {
                let mut dummy: Vec<f64> = Vec::new();
                sign_fix(&mut v, &mut dummy);
                acc.push(v);
            }
            e += 1;
        }
    };
    complete(&mut left);
    complete(&mut right);
    sigmas.resize(q, 0.0);

    let to_basis = |vectors: &[Vec<f64>], marginal: &[f64]| -> Vec<Vec<f64>> {
        let mut rows: Vec<Vec<f64>> = vectors
            .iter()
            .map(|u| {
                u.iter()
                    .zip(marginal)
                    .map(|(ui, m)| ui / m.sqrt())
                    .collect()
            })
            .collect();
        rows[0] = vec![1.0; marginal.len()];
        rows
    };
    AlignedBases {
        q,
        basis_a: to_basis(&left, &js.marginal_a),
        basis_b: to_basis(&right, &js.marginal_b),
        sigmas,
    }
}

impl AlignedBases {
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
    pub fn rho(&self) -> f64 {
        if self.q > 1 {
            self.sigmas[1]
        } else {
            0.0
        }
    }
    /// Values of basis function `label` on `[q]` for one side.
    pub fn row(&self, side: Side, label: usize) -> &[f64] {
        match side {
            Side::A => &self.basis_a[label],
            Side::B => &self.basis_b[label],
        }
    }
    pub fn value(&self, side: Side, label: usize, symbol: usize) -> f64 {
        self.row(side, label)[symbol]
    }
}

/// Norm, variance, and influences of a discrete polynomial (Parseval under
/// the product marginal).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteFunctionals {
    pub norm2_sq: f64,
    pub variance: f64,
    pub influences: Vec<f64>,
    pub total_influence: f64,
}

/// A polynomial over `[q]^n` in one side's aligned basis: a sparse map from
/// multi-indices (per-variable basis labels in `1..q-1`) to coefficients.
/// The discrete degree of an index is the number of coordinates it touches.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePolynomial {
    num_vars: usize,
    q: usize,
    side: Side,
    coeffs: BTreeMap<MultiIndex, f64>,
}

impl DiscretePolynomial {
    pub fn zero(num_vars: usize, q: usize, side: Side) -> Self {
        DiscretePolynomial {
            num_vars,
            q,
            side,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(num_vars: usize, q: usize, side: Side, value: f64) -> Self {
        let mut coeffs = BTreeMap::new();
        if value != 0.0 {
            coeffs.insert(MultiIndex::empty(), value);
        }
        DiscretePolynomial {
            num_vars,
            q,
            side,
            coeffs,
        }
    }

    /// Builds from `(multi-index, coefficient)` terms; labels must lie in
    /// `1..q-1` and variables in `0..num_vars`. Duplicate indices sum; zero
    /// sums are dropped.
    pub fn from_terms<I>(num_vars: usize, q: usize, side: Side, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, f64)>,
    {
        if q < 2 {
            return Err(Error::domain("discrete polynomial: q must be at least 2"));
        }
        let mut coeffs: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (idx, c) in terms {
            if !c.is_finite() {
                return Err(Error::domain("discrete polynomial: non-finite coefficient"));
            }
            for (var, label) in idx.iter() {
                if var >= num_vars {
                    return Err(Error::shape(format!(
                        "discrete polynomial: variable {var} out of range for n = {num_vars}"
                    )));
                }
                if label as usize >= q {
                    return Err(Error::domain(format!(
                        "discrete polynomial: label {label} out of range for q = {q}"
                    )));
                }
            }
            *coeffs.entry(idx).or_insert(0.0) += c;
        }
        coeffs.retain(|_, c| *c != 0.0);
        Ok(DiscretePolynomial {
            num_vars,
            q,
            side,
            coeffs,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn side(&self) -> Side {
        self.side
    }
    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }
    pub fn coeff(&self, idx: &MultiIndex) -> f64 {
        self.coeffs.get(idx).copied().unwrap_or(0.0)
    }
    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> + '_ {
        self.coeffs.iter().map(|(idx, &c)| (idx, c))
    }

    /// Discrete degree: maximum number of coordinates a term touches.
    pub fn degree(&self) -> u32 {
        self.coeffs
            .keys()
            .map(|idx| idx.support_size() as u32)
            .max()
            .unwrap_or(0)
    }

    /// Evaluates at a symbol string using the side's aligned basis.
    pub fn eval(&self, x: &[usize], bases: &AlignedBases) -> Result<f64> {
        if x.len() != self.num_vars {
            return Err(Error::shape(format!(
                "discrete eval: input length {} vs n = {}",
                x.len(),
                self.num_vars
            )));
        }
        if bases.q != self.q {
            return Err(Error::shape(format!(
                "discrete eval: basis q = {} vs polynomial q = {}",
                bases.q, self.q
            )));
        }
        if x.iter().any(|&s| s >= self.q) {
            return Err(Error::domain("discrete eval: symbol out of alphabet"));
        }
        let mut acc = 0.0;
        for (idx, c) in &self.coeffs {
            let mut prod = c * 1.0;
            for (var, label) in idx.iter() {
                prod *= bases.value(self.side, label as usize, x[var]);
            }
            acc += prod;
        }
        Ok(acc)
    }

    /// Parseval functionals: `norm^2 = sum c^2`, variance excludes the
    /// constant, `Inf_i = sum over terms touching i of c^2`, and total
    /// influence is `sum |sigma| c^2`.
    pub fn functionals(&self) -> DiscreteFunctionals {
        let mut norm2_sq = 0.0;
        let mut variance = 0.0;
        let mut influences = vec![0.0; self.num_vars];
        let mut total_influence = 0.0;
        for (idx, c) in &self.coeffs {
            let c2 = c * c;
            norm2_sq += c2;
            if !idx.is_empty() {
                variance += c2;
            }
            for (var, _) in idx.iter() {
                influences[var] += c2;
            }
            total_influence += idx.support_size() as f64 * c2;
        }
        DiscreteFunctionals {
            norm2_sq,
            variance,
            influences,
            total_influence,
        }
    }
}

/// Exact correlation `E[A(x) B(y)] = sum_sigma A(sigma) B(sigma)
/// prod_i rho_{sigma_i}` for an A-side and a B-side polynomial.
pub fn discrete_correlation(
    a: &DiscretePolynomial,
    b: &DiscretePolynomial,
    bases: &AlignedBases,
) -> Result<f64> {
    if a.side != Side::A || b.side != Side::B {
        return Err(Error::contract(
            "discrete_correlation: expects an A-side and a B-side polynomial",
        ));
    }
    if a.num_vars != b.num_vars || a.q != b.q || a.q != bases.q {
        return Err(Error::shape(format!(
            "discrete_correlation: shapes (n, q) = ({}, {}) vs ({}, {}) on a q = {} basis",
            a.num_vars, a.q, b.num_vars, b.q, bases.q
        )));
    }
    let mut acc = 0.0;
    for (idx, ca) in &a.coeffs {
        let cb = b.coeff(idx);
        if cb == 0.0 {
            continue;
        }
        let mut w = ca * cb;
        for (_, label) in idx.iter() {
            w *= bases.sigmas[label as usize];
        }
        acc += w;
    }
    Ok(acc)
}

/// Brute-force reference: `sum_{x, y} mu^{tensor n}(x, y) A(x) B(y)` by
/// exhaustive enumeration. Guarded to `q^n <= 4096` per side.
pub fn enumerate_correlation(
    a: &DiscretePolynomial,
    b: &DiscretePolynomial,
    js: &JointSpace,
    bases: &AlignedBases,
) -> Result<f64> {
    if a.num_vars != b.num_vars || a.q != js.q() {
        return Err(Error::shape("enumerate_correlation: mismatched shapes"));
    }
    let n = a.num_vars;
    let q = js.q();
    let states = (q as u64).checked_pow(n as u32).filter(|&s| s <= 4096).ok_or_else(|| {
        Error::resource(format!("enumerate_correlation: q^n too large (q = {q}, n = {n})"))
    })?;
    let decode = |mut code: u64| -> Vec<usize> {
        let mut x = vec![0usize; n];
        for slot in x.iter_mut() {
            *slot = (code % q as u64) as usize;
            code /= q as u64;
        }
        x
    };
    let mut acc = 0.0;
    for xc in 0..states {
        let x = decode(xc);
        let ax = a.eval(&x, bases)?;
        if ax == 0.0 {
            continue;
        }
        for yc in 0..states {
            let y = decode(yc);
            let mut w = 1.0;
            for i in 0..n {
                w *= js.probs()[x[i]][y[i]];
                if w == 0.0 {
                    break;
                }
            }
            if w == 0.0 {
                continue;
            }
            acc += w * ax * b.eval(&y, bases)?;
        }
    }
    Ok(acc)
}

/// The Bonami-Beckner operator `T_nu`: scales the coefficient of `sigma` by
/// `nu^{|sigma|}` (each coordinate independently kept with probability `nu`,
/// resampled from the marginal otherwise).
pub fn bonami_beckner(a: &DiscretePolynomial, nu: f64) -> Result<DiscretePolynomial> {
    if !(0.0..=1.0).contains(&nu) {
        return Err(Error::domain(format!("bonami_beckner: nu = {nu} outside [0, 1]")));
    }
    DiscretePolynomial::from_terms(
        a.num_vars,
        a.q,
        a.side,
        a.coeffs.iter().map(|(idx, &c)| {
            (
                idx.clone(),
                c * nu.powi(idx.support_size() as i32),
            )
        }),
    )
}

/// Truncates to discrete degree at most `d`.
pub fn discrete_degree_truncate(a: &DiscretePolynomial, d: u32) -> DiscretePolynomial {
    DiscretePolynomial {
        num_vars: a.num_vars,
        q: a.q,
        side: a.side,
        coeffs: a
            .coeffs
            .iter()
            .filter(|(idx, _)| idx.support_size() as u32 <= d)
            .map(|(idx, &c)| (idx.clone(), c))
            .collect(),
    }
}

/// Coordinates whose influence exceeds `tau / (2 k d)` in any listed
/// polynomial, optionally re-checked on random restrictions of the selected
/// set up to `depth` rounds. Each polynomial must have variance at most 1.
pub fn regularity_select(
    polys: &[DiscretePolynomial],
    js: &JointSpace,
    bases: &AlignedBases,
    tau: f64,
    depth: u32,
    seed: u64,
) -> Result<Vec<usize>> {
    if polys.is_empty() {
        return Ok(Vec::new());
    }
    if !(tau > 0.0) {
        return Err(Error::domain("regularity_select: tau must be positive"));
    }
    let k = polys.len();
    let d = polys.iter().map(|p| p.degree()).max().unwrap_or(0).max(1);
    for (j, p) in polys.iter().enumerate() {
        if p.functionals().variance > 1.0 + 1e-9 {
            return Err(Error::contract(format!(
                "regularity_select: polynomial {j} has variance > 1"
            )));
        }
    }
    let threshold = tau / (2.0 * k as f64 * d as f64);
    let n = polys[0].num_vars;
    let heavy = |ps: &[DiscretePolynomial], selected: &mut Vec<bool>| {
        for p in ps {
            for (i, &inf) in p.functionals().influences.iter().enumerate() {
                if inf > threshold {
                    selected[i] = true;
                }
            }
        }
    };
    let mut selected = vec![false; n];
    heavy(polys, &mut selected);
    let mut rng = crate::sampling::substream_rng(seed, 0);
    for _ in 1..depth {
        let h: Vec<usize> = (0..n).filter(|&i| selected[i]).collect();
        if h.is_empty() {
            break;
        }
        let restricted: Vec<DiscretePolynomial> = polys
            .iter()
            .map(|p| {
                let assignment: Vec<usize> =
                    h.iter().map(|_| js.sample_marginal(&mut rng, p.side)).collect();
                restrict_keep_vars(p, &h, &assignment, bases)
            })
            .collect::<Result<_>>()?;
        let before = selected.clone();
        heavy(&restricted, &mut selected);
        if selected == before {
            break;
        }
    }
    Ok((0..n).filter(|&i| selected[i]).collect())
}

/// The `h` coordinates with the largest worst-case influence across the
/// listed polynomials.
pub fn select_top_influences(polys: &[DiscretePolynomial], h: usize) -> Vec<usize> {
    if polys.is_empty() {
        return Vec::new();
    }
    let n = polys[0].num_vars;
    let mut worst = vec![0.0f64; n];
    for p in polys {
        for (i, &inf) in p.functionals().influences.iter().enumerate() {
            worst[i] = worst[i].max(inf);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| worst[j].partial_cmp(&worst[i]).expect("finite").then(i.cmp(&j)));
    let mut top: Vec<usize> = order.into_iter().take(h.min(n)).collect();
    top.sort_unstable();
    top
}

fn restriction_factor(
    p: &DiscretePolynomial,
    idx: &MultiIndex,
    h: &[usize],
    assignment: &[usize],
    bases: &AlignedBases,
) -> (MultiIndex, f64) {
    let mut factor = 1.0;
    let mut rest: Vec<(usize, u32)> = Vec::new();
    for (var, label) in idx.iter() {
        match h.binary_search(&var) {
            Ok(pos) => factor *= bases.value(p.side, label as usize, assignment[pos]),
            Err(_) => rest.push((var, label)),
        }
    }
    (MultiIndex::from_pairs(rest), factor)
}

/// Like [`restrict`] but keeps the original variable numbering (restricted
/// coordinates simply become unused).
pub fn restrict_keep_vars(
    p: &DiscretePolynomial,
    h: &[usize],
    assignment: &[usize],
    bases: &AlignedBases,
) -> Result<DiscretePolynomial> {
    validate_restriction(p, h, assignment, bases)?;
    DiscretePolynomial::from_terms(
        p.num_vars,
        p.q,
        p.side,
        p.coeffs.iter().map(|(idx, &c)| {
            let (rest, factor) = restriction_factor(p, idx, h, assignment, bases);
            (rest, c * factor)
        }),
    )
}

fn validate_restriction(
    p: &DiscretePolynomial,
    h: &[usize],
    assignment: &[usize],
    bases: &AlignedBases,
) -> Result<()> {
    if h.len() != assignment.len() {
        return Err(Error::shape(format!(
            "restrict: {} coordinates vs {} symbols",
            h.len(),
            assignment.len()
        )));
    }
    if h.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("restrict: H must be strictly increasing"));
    }
    if h.last().is_some_and(|&last| last >= p.num_vars) {
        return Err(Error::shape("restrict: coordinate out of range"));
    }
    if assignment.iter().any(|&s| s >= p.q) {
        return Err(Error::domain("restrict: symbol out of alphabet"));
    }
    if bases.q != p.q {
        return Err(Error::shape("restrict: basis alphabet mismatch"));
    }
    Ok(())
}

/// The restriction `P^xi` of `p` with coordinates `h` (sorted) fixed to
/// `assignment`: basis factors on `h` are evaluated and folded into the
/// coefficients, and the remaining coordinates are renumbered in order.
pub fn restrict(
    p: &DiscretePolynomial,
    h: &[usize],
    assignment: &[usize],
    bases: &AlignedBases,
) -> Result<DiscretePolynomial> {
    validate_restriction(p, h, assignment, bases)?;
    let remap: Vec<usize> = {
        let mut remap = vec![usize::MAX; p.num_vars];
        let mut next = 0usize;
        for var in 0..p.num_vars {
            if h.binary_search(&var).is_err() {
                remap[var] = next;
                next += 1;
            }
        }
        remap
    };
    DiscretePolynomial::from_terms(
        p.num_vars - h.len(),
        p.q,
        p.side,
        p.coeffs.iter().map(|(idx, &c)| {
            let (rest, factor) = restriction_factor(p, idx, h, assignment, bases);
            let remapped =
                MultiIndex::from_pairs(rest.iter().map(|(var, label)| (remap[var], label)));
            (remapped, c * factor)
        }),
    )
}

/// Transfers a discrete polynomial to the Hermite basis: character
/// `X^(l)_i` becomes the Gaussian variable `l (q-1) + (i-1)` at degree 1.
/// B-side coefficients are scaled by `prod_i rho_{sigma_i} / rho`, which
/// realizes the per-label correlations under a single `rho`-correlated
/// Gaussian pair.
pub fn invariance_to_gaussian(
    a: &DiscretePolynomial,
    bases: &AlignedBases,
) -> Result<HermitePolynomial> {
    if bases.q != a.q {
        return Err(Error::shape("invariance_to_gaussian: basis alphabet mismatch"));
    }
    let rho = bases.rho();
    let out_vars = a.num_vars * (a.q - 1);
    let mut terms: Vec<(MultiIndex, f64)> = Vec::with_capacity(a.num_terms());
    for (idx, c) in &a.coeffs {
        let mut coeff = *c;
        if a.side == Side::B && !idx.is_empty() {
            if rho <= 0.0 {
                return Err(Error::domain(
                    "invariance_to_gaussian: B-side adjustment undefined at rho = 0",
                ));
            }
            for (_, label) in idx.iter() {
                coeff *= bases.sigmas[label as usize] / rho;
            }
        }
        let mapped = MultiIndex::from_pairs(
            idx.iter()
                .map(|(var, label)| (var * (a.q - 1) + (label as usize - 1), 1)),
        );
        terms.push((mapped, coeff));
    }
    HermitePolynomial::from_terms(out_vars, terms)
}

/// Transfers a multilinear Hermite polynomial onto the top (`label 1`)
/// characters of a discrete space: Gaussian variable `j` becomes character
/// `X^(j)_1` (or `Y^(j)_1` for the B side), coefficients verbatim.
pub fn invariance_to_discrete(
    a: &HermitePolynomial,
    js: &JointSpace,
    side: Side,
) -> Result<DiscretePolynomial> {
    if !a.is_multilinear() {
        return Err(Error::contract(
            "invariance_to_discrete: input must be multilinear",
        ));
    }
    if a.functionals().variance > 1.0 + 1e-9 {
        return Err(Error::contract("invariance_to_discrete: variance must be <= 1"));
    }
    DiscretePolynomial::from_terms(
        a.num_vars(),
        js.q(),
        side,
        a.terms().map(|(idx, c)| {
            (
                MultiIndex::from_pairs(idx.iter().map(|(var, _)| (var, 1))),
                c,
            )
        }),
    )
}

/// Exact expansion of a truth table in the side's aligned basis.
///
/// `values[x]` is indexed row-major with `x[0]` most significant. One change
/// of basis per axis, `c_l = sum_s mu(s) X_l(s) v_s`; coefficients below
/// `1e-12` are dropped as round-off (tables are O(1)-valued). Budgeted at
/// `q^num_vars <= 4096` entries.
pub fn expand_truth_table(
    values: &[f64],
    num_vars: usize,
    js: &JointSpace,
    side: Side,
    bases: &AlignedBases,
) -> Result<DiscretePolynomial> {
    let q = js.q();
    let states = (q as u64)
        .checked_pow(num_vars as u32)
        .filter(|&s| s <= 4096)
        .ok_or_else(|| {
            Error::resource(format!(
                "expand_truth_table: q^n too large (q = {q}, n = {num_vars})"
            ))
        })?;
    if values.len() as u64 != states {
        return Err(Error::shape(format!(
            "expand_truth_table: table has {} entries, expected q^n = {states}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("expand_truth_table: non-finite table entry"));
    }
    let mu = js.marginal(side);
    let mut work = values.to_vec();
    let mut next = vec![0.0; work.len()];
    for axis in 0..num_vars {
        let stride = (q as usize).pow((num_vars - 1 - axis) as u32);
        let block = stride * q;
        for base in (0..work.len()).step_by(block) {
            for off in 0..stride {
                for l in 0..q {
                    let mut acc = 0.0;
                    for (s, &m) in mu.iter().enumerate() {
                        acc += m * bases.value(side, l, s) * work[base + s * stride + off];
                    }
                    next[base + l * stride + off] = acc;
                }
            }
        }
        std::mem::swap(&mut work, &mut next);
    }
    let mut terms = Vec::new();
    for (code, &c) in work.iter().enumerate() {
        if c.abs() <= 1e-12 {
            continue;
        }
        let mut rest = code;
        let mut pairs = Vec::new();
        for var in (0..num_vars).rev() {
            let label = rest % q;
            rest /= q;
            if label > 0 {
                pairs.push((var, label as u32));
            }
        }
        terms.push((MultiIndex::from_pairs(pairs), c));
    }
    DiscretePolynomial::from_terms(num_vars, q, side, terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::exact_correlation;
    use crate::sampling::substream_rng;
    use approx::assert_abs_diff_eq;

    fn random_space(rng: &mut ChaCha8Rng, q: usize) -> JointSpace {
        loop {
            let mut probs = vec![vec![0.0; q]; q];
            let mut total = 0.0;
            for row in probs.iter_mut() {
                for p in row.iter_mut() {
                    *p = rng.gen_range(0.01..1.0);
                    total += *p;
                }
            }
            for row in probs.iter_mut() {
                for p in row.iter_mut() {
                    *p /= total;
                }
            }
            let sum: f64 = probs.iter().flatten().sum();
            let fix = 1.0 - sum;
            probs[q - 1][q - 1] += fix;
            if probs[q - 1][q - 1] > 0.0 {
                if let Ok(js) = build_joint_space(probs) {
                    return js;
                }
            }
        }
    }

    /// Grid-search maximal correlation: sweep unit-variance mean-zero f on
    /// the A side, take the best-response g in closed form.
    fn grid_search_rho(js: &JointSpace, steps: usize) -> f64 {
        let q = js.q();
        let mu_a = js.marginal(Side::A);
        let mu_b = js.marginal(Side::B);
        // Orthonormal mean-zero value bases via Gram-Schmidt on indicator
        // differences (independent of the SVD route).
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for e in 0..q {
            let mut cand: Vec<f64> = vec![0.0; q];
            cand[e] = 1.0;
            // project out the mean and previous directions under mu_a
            let mean: f64 = (0..q).map(|x| mu_a[x] * cand[x]).sum();
            for c in cand.iter_mut() {
                *c -= mean;
            }
            for prev in &basis {
                let dot: f64 = (0..q).map(|x| mu_a[x] * cand[x] * prev[x]).sum();
                for (c, p) in cand.iter_mut().zip(prev) {
                    *c -= dot * p;
                }
            }
            let norm: f64 = (0..q).map(|x| mu_a[x] * cand[x] * cand[x]).sum::<f64>().sqrt();
            if norm > 1e-9 {
                for c in cand.iter_mut() {
                    *c /= norm;
                }
                basis.push(cand);
            }
        }
        let best_response = |f: &[f64]| -> f64 {
            // g*(y) proportional to E[f(x) | y] centered; value is its norm.
            let mut g: Vec<f64> = (0..q)
                .map(|y| (0..q).map(|x| js.probs()[x][y] * f[x]).sum::<f64>() / mu_b[y])
                .collect();
            let mean: f64 = (0..q).map(|y| mu_b[y] * g[y]).sum();
            for v in g.iter_mut() {
                *v -= mean;
            }
            (0..q).map(|y| mu_b[y] * g[y] * g[y]).sum::<f64>().sqrt()
        };
        match basis.len() {
            0 => 0.0,
            1 => best_response(&basis[0]),
            _ => {
                // q = 3: sweep the unit circle in the 2-D mean-zero space.
                let mut best = 0.0f64;
                for s in 0..steps {
                    let theta = 2.0 * std::f64::consts::PI * s as f64 / steps as f64;
                    let f: Vec<f64> = (0..q)
                        .map(|x| theta.cos() * basis[0][x] + theta.sin() * basis[1][x])
                        .collect();
                    best = best.max(best_response(&f));
                }
                best
            }
        }
    }

    #[test]
    fn maximal_correlation_worked_examples() {
        let product = build_joint_space(vec![
            vec![0.25, 0.25],
            vec![0.25, 0.25],
        ])
        .unwrap();
        assert_abs_diff_eq!(product.rho(), 0.0, epsilon = 1e-10);

        let equal = eq(2).unwrap();
        assert_abs_diff_eq!(equal.rho(), 1.0, epsilon = 1e-10);

        let triple = triple_uniform();
        assert_abs_diff_eq!(triple.rho(), 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(triple.alpha(), 1.0 / 3.0, epsilon = 1e-15);

        for i in 1..=9 {
            let rho = i as f64 / 10.0;
            assert_abs_diff_eq!(dsbs(rho).unwrap().rho(), rho, epsilon = 1e-10);
        }
    }

    #[test]
    fn maximal_correlation_matches_grid_search() {
        let mut rng = substream_rng(12, 0);
        for q in [2usize, 3] {
            for _ in 0..10 {
                let js = random_space(&mut rng, q);
                let grid = grid_search_rho(&js, 8000);
                assert!(
                    (js.rho() - grid).abs() <= 1e-3,
                    "q = {q}: svd {} vs grid {grid}",
                    js.rho()
                );
            }
        }
        assert!((triple_uniform().rho() - grid_search_rho(&triple_uniform(), 8000)).abs() <= 1e-3);
    }

    #[test]
    fn joint_space_validation() {
        assert!(build_joint_space(vec![vec![0.5, 0.4], vec![0.0, 0.0]]).is_err());
        assert!(build_joint_space(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).is_err());
        assert!(build_joint_space(vec![vec![0.5, -0.1], vec![0.3, 0.3]]).is_err());
        assert!(build_joint_space(vec![vec![0.5], vec![0.5]]).is_err());
    }

    #[test]
    fn source_spec_parsing() {
        assert_abs_diff_eq!(parse_source_spec("dsbs:0.6").unwrap().rho(), 0.6, epsilon = 1e-10);
        assert_eq!(parse_source_spec("triple-uniform").unwrap().q(), 2);
        assert_eq!(parse_source_spec("eq:3").unwrap().q(), 3);
        let json = r#"{"q": 2, "probs": [0.4, 0.1, 0.1, 0.4]}"#;
        assert_abs_diff_eq!(parse_source_spec(json).unwrap().rho(), 0.6, epsilon = 1e-10);
        assert!(parse_source_spec("nonsense").is_err());
        assert!(parse_source_spec(r#"{"q": 2, "probs": [1.0]}"#).is_err());
    }

    fn check_aligned(js: &JointSpace, bases: &AlignedBases, tol: f64) {
        let q = js.q();
        for side in [Side::A, Side::B] {
            let mu = js.marginal(side);
            for i in 0..q {
                for j in 0..q {
                    let dot: f64 = (0..q)
                        .map(|x| mu[x] * bases.value(side, i, x) * bases.value(side, j, x))
                        .sum();
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (dot - target).abs() <= tol,
                        "orthonormality ({i},{j}) on {side:?}: {dot}"
                    );
                }
            }
        }
        for x in 0..q {
            assert_eq!(bases.value(Side::A, 0, x), 1.0);
            assert_eq!(bases.value(Side::B, 0, x), 1.0);
        }
        for i in 0..q {
            for j in 0..q {
                let mut cross = 0.0;
                for x in 0..q {
                    for y in 0..q {
                        cross +=
                            js.probs()[x][y] * bases.value(Side::A, i, x) * bases.value(Side::B, j, y);
                    }
                }
                let target = if i == j { bases.sigmas()[i] } else { 0.0 };
                assert!(
                    (cross - target).abs() <= tol,
                    "alignment ({i},{j}): {cross} vs {target}"
                );
            }
        }
        assert_eq!(bases.sigmas()[0], 1.0);
        for w in bases.sigmas().windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
        assert_abs_diff_eq!(bases.rho(), js.rho(), epsilon = 1e-12);
    }

    #[test]
    fn aligned_bases_on_named_sources() {
        let equal = eq(2).unwrap();
        let bases = aligned_bases(&equal);
        assert_abs_diff_eq!(bases.value(Side::A, 1, 0), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(bases.value(Side::A, 1, 1), -1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(bases.value(Side::B, 1, 0), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(bases.value(Side::B, 1, 1), -1.0, epsilon = 1e-10);
        check_aligned(&equal, &bases, 1e-10);

        let product = build_joint_space(vec![vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap();
        let bases = aligned_bases(&product);
        assert_abs_diff_eq!(bases.sigmas()[1], 0.0, epsilon = 1e-10);
        check_aligned(&product, &bases, 1e-10);

        check_aligned(&triple_uniform(), &aligned_bases(&triple_uniform()), 1e-10);
    }

    #[test]
    fn aligned_bases_on_random_spaces() {
        let mut rng = substream_rng(13, 0);
        for q in [2usize, 3, 4] {
            for _ in 0..40 {
                let js = random_space(&mut rng, q);
                let bases = aligned_bases(&js);
                check_aligned(&js, &bases, 1e-10);
            }
        }
    }

    #[test]
    fn discrete_correlation_examples() {
        let js = dsbs(0.7).unwrap();
        let bases = aligned_bases(&js);
        let a = DiscretePolynomial::from_terms(
            1,
            2,
            Side::A,
            [(MultiIndex::single(0, 1), 1.0)],
        )
        .unwrap();
        let b = DiscretePolynomial::from_terms(
            1,
            2,
            Side::B,
            [(MultiIndex::single(0, 1), 1.0)],
        )
        .unwrap();
        assert_abs_diff_eq!(discrete_correlation(&a, &b, &bases).unwrap(), 0.7, epsilon = 1e-10);

        let b2 = DiscretePolynomial::from_terms(
            2,
            2,
            Side::B,
            [(MultiIndex::single(1, 1), 1.0)],
        )
        .unwrap();
        let a2 = a.clone();
        let a2 = DiscretePolynomial::from_terms(2, 2, Side::A, a2.terms().map(|(i, c)| (i.clone(), c))).unwrap();
        assert_eq!(discrete_correlation(&a2, &b2, &bases).unwrap(), 0.0);

        assert!(discrete_correlation(&b, &b, &bases).is_err());
    }

    #[test]
    fn discrete_correlation_matches_enumeration() {
        let mut rng = substream_rng(14, 0);
        for q in [2usize, 3] {
            for n in 1..=3usize {
                if (q as u64).pow(n as u32) > 100 {
                    continue;
                }
                let js = random_space(&mut rng, q);
                let bases = aligned_bases(&js);
                let random_poly = |rng: &mut ChaCha8Rng, side| {
                    let terms: Vec<(MultiIndex, f64)> = (0..6)
                        .map(|_| {
                            let pairs: Vec<(usize, u32)> = (0..n)
                                .filter_map(|v| {
                                    rng.gen_bool(0.6).then(|| (v, rng.gen_range(1..q as u32)))
                                })
                                .collect();
                            (MultiIndex::from_pairs(pairs), rng.gen_range(-1.0..1.0))
                        })
                        .collect();
                    DiscretePolynomial::from_terms(n, q, side, terms).unwrap()
                };
                let a = random_poly(&mut rng, Side::A);
                let b = random_poly(&mut rng, Side::B);
                let exact = discrete_correlation(&a, &b, &bases).unwrap();
                let brute = enumerate_correlation(&a, &b, &js, &bases).unwrap();
                assert_abs_diff_eq!(exact, brute, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn bonami_beckner_scaling_and_semigroup() {
        let js = triple_uniform();
        let _ = js;
        let a = DiscretePolynomial::from_terms(
            3,
            2,
            Side::A,
            [
                (MultiIndex::empty(), 0.3),
                (MultiIndex::single(0, 1), 0.5),
                (MultiIndex::from_pairs([(1, 1), (2, 1)]), -0.4),
            ],
        )
        .unwrap();
        assert_eq!(bonami_beckner(&a, 1.0).unwrap(), a);
        let collapsed = bonami_beckner(&a, 0.0).unwrap();
        assert_eq!(collapsed.num_terms(), 1);
        assert_eq!(collapsed.coeff(&MultiIndex::empty()), 0.3);

        let t1t2 = bonami_beckner(&bonami_beckner(&a, 0.8).unwrap(), 0.5).unwrap();
        let t12 = bonami_beckner(&a, 0.4).unwrap();
        for (idx, c) in t12.terms() {
            assert_abs_diff_eq!(t1t2.coeff(idx), c, epsilon = 1e-12);
        }
    }

    #[test]
    fn bonami_beckner_matches_resampling_oracle() {
        let js = dsbs(0.5).unwrap();
        let bases = aligned_bases(&js);
        let a = DiscretePolynomial::from_terms(
            2,
            2,
            Side::A,
            [
                (MultiIndex::single(0, 1), 0.7),
                (MultiIndex::from_pairs([(0, 1), (1, 1)]), 0.3),
            ],
        )
        .unwrap();
        let nu = 0.6;
        let smoothed = bonami_beckner(&a, nu).unwrap();
        let mut rng = substream_rng(15, 0);
        for trial in 0..10 {
            let x: Vec<usize> = (0..2).map(|_| js.sample_marginal(&mut rng, Side::A)).collect();
            let exact = smoothed.eval(&x, &bases).unwrap();
            let mut rng2 = substream_rng(16, trial);
            let samples = 40_000;
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut y = vec![0usize; 2];
            for _ in 0..samples {
                for i in 0..2 {
                    y[i] = if rng2.gen_bool(nu) {
                        x[i]
                    } else {
                        js.sample_marginal(&mut rng2, Side::A)
                    };
                }
                let v = a.eval(&y, &bases).unwrap();
                sum += v;
                sum_sq += v * v;
            }
            let mean = sum / samples as f64;
            let se = (((sum_sq - samples as f64 * mean * mean) / (samples as f64 - 1.0)).max(0.0)
                / samples as f64)
                .sqrt();
            assert!(
                (mean - exact).abs() <= 4.0 * se.max(1e-6),
                "point {x:?}: resampled {mean} vs exact {exact} (se {se})"
            );
        }
    }

    #[test]
    fn regularity_select_examples() {
        let js = dsbs(0.5).unwrap();
        let bases = aligned_bases(&js);
        // Dictator: influence 1 on coordinate 0.
        let dictator = DiscretePolynomial::from_terms(
            2,
            2,
            Side::A,
            [(MultiIndex::single(0, 1), 1.0)],
        )
        .unwrap();
        let h = regularity_select(std::slice::from_ref(&dictator), &js, &bases, 0.5, 1, 0).unwrap();
        assert_eq!(h, vec![0]);

        // Spread mass: all influences small.
        let n = 16;
        let c = 1.0 / (n as f64).sqrt();
        let spread = DiscretePolynomial::from_terms(
            n,
            2,
            Side::A,
            (0..n).map(|v| (MultiIndex::single(v, 1), c)),
        )
        .unwrap();
        let h = regularity_select(std::slice::from_ref(&spread), &js, &bases, 0.5, 1, 0).unwrap();
        assert!(h.is_empty());

        // Counting bound: |H| <= sum Inf / threshold.
        let mut rng = substream_rng(17, 0);
        for _ in 0..20 {
            let terms: Vec<(MultiIndex, f64)> = (0..10)
                .map(|_| {
                    let v1 = rng.gen_range(0..20);
                    let mut v2 = rng.gen_range(0..19);
                    if v2 >= v1 {
                        v2 += 1;
                    }
                    (
                        MultiIndex::from_pairs([(v1, 1), (v2, 1)]),
                        rng.gen_range(-0.3..0.3),
                    )
                })
                .collect();
            let p = DiscretePolynomial::from_terms(20, 2, Side::A, terms).unwrap();
            let f = p.functionals();
            if f.variance > 1.0 {
                continue;
            }
            let tau = 0.25;
            let d = p.degree().max(1);
            let threshold = tau / (2.0 * d as f64);
            let h = regularity_select(std::slice::from_ref(&p), &js, &bases, tau, 1, 0).unwrap();
            let bound = f.influences.iter().sum::<f64>() / threshold;
            assert!(h.len() as f64 <= bound + 1e-9);
        }

        let top = select_top_influences(std::slice::from_ref(&dictator), 1);
        assert_eq!(top, vec![0]);
    }

    #[test]
    fn restriction_matches_pointwise_evaluation() {
        let mut rng = substream_rng(18, 0);
        let js = random_space(&mut rng, 3);
        let bases = aligned_bases(&js);
        let n = 3;
        let terms: Vec<(MultiIndex, f64)> = (0..8)
            .map(|_| {
                let pairs: Vec<(usize, u32)> = (0..n)
                    .filter_map(|v| rng.gen_bool(0.7).then(|| (v, rng.gen_range(1..3u32))))
                    .collect();
                (MultiIndex::from_pairs(pairs), rng.gen_range(-1.0..1.0))
            })
            .collect();
        let p = DiscretePolynomial::from_terms(n, 3, Side::B, terms).unwrap();

        // H = empty set leaves the polynomial unchanged.
        let same = restrict(&p, &[], &[], &bases).unwrap();
        assert_eq!(same, p);

        // Restrict coordinate 1; check all completions agree pointwise.
        for xi in 0..3usize {
            let restricted = restrict(&p, &[1], &[xi], &bases).unwrap();
            assert_eq!(restricted.num_vars(), 2);
            for a in 0..3usize {
                for c in 0..3usize {
                    let full = p.eval(&[a, xi, c], &bases).unwrap();
                    let part = restricted.eval(&[a, c], &bases).unwrap();
                    assert_abs_diff_eq!(full, part, epsilon = 1e-10);
                }
            }
        }

        // Full restriction gives the evaluation as a constant.
        let full = restrict(&p, &[0, 1, 2], &[2, 0, 1], &bases).unwrap();
        assert_eq!(full.num_vars(), 0);
        assert_abs_diff_eq!(
            full.coeff(&MultiIndex::empty()),
            p.eval(&[2, 0, 1], &bases).unwrap(),
            epsilon = 1e-10
        );

        assert!(restrict(&p, &[1], &[7], &bases).is_err());
        assert!(restrict(&p, &[1, 0], &[0, 0], &bases).is_err());
    }

    #[test]
    fn invariance_maps_preserve_structure() {
        let js = dsbs(0.6).unwrap();
        let bases = aligned_bases(&js);
        let a = DiscretePolynomial::from_terms(
            2,
            2,
            Side::A,
            [
                (MultiIndex::empty(), 0.2),
                (MultiIndex::single(0, 1), 0.6),
                (MultiIndex::from_pairs([(0, 1), (1, 1)]), -0.3),
            ],
        )
        .unwrap();
        let b = DiscretePolynomial::from_terms(
            2,
            2,
            Side::B,
            [(MultiIndex::single(0, 1), 0.5), (MultiIndex::single(1, 1), 0.5)],
        )
        .unwrap();
        let ga = invariance_to_gaussian(&a, &bases).unwrap();
        let gb = invariance_to_gaussian(&b, &bases).unwrap();
        // Norm preserved on the A side (coefficients copied verbatim).
        assert_abs_diff_eq!(
            ga.functionals().norm2_sq,
            a.functionals().norm2_sq,
            epsilon = 1e-12
        );
        // q = 2: correlations agree exactly.
        assert_abs_diff_eq!(
            exact_correlation(&ga, &gb, js.rho()).unwrap(),
            discrete_correlation(&a, &b, &bases).unwrap(),
            epsilon = 1e-10
        );

        // Round trip on a degree-1 input.
        let back = invariance_to_discrete(&ga, &js, Side::A).unwrap();
        for (idx, c) in a.terms() {
            assert_abs_diff_eq!(back.coeff(idx), c, epsilon = 1e-12);
        }

        // Constants map to constants.
        let konst = DiscretePolynomial::constant(1, 2, Side::A, 0.9);
        let img = invariance_to_gaussian(&konst, &bases).unwrap();
        assert_eq!(img.num_terms(), 1);
        assert_eq!(img.coeff(&MultiIndex::empty()), 0.9);

        // Non-multilinear Hermite input is rejected on the way back.
        let quad =
            HermitePolynomial::from_terms(1, [(MultiIndex::single(0, 2), 0.5)]).unwrap();
        assert!(invariance_to_discrete(&quad, &js, Side::A).is_err());
    }

    #[test]
    fn invariance_adjusts_b_side_by_sigma_ratio() {
        // q = 3 source where rho_2 < rho_1: the label-2 character on the B
        // side picks up the factor rho_2/rho_1.
        let mut rng = substream_rng(19, 0);
        let js = random_space(&mut rng, 3);
        let bases = aligned_bases(&js);
        let b = DiscretePolynomial::from_terms(
            1,
            3,
            Side::B,
            [(MultiIndex::single(0, 1), 0.4), (MultiIndex::single(0, 2), 0.5)],
        )
        .unwrap();
        let gb = invariance_to_gaussian(&b, &bases).unwrap();
        let ratio = bases.sigmas()[2] / bases.sigmas()[1];
        assert_abs_diff_eq!(gb.coeff(&MultiIndex::single(0, 1)), 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(gb.coeff(&MultiIndex::single(1, 1)), 0.5 * ratio, epsilon = 1e-12);

        // With that adjustment the Gaussian correlation against any A-side
        // image reproduces the discrete one.
        let a = DiscretePolynomial::from_terms(
            1,
            3,
            Side::A,
            [(MultiIndex::single(0, 1), 0.8), (MultiIndex::single(0, 2), -0.2)],
        )
        .unwrap();
        let ga = invariance_to_gaussian(&a, &bases).unwrap();
        assert_abs_diff_eq!(
            exact_correlation(&ga, &gb, bases.rho()).unwrap(),
            discrete_correlation(&a, &b, &bases).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn truth_table_expansion_round_trips() {
        // Dictator indicator on the second of two DSBS variables.
        let js = dsbs(0.5).unwrap();
        let bases = aligned_bases(&js);
        let table = [1.0, 0.0, 1.0, 0.0];
        let p = expand_truth_table(&table, 2, &js, Side::A, &bases).unwrap();
        assert_abs_diff_eq!(p.coeff(&MultiIndex::empty()), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.coeff(&MultiIndex::single(1, 1)), 0.5, epsilon = 1e-12);
        assert_eq!(p.num_terms(), 2);

        // Evaluation reproduces any table, on both sides of a skewed space.
        let js = build_joint_space(vec![vec![0.4, 0.2], vec![0.1, 0.3]]).unwrap();
        let bases = aligned_bases(&js);
        let mut rng = substream_rng(31, 0);
        for side in [Side::A, Side::B] {
            let n = 3;
            let table: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = expand_truth_table(&table, n, &js, side, &bases).unwrap();
            for code in 0..8usize {
                let x: Vec<usize> = (0..n).rev().map(|i| (code >> i) & 1).collect();
                assert_abs_diff_eq!(
                    p.eval(&x, &bases).unwrap(),
                    table[code],
                    epsilon = 1e-10
                );
            }
        }

        // Expanding a polynomial's own table recovers its coefficients.
        let q3 = triple_uniform();
        let b3 = aligned_bases(&q3);
        let orig = DiscretePolynomial::from_terms(
            2,
            2,
            Side::B,
            [
                (MultiIndex::empty(), 0.3),
                (MultiIndex::single(0, 1), -0.4),
                (MultiIndex::from_pairs([(0, 1), (1, 1)]), 0.25),
            ],
        )
        .unwrap();
        let table: Vec<f64> = (0..4usize)
            .map(|code| {
                let x = vec![(code >> 1) & 1, code & 1];
                orig.eval(&x, &b3).unwrap()
            })
            .collect();
        let back = expand_truth_table(&table, 2, &q3, Side::B, &b3).unwrap();
        assert_eq!(back.num_terms(), orig.num_terms());
        for (idx, c) in orig.terms() {
            assert_abs_diff_eq!(back.coeff(idx), c, epsilon = 1e-12);
        }

        // Shape and budget errors.
        assert!(expand_truth_table(&table, 3, &q3, Side::B, &b3).is_err());
        let huge = vec![0.0; 8192];
        assert!(expand_truth_table(&huge, 13, &js, Side::A, &bases).is_err());
    }

    #[test]
    fn sampling_matches_distribution() {
        let js = triple_uniform();
        let mut rng = substream_rng(20, 0);
        let mut counts = vec![vec![0u64; 2]; 2];
        let n = 30_000;
        for _ in 0..n {
            let (x, y) = js.sample_pair(&mut rng);
            counts[x][y] += 1;
        }
        for x in 0..2 {
            for y in 0..2 {
                let freq = counts[x][y] as f64 / n as f64;
                let p = js.probs()[x][y];
                let se = (p * (1.0 - p) / n as f64).sqrt().max(1e-4);
                assert!(
                    (freq - p).abs() <= 5.0 * se,
                    "atom ({x},{y}): freq {freq} vs p {p}"
                );
            }
        }
    }
}
