//! Structural transformations: smoothing, multilinearization, dimension
//! reduction, and the parameter schedules tying an error budget `delta` to
//! `(nu, d, t, D)`.
//!
//! Smoothing composes the noise operator `U_nu` with truncation to degree
//! `d`, where `nu = 1 - C (1 - rho) e / log(1/e)` with `e = delta/(2 sqrt k)`
//! and `d` is the smallest integer with `nu^{2d} <= e`. Multilinearization
//! replaces each variable by an average of `t` fresh variables and keeps the
//! multilinear part; by the multinomial expansion of Hermite polynomials
//! only square-free assignments survive, with coefficient `sqrt(r!)/t^{r/2}`
//! per choice of `r` distinct fresh variables in a block. Dimension
//! reduction substitutes `a -> A(M a / ||a||_2)` for a Gaussian matrix
//! `M ~ N(0,1)^{N x D}`; for any fixed `a`, the vector `M a / ||a||` is a
//! standard Gaussian in `R^N`, which is what makes the substitution
//! distribution-preserving one input at a time.

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::poly::{HermitePolynomial, MultiIndex, VectorEval, VectorFunction};
use crate::sampling::{
    derive_seed, fill_correlated_pair, fill_standard_normal, mc_run, run_indexed, substream_rng,
    MCEstimate,
};

/// Default cap on materialized multilinearization terms.
pub const MULTILIN_TERM_BUDGET: u64 = 1_000_000;

/// Smoothing schedule: noise level `nu` and truncation degree `d` for a
/// budget `delta` at correlation `rho` on `k` output coordinates.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SmoothingParams {
    pub nu: f64,
    pub d: u32,
    pub c: f64,
    pub rho: f64,
    pub k: usize,
    pub delta: f64,
}

impl SmoothingParams {
    /// The per-side budget `delta / (2 sqrt k)` the schedule is built from.
    pub fn eps_tilde(&self) -> f64 {
        self.delta / (2.0 * (self.k as f64).sqrt())
    }
}

/// Computes the smoothing schedule.
///
/// `nu = 1 - C (1 - rho) e / ln(1/e)` with `e = delta/(2 sqrt k)`, clamped
/// to `[0, 1)`, and `d` is the smallest positive integer with
/// `nu^{2d} <= e`.
/// Validation plus the `nu` part of the smoothing schedule, shared with the
/// pipelines so an overridden degree can still reuse the schedule's noise
/// rate when the degree itself is out of range.
pub(crate) fn smoothing_nu(rho: f64, k: usize, delta: f64, c: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::domain(format!(
            "smoothing: rho = {rho} outside [0, 1) (rho = 1 admits no smoothing)"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("smoothing: delta = {delta} outside (0, 1)")));
    }
    if k < 2 {
        return Err(Error::domain("smoothing: k must be at least 2"));
    }
    if !(c > 0.0) {
        return Err(Error::domain("smoothing: C must be positive"));
    }
    let eps = delta / (2.0 * (k as f64).sqrt());
    let log_inv = (1.0 / eps).ln();
    // rho < 1 and eps < 1/2 keep the raw value strictly below 1; only the
    // lower clamp can bind.
    Ok((1.0 - c * (1.0 - rho) * eps / log_inv).max(0.0))
}

pub fn smoothing_params(rho: f64, k: usize, delta: f64, c: f64) -> Result<SmoothingParams> {
    let nu = smoothing_nu(rho, k, delta, c)?;
    let eps = delta / (2.0 * (k as f64).sqrt());
    let log_inv = (1.0 / eps).ln();
    let mut d: u32 = if nu == 0.0 {
        1
    } else {
        let raw = (log_inv / (2.0 * -nu.ln())).ceil().max(1.0);
        if raw > u32::MAX as f64 {
            return Err(Error::resource(format!(
                "smoothing: schedule degree {raw:.3e} exceeds u32; pin d by override"
            )));
        }
        raw as u32
    };
    // Settle floating boundary cases onto the exact defining condition
    // (pointless and powi-overflowing at astronomical degrees, so skipped).
    if d <= 1_000_000 {
        while nu.powi(2 * d as i32) > eps {
            d += 1;
        }
        while d > 1 && nu.powi(2 * (d - 1) as i32) <= eps {
            d -= 1;
        }
    }
    Ok(SmoothingParams {
        nu,
        d,
        c,
        rho,
        k,
        delta,
    })
}

/// Applies `U_nu` followed by truncation to degree `d`, coordinate by
/// coordinate. Requires every coordinate to have variance at most 1.
pub fn smooth(polys: &[HermitePolynomial], params: &SmoothingParams) -> Result<Vec<HermitePolynomial>> {
    for (j, p) in polys.iter().enumerate() {
        let var = p.functionals().variance;
        if var > 1.0 + 1e-9 {
            return Err(Error::contract(format!(
                "smooth: coordinate {j} has variance {var} > 1"
            )));
        }
    }
    polys
        .iter()
        .map(|p| Ok(p.ou_smooth(params.nu)?.degree_truncate(params.d)))
        .collect()
}

/// Number of fresh variables per source variable:
/// `t = ceil(C_t k d^2 / delta^2)`.
pub fn multilin_params(k: usize, d: u32, delta: f64, c_t: f64) -> Result<usize> {
    if k == 0 || d == 0 {
        return Err(Error::domain("multilin_params: k and d must be positive"));
    }
    if !(delta > 0.0) || !(c_t > 0.0) {
        return Err(Error::domain("multilin_params: delta and C_t must be positive"));
    }
    let t = (c_t * k as f64 * (d as f64) * (d as f64) / (delta * delta)).ceil();
    if !t.is_finite() || t > u32::MAX as f64 {
        return Err(Error::resource(format!("multilin_params: t = {t} out of range")));
    }
    Ok(t as usize)
}

/// Exact statistics of the multilinearized image, computed from the source
/// coefficients without materializing the output.
#[derive(Clone, Debug, Serialize)]
pub struct MultilinStats {
    /// Squared norm of the multilinear part (including the constant term).
    pub ml_norm_sq: f64,
    /// Squared norm of the discarded non-multilinear part.
    pub nml_norm_sq: f64,
    /// Influence of each fresh variable, per source block (all `t` fresh
    /// variables of one block share the same influence).
    pub block_influence: Vec<f64>,
    pub max_influence: f64,
    pub t: usize,
}

/// `prod_{j=0}^{r-1} (t - j)/t`, the fraction of the degree-`r` Hermite
/// image mass that is multilinear in a block of `t` fresh variables.
fn ml_block_weight(t: usize, r: u32) -> f64 {
    let mut w = 1.0;
    for j in 0..r as u64 {
        w *= (t as f64 - j as f64) / t as f64;
    }
    if (r as usize) > t {
        0.0
    } else {
        w.max(0.0)
    }
}

/// Computes [`MultilinStats`] for `multilinearize(a, t)` exactly.
pub fn multilinear_image_stats(a: &HermitePolynomial, t: usize) -> Result<MultilinStats> {
    if t == 0 {
        return Err(Error::domain("multilinearize: t must be at least 1"));
    }
    let n = a.num_vars();
    let mut ml_norm_sq = 0.0;
    let mut block_influence = vec![0.0; n];
    for (sigma, c) in a.terms() {
        let mut w = c * c;
        for (_, r) in sigma.iter() {
            w *= ml_block_weight(t, r);
        }
        ml_norm_sq += w;
        for (var, r) in sigma.iter() {
            block_influence[var] += w * r as f64 / t as f64;
        }
    }
    let norm_sq = a.functionals().norm2_sq;
    let max_influence = block_influence.iter().cloned().fold(0.0, f64::max);
    Ok(MultilinStats {
        ml_norm_sq,
        nml_norm_sq: (norm_sq - ml_norm_sq).max(0.0),
        block_influence,
        max_influence,
        t,
    })
}

fn factorial(r: u32) -> f64 {
    (1..=r as u64).map(|v| v as f64).product()
}

fn binomial_u128(t: u64, r: u64) -> Option<u128> {
    if r > t {
        return Some(0);
    }
    let r = r.min(t - r);
    let mut acc: u128 = 1;
    for j in 0..r {
        acc = acc.checked_mul((t - j) as u128)?;
        acc /= (j + 1) as u128;
    }
    Some(acc)
}

/// Replaces each source variable by an average of `t` fresh variables and
/// returns the multilinear part of the image, on `num_vars * t` variables.
///
/// Source variable `i` maps to the fresh block `i*t .. (i+1)*t`. A term
/// `c H_sigma` contributes, for every choice of `sigma_i` distinct fresh
/// variables per block, the coefficient `c prod_i sqrt(sigma_i!)/t^{sigma_i/2}`
/// on the product of the chosen variables. Fails with a resource error when
/// the output exceeds `budget` terms.
pub fn multilinearize_with_budget(
    a: &HermitePolynomial,
    t: usize,
    budget: u64,
) -> Result<HermitePolynomial> {
    if t == 0 {
        return Err(Error::domain("multilinearize: t must be at least 1"));
    }
    let n = a.num_vars();
    let out_vars = n
        .checked_mul(t)
        .ok_or_else(|| Error::resource("multilinearize: n * t overflows"))?;

    // Output size: sum over terms of prod_i C(t, sigma_i).
    let mut total: u128 = 0;
    for (sigma, _) in a.terms() {
        let mut count: u128 = 1;
        for (_, r) in sigma.iter() {
            count = binomial_u128(t as u64, r as u64)
                .and_then(|b| count.checked_mul(b))
                .ok_or_else(|| Error::resource("multilinearize: term count overflows"))?;
        }
        total += count;
        if total > budget as u128 {
            return Err(Error::resource(format!(
                "multilinearize: output would exceed {budget} terms at t = {t}; \
                 lower t or raise the budget"
            )));
        }
    }

    let mut terms: Vec<(MultiIndex, f64)> = Vec::with_capacity(total as usize);
    for (sigma, c) in a.terms() {
        let blocks: Vec<(usize, u32)> = sigma.iter().collect();
        if blocks.iter().any(|&(_, r)| r as usize > t) {
            continue;
        }
        let mut coeff = c;
        for &(_, r) in &blocks {
            coeff *= factorial(r).sqrt() / (t as f64).powf(r as f64 / 2.0);
        }
        // Depth-first product over per-block subsets of fresh variables.
        let mut chosen: Vec<(usize, u32)> = Vec::new();
        fn descend(
            blocks: &[(usize, u32)],
            level: usize,
            t: usize,
            coeff: f64,
            chosen: &mut Vec<(usize, u32)>,
            terms: &mut Vec<(MultiIndex, f64)>,
        ) {
            if level == blocks.len() {
                terms.push((MultiIndex::from_pairs(chosen.iter().copied()), coeff));
                return;
            }
            let (var, r) = blocks[level];
            let base = var * t;
            let mut subset: Vec<usize> = (0..r as usize).collect();
            loop {
                let mark = chosen.len();
                for &j in &subset {
                    chosen.push((base + j, 1));
                }
                descend(blocks, level + 1, t, coeff, chosen, terms);
                chosen.truncate(mark);
                // Next r-subset of {0..t-1} in lexicographic order.
                let r = subset.len();
                let mut i = r;
                while i > 0 && subset[i - 1] == t - (r - i) - 1 {
                    i -= 1;
                }
                if i == 0 {
                    break;
                }
                subset[i - 1] += 1;
                for j in i..r {
                    subset[j] = subset[j - 1] + 1;
                }
            }
        }
        descend(&blocks, 0, t, coeff, &mut chosen, &mut terms);
    }
    HermitePolynomial::from_terms(out_vars, terms)
}

/// [`multilinearize_with_budget`] with the default term budget.
pub fn multilinearize(a: &HermitePolynomial, t: usize) -> Result<HermitePolynomial> {
    multilinearize_with_budget(a, t, MULTILIN_TERM_BUDGET)
}

/// Target dimension `D = ceil(C_D base^d d^d / delta^4)`, computed in exact
/// arithmetic. When the result exceeds `u64`, `value` is `None` and the
/// exact integer is still reported in `text`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReducedDim {
    pub value: Option<u64>,
    pub text: String,
}

/// Computes the dimension schedule for degree `d` and budget `delta`.
pub fn dimred_params(d: u32, delta: f64, c_d: f64, base: u32) -> Result<ReducedDim> {
    if d == 0 || base == 0 {
        return Err(Error::domain("dimred_params: d and base must be positive"));
    }
    if !(delta > 0.0 && delta.is_finite()) || !(c_d > 0.0 && c_d.is_finite()) {
        return Err(Error::domain("dimred_params: delta and C_D must be positive"));
    }
    let pow = BigInt::from(base).pow(d) * BigInt::from(d).pow(d);
    let c_d = BigRational::from_float(c_d).expect("finite");
    let delta = BigRational::from_float(delta).expect("finite");
    let delta4 = &delta * &delta * &delta * &delta;
    let ratio = c_d * BigRational::from_integer(pow) / delta4;
    let big = ratio.ceil().to_integer().max(BigInt::from(1));
    debug_assert!(big.is_positive());
    Ok(ReducedDim {
        value: big.to_u64(),
        text: big.to_string(),
    })
}

/// A Gaussian projection matrix with `n_rows * n_cols` i.i.d. `N(0,1)`
/// entries, deterministic from its seed.
#[derive(Clone, Debug)]
pub struct ProjectionMatrix {
    entries: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    seed: u64,
}

impl ProjectionMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n_cols..(i + 1) * self.n_cols]
    }
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// Samples `M ~ N(0,1)^{N x D}` from the seed (stream 0 of the seed's
/// generator).
pub fn sample_projection_matrix(n_rows: usize, n_cols: usize, seed: u64) -> Result<ProjectionMatrix> {
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::domain("projection matrix: N and D must be at least 1"));
    }
    n_rows
        .checked_mul(n_cols)
        .filter(|&len| len <= (1 << 31))
        .ok_or_else(|| Error::resource(format!("projection matrix: {n_rows} x {n_cols} too large")))?;
    let mut entries = vec![0.0; n_rows * n_cols];
    let mut rng = substream_rng(seed, 0);
    fill_standard_normal(&mut rng, &mut entries);
    Ok(ProjectionMatrix {
        entries,
        n_rows,
        n_cols,
        seed,
    })
}

/// The substituted strategy `a -> A(M a / ||a||_2)` on `R^D`.
///
/// The zero input (a null event under the Gaussian measure) evaluates to
/// `A(0)`, making the evaluator total without changing any L2 quantity.
pub struct ReducedEvaluator {
    source: VectorFunction,
    matrix: Arc<ProjectionMatrix>,
    source_multilinear: bool,
}

impl ReducedEvaluator {
    pub fn matrix(&self) -> &Arc<ProjectionMatrix> {
        &self.matrix
    }
    pub fn source(&self) -> &VectorFunction {
        &self.source
    }
    /// Whether every source component was multilinear; the correlation
    /// guarantees of the substitution only cover multilinear sources, so
    /// callers surface this flag when it is false.
    pub fn source_multilinear(&self) -> bool {
        self.source_multilinear
    }
}

impl VectorEval for ReducedEvaluator {
    fn num_vars(&self) -> usize {
        self.matrix.n_cols
    }
    fn k(&self) -> usize {
        self.source.k()
    }
    fn eval_into(&self, a: &[f64], out: &mut [f64]) -> Result<()> {
        if a.len() != self.matrix.n_cols {
            return Err(Error::shape(format!(
                "reduced evaluator: input length {} vs D = {}",
                a.len(),
                self.matrix.n_cols
            )));
        }
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut u = vec![0.0; self.matrix.n_rows];
        if norm > 0.0 {
            for (i, ui) in u.iter_mut().enumerate() {
                let row = self.matrix.row(i);
                let mut dot = 0.0;
                for (rj, aj) in row.iter().zip(a) {
                    dot += rj * aj;
                }
                *ui = dot / norm;
            }
        }
        self.source.eval_into(&u, out)
    }
}

/// Builds the substituted strategy for polynomial components.
pub fn dim_reduce(
    polys: &[HermitePolynomial],
    matrix: Arc<ProjectionMatrix>,
) -> Result<ReducedEvaluator> {
    let source = VectorFunction::from_polys(polys.to_vec())?;
    if matrix.n_rows != source.num_vars() {
        return Err(Error::shape(format!(
            "dim_reduce: matrix has {} rows but the source has {} variables",
            matrix.n_rows,
            source.num_vars()
        )));
    }
    let source_multilinear = polys.iter().all(|p| p.is_multilinear());
    Ok(ReducedEvaluator {
        source,
        matrix,
        source_multilinear,
    })
}

/// Per-seed and aggregate results of a projected-correlation experiment.
#[derive(Clone, Debug, Serialize)]
pub struct DimredReport {
    /// Exact source correlation `<A, B>` under `G_rho`.
    pub exact: f64,
    /// MC estimate of `F(M) = <A_M, B_M>` for each matrix seed.
    pub per_seed: Vec<MCEstimate>,
    /// Mean of the per-seed estimates.
    pub mean: f64,
    /// `|mean - exact|`.
    pub mean_deviation: f64,
    /// Standard error of the mean across seeds (matrix plus MC noise).
    pub mean_std_error: f64,
    /// Sample variance of `F(M)` across seeds.
    pub variance: f64,
    pub big_d: usize,
    pub num_seeds: u64,
    pub samples: u64,
    pub rho: f64,
    pub master_seed: u64,
}

/// For `num_seeds` matrices `M ~ N(0,1)^{N x D}`, estimates
/// `F(M) = <A_M, B_M>` under `rho`-correlated Gaussian pairs on `R^D` and
/// reports the deviation of the mean from the exact source correlation and
/// the empirical variance across matrices.
#[allow(clippy::too_many_arguments)]
pub fn dimred_experiment(
    a: &HermitePolynomial,
    b: &HermitePolynomial,
    rho: f64,
    big_d: usize,
    num_seeds: u64,
    samples: u64,
    master_seed: u64,
    workers: usize,
) -> Result<DimredReport> {
    if num_seeds < 2 {
        return Err(Error::domain("dimred_experiment: need at least 2 seeds"));
    }
    let exact = crate::poly::exact_correlation(a, b, rho)?;
    let n = a.num_vars().max(b.num_vars());
    let a = a.with_num_vars(n)?;
    let b = b.with_num_vars(n)?;
    let estimates: Vec<MCEstimate> = run_indexed(num_seeds, master_seed, workers, |i, _| {
        let matrix_seed = derive_seed(master_seed, 2 * i);
        let mc_seed = derive_seed(master_seed, 2 * i + 1);
        let m = Arc::new(sample_projection_matrix(n, big_d, matrix_seed).expect("validated dims"));
        let am = dim_reduce(std::slice::from_ref(&a), Arc::clone(&m)).expect("shapes");
        let bm = dim_reduce(std::slice::from_ref(&b), m).expect("shapes");
        mc_run(2 * big_d, samples, mc_seed, 1, |rng, scratch| {
            let (x, y) = scratch.split_at_mut(big_d);
            fill_correlated_pair(rng, rho, x, y);
            let mut fa = [0.0];
            let mut fb = [0.0];
            am.eval_into(x, &mut fa).expect("length checked");
            bm.eval_into(y, &mut fb).expect("length checked");
            fa[0] * fb[0]
        })
        .expect("samples checked upstream")
    })?;
    let values: Vec<f64> = estimates.iter().map(|e| e.mean).collect();
    let agg = MCEstimate::from_values(&values, master_seed)?;
    let variance = {
        let m = agg.mean;
        values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
    };
    Ok(DimredReport {
        exact,
        per_seed: estimates,
        mean: agg.mean,
        mean_deviation: (agg.mean - exact).abs(),
        mean_std_error: agg.std_error,
        variance,
        big_d,
        num_seeds,
        samples,
        rho,
        master_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::exact_correlation;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn h(var: usize, deg: u32) -> MultiIndex {
        MultiIndex::single(var, deg)
    }

    #[test]
    fn smoothing_schedule_worked_example() {
        let p = smoothing_params(0.5, 2, 0.1, 1.0).unwrap();
        assert_abs_diff_eq!(p.nu, 0.994710936027445, epsilon = 1e-12);
        assert_eq!(p.d, 316);
        let eps = p.eps_tilde();
        assert!(p.nu.powi(2 * p.d as i32) <= eps);
        assert!(p.nu.powi(2 * (p.d - 1) as i32) > eps);
    }

    #[test]
    fn smoothing_schedule_monotone_and_guarded() {
        let d_loose = smoothing_params(0.5, 2, 0.2, 1.0).unwrap().d;
        let d_tight = smoothing_params(0.5, 2, 0.02, 1.0).unwrap().d;
        assert!(d_tight > d_loose);
        assert!(smoothing_params(1.0, 2, 0.1, 1.0).is_err());
        assert!(smoothing_params(0.5, 1, 0.1, 1.0).is_err());
        assert!(smoothing_params(0.5, 2, 0.0, 1.0).is_err());
        // Huge C clamps nu to 0 and the schedule collapses to d = 1.
        let p = smoothing_params(0.0, 2, 0.5, 1e9).unwrap();
        assert_eq!(p.nu, 0.0);
        assert_eq!(p.d, 1);
    }

    #[test]
    fn smooth_is_identity_at_nu_one_within_degree() {
        let a = HermitePolynomial::from_terms(2, [(h(0, 1), 0.6), (h(1, 2), 0.3)]).unwrap();
        let params = SmoothingParams {
            nu: 1.0,
            d: 5,
            c: 1.0,
            rho: 0.5,
            k: 2,
            delta: 0.1,
        };
        let out = smooth(std::slice::from_ref(&a), &params).unwrap();
        assert_eq!(out[0], a);
    }

    #[test]
    fn smooth_checks_variance_and_shrinks_it() {
        let big = HermitePolynomial::from_terms(1, [(h(0, 1), 2.0)]).unwrap();
        let params = smoothing_params(0.5, 2, 0.1, 1.0).unwrap();
        assert!(smooth(std::slice::from_ref(&big), &params).is_err());

        let ok = HermitePolynomial::from_terms(2, [(h(0, 1), 0.5), (h(1, 3), 0.5)]).unwrap();
        let out = smooth(std::slice::from_ref(&ok), &params).unwrap();
        let before = ok.functionals();
        let after = out[0].functionals();
        assert!(after.variance <= before.variance + 1e-15);
        assert!(out[0].degree() <= params.d);
    }

    #[test]
    fn smooth_correlation_shift_stays_in_budget() {
        let params = smoothing_params(0.5, 2, 0.1, 1.0).unwrap();
        let budget = params.delta / (params.k as f64).sqrt();
        let mut rng = substream_rng(21, 0);
        for _ in 0..20 {
            let mut make = || {
                let terms: Vec<(MultiIndex, f64)> = (0..12)
                    .map(|_| {
                        let var = rng.gen_range(0..6);
                        let deg = rng.gen_range(1..=5u32);
                        (h(var, deg), rng.gen_range(-1.0..1.0))
                    })
                    .collect();
                let p = HermitePolynomial::from_terms(6, terms).unwrap();
                let var = p.functionals().variance;
                p.scale(1.0 / var.sqrt().max(1.0)).unwrap()
            };
            let a = make();
            let b = make();
            let (sa, sb) = (
                smooth(std::slice::from_ref(&a), &params).unwrap(),
                smooth(std::slice::from_ref(&b), &params).unwrap(),
            );
            let shift = (exact_correlation(&sa[0], &sb[0], params.rho).unwrap()
                - exact_correlation(&a, &b, params.rho).unwrap())
            .abs();
            assert!(shift <= budget, "shift {shift} exceeds budget {budget}");
        }
    }

    #[test]
    fn multilin_params_examples() {
        assert_eq!(multilin_params(2, 2, 0.2, 4.0).unwrap(), 800);
        let t1 = multilin_params(3, 4, 0.2, 4.0).unwrap();
        let t2 = multilin_params(3, 4, 0.1, 4.0).unwrap();
        assert!(t2 >= 4 * t1 - 4 && t2 <= 4 * t1 + 4);
        for &(k, d, delta) in &[(1usize, 2u32, 1.0f64), (2, 3, 0.5), (4, 5, 0.25)] {
            assert!(multilin_params(k, d, delta, 1.0).unwrap() >= (d * d) as usize);
        }
    }

    #[test]
    fn multilinearize_degree_one_is_exact() {
        let a = HermitePolynomial::from_terms(1, [(h(0, 1), 1.0)]).unwrap();
        let ml = multilinearize(&a, 3).unwrap();
        assert_eq!(ml.num_vars(), 3);
        assert_eq!(ml.num_terms(), 3);
        let c = 1.0 / 3f64.sqrt();
        for v in 0..3 {
            assert_abs_diff_eq!(ml.coeff(&h(v, 1)), c, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(ml.functionals().norm2_sq, 1.0, epsilon = 1e-12);
        for rho in [0.0, 0.3, 1.0] {
            assert_abs_diff_eq!(
                exact_correlation(&ml, &ml, rho).unwrap(),
                exact_correlation(&a, &a, rho).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn multilinearize_h2_t2_worked_example() {
        let a = HermitePolynomial::from_terms(1, [(h(0, 2), 1.0)]).unwrap();
        let ml = multilinearize(&a, 2).unwrap();
        assert_eq!(ml.num_terms(), 1);
        let idx = MultiIndex::from_pairs([(0, 1), (1, 1)]);
        assert_abs_diff_eq!(ml.coeff(&idx), 2f64.sqrt() / 2.0, epsilon = 1e-15);
        let stats = multilinear_image_stats(&a, 2).unwrap();
        assert_abs_diff_eq!(stats.ml_norm_sq, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(stats.nml_norm_sq, 0.5, epsilon = 1e-15);
    }

    /// Full multinomial expansion of `H_r((X_1+..+X_t)/sqrt t)` as an oracle:
    /// enumerate compositions `d_1+..+d_t = r` directly.
    fn expand_single_full(r: u32, t: usize) -> Vec<(Vec<u32>, f64)> {
        let mut out = Vec::new();
        let mut comp = vec![0u32; t];
        fn rec(r_left: u32, pos: usize, comp: &mut Vec<u32>, out: &mut Vec<(Vec<u32>, f64)>, r: u32, t: usize) {
            if pos == t - 1 {
                comp[pos] = r_left;
                let denom: f64 = comp.iter().map(|&d| factorial(d)).product();
                let coeff = (factorial(r) / denom).sqrt() / (t as f64).powf(r as f64 / 2.0);
                out.push((comp.clone(), coeff));
                comp[pos] = 0;
                return;
            }
            for d in 0..=r_left {
                comp[pos] = d;
                rec(r_left - d, pos + 1, comp, out, r, t);
                comp[pos] = 0;
            }
        }
        rec(r, 0, &mut comp, &mut out, r, t);
        out
    }

    #[test]
    fn multilinearize_matches_full_expansion_oracle() {
        for &(r, t) in &[(2u32, 2usize), (2, 3), (3, 3), (3, 4), (4, 4)] {
            let full = expand_single_full(r, t);
            // Norm preservation of the substitution.
            let total: f64 = full.iter().map(|(_, c)| c * c).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            // Multilinear subset against the closed-form materialization.
            let a = HermitePolynomial::from_terms(1, [(h(0, r), 1.0)]).unwrap();
            let ml = multilinearize(&a, t).unwrap();
            let mut ml_mass = 0.0;
            for (comp, c) in &full {
                if comp.iter().all(|&d| d <= 1) {
                    ml_mass += c * c;
                    let idx = MultiIndex::from_pairs(
                        comp.iter().enumerate().filter(|(_, &d)| d == 1).map(|(v, _)| (v, 1)),
                    );
                    assert_abs_diff_eq!(ml.coeff(&idx), *c, epsilon = 1e-12);
                }
            }
            let stats = multilinear_image_stats(&a, t).unwrap();
            assert_abs_diff_eq!(stats.ml_norm_sq, ml_mass, epsilon = 1e-12);
            assert_eq!(ml.num_terms() as u128, binomial_u128(t as u64, r as u64).unwrap());
        }
    }

    #[test]
    fn multilinearize_stats_match_materialization() {
        let mut rng = substream_rng(31, 0);
        for _ in 0..10 {
            let terms: Vec<(MultiIndex, f64)> = (0..8)
                .map(|_| {
                    let v1 = rng.gen_range(0..3);
                    let v2 = rng.gen_range(0..3);
                    let d1 = rng.gen_range(0..=2u32);
                    let d2 = rng.gen_range(0..=1u32);
                    (
                        MultiIndex::from_pairs([(v1, d1), (v2, d2)]),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect();
            let a = HermitePolynomial::from_terms(3, terms).unwrap();
            let t = 7;
            let ml = multilinearize(&a, t).unwrap();
            let stats = multilinear_image_stats(&a, t).unwrap();
            let f = ml.functionals();
            assert_abs_diff_eq!(f.norm2_sq, stats.ml_norm_sq, epsilon = 1e-12);
            assert!(ml.is_multilinear());
            // Norm split against the source.
            let src = a.functionals().norm2_sq;
            assert_abs_diff_eq!(stats.ml_norm_sq + stats.nml_norm_sq, src, epsilon = 1e-9 * src.max(1.0));
            // Fresh-variable influences: every variable of block i carries
            // block_influence[i].
            for (i, &bi) in stats.block_influence.iter().enumerate() {
                for j in 0..t {
                    assert_abs_diff_eq!(f.influences[i * t + j], bi, epsilon = 1e-12);
                }
            }
            let d = a.degree().max(1);
            let var = a.functionals().variance;
            assert!(stats.max_influence <= var * d as f64 / t as f64 + 1e-12);
        }
    }

    #[test]
    fn multilinearize_respects_budget() {
        let a = HermitePolynomial::from_terms(1, [(h(0, 2), 1.0)]).unwrap();
        let err = multilinearize_with_budget(&a, 800, 1000).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
    }

    #[test]
    fn dimred_params_examples() {
        let d1 = dimred_params(1, 0.1, 1.0, 4).unwrap();
        assert_eq!(d1.value, Some(40_000));
        assert_eq!(d1.text, "40000");
        let d2 = dimred_params(2, 0.5, 1.0, 4).unwrap();
        assert_eq!(d2.value, Some(1024));
        let loose = dimred_params(2, 0.9, 1.0, 4).unwrap();
        assert!(loose.value.unwrap() <= d2.value.unwrap());
        let huge = dimred_params(20, 0.1, 1.0, 4).unwrap();
        assert!(huge.value.is_none());
        assert!(huge.text.len() > 19);
        assert!(huge.text.chars().all(|ch| ch.is_ascii_digit()));
    }

    #[test]
    fn projection_matrix_is_seed_deterministic() {
        let m1 = sample_projection_matrix(5, 7, 99).unwrap();
        let m2 = sample_projection_matrix(5, 7, 99).unwrap();
        assert_eq!(m1.entries(), m2.entries());
        let m3 = sample_projection_matrix(5, 7, 100).unwrap();
        assert_ne!(m1.entries()[0], m3.entries()[0]);

        let big = sample_projection_matrix(1000, 1000, 1).unwrap();
        let n = big.entries().len() as f64;
        let mean = big.entries().iter().sum::<f64>() / n;
        let var = big.entries().iter().map(|v| v * v).sum::<f64>() / n - mean * mean;
        assert!(mean.abs() <= 4.0 / n.sqrt());
        assert!((var - 1.0).abs() <= 4.0 * 2f64.sqrt() / n.sqrt());
    }

    #[test]
    fn reduced_evaluator_basics() {
        let constant = HermitePolynomial::constant(3, 2.5);
        let m = Arc::new(sample_projection_matrix(3, 10, 4).unwrap());
        let ev = dim_reduce(std::slice::from_ref(&constant), Arc::clone(&m)).unwrap();
        let mut out = [0.0];
        ev.eval_into(&vec![0.3; 10], &mut out).unwrap();
        assert_eq!(out[0], 2.5);

        let linear = HermitePolynomial::from_terms(3, [(h(0, 1), 1.0)]).unwrap();
        let ev = dim_reduce(std::slice::from_ref(&linear), Arc::clone(&m)).unwrap();
        assert!(ev.source_multilinear());
        ev.eval_into(&vec![0.0; 10], &mut out).unwrap();
        assert_eq!(out[0], 0.0);
        assert!(ev.eval_into(&vec![0.0; 4], &mut out).is_err());

        let mismatched = sample_projection_matrix(2, 10, 4).unwrap();
        assert!(dim_reduce(std::slice::from_ref(&linear), Arc::new(mismatched)).is_err());

        let quadratic = HermitePolynomial::from_terms(3, [(h(0, 2), 1.0)]).unwrap();
        let ev = dim_reduce(std::slice::from_ref(&quadratic), m).unwrap();
        assert!(!ev.source_multilinear());
    }

    #[test]
    fn degree_one_reduction_is_unbiased() {
        let a = HermitePolynomial::from_terms(
            3,
            [(h(0, 1), 0.6), (h(1, 1), -0.3), (h(2, 1), 0.4)],
        )
        .unwrap();
        let b = HermitePolynomial::from_terms(3, [(h(0, 1), 0.5), (h(2, 1), 0.5)]).unwrap();
        let report = dimred_experiment(&a, &b, 0.7, 50, 40, 20_000, 77, 1).unwrap();
        assert!(
            report.mean_deviation <= 4.0 * report.mean_std_error,
            "deviation {} vs se {}",
            report.mean_deviation,
            report.mean_std_error
        );
    }
}
