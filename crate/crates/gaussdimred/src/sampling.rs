//! Seeded Monte Carlo over correlated Gaussian inputs.
//!
//! All estimators use the ChaCha8 generator. A master seed `s` and a stream
//! index `i` determine the generator `substream_rng(s, i)`; estimators split
//! their draws into fixed-size chunks, giving chunk `i` stream `i`, and
//! combine the per-chunk sums in index order. Results are therefore
//! bit-identical for a fixed seed regardless of the worker count.
//!
//! A `rho`-correlated standard Gaussian pair on `n` coordinates is sampled
//! as `X ~ N(0, I_n)`, `Y = rho X + sqrt(1 - rho^2) Z` with `Z` fresh; per
//! coordinate the draw order is `x_i` then `z_i` (the `z` draw is skipped
//! when `sqrt(1 - rho^2) = 0`, so at `rho = 1` the pair is `(X, X)` exactly).
//!
//! The module also hosts the moment experiments used to probe the random
//! projection `a -> M a / ||a||_2`: products of projected coordinates over
//! index sets `S, T` have mean `rho^{|S|} 1{S = T}` in the limit, their
//! covariances vanish exactly unless the symmetric difference of the four
//! index sets is empty, and `E[||w||^{-d}]` for `w ~ N(0, I_D)` has the
//! closed form `2^{-d/2} Gamma((D-d)/2) / Gamma(D/2)`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::VectorFunction;

/// Draws per substream chunk; fixed so that results do not depend on the
/// worker count.
pub(crate) const CHUNK: u64 = 16_384;

/// ChaCha8 generator for `(seed, stream)`.
pub fn substream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an independent child seed from `(seed, tag)` through a dedicated
/// substream, for experiments that seed nested structures (for example one
/// projection matrix per trial).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    substream_rng(seed, tag ^ 0x9e37_79b9_7f4a_7c15).next_u64()
}

/// Fills `buf` with i.i.d. standard normals.
pub fn fill_standard_normal(rng: &mut ChaCha8Rng, buf: &mut [f64]) {
    for v in buf.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Fills `(x, y)` with a `rho`-correlated standard Gaussian pair.
pub fn fill_correlated_pair(rng: &mut ChaCha8Rng, rho: f64, x: &mut [f64], y: &mut [f64]) {
    let coef = (1.0 - rho * rho).max(0.0).sqrt();
    for i in 0..x.len() {
        let xi: f64 = rng.sample(StandardNormal);
        x[i] = xi;
        y[i] = if coef == 0.0 {
            xi
        } else {
            let zi: f64 = rng.sample(StandardNormal);
            rho * xi + coef * zi
        };
    }
}

/// A source of `rho`-correlated standard Gaussian pairs on `n` coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelatedGaussianSource {
    rho: f64,
    n: usize,
    seed: u64,
}

impl CorrelatedGaussianSource {
    pub fn new(rho: f64, n: usize, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::domain(format!("source: rho = {rho} outside [0, 1]")));
        }
        if n == 0 {
            return Err(Error::domain("source: n must be at least 1"));
        }
        Ok(CorrelatedGaussianSource { rho, n, seed })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Pair sampler over substream `stream`. Draws are deterministic given
    /// `(seed, stream, draw index)`.
    pub fn pairs(&self, stream: u64) -> PairStream {
        PairStream {
            rng: substream_rng(self.seed, stream),
            rho: self.rho,
            x: vec![0.0; self.n],
            y: vec![0.0; self.n],
        }
    }
}

/// Stateful pair sampler; reuses internal buffers.
pub struct PairStream {
    rng: ChaCha8Rng,
    rho: f64,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl PairStream {
    /// Draws the next pair and returns views of it.
    pub fn next_pair(&mut self) -> (&[f64], &[f64]) {
        fill_correlated_pair(&mut self.rng, self.rho, &mut self.x, &mut self.y);
        (&self.x, &self.y)
    }
}

/// A Monte Carlo estimate with its standard error (`sample standard
/// deviation / sqrt(samples)`). Requires at least two samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
    pub seed: u64,
}

impl MCEstimate {
    pub(crate) fn from_sums(sum: f64, sum_sq: f64, samples: u64, seed: u64) -> Result<Self> {
        if samples < 2 {
            return Err(Error::domain(format!(
                "an estimate needs at least 2 samples, got {samples}"
            )));
        }
        let n = samples as f64;
        let mean = sum / n;
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        Ok(MCEstimate {
            mean,
            std_error: (var / n).sqrt(),
            samples,
            seed,
        })
    }

    /// Estimate from raw observations.
    pub fn from_values(values: &[f64], seed: u64) -> Result<Self> {
        let sum: f64 = values.iter().sum();
        let sum_sq: f64 = values.iter().map(|v| v * v).sum();
        Self::from_sums(sum, sum_sq, values.len() as u64, seed)
    }
}

/// Componentwise means and standard errors for a vector-valued estimator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VecEstimate {
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub samples: u64,
    pub seed: u64,
}

fn chunk_lens(samples: u64) -> Vec<u64> {
    let full = samples / CHUNK;
    let rest = samples % CHUNK;
    let mut lens = vec![CHUNK; full as usize];
    if rest > 0 {
        lens.push(rest);
    }
    lens
}

/// Runs a vector-valued Monte Carlo estimator.
///
/// `draw(rng, out, scratch)` fills `out` (length `dim`) with one observation;
/// `scratch` is a reusable buffer of length `scratch_len`. Chunk `i` of
/// [`CHUNK`] draws uses stream `i` of `seed`; per-chunk sums are combined in
/// chunk order, so the result is independent of `workers`.
pub fn mc_run_vec<F>(
    dim: usize,
    scratch_len: usize,
    samples: u64,
    seed: u64,
    workers: usize,
    draw: F,
) -> Result<VecEstimate>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64], &mut [f64]) + Sync,
{
    if samples < 2 {
        return Err(Error::domain(format!(
            "an estimate needs at least 2 samples, got {samples}"
        )));
    }
    let lens = chunk_lens(samples);
    let run_chunk = |(idx, len): (usize, u64)| -> (Vec<f64>, Vec<f64>) {
        let mut rng = substream_rng(seed, idx as u64);
        let mut out = vec![0.0; dim];
        let mut scratch = vec![0.0; scratch_len];
        let mut sums = vec![0.0; dim];
        let mut sum_sqs = vec![0.0; dim];
        for _ in 0..len {
            draw(&mut rng, &mut out, &mut scratch);
            for (j, &v) in out.iter().enumerate() {
                sums[j] += v;
                sum_sqs[j] += v * v;
            }
        }
        (sums, sum_sqs)
    };
    let parts: Vec<(Vec<f64>, Vec<f64>)> = if workers > 1 && lens.len() > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::config(format!("worker pool: {e}")))?;
        pool.install(|| {
            lens.iter()
                .copied()
                .enumerate()
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(run_chunk)
                .collect()
        })
    } else {
        lens.iter().copied().enumerate().map(run_chunk).collect()
    };
    let mut sums = vec![0.0; dim];
    let mut sum_sqs = vec![0.0; dim];
    for (s, q) in parts {
        for j in 0..dim {
            sums[j] += s[j];
            sum_sqs[j] += q[j];
        }
    }
    let n = samples as f64;
    let mut means = Vec::with_capacity(dim);
    let mut std_errors = Vec::with_capacity(dim);
    for j in 0..dim {
        let mean = sums[j] / n;
        let var = ((sum_sqs[j] - n * mean * mean) / (n - 1.0)).max(0.0);
        means.push(mean);
        std_errors.push((var / n).sqrt());
    }
    Ok(VecEstimate {
        means,
        std_errors,
        samples,
        seed,
    })
}

/// Scalar wrapper around [`mc_run_vec`].
pub fn mc_run<F>(
    scratch_len: usize,
    samples: u64,
    seed: u64,
    workers: usize,
    draw: F,
) -> Result<MCEstimate>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> f64 + Sync,
{
    let est = mc_run_vec(1, scratch_len, samples, seed, workers, |rng, out, scratch| {
        out[0] = draw(rng, scratch);
    })?;
    Ok(MCEstimate {
        mean: est.means[0],
        std_error: est.std_errors[0],
        samples,
        seed,
    })
}

/// Runs `count` independent trials, trial `i` on stream `i`, returning the
/// per-trial results in index order (worker-count invariant).
pub fn run_indexed<T, F>(count: u64, seed: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> T + Sync,
{
    let run_one = |i: u64| -> T {
        let mut rng = substream_rng(seed, i);
        f(i, &mut rng)
    };
    if workers > 1 && count > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::config(format!("worker pool: {e}")))?;
        Ok(pool.install(|| (0..count).into_par_iter().map(run_one).collect()))
    } else {
        Ok((0..count).map(run_one).collect())
    }
}

/// Estimated correlation matrix `E[A_i(X) B_j(Y)]` under `rho`-correlated
/// Gaussians, with componentwise standard errors.
#[derive(Clone, Debug, Serialize)]
pub struct CorrelationReport {
    pub estimates: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
    pub rho: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Monte Carlo estimate of all pairwise correlations `<A_i, B_j>_rho`.
pub fn mc_correlation(
    a: &VectorFunction,
    b: &VectorFunction,
    rho: f64,
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<CorrelationReport> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!(
            "mc_correlation: rho = {rho} outside [0, 1]"
        )));
    }
    if a.num_vars() != b.num_vars() {
        return Err(Error::shape(format!(
            "mc_correlation: {} vs {} variables",
            a.num_vars(),
            b.num_vars()
        )));
    }
    let n = a.num_vars();
    let (ka, kb) = (a.k(), b.k());
    let dim = ka * kb;
    let scratch_len = 2 * n + ka + kb;
    let est = mc_run_vec(dim, scratch_len, samples, seed, workers, |rng, out, scratch| {
        let (xy, fab) = scratch.split_at_mut(2 * n);
        let (x, y) = xy.split_at_mut(n);
        fill_correlated_pair(rng, rho, x, y);
        let (fa, fb) = fab.split_at_mut(ka);
        a.eval_into(x, fa).expect("shape checked");
        b.eval_into(y, fb).expect("shape checked");
        for i in 0..ka {
            for j in 0..kb {
                out[i * kb + j] = fa[i] * fb[j];
            }
        }
    })?;
    let to_matrix = |flat: &[f64]| -> Vec<Vec<f64>> {
        (0..ka).map(|i| flat[i * kb..(i + 1) * kb].to_vec()).collect()
    };
    Ok(CorrelationReport {
        estimates: to_matrix(&est.means),
        std_errors: to_matrix(&est.std_errors),
        rho,
        samples,
        seed,
    })
}

/// Exact `E[||w||^{-d}]` for `w ~ N(0, I_D)`:
/// `2^{-d/2} Gamma((D - d)/2) / Gamma(D/2)`, requiring `D > d`.
pub fn chi_negative_moment_exact(big_d: u32, d: u32) -> Result<f64> {
    if big_d <= d {
        return Err(Error::domain(format!(
            "chi moment: need D > d, got D = {big_d}, d = {d}"
        )));
    }
    use statrs::function::gamma::ln_gamma;
    let big_d = big_d as f64;
    let d = d as f64;
    Ok((ln_gamma((big_d - d) / 2.0) - ln_gamma(big_d / 2.0) - d / 2.0 * 2f64.ln()).exp())
}

/// Monte Carlo companion of [`chi_negative_moment_exact`].
pub fn chi_negative_moment_mc(
    big_d: u32,
    d: u32,
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<MCEstimate> {
    if big_d == 0 {
        return Err(Error::domain("chi moment: D must be at least 1"));
    }
    let dd = big_d as usize;
    mc_run(dd, samples, seed, workers, move |rng, scratch| {
        fill_standard_normal(rng, scratch);
        let norm_sq: f64 = scratch.iter().map(|v| v * v).sum();
        norm_sq.powf(-(d as f64) / 2.0)
    })
}

/// Result of a moment experiment: the estimate plus the limiting reference
/// value it is being compared against.
#[derive(Clone, Debug, Serialize)]
pub struct MomentExperiment {
    pub estimate: MCEstimate,
    /// Limit value: `rho^{|S|}` when `S = T`, `0` otherwise (and `rho^d` for
    /// the normalized-inner-product experiment).
    pub reference: f64,
}

fn validate_index_set(s: &[usize], n: usize, name: &str) -> Result<Vec<usize>> {
    let mut sorted = s.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != s.len() {
        return Err(Error::domain(format!("{name}: repeated index")));
    }
    if let Some(&max) = sorted.last() {
        if max >= n {
            return Err(Error::domain(format!(
                "{name}: index {max} out of range for N = {n}"
            )));
        }
    }
    Ok(sorted)
}

/// Projected-coordinate products for one random matrix draw.
///
/// For fixed `M` with i.i.d. `N(0,1)` rows `m_i`, and a fresh
/// `rho`-correlated pair `(a, b)` on `R^D`, let `U_i = <m_i, a/||a||>` and
/// `V_i = <m_i, b/||b||>`. One trial draws `M` and averages
/// `prod_{i in S} U_i * prod_{i in T} V_i` over `samples` pairs; the
/// experiment reports the mean and standard error across `trials` trials.
/// Only the rows in `S union T` are sampled; the others never enter the
/// product.
#[allow(clippy::too_many_arguments)]
pub fn monomial_moment_experiment(
    s: &[usize],
    t: &[usize],
    rho: f64,
    n: usize,
    big_d: usize,
    trials: u64,
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<MomentExperiment> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!("monomial: rho = {rho} outside [0, 1]")));
    }
    if big_d == 0 {
        return Err(Error::domain("monomial: D must be at least 1"));
    }
    let s = validate_index_set(s, n, "S")?;
    let t = validate_index_set(t, n, "T")?;
    let mut union = s.clone();
    union.extend_from_slice(&t);
    union.sort_unstable();
    union.dedup();
    let row_of = |var: usize| union.binary_search(&var).expect("member of union");
    let s_rows: Vec<usize> = s.iter().map(|&v| row_of(v)).collect();
    let t_rows: Vec<usize> = t.iter().map(|&v| row_of(v)).collect();
    let reference = if s == t { rho.powi(s.len() as i32) } else { 0.0 };

    let rows = union.len();
    let values = run_indexed(trials, seed, workers, |_, rng| {
        let mut m = vec![0.0; rows * big_d];
        fill_standard_normal(rng, &mut m);
        let mut a = vec![0.0; big_d];
        let mut b = vec![0.0; big_d];
        let mut u = vec![0.0; rows];
        let mut v = vec![0.0; rows];
        let mut acc = 0.0;
        for _ in 0..samples {
            fill_correlated_pair(rng, rho, &mut a, &mut b);
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            for r in 0..rows {
                let row = &m[r * big_d..(r + 1) * big_d];
                let (mut du, mut dv) = (0.0, 0.0);
                for j in 0..big_d {
                    du += row[j] * a[j];
                    dv += row[j] * b[j];
                }
                u[r] = du / na;
                v[r] = dv / nb;
            }
            let mut prod = 1.0;
            for &r in &s_rows {
                prod *= u[r];
            }
            for &r in &t_rows {
                prod *= v[r];
            }
            acc += prod;
        }
        acc / samples as f64
    })?;
    Ok(MomentExperiment {
        estimate: MCEstimate::from_values(&values, seed)?,
        reference,
    })
}

/// Estimates `E[prod_{j=1}^{d} <u_j, v_j> / (||u_j|| ||v_j||)]` over `d`
/// independent `rho`-correlated pairs on `R^D`, whose limit as `D` grows is
/// `rho^d`.
pub fn normalized_inner_product_experiment(
    d: u32,
    rho: f64,
    big_d: usize,
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<MomentExperiment> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!(
            "normalized inner product: rho = {rho} outside [0, 1]"
        )));
    }
    if big_d == 0 {
        return Err(Error::domain("normalized inner product: D must be at least 1"));
    }
    let estimate = mc_run(2 * big_d, samples, seed, workers, move |rng, scratch| {
        let (u, v) = scratch.split_at_mut(big_d);
        let mut prod = 1.0;
        for _ in 0..d {
            fill_correlated_pair(rng, rho, u, v);
            let mut dot = 0.0;
            let mut nu = 0.0;
            let mut nv = 0.0;
            for j in 0..big_d {
                dot += u[j] * v[j];
                nu += u[j] * u[j];
                nv += v[j] * v[j];
            }
            prod *= dot / (nu.sqrt() * nv.sqrt());
        }
        prod
    })?;
    Ok(MomentExperiment {
        estimate,
        reference: rho.powi(d as i32),
    })
}

/// Result of a covariance experiment between two projected-coordinate
/// products sharing the matrix draw.
#[derive(Clone, Debug, Serialize)]
pub struct CovarianceExperiment {
    /// Sample covariance across trials of the two per-trial means.
    pub covariance: f64,
    /// Delta-method standard error of the covariance estimate.
    pub std_error: f64,
    pub trials: u64,
    pub seed: u64,
    /// `Some(0.0)` when the symmetric difference `S (+) T (+) S' (+) T'` is
    /// nonempty (the covariance vanishes exactly); `None` otherwise.
    pub reference: Option<f64>,
    pub mean_first: f64,
    pub mean_second: f64,
}

/// True when the parity-wise symmetric difference of the four sets is empty.
fn symmetric_difference_empty(sets: [&[usize]; 4]) -> bool {
    use std::collections::BTreeMap;
    let mut parity: BTreeMap<usize, u32> = BTreeMap::new();
    for set in sets {
        for &v in set {
            *parity.entry(v).or_insert(0) ^= 1;
        }
    }
    parity.values().all(|&p| p == 0)
}

/// Covariance of `E_{a,b}[U_S V_T]` and `E_{a',b'}[U_{S'} V_{T'}]` over the
/// shared matrix draw `M`; the two inner averages use independent pair
/// batches of `samples` draws each.
#[allow(clippy::too_many_arguments)]
pub fn covariance_experiment(
    s: &[usize],
    t: &[usize],
    s2: &[usize],
    t2: &[usize],
    rho: f64,
    n: usize,
    big_d: usize,
    trials: u64,
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<CovarianceExperiment> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!("covariance: rho = {rho} outside [0, 1]")));
    }
    if big_d == 0 {
        return Err(Error::domain("covariance: D must be at least 1"));
    }
    if trials < 2 {
        return Err(Error::domain("covariance: need at least 2 trials"));
    }
    let s = validate_index_set(s, n, "S")?;
    let t = validate_index_set(t, n, "T")?;
    let s2 = validate_index_set(s2, n, "S'")?;
    let t2 = validate_index_set(t2, n, "T'")?;
    let mut union: Vec<usize> = s.iter().chain(&t).chain(&s2).chain(&t2).copied().collect();
    union.sort_unstable();
    union.dedup();
    let row_of = |var: usize| union.binary_search(&var).expect("member of union");
    let rows = union.len();
    let to_rows = |set: &[usize]| -> Vec<usize> { set.iter().map(|&v| row_of(v)).collect() };
    let (s_r, t_r, s2_r, t2_r) = (to_rows(&s), to_rows(&t), to_rows(&s2), to_rows(&t2));
    let reference = if symmetric_difference_empty([&s, &t, &s2, &t2]) {
        None
    } else {
        Some(0.0)
    };

    let pairs: Vec<(f64, f64)> = run_indexed(trials, seed, workers, |_, rng| {
        let mut m = vec![0.0; rows * big_d];
        fill_standard_normal(rng, &mut m);
        let mut a = vec![0.0; big_d];
        let mut b = vec![0.0; big_d];
        let mut u = vec![0.0; rows];
        let mut v = vec![0.0; rows];
        let batch = |su: &[usize], tv: &[usize], rng: &mut ChaCha8Rng,
                         a: &mut [f64], b: &mut [f64], u: &mut [f64], v: &mut [f64]|
         -> f64 {
            let mut acc = 0.0;
            for _ in 0..samples {
                fill_correlated_pair(rng, rho, a, b);
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                for r in 0..rows {
                    let row = &m[r * big_d..(r + 1) * big_d];
                    let (mut du, mut dv) = (0.0, 0.0);
                    for j in 0..big_d {
                        du += row[j] * a[j];
                        dv += row[j] * b[j];
                    }
                    u[r] = du / na;
                    v[r] = dv / nb;
                }
                let mut prod = 1.0;
                for &r in su {
                    prod *= u[r];
                }
                for &r in tv {
                    prod *= v[r];
                }
                acc += prod;
            }
            acc / samples as f64
        };
        let m1 = batch(&s_r, &t_r, rng, &mut a, &mut b, &mut u, &mut v);
        let m2 = batch(&s2_r, &t2_r, rng, &mut a, &mut b, &mut u, &mut v);
        (m1, m2)
    })?;

    let nt = trials as f64;
    let mean1: f64 = pairs.iter().map(|p| p.0).sum::<f64>() / nt;
    let mean2: f64 = pairs.iter().map(|p| p.1).sum::<f64>() / nt;
    let centered: Vec<f64> = pairs
        .iter()
        .map(|&(m1, m2)| (m1 - mean1) * (m2 - mean2))
        .collect();
    let covariance = centered.iter().sum::<f64>() / (nt - 1.0);
    let var_of_products = centered
        .iter()
        .map(|c| (c - covariance) * (c - covariance))
        .sum::<f64>()
        / (nt - 1.0);
    Ok(CovarianceExperiment {
        covariance,
        std_error: (var_of_products / nt).sqrt(),
        trials,
        seed,
        reference,
        mean_first: mean1,
        mean_second: mean2,
    })
}

/// One experiment result in the common report schema.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub params: serde_json::Value,
    pub estimate: f64,
    pub std_error: f64,
    pub reference: Option<f64>,
    pub samples: u64,
    pub seed: u64,
}

/// Serializes records as a JSON array (stable field order).
pub fn records_to_json(records: &[ExperimentRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(records)?)
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Mirrors the JSON records as CSV with identical columns; `params` is the
/// compact JSON object in one quoted field.
pub fn records_to_csv(records: &[ExperimentRecord]) -> Result<String> {
    let mut out = String::from("experiment,params,estimate,std_error,reference,samples,seed\n");
    for r in records {
        let params = serde_json::to_string(&r.params)?;
        let reference = r.reference.map_or(String::new(), |v| format!("{v}"));
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            csv_escape(&r.experiment),
            csv_escape(&params),
            r.estimate,
            r.std_error,
            reference,
            r.samples,
            r.seed
        ));
    }
    Ok(out)
}
