//! End-to-end strategy transformations.
//!
//! [`gaussian_nis`] runs the four-stage chain on polynomial strategies over
//! a shared Gaussian source: Ornstein-Uhlenbeck smoothing with degree
//! truncation, multilinearization onto fresh variable blocks, substitution
//! of a single shared Gaussian projection matrix, and simplex projection.
//! The output has the closed form `A~(a) = R(A0(a / ||a||_2))` with `A0` a
//! low-degree polynomial, and the A-side output never depends on the B
//! side (obliviousness): every stage parameter and the shared matrix seed
//! derive from `(rho, eps, k, consts, seed)` alone.
//!
//! [`discrete_nis`] lifts the same core to finite sources: Bonami-Beckner
//! smoothing, selection of influential head coordinates, per-head-restriction
//! transfer to Gaussian space, the Gaussian core, a Monte Carlo re-expansion
//! of the reduced functions in the Hermite basis, transfer back onto top
//! characters of fresh coordinates, and reassembly over `n0 = h + D t`
//! inputs.
//!
//! The overall error budget is `delta = eps^2 / k^4`, split equally across
//! the analytic stages. Honest schedules produce astronomically large
//! parameters; [`Overrides`] pins `(d, t, D, h)` for desk-scale runs while
//! reports still carry the schedule values.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::discrete::{
    aligned_bases, bonami_beckner, discrete_correlation, discrete_degree_truncate,
    invariance_to_discrete, invariance_to_gaussian, regularity_select, restrict,
    select_top_influences, AlignedBases, DiscretePolynomial, JointSpace, Side,
};
use crate::error::{Error, Result};
use crate::poly::{exact_correlation, HermitePolynomial, MultiIndex, VectorFunction};
use crate::sampling::{
    self, derive_seed, fill_correlated_pair, fill_standard_normal, mc_correlation, mc_run,
    run_indexed, substream_rng, MCEstimate, VecEstimate,
};
use crate::simplex::{
    dist_to_simplex, joint_distribution, project_simplex_in_place, projected, tv_distance,
    JointDistributionK, JointEstimate,
};
use crate::transforms::{
    dim_reduce, dimred_params, multilin_params, multilinearize, sample_projection_matrix, smooth,
    smoothing_nu, smoothing_params, ProjectionMatrix, ReducedDim, SmoothingParams,
};

const TAG_MATRIX: u64 = 0x6d74;
const TAG_JOINT_BEFORE: u64 = 0x6a30;
const TAG_JOINT_AFTER: u64 = 0x6a31;
const TAG_CORR_REDUCED: u64 = 0x6352;
const TAG_CORR_PROJECTED: u64 = 0x6350;
const TAG_DIST: u64 = 0x6430;
const TAG_SELECT: u64 = 0x7331;
const TAG_ESTIMATE: u64 = 0x6531;

/// Schedule constants, all defaulting to their nominal values.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Consts {
    /// Smoothing schedule constant.
    pub c_smooth: f64,
    /// Multilinearization block-count constant.
    pub c_t: f64,
    /// Reduced-dimension constant.
    pub c_d: f64,
    /// Reduced-dimension base.
    pub base: u32,
}

impl Default for Consts {
    fn default() -> Self {
        Consts {
            c_smooth: 1.0,
            c_t: 4.0,
            c_d: 1.0,
            base: 4,
        }
    }
}

/// Desk-scale parameter pins; `None` means use the schedule value.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Overrides {
    pub d: Option<u32>,
    pub t: Option<usize>,
    pub big_d: Option<u64>,
    pub h: Option<usize>,
}

/// Knobs shared by every pipeline run.
#[derive(Clone, Debug, Serialize)]
pub struct PipelineOptions {
    pub consts: Consts,
    pub overrides: Overrides,
    pub seed: u64,
    /// Sample count for every Monte Carlo measurement in the run.
    pub samples: u64,
    pub workers: usize,
    /// Emit per-stage wall-clock seconds (disable for byte-identical replays).
    pub timings: bool,
    /// Influence threshold parameter for head selection in [`discrete_nis`].
    pub tau: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            consts: Consts::default(),
            overrides: Overrides::default(),
            seed: 0,
            samples: 50_000,
            workers: 1,
            timings: true,
            tau: 0.2,
        }
    }
}

/// A reported number: exact (zero SE, no samples) or Monte Carlo.
#[derive(Clone, Debug, Serialize)]
pub struct Measured {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
    pub method: &'static str,
}

impl Measured {
    pub fn exact(value: f64) -> Self {
        Measured {
            value,
            std_error: 0.0,
            samples: 0,
            method: "exact",
        }
    }
    pub fn mc(value: f64, std_error: f64, samples: u64) -> Self {
        Measured {
            value,
            std_error,
            samples,
            method: "mc",
        }
    }
    fn from_estimate(est: &MCEstimate) -> Self {
        Measured::mc(est.mean, est.std_error, est.samples)
    }
}

/// One executed stage: its parameters and the correlation matrix and mean
/// simplex distance on each side of it.
#[derive(Clone, Debug, Serialize)]
pub struct StageReport {
    pub name: &'static str,
    pub params: serde_json::Value,
    pub correlation_before: Vec<Vec<Measured>>,
    pub correlation_after: Vec<Vec<Measured>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simplex_dist_before: Option<Measured>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simplex_dist_after: Option<Measured>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

/// Head/tail bookkeeping of a discrete run.
#[derive(Clone, Debug, Serialize)]
pub struct DiscreteBookkeeping {
    pub q: usize,
    pub source_rho: f64,
    pub alpha: f64,
    pub head: Vec<usize>,
    pub h: usize,
    pub tail_vars: usize,
    pub gaussian_vars: usize,
    pub d: u32,
    pub t: usize,
    pub big_d: u64,
    /// Output coordinate count `h + D t`.
    pub n0: usize,
}

/// Everything measured during a pipeline run.
#[derive(Clone, Debug, Serialize)]
pub struct PipelineReport {
    pub pipeline: &'static str,
    pub k: usize,
    pub rho: f64,
    pub eps: f64,
    /// Global budget `eps^2 / k^4`.
    pub delta: f64,
    /// Equal per-stage share of `delta`.
    pub stage_delta: f64,
    pub stages: Vec<StageReport>,
    pub initial_joint: JointEstimate,
    pub final_joint: JointEstimate,
    pub tv_before_after: Measured,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discrete: Option<DiscreteBookkeeping>,
    pub seed: u64,
    pub samples: u64,
    pub workers: usize,
}

fn tv_measured(before: &JointEstimate, after: &JointEstimate) -> Result<Measured> {
    let tv = tv_distance(&before.dist, &after.dist)?;
    let var: f64 = before
        .std_errors
        .iter()
        .flatten()
        .chain(after.std_errors.iter().flatten())
        .map(|se| se * se)
        .sum();
    Ok(Measured::mc(
        tv,
        0.5 * var.sqrt(),
        before.samples.min(after.samples),
    ))
}

fn joint_measured(est: &JointEstimate) -> Vec<Vec<Measured>> {
    est.dist
        .probs()
        .iter()
        .zip(&est.std_errors)
        .map(|(row, ses)| {
            row.iter()
                .zip(ses)
                .map(|(&p, &se)| Measured::mc(p, se, est.samples))
                .collect()
        })
        .collect()
}

fn exact_corr_matrix(
    a: &[HermitePolynomial],
    b: &[HermitePolynomial],
    rho: f64,
) -> Result<Vec<Vec<Measured>>> {
    a.iter()
        .map(|ai| {
            b.iter()
                .map(|bj| Ok(Measured::exact(exact_correlation(ai, bj, rho)?)))
                .collect()
        })
        .collect()
}

fn exact_discrete_corr_matrix(
    a: &[DiscretePolynomial],
    b: &[DiscretePolynomial],
    bases: &AlignedBases,
) -> Result<Vec<Vec<Measured>>> {
    a.iter()
        .map(|ai| {
            b.iter()
                .map(|bj| Ok(Measured::exact(discrete_correlation(ai, bj, bases)?)))
                .collect()
        })
        .collect()
}

fn mc_corr_matrix(
    a: &VectorFunction,
    b: &VectorFunction,
    rho: f64,
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<Vec<Measured>>> {
    let rep = mc_correlation(a, b, rho, samples, seed, workers)?;
    Ok(rep
        .estimates
        .iter()
        .zip(&rep.std_errors)
        .map(|(row, ses)| {
            row.iter()
                .zip(ses)
                .map(|(&v, &se)| Measured::mc(v, se, samples))
                .collect()
        })
        .collect())
}

fn stage_seconds(start: Instant, enabled: bool) -> Option<f64> {
    enabled.then(|| start.elapsed().as_secs_f64())
}

/// Smoothing schedule with override rescue: a pinned degree keeps the run
/// alive when the schedule degree is out of range, and the schedule value
/// (or the reason it is unavailable) is still reported.
fn resolve_degree(
    rho: f64,
    k: usize,
    stage_delta: f64,
    c_smooth: f64,
    pin: Option<u32>,
) -> Result<(f64, serde_json::Value, u32)> {
    match (pin, smoothing_params(rho, k, stage_delta, c_smooth)) {
        (pin, Ok(s)) => Ok((s.nu, serde_json::json!(s.d), pin.unwrap_or(s.d))),
        (Some(d), Err(e)) => Ok((
            smoothing_nu(rho, k, stage_delta, c_smooth)?,
            serde_json::json!(e.to_string()),
            d,
        )),
        (None, Err(e)) => Err(e),
    }
}

/// Block-count schedule with the same override rescue as [`resolve_degree`].
fn resolve_blocks(
    k: usize,
    d_used: u32,
    stage_delta: f64,
    c_t: f64,
    pin: Option<usize>,
) -> Result<(serde_json::Value, usize)> {
    match (pin, multilin_params(k, d_used, stage_delta, c_t)) {
        (pin, Ok(t)) => Ok((serde_json::json!(t), pin.unwrap_or(t))),
        (Some(t), Err(e)) => Ok((serde_json::json!(e.to_string()), t)),
        (None, Err(e)) => Err(e),
    }
}

/// [`dimred_params`] behind a magnitude pre-check: past ten thousand
/// decimal digits the exact integer is summarized as a power of ten
/// instead of materialized, so override combinations that leave the
/// schedule degree huge cannot stall the run.
fn schedule_dim(d: u32, delta: f64, c_d: f64, base: u32) -> Result<ReducedDim> {
    let digits = c_d.log10()
        + d as f64 * ((base as f64).log10() + (d as f64).log10())
        - 4.0 * delta.log10();
    if digits > 10_000.0 {
        return Ok(ReducedDim {
            value: None,
            text: format!("about 10^{:.0}", digits.floor()),
        });
    }
    dimred_params(d, delta, c_d, base)
}

/// A transformed Gaussian strategy `a -> R(core(M a / ||a||_2))`.
///
/// `core` is the smoothed, multilinearized polynomial vector; `matrix` is
/// the shared projection; `function` is the composed evaluator on the
/// reduced domain.
pub struct GaussianStrategy {
    core: Vec<HermitePolynomial>,
    matrix: Arc<ProjectionMatrix>,
    function: VectorFunction,
}

impl std::fmt::Debug for GaussianStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaussianStrategy")
            .field("k", &self.k())
            .field("num_inputs", &self.num_inputs())
            .field("degree", &self.degree())
            .finish_non_exhaustive()
    }
}

impl GaussianStrategy {
    pub fn core(&self) -> &[HermitePolynomial] {
        &self.core
    }
    pub fn matrix(&self) -> &ProjectionMatrix {
        &self.matrix
    }
    /// The composed evaluator on `R^D`.
    pub fn function(&self) -> &VectorFunction {
        &self.function
    }
    pub fn k(&self) -> usize {
        self.core.len()
    }
    /// Reduced input dimension `D`.
    pub fn num_inputs(&self) -> usize {
        self.matrix.n_cols()
    }
    pub fn degree(&self) -> u32 {
        self.core.iter().map(|p| p.degree()).max().unwrap_or(0)
    }
    /// Evaluates the strategy at a reduced-domain point.
    pub fn eval(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.function.eval(a)
    }
}

fn validate_strategy_slice(polys: &[HermitePolynomial], name: &str) -> Result<(usize, usize)> {
    if polys.is_empty() {
        return Err(Error::shape(format!("{name}: needs at least one component")));
    }
    let n = polys[0].num_vars();
    if polys.iter().any(|p| p.num_vars() != n) {
        return Err(Error::shape(format!(
            "{name}: components must share num_vars"
        )));
    }
    Ok((polys.len(), n))
}

/// Runs the four-stage Gaussian transformation on both strategies with a
/// single shared projection matrix.
///
/// When `a` and `b` are the same slice, the B-side work is skipped and both
/// returned handles point at one object. All A-side outputs are a
/// deterministic function of `(a, rho, eps, opts)`; they are bit-identical
/// across runs regardless of `b`.
pub fn gaussian_nis(
    a: &[HermitePolynomial],
    b: &[HermitePolynomial],
    rho: f64,
    eps: f64,
    opts: &PipelineOptions,
) -> Result<(Arc<GaussianStrategy>, Arc<GaussianStrategy>, PipelineReport)> {
    let (k, n) = validate_strategy_slice(a, "gaussian_nis: A")?;
    let (kb, nb) = validate_strategy_slice(b, "gaussian_nis: B")?;
    if k != kb || k < 2 {
        return Err(Error::shape(format!(
            "gaussian_nis: sides have k = {k} and k = {kb}; need equal k >= 2"
        )));
    }
    if n != nb {
        return Err(Error::shape(format!(
            "gaussian_nis: sides have {n} and {nb} variables; widen to a common count first"
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::domain(format!("gaussian_nis: eps = {eps} must be positive")));
    }
    if rho >= 1.0 {
        return Err(Error::config(
            "gaussian_nis: smooth stage has no schedule at rho = 1 (no noise to add)",
        ));
    }
    let same = std::ptr::eq(a.as_ptr(), b.as_ptr()) && a.len() == b.len();
    let delta = eps * eps / (k as f64).powi(4);
    let stage_delta = delta / 4.0;
    let seed = opts.seed;
    let samples = opts.samples;
    let workers = opts.workers;
    let mut stages = Vec::with_capacity(4);

    let vf_a0 = VectorFunction::from_polys(a.to_vec())?;
    let vf_b0 = VectorFunction::from_polys(b.to_vec())?;
    let initial_joint = joint_distribution(
        &vf_a0,
        &vf_b0,
        rho,
        samples,
        derive_seed(seed, TAG_JOINT_BEFORE),
        workers,
    )?;

    // Stage 1: smoothing with degree truncation.
    let start = Instant::now();
    let (nu, d_schedule_json, d_used) =
        resolve_degree(rho, k, stage_delta, opts.consts.c_smooth, opts.overrides.d)
            .map_err(|e| Error::config(format!("smooth stage: {e}")))?;
    let params = SmoothingParams {
        nu,
        d: d_used,
        c: opts.consts.c_smooth,
        rho,
        k,
        delta: stage_delta,
    };
    let a_s = smooth(a, &params).map_err(|e| Error::config(format!("smooth stage (A): {e}")))?;
    let b_s = if same {
        a_s.clone()
    } else {
        smooth(b, &params).map_err(|e| Error::config(format!("smooth stage (B): {e}")))?
    };
    stages.push(StageReport {
        name: "smooth",
        params: serde_json::json!({
            "nu": params.nu,
            "d_schedule": d_schedule_json,
            "d": d_used,
            "stage_delta": stage_delta,
        }),
        correlation_before: exact_corr_matrix(a, b, rho)?,
        correlation_after: exact_corr_matrix(&a_s, &b_s, rho)?,
        simplex_dist_before: Some(Measured::from_estimate(&dist_to_simplex(
            &vf_a0,
            samples,
            derive_seed(seed, TAG_DIST),
            workers,
        )?)),
        simplex_dist_after: Some(Measured::from_estimate(&dist_to_simplex(
            &VectorFunction::from_polys(a_s.clone())?,
            samples,
            derive_seed(seed, TAG_DIST + 1),
            workers,
        )?)),
        seconds: stage_seconds(start, opts.timings),
    });

    // Stage 2: multilinearization onto fresh blocks.
    let start = Instant::now();
    let (t_schedule_json, t_used) =
        resolve_blocks(k, d_used, stage_delta, opts.consts.c_t, opts.overrides.t)
            .map_err(|e| Error::config(format!("multilinearize stage: {e}")))?;
    let a_m: Vec<HermitePolynomial> = a_s
        .iter()
        .map(|p| multilinearize(p, t_used))
        .collect::<Result<_>>()?;
    let b_m = if same {
        a_m.clone()
    } else {
        b_s.iter()
            .map(|p| multilinearize(p, t_used))
            .collect::<Result<Vec<_>>>()?
    };
    stages.push(StageReport {
        name: "multilinearize",
        params: serde_json::json!({
            "t_schedule": t_schedule_json,
            "t": t_used,
            "variables": n * t_used,
        }),
        correlation_before: stages[0].correlation_after.clone(),
        correlation_after: exact_corr_matrix(&a_m, &b_m, rho)?,
        simplex_dist_before: stages[0].simplex_dist_after.clone(),
        simplex_dist_after: Some(Measured::from_estimate(&dist_to_simplex(
            &VectorFunction::from_polys(a_m.clone())?,
            samples,
            derive_seed(seed, TAG_DIST + 2),
            workers,
        )?)),
        seconds: stage_seconds(start, opts.timings),
    });

    // Stage 3: one shared projection matrix, sampled obliviously.
    let start = Instant::now();
    let dd_report = schedule_dim(d_used, stage_delta, opts.consts.c_d, opts.consts.base)?;
    let dd_used = match opts.overrides.big_d.or(dd_report.value) {
        Some(v) => v,
        None => {
            return Err(Error::resource(format!(
                "dim_reduce stage: schedule dimension {} does not fit u64; pass an override",
                dd_report.text
            )))
        }
    };
    let dd_usize = usize::try_from(dd_used)
        .map_err(|_| Error::resource(format!("dim_reduce stage: D = {dd_used} exceeds usize")))?;
    let matrix = Arc::new(sample_projection_matrix(
        n * t_used,
        dd_usize,
        derive_seed(seed, TAG_MATRIX),
    )?);
    let a_red = VectorFunction::wrap(dim_reduce(&a_m, Arc::clone(&matrix))?);
    let b_red = if same {
        a_red.clone()
    } else {
        VectorFunction::wrap(dim_reduce(&b_m, Arc::clone(&matrix))?)
    };
    stages.push(StageReport {
        name: "dim_reduce",
        params: serde_json::json!({
            "D_schedule": dd_report.text,
            "D": dd_used,
            "matrix_rows": n * t_used,
            "matrix_seed": derive_seed(seed, TAG_MATRIX),
        }),
        correlation_before: stages[1].correlation_after.clone(),
        correlation_after: mc_corr_matrix(
            &a_red,
            &b_red,
            rho,
            samples,
            derive_seed(seed, TAG_CORR_REDUCED),
            workers,
        )?,
        simplex_dist_before: stages[1].simplex_dist_after.clone(),
        simplex_dist_after: Some(Measured::from_estimate(&dist_to_simplex(
            &a_red,
            samples,
            derive_seed(seed, TAG_DIST + 3),
            workers,
        )?)),
        seconds: stage_seconds(start, opts.timings),
    });

    // Stage 4: simplex projection.
    let start = Instant::now();
    let a_fun = projected(&a_red);
    let b_fun = if same { a_fun.clone() } else { projected(&b_red) };
    let a_tilde = Arc::new(GaussianStrategy {
        core: a_m,
        matrix: Arc::clone(&matrix),
        function: a_fun,
    });
    let b_tilde = if same {
        Arc::clone(&a_tilde)
    } else {
        Arc::new(GaussianStrategy {
            core: b_m,
            matrix,
            function: b_fun,
        })
    };
    let final_joint = joint_distribution(
        a_tilde.function(),
        b_tilde.function(),
        rho,
        samples,
        derive_seed(seed, TAG_JOINT_AFTER),
        workers,
    )?;
    stages.push(StageReport {
        name: "project",
        params: serde_json::json!({ "k": k }),
        correlation_before: stages[2].correlation_after.clone(),
        correlation_after: mc_corr_matrix(
            a_tilde.function(),
            b_tilde.function(),
            rho,
            samples,
            derive_seed(seed, TAG_CORR_PROJECTED),
            workers,
        )?,
        simplex_dist_before: stages[2].simplex_dist_after.clone(),
        // The projected function lands on the simplex identically.
        simplex_dist_after: Some(Measured::exact(0.0)),
        seconds: stage_seconds(start, opts.timings),
    });

    let tv_before_after = tv_measured(&initial_joint, &final_joint)?;
    let report = PipelineReport {
        pipeline: "gaussian_nis",
        k,
        rho,
        eps,
        delta,
        stage_delta,
        stages,
        initial_joint,
        final_joint,
        tv_before_after,
        discrete: None,
        seed,
        samples,
        workers,
    };
    Ok((a_tilde, b_tilde, report))
}

/// Monte Carlo estimate of `E[<f(X), f(Y)>]` under `rho`-correlated
/// Gaussian inputs.
pub fn noise_stability(
    f: &VectorFunction,
    rho: f64,
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<MCEstimate> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!(
            "noise_stability: rho = {rho} outside [0, 1]"
        )));
    }
    let n = f.num_vars();
    let k = f.k();
    mc_run(2 * n + 2 * k, samples, seed, workers, |rng, scratch| {
        let (xy, vals) = scratch.split_at_mut(2 * n);
        let (x, y) = xy.split_at_mut(n);
        fill_correlated_pair(rng, rho, x, y);
        let (fx, fy) = vals.split_at_mut(k);
        f.eval_into(x, fx).expect("shape fixed above");
        f.eval_into(y, fy).expect("shape fixed above");
        fx.iter().zip(fy.iter()).map(|(a, b)| a * b).sum()
    })
}

/// Stability and mean drift of a strategy across the Gaussian pipeline.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub pipeline: PipelineReport,
    pub stability_before: MCEstimate,
    pub stability_after: MCEstimate,
    pub mean_before: VecEstimate,
    pub mean_after: VecEstimate,
    /// `|| E f - E f~ ||_1`.
    pub mean_drift_l1: f64,
    pub mean_drift_std_error: f64,
}

fn mean_of(f: &VectorFunction, samples: u64, seed: u64, workers: usize) -> Result<VecEstimate> {
    let n = f.num_vars();
    let k = f.k();
    sampling::mc_run_vec(k, n, samples, seed, workers, |rng, out, scratch| {
        fill_standard_normal(rng, scratch);
        f.eval_into(scratch, out).expect("shape fixed above");
    })
}

/// Runs [`gaussian_nis`] with `A = B = f` and reports noise stability and
/// output mean before and after.
pub fn stability_dimension_reduction(
    f: &[HermitePolynomial],
    rho: f64,
    eps: f64,
    opts: &PipelineOptions,
) -> Result<(Arc<GaussianStrategy>, StabilityReport)> {
    let (f_tilde, _, pipeline) = gaussian_nis(f, f, rho, eps, opts)?;
    let seed = opts.seed;
    let before = projected(&VectorFunction::from_polys(f.to_vec())?);
    let stability_before = noise_stability(
        &before,
        rho,
        opts.samples,
        derive_seed(seed, TAG_DIST + 16),
        opts.workers,
    )?;
    let stability_after = noise_stability(
        f_tilde.function(),
        rho,
        opts.samples,
        derive_seed(seed, TAG_DIST + 17),
        opts.workers,
    )?;
    let mean_before = mean_of(
        &before,
        opts.samples,
        derive_seed(seed, TAG_DIST + 18),
        opts.workers,
    )?;
    let mean_after = mean_of(
        f_tilde.function(),
        opts.samples,
        derive_seed(seed, TAG_DIST + 19),
        opts.workers,
    )?;
    let mean_drift_l1: f64 = mean_before
        .means
        .iter()
        .zip(&mean_after.means)
        .map(|(x, y)| (x - y).abs())
        .sum();
    let mean_drift_std_error: f64 = mean_before
        .std_errors
        .iter()
        .zip(&mean_after.std_errors)
        .map(|(x, y)| x * x + y * y)
        .sum::<f64>()
        .sqrt();
    Ok((
        f_tilde,
        StabilityReport {
            pipeline,
            stability_before,
            stability_after,
            mean_before,
            mean_after,
            mean_drift_l1,
            mean_drift_std_error,
        },
    ))
}

/// All multi-indices over `n` variables with total degree in `1..=d`,
/// plus the empty index first. Guarded by `limit`.
fn multi_indices_up_to(n: usize, d: u32, limit: u64) -> Result<Vec<MultiIndex>> {
    // Count is C(n + d, d); compute with saturation.
    let mut count: u64 = 1;
    for i in 1..=d as u64 {
        count = count.saturating_mul(n as u64 + i).saturating_div(i);
        if count > limit {
            return Err(Error::resource(format!(
                "coefficient estimation: C({} + {d}, {d}) multi-indices exceed the budget {limit}",
                n
            )));
        }
    }
    let mut out = vec![MultiIndex::empty()];
    let mut stack: Vec<(usize, u32, Vec<(usize, u32)>)> = vec![(0, d, Vec::new())];
    while let Some((var, left, prefix)) = stack.pop() {
        if var == n || left == 0 {
            if !prefix.is_empty() {
                out.push(MultiIndex::from_pairs(prefix));
            }
            continue;
        }
        for deg in (0..=left).rev() {
            let mut next = prefix.clone();
            if deg > 0 {
                next.push((var, deg));
            }
            stack.push((var + 1, left - deg, next));
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// A transformed discrete strategy on `Z^{n0}`: the first `h` coordinates
/// select a cached restriction, the remaining `D t` feed its tail
/// polynomial vector, and the value vector is projected onto the simplex.
pub struct DiscreteStrategy {
    side: Side,
    k: usize,
    q: usize,
    head: Vec<usize>,
    n0: usize,
    js: JointSpace,
    bases: Arc<AlignedBases>,
    /// Side polynomials after discrete smoothing, on the source variables.
    smoothed: Vec<DiscretePolynomial>,
    matrix: Option<Arc<ProjectionMatrix>>,
    nu: f64,
    d: u32,
    t: usize,
    big_d: usize,
    est_samples: u64,
    seed: u64,
    cache: Mutex<BTreeMap<Vec<usize>, Arc<Vec<DiscretePolynomial>>>>,
}

impl std::fmt::Debug for DiscreteStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteStrategy")
            .field("side", &self.side)
            .field("k", &self.k)
            .field("q", &self.q)
            .field("n0", &self.n0)
            .field("head", &self.head)
            .finish_non_exhaustive()
    }
}

impl DiscreteStrategy {
    pub fn side(&self) -> Side {
        self.side
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn q(&self) -> usize {
        self.q
    }
    /// Output coordinate count `h + D t`.
    pub fn n0(&self) -> usize {
        self.n0
    }
    pub fn head(&self) -> &[usize] {
        &self.head
    }

    fn xi_tag(&self, xi: &[usize]) -> u64 {
        let mut code: u64 = match self.side {
            Side::A => 1,
            Side::B => 2,
        };
        for &s in xi {
            code = code * self.q as u64 + s as u64;
        }
        derive_seed(self.seed, TAG_ESTIMATE ^ code)
    }

    /// The tail polynomial vector for one head assignment, built on first
    /// use and cached.
    pub fn tail_polys(&self, xi: &[usize]) -> Result<Arc<Vec<DiscretePolynomial>>> {
        if xi.len() != self.head.len() {
            return Err(Error::shape(format!(
                "discrete strategy: head assignment has {} symbols, head has {}",
                xi.len(),
                self.head.len()
            )));
        }
        if let Some(hit) = self.cache.lock().expect("poisoned").get(xi) {
            return Ok(Arc::clone(hit));
        }
        let built = Arc::new(self.build_tail(xi)?);
        self.cache
            .lock()
            .expect("poisoned")
            .insert(xi.to_vec(), Arc::clone(&built));
        Ok(built)
    }

    fn build_tail(&self, xi: &[usize]) -> Result<Vec<DiscretePolynomial>> {
        let tail_vars = self.smoothed[0].num_vars() - self.head.len();
        let out_vars = self.big_d * self.t;
        let mut out = Vec::with_capacity(self.k);
        // Restrict every component, transfer to Gaussian space, run the
        // shared-matrix core, and re-expand by Monte Carlo.
        let mut gauss: Vec<HermitePolynomial> = Vec::with_capacity(self.k);
        for p in &self.smoothed {
            let restricted = restrict(p, &self.head, xi, &self.bases)?;
            let g = invariance_to_gaussian(&restricted, &self.bases)?;
            let gs = g.ou_smooth(self.nu)?.degree_truncate(self.d);
            gauss.push(multilinearize(&gs, self.t)?);
        }
        if tail_vars == 0 || gauss.iter().all(|g| g.degree() == 0) {
            // Fully restricted: the tail value is a constant vector.
            for g in &gauss {
                out.push(DiscretePolynomial::constant(
                    out_vars,
                    self.q,
                    self.side,
                    g.coeff(&MultiIndex::empty()),
                ));
            }
            return Ok(out);
        }
        let matrix = self
            .matrix
            .as_ref()
            .expect("matrix present when tail is nonconstant");
        let reduced = dim_reduce(&gauss, Arc::clone(matrix))?;
        let reduced = VectorFunction::wrap(reduced);

        // One shared sample pass estimates every Hermite coefficient of
        // every component up to total degree d.
        let sigmas = multi_indices_up_to(self.big_d, self.d, 200_000)?;
        let mut sums = vec![vec![0.0f64; sigmas.len()]; self.k];
        let mut rng = substream_rng(self.xi_tag(xi), 0);
        let mut point = vec![0.0f64; self.big_d];
        let mut vals = vec![0.0f64; self.k];
        let mut htab = vec![0.0f64; self.big_d * (self.d as usize + 1)];
        for _ in 0..self.est_samples {
            fill_standard_normal(&mut rng, &mut point);
            reduced.eval_into(&point, &mut vals)?;
            for (var, &x) in point.iter().enumerate() {
                let row = &mut htab[var * (self.d as usize + 1)..(var + 1) * (self.d as usize + 1)];
                row[0] = 1.0;
                if self.d >= 1 {
                    row[1] = x;
                }
                for r in 1..self.d as usize {
                    // Normalized recurrence: H_{r+1} = (x H_r - sqrt(r) H_{r-1}) / sqrt(r+1).
                    row[r + 1] =
                        (x * row[r] - (r as f64).sqrt() * row[r - 1]) / ((r + 1) as f64).sqrt();
                }
            }
            for (s, sigma) in sigmas.iter().enumerate() {
                let mut hval = 1.0;
                for (var, deg) in sigma.iter() {
                    hval *= htab[var * (self.d as usize + 1) + deg as usize];
                }
                for (j, &fj) in vals.iter().enumerate() {
                    sums[j][s] += fj * hval;
                }
            }
        }
        let inv = 1.0 / self.est_samples as f64;
        for j in 0..self.k {
            // Second smoothing folds into the estimated coefficients.
            let terms = sigmas.iter().enumerate().map(|(s, sigma)| {
                (
                    sigma.clone(),
                    sums[j][s] * inv * self.nu.powi(sigma.total_degree() as i32),
                )
            });
            let est = HermitePolynomial::from_terms(self.big_d, terms)?;
            let ml = multilinearize(&est, self.t)?;
            let clamped = clamp_variance(&ml)?;
            out.push(invariance_to_discrete(&clamped, &self.js, self.side)?);
        }
        Ok(out)
    }

    /// Evaluates the strategy at `x in [q]^{n0}`, returning a simplex point.
    pub fn eval(&self, x: &[usize]) -> Result<Vec<f64>> {
        if x.len() != self.n0 {
            return Err(Error::shape(format!(
                "discrete strategy: input has {} coordinates, n0 = {}",
                x.len(),
                self.n0
            )));
        }
        let h = self.head.len();
        let polys = self.tail_polys(&x[..h])?;
        let mut vals = Vec::with_capacity(self.k);
        for p in polys.iter() {
            vals.push(p.eval(&x[h..], &self.bases)?);
        }
        let mut scratch = vec![0.0; self.k];
        project_simplex_in_place(&mut vals, &mut scratch)?;
        Ok(vals)
    }
}

/// Scales the nonconstant part down to variance at most 1 (Monte Carlo
/// coefficient noise can push it fractionally over).
fn clamp_variance(p: &HermitePolynomial) -> Result<HermitePolynomial> {
    let var = p.functionals().variance;
    if var <= 1.0 {
        return Ok(p.clone());
    }
    let factor = (1.0 / var).sqrt() * (1.0 - 1e-12);
    HermitePolynomial::from_terms(
        p.num_vars(),
        p.terms().map(|(idx, c)| {
            let scaled = if idx.is_empty() { c } else { c * factor };
            (idx.clone(), scaled)
        }),
    )
}

/// Chunked Monte Carlo over the product source: `draw(rng, out)` fills one
/// `dim`-vector observation. Worker-count invariant like the Gaussian path.
fn discrete_mc_vec<F>(
    dim: usize,
    samples: u64,
    seed: u64,
    workers: usize,
    draw: F,
) -> Result<VecEstimate>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    if samples < 2 {
        return Err(Error::domain(format!(
            "an estimate needs at least 2 samples, got {samples}"
        )));
    }
    let chunk = sampling::CHUNK;
    let chunks = samples.div_ceil(chunk);
    let partials = run_indexed(chunks, seed, workers, |i, rng| -> Result<(Vec<f64>, Vec<f64>)> {
        let len = if i == chunks - 1 && samples % chunk != 0 {
            samples % chunk
        } else {
            chunk
        };
        let mut sums = vec![0.0; dim];
        let mut sumsqs = vec![0.0; dim];
        let mut out = vec![0.0; dim];
        for _ in 0..len {
            draw(rng, &mut out)?;
            for (d, &v) in out.iter().enumerate() {
                sums[d] += v;
                sumsqs[d] += v * v;
            }
        }
        Ok((sums, sumsqs))
    })?;
    let mut sums = vec![0.0; dim];
    let mut sumsqs = vec![0.0; dim];
    for part in partials {
        let (s, q) = part?;
        for d in 0..dim {
            sums[d] += s[d];
            sumsqs[d] += q[d];
        }
    }
    let n = samples as f64;
    let mut means = Vec::with_capacity(dim);
    let mut std_errors = Vec::with_capacity(dim);
    for d in 0..dim {
        let mean = sums[d] / n;
        let var = ((sumsqs[d] - n * mean * mean) / (n - 1.0)).max(0.0);
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

/// Estimates the induced joint distribution of two discrete strategies
/// under `samples` draws from the product source.
fn discrete_joint_mc(
    js: &JointSpace,
    n: usize,
    k: usize,
    eval_a: &(dyn Fn(&[usize], &mut [f64]) -> Result<()> + Sync),
    eval_b: &(dyn Fn(&[usize], &mut [f64]) -> Result<()> + Sync),
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<JointEstimate> {
    let est = discrete_mc_vec(k * k, samples, seed, workers, |rng, out| {
        let mut xa = vec![0usize; n];
        let mut xb = vec![0usize; n];
        js.sample_pair_into(rng, &mut xa, &mut xb);
        let mut va = vec![0.0; k];
        let mut vb = vec![0.0; k];
        eval_a(&xa, &mut va)?;
        eval_b(&xb, &mut vb)?;
        for i in 0..k {
            for j in 0..k {
                out[i * k + j] = va[i] * vb[j];
            }
        }
        Ok(())
    })?;
    let probs: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| est.means[i * k + j].max(0.0)).collect())
        .collect();
    let std_errors: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| est.std_errors[i * k + j]).collect())
        .collect();
    Ok(JointEstimate {
        dist: JointDistributionK::new(probs)?,
        std_errors,
        samples,
        seed,
    })
}

fn projected_value(vals: &mut [f64], scratch: &mut [f64]) -> Result<()> {
    project_simplex_in_place(vals, scratch)
}

/// Runs the discrete-source transformation on side-A and side-B strategy
/// vectors given as polynomials in the source's aligned bases.
pub fn discrete_nis(
    a: &[DiscretePolynomial],
    b: &[DiscretePolynomial],
    js: &JointSpace,
    eps: f64,
    opts: &PipelineOptions,
) -> Result<(Arc<DiscreteStrategy>, Arc<DiscreteStrategy>, PipelineReport)> {
    let k = a.len();
    if k < 2 || b.len() != k {
        return Err(Error::shape(format!(
            "discrete_nis: sides have k = {k} and k = {}; need equal k >= 2",
            b.len()
        )));
    }
    let q = js.q();
    let n = a[0].num_vars();
    for (name, side, polys) in [("A", Side::A, a), ("B", Side::B, b)] {
        for p in polys {
            if p.side() != side {
                return Err(Error::contract(format!(
                    "discrete_nis: {name}-side polynomial tagged {:?}",
                    p.side()
                )));
            }
            if p.num_vars() != n || p.q() != q {
                return Err(Error::shape(
                    "discrete_nis: all components must share (num_vars, q)",
                ));
            }
        }
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::domain(format!("discrete_nis: eps = {eps} must be positive")));
    }
    let rho = js.rho();
    if rho >= 1.0 {
        return Err(Error::config(
            "discrete_nis: smooth stage has no schedule at maximal correlation 1",
        ));
    }
    if rho <= 0.0 {
        return Err(Error::config(
            "discrete_nis: invariance stage undefined at maximal correlation 0",
        ));
    }
    let bases = Arc::new(aligned_bases(js));
    let delta = eps * eps / (k as f64).powi(4);
    let stage_delta = delta / 6.0;
    let seed = opts.seed;
    let samples = opts.samples;
    let workers = opts.workers;
    let mut stages = Vec::with_capacity(3);

    let initial_joint = {
        let eval_a = |x: &[usize], out: &mut [f64]| -> Result<()> {
            let mut scratch = vec![0.0; k];
            for (j, p) in a.iter().enumerate() {
                out[j] = p.eval(x, &bases)?;
            }
            projected_value(out, &mut scratch)
        };
        let eval_b = |x: &[usize], out: &mut [f64]| -> Result<()> {
            let mut scratch = vec![0.0; k];
            for (j, p) in b.iter().enumerate() {
                out[j] = p.eval(x, &bases)?;
            }
            projected_value(out, &mut scratch)
        };
        discrete_joint_mc(
            js,
            n,
            k,
            &eval_a,
            &eval_b,
            samples,
            derive_seed(seed, TAG_JOINT_BEFORE),
            workers,
        )?
    };

    // Stage 1: Bonami-Beckner smoothing with discrete degree truncation.
    let start = Instant::now();
    let (nu, d_schedule_json, d_used) =
        resolve_degree(rho, k, stage_delta, opts.consts.c_smooth, opts.overrides.d)
            .map_err(|e| Error::config(format!("discrete smooth stage: {e}")))?;
    let a1: Vec<DiscretePolynomial> = a
        .iter()
        .map(|p| Ok(discrete_degree_truncate(&bonami_beckner(p, nu)?, d_used)))
        .collect::<Result<_>>()?;
    let b1: Vec<DiscretePolynomial> = b
        .iter()
        .map(|p| Ok(discrete_degree_truncate(&bonami_beckner(p, nu)?, d_used)))
        .collect::<Result<_>>()?;
    stages.push(StageReport {
        name: "discrete_smooth",
        params: serde_json::json!({
            "nu": nu,
            "d_schedule": d_schedule_json,
            "d": d_used,
            "stage_delta": stage_delta,
        }),
        correlation_before: exact_discrete_corr_matrix(a, b, &bases)?,
        correlation_after: exact_discrete_corr_matrix(&a1, &b1, &bases)?,
        simplex_dist_before: None,
        simplex_dist_after: None,
        seconds: stage_seconds(start, opts.timings),
    });

    // Stage 2: head selection on the pooled components.
    let start = Instant::now();
    let pooled: Vec<DiscretePolynomial> = a1.iter().chain(b1.iter()).cloned().collect();
    let head = match opts.overrides.h {
        Some(h) => select_top_influences(&pooled, h),
        None => regularity_select(
            &pooled,
            js,
            &bases,
            opts.tau,
            1,
            derive_seed(seed, TAG_SELECT),
        )?,
    };
    let h = head.len();
    let head_budget = 4096u64;
    let head_count = (q as u64)
        .checked_pow(h as u32)
        .filter(|&c| c <= head_budget)
        .ok_or_else(|| {
            Error::resource(format!(
                "discrete_nis: q^h = {q}^{h} head assignments exceed the cache budget {head_budget}"
            ))
        })?;
    stages.push(StageReport {
        name: "select_heads",
        params: serde_json::json!({
            "head": head.clone(),
            "h": h,
            "tau": opts.tau,
            "threshold": opts.tau / (2.0 * pooled.len() as f64 * d_used.max(1) as f64),
            "distinct_assignments": head_count,
            "overridden": opts.overrides.h.is_some(),
        }),
        correlation_before: stages[0].correlation_after.clone(),
        correlation_after: stages[0].correlation_after.clone(),
        simplex_dist_before: None,
        simplex_dist_after: None,
        seconds: stage_seconds(start, opts.timings),
    });

    // Stage 3: per-restriction Gaussian core and return transfer.
    let start = Instant::now();
    let (t_schedule_json, t_used) =
        resolve_blocks(k, d_used, stage_delta, opts.consts.c_t, opts.overrides.t)
            .map_err(|e| Error::config(format!("multilinearize stage: {e}")))?;
    let dd_report = schedule_dim(d_used, stage_delta, opts.consts.c_d, opts.consts.base)?;
    let dd_used = match opts.overrides.big_d.or(dd_report.value) {
        Some(v) => v,
        None => {
            return Err(Error::config(format!(
                "dim_reduce stage: schedule dimension {} does not fit u64; pass an override",
                dd_report.text
            )))
        }
    };
    let dd_usize = usize::try_from(dd_used)
        .map_err(|_| Error::config(format!("dim_reduce stage: D = {dd_used} exceeds usize")))?;
    let tail_vars = n - h;
    let gaussian_vars = tail_vars * (q - 1);
    let matrix = if gaussian_vars > 0 {
        Some(Arc::new(sample_projection_matrix(
            gaussian_vars * t_used,
            dd_usize,
            derive_seed(seed, TAG_MATRIX),
        )?))
    } else {
        None
    };
    let n0 = h + dd_usize
        .checked_mul(t_used)
        .ok_or_else(|| Error::config("discrete_nis: D * t overflows".to_string()))?;
    let strategy = |side: Side, smoothed: Vec<DiscretePolynomial>| DiscreteStrategy {
        side,
        k,
        q,
        head: head.clone(),
        n0,
        js: js.clone(),
        bases: Arc::clone(&bases),
        smoothed,
        matrix: matrix.clone(),
        nu,
        d: d_used,
        t: t_used,
        big_d: dd_usize,
        est_samples: samples,
        seed,
        cache: Mutex::new(BTreeMap::new()),
    };
    let a_tilde = Arc::new(strategy(Side::A, a1));
    let b_tilde = Arc::new(strategy(Side::B, b1));

    let final_joint = {
        let eval_a = |x: &[usize], out: &mut [f64]| -> Result<()> {
            out.copy_from_slice(&a_tilde.eval(x)?);
            Ok(())
        };
        let eval_b = |x: &[usize], out: &mut [f64]| -> Result<()> {
            out.copy_from_slice(&b_tilde.eval(x)?);
            Ok(())
        };
        discrete_joint_mc(
            js,
            n0,
            k,
            &eval_a,
            &eval_b,
            samples,
            derive_seed(seed, TAG_JOINT_AFTER),
            workers,
        )?
    };
    stages.push(StageReport {
        name: "gaussian_core",
        params: serde_json::json!({
            "t_schedule": t_schedule_json,
            "t": t_used,
            "D_schedule": dd_report.text,
            "D": dd_used,
            "tail_vars": tail_vars,
            "gaussian_vars": gaussian_vars,
            "n0": n0,
            "estimation_samples": samples,
        }),
        correlation_before: stages[1].correlation_after.clone(),
        correlation_after: joint_measured(&final_joint),
        simplex_dist_before: None,
        simplex_dist_after: Some(Measured::exact(0.0)),
        seconds: stage_seconds(start, opts.timings),
    });

    let tv_before_after = tv_measured(&initial_joint, &final_joint)?;
    let report = PipelineReport {
        pipeline: "discrete_nis",
        k,
        rho,
        eps,
        delta,
        stage_delta,
        stages,
        initial_joint,
        final_joint,
        tv_before_after,
        discrete: Some(DiscreteBookkeeping {
            q,
            source_rho: rho,
            alpha: js.alpha(),
            head,
            h,
            tail_vars,
            gaussian_vars,
            d: d_used,
            t: t_used,
            big_d: dd_used,
            n0,
        }),
        seed,
        samples,
        workers,
    };
    Ok((a_tilde, b_tilde, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::dsbs;
    use approx::assert_abs_diff_eq;

    fn constant_pair(k0: f64, k1: f64, n: usize) -> Vec<HermitePolynomial> {
        vec![
            HermitePolynomial::constant(n, k0),
            HermitePolynomial::constant(n, k1),
        ]
    }

    fn halfspace_surrogate(n: usize) -> Vec<HermitePolynomial> {
        let up = HermitePolynomial::from_terms(
            n,
            [
                (MultiIndex::empty(), 0.5),
                (MultiIndex::single(0, 1), 0.5),
            ],
        )
        .unwrap();
        let down = HermitePolynomial::from_terms(
            n,
            [
                (MultiIndex::empty(), 0.5),
                (MultiIndex::single(0, 1), -0.5),
            ],
        )
        .unwrap();
        vec![up, down]
    }

    fn small_opts(seed: u64, samples: u64) -> PipelineOptions {
        PipelineOptions {
            overrides: Overrides {
                d: Some(2),
                t: Some(4),
                big_d: Some(32),
                h: None,
            },
            seed,
            samples,
            timings: false,
            ..PipelineOptions::default()
        }
    }

    #[test]
    fn noise_stability_examples() {
        let e1 = VectorFunction::constant(1, vec![1.0, 0.0]);
        let est = noise_stability(&e1, 0.3, 1000, 1, 1).unwrap();
        assert_abs_diff_eq!(est.mean, 1.0, epsilon = 1e-12);

        let uniform = VectorFunction::constant(1, vec![0.25; 4]);
        let est = noise_stability(&uniform, 0.9, 1000, 2, 1).unwrap();
        assert_abs_diff_eq!(est.mean, 0.25, epsilon = 1e-12);

        let halves = VectorFunction::from_fn(1, 2, |x, out| {
            out[0] = if x[0] >= 0.0 { 1.0 } else { 0.0 };
            out[1] = 1.0 - out[0];
        });
        let est = noise_stability(&halves, 0.6, 200_000, 3, 1).unwrap();
        let sheppard = 1.0 - (0.6f64).acos() / std::f64::consts::PI;
        assert!(
            (est.mean - sheppard).abs() <= 0.01,
            "stability {} vs {}",
            est.mean,
            sheppard
        );
    }

    #[test]
    fn gaussian_nis_constants() {
        let a = constant_pair(1.0, 0.0, 2);
        let opts = small_opts(7, 20_000);
        let (at, bt, report) = gaussian_nis(&a, &a, 0.5, 0.5, &opts).unwrap();
        assert!(Arc::ptr_eq(&at, &bt));
        assert_eq!(report.stages.len(), 4);
        assert_eq!(report.stages[0].name, "smooth");
        assert_eq!(report.stages[3].name, "project");
        // Point mass at (1, 0) on both ends.
        assert!(report.tv_before_after.value <= 0.02);
        assert_abs_diff_eq!(report.initial_joint.dist.probs()[0][0], 1.0, epsilon = 1e-9);
        assert!(report.final_joint.dist.probs()[0][0] >= 0.98);
        // The strategy evaluates to a simplex point.
        let out = at.eval(&vec![0.3; at.num_inputs()]).unwrap();
        assert_abs_diff_eq!(out.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn gaussian_nis_is_oblivious() {
        let a = halfspace_surrogate(1);
        let b1 = constant_pair(0.25, 0.75, 1);
        let b2 = constant_pair(0.7, 0.3, 1);
        let opts = small_opts(11, 4_000);
        let (at1, bt1, _) = gaussian_nis(&a, &b1, 0.6, 0.3, &opts).unwrap();
        let (at2, _, _) = gaussian_nis(&a, &b2, 0.6, 0.3, &opts).unwrap();
        assert!(!Arc::ptr_eq(&at1, &bt1));
        let fp = |s: &GaussianStrategy| {
            let mut text: String = s.core().iter().map(|p| p.serialize()).collect();
            text.push_str(&format!("{:?}", s.matrix().entries()));
            text
        };
        assert_eq!(fp(&at1), fp(&at2));
        assert_ne!(fp(&at1), fp(&bt1));
    }

    #[test]
    fn gaussian_nis_halfspace_surrogate() {
        let a = halfspace_surrogate(1);
        let opts = PipelineOptions {
            overrides: Overrides {
                d: Some(2),
                t: Some(8),
                big_d: Some(500),
                h: None,
            },
            seed: 5,
            samples: 30_000,
            timings: false,
            ..PipelineOptions::default()
        };
        let (at, _, report) = gaussian_nis(&a, &a, 0.6, 0.15, &opts).unwrap();
        assert!(
            report.tv_before_after.value <= 0.15,
            "tv = {}",
            report.tv_before_after.value
        );
        assert_eq!(at.num_inputs(), 500);
        assert!(at.degree() <= 2);
        // Degree-1 inputs pass smoothing and multilinearization untouched
        // up to coefficient scaling: correlations shift little.
        let before = &report.stages[0].correlation_before;
        let after = &report.stages[1].correlation_after;
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (before[i][j].value - after[i][j].value).abs() <= 0.02,
                    "entry ({i},{j}): {} vs {}",
                    before[i][j].value,
                    after[i][j].value
                );
            }
        }
    }

    #[test]
    fn budget_accounting_bounds_total_drift() {
        let a = halfspace_surrogate(1);
        let b = constant_pair(0.3, 0.7, 1);
        let opts = small_opts(13, 20_000);
        let (_, _, report) = gaussian_nis(&a, &b, 0.5, 0.4, &opts).unwrap();
        let first = &report.stages[0].correlation_before;
        let last = &report.stages[3].correlation_after;
        for i in 0..2 {
            for j in 0..2 {
                let total = (last[i][j].value - first[i][j].value).abs();
                let mut path = 0.0;
                let mut noise = last[i][j].std_error + first[i][j].std_error;
                for stage in &report.stages {
                    path += (stage.correlation_after[i][j].value
                        - stage.correlation_before[i][j].value)
                        .abs();
                    noise += stage.correlation_after[i][j].std_error
                        + stage.correlation_before[i][j].std_error;
                }
                assert!(
                    total <= path + 4.0 * noise + 1e-12,
                    "entry ({i},{j}): total {total} vs path {path} + noise {noise}"
                );
            }
        }
    }

    #[test]
    fn stability_reduction_on_constant() {
        let f = constant_pair(0.5, 0.5, 2);
        let opts = small_opts(3, 20_000);
        let (ft, rep) = stability_dimension_reduction(&f, 0.5, 0.4, &opts).unwrap();
        assert_abs_diff_eq!(rep.stability_before.mean, 0.5, epsilon = 1e-9);
        assert!((rep.stability_after.mean - 0.5).abs() <= 0.02);
        assert!(rep.mean_drift_l1 <= 0.02);
        assert_eq!(ft.k(), 2);
    }

    #[test]
    fn discrete_nis_dictators() {
        let js = dsbs(0.5).unwrap();
        let mk = |side, sign: f64| {
            DiscretePolynomial::from_terms(
                2,
                2,
                side,
                [
                    (MultiIndex::empty(), 0.5),
                    (MultiIndex::single(0, 1), sign * 0.5),
                ],
            )
            .unwrap()
        };
        let a = vec![mk(Side::A, 1.0), mk(Side::A, -1.0)];
        let b = vec![mk(Side::B, 1.0), mk(Side::B, -1.0)];
        let opts = PipelineOptions {
            overrides: Overrides {
                d: Some(2),
                t: Some(2),
                big_d: Some(4),
                h: Some(1),
            },
            seed: 21,
            samples: 20_000,
            timings: false,
            ..PipelineOptions::default()
        };
        let (at, bt, report) = discrete_nis(&a, &b, &js, 0.2, &opts).unwrap();
        let book = report.discrete.as_ref().unwrap();
        assert_eq!(book.head, vec![0]);
        assert_eq!(book.n0, 1 + 4 * 2);
        assert_eq!(at.n0(), book.n0);
        assert_eq!(bt.side(), Side::B);
        // The initial joint of exact dictators is the source itself.
        let target = [[0.375, 0.125], [0.125, 0.375]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (report.initial_joint.dist.probs()[i][j] - target[i][j]).abs() <= 0.02
                );
            }
        }
        assert!(
            report.tv_before_after.value <= 0.15,
            "tv = {}",
            report.tv_before_after.value
        );
        // Outputs are simplex points.
        let x = vec![1usize; at.n0()];
        let va = at.eval(&x).unwrap();
        assert_abs_diff_eq!(va.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        assert!(va.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn discrete_nis_constants() {
        let js = dsbs(0.4).unwrap();
        let a = vec![
            DiscretePolynomial::constant(2, 2, Side::A, 0.7),
            DiscretePolynomial::constant(2, 2, Side::A, 0.3),
        ];
        let b = vec![
            DiscretePolynomial::constant(2, 2, Side::B, 0.7),
            DiscretePolynomial::constant(2, 2, Side::B, 0.3),
        ];
        let opts = PipelineOptions {
            overrides: Overrides {
                d: Some(1),
                t: Some(2),
                big_d: Some(4),
                h: Some(0),
            },
            seed: 9,
            samples: 10_000,
            timings: false,
            ..PipelineOptions::default()
        };
        let (_, _, report) = discrete_nis(&a, &b, &js, 0.3, &opts).unwrap();
        assert!(
            report.tv_before_after.value <= 0.05,
            "tv = {}",
            report.tv_before_after.value
        );
    }

    #[test]
    fn multi_index_enumeration_counts() {
        // C(n + d, d) indices including the empty one.
        let got = multi_indices_up_to(3, 2, 10_000).unwrap();
        assert_eq!(got.len(), 10);
        let got = multi_indices_up_to(4, 3, 10_000).unwrap();
        assert_eq!(got.len(), 35);
        assert!(multi_indices_up_to(100, 6, 10_000).is_err());
    }

    #[test]
    fn rho_one_is_a_config_error() {
        let a = constant_pair(1.0, 0.0, 1);
        let err = gaussian_nis(&a, &a, 1.0, 0.3, &PipelineOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err:?}");
    }
}
