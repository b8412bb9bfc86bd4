//! Command-line front end: experiment subcommands, deterministic seeding,
//! and JSON/CSV report emission.
//!
//! Every report is wrapped in an envelope `{version, config, seconds?,
//! report}` where `config` is the fully resolved [`RunConfig`]. Reruns with
//! the same argv (and `--no-timings`) are byte-identical. Exit codes:
//! 0 success, 2 validation error, 3 resource limit, 64 usage error.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use std::{fs, io};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::decider::{decide_gap_nis, DecideOptions, GapNisInstance};
use crate::discrete::{
    aligned_bases, expand_truth_table, parse_source_spec, DiscretePolynomial, JointSpace, Side,
};
use crate::error::{Error, Result};
use crate::pipelines::{
    discrete_nis, gaussian_nis, noise_stability, stability_dimension_reduction, Consts, Overrides,
    PipelineOptions,
};
use crate::poly::{HermitePolynomial, MultiIndex, VectorFunction};
use crate::sampling::{
    chi_negative_moment_exact, chi_negative_moment_mc, covariance_experiment, derive_seed,
    monomial_moment_experiment, normalized_inner_product_experiment, records_to_csv,
    ExperimentRecord,
};
use crate::simplex::{projected, JointDistributionK};
use crate::transforms::{dimred_experiment, dimred_params};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Resource(_) => EXIT_RESOURCE,
        _ => EXIT_VALIDATION,
    }
}

/// Entry point. Parses `argv` (program name first), runs the subcommand,
/// and returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = argv.into_iter().map(Into::into).collect();
    let args = match apply_config_file(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                EXIT_OK
            } else {
                EXIT_USAGE
            };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

const AFTER_HELP: &str = "Exit codes: 0 success, 2 validation error, 3 resource limit \
exceeded, 64 usage error.\n\
Config file: flat `key = value` lines naming long flags (without `--`); \
command-line flags win over file values, which win over defaults. The \
GAUSSDIMRED_SEED environment variable is the fallback master seed.";

#[derive(Parser, Debug)]
#[command(
    name = "gaussdimred",
    version,
    about = "Dimension reduction for low-degree polynomials over Gaussian space: \
             moment experiments, simulation pipelines, and the gap decider",
    after_help = AFTER_HELP
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Exact negative chi moment E[1/||w||^d] on R^D plus its MC companion.
    ChiMoments(ChiArgs),
    /// Projected-monomial mean (and, with --S2/--T2, covariance) experiments.
    MonomialBounds(MonoArgs),
    /// Normalized-inner-product products E[prod <u_i,v_i>/(|u_i||v_i|)] over a D sweep.
    MetaLemma(MetaArgs),
    /// Unbiasedness sweep of F(M) = <A_M, B_M> across projection matrices.
    DimredSweep(SweepArgs),
    /// Full Gaussian-source strategy transformation; emits the stage report.
    GaussianNis(GaussArgs),
    /// Full discrete-source strategy transformation; emits the stage report.
    DiscreteNis(DiscArgs),
    /// Noise stability of a simplex-valued strategy, optionally across the pipeline.
    Stability(StabArgs),
    /// Exhaustive gap decision: can any strategy pair induce a target within eps?
    Decide(DecideArgs),
    /// Polynomial file utilities.
    Poly(PolyArgs),
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
struct Common {
    /// Master seed (GAUSSDIMRED_SEED is the fallback when the flag is absent).
    #[arg(long, env = "GAUSSDIMRED_SEED", default_value_t = 17)]
    seed: u64,
    /// Worker threads for Monte Carlo and search loops.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Write the output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key = value file supplying long-flag values not given on the
    /// command line.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Omit wall-clock timing fields so reruns are byte-identical.
    #[arg(long)]
    no_timings: bool,
    /// Emit the lossy CSV mirror instead of JSON.
    #[arg(long)]
    csv: bool,
}

#[derive(Args, Debug)]
struct ChiArgs {
    /// Ambient dimension of the Gaussian vector.
    #[arg(long = "D", default_value_t = 10)]
    big_d: u32,
    /// Negative-moment exponent.
    #[arg(long, default_value_t = 2)]
    d: u32,
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct MonoArgs {
    /// Index set S, comma separated.
    #[arg(long = "S", value_delimiter = ',', default_value = "0,1")]
    set_s: Vec<usize>,
    /// Index set T, comma separated.
    #[arg(long = "T", value_delimiter = ',', default_value = "0,1")]
    set_t: Vec<usize>,
    /// Second pair's S set; together with --T2 switches to the covariance
    /// experiment on (S, T, S2, T2).
    #[arg(long = "S2", value_delimiter = ',')]
    set_s2: Option<Vec<usize>>,
    /// Second pair's T set.
    #[arg(long = "T2", value_delimiter = ',')]
    set_t2: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Ambient variable count.
    #[arg(long = "N", default_value_t = 20)]
    n: usize,
    /// Projected dimension.
    #[arg(long = "D", default_value_t = 500)]
    big_d: usize,
    /// Independent matrix draws.
    #[arg(long, default_value_t = 200)]
    trials: u64,
    /// Correlated pair draws per matrix.
    #[arg(long, default_value_t = 10_000)]
    samples: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct MetaArgs {
    /// Number of independent inner-product factors.
    #[arg(long, default_value_t = 1)]
    d: u32,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Ambient dimensions to sweep, comma separated.
    #[arg(long = "D", value_delimiter = ',', default_value = "1000")]
    big_d: Vec<usize>,
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// A-side polynomial file (defaults to the degree-1 monomial x0).
    #[arg(long)]
    a: Option<PathBuf>,
    /// B-side polynomial file (defaults to the degree-1 monomial x0).
    #[arg(long)]
    b: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Reduced dimension; derived from --delta when omitted.
    #[arg(long = "D")]
    big_d: Option<usize>,
    /// Accuracy budget used to derive D when --D is omitted.
    #[arg(long, default_value_t = 0.25)]
    delta: f64,
    /// Independent projection-matrix seeds.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Correlated pair draws per seed.
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long = "const-CD", default_value_t = 1.0)]
    const_cd: f64,
    #[arg(long, default_value_t = 4)]
    base: u32,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct GaussArgs {
    /// A-side component polynomial file; repeat once per component.
    /// Omitted: the built-in two-component halfspace surrogate.
    #[arg(long)]
    a: Vec<PathBuf>,
    /// B-side component polynomial files; omitted: same objects as A.
    #[arg(long)]
    b: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Sample count for every Monte Carlo measurement in the run.
    #[arg(long, default_value_t = 50_000)]
    samples: u64,
    /// Desk-scale parameter pins, e.g. d=2,t=16,D=2000,h=1; schedule
    /// values are still reported.
    #[arg(long = "override", value_parser = parse_overrides)]
    overrides: Option<Overrides>,
    /// Smoothing schedule constant.
    #[arg(long = "const-C", default_value_t = 1.0)]
    const_c: f64,
    /// Multilinearization block-count constant.
    #[arg(long = "const-Ct", default_value_t = 4.0)]
    const_ct: f64,
    /// Reduced-dimension constant.
    #[arg(long = "const-CD", default_value_t = 1.0)]
    const_cd: f64,
    /// Reduced-dimension base.
    #[arg(long, default_value_t = 4)]
    base: u32,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct DiscArgs {
    /// Source distribution: dsbs:<rho>, triple-uniform, eq:<q>, inline
    /// JSON {"q":..,"probs":[..]} (row-major), or a path to such JSON.
    #[arg(long, default_value = "dsbs:0.5")]
    source: String,
    /// A-side truth-table JSON path ({"num_vars":n,"components":[[..]]},
    /// states row-major with x0 most significant). Omitted: the dictator
    /// strategy with k = q.
    #[arg(long)]
    a: Option<PathBuf>,
    /// B-side truth-table JSON path; omitted: the dictator strategy.
    #[arg(long)]
    b: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 50_000)]
    samples: u64,
    /// Desk-scale parameter pins, e.g. d=2,t=2,D=4,h=1.
    #[arg(long = "override", value_parser = parse_overrides)]
    overrides: Option<Overrides>,
    #[arg(long = "const-C", default_value_t = 1.0)]
    const_c: f64,
    #[arg(long = "const-Ct", default_value_t = 4.0)]
    const_ct: f64,
    #[arg(long = "const-CD", default_value_t = 1.0)]
    const_cd: f64,
    #[arg(long, default_value_t = 4)]
    base: u32,
    /// Influence threshold for head selection.
    #[arg(long, default_value_t = 0.2)]
    tau: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct StabArgs {
    /// Strategy component polynomial file; repeat once per component.
    /// Omitted: the built-in halfspace surrogate.
    #[arg(long)]
    f: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    /// When set, also run the dimension-reduction pipeline at this eps and
    /// report stability before and after.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "override", value_parser = parse_overrides)]
    overrides: Option<Overrides>,
    #[arg(long = "const-C", default_value_t = 1.0)]
    const_c: f64,
    #[arg(long = "const-Ct", default_value_t = 4.0)]
    const_ct: f64,
    #[arg(long = "const-CD", default_value_t = 1.0)]
    const_cd: f64,
    #[arg(long, default_value_t = 4)]
    base: u32,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct DecideArgs {
    /// Source distribution spec (named, inline JSON, or a path).
    #[arg(long, default_value = "dsbs:0.5")]
    source: String,
    /// Target k x k distribution: inline JSON [[..],..] or a path.
    /// Repeatable; the search accepts on the first target within threshold.
    #[arg(long, required = true)]
    target: Vec<String>,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Largest source block length to search.
    #[arg(long, default_value_t = 1)]
    n_max: usize,
    /// Per-level pair-enumeration budget.
    #[arg(long, default_value_t = 1_000_000_000)]
    budget: u64,
    /// Acceptance threshold is this multiple of eps.
    #[arg(long, default_value_t = 5.0 / 3.0)]
    threshold_factor: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct PolyArgs {
    #[command(subcommand)]
    action: PolyAction,
}

#[derive(Subcommand, Debug)]
enum PolyAction {
    /// Parse a polynomial file and report degree, norms, and influences.
    Inspect(PolyInspectArgs),
    /// Convert between the text and JSON polynomial formats. The converted
    /// polynomial is written bare (no report envelope) so it stays loadable.
    Convert(PolyConvertArgs),
}

#[derive(Args, Debug)]
struct PolyInspectArgs {
    /// Polynomial file, text or JSON format (detected by first character).
    input: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct PolyConvertArgs {
    /// Polynomial file, text or JSON format (detected by first character).
    input: PathBuf,
    /// Output format, `text` or `json`; defaults to the opposite of the input.
    #[arg(long)]
    to: Option<String>,
    #[command(flatten)]
    common: Common,
}

/// Parses `d=..,t=..,D=..,h=..` (any subset, any order).
fn parse_overrides(text: &str) -> std::result::Result<Overrides, String> {
    let mut ov = Overrides::default();
    for part in text.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("override {part:?}: expected key=value"))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |_| format!("override {key}={value}: not a number");
        match key {
            "d" => ov.d = Some(value.parse().map_err(bad)?),
            "t" => ov.t = Some(value.parse().map_err(bad)?),
            "D" => ov.big_d = Some(value.parse().map_err(bad)?),
            "h" => ov.h = Some(value.parse().map_err(bad)?),
            _ => return Err(format!("override key {key:?}: expected d, t, D, or h")),
        }
    }
    Ok(ov)
}

/// Injects `key = value` lines from a `--config` file as trailing long
/// flags, skipping keys already present in `args`.
fn apply_config_file(mut args: Vec<String>) -> Result<Vec<String>> {
    let path = {
        let mut found = None;
        for (i, arg) in args.iter().enumerate() {
            if arg == "--config" {
                found = args.get(i + 1).cloned();
            } else if let Some(rest) = arg.strip_prefix("--config=") {
                found = Some(rest.to_string());
            }
        }
        match found {
            Some(p) => p,
            None => return Ok(args),
        }
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::config(format!("config file {path}: {e}")))?;
    for (lineno, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| {
            Error::config(format!(
                "config file {path} line {}: expected key = value",
                lineno + 1
            ))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key == "config" {
            continue;
        }
        let flag = format!("--{key}");
        let already = args
            .iter()
            .any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if already {
            continue;
        }
        match value {
            "true" => args.push(flag),
            "false" => {}
            _ => {
                args.push(flag);
                args.push(value.to_string());
            }
        }
    }
    Ok(args)
}

/// The resolved configuration echoed into every report.
#[derive(Serialize, Debug, Default)]
struct RunConfig {
    subcommand: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<u32>,
    #[serde(rename = "D", skip_serializing_if = "Option::is_none")]
    big_d: Option<serde_json::Value>,
    #[serde(rename = "S", skip_serializing_if = "Option::is_none")]
    set_s: Option<Vec<usize>>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    set_t: Option<Vec<usize>>,
    #[serde(rename = "S2", skip_serializing_if = "Option::is_none")]
    set_s2: Option<Vec<usize>>,
    #[serde(rename = "T2", skip_serializing_if = "Option::is_none")]
    set_t2: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    budget: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<u64>,
    seed: u64,
    workers: usize,
    #[serde(rename = "const_C", skip_serializing_if = "Option::is_none")]
    const_c: Option<f64>,
    #[serde(rename = "const_Ct", skip_serializing_if = "Option::is_none")]
    const_ct: Option<f64>,
    #[serde(rename = "const_CD", skip_serializing_if = "Option::is_none")]
    const_cd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    base: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    overrides: Option<Overrides>,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    targets: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    to: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<String>,
    no_timings: bool,
    csv: bool,
}

impl RunConfig {
    fn new(subcommand: &str, common: &Common) -> Self {
        RunConfig {
            subcommand: subcommand.to_string(),
            seed: common.seed,
            workers: common.workers,
            out: common.out.as_ref().map(display_path),
            config: common.config.as_ref().map(display_path),
            no_timings: common.no_timings,
            csv: common.csv,
            ..RunConfig::default()
        }
    }
}

fn display_path(p: impl AsRef<Path>) -> String {
    p.as_ref().display().to_string()
}

#[derive(Serialize)]
struct Envelope {
    version: &'static str,
    config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    seconds: Option<f64>,
    report: serde_json::Value,
}

fn csv_field(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Lossy CSV mirror of an arbitrary JSON value: one `path,value` row per
/// scalar leaf, in serialization order.
fn flatten_csv(value: &serde_json::Value) -> String {
    fn walk(prefix: &str, v: &serde_json::Value, out: &mut String) {
        match v {
            serde_json::Value::Object(map) => {
                for (key, child) in map {
                    let path = if prefix.is_empty() {
                        key.clone()
                    } else {
                        format!("{prefix}.{key}")
                    };
                    walk(&path, child, out);
                }
            }
            serde_json::Value::Array(items) => {
                for (i, child) in items.iter().enumerate() {
                    walk(&format!("{prefix}.{i}"), child, out);
                }
            }
            serde_json::Value::Null => {
                let _ = writeln!(out, "{},", csv_field(prefix));
            }
            serde_json::Value::Bool(b) => {
                let _ = writeln!(out, "{},{b}", csv_field(prefix));
            }
            serde_json::Value::Number(n) => {
                let _ = writeln!(out, "{},{n}", csv_field(prefix));
            }
            serde_json::Value::String(s) => {
                let _ = writeln!(out, "{},{}", csv_field(prefix), csv_field(s));
            }
        }
    }
    let mut out = String::from("field,value\n");
    walk("", value, &mut out);
    out
}

/// Writes the final output: JSON envelope, or the CSV mirror with `--csv`
/// (`csv_text` when the subcommand has a columnar form, else the flattened
/// envelope).
fn emit(
    common: &Common,
    config: RunConfig,
    report: serde_json::Value,
    csv_text: Option<String>,
    started: Instant,
) -> Result<()> {
    let seconds = (!common.no_timings).then(|| started.elapsed().as_secs_f64());
    let envelope = Envelope {
        version: env!("CARGO_PKG_VERSION"),
        config,
        seconds,
        report,
    };
    let text = if common.csv {
        match csv_text {
            Some(t) => t,
            None => flatten_csv(&serde_json::to_value(&envelope)?),
        }
    } else {
        let mut s = serde_json::to_string_pretty(&envelope)?;
        s.push('\n');
        s
    };
    write_output(&common.out, &text)
}

fn write_output(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => {
            let mut stdout = io::stdout();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let started = Instant::now();
    match cli.cmd {
        Cmd::ChiMoments(args) => run_chi(args, started),
        Cmd::MonomialBounds(args) => run_monomial(args, started),
        Cmd::MetaLemma(args) => run_meta(args, started),
        Cmd::DimredSweep(args) => run_sweep(args, started),
        Cmd::GaussianNis(args) => run_gaussian(args, started),
        Cmd::DiscreteNis(args) => run_discrete(args, started),
        Cmd::Stability(args) => run_stability(args, started),
        Cmd::Decide(args) => run_decide(args, started),
        Cmd::Poly(args) => match args.action {
            PolyAction::Inspect(args) => run_poly_inspect(args, started),
            PolyAction::Convert(args) => run_poly_convert(args),
        },
    }
}

fn run_chi(args: ChiArgs, started: Instant) -> Result<()> {
    let exact = chi_negative_moment_exact(args.big_d, args.d)?;
    let mc = chi_negative_moment_mc(
        args.big_d,
        args.d,
        args.samples,
        args.common.seed,
        args.common.workers,
    )?;
    let records = vec![ExperimentRecord {
        experiment: "chi-moments".to_string(),
        params: serde_json::json!({"D": args.big_d, "d": args.d}),
        estimate: mc.mean,
        std_error: mc.std_error,
        reference: Some(exact),
        samples: mc.samples,
        seed: mc.seed,
    }];
    let mut config = RunConfig::new("chi-moments", &args.common);
    config.big_d = Some(args.big_d.into());
    config.d = Some(args.d);
    config.samples = Some(args.samples);
    let csv = records_to_csv(&records)?;
    emit(
        &args.common,
        config,
        serde_json::to_value(&records)?,
        Some(csv),
        started,
    )
}

fn run_monomial(args: MonoArgs, started: Instant) -> Result<()> {
    let mut config = RunConfig::new("monomial-bounds", &args.common);
    config.set_s = Some(args.set_s.clone());
    config.set_t = Some(args.set_t.clone());
    config.set_s2 = args.set_s2.clone();
    config.set_t2 = args.set_t2.clone();
    config.rho = Some(args.rho);
    config.n = Some(args.n);
    config.big_d = Some(args.big_d.into());
    config.trials = Some(args.trials);
    config.samples = Some(args.samples);
    let records = match (&args.set_s2, &args.set_t2) {
        (None, None) => {
            let exp = monomial_moment_experiment(
                &args.set_s,
                &args.set_t,
                args.rho,
                args.n,
                args.big_d,
                args.trials,
                args.samples,
                args.common.seed,
                args.common.workers,
            )?;
            vec![ExperimentRecord {
                experiment: "monomial-moment".to_string(),
                params: serde_json::json!({
                    "S": args.set_s, "T": args.set_t, "rho": args.rho,
                    "N": args.n, "D": args.big_d, "trials": args.trials,
                    "samples_per_trial": args.samples,
                }),
                estimate: exp.estimate.mean,
                std_error: exp.estimate.std_error,
                reference: Some(exp.reference),
                samples: exp.estimate.samples,
                seed: exp.estimate.seed,
            }]
        }
        (Some(s2), Some(t2)) => {
            let exp = covariance_experiment(
                &args.set_s,
                &args.set_t,
                s2,
                t2,
                args.rho,
                args.n,
                args.big_d,
                args.trials,
                args.samples,
                args.common.seed,
                args.common.workers,
            )?;
            vec![ExperimentRecord {
                experiment: "monomial-covariance".to_string(),
                params: serde_json::json!({
                    "S": args.set_s, "T": args.set_t, "S2": s2, "T2": t2,
                    "rho": args.rho, "N": args.n, "D": args.big_d,
                    "trials": args.trials, "samples_per_trial": args.samples,
                }),
                estimate: exp.covariance,
                std_error: exp.std_error,
                reference: exp.reference,
                samples: exp.trials,
                seed: exp.seed,
            }]
        }
        _ => {
            return Err(Error::config(
                "monomial-bounds: --S2 and --T2 must be given together",
            ))
        }
    };
    let csv = records_to_csv(&records)?;
    emit(
        &args.common,
        config,
        serde_json::to_value(&records)?,
        Some(csv),
        started,
    )
}

fn run_meta(args: MetaArgs, started: Instant) -> Result<()> {
    let mut config = RunConfig::new("meta-lemma", &args.common);
    config.d = Some(args.d);
    config.rho = Some(args.rho);
    config.big_d = Some(args.big_d.clone().into());
    config.samples = Some(args.samples);
    let mut records = Vec::with_capacity(args.big_d.len());
    for (i, &big_d) in args.big_d.iter().enumerate() {
        let seed = derive_seed(args.common.seed, i as u64);
        let exp = normalized_inner_product_experiment(
            args.d,
            args.rho,
            big_d,
            args.samples,
            seed,
            args.common.workers,
        )?;
        records.push(ExperimentRecord {
            experiment: "normalized-inner-product".to_string(),
            params: serde_json::json!({"d": args.d, "rho": args.rho, "D": big_d}),
            estimate: exp.estimate.mean,
            std_error: exp.estimate.std_error,
            reference: Some(exp.reference),
            samples: exp.estimate.samples,
            seed,
        });
    }
    let csv = records_to_csv(&records)?;
    emit(
        &args.common,
        config,
        serde_json::to_value(&records)?,
        Some(csv),
        started,
    )
}

/// Loads a polynomial from a text or JSON file, defaulting to `H_1(x_0)`.
fn load_poly(path: &Option<PathBuf>) -> Result<HermitePolynomial> {
    match path {
        Some(p) => parse_poly_auto(&fs::read_to_string(p)?),
        None => HermitePolynomial::from_terms(1, [(MultiIndex::single(0, 1), 1.0)]),
    }
}

fn run_sweep(args: SweepArgs, started: Instant) -> Result<()> {
    let a = load_poly(&args.a)?;
    let b = load_poly(&args.b)?;
    let big_d = match args.big_d {
        Some(v) => v,
        None => {
            let d = a.degree().max(b.degree()).max(1);
            let dim = dimred_params(d, args.delta, args.const_cd, args.base)?;
            let v = dim.value.ok_or_else(|| {
                Error::resource(format!("dimred-sweep: schedule D = {} overflows", dim.text))
            })?;
            usize::try_from(v).map_err(|_| {
                Error::resource(format!("dimred-sweep: schedule D = {v} exceeds usize"))
            })?
        }
    };
    let report = dimred_experiment(
        &a,
        &b,
        args.rho,
        big_d,
        args.seeds,
        args.samples,
        args.common.seed,
        args.common.workers,
    )?;
    let mut config = RunConfig::new("dimred-sweep", &args.common);
    config.a = args.a.as_ref().map(|p| vec![display_path(p)]);
    config.b = args.b.as_ref().map(|p| vec![display_path(p)]);
    config.rho = Some(args.rho);
    config.big_d = Some(big_d.into());
    config.delta = Some(args.delta);
    config.seeds = Some(args.seeds);
    config.samples = Some(args.samples);
    config.const_cd = Some(args.const_cd);
    config.base = Some(args.base);
    emit(
        &args.common,
        config,
        serde_json::to_value(&report)?,
        None,
        started,
    )
}

/// The built-in two-component degree-1 halfspace surrogate on one variable.
fn halfspace_pair() -> Vec<HermitePolynomial> {
    let mk = |sign: f64| {
        HermitePolynomial::from_terms(
            1,
            [
                (MultiIndex::empty(), 0.5),
                (MultiIndex::single(0, 1), sign * 0.5),
            ],
        )
        .expect("constant terms")
    };
    vec![mk(1.0), mk(-1.0)]
}

/// Loads one side of a Gaussian strategy: one polynomial file per
/// component, all widened to a common variable count.
fn load_side(paths: &[PathBuf]) -> Result<Vec<HermitePolynomial>> {
    let mut polys = Vec::with_capacity(paths.len());
    for p in paths {
        polys.push(parse_poly_auto(&fs::read_to_string(p)?)?);
    }
    let n = polys.iter().map(|p| p.num_vars()).max().unwrap_or(0);
    polys.into_iter().map(|p| p.with_num_vars(n)).collect()
}

fn pipeline_options(
    consts: Consts,
    overrides: Option<Overrides>,
    samples: u64,
    tau: f64,
    common: &Common,
) -> PipelineOptions {
    PipelineOptions {
        consts,
        overrides: overrides.unwrap_or_default(),
        seed: common.seed,
        samples,
        workers: common.workers,
        timings: !common.no_timings,
        tau,
    }
}

fn run_gaussian(args: GaussArgs, started: Instant) -> Result<()> {
    let consts = Consts {
        c_smooth: args.const_c,
        c_t: args.const_ct,
        c_d: args.const_cd,
        base: args.base,
    };
    let opts = pipeline_options(consts, args.overrides, args.samples, 0.2, &args.common);
    let mut a = if args.a.is_empty() {
        halfspace_pair()
    } else {
        load_side(&args.a)?
    };
    let b = if args.b.is_empty() {
        None
    } else {
        let mut side = load_side(&args.b)?;
        // Both sides must share a variable count; widen to the larger one.
        let n = side.iter().chain(&a).map(|p| p.num_vars()).max().unwrap_or(0);
        a = a
            .into_iter()
            .map(|p| p.with_num_vars(n))
            .collect::<Result<_>>()?;
        side = side
            .into_iter()
            .map(|p| p.with_num_vars(n))
            .collect::<Result<_>>()?;
        Some(side)
    };
    let (_, _, report) = match &b {
        Some(side) => gaussian_nis(&a, side, args.rho, args.eps, &opts)?,
        None => gaussian_nis(&a, &a, args.rho, args.eps, &opts)?,
    };
    let mut config = RunConfig::new("gaussian-nis", &args.common);
    config.a = Some(if args.a.is_empty() {
        vec!["builtin:halfspace".to_string()]
    } else {
        args.a.iter().map(display_path).collect()
    });
    config.b = Some(if args.b.is_empty() {
        vec!["same-as-a".to_string()]
    } else {
        args.b.iter().map(display_path).collect()
    });
    config.rho = Some(args.rho);
    config.eps = Some(args.eps);
    config.samples = Some(args.samples);
    config.overrides = Some(args.overrides.unwrap_or_default());
    config.const_c = Some(args.const_c);
    config.const_ct = Some(args.const_ct);
    config.const_cd = Some(args.const_cd);
    config.base = Some(args.base);
    emit(
        &args.common,
        config,
        serde_json::to_value(&report)?,
        None,
        started,
    )
}

#[derive(Deserialize)]
struct TruthTableFile {
    num_vars: usize,
    components: Vec<Vec<f64>>,
}

/// Reads a truth-table JSON file into side-tagged polynomials.
fn load_tables(
    path: &Path,
    js: &JointSpace,
    side: Side,
    bases: &crate::discrete::AlignedBases,
) -> Result<Vec<DiscretePolynomial>> {
    let parsed: TruthTableFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    parsed
        .components
        .iter()
        .map(|values| expand_truth_table(values, parsed.num_vars, js, side, bases))
        .collect()
}

/// The dictator strategy on one source symbol: component `i` is the
/// indicator of state `i`, so `k = q`.
fn dictator_tables(
    js: &JointSpace,
    side: Side,
    bases: &crate::discrete::AlignedBases,
) -> Result<Vec<DiscretePolynomial>> {
    let q = js.q();
    (0..q)
        .map(|i| {
            let mut values = vec![0.0; q];
            values[i] = 1.0;
            expand_truth_table(&values, 1, js, side, bases)
        })
        .collect()
}

/// Resolves a source spec that may be a named source, inline JSON, or a
/// path to a JSON file.
fn load_source(spec: &str) -> Result<JointSpace> {
    let trimmed = spec.trim();
    if !trimmed.starts_with('{') && Path::new(trimmed).is_file() {
        return parse_source_spec(&fs::read_to_string(trimmed)?);
    }
    parse_source_spec(trimmed)
}

fn run_discrete(args: DiscArgs, started: Instant) -> Result<()> {
    let js = load_source(&args.source)?;
    let bases = aligned_bases(&js);
    let a = match &args.a {
        Some(p) => load_tables(p, &js, Side::A, &bases)?,
        None => dictator_tables(&js, Side::A, &bases)?,
    };
    let b = match &args.b {
        Some(p) => load_tables(p, &js, Side::B, &bases)?,
        None => dictator_tables(&js, Side::B, &bases)?,
    };
    let consts = Consts {
        c_smooth: args.const_c,
        c_t: args.const_ct,
        c_d: args.const_cd,
        base: args.base,
    };
    let opts = pipeline_options(consts, args.overrides, args.samples, args.tau, &args.common);
    let (_, _, report) = discrete_nis(&a, &b, &js, args.eps, &opts)?;
    let mut config = RunConfig::new("discrete-nis", &args.common);
    config.source = Some(args.source.clone());
    config.a = Some(vec![args
        .a
        .as_ref()
        .map_or_else(|| "builtin:dictator".to_string(), display_path)]);
    config.b = Some(vec![args
        .b
        .as_ref()
        .map_or_else(|| "builtin:dictator".to_string(), display_path)]);
    config.eps = Some(args.eps);
    config.samples = Some(args.samples);
    config.overrides = Some(args.overrides.unwrap_or_default());
    config.const_c = Some(args.const_c);
    config.const_ct = Some(args.const_ct);
    config.const_cd = Some(args.const_cd);
    config.base = Some(args.base);
    config.tau = Some(args.tau);
    emit(
        &args.common,
        config,
        serde_json::to_value(&report)?,
        None,
        started,
    )
}

fn run_stability(args: StabArgs, started: Instant) -> Result<()> {
    let polys = if args.f.is_empty() {
        halfspace_pair()
    } else {
        load_side(&args.f)?
    };
    let mut config = RunConfig::new("stability", &args.common);
    config.f = Some(if args.f.is_empty() {
        vec!["builtin:halfspace".to_string()]
    } else {
        args.f.iter().map(display_path).collect()
    });
    config.rho = Some(args.rho);
    config.samples = Some(args.samples);
    let report = match args.eps {
        None => {
            let f = projected(&VectorFunction::from_polys(polys)?);
            let estimate = noise_stability(
                &f,
                args.rho,
                args.samples,
                args.common.seed,
                args.common.workers,
            )?;
            serde_json::json!({ "stability": estimate })
        }
        Some(eps) => {
            let consts = Consts {
                c_smooth: args.const_c,
                c_t: args.const_ct,
                c_d: args.const_cd,
                base: args.base,
            };
            let opts = pipeline_options(consts, args.overrides, args.samples, 0.2, &args.common);
            config.eps = Some(eps);
            config.overrides = Some(args.overrides.unwrap_or_default());
            config.const_c = Some(args.const_c);
            config.const_ct = Some(args.const_ct);
            config.const_cd = Some(args.const_cd);
            config.base = Some(args.base);
            let (_, report) = stability_dimension_reduction(&polys, args.rho, eps, &opts)?;
            serde_json::to_value(&report)?
        }
    };
    emit(&args.common, config, report, None, started)
}

/// Parses a target spec: inline JSON `[[..],..]` or a path to such JSON.
fn load_target(spec: &str) -> Result<JointDistributionK> {
    let trimmed = spec.trim();
    let text = if trimmed.starts_with('[') {
        trimmed.to_string()
    } else {
        fs::read_to_string(trimmed)?
    };
    let probs: Vec<Vec<f64>> = serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("target {spec:?}: expected a k x k JSON array: {e}")))?;
    JointDistributionK::new(probs)
}

fn run_decide(args: DecideArgs, started: Instant) -> Result<()> {
    let source = load_source(&args.source)?;
    let targets: Vec<JointDistributionK> = args
        .target
        .iter()
        .map(|t| load_target(t))
        .collect::<Result<_>>()?;
    let k = targets[0].k();
    let instance = GapNisInstance::new(source, targets, k, args.eps, args.n_max)?;
    let opts = DecideOptions {
        threshold_factor: args.threshold_factor,
        budget: args.budget,
        workers: args.common.workers,
    };
    let verdict = decide_gap_nis(&instance, &opts)?;
    let mut config = RunConfig::new("decide", &args.common);
    config.source = Some(args.source.clone());
    config.targets = Some(args.target.clone());
    config.eps = Some(args.eps);
    config.k = Some(k);
    config.n_max = Some(args.n_max);
    config.budget = Some(args.budget);
    config.threshold_factor = Some(args.threshold_factor);
    emit(
        &args.common,
        config,
        serde_json::to_value(&verdict)?,
        None,
        started,
    )
}

/// JSON form of a polynomial: `{"num_vars": n, "terms": [{"index":
/// [[var, deg], ..], "coeff": c}, ..]}`.
#[derive(Serialize, Deserialize)]
struct PolyJson {
    num_vars: usize,
    terms: Vec<PolyTermJson>,
}

#[derive(Serialize, Deserialize)]
struct PolyTermJson {
    index: Vec<(usize, u32)>,
    coeff: f64,
}

fn poly_to_json(poly: &HermitePolynomial) -> PolyJson {
    PolyJson {
        num_vars: poly.num_vars(),
        terms: poly
            .terms()
            .map(|(idx, c)| PolyTermJson {
                index: idx.iter().collect(),
                coeff: c,
            })
            .collect(),
    }
}

fn poly_from_json(text: &str) -> Result<HermitePolynomial> {
    let parsed: PolyJson = serde_json::from_str(text)?;
    let terms: Vec<(MultiIndex, f64)> = parsed
        .terms
        .into_iter()
        .map(|t| (MultiIndex::from_pairs(t.index), t.coeff))
        .collect();
    let needed = terms
        .iter()
        .filter_map(|(idx, _)| idx.max_var())
        .map(|v| v + 1)
        .max()
        .unwrap_or(0);
    HermitePolynomial::from_terms(parsed.num_vars.max(needed), terms)
}

/// Text when the first non-space character is not `{`, JSON otherwise.
fn parse_poly_auto(text: &str) -> Result<HermitePolynomial> {
    if text.trim_start().starts_with('{') {
        poly_from_json(text)
    } else {
        HermitePolynomial::parse(text)
    }
}

fn run_poly_inspect(args: PolyInspectArgs, started: Instant) -> Result<()> {
    let text = fs::read_to_string(&args.input)?;
    let is_json = text.trim_start().starts_with('{');
    let poly = parse_poly_auto(&text)?;
    let fns = poly.functionals();
    let max_influence = fns.influences.iter().copied().fold(0.0f64, f64::max);
    let report = serde_json::json!({
        "format": if is_json { "json" } else { "text" },
        "num_vars": poly.num_vars(),
        "degree": poly.degree(),
        "num_terms": poly.num_terms(),
        "norm2_sq": fns.norm2_sq,
        "variance": fns.variance,
        "total_influence": fns.total_influence,
        "max_influence": max_influence,
        "influences": fns.influences,
        "multilinear": poly.terms().all(|(idx, _)| idx.is_multilinear()),
    });
    let mut config = RunConfig::new("poly-inspect", &args.common);
    config.input = Some(display_path(&args.input));
    emit(&args.common, config, report, None, started)
}

fn run_poly_convert(args: PolyConvertArgs) -> Result<()> {
    let text = fs::read_to_string(&args.input)?;
    let input_json = text.trim_start().starts_with('{');
    let poly = parse_poly_auto(&text)?;
    let to = match &args.to {
        Some(t) => t.clone(),
        None => (if input_json { "text" } else { "json" }).to_string(),
    };
    let out = match to.as_str() {
        "text" => poly.serialize(),
        "json" => {
            let mut s = serde_json::to_string_pretty(&poly_to_json(&poly))?;
            s.push('\n');
            s
        }
        other => {
            return Err(Error::config(format!(
                "poly convert: --to {other:?}; expected text or json"
            )))
        }
    };
    write_output(&args.common.out, &out)
}
