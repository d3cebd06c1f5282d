use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use senslab::bernoulli::{bernoulli_expected_sensitivity, bernoulli_mc_sensitivity};
use senslab::estimators::{estimator_by_name, ClipInterval, RegistryOptions};
use senslab::harness::{
    config_to_args, parse_config, scaling_sweep, to_csv, to_json, verify_suite, AdversarySpec, EsConfig, Model, SweepVariable,
    VerifyReport, DEFAULT_TRIALS_SCALE, SCHEMA,
};
use senslab::{CorruptionBudget, RngStream, SensError};

const SUBCOMMANDS: [&str; 4] = ["sensitivity", "scaling", "verify", "bernoulli"];

/// Exit status for a refused (unbounded) sensitivity request.
const EXIT_UNBOUNDED: u8 = 3;

#[derive(Parser)]
#[command(name = "senslab", version, about = "Empirical sensitivity of estimators under sample contamination", args_override_self = true)]
struct Cli {
    /// Worker threads; defaults to the number of cores. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// File of key=value lines supplying flags; explicit flags win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate ES for one estimator, adversary and budget.
    Sensitivity(SensitivityArgs),
    /// Sweep eta, n or d and fit a log-log slope.
    Scaling(ScalingArgs),
    /// Run the inequality checker grid; exits nonzero if any check fails.
    Verify(VerifyArgs),
    /// Expected sensitivity on Bernoulli data, exactly or by Monte Carlo.
    Bernoulli(BernoulliArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// mean, median, clipped-mean, clipped-median, projected:<inner>, bernoulli-plugin
    #[arg(long)]
    estimator: String,
    /// resample, local-shift, tv-coupling, block-resample, median-exact, hamming-ball
    #[arg(long)]
    adversary: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..=2))]
    q: u32,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gaussian mean, comma separated; a single value is used for every coordinate.
    #[arg(long, num_args = 1.., value_delimiter = ',', allow_negative_numbers = true)]
    mu: Vec<f64>,
    /// Shift of the local-shift adversary.
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
    /// Block refreshed by block-resample; random per trial when omitted.
    #[arg(long)]
    block: Option<usize>,
    /// Use Bern(p) clean data instead of a Gaussian.
    #[arg(long)]
    p: Option<f64>,
    /// Clip interval of the clipped-* estimators.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    clip_lo: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    clip_hi: f64,
    /// Lift dimension of projected:* estimators.
    #[arg(long, default_value_t = 2)]
    lift_dim: usize,
    /// Inner noise draws of projected:* estimators.
    #[arg(long)]
    mc_inner: Option<usize>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Output format; inferred from the --out extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct SensitivityArgs {
    #[command(flatten)]
    base: ExperimentArgs,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long)]
    sweep: String,
    /// Grid values, comma separated and increasing.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[command(flatten)]
    base: ExperimentArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Trials per Monte Carlo check.
    #[arg(long, default_value_t = DEFAULT_TRIALS_SCALE)]
    trials_scale: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Appends a deliberately false row, for testing the exit status.
    #[arg(long, hide = true)]
    inject_failure: bool,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Exact,
    Mc,
}

#[derive(Args)]
struct BernoulliArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    eta: f64,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value = "bernoulli-plugin")]
    estimator: String,
    #[arg(long, value_enum, default_value = "exact")]
    mode: Mode,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    clip_lo: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    clip_hi: f64,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct BernoulliOutput {
    schema: &'static str,
    estimator: String,
    n: usize,
    eta: f64,
    k: usize,
    p: f64,
    mode: Mode,
    expected_sensitivity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<u64>,
    /// Measured `expected_sensitivity / eta`.
    ratio_to_eta: f64,
}

#[derive(Serialize)]
struct Diagnostic {
    schema: &'static str,
    error: &'static str,
    estimator: String,
    adversary: String,
    message: String,
}

/// Splices the `--config` file's pairs in right after the subcommand, so that
/// flags given on the command line come later and take precedence.
fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let path = match args[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => args.get(pos + 1).context("--config needs a path")?.clone(),
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let pairs = parse_config(&text)?;
    let sub = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .context("a subcommand is required")?;
    let mut out = args[..=sub].to_vec();
    out.extend(config_to_args(&pairs));
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}

fn registry(args: &ExperimentArgs) -> Result<RegistryOptions> {
    Ok(RegistryOptions {
        clip: ClipInterval::new(args.clip_lo, args.clip_hi)?,
        lift_dim: args.lift_dim,
        mc_inner: args.mc_inner,
        seed: args.seed,
        ..RegistryOptions::default()
    })
}

fn model(args: &ExperimentArgs) -> Result<Model> {
    if let Some(p) = args.p {
        if !args.mu.is_empty() {
            bail!("--mu and --p are mutually exclusive");
        }
        return Ok(Model::bernoulli(p)?);
    }
    let mu = match args.mu.len() {
        0 => vec![0.0; args.d],
        1 => vec![args.mu[0]; args.d],
        m if m == args.d => args.mu.clone(),
        m => bail!("--mu has {m} values but d = {}", args.d),
    };
    Ok(Model::gaussian(mu)?)
}

fn config(args: &ExperimentArgs, need_eta: bool, need_n: bool) -> Result<EsConfig> {
    let eta = match args.eta {
        Some(e) => e,
        None if need_eta => bail!("--eta is required"),
        None => 0.1,
    };
    let n = match args.n {
        Some(n) => n,
        None if need_n => bail!("--n is required"),
        None => 1,
    };
    let mut adversary = AdversarySpec::by_name(&args.adversary, args.delta)?;
    if let AdversarySpec::BlockResample { block } = &mut adversary {
        *block = args.block;
    }
    Ok(EsConfig {
        estimator: args.estimator.clone(),
        adversary,
        model: model(args)?,
        eta,
        n,
        q: args.q,
        trials: args.trials,
        seed: args.seed,
        registry: registry(args)?,
    })
}

fn format_for(out: Option<&Path>, format: Option<Format>) -> Format {
    format.unwrap_or(match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("csv") => Format::Csv,
        _ => Format::Json,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Turns the unbounded-sensitivity refusal into a structured diagnostic.
fn refuse(err: &SensError, out: Option<&Path>) -> Result<ExitCode> {
    let SensError::UnboundedSensitivity { estimator, adversary } = err else {
        unreachable!()
    };
    let diag = Diagnostic {
        schema: SCHEMA,
        error: "unbounded_sensitivity",
        estimator: estimator.clone(),
        adversary: adversary.clone(),
        message: err.to_string(),
    };
    emit(out, &to_json(&diag)?)?;
    eprintln!("error: {err}");
    Ok(ExitCode::from(EXIT_UNBOUNDED))
}

fn sensitivity(args: SensitivityArgs) -> Result<ExitCode> {
    let base = &args.base;
    let cfg = config(base, true, true)?;
    let out = base.out.as_deref();
    let report = match cfg.run() {
        Ok(r) => r,
        Err(e @ SensError::UnboundedSensitivity { .. }) => return refuse(&e, out),
        Err(e) => return Err(e.into()),
    };
    let text = match format_for(out, base.format) {
        Format::Json => to_json(&report)?,
        Format::Csv => to_csv(std::slice::from_ref(&report))?,
    };
    emit(out, &text)?;
    if out.is_some() {
        println!(
            "{} / {}: ES_{} = {:.6} [{:.6}, {:.6}] (k = {}, {} trials{})",
            report.estimator,
            report.adversary,
            report.q,
            report.es_estimate,
            report.ci_low,
            report.ci_high,
            report.k,
            report.trials,
            if report.lower_bound_only { ", lower bound" } else { "" }
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn scaling(args: ScalingArgs) -> Result<ExitCode> {
    let variable: SweepVariable = args.sweep.parse()?;
    let base = &args.base;
    let cfg = config(base, variable != SweepVariable::Eta, variable != SweepVariable::N)?;
    let out = base.out.as_deref();
    let fit = match scaling_sweep(&cfg, variable, &args.values) {
        Ok(f) => f,
        Err(e @ SensError::UnboundedSensitivity { .. }) => return refuse(&e, out),
        Err(e) => return Err(e.into()),
    };
    let text = match format_for(out, base.format) {
        Format::Json => to_json(&fit)?,
        Format::Csv => to_csv(&fit.reports)?,
    };
    emit(out, &text)?;
    if out.is_some() {
        println!(
            "slope vs {} = {:.4} (intercept {:.4}, r^2 {:.4}, {} of {} points used)",
            fit.variable,
            fit.slope,
            fit.intercept,
            fit.r_squared,
            fit.used.iter().filter(|&&u| u).count(),
            fit.values.len()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let mut report = verify_suite(args.trials_scale, args.seed)?;
    if args.inject_failure {
        let mut rows = report.rows;
        rows.push(senslab::analysis::IneqCheckResult::less_eq("injected failure: 1 <= 0", 1.0, 0.0, None, None));
        report = VerifyReport::from_rows(rows, args.trials_scale, args.seed);
    }
    print!("{}", report.table());
    if let Some(path) = &args.out {
        fs::write(path, to_json(&report)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::from(report.exit_code() as u8))
}

fn bernoulli(args: BernoulliArgs) -> Result<ExitCode> {
    let opts = RegistryOptions {
        clip: ClipInterval::new(args.clip_lo, args.clip_hi)?,
        seed: args.seed,
        ..RegistryOptions::default()
    };
    let f = estimator_by_name(&args.estimator, &opts)?;
    let budget = CorruptionBudget::new(args.eta, args.n)?;
    let (value, stderr, trials) = match args.mode {
        Mode::Exact => (bernoulli_expected_sensitivity(f.as_ref(), args.n, args.p, &budget)?, None, None),
        Mode::Mc => {
            let (m, se) = bernoulli_mc_sensitivity(f.as_ref(), args.n, args.p, &budget, args.trials, RngStream::new(args.seed, 0))?;
            (m, Some(se), Some(args.trials))
        }
    };
    let output = BernoulliOutput {
        schema: SCHEMA,
        estimator: f.name(),
        n: args.n,
        eta: args.eta,
        k: budget.k,
        p: args.p,
        mode: args.mode,
        expected_sensitivity: value,
        stderr,
        trials,
        ratio_to_eta: value / args.eta,
    };
    emit(args.out.as_deref(), &to_json(&output)?)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Sensitivity(a) => sensitivity(a),
        Command::Scaling(a) => scaling(a),
        Command::Verify(a) => verify(a),
        Command::Bernoulli(a) => bernoulli(a),
    }
}

fn main() -> ExitCode {
    let result = expand_config(std::env::args().collect()).and_then(|args| {
        let cli = Cli::parse_from(args);
        match cli.threads {
            Some(t) => rayon::ThreadPoolBuilder::new().num_threads(t).build()?.install(|| run(cli)),
            None => run(cli),
        }
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
