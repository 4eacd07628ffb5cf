//! Command implementations behind the binary: fit, bootstrap, simulate.
//!
//! Each command writes machine-readable outputs (JSON for scalars and
//! metadata, CSV for curves and replicates) plus a run manifest into the
//! output directory, and returns a process exit code:
//!
//! - 0: success
//! - 2: data or configuration error
//! - 3: fit did not converge
//! - 4: too many failed bootstrap replicates or simulation runs

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::bootstrap::{run_bootstrap, BootstrapConfig, NoiseMode};
use crate::data::{load_core, DerivedSeries, TempBand};
use crate::error::{Error, Result};
use crate::fitter::FitConfig;
use crate::model::{fit_model, ModelFit};
use crate::simulation::{run_bias_sd_study, run_coverage_study, SimConfig, StudyResult};
use crate::smoother::KernelSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_FAILURES: i32 = 4;

/// Semiparametric fit of ice-core accumulation rate against temperature.
#[derive(Debug, Parser)]
#[command(name = "aarfit", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to a core file and write fit.json plus curves.csv.
    Fit(FitArgs),
    /// Fit, then bootstrap standard errors and confidence intervals.
    Bootstrap(BootstrapArgs),
    /// Run the synthetic bias/sd and coverage studies.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonFitArgs {
    /// Input core table (CSV/TSV with header depth_m,age_kyrbp,temp_c).
    #[arg(long)]
    pub input: PathBuf,
    /// Kernel bandwidth in KYr; 0 keeps the raw step baseline.
    #[arg(long, default_value_t = 28.0)]
    pub bandwidth: f64,
    /// Relative loss-change threshold of the alternation.
    #[arg(long, default_value_t = 1e-9)]
    pub rel_tol: f64,
    /// Cap on alternation sweeps.
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonFitArgs,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub common: CommonFitArgs,
    /// Number of bootstrap replicates.
    #[arg(long = "B", default_value_t = 1000)]
    pub replicates: usize,
    /// Miscoverage level of the percentile intervals.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Seed for the replicate streams.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replicate noise reconstruction.
    #[arg(long, value_enum, default_value_t = NoiseModeArg::Ar1)]
    pub noise_mode: NoiseModeArg,
    /// Cap on worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "3000")]
    pub n: Vec<usize>,
    /// Monte Carlo runs per cell.
    #[arg(long, default_value_t = 200)]
    pub runs: usize,
    /// Bootstrap replicates per run (coverage study).
    #[arg(long = "B", default_value_t = 200)]
    pub replicates: usize,
    /// Kernel bandwidth in KYr; 0 disables smoothing.
    #[arg(long, default_value_t = 28.0)]
    pub h: f64,
    /// Bandwidth grid start:stop:step for the coverage study (overrides --h).
    #[arg(long)]
    pub h_grid: Option<String>,
    /// Miscoverage level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Seed of the per-run noise streams (and bootstrap seed derivation).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed of the one-off design jitter.
    #[arg(long, default_value_t = 1)]
    pub design_seed: u64,
    /// Skip the bootstrap coverage study (bias/sd tables only).
    #[arg(long, default_value_t = false)]
    pub no_coverage: bool,
    /// Cap on worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseModeArg {
    /// Reconstruct AR(1) noise recursively from the resampled innovations.
    Ar1,
    /// Add the lag-1 differenced innovations directly (MA(1)-type noise).
    Verbatim,
}

impl From<NoiseModeArg> for NoiseMode {
    fn from(v: NoiseModeArg) -> Self {
        match v {
            NoiseModeArg::Ar1 => NoiseMode::Ar1,
            NoiseModeArg::Verbatim => NoiseMode::Differenced,
        }
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::TooManyReplicateFailures { .. }
        | Error::TooManyRunFailures { .. }
        | Error::ResampleRetryCap(_) => EXIT_FAILURES,
        _ => EXIT_DATA,
    }
}

/// Dispatches a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit(&args),
        Command::Bootstrap(args) => cmd_bootstrap(&args),
        Command::Simulate(args) => cmd_simulate(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

struct LoadedFit {
    series: DerivedSeries,
    band: TempBand,
    smoothing: Option<KernelSpec>,
    fit_cfg: FitConfig,
    model: ModelFit,
    warnings: Vec<String>,
}

fn load_and_fit(common: &CommonFitArgs) -> Result<LoadedFit> {
    if !(common.bandwidth >= 0.0 && common.bandwidth.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "bandwidth must be finite and >= 0, got {}",
            common.bandwidth
        )));
    }
    let raw = load_core(File::open(&common.input)?)?;
    let series = raw.derive()?;
    let band = TempBand::from_temps(series.temp())?;
    let smoothing = if common.bandwidth == 0.0 {
        None
    } else {
        Some(KernelSpec::epanechnikov(common.bandwidth)?)
    };
    let fit_cfg = FitConfig {
        rel_tol: common.rel_tol,
        max_outer_iters: common.max_iters,
        ..FitConfig::default()
    };
    let model = fit_model(&series, &band, &fit_cfg, smoothing)?;

    let mut warnings = Vec::new();
    if series.len() < 30 {
        warnings.push(format!("tiny sample: n = {}", series.len()));
    }
    if smoothing.is_none() {
        warnings.push("bandwidth 0: baseline left unsmoothed".into());
    }
    if !model.step.converged {
        warnings.push(format!(
            "alternation stopped at the sweep cap ({}) before reaching rel_tol",
            fit_cfg.max_outer_iters
        ));
    }
    if !model.step.gamma_converged || !model.smooth.gamma_converged {
        warnings.push("inner coefficient solver hit its iteration cap".into());
    }
    if model.noise.degenerate {
        warnings.push("residuals are exactly zero; lag coefficient set to 0".into());
    }
    if model.noise.phi_outside_unit {
        warnings.push(format!(
            "lag coefficient {} lies outside (-1, 1)",
            model.noise.phi_tilde
        ));
    }
    if model.smooth.eval_fallbacks > 0 {
        warnings.push(format!(
            "{} sample ages had an empty kernel window; nearest knot used",
            model.smooth.eval_fallbacks
        ));
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    Ok(LoadedFit {
        series,
        band,
        smoothing,
        fit_cfg,
        model,
        warnings,
    })
}

#[derive(Serialize)]
struct BandJson {
    lo: f64,
    hi: f64,
    gamma_lower: f64,
    gamma_upper: f64,
}

impl From<&TempBand> for BandJson {
    fn from(b: &TempBand) -> Self {
        Self {
            lo: b.lo(),
            hi: b.hi(),
            gamma_lower: b.gamma_lower(),
            gamma_upper: b.gamma_upper(),
        }
    }
}

fn write_fit_json(path: &Path, fit: &LoadedFit) -> Result<()> {
    let doc = json!({
        "n": fit.series.len(),
        "bandwidth": fit.model.smooth.h_used,
        "band": BandJson::from(&fit.band),
        "gamma_hat": fit.model.step.gamma_hat,
        "gamma_tilde": fit.model.smooth.gamma_tilde,
        "phi_tilde": fit.model.noise.phi_tilde,
        "sigma2_tilde": fit.model.noise.sigma2_tilde,
        "iterations": fit.model.step.iterations,
        "converged": fit.model.step.converged,
        "loss_trace": fit.model.step.loss_trace,
        "warnings": fit.warnings,
    });
    write_json(path, &doc)
}

fn write_curves_csv(path: &Path, fit: &LoadedFit) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "z,x,y,log_g_step,log_g_smooth,fitted_log_aar,residual")?;
    let series = &fit.series;
    let model = &fit.model;
    for i in 0..series.len() {
        let z = series.age()[i];
        let x = series.temp()[i];
        let y = series.log_rate()[i];
        let step = model.step.log_g_hat.levels()[i];
        let smooth = model.smooth.log_g_tilde.eval_or_nearest(z).0;
        let fitted = (1.0 + model.smooth.gamma_tilde * x).ln() + smooth;
        let resid = model.noise.residuals[i];
        writeln!(w, "{z},{x},{y},{step},{smooth},{fitted},{resid}")?;
    }
    Ok(())
}

pub fn cmd_fit(args: &FitArgs) -> Result<i32> {
    let started = Instant::now();
    let fit = load_and_fit(&args.common)?;
    let out = &args.common.out_dir;
    fs::create_dir_all(out)?;
    write_fit_json(&out.join("fit.json"), &fit)?;
    write_curves_csv(&out.join("curves.csv"), &fit)?;
    write_manifest(
        &out.join("manifest.json"),
        "fit",
        &[args.common.input.clone()],
        json!({
            "bandwidth": args.common.bandwidth,
            "rel_tol": args.common.rel_tol,
            "max_iters": args.common.max_iters,
        }),
        started,
    )?;
    println!(
        "fit: n = {}, gamma_tilde = {}, phi_tilde = {}, sigma2_tilde = {}",
        fit.series.len(),
        fit.model.smooth.gamma_tilde,
        fit.model.noise.phi_tilde,
        fit.model.noise.sigma2_tilde
    );
    Ok(if fit.model.step.converged {
        EXIT_OK
    } else {
        EXIT_CONVERGENCE
    })
}

pub fn cmd_bootstrap(args: &BootstrapArgs) -> Result<i32> {
    let started = Instant::now();
    let pool = thread_pool(args.threads)?;
    let fit = load_and_fit(&args.common)?;
    if args.replicates < 100 {
        eprintln!(
            "warning: only {} replicates; interval endpoints will be coarse",
            args.replicates
        );
    }
    let bcfg = BootstrapConfig::new(
        args.replicates,
        args.alpha,
        args.seed,
        args.noise_mode.into(),
    )?;
    let summary = pool.install(|| {
        run_bootstrap(
            &fit.series,
            &fit.model.smooth,
            &fit.model.noise,
            fit.smoothing,
            &fit.band,
            &fit.fit_cfg,
            &bcfg,
        )
    })?;

    let out = &args.common.out_dir;
    fs::create_dir_all(out)?;
    write_fit_json(&out.join("fit.json"), &fit)?;
    write_curves_csv(&out.join("curves.csv"), &fit)?;

    let z: Vec<f64> = fit.series.age().to_vec();
    let doc = json!({
        "n": fit.series.len(),
        "bandwidth": fit.model.smooth.h_used,
        "replicates": args.replicates,
        "alpha": args.alpha,
        "seed": args.seed,
        "noise_mode": match bcfg.noise_mode {
            NoiseMode::Ar1 => "ar1",
            NoiseMode::Differenced => "verbatim",
        },
        "gamma_tilde": fit.model.smooth.gamma_tilde,
        "se_gamma": summary.se_gamma,
        "ci_gamma": [summary.ci_gamma.0, summary.ci_gamma.1],
        "failed_replicates": summary.failed_replicates,
        "pointwise_ci_log_g": {
            "z": z,
            "lower": summary.pointwise_ci_log_g.iter().map(|c| c.0).collect::<Vec<f64>>(),
            "upper": summary.pointwise_ci_log_g.iter().map(|c| c.1).collect::<Vec<f64>>(),
        },
    });
    write_json(&out.join("bootstrap.json"), &doc)?;

    let mut w = BufWriter::new(File::create(out.join("replicates.csv"))?);
    writeln!(w, "replicate,gamma_star")?;
    for (i, g) in summary.gamma_reps.iter().enumerate() {
        writeln!(w, "{i},{g}")?;
    }
    drop(w);

    write_manifest(
        &out.join("manifest.json"),
        "bootstrap",
        &[args.common.input.clone()],
        json!({
            "bandwidth": args.common.bandwidth,
            "rel_tol": args.common.rel_tol,
            "max_iters": args.common.max_iters,
            "B": args.replicates,
            "alpha": args.alpha,
            "seed": args.seed,
            "threads": args.threads,
        }),
        started,
    )?;
    println!(
        "bootstrap: B = {}, se(gamma) = {:?}, ci = ({}, {})",
        args.replicates, summary.se_gamma, summary.ci_gamma.0, summary.ci_gamma.1
    );
    Ok(if fit.model.step.converged {
        EXIT_OK
    } else {
        EXIT_CONVERGENCE
    })
}

fn parse_h_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidConfig(format!(
            "--h-grid expects start:stop:step, got `{text}`"
        )));
    }
    let parse = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::InvalidConfig(format!("bad number `{s}` in --h-grid")))
    };
    let (start, stop, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
    if !(step > 0.0) || stop < start || start < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "--h-grid needs 0 <= start <= stop and step > 0, got `{text}`"
        )));
    }
    let mut grid = Vec::new();
    let mut h = start;
    while h <= stop + 1e-9 {
        grid.push(h);
        h += step;
    }
    Ok(grid)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let started = Instant::now();
    let pool = thread_pool(args.threads)?;
    let h_grid = match &args.h_grid {
        Some(text) => parse_h_grid(text)?,
        None => vec![args.h],
    };
    let mut merged = StudyResult::default();
    for &n in &args.n {
        let cfg = SimConfig {
            n,
            runs: args.runs,
            replicates: args.replicates,
            bandwidth: args.h,
            alpha: args.alpha,
            design_seed: args.design_seed,
            run_seed: args.seed,
            ..SimConfig::default()
        };
        let bias = pool.install(|| run_bias_sd_study(&cfg))?;
        merged.merge(bias);
        if !args.no_coverage {
            let coverage = pool.install(|| run_coverage_study(&cfg, &h_grid))?;
            merged.merge(coverage);
        }
    }

    let out = &args.out_dir;
    fs::create_dir_all(out)?;

    let mut w = BufWriter::new(File::create(out.join("table2.csv"))?);
    writeln!(
        w,
        "n,h,runs_completed,runs_failed,bias_gamma,sd_gamma,bias_phi,sd_phi,bias_sigma2,sd_sigma2"
    )?;
    for r in &merged.bias_sd {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.h,
            r.runs_completed,
            r.runs_failed,
            r.bias_gamma,
            r.sd_gamma,
            r.bias_phi,
            r.sd_phi,
            r.bias_sigma2,
            r.sd_sigma2
        )?;
    }
    drop(w);

    let mut w = BufWriter::new(File::create(out.join("logg_bias_sd.csv"))?);
    writeln!(w, "n,h,z,bias,sd")?;
    for curve in &merged.log_g_curves {
        for p in &curve.points {
            writeln!(w, "{},{},{},{},{}", curve.n, curve.h, p.z, p.bias, p.sd)?;
        }
    }
    drop(w);

    let mut w = BufWriter::new(File::create(out.join("coverage.csv"))?);
    writeln!(
        w,
        "n,h,runs_completed,runs_failed,coverage_gamma,mean_boot_se_gamma,direct_sd_gamma"
    )?;
    for r in &merged.coverage {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.n,
            r.h,
            r.runs_completed,
            r.runs_failed,
            r.coverage_gamma,
            r.mean_boot_se_gamma,
            r.direct_sd_gamma
        )?;
    }
    drop(w);

    let doc = json!({
        "n": args.n,
        "runs": args.runs,
        "B": args.replicates,
        "h": args.h,
        "h_grid": h_grid,
        "alpha": args.alpha,
        "seed": args.seed,
        "design_seed": args.design_seed,
        "result": merged,
    });
    write_json(&out.join("summary.json"), &doc)?;

    write_manifest(
        &out.join("manifest.json"),
        "simulate",
        &[],
        json!({
            "n": args.n,
            "runs": args.runs,
            "B": args.replicates,
            "h": args.h,
            "h_grid": args.h_grid,
            "alpha": args.alpha,
            "seed": args.seed,
            "design_seed": args.design_seed,
            "threads": args.threads,
        }),
        started,
    )?;
    println!(
        "simulate: {} bias/sd rows, {} coverage rows",
        merged.bias_sd.len(),
        merged.coverage.len()
    );
    Ok(EXIT_OK)
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::InvalidConfig("--threads must be >= 1".into()));
        }
        builder = builder.num_threads(t);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

fn write_json(path: &Path, doc: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, doc)
        .map_err(|e| Error::InvalidConfig(format!("serialize {}: {e}", path.display())))?;
    writeln!(w)?;
    Ok(())
}

fn write_manifest(
    path: &Path,
    command: &str,
    inputs: &[PathBuf],
    args_echo: serde_json::Value,
    started: Instant,
) -> Result<()> {
    let unix_time = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let doc = json!({
        "command": command,
        "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "args": args_echo,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "unix_time": unix_time,
    });
    write_json(path, &doc)
}
