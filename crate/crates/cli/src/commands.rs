//! Subcommands and their output files.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lambda_landscape::dynamics::PiecewiseControl;
use lambda_landscape::experiments::{derive_seed, random_control, run_ensemble, sweep_c0, EnsembleStats, SweepRow};
use lambda_landscape::optimize::{run, Method, RunRecord};
use lambda_landscape::perturbation::{escape_pulse, predict_delta_j, PerturbationTerms};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::output::{histogram_csv, sweep_csv, trajectory_csv, write_atomic, write_json};
use crate::verify::{run_verification, VerifyOptions, VerifyReport};
use crate::{CliError, EXIT_NOT_REACHED, EXIT_SUCCESS};

#[derive(Debug, Parser)]
#[command(name = "lambda-landscape", version, about = "Control-landscape experiments for a three-level Λ-atom")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// TOML experiment configuration.
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "recipe")]
    pub config: Option<PathBuf>,
    /// Built-in parameter set: fig2, fig3 or fig4.
    #[arg(long, global = true, value_name = "NAME")]
    pub recipe: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "grape|bfgs")]
    pub optimizer: Option<Method>,
    /// Penalty λ; replaces any observable given in the configuration.
    #[arg(long, global = true, value_name = "X")]
    pub lambda: Option<f64>,
    #[arg(long, global = true, value_name = "X")]
    pub c0: Option<f64>,
    /// Ensemble size L.
    #[arg(long, global = true, value_name = "L")]
    pub runs: Option<usize>,
    /// Iteration cap K_stop.
    #[arg(long, global = true, value_name = "K")]
    pub max_iter: Option<usize>,
    /// Objective tolerance I_err.
    #[arg(long, global = true, value_name = "I_ERR")]
    pub tol: Option<f64>,
    /// Any configuration field, e.g. `--set run.step=0.05`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_assignment)]
    pub set: Vec<(String, String)>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One optimizer run from a random (or zero) initial control.
    Optimize {
        /// Start from ε(t) = 0 instead of a random control.
        #[arg(long)]
        zero_init: bool,
    },
    /// L runs from random controls; statistics and histograms.
    Ensemble,
    /// Failure counts of GRAPE and BFGS ensembles over run.c0_list.
    Sweep,
    /// Dyson-series, scaling and gradient property checks.
    Verify {
        /// Set V12 = V21 to this value, bypassing validation.
        #[arg(long, value_name = "X")]
        inject_v12: Option<f64>,
        /// Replace every numerical threshold.
        #[arg(long, value_name = "X")]
        tolerance: Option<f64>,
    },
    /// Dyson terms and predicted δJ for the escape pulse or a given control.
    Perturb {
        /// Escape-pulse amplitude.
        #[arg(long, default_value_t = 1e-2, conflicts_with = "control")]
        alpha: f64,
        /// JSON list of {duration, amplitude} segments.
        #[arg(long, value_name = "PATH")]
        control: Option<PathBuf>,
    },
}

fn parse_assignment(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got '{s}'"))?;
    Ok((k.trim().to_owned(), v.trim().to_owned()))
}

impl CommonArgs {
    fn edits(&self) -> Vec<(String, String)> {
        let mut edits = Vec::new();
        let mut put = |k: &str, v: String| edits.push((k.to_owned(), v));
        if let Some(s) = self.seed {
            put("master_seed", s.to_string());
        }
        if let Some(d) = &self.out {
            put("output.dir", toml::Value::String(d.display().to_string()).to_string());
        }
        if let Some(m) = self.optimizer {
            put("run.optimizer", format!("\"{m}\""));
        }
        if let Some(x) = self.lambda {
            put("run.lambda", toml_float(x));
        }
        if let Some(x) = self.c0 {
            put("run.c0", toml_float(x));
        }
        if let Some(l) = self.runs {
            put("run.L", l.to_string());
        }
        if let Some(k) = self.max_iter {
            put("run.K_stop", k.to_string());
        }
        if let Some(x) = self.tol {
            put("run.I_err", toml_float(x));
        }
        edits.extend(self.set.iter().cloned());
        edits
    }

    /// Base configuration (file, recipe or defaults) with flag overrides,
    /// validated.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let base = match (&self.config, &self.recipe) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => ExperimentConfig::recipe(name)?,
            (None, None) => ExperimentConfig::default(),
        };
        let cfg = base.with_overrides(&self.edits())?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn toml_float(x: f64) -> String {
    toml::Value::Float(x).to_string()
}

/// `run.json`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    /// Generator seed of the initial control; `None` for the zero control.
    pub seed: Option<u64>,
    pub record: RunRecord,
}

/// `ensemble.json`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub config: ExperimentConfig,
    pub stats: EnsembleStats,
}

/// `sweep.json`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config: ExperimentConfig,
    pub grape: Vec<SweepRow>,
    pub bfgs: Vec<SweepRow>,
}

/// `verify.json`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub config: ExperimentConfig,
    pub inject_v12: Option<f64>,
    pub tolerance: Option<f64>,
    pub report: VerifyReport,
}

/// `perturb.json`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbSummary {
    pub control: PiecewiseControl,
    pub objective: f64,
    pub terms: PerturbationTerms,
}

fn out_path(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.output.dir.join(name)
}

fn io_out(e: std::io::Error) -> CliError {
    CliError::Io { path: PathBuf::from("<stdout>"), source: e }
}

/// Runs a parsed command line and returns the exit code; errors map to
/// exit code 1 in the caller.
pub fn run_cli(cli: &Cli, stdout: &mut dyn Write) -> Result<u8, CliError> {
    let cfg = cli.common.resolve()?;
    match &cli.command {
        Command::Optimize { zero_init } => cmd_optimize(&cfg, *zero_init, stdout),
        Command::Ensemble => cmd_ensemble(&cfg, stdout),
        Command::Sweep => cmd_sweep(&cfg, stdout),
        Command::Verify { inject_v12, tolerance } => {
            cmd_verify(&cfg, &VerifyOptions { inject_v12: *inject_v12, tolerance: *tolerance }, stdout)
        }
        Command::Perturb { alpha, control } => cmd_perturb(&cfg, *alpha, control.as_deref(), stdout),
    }
}

/// The random initial control is run 0 of the ensemble with the same
/// master seed.
pub fn cmd_optimize(cfg: &ExperimentConfig, zero_init: bool, stdout: &mut dyn Write) -> Result<u8, CliError> {
    let system = cfg.system()?;
    let (seed, initial) = if zero_init {
        (None, PiecewiseControl::zero(cfg.run.segments, cfg.run.horizon)?)
    } else {
        let seed = derive_seed(cfg.master_seed, 0);
        (Some(seed), random_control(cfg.run.c0, cfg.run.segments, cfg.run.horizon, seed)?)
    };
    let record = run(&system, &cfg.optimizer(), &initial)?;
    write_atomic(&out_path(cfg, "trajectory.csv"), &trajectory_csv(&record.trajectory))?;
    let summary = RunSummary { config: cfg.clone(), seed, record };
    write_json(&out_path(cfg, "run.json"), &summary)?;
    let r = &summary.record;
    writeln!(
        stdout,
        "{}: J = {:.10} after {} iterations ({:?})",
        r.method, r.final_objective, r.iterations_used, r.termination_reason
    )
    .map_err(io_out)?;
    Ok(if r.succeeded { EXIT_SUCCESS } else { EXIT_NOT_REACHED })
}

pub fn cmd_ensemble(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<u8, CliError> {
    let system = cfg.system()?;
    let stats = run_ensemble(&system, &cfg.optimizer(), &cfg.ensemble_spec())?;
    write_atomic(
        &out_path(cfg, "initial_objective_histogram.csv"),
        &histogram_csv(&stats.initial_objective_histogram),
    )?;
    write_atomic(&out_path(cfg, "iteration_histogram.csv"), &histogram_csv(&stats.iteration_histogram))?;
    match stats.iterations {
        Some(s) => writeln!(
            stdout,
            "L = {}, c0 = {}: N_fail = {}, iterations min {} max {} mean {:.2} std {:.2}",
            stats.runs, stats.c0, stats.n_fail, s.min, s.max, s.mean, s.std_dev
        ),
        None => {
            writeln!(stdout, "L = {}, c0 = {}: N_fail = {} (no successful runs)", stats.runs, stats.c0, stats.n_fail)
        }
    }
    .map_err(io_out)?;
    write_json(&out_path(cfg, "ensemble.json"), &EnsembleSummary { config: cfg.clone(), stats })?;
    Ok(EXIT_SUCCESS)
}

pub fn cmd_sweep(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<u8, CliError> {
    let system = cfg.system()?;
    let spec = cfg.ensemble_spec();
    let c0s = &cfg.run.c0_list;
    let grape = sweep_c0(&system, &cfg.optimizer().with_method(Method::Grape), c0s, &spec)?;
    let bfgs = sweep_c0(&system, &cfg.optimizer().with_method(Method::Bfgs), c0s, &spec)?;
    write_atomic(&out_path(cfg, "sweep.csv"), &sweep_csv(&grape, &bfgs))?;
    for (g, b) in grape.iter().zip(&bfgs) {
        writeln!(stdout, "c0 = {:<5} N_fail grape {:>4} bfgs {:>4}", g.c0, g.n_fail, b.n_fail).map_err(io_out)?;
    }
    write_json(&out_path(cfg, "sweep.json"), &SweepSummary { config: cfg.clone(), grape, bfgs })?;
    Ok(EXIT_SUCCESS)
}

pub fn cmd_verify(cfg: &ExperimentConfig, options: &VerifyOptions, stdout: &mut dyn Write) -> Result<u8, CliError> {
    let report = run_verification(cfg, options)?;
    for line in report.lines() {
        writeln!(stdout, "{line}").map_err(io_out)?;
    }
    let passed = report.passed;
    let summary =
        VerifySummary { config: cfg.clone(), inject_v12: options.inject_v12, tolerance: options.tolerance, report };
    write_json(&out_path(cfg, "verify.json"), &summary)?;
    Ok(if passed { EXIT_SUCCESS } else { EXIT_NOT_REACHED })
}

pub fn cmd_perturb(
    cfg: &ExperimentConfig,
    alpha: f64,
    control: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<u8, CliError> {
    let system = cfg.system()?;
    let control = match control {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => escape_pulse(&system, alpha, cfg.run.horizon)?,
    };
    let terms = predict_delta_j(&system, &control)?;
    let objective = lambda_landscape::dynamics::objective(&system, &control)?;
    let summary = PerturbSummary { control, objective, terms };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    writeln!(stdout, "{text}").map_err(io_out)?;
    write_json(&out_path(cfg, "perturb.json"), &summary)?;
    Ok(EXIT_SUCCESS)
}
