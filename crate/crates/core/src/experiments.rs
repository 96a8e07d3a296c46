//! Seeded ensemble studies: random initial controls, failure counts,
//! iteration statistics, `c0` sweeps and the quartic-growth scaling fit.
//!
//! Run `i` of an ensemble draws its control from a generator seeded with
//! `SHA-256(master_seed ‖ i)`, so runs can execute in any order (or in
//! parallel) and the aggregate is bit-identical.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{objective, LambdaSystem, PiecewiseControl};
use crate::error::{Error, Result};
use crate::optimize::{run, OptimizerConfig, Termination};
use crate::perturbation::{escape_pulse, predict_delta_j};

/// Bin count for both ensemble histograms.
pub const HISTOGRAM_BINS: usize = 25;

/// Per-run seed from the master seed and run index.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// `M` equal segments on `[0, T]` with amplitudes i.i.d. uniform on
/// `[-c0, c0]`.
pub fn random_control(c0: f64, num_segments: usize, horizon: f64, seed: u64) -> Result<PiecewiseControl> {
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(Error::InvalidConfig(format!("c0 must be > 0, got {c0}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let amps: Vec<f64> = (0..num_segments).map(|_| rng.gen_range(-c0..=c0)).collect();
    PiecewiseControl::uniform(&amps, horizon)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins over the observed `[min, max]`. A single distinct
    /// value gets the unit-width range centred on it; no values give all
    /// edges at zero.
    pub fn equal_width(values: &[f64], bins: usize) -> Self {
        assert!(bins >= 1, "histogram needs at least one bin");
        let mut counts = vec![0; bins];
        if values.is_empty() {
            return Self { edges: vec![0.0; bins + 1], counts };
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if max > min { (min, max) } else { (min - 0.5, min + 0.5) };
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|k| if k == bins { hi } else { lo + k as f64 * width }).collect();
        for &v in values {
            let k = (((v - lo) / width).floor() as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `(left, right, count)` rows.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.counts.iter().enumerate().map(|(k, &c)| (self.edges[k], self.edges[k + 1], c))
    }
}

/// Min, max, mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std_dev: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            std_dev: var.sqrt(),
        })
    }
}

/// What an ensemble keeps from each run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub index: usize,
    pub seed: u64,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations_used: usize,
    pub succeeded: bool,
    pub termination: Termination,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub runs: usize,
    pub c0: f64,
    pub n_fail: usize,
    /// Over successful runs only; `None` when every run failed.
    pub iterations: Option<Summary>,
    /// Initial `J` of all runs.
    pub initial_objective_histogram: Histogram,
    /// Iterations of successful runs.
    pub iteration_histogram: Histogram,
    pub seeds: Vec<u64>,
    pub outcomes: Vec<RunOutcome>,
}

impl EnsembleStats {
    /// Aggregates outcomes given in run-index order.
    pub fn from_outcomes(c0: f64, outcomes: Vec<RunOutcome>) -> Self {
        let initial: Vec<f64> = outcomes.iter().map(|o| o.initial_objective).collect();
        let iters: Vec<f64> = outcomes.iter().filter(|o| o.succeeded).map(|o| o.iterations_used as f64).collect();
        Self {
            runs: outcomes.len(),
            c0,
            n_fail: outcomes.len() - iters.len(),
            iterations: Summary::of(&iters),
            initial_objective_histogram: Histogram::equal_width(&initial, HISTOGRAM_BINS),
            iteration_histogram: Histogram::equal_width(&iters, HISTOGRAM_BINS),
            seeds: outcomes.iter().map(|o| o.seed).collect(),
            outcomes,
        }
    }
}

/// Ensemble parameters shared by every run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub runs: usize,
    pub c0: f64,
    pub num_segments: usize,
    pub horizon: f64,
    pub master_seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon when the `parallel` feature is enabled, sequential otherwise.
    #[default]
    Parallel,
}

fn single_run(
    system: &LambdaSystem,
    config: &OptimizerConfig,
    spec: &EnsembleSpec,
    index: usize,
) -> Result<RunOutcome> {
    let seed = derive_seed(spec.master_seed, index as u64);
    let initial = random_control(spec.c0, spec.num_segments, spec.horizon, seed)?;
    let rec = run(system, config, &initial)?;
    Ok(RunOutcome {
        index,
        seed,
        initial_objective: rec.initial_objective,
        final_objective: rec.final_objective,
        iterations_used: rec.iterations_used,
        succeeded: rec.succeeded,
        termination: rec.termination_reason,
    })
}

fn collect_outcomes(
    system: &LambdaSystem,
    config: &OptimizerConfig,
    spec: &EnsembleSpec,
    execution: Execution,
) -> Result<Vec<RunOutcome>> {
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..spec.runs).into_par_iter().map(|i| single_run(system, config, spec, i)).collect()
        }
        _ => (0..spec.runs).map(|i| single_run(system, config, spec, i)).collect(),
    }
}

fn validate_spec(spec: &EnsembleSpec) -> Result<()> {
    if spec.runs < 1 {
        return Err(Error::InvalidConfig("an ensemble needs at least one run".into()));
    }
    if spec.num_segments < 1 {
        return Err(Error::InvalidConfig("M must be at least 1".into()));
    }
    if !(spec.horizon > 0.0) || !spec.horizon.is_finite() {
        return Err(Error::InvalidConfig(format!("T must be > 0, got {}", spec.horizon)));
    }
    if !(spec.c0 > 0.0) || !spec.c0.is_finite() {
        return Err(Error::InvalidConfig(format!("c0 must be > 0, got {}", spec.c0)));
    }
    Ok(())
}

pub fn run_ensemble_with(
    system: &LambdaSystem,
    config: &OptimizerConfig,
    spec: &EnsembleSpec,
    execution: Execution,
) -> Result<EnsembleStats> {
    validate_spec(spec)?;
    config.validate()?;
    // collect() keeps index order regardless of scheduling
    let outcomes = collect_outcomes(system, config, spec, execution)?;
    Ok(EnsembleStats::from_outcomes(spec.c0, outcomes))
}

pub fn run_ensemble(system: &LambdaSystem, config: &OptimizerConfig, spec: &EnsembleSpec) -> Result<EnsembleStats> {
    run_ensemble_with(system, config, spec, Execution::default())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub c0: f64,
    pub n_fail: usize,
    /// Over successful runs; `None` if all failed.
    pub mean_iterations: Option<f64>,
}

/// One ensemble per `c0`. Every ensemble reuses `spec.master_seed`, so run
/// `i` at different `c0` starts from the same random shape, rescaled.
pub fn sweep_c0(
    system: &LambdaSystem,
    config: &OptimizerConfig,
    c0_values: &[f64],
    spec: &EnsembleSpec,
) -> Result<Vec<SweepRow>> {
    c0_values
        .iter()
        .map(|&c0| {
            let stats = run_ensemble(system, config, &EnsembleSpec { c0, ..spec.clone() })?;
            Ok(SweepRow { c0, n_fail: stats.n_fail, mean_iterations: stats.iterations.map(|s| s.mean) })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub alphas: Vec<f64>,
    pub objectives: Vec<f64>,
    pub predictions: Vec<f64>,
    /// `|J - δJ_pred|`
    pub residuals: Vec<f64>,
    pub main_slope: f64,
    pub remainder_slope: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Objective along the escape pulse family and its fit against `α`.
/// `J(0) = 0` for the reference system, so `J` itself is the variation.
pub fn quartic_scaling_study(system: &LambdaSystem, alphas: &[f64], horizon: f64) -> Result<ScalingStudy> {
    if alphas.len() < 2 {
        return Err(Error::InvalidConfig("the scaling fit needs at least two amplitudes".into()));
    }
    let mut objectives = Vec::with_capacity(alphas.len());
    let mut predictions = Vec::with_capacity(alphas.len());
    let mut residuals = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let pulse = escape_pulse(system, alpha, horizon)?;
        let j = objective(system, &pulse)?;
        let predicted = predict_delta_j(system, &pulse)?.delta_j_predicted;
        objectives.push(j);
        predictions.push(predicted);
        residuals.push((j - predicted).abs());
    }
    Ok(ScalingStudy {
        main_slope: log_log_slope(alphas, &objectives),
        remainder_slope: log_log_slope(alphas, &residuals),
        alphas: alphas.to_vec(),
        objectives,
        predictions,
        residuals,
    })
}
