//! Local ascent on the piecewise-constant control vector.
//!
//! Two methods climb `J(C)`:
//!
//! * GRAPE: `C ← C + ε ∇J(C)` with a fixed step and the raw gradient.
//! * BFGS: quasi-Newton ascent (minimizing `-J`) with a strong-Wolfe line
//!   search.
//!
//! Both stop as soon as `J ≥ 1 - I_err`, or at `K_stop` iterations; BFGS
//! additionally stops when the gradient infinity-norm drops below
//! `grad_tol` or the line search cannot make progress.

mod bfgs;
mod grape;
mod line_search;

use serde::{Deserialize, Serialize};

use crate::dynamics::{objective_and_gradient, LambdaSystem, PiecewiseControl};
use crate::error::{Error, Result};

pub use bfgs::{bfgs, BfgsOutcome};
pub use grape::grape;
pub use line_search::{strong_wolfe, LinePoint, LineSearchParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Grape,
    Bfgs,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Grape => "grape",
            Method::Bfgs => "bfgs",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grape" => Ok(Method::Grape),
            "bfgs" => Ok(Method::Bfgs),
            other => Err(Error::InvalidConfig(format!("unknown optimizer '{other}' (expected grape or bfgs)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: Method,
    /// GRAPE step `ε`.
    pub step: f64,
    /// `K_stop`.
    pub max_iterations: usize,
    /// `I_err`; a run succeeds once `J ≥ 1 - I_err`.
    pub objective_tolerance: f64,
    /// BFGS gradient infinity-norm threshold.
    pub grad_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { method: Method::Grape, step: 0.1, max_iterations: 1000, objective_tolerance: 1e-5, grad_tol: 1e-6 }
    }
}

impl OptimizerConfig {
    pub fn grape(step: f64, max_iterations: usize, objective_tolerance: f64) -> Self {
        Self { method: Method::Grape, step, max_iterations, objective_tolerance, ..Self::default() }
    }

    pub fn bfgs(max_iterations: usize, objective_tolerance: f64) -> Self {
        Self { method: Method::Bfgs, max_iterations, objective_tolerance, ..Self::default() }
    }

    pub fn with_method(&self, method: Method) -> Self {
        Self { method, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.objective_tolerance > 0.0 && self.objective_tolerance < 1.0) {
            return bad(format!("objective tolerance I_err must lie in (0, 1), got {}", self.objective_tolerance));
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return bad(format!("step must be > 0, got {}", self.step));
        }
        if !(self.grad_tol > 0.0) {
            return bad(format!("grad_tol must be > 0, got {}", self.grad_tol));
        }
        Ok(())
    }

    /// `J_stop = 1 - I_err`
    pub fn target(&self) -> f64 {
        1.0 - self.objective_tolerance
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ObjectiveReached,
    IterationCap,
    GradientStalled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    pub objective: f64,
    /// ℓ2 norm of `∇J`.
    pub grad_norm: f64,
}

/// Raw result of an ascent on a [`Landscape`].
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub trajectory: Vec<TrajectoryPoint>,
    pub final_point: Vec<f64>,
    pub final_objective: f64,
    pub iterations_used: usize,
    pub termination: Termination,
}

/// A function to maximize, with its gradient.
pub trait Landscape {
    fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<F> Landscape for F
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(x)
    }
}

/// `J` as a function of the amplitudes on a fixed segment grid.
pub struct ControlLandscape<'a> {
    system: &'a LambdaSystem,
    grid: PiecewiseControl,
}

impl<'a> ControlLandscape<'a> {
    pub fn new(system: &'a LambdaSystem, grid: PiecewiseControl) -> Self {
        Self { system, grid }
    }
}

impl Landscape for ControlLandscape<'_> {
    fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        objective_and_gradient(self.system, &self.grid.with_amplitudes(x))
    }
}

/// One optimizer run on a control problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub initial_control: PiecewiseControl,
    pub final_control: PiecewiseControl,
    pub trajectory: Vec<TrajectoryPoint>,
    pub iterations_used: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub succeeded: bool,
    pub termination_reason: Termination,
}

impl RunRecord {
    fn from_trace(method: Method, config: &OptimizerConfig, initial: &PiecewiseControl, trace: Trace) -> Self {
        let initial_objective = trace.trajectory.first().map_or(f64::NAN, |p| p.objective);
        Self {
            method,
            final_control: initial.with_amplitudes(&trace.final_point),
            initial_control: initial.clone(),
            iterations_used: trace.iterations_used,
            initial_objective,
            final_objective: trace.final_objective,
            succeeded: trace.final_objective >= config.target(),
            termination_reason: trace.termination,
            trajectory: trace.trajectory,
        }
    }
}

fn expect_method(config: &OptimizerConfig, method: Method) -> Result<()> {
    config.validate()?;
    if config.method != method {
        return Err(Error::InvalidConfig(format!("expected a {method} configuration, got {}", config.method)));
    }
    Ok(())
}

/// GRAPE from `initial`, keeping its segment grid.
pub fn grape_run(system: &LambdaSystem, config: &OptimizerConfig, initial: &PiecewiseControl) -> Result<RunRecord> {
    expect_method(config, Method::Grape)?;
    let landscape = ControlLandscape::new(system, initial.clone());
    let trace = grape(&landscape, config, &initial.amplitudes())?;
    Ok(RunRecord::from_trace(Method::Grape, config, initial, trace))
}

/// BFGS from `initial`, keeping its segment grid.
pub fn bfgs_run(system: &LambdaSystem, config: &OptimizerConfig, initial: &PiecewiseControl) -> Result<RunRecord> {
    expect_method(config, Method::Bfgs)?;
    let landscape = ControlLandscape::new(system, initial.clone());
    let outcome = bfgs(&landscape, config, &initial.amplitudes())?;
    Ok(RunRecord::from_trace(Method::Bfgs, config, initial, outcome.trace))
}

/// Dispatches on `config.method`.
pub fn run(system: &LambdaSystem, config: &OptimizerConfig, initial: &PiecewiseControl) -> Result<RunRecord> {
    match config.method {
        Method::Grape => grape_run(system, config, initial),
        Method::Bfgs => bfgs_run(system, config, initial),
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_control(seed: u64, c0: f64) -> PiecewiseControl {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps: Vec<f64> = (0..200).map(|_| rng.gen_range(-c0..=c0)).collect();
        PiecewiseControl::uniform(&amps, 10.0).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let base = OptimizerConfig::default();
        for bad in [
            OptimizerConfig { objective_tolerance: 0.0, ..base.clone() },
            OptimizerConfig { objective_tolerance: 1.0, ..base.clone() },
            OptimizerConfig { max_iterations: 0, ..base.clone() },
            OptimizerConfig { step: -0.1, ..base.clone() },
            OptimizerConfig { grad_tol: f64::NAN, ..base },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert_eq!("BFGS".parse::<Method>().unwrap(), Method::Bfgs);
        assert!("krotov".parse::<Method>().is_err());
    }

    #[test]
    fn method_mismatch_is_rejected() {
        let sys = LambdaSystem::reference(0.0).unwrap();
        let init = random_control(0, 1.0);
        assert!(grape_run(&sys, &OptimizerConfig::bfgs(10, 0.1), &init).is_err());
        assert!(bfgs_run(&sys, &OptimizerConfig::grape(0.1, 10, 0.1), &init).is_err());
    }

    #[test]
    fn grape_unpenalized_transfer_succeeds() {
        let sys = LambdaSystem::reference(0.0).unwrap();
        let cfg = OptimizerConfig::grape(0.1, 2000, 1e-5);
        let rec = grape_run(&sys, &cfg, &random_control(1, 1.0)).unwrap();
        assert!(rec.succeeded);
        assert_eq!(rec.termination_reason, Termination::ObjectiveReached);
        assert!(rec.final_objective >= 0.99999);
        assert!((100..=1400).contains(&rec.iterations_used), "{}", rec.iterations_used);
        assert_eq!(rec.trajectory.len(), rec.iterations_used + 1);
        assert_eq!(rec.trajectory.last().unwrap().objective, rec.final_objective);
    }

    #[test]
    fn grape_stuck_at_zero_control() {
        let sys = LambdaSystem::reference(5.0).unwrap();
        let cfg = OptimizerConfig::grape(0.1, 100, 0.1);
        let zero = PiecewiseControl::zero(200, 10.0).unwrap();
        let rec = grape_run(&sys, &cfg, &zero).unwrap();
        assert_eq!(rec.termination_reason, Termination::IterationCap);
        assert!(!rec.succeeded);
        assert_eq!(rec.iterations_used, 100);
        assert!(rec.trajectory.iter().all(|p| p.objective == 0.0 && p.grad_norm == 0.0));
        assert_eq!(rec.final_control, zero);
    }

    #[test]
    fn grape_fails_near_trap_with_penalty() {
        let sys = LambdaSystem::reference(5.0).unwrap();
        let cfg = OptimizerConfig::grape(0.1, 1000, 0.1);
        let rec = grape_run(&sys, &cfg, &random_control(2, 0.1)).unwrap();
        assert!(!rec.succeeded);
        assert_eq!(rec.termination_reason, Termination::IterationCap);
    }

    #[test]
    fn grape_small_step_is_monotone() {
        let sys = LambdaSystem::reference(0.0).unwrap();
        let cfg = OptimizerConfig::grape(1e-3, 100, 1e-5);
        let rec = grape_run(&sys, &cfg, &random_control(3, 1.0)).unwrap();
        assert_eq!(rec.trajectory.len(), 101);
        for w in rec.trajectory.windows(2) {
            assert!(w[1].objective >= w[0].objective);
        }
    }

    #[test]
    fn bfgs_zero_control_stalls_immediately() {
        let sys = LambdaSystem::reference(5.0).unwrap();
        let cfg = OptimizerConfig::bfgs(1000, 0.1);
        let rec = bfgs_run(&sys, &cfg, &PiecewiseControl::zero(200, 10.0).unwrap()).unwrap();
        assert_eq!(rec.termination_reason, Termination::GradientStalled);
        assert_eq!(rec.iterations_used, 0);
        assert!(!rec.succeeded);
    }

    #[test]
    fn bfgs_unpenalized_transfer_succeeds() {
        let sys = LambdaSystem::reference(0.0).unwrap();
        let cfg = OptimizerConfig::bfgs(1000, 1e-5);
        let rec = bfgs_run(&sys, &cfg, &random_control(4, 1.0)).unwrap();
        assert!(rec.succeeded, "{:?} J = {}", rec.termination_reason, rec.final_objective);
    }

    #[test]
    fn runs_are_deterministic() {
        let sys = LambdaSystem::reference(5.0).unwrap();
        let init = random_control(5, 0.5);
        for cfg in [OptimizerConfig::grape(0.1, 50, 0.1), OptimizerConfig::bfgs(30, 0.1)] {
            let a = run(&sys, &cfg, &init).unwrap();
            let b = run(&sys, &cfg, &init).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn success_flag_matches_final_objective() {
        let sys = LambdaSystem::reference(5.0).unwrap();
        for (seed, c0) in [(6, 1.0), (7, 0.3), (8, 0.1)] {
            for cfg in [OptimizerConfig::grape(0.1, 300, 0.1), OptimizerConfig::bfgs(100, 0.1)] {
                let rec = run(&sys, &cfg, &random_control(seed, c0)).unwrap();
                let last = rec.trajectory.last().unwrap().objective;
                assert_eq!(last, rec.final_objective);
                assert_eq!(rec.succeeded, rec.final_objective >= cfg.target());
            }
        }
    }
}
