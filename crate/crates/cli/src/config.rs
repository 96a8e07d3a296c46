//! Experiment configuration: a TOML file (or a built-in recipe) plus
//! `section.key=value` overrides from the command line.

use std::path::{Path, PathBuf};

use lambda_landscape::dynamics::{LambdaSystem, DEFAULT_ENERGIES, DEFAULT_V13, DEFAULT_V23};
use lambda_landscape::experiments::EnsembleSpec;
use lambda_landscape::optimize::{Method, OptimizerConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub system: SystemConfig,
    pub run: RunConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub energies: [f64; 3],
    pub v13: f64,
    pub v23: f64,
    /// Raw diagonal observable. When absent it is `(0, 1, -λ)` with `λ`
    /// from `run.lambda`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observable: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M")]
    pub segments: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub optimizer: Method,
    pub step: f64,
    #[serde(rename = "K_stop")]
    pub max_iterations: usize,
    #[serde(rename = "I_err")]
    pub objective_tolerance: f64,
    pub grad_tol: f64,
    pub c0: f64,
    pub c0_list: Vec<f64>,
    #[serde(rename = "L")]
    pub runs: usize,
    pub alpha_list: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self { energies: DEFAULT_ENERGIES, v13: DEFAULT_V13, v23: DEFAULT_V23, observable: None }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        Self {
            horizon: 10.0,
            segments: 200,
            lambda: None,
            optimizer: opt.method,
            step: opt.step,
            max_iterations: opt.max_iterations,
            objective_tolerance: opt.objective_tolerance,
            grad_tol: opt.grad_tol,
            c0: 1.0,
            c0_list: Vec::new(),
            runs: 100,
            alpha_list: vec![1e-3, 2e-3, 4e-3, 8e-3],
        }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

pub const RECIPES: [&str; 3] = ["fig2", "fig3", "fig4"];

impl ExperimentConfig {
    /// Built-in parameter sets; `configs/<name>.toml` holds the same values.
    pub fn recipe(name: &str) -> Result<Self, CliError> {
        let mut cfg = Self { master_seed: 2024, ..Self::default() };
        cfg.output.dir = PathBuf::from("out").join(name);
        let run = &mut cfg.run;
        match name {
            // single unpenalized GRAPE run
            "fig2" => {
                run.lambda = Some(0.0);
                run.objective_tolerance = 1e-5;
                run.max_iterations = 2000;
                run.runs = 1;
            }
            // iteration histogram of the unpenalized problem
            "fig3" => {
                run.lambda = Some(0.0);
                run.objective_tolerance = 1e-5;
                run.max_iterations = 2000;
                run.runs = 1000;
            }
            // failure counts against c0 with the penalized objective
            "fig4" => {
                run.lambda = Some(5.0);
                run.objective_tolerance = 0.1;
                run.max_iterations = 1000;
                run.runs = 100;
                run.c0_list = (1..=10).map(|k| k as f64 / 10.0).collect();
            }
            other => {
                return Err(CliError::Config(format!("unknown recipe '{other}' (available: {})", RECIPES.join(", "))))
            }
        }
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Applies `section.key=value` edits; values use TOML syntax, with bare
    /// words taken as strings. Setting `run.lambda` drops an explicit
    /// observable so the penalty takes effect.
    pub fn with_overrides(&self, edits: &[(String, String)]) -> Result<Self, CliError> {
        if edits.is_empty() {
            return Ok(self.clone());
        }
        let mut table = toml::Table::try_from(self).expect("config always serializes");
        for (key, raw) in edits {
            let value = parse_value(raw);
            let path: Vec<&str> = key.split('.').collect();
            if path == ["run", "lambda"] {
                if let Some(toml::Value::Table(system)) = table.get_mut("system") {
                    system.remove("observable");
                }
            }
            set_path(&mut table, &path, value).map_err(|m| CliError::Config(format!("override {key}: {m}")))?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("invalid override: {}", e.message())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.system()?;
        self.optimizer().validate()?;
        let run = &self.run;
        if !(run.horizon > 0.0) || !run.horizon.is_finite() {
            return bad(format!("run.T must be > 0, got {}", run.horizon));
        }
        if run.segments < 1 {
            return bad("run.M must be at least 1".into());
        }
        if run.runs < 1 {
            return bad("run.L must be at least 1".into());
        }
        if let Some(c0) = std::iter::once(&run.c0).chain(&run.c0_list).find(|c| !(**c > 0.0) || !c.is_finite()) {
            return bad(format!("c0 values must be > 0, got {c0}"));
        }
        if let Some(a) = run.alpha_list.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return bad(format!("run.alpha_list values must be > 0, got {a}"));
        }
        Ok(())
    }

    pub fn system(&self) -> Result<LambdaSystem, CliError> {
        let s = &self.system;
        let system = match (s.observable, self.run.lambda) {
            (Some(raw), None) => LambdaSystem::with_raw_observable(s.energies, s.v13, s.v23, raw)?,
            (Some(raw), Some(lambda)) => {
                let sys = LambdaSystem::with_raw_observable(s.energies, s.v13, s.v23, raw)?;
                if (sys.penalty() - lambda).abs() > 1e-12 * lambda.abs().max(1.0) {
                    return Err(CliError::Config(format!(
                        "system.observable implies λ = {} but run.lambda = {lambda}",
                        sys.penalty()
                    )));
                }
                sys
            }
            (None, lambda) => LambdaSystem::new(s.energies, s.v13, s.v23, lambda.unwrap_or(0.0))?,
        };
        Ok(system)
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        let r = &self.run;
        OptimizerConfig {
            method: r.optimizer,
            step: r.step,
            max_iterations: r.max_iterations,
            objective_tolerance: r.objective_tolerance,
            grad_tol: r.grad_tol,
        }
    }

    pub fn ensemble_spec(&self) -> EnsembleSpec {
        EnsembleSpec {
            runs: self.run.runs,
            c0: self.run.c0,
            num_segments: self.run.segments,
            horizon: self.run.horizon,
            master_seed: self.master_seed,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

fn set_path(table: &mut toml::Table, path: &[&str], value: toml::Value) -> Result<(), String> {
    match path {
        [] => Err("empty key".into()),
        [leaf] => {
            table.insert((*leaf).to_owned(), value);
            Ok(())
        }
        [head, rest @ ..] => {
            let entry = table.entry((*head).to_owned()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            match entry {
                toml::Value::Table(inner) => set_path(inner, rest, value),
                _ => Err(format!("'{head}' is not a section")),
            }
        }
    }
}
