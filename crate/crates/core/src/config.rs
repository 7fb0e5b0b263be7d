//! Experiment configuration: the JSON document consumed by the CLI, with
//! defaults, validation, and field-addressed error reporting.
//!
//! Schema (only `market` and `gencos` are required):
//!
//! ```json
//! {
//!   "market":  { "lambda": 102.0, "alpha": 0.04, "lambda_spread": 2.0 },
//!   "gencos": [
//!     { "name": "x", "a": 0.001, "b": 2.0, "c": 10000.0, "p_max": 2000.0 },
//!     { "name": "y", "a": 0.002, "b": 3.0, "c": 11000.0, "p_max": 1800.0 }
//!   ],
//!   "n_param_sets": 4,
//!   "n_runs_per_set": 20,
//!   "n_iterations": 500,
//!   "mode": "both",
//!   "seed": 42,
//!   "out_dir": "out",
//!   "learning": {
//!     "learning_rate": 0.5, "discount": 0.0,
//!     "temperature": 0.5, "temperature_decay": 0.95, "temperature_floor": 0.01
//!   },
//!   "traditional": { "action_step": 50.0 },
//!   "dichotomy": {
//!     "threshold": 0.9, "stop_width": 8.0,
//!     "max_inner_iterations": 40, "max_rounds": 12
//!   }
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{GenCoParams, MarketParams};
use crate::qlearn::LearningParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config file {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
}

fn field_err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Which learner families an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Traditional,
    Dichotomy,
    Both,
}

impl Mode {
    pub fn includes_traditional(&self) -> bool {
        matches!(self, Mode::Traditional | Mode::Both)
    }

    pub fn includes_dichotomy(&self) -> bool {
        matches!(self, Mode::Dichotomy | Mode::Both)
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "traditional" => Ok(Mode::Traditional),
            "dichotomy" => Ok(Mode::Dichotomy),
            "both" => Ok(Mode::Both),
            other => Err(format!(
                "unknown mode `{other}` (expected traditional|dichotomy|both)"
            )),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Traditional => "traditional",
            Mode::Dichotomy => "dichotomy",
            Mode::Both => "both",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub lambda: f64,
    pub alpha: f64,
    #[serde(default = "default_lambda_spread")]
    pub lambda_spread: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenCoSection {
    pub name: String,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraditionalSection {
    pub action_step: f64,
}

impl Default for TraditionalSection {
    fn default() -> Self {
        Self { action_step: 50.0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DichotomySection {
    pub threshold: f64,
    pub stop_width: f64,
    pub max_inner_iterations: usize,
    pub max_rounds: usize,
}

impl Default for DichotomySection {
    fn default() -> Self {
        Self {
            threshold: 0.9,
            stop_width: 8.0,
            max_inner_iterations: 40,
            max_rounds: 12,
        }
    }
}

fn default_lambda_spread() -> f64 {
    2.0
}
fn default_n_param_sets() -> usize {
    4
}
fn default_n_runs_per_set() -> usize {
    20
}
fn default_n_iterations() -> usize {
    500
}
fn default_mode() -> Mode {
    Mode::Both
}
fn default_seed() -> u64 {
    42
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// The full experiment description, mirroring the JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub market: MarketSection,
    pub gencos: Vec<GenCoSection>,
    #[serde(default = "default_n_param_sets")]
    pub n_param_sets: usize,
    #[serde(default = "default_n_runs_per_set")]
    pub n_runs_per_set: usize,
    #[serde(default = "default_n_iterations")]
    pub n_iterations: usize,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub learning: LearningParams,
    #[serde(default)]
    pub traditional: TraditionalSection,
    #[serde(default)]
    pub dichotomy: DichotomySection,
}

impl ExperimentConfig {
    /// Reference two-producer parameter set, also bundled as configs/reference.json.
    pub fn reference() -> Self {
        Self {
            market: MarketSection {
                lambda: 102.0,
                alpha: 0.04,
                lambda_spread: 2.0,
            },
            gencos: vec![
                GenCoSection {
                    name: "x".into(),
                    a: 0.001,
                    b: 2.0,
                    c: 10000.0,
                    p_max: 2000.0,
                },
                GenCoSection {
                    name: "y".into(),
                    a: 0.002,
                    b: 3.0,
                    c: 11000.0,
                    p_max: 1800.0,
                },
            ],
            n_param_sets: default_n_param_sets(),
            n_runs_per_set: default_n_runs_per_set(),
            n_iterations: default_n_iterations(),
            mode: default_mode(),
            seed: default_seed(),
            out_dir: default_out_dir(),
            learning: LearningParams::default(),
            traditional: TraditionalSection::default(),
            dichotomy: DichotomySection::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let config: Self = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn market_params(&self) -> MarketParams {
        MarketParams {
            lambda: self.market.lambda,
            alpha: self.market.alpha,
        }
    }

    pub fn genco_params(&self, index: usize) -> GenCoParams {
        let g = &self.gencos[index];
        GenCoParams {
            a: g.a,
            b: g.b,
            c: g.c,
            p_max: g.p_max,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        MarketParams::new(self.market.lambda, self.market.alpha)
            .map_err(|e| field_err("market", e.to_string()))?;
        if !(self.market.lambda_spread >= 0.0) || !self.market.lambda_spread.is_finite() {
            return Err(field_err(
                "market.lambda_spread",
                format!("must be >= 0 and finite, got {}", self.market.lambda_spread),
            ));
        }
        if self.market.lambda - self.market.lambda_spread <= 0.0 {
            return Err(field_err(
                "market.lambda_spread",
                "perturbation band must keep lambda positive",
            ));
        }
        if self.gencos.len() != 2 {
            return Err(field_err(
                "gencos",
                format!("exactly two GenCos are required, got {}", self.gencos.len()),
            ));
        }
        for (i, g) in self.gencos.iter().enumerate() {
            GenCoParams::new(g.a, g.b, g.c, g.p_max)
                .map_err(|e| field_err(&format!("gencos[{i}]"), e.to_string()))?;
        }
        for (field, value) in [
            ("n_param_sets", self.n_param_sets),
            ("n_runs_per_set", self.n_runs_per_set),
            ("n_iterations", self.n_iterations),
            ("dichotomy.max_inner_iterations", self.dichotomy.max_inner_iterations),
            ("dichotomy.max_rounds", self.dichotomy.max_rounds),
        ] {
            if value < 1 {
                return Err(field_err(field, "must be >= 1"));
            }
        }
        self.learning
            .validate()
            .map_err(|e| field_err("learning", e.to_string()))?;
        if !(self.dichotomy.threshold > 0.0 && self.dichotomy.threshold < 1.0) {
            return Err(field_err(
                "dichotomy.threshold",
                format!("must be in (0, 1), got {}", self.dichotomy.threshold),
            ));
        }
        if !(self.dichotomy.stop_width > 0.0) {
            return Err(field_err(
                "dichotomy.stop_width",
                format!("must be > 0, got {}", self.dichotomy.stop_width),
            ));
        }
        if !(self.traditional.action_step > 0.0) {
            return Err(field_err(
                "traditional.action_step",
                format!("must be > 0, got {}", self.traditional.action_step),
            ));
        }
        for (i, g) in self.gencos.iter().enumerate() {
            let steps = g.p_max / self.traditional.action_step;
            if (steps - steps.round()).abs() > 1e-9 {
                return Err(field_err(
                    "traditional.action_step",
                    format!(
                        "must divide gencos[{i}].p_max = {} evenly, got {}",
                        g.p_max, self.traditional.action_step
                    ),
                ));
            }
        }
        Ok(())
    }
}
