//! Layered run configuration: built-in defaults, overridden by a TOML config
//! file with dotted keys, overridden by command-line flags.
//!
//! The file layer deserializes directly into [`TrainConfig`], so the key
//! vocabulary is exactly the config struct: top-level `method`, `epochs`,
//! `schedule`, `batch_size`, `learning_rate`, `optimizer`, `sampler`, `seed`,
//! `normalize_advantages`, `bins`, `hidden`, and the nested `loss.*`
//! (`alpha`, `beta`, `gamma`, `clip_epsilon`) and `reward.*` (`kappa`,
//! `shape`, `p_min`) groups. Unknown keys are rejected rather than ignored.

use std::path::Path;

use thiserror::Error;

use crate::reward::RewardShape;
use crate::trainer::{Method, Optimizer, Sampler, Schedule, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config file {path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Invalid(#[from] TrainError),
}

/// Parse a TOML config file into a full [`TrainConfig`]; absent keys take
/// their defaults, unknown keys are an error. Validation is left to the
/// caller so flag overrides can be applied first.
pub fn load_config(path: &Path) -> Result<TrainConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Command-line overrides; `None` fields leave the underlying layer alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<Method>,
    pub epochs: Option<usize>,
    pub schedule: Option<Schedule>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub optimizer: Option<Optimizer>,
    pub sampler: Option<Sampler>,
    pub seed: Option<u64>,
    pub normalize_advantages: Option<bool>,
    pub bins: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub clip_epsilon: Option<f64>,
    pub kappa: Option<f64>,
    pub shape: Option<RewardShape>,
    pub p_min: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, mut config: TrainConfig) -> TrainConfig {
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = &self.$field { $target = v.clone(); })*
            };
        }
        set! {
            method => config.method,
            epochs => config.epochs,
            schedule => config.schedule,
            batch_size => config.batch_size,
            learning_rate => config.learning_rate,
            optimizer => config.optimizer,
            sampler => config.sampler,
            seed => config.seed,
            normalize_advantages => config.normalize_advantages,
            bins => config.bins,
            hidden => config.hidden,
            alpha => config.loss.alpha,
            beta => config.loss.beta,
            gamma => config.loss.gamma,
            clip_epsilon => config.loss.clip_epsilon,
            kappa => config.reward.kappa,
            shape => config.reward.shape,
            p_min => config.reward.p_min,
        }
        config
    }
}

/// Resolve the three layers into a validated config.
pub fn resolve(
    config_file: Option<&Path>,
    overrides: &Overrides,
) -> Result<TrainConfig, ConfigError> {
    let base = match config_file {
        Some(path) => load_config(path)?,
        None => TrainConfig::default(),
    };
    let config = overrides.apply(base);
    config.validate()?;
    Ok(config)
}

/// Parse `a,b,c` into hidden-layer widths for the `--hidden` flag.
pub fn parse_hidden(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid hidden layer width {tok:?}"))
        })
        .collect()
}

/// Schedule summary used in tables and manifests, e.g. `ee` or
/// `explore,exploit`.
pub fn schedule_label(schedule: &Schedule) -> String {
    schedule.to_string()
}
