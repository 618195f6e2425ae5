//! Confidence-shaped reward for sampled actions.
//!
//! r(x, a, y) = κ · s(a, y) · f(π_old(a|x)): a correctness polarity s = ±1
//! scaled by a shaping function f of the FROZEN policy's probability for the
//! taken action. Shapes: `literal-log` f(p) = ln p, `one-plus-log`
//! f(p) = 1 + ln p, `linear` f(p) = p. Under `literal-log` every correct
//! action has reward ≤ 0 and every incorrect action has reward ≥ 0, so an
//! uncertain wrong action is paid a large positive reward; the shape remains
//! available exactly as stated, but see the trainer docs for why
//! `one-plus-log` is the training default.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, FrozenPolicy, ModelError};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("kappa must be positive, got {0}")]
    KappaRange(f64),
    #[error("probability floor must lie in (0, 0.5), got {0}")]
    PminRange(f64),
    #[error("probability {p} is below the floor {p_min}; the floor must be applied upstream")]
    BelowFloor { p: f64, p_min: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Shaping function applied to the frozen policy's probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardShape {
    LiteralLog,
    OnePlusLog,
    Linear,
}

impl std::fmt::Display for RewardShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RewardShape::LiteralLog => f.write_str("literal-log"),
            RewardShape::OnePlusLog => f.write_str("one-plus-log"),
            RewardShape::Linear => f.write_str("linear"),
        }
    }
}

impl std::str::FromStr for RewardShape {
    type Err = String;

    fn from_str(s: &str) -> Result<RewardShape, String> {
        match s {
            "literal-log" => Ok(RewardShape::LiteralLog),
            "one-plus-log" => Ok(RewardShape::OnePlusLog),
            "linear" => Ok(RewardShape::Linear),
            other => Err(format!(
                "unknown reward shape {other:?}; expected literal-log, one-plus-log, or linear"
            )),
        }
    }
}

/// Reward configuration: scale κ, shape f, and the probability floor shared
/// with the policy network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSpec {
    pub kappa: f64,
    pub shape: RewardShape,
    pub p_min: f64,
}

impl Default for RewardSpec {
    fn default() -> RewardSpec {
        RewardSpec { kappa: 1.0, shape: RewardShape::OnePlusLog, p_min: 1e-6 }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.kappa > 0.0) {
            return Err(RewardError::KappaRange(self.kappa));
        }
        if !(self.p_min > 0.0 && self.p_min < 0.5) {
            return Err(RewardError::PminRange(self.p_min));
        }
        Ok(())
    }
}

/// +1 when the action matches the label, −1 otherwise.
pub fn polarity(a: Action, y: u8) -> f64 {
    if a.matches(y) {
        1.0
    } else {
        -1.0
    }
}

/// f(p) for p in [p_min, 1]; monotone non-decreasing and finite on that range.
pub fn shape(spec: &RewardSpec, p: f64) -> Result<f64, RewardError> {
    if p < spec.p_min {
        return Err(RewardError::BelowFloor { p, p_min: spec.p_min });
    }
    debug_assert!(p <= 1.0, "probability above one: {p}");
    Ok(match spec.shape {
        RewardShape::LiteralLog => p.ln(),
        RewardShape::OnePlusLog => 1.0 + p.ln(),
        RewardShape::Linear => p,
    })
}

/// r = κ · polarity(a, y) · shape(π_old(a|x)); the probability comes from the
/// frozen snapshot, never the live policy.
pub fn reward(
    spec: &RewardSpec,
    frozen: &FrozenPolicy,
    x: &[f64],
    a: Action,
    y: u8,
) -> Result<f64, RewardError> {
    let p_old = frozen.prob_of(x, a)?;
    Ok(spec.kappa * polarity(a, y) * shape(spec, p_old)?)
}
