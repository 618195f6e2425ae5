//! Composite training objective and its exact gradients.
//!
//! The descended loss is
//!
//! total = ppo + α·value + β·supervised − γ·mean_entropy
//!
//! where ppo = −mean_i min(ρ_i·A_i, clip(ρ_i, 1−ε, 1+ε)·A_i) with
//! ρ_i = π_live(a_i|x_i)/p_old_i, value = mean squared error of the value
//! head against the realized reward, supervised = mean cross-entropy against
//! the dataset label, and mean_entropy is the mean policy entropy over the
//! batch. Every term's gradient is computed analytically through the shared
//! network caches; the clipped surrogate contributes zero policy gradient on
//! samples where the clipped branch is active.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, Gradients, ModelError, PolicyParams, ValueParams};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("loss terms require a non-empty batch")]
    EmptyBatch,
    #[error("{field} must be non-negative, got {value}")]
    NegativeWeight { field: &'static str, value: f64 },
    #[error("clip_epsilon must lie in (0, 1), got {0}")]
    ClipEpsilonRange(f64),
    #[error("stored frozen probability {p_old} is below the floor {p_min}")]
    StaleProbability { p_old: f64, p_min: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Scalar weights of the composite loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Value-loss weight α.
    pub alpha: f64,
    /// Supervised cross-entropy weight β.
    pub beta: f64,
    /// Entropy-bonus weight γ (subtracted, so positive γ rewards entropy).
    pub gamma: f64,
    /// PPO clip radius ε.
    pub clip_epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> LossWeights {
        LossWeights { alpha: 0.5, beta: 0.1, gamma: 0.01, clip_epsilon: 0.2 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        for (field, value) in
            [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)]
        {
            if !(value >= 0.0) {
                return Err(ObjectiveError::NegativeWeight { field, value });
            }
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(ObjectiveError::ClipEpsilonRange(self.clip_epsilon));
        }
        Ok(())
    }
}

/// One sampled decision: everything the loss needs about a single example.
///
/// `p_old` is the frozen policy's probability of the taken action and is the
/// ratio denominator; `advantage` is `r - v` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub x: Vec<f64>,
    pub a: Action,
    pub y: u8,
    pub p_old: f64,
    pub r: f64,
    pub v: f64,
    pub advantage: f64,
}

impl StepRecord {
    pub fn new(x: Vec<f64>, a: Action, y: u8, p_old: f64, r: f64, v: f64) -> StepRecord {
        StepRecord { x, a, y, p_old, r, v, advantage: r - v }
    }
}

/// Per-term values of one loss evaluation; `total` is the descended scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ppo: f64,
    pub value: f64,
    pub supervised: f64,
    pub entropy_mean: f64,
    pub total: f64,
}

/// A = r − V(x).
pub fn advantage(r: f64, v: f64) -> f64 {
    r - v
}

/// Per-sample clipped surrogate min(ρA, clip(ρ, 1−ε, 1+ε)A).
pub fn surrogate(rho: f64, advantage: f64, clip_epsilon: f64) -> f64 {
    let clipped = rho.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
    (rho * advantage).min(clipped * advantage)
}

/// d(surrogate)/dρ: the advantage when the unclipped branch is active (ties
/// included), zero when the active clipped branch has saturated the clamp.
fn surrogate_drho(rho: f64, advantage: f64, clip_epsilon: f64) -> f64 {
    let clipped = rho.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
    if rho * advantage <= clipped * advantage {
        advantage
    } else {
        // The strictly smaller clipped branch implies a saturated clamp.
        0.0
    }
}

/// Binary entropy H(p0, p1) = −(p0·ln p0 + p1·ln p1) in nats.
pub fn entropy(p0: f64, p1: f64) -> f64 {
    debug_assert!(p0 > 0.0 && p1 > 0.0, "entropy needs floored probabilities");
    -(p0 * p0.ln() + p1 * p1.ln())
}

/// KL(p ‖ q) for two floored Bernoulli distributions given as (p0, p1) pairs.
pub fn kl_divergence(p: (f64, f64), q: (f64, f64)) -> f64 {
    debug_assert!(p.0 > 0.0 && p.1 > 0.0 && q.0 > 0.0 && q.1 > 0.0);
    p.0 * (p.0 / q.0).ln() + p.1 * (p.1 / q.1).ln()
}

/// Advantages used by the PPO term: raw, or standardized to zero mean and
/// unit variance across the batch when `normalize` is set. Never mutates the
/// records.
fn effective_advantages(batch: &[StepRecord], normalize: bool) -> Vec<f64> {
    let raw: Vec<f64> = batch.iter().map(|rec| rec.advantage).collect();
    if !normalize || raw.len() < 2 {
        return raw;
    }
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let var = raw.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let scale = 1.0 / (var.sqrt() + 1e-8);
    raw.iter().map(|a| (a - mean) * scale).collect()
}

fn check_batch(batch: &[StepRecord], p_min: f64) -> Result<(), ObjectiveError> {
    if batch.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    for rec in batch {
        if rec.p_old < p_min {
            return Err(ObjectiveError::StaleProbability { p_old: rec.p_old, p_min });
        }
    }
    Ok(())
}

/// Clipped-PPO policy loss −mean_i surrogate_i and its gradient with respect
/// to the live policy parameters.
pub fn ppo_clip_loss(
    batch: &[StepRecord],
    live: &PolicyParams,
    weights: &LossWeights,
    normalize_advantages: bool,
) -> Result<(f64, Gradients), ObjectiveError> {
    weights.validate()?;
    check_batch(batch, live.p_min())?;
    let adv = effective_advantages(batch, normalize_advantages);
    let n = batch.len() as f64;
    let mut grads = Gradients::zeros(live.param_count());
    let mut loss = 0.0;
    for (rec, &a_eff) in batch.iter().zip(&adv) {
        let (p0, p1, cache) = live.forward(&rec.x)?;
        let p_a = if rec.a == Action::ZERO { p0 } else { p1 };
        let rho = p_a / rec.p_old;
        loss -= surrogate(rho, a_eff, weights.clip_epsilon) / n;
        let dsurr = surrogate_drho(rho, a_eff, weights.clip_epsilon);
        let mut dp = [0.0, 0.0];
        dp[rec.a.index()] = -dsurr / (rec.p_old * n);
        live.backward_into(&cache, dp, 1.0, &mut grads)?;
    }
    Ok((loss, grads))
}

/// Mean squared error of the value head against realized rewards, with its
/// gradient with respect to the value parameters.
pub fn value_loss(
    batch: &[StepRecord],
    live: &ValueParams,
) -> Result<(f64, Gradients), ObjectiveError> {
    if batch.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let n = batch.len() as f64;
    let mut grads = Gradients::zeros(live.param_count());
    let mut loss = 0.0;
    for rec in batch {
        let (v, cache) = live.forward(&rec.x)?;
        let err = v - rec.r;
        loss += err * err / n;
        live.backward_into(&cache, 2.0 * err / n, 1.0, &mut grads)?;
    }
    Ok((loss, grads))
}

/// Mean cross-entropy −mean_i ln π(y_i|x_i) against dataset labels, with its
/// gradient with respect to the live policy parameters.
pub fn supervised_loss(
    batch: &[StepRecord],
    live: &PolicyParams,
) -> Result<(f64, Gradients), ObjectiveError> {
    if batch.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let n = batch.len() as f64;
    let mut grads = Gradients::zeros(live.param_count());
    let mut loss = 0.0;
    for rec in batch {
        let (p0, p1, cache) = live.forward(&rec.x)?;
        let p_y = if rec.y == 0 { p0 } else { p1 };
        loss -= p_y.ln() / n;
        let mut dp = [0.0, 0.0];
        dp[rec.y as usize] = -1.0 / (p_y * n);
        live.backward_into(&cache, dp, 1.0, &mut grads)?;
    }
    Ok((loss, grads))
}

/// Mean policy entropy over the batch and the gradient of the descended term
/// −γ·mean_entropy with respect to the live policy parameters.
pub fn entropy_loss(
    batch: &[StepRecord],
    live: &PolicyParams,
    gamma: f64,
) -> Result<(f64, Gradients), ObjectiveError> {
    if batch.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let n = batch.len() as f64;
    let mut grads = Gradients::zeros(live.param_count());
    let mut mean_h = 0.0;
    for rec in batch {
        let (p0, p1, cache) = live.forward(&rec.x)?;
        mean_h += entropy(p0, p1) / n;
        // d(−γ·H)/dp_i = γ·(ln p_i + 1).
        let dp = [gamma * (p0.ln() + 1.0) / n, gamma * (p1.ln() + 1.0) / n];
        live.backward_into(&cache, dp, 1.0, &mut grads)?;
    }
    Ok((mean_h, grads))
}

/// Full composite loss: one policy forward per example shared by the PPO,
/// supervised, and entropy terms, plus a value forward for the baseline term.
/// Returns the per-term breakdown and the exact gradients for both networks.
pub fn total_loss(
    batch: &[StepRecord],
    policy: &PolicyParams,
    value: &ValueParams,
    weights: &LossWeights,
    normalize_advantages: bool,
) -> Result<(LossBreakdown, Gradients, Gradients), ObjectiveError> {
    weights.validate()?;
    check_batch(batch, policy.p_min())?;
    let adv = effective_advantages(batch, normalize_advantages);
    let n = batch.len() as f64;
    let mut policy_grads = Gradients::zeros(policy.param_count());
    let mut value_grads = Gradients::zeros(value.param_count());
    let (mut ppo, mut val, mut sup, mut ent) = (0.0, 0.0, 0.0, 0.0);
    for (rec, &a_eff) in batch.iter().zip(&adv) {
        let (p0, p1, cache) = policy.forward(&rec.x)?;
        let probs = [p0, p1];
        let p_a = probs[rec.a.index()];
        let p_y = probs[rec.y as usize];
        let rho = p_a / rec.p_old;

        ppo -= surrogate(rho, a_eff, weights.clip_epsilon) / n;
        sup -= p_y.ln() / n;
        ent += entropy(p0, p1) / n;

        let dsurr = surrogate_drho(rho, a_eff, weights.clip_epsilon);
        let mut dp = [
            weights.gamma * (p0.ln() + 1.0) / n,
            weights.gamma * (p1.ln() + 1.0) / n,
        ];
        dp[rec.a.index()] -= dsurr / (rec.p_old * n);
        dp[rec.y as usize] -= weights.beta / (p_y * n);
        policy.backward_into(&cache, dp, 1.0, &mut policy_grads)?;

        let (v, vcache) = value.forward(&rec.x)?;
        let err = v - rec.r;
        val += err * err / n;
        value.backward_into(&vcache, weights.alpha * 2.0 * err / n, 1.0, &mut value_grads)?;
    }
    let total = ppo + weights.alpha * val + weights.beta * sup - weights.gamma * ent;
    let breakdown =
        LossBreakdown { ppo, value: val, supervised: sup, entropy_mean: ent, total };
    Ok((breakdown, policy_grads, value_grads))
}
