//! The offline training loop: epoch scheduling, frozen-policy snapshots,
//! minibatch sampling, optimizer steps, and the baseline methods.
//!
//! Each epoch pins one frozen policy. Every example in every minibatch draws
//! its action from that snapshot (Bernoulli in explore epochs, greedy in
//! exploit epochs), is paid the confidence-shaped reward from the snapshot's
//! probability, and contributes to one composite-loss optimizer step per
//! minibatch; the snapshot refreshes exactly at the epoch boundary.
//!
//! Why the default reward shape is `one-plus-log` rather than the bare
//! logarithm: with f(p) = ln p the expected policy-gradient direction on the
//! correct-action logit is κ·p·(1−p)·ln(p(1−p)), which is negative for every
//! p in (0, 1), so the surrogate pushes probability mass away from the
//! correct action no matter how the baseline is set and training converges
//! to an inverted classifier. Shifting by one makes that direction
//! κ·p·(1−p)·(2 + ln(p(1−p))), whose stable fixed point is exactly the
//! maximizer p* = (1+√(1−4e⁻²))/2 ≈ 0.8386 of the expected correct-label
//! reward p·ln p − (1−p)·ln(1−p): the policy is drawn toward confident but
//! never saturated correctness. The bare shape stays available as
//! `reward.shape = "literal-log"` for ablation.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::eval::{self, BinReport, EvalError, ScoredPrediction};
use crate::linalg::Rng;
use crate::model::{
    sample_action, Action, FrozenPolicy, Mode, ModelError, PolicyParams, ValueParams,
};
use crate::objective::{
    self, kl_divergence, LossBreakdown, LossWeights, ObjectiveError, StepRecord,
};
use crate::reward::{polarity, shape, RewardError, RewardSpec};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("epochs must be at least 1")]
    EpochsRange,
    #[error("batch_size must be at least 1")]
    BatchSizeRange,
    #[error("learning_rate must be positive, got {0}")]
    LearningRateRange(f64),
    #[error("bins must be at least 2, got {0}")]
    BinsRange(usize),
    #[error("custom schedule lists {got} modes for {want} epochs")]
    CustomScheduleLength { got: usize, want: usize },
    #[error("sft needs a positive supervised weight, got beta = {0}")]
    SftNeedsBeta(f64),
    #[error("balanced sampling needs both classes, but label {label} is absent")]
    MissingClass { label: u8 },
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("optimizer state tracks {state} parameters, step received {got}")]
    OptimizerShape { state: usize, got: usize },
    #[error("numerical abort at epoch {}, batch {}: {}", .0.epoch, .0.batch_index, .0.reason)]
    NumericalAbort(Box<BatchDump>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Training methods: the confidence-weighted objective, the ±1-reward PPO
/// baseline, and cross-entropy-only supervised fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Binaryppo,
    VanillaPpo,
    Sft,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Binaryppo => f.write_str("binaryppo"),
            Method::VanillaPpo => f.write_str("vanilla_ppo"),
            Method::Sft => f.write_str("sft"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Method, String> {
        match s {
            "binaryppo" => Ok(Method::Binaryppo),
            "vanilla_ppo" => Ok(Method::VanillaPpo),
            "sft" => Ok(Method::Sft),
            other => Err(format!("unknown method {other:?}; expected binaryppo, vanilla_ppo, or sft")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

impl std::str::FromStr for Optimizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Optimizer, String> {
        match s {
            "adam" => Ok(Optimizer::Adam),
            "sgd" => Ok(Optimizer::Sgd),
            other => Err(format!("unknown optimizer {other:?}; expected adam or sgd")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    Balanced,
    Natural,
}

impl std::str::FromStr for Sampler {
    type Err = String;

    fn from_str(s: &str) -> Result<Sampler, String> {
        match s {
            "balanced" => Ok(Sampler::Balanced),
            "natural" => Ok(Sampler::Natural),
            other => Err(format!("unknown sampler {other:?}; expected balanced or natural")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulePreset {
    /// floor(epochs/2) explore epochs, then exploit for the remainder.
    Ee,
    /// Explore in every epoch.
    Pe,
}

/// Per-epoch action-selection plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Preset(SchedulePreset),
    Custom(Vec<Mode>),
}

impl Schedule {
    /// Mode of a 1-based epoch index.
    pub fn mode(&self, epoch: usize, total_epochs: usize) -> Mode {
        match self {
            Schedule::Preset(SchedulePreset::Ee) => {
                if epoch <= total_epochs / 2 {
                    Mode::Explore
                } else {
                    Mode::Exploit
                }
            }
            Schedule::Preset(SchedulePreset::Pe) => Mode::Explore,
            Schedule::Custom(modes) => modes[epoch - 1],
        }
    }
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Schedule::Preset(SchedulePreset::Ee) => f.write_str("ee"),
            Schedule::Preset(SchedulePreset::Pe) => f.write_str("pe"),
            Schedule::Custom(modes) => {
                let names: Vec<String> = modes.iter().map(|m| m.to_string()).collect();
                write!(f, "{}", names.join(","))
            }
        }
    }
}

impl std::str::FromStr for Schedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Schedule, String> {
        match s {
            "ee" => Ok(Schedule::Preset(SchedulePreset::Ee)),
            "pe" => Ok(Schedule::Preset(SchedulePreset::Pe)),
            list => {
                let modes = list
                    .split(',')
                    .map(|tok| match tok.trim() {
                        "explore" => Ok(Mode::Explore),
                        "exploit" => Ok(Mode::Exploit),
                        other => Err(format!(
                            "unknown schedule token {other:?}; expected ee, pe, or a comma list of explore/exploit"
                        )),
                    })
                    .collect::<Result<Vec<Mode>, String>>()?;
                Ok(Schedule::Custom(modes))
            }
        }
    }
}

/// Everything a training run needs besides the dataset and the RNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub sampler: Sampler,
    pub seed: u64,
    /// Standardize advantages within each minibatch before the PPO term.
    pub normalize_advantages: bool,
    /// Confidence-bin count for per-epoch bin reports.
    pub bins: usize,
    pub loss: LossWeights,
    pub reward: RewardSpec,
    /// Hidden layer widths shared by the policy and value networks.
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            method: Method::Binaryppo,
            epochs: 10,
            schedule: Schedule::Preset(SchedulePreset::Ee),
            // 128 spreads learning across epochs at the pinned learning rate;
            // smaller batches converge inside epoch 1 and then only jitter.
            batch_size: 128,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            sampler: Sampler::Balanced,
            seed: 0,
            normalize_advantages: false,
            bins: 10,
            loss: LossWeights::default(),
            reward: RewardSpec::default(),
            hidden: vec![32, 32],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs < 1 {
            return Err(TrainError::EpochsRange);
        }
        if self.batch_size < 1 {
            return Err(TrainError::BatchSizeRange);
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::LearningRateRange(self.learning_rate));
        }
        if self.bins < 2 {
            return Err(TrainError::BinsRange(self.bins));
        }
        if let Schedule::Custom(modes) = &self.schedule {
            if modes.len() != self.epochs {
                return Err(TrainError::CustomScheduleLength {
                    got: modes.len(),
                    want: self.epochs,
                });
            }
        }
        if self.method == Method::Sft && !(self.loss.beta > 0.0) {
            return Err(TrainError::SftNeedsBeta(self.loss.beta));
        }
        self.loss.validate()?;
        self.reward.validate()?;
        Ok(())
    }
}

/// Flat first/second-moment accumulators (adam) plus a step counter; sgd
/// keeps no state beyond the counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: Optimizer,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl OptimizerState {
    pub fn new(kind: Optimizer, param_count: usize) -> OptimizerState {
        let moments = match kind {
            Optimizer::Adam => param_count,
            Optimizer::Sgd => 0,
        };
        OptimizerState { kind, t: 0, m: vec![0.0; moments], v: vec![0.0; moments] }
    }

    pub fn tracked_params(&self) -> usize {
        self.m.len()
    }

    /// One descent step in place; adam uses bias-corrected moments with
    /// (0.9, 0.999, 1e-8).
    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        learning_rate: f64,
    ) -> Result<(), TrainError> {
        if params.len() != grads.len() {
            return Err(TrainError::OptimizerShape { state: params.len(), got: grads.len() });
        }
        self.t += 1;
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= learning_rate * g;
                }
            }
            Optimizer::Adam => {
                if self.m.len() != params.len() {
                    return Err(TrainError::OptimizerShape {
                        state: self.m.len(),
                        got: params.len(),
                    });
                }
                let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for i in 0..params.len() {
                    self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grads[i];
                    self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grads[i] * grads[i];
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
        Ok(())
    }
}

/// One epoch's summary. `mean_kl` is the train-set mean of
/// KL(previous-epoch policy ‖ end-of-epoch policy), where the previous-epoch
/// policy is the epoch's frozen snapshot (the initial policy for epoch 1).
/// `wall_seconds` is measured, not replayed, so it stays out of serialized
/// metrics streams to keep reruns byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub mode: Mode,
    pub loss: LossBreakdown,
    pub mean_entropy: f64,
    pub mean_kl: f64,
    pub train_accuracy: f64,
    #[serde(skip_serializing, default)]
    pub wall_seconds: f64,
}

// Equality covers reproducible content only; wall time is a measurement of
// the machine, not of the run, and is likewise excluded from serialization.
impl PartialEq for EpochReport {
    fn eq(&self, other: &EpochReport) -> bool {
        self.epoch == other.epoch
            && self.mode == other.mode
            && self.loss == other.loss
            && self.mean_entropy == other.mean_entropy
            && self.mean_kl == other.mean_kl
            && self.train_accuracy == other.train_accuracy
    }
}

/// A trained run: final networks (value absent for SFT), per-epoch reports,
/// and per-epoch confidence-bin tables over the training set.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub policy: PolicyParams,
    pub value: Option<ValueParams>,
    pub reports: Vec<EpochReport>,
    pub epoch_bins: Vec<BinReport>,
}

/// Serializable snapshot of the minibatch that produced a non-finite loss.
#[derive(Debug, Clone, Serialize)]
pub struct BatchDump {
    pub epoch: usize,
    pub batch_index: usize,
    pub reason: String,
    pub records: Vec<RecordDump>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecordDump {
    pub features: Vec<f64>,
    pub action: u8,
    pub label: u8,
    pub p_old: f64,
    pub reward: f64,
    pub value: f64,
    pub advantage: f64,
}

fn dump_batch(epoch: usize, batch_index: usize, reason: String, batch: &[StepRecord]) -> TrainError {
    let records = batch
        .iter()
        .map(|rec| RecordDump {
            features: rec.x.clone(),
            action: rec.a.value(),
            label: rec.y,
            p_old: rec.p_old,
            reward: rec.r,
            value: rec.v,
            advantage: rec.advantage,
        })
        .collect();
    TrainError::NumericalAbort(Box::new(BatchDump { epoch, batch_index, reason, records }))
}

/// Class-balanced index batches: each slot flips a fair coin for the class,
/// then draws uniformly with replacement from that class's pool. Produces
/// ceil(n / batch_size) full batches.
pub fn balanced_minibatches(
    dataset: &Dataset,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<usize>>, TrainError> {
    if batch_size < 1 {
        return Err(TrainError::BatchSizeRange);
    }
    let (zeros, ones) = dataset.indices_by_label();
    if zeros.is_empty() {
        return Err(TrainError::MissingClass { label: 0 });
    }
    if ones.is_empty() {
        return Err(TrainError::MissingClass { label: 1 });
    }
    let n_batches = dataset.len().div_ceil(batch_size);
    let mut batches = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let mut batch = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let pool = if rng.bernoulli(0.5) { &ones } else { &zeros };
            batch.push(pool[rng.below(pool.len())]);
        }
        batches.push(batch);
    }
    Ok(batches)
}

/// Natural-frequency batches: one pass over a fresh shuffle of all indices,
/// chunked into batches; the final batch may be short.
pub fn natural_minibatches(
    dataset: &Dataset,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<usize>>, TrainError> {
    if batch_size < 1 {
        return Err(TrainError::BatchSizeRange);
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    rng.shuffle(&mut idx);
    Ok(idx.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

fn minibatches(
    sampler: Sampler,
    dataset: &Dataset,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<usize>>, TrainError> {
    match sampler {
        Sampler::Balanced => balanced_minibatches(dataset, batch_size, rng),
        Sampler::Natural => natural_minibatches(dataset, batch_size, rng),
    }
}

/// How a policy-gradient run pays its sampled actions.
enum RewardRule {
    /// κ · polarity · f(π_old(a|x)).
    Shaped(RewardSpec),
    /// +1 correct, −1 incorrect.
    Sign,
}

impl RewardRule {
    fn pay(&self, a: Action, y: u8, p_old: f64) -> Result<f64, RewardError> {
        match self {
            RewardRule::Shaped(spec) => Ok(spec.kappa * polarity(a, y) * shape(spec, p_old)?),
            RewardRule::Sign => Ok(polarity(a, y)),
        }
    }
}

/// Shared epoch-end diagnostics: mean entropy and train accuracy of the live
/// policy, and mean KL from the epoch's frozen snapshot to the live policy.
fn epoch_diagnostics(
    policy: &PolicyParams,
    frozen: &FrozenPolicy,
    dataset: &Dataset,
) -> Result<(f64, f64, f64), TrainError> {
    let n = dataset.len() as f64;
    let mut entropy_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut correct = 0usize;
    for e in dataset.examples() {
        let (q0, q1) = frozen.forward(&e.features)?;
        let (p0, p1, _) = policy.forward(&e.features)?;
        entropy_sum += objective::entropy(p0, p1);
        kl_sum += kl_divergence((q0, q1), (p0, p1));
        if u8::from(p1 >= 0.5) == e.label {
            correct += 1;
        }
    }
    Ok((entropy_sum / n, kl_sum / n, correct as f64 / n))
}

fn mean_breakdown(sums: LossBreakdown, batches: usize) -> LossBreakdown {
    let k = batches as f64;
    LossBreakdown {
        ppo: sums.ppo / k,
        value: sums.value / k,
        supervised: sums.supervised / k,
        entropy_mean: sums.entropy_mean / k,
        total: sums.total / k,
    }
}

fn add_breakdown(acc: &mut LossBreakdown, b: &LossBreakdown) {
    acc.ppo += b.ppo;
    acc.value += b.value;
    acc.supervised += b.supervised;
    acc.entropy_mean += b.entropy_mean;
    acc.total += b.total;
}

const ZERO_BREAKDOWN: LossBreakdown =
    LossBreakdown { ppo: 0.0, value: 0.0, supervised: 0.0, entropy_mean: 0.0, total: 0.0 };

/// The policy-gradient loop shared by `binaryppo` and `vanilla_ppo`.
fn run_policy_gradient(
    config: &TrainConfig,
    dataset: &Dataset,
    rng: &mut Rng,
    rule: RewardRule,
    weights: LossWeights,
) -> Result<TrainOutput, TrainError> {
    let mut policy =
        PolicyParams::new(dataset.dim(), &config.hidden, config.reward.p_min, rng)?;
    let mut value = ValueParams::new(dataset.dim(), &config.hidden, rng)?;
    let mut opt_policy = OptimizerState::new(config.optimizer, policy.param_count());
    let mut opt_value = OptimizerState::new(config.optimizer, value.param_count());
    let mut reports = Vec::with_capacity(config.epochs);
    let mut epoch_bins = Vec::with_capacity(config.epochs);

    let mut frozen = FrozenPolicy::of(&policy);
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mode = config.schedule.mode(epoch, config.epochs);
        let batches = minibatches(config.sampler, dataset, config.batch_size, rng)?;
        let mut sums = ZERO_BREAKDOWN;
        let mut epoch_preds: Vec<ScoredPrediction> = Vec::new();
        for (batch_index, batch) in batches.iter().enumerate() {
            let mut records = Vec::with_capacity(batch.len());
            for &i in batch {
                let example = &dataset.examples()[i];
                let (q0, q1) = frozen.forward(&example.features)?;
                let a = sample_action(q1, mode, rng);
                let p_old = if a == Action::ZERO { q0 } else { q1 };
                let r = rule.pay(a, example.label, p_old)?;
                let (v, _) = value.forward(&example.features)?;
                records.push(StepRecord::new(
                    example.features.clone(),
                    a,
                    example.label,
                    p_old,
                    r,
                    v,
                ));
                epoch_preds.push(ScoredPrediction {
                    score: q1,
                    label: example.label,
                    advantage: Some(r - v),
                });
            }
            let (breakdown, pg, vg) =
                objective::total_loss(&records, &policy, &value, &weights, config.normalize_advantages)?;
            if !breakdown.total.is_finite() {
                return Err(dump_batch(
                    epoch,
                    batch_index,
                    format!("total loss is {}", breakdown.total),
                    &records,
                ));
            }
            add_breakdown(&mut sums, &breakdown);
            let mut flat = policy.params_flat();
            opt_policy.step(&mut flat, pg.as_slice(), config.learning_rate)?;
            policy
                .set_params_flat(&flat)
                .map_err(|e| dump_batch(epoch, batch_index, e.to_string(), &records))?;
            let mut vflat = value.params_flat();
            opt_value.step(&mut vflat, vg.as_slice(), config.learning_rate)?;
            value
                .set_params_flat(&vflat)
                .map_err(|e| dump_batch(epoch, batch_index, e.to_string(), &records))?;
        }
        let (mean_entropy, mean_kl, train_accuracy) =
            epoch_diagnostics(&policy, &frozen, dataset)?;
        epoch_bins.push(eval::confidence_bins(&epoch_preds, config.bins)?);
        reports.push(EpochReport {
            epoch,
            mode,
            loss: mean_breakdown(sums, batches.len()),
            mean_entropy,
            mean_kl,
            train_accuracy,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        frozen = FrozenPolicy::of(&policy);
    }
    Ok(TrainOutput { policy, value: Some(value), reports, epoch_bins })
}

fn check_train_inputs(config: &TrainConfig, dataset: &Dataset) -> Result<(), TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    if config.sampler == Sampler::Balanced {
        let (zeros, ones) = dataset.indices_by_label();
        if zeros.is_empty() {
            return Err(TrainError::MissingClass { label: 0 });
        }
        if ones.is_empty() {
            return Err(TrainError::MissingClass { label: 1 });
        }
    }
    Ok(())
}

/// Confidence-weighted training: shaped reward, value baseline, supervised
/// regularizer, entropy bonus.
pub fn train(config: &TrainConfig, dataset: &Dataset, rng: &mut Rng) -> Result<TrainOutput, TrainError> {
    check_train_inputs(config, dataset)?;
    run_policy_gradient(config, dataset, rng, RewardRule::Shaped(config.reward), config.loss)
}

/// Identical loop to `train`, but actions are paid +1/−1 for correctness and
/// the supervised term is disabled (β = 0), isolating the contribution of
/// confidence weighting.
pub fn train_vanilla_ppo(
    config: &TrainConfig,
    dataset: &Dataset,
    rng: &mut Rng,
) -> Result<TrainOutput, TrainError> {
    check_train_inputs(config, dataset)?;
    let weights = LossWeights { beta: 0.0, ..config.loss };
    run_policy_gradient(config, dataset, rng, RewardRule::Sign, weights)
}

/// Cross-entropy-only supervised fine-tuning: no sampling, no reward, no
/// value network; the descended loss is β times the mean cross-entropy, so a
/// β-only composite loss on the same parameters produces the same value.
pub fn train_sft(config: &TrainConfig, dataset: &Dataset, rng: &mut Rng) -> Result<TrainOutput, TrainError> {
    let mut config_checked = config.clone();
    config_checked.method = Method::Sft;
    check_train_inputs(&config_checked, dataset)?;
    let mut policy =
        PolicyParams::new(dataset.dim(), &config.hidden, config.reward.p_min, rng)?;
    let mut opt = OptimizerState::new(config.optimizer, policy.param_count());
    let mut reports = Vec::with_capacity(config.epochs);
    let mut epoch_bins = Vec::with_capacity(config.epochs);
    let beta = config.loss.beta;

    let mut frozen = FrozenPolicy::of(&policy);
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mode = config.schedule.mode(epoch, config.epochs);
        let batches = minibatches(config.sampler, dataset, config.batch_size, rng)?;
        let mut sums = ZERO_BREAKDOWN;
        for (batch_index, batch) in batches.iter().enumerate() {
            let records: Vec<StepRecord> = batch
                .iter()
                .map(|&i| {
                    let e = &dataset.examples()[i];
                    // Only x and y matter for the supervised term.
                    StepRecord::new(e.features.clone(), Action::ZERO, e.label, 0.5, 0.0, 0.0)
                })
                .collect();
            let (ce, mut grads) = objective::supervised_loss(&records, &policy)?;
            let mut entropy_sum = 0.0;
            for rec in &records {
                let (p0, p1, _) = policy.forward(&rec.x)?;
                entropy_sum += objective::entropy(p0, p1);
            }
            let total = beta * ce;
            if !total.is_finite() {
                return Err(dump_batch(epoch, batch_index, format!("sft loss is {total}"), &records));
            }
            add_breakdown(
                &mut sums,
                &LossBreakdown {
                    ppo: 0.0,
                    value: 0.0,
                    supervised: ce,
                    entropy_mean: entropy_sum / records.len() as f64,
                    total,
                },
            );
            grads.scale(beta);
            let mut flat = policy.params_flat();
            opt.step(&mut flat, grads.as_slice(), config.learning_rate)?;
            policy
                .set_params_flat(&flat)
                .map_err(|e| dump_batch(epoch, batch_index, e.to_string(), &records))?;
        }
        let (mean_entropy, mean_kl, train_accuracy) =
            epoch_diagnostics(&policy, &frozen, dataset)?;
        // With no sampled decisions the bins cover end-of-epoch scores.
        let preds = eval::score_dataset(&policy, dataset)?;
        epoch_bins.push(eval::confidence_bins(&preds, config.bins)?);
        reports.push(EpochReport {
            epoch,
            mode,
            loss: mean_breakdown(sums, batches.len()),
            mean_entropy,
            mean_kl,
            train_accuracy,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        frozen = FrozenPolicy::of(&policy);
    }
    Ok(TrainOutput { policy, value: None, reports, epoch_bins })
}

/// Dispatch on `config.method`.
pub fn run(config: &TrainConfig, dataset: &Dataset, rng: &mut Rng) -> Result<TrainOutput, TrainError> {
    match config.method {
        Method::Binaryppo => train(config, dataset, rng),
        Method::VanillaPpo => train_vanilla_ppo(config, dataset, rng),
        Method::Sft => train_sft(config, dataset, rng),
    }
}
