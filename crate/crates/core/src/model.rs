//! Two-action stochastic policy network and scalar value network.
//!
//! Both are dense feed-forward nets (tanh hidden layers, linear output) with
//! hand-written analytic backward passes. The policy head is a softmax over
//! two logits followed by a probability floor: if either probability falls
//! below `p_min` the pair is pinned to `(p_min, 1-p_min)`, which keeps
//! log-shaped rewards finite. The pinned branch is a flat region of the
//! forward function, so its derivative is exactly zero and finite differences
//! agree with the analytic backward there too.
//!
//! Activation caches carry the parameter version they were built against;
//! backward refuses a cache built before the most recent parameter update.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, Matrix, Rng};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input dimension {got} does not match network input dimension {want}")]
    InputDim { got: usize, want: usize },
    #[error("layer {index} expects input {want}, previous layer produces {got}")]
    LayerChain { index: usize, got: usize, want: usize },
    #[error("hidden layer sizes must be nonzero")]
    EmptyHiddenLayer,
    #[error("probability floor must lie in (0, 0.5), got {0}")]
    PminRange(f64),
    #[error("stale activation cache: parameters at version {params}, cache built at version {cache}")]
    StaleCache { params: u64, cache: u64 },
    #[error("parameter vector length {got} does not match network parameter count {want}")]
    ParamLength { got: usize, want: usize },
    #[error("non-finite parameter at flat index {index}")]
    NonFiniteParam { index: usize },
    #[error("non-finite network output for finite input")]
    NonFiniteOutput,
    #[error("action value must be 0 or 1, got {0}")]
    InvalidAction(u8),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse error at line {line}: {message}")]
    Checkpoint { line: usize, message: String },
}

/// One of the two discrete actions (= predicted class).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action(u8);

impl Action {
    pub const ZERO: Action = Action(0);
    pub const ONE: Action = Action(1);

    pub fn new(value: u8) -> Result<Action, ModelError> {
        match value {
            0 | 1 => Ok(Action(value)),
            v => Err(ModelError::InvalidAction(v)),
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn matches(self, label: u8) -> bool {
        self.0 == label
    }
}

/// Per-epoch action-selection mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Explore,
    Exploit,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Explore => f.write_str("explore"),
            Mode::Exploit => f.write_str("exploit"),
        }
    }
}

/// Explore: a ~ Bernoulli(p1). Exploit: argmax, tie at exactly 0.5 -> action 0.
pub fn sample_action(p1: f64, mode: Mode, rng: &mut Rng) -> Action {
    match mode {
        Mode::Explore => {
            if rng.bernoulli(p1) {
                Action::ONE
            } else {
                Action::ZERO
            }
        }
        Mode::Exploit => {
            if p1 > 0.5 {
                Action::ONE
            } else {
                Action::ZERO
            }
        }
    }
}

/// Flat parameter gradient vector in the network's canonical layout
/// (per layer: weights row-major, then biases; layers in forward order).
#[derive(Debug, Clone)]
pub struct Gradients {
    flat: Vec<f64>,
}

impl Gradients {
    pub fn zeros(len: usize) -> Gradients {
        Gradients { flat: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.flat
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    /// self += scale * other. Lengths must match.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        assert_eq!(self.flat.len(), other.flat.len(), "gradient length mismatch");
        for (a, b) in self.flat.iter_mut().zip(&other.flat) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.flat {
            *a *= s;
        }
    }
}

/// Flat-vector spans of one layer's parameters, for targeted inspection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRanges {
    pub weights: std::ops::Range<usize>,
    pub biases: std::ops::Range<usize>,
}

#[derive(Debug, Clone)]
struct Dense {
    w: Matrix, // out x in
    b: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Mlp {
    input_dim: usize,
    layers: Vec<Dense>,
    version: u64,
}

#[derive(Debug, Clone)]
struct MlpCache {
    input: Vec<f64>,
    hidden: Vec<Vec<f64>>, // tanh outputs per hidden layer
    version: u64,
}

impl Mlp {
    fn new(input_dim: usize, hidden: &[usize], out_dim: usize, rng: &mut Rng) -> Result<Mlp, ModelError> {
        if hidden.iter().any(|&h| h == 0) {
            return Err(ModelError::EmptyHiddenLayer);
        }
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        for &fan_out in hidden.iter().chain(std::iter::once(&out_dim)) {
            // Scaled uniform init, limit sqrt(6/(fan_in+fan_out)); biases zero.
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data: Vec<f64> =
                (0..fan_in * fan_out).map(|_| (rng.uniform() * 2.0 - 1.0) * limit).collect();
            layers.push(Dense {
                w: Matrix::from_vec(fan_out, fan_in, data)?,
                b: vec![0.0; fan_out],
            });
            fan_in = fan_out;
        }
        Ok(Mlp { input_dim, layers, version: 0 })
    }

    fn from_parts(parts: Vec<(Matrix, Vec<f64>)>, out_dim: usize) -> Result<Mlp, ModelError> {
        assert!(!parts.is_empty(), "network needs at least the output layer");
        let input_dim = parts[0].0.cols();
        let mut prev_out = input_dim;
        for (index, (w, b)) in parts.iter().enumerate() {
            if w.cols() != prev_out {
                return Err(ModelError::LayerChain { index, got: prev_out, want: w.cols() });
            }
            if b.len() != w.rows() {
                return Err(ModelError::LayerChain { index, got: b.len(), want: w.rows() });
            }
            prev_out = w.rows();
        }
        if prev_out != out_dim {
            return Err(ModelError::LayerChain {
                index: parts.len() - 1,
                got: prev_out,
                want: out_dim,
            });
        }
        let layers = parts.into_iter().map(|(w, b)| Dense { w, b }).collect();
        Ok(Mlp { input_dim, layers, version: 0 })
    }

    fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpCache), ModelError> {
        if x.len() != self.input_dim {
            return Err(ModelError::InputDim { got: x.len(), want: self.input_dim });
        }
        let mut hidden = Vec::with_capacity(self.layers.len() - 1);
        let mut act = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.w.mul_vec(&act)?;
            for (zj, bj) in z.iter_mut().zip(&layer.b) {
                *zj += bj;
            }
            if i + 1 < self.layers.len() {
                for zj in &mut z {
                    *zj = zj.tanh();
                }
                act = z.clone();
                hidden.push(z);
            } else {
                if z.iter().any(|v| !v.is_finite()) {
                    return Err(ModelError::NonFiniteOutput);
                }
                return Ok((z, MlpCache { input: x.to_vec(), hidden, version: self.version }));
            }
        }
        unreachable!("network always has an output layer")
    }

    /// Accumulate `scale * dL/dparams` into `grads` given dL/d(output logits).
    fn backward_into(
        &self,
        cache: &MlpCache,
        dout: &[f64],
        scale: f64,
        grads: &mut Gradients,
    ) -> Result<(), ModelError> {
        if cache.version != self.version {
            return Err(ModelError::StaleCache { params: self.version, cache: cache.version });
        }
        assert_eq!(grads.len(), self.param_count(), "gradient buffer length mismatch");
        let ranges = self.param_ranges();
        let mut delta: Vec<f64> = dout.iter().map(|d| d * scale).collect();
        for l in (0..self.layers.len()).rev() {
            let prev_act: &[f64] = if l == 0 { &cache.input } else { &cache.hidden[l - 1] };
            let r = &ranges[l];
            let flat = grads.as_mut_slice();
            let cols = prev_act.len();
            for (i, di) in delta.iter().enumerate() {
                let row = &mut flat[r.weights.start + i * cols..r.weights.start + (i + 1) * cols];
                for (wij, aj) in row.iter_mut().zip(prev_act) {
                    *wij += di * aj;
                }
            }
            for (bi, di) in flat[r.biases.clone()].iter_mut().zip(&delta) {
                *bi += di;
            }
            if l > 0 {
                let back = self.layers[l].w.tr_mul_vec(&delta)?;
                // tanh'(z) = 1 - tanh(z)^2, read from the cached activation
                delta = back
                    .iter()
                    .zip(&cache.hidden[l - 1])
                    .map(|(g, a)| g * (1.0 - a * a))
                    .collect();
            }
        }
        Ok(())
    }

    fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.data().len() + l.b.len()).sum()
    }

    fn param_ranges(&self) -> Vec<LayerRanges> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut offset = 0;
        for l in &self.layers {
            let wlen = l.w.data().len();
            let blen = l.b.len();
            out.push(LayerRanges {
                weights: offset..offset + wlen,
                biases: offset + wlen..offset + wlen + blen,
            });
            offset += wlen + blen;
        }
        out
    }

    fn params_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            flat.extend_from_slice(l.w.data());
            flat.extend_from_slice(&l.b);
        }
        flat
    }

    fn set_params_flat(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        if flat.len() != self.param_count() {
            return Err(ModelError::ParamLength { got: flat.len(), want: self.param_count() });
        }
        if let Some(index) = flat.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteParam { index });
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let wlen = l.w.data().len();
            l.w.data_mut().copy_from_slice(&flat[offset..offset + wlen]);
            offset += wlen;
            let blen = l.b.len();
            l.b.copy_from_slice(&flat[offset..offset + blen]);
            offset += blen;
        }
        self.version += 1;
        Ok(())
    }
}

/// Softmax over two logits, then the probability floor.
fn head_probs(logits: &[f64], p_min: f64) -> ([f64; 2], [f64; 2]) {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    let q = [e0 / s, e1 / s];
    let p = if q[0] < p_min {
        [p_min, 1.0 - p_min]
    } else if q[1] < p_min {
        [1.0 - p_min, p_min]
    } else {
        q
    };
    (q, p)
}

/// dL/d(logits) from dL/d(probabilities); zero in the pinned-floor region.
fn head_backward(q: &[f64; 2], p_min: f64, dp: &[f64; 2]) -> [f64; 2] {
    if q[0] < p_min || q[1] < p_min {
        return [0.0, 0.0];
    }
    let s = dp[0] * q[0] + dp[1] * q[1];
    [q[0] * (dp[0] - s), q[1] * (dp[1] - s)]
}

/// Live policy parameters for π(a|x): dense net onto 2 logits + floored softmax.
#[derive(Debug, Clone)]
pub struct PolicyParams {
    mlp: Mlp,
    p_min: f64,
}

/// Activation record from `policy_forward`; consumed by `policy_backward`.
#[derive(Debug, Clone)]
pub struct PolicyCache {
    mlp: MlpCache,
    q: [f64; 2],
}

impl PolicyParams {
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        p_min: f64,
        rng: &mut Rng,
    ) -> Result<PolicyParams, ModelError> {
        check_p_min(p_min)?;
        Ok(PolicyParams { mlp: Mlp::new(input_dim, hidden, 2, rng)?, p_min })
    }

    /// Build from explicit `(weights, biases)` layers; the last layer must
    /// produce 2 logits. Weights are `out x in` matrices.
    pub fn from_parts(parts: Vec<(Matrix, Vec<f64>)>, p_min: f64) -> Result<PolicyParams, ModelError> {
        check_p_min(p_min)?;
        Ok(PolicyParams { mlp: Mlp::from_parts(parts, 2)?, p_min })
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn version(&self) -> u64 {
        self.mlp.version
    }

    /// (π(0|x), π(1|x), cache). Both probabilities ≥ p_min, sum 1.
    pub fn forward(&self, x: &[f64]) -> Result<(f64, f64, PolicyCache), ModelError> {
        let (logits, mlp_cache) = self.mlp.forward(x)?;
        let (q, p) = head_probs(&logits, self.p_min);
        Ok((p[0], p[1], PolicyCache { mlp: mlp_cache, q }))
    }

    /// Parameter gradients of `dp · p(x)` for upstream gradient `dp`.
    pub fn backward(&self, cache: &PolicyCache, dp: [f64; 2]) -> Result<Gradients, ModelError> {
        let mut grads = Gradients::zeros(self.param_count());
        self.backward_into(cache, dp, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Accumulating variant: grads += scale * dL/dθ.
    pub fn backward_into(
        &self,
        cache: &PolicyCache,
        dp: [f64; 2],
        scale: f64,
        grads: &mut Gradients,
    ) -> Result<(), ModelError> {
        let dz = head_backward(&cache.q, self.p_min, &dp);
        self.mlp.backward_into(&cache.mlp, &dz, scale, grads)
    }

    pub fn param_count(&self) -> usize {
        self.mlp.param_count()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.mlp.params_flat()
    }

    /// Replace all parameters; bumps the version, invalidating old caches.
    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        self.mlp.set_params_flat(flat)
    }

    pub fn param_ranges(&self) -> Vec<LayerRanges> {
        self.mlp.param_ranges()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.mlp.layers[..self.mlp.layers.len() - 1].iter().map(|l| l.b.len()).collect()
    }
}

fn check_p_min(p_min: f64) -> Result<(), ModelError> {
    if !(p_min > 0.0 && p_min < 0.5) {
        return Err(ModelError::PminRange(p_min));
    }
    Ok(())
}

/// Immutable epoch-start snapshot of the policy. Supplies action sampling,
/// reward probabilities, and ratio denominators; never mutated in place.
#[derive(Debug, Clone)]
pub struct FrozenPolicy {
    params: PolicyParams,
}

impl FrozenPolicy {
    /// Deep copy of the live parameters; later live updates do not reach it.
    pub fn of(live: &PolicyParams) -> FrozenPolicy {
        FrozenPolicy { params: live.clone() }
    }

    /// Snapshot of a snapshot: identical by construction.
    pub fn snapshot(&self) -> FrozenPolicy {
        self.clone()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(f64, f64), ModelError> {
        let (p0, p1, _) = self.params.forward(x)?;
        Ok((p0, p1))
    }

    /// π_old(a|x).
    pub fn prob_of(&self, x: &[f64], a: Action) -> Result<f64, ModelError> {
        let (p0, p1) = self.forward(x)?;
        Ok(if a == Action::ONE { p1 } else { p0 })
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }
}

/// Value-network parameters for V(x): dense net onto one linear output.
#[derive(Debug, Clone)]
pub struct ValueParams {
    mlp: Mlp,
}

/// Activation record from `value_forward`.
#[derive(Debug, Clone)]
pub struct ValueCache {
    mlp: MlpCache,
}

impl ValueParams {
    pub fn new(input_dim: usize, hidden: &[usize], rng: &mut Rng) -> Result<ValueParams, ModelError> {
        Ok(ValueParams { mlp: Mlp::new(input_dim, hidden, 1, rng)? })
    }

    pub fn from_parts(parts: Vec<(Matrix, Vec<f64>)>) -> Result<ValueParams, ModelError> {
        Ok(ValueParams { mlp: Mlp::from_parts(parts, 1)? })
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim
    }

    pub fn version(&self) -> u64 {
        self.mlp.version
    }

    pub fn forward(&self, x: &[f64]) -> Result<(f64, ValueCache), ModelError> {
        let (out, mlp_cache) = self.mlp.forward(x)?;
        Ok((out[0], ValueCache { mlp: mlp_cache }))
    }

    pub fn backward(&self, cache: &ValueCache, dv: f64) -> Result<Gradients, ModelError> {
        let mut grads = Gradients::zeros(self.param_count());
        self.backward_into(cache, dv, 1.0, &mut grads)?;
        Ok(grads)
    }

    pub fn backward_into(
        &self,
        cache: &ValueCache,
        dv: f64,
        scale: f64,
        grads: &mut Gradients,
    ) -> Result<(), ModelError> {
        self.mlp.backward_into(&cache.mlp, &[dv], scale, grads)
    }

    pub fn param_count(&self) -> usize {
        self.mlp.param_count()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.mlp.params_flat()
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        self.mlp.set_params_flat(flat)
    }

    pub fn param_ranges(&self) -> Vec<LayerRanges> {
        self.mlp.param_ranges()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.mlp.layers[..self.mlp.layers.len() - 1].iter().map(|l| l.b.len()).collect()
    }
}

// --- Checkpoint format -----------------------------------------------------
//
// Versioned plain text, one record per line, floats printed in shortest
// round-trip form so save -> load is bit-exact:
//
//   bppo-params v1
//   kind <policy|value>
//   p_min <float>            (policy only)
//   layers <count>
//   layer <index> <in> <out>
//   w <in*out row-major floats>
//   b <out floats>
//   ...repeated per layer...

const CHECKPOINT_MAGIC: &str = "bppo-params v1";

fn write_mlp(out: &mut String, mlp: &Mlp) {
    let _ = writeln!(out, "layers {}", mlp.layers.len());
    for (i, layer) in mlp.layers.iter().enumerate() {
        let _ = writeln!(out, "layer {} {} {}", i, layer.w.cols(), layer.w.rows());
        out.push('w');
        for v in layer.w.data() {
            let _ = write!(out, " {v:?}");
        }
        out.push('\n');
        out.push('b');
        for v in &layer.b {
            let _ = write!(out, " {v:?}");
        }
        out.push('\n');
    }
}

pub fn save_policy(params: &PolicyParams, path: &Path) -> Result<(), ModelError> {
    let mut out = String::new();
    let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(out, "kind policy");
    let _ = writeln!(out, "p_min {:?}", params.p_min);
    write_mlp(&mut out, &params.mlp);
    std::fs::write(path, out)?;
    Ok(())
}

pub fn save_value(params: &ValueParams, path: &Path) -> Result<(), ModelError> {
    let mut out = String::new();
    let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(out, "kind value");
    write_mlp(&mut out, &params.mlp);
    std::fs::write(path, out)?;
    Ok(())
}

struct CheckpointReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> CheckpointReader<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str), ModelError> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or(ModelError::Checkpoint { line: 0, message: "unexpected end of file".into() })
    }

    fn expect_field(&mut self, name: &str) -> Result<(usize, Vec<&'a str>), ModelError> {
        let (line, text) = self.next_line()?;
        let mut parts = text.split_whitespace();
        let head = parts.next().unwrap_or("");
        if head != name {
            return Err(ModelError::Checkpoint {
                line,
                message: format!("expected `{name}`, found `{head}`"),
            });
        }
        Ok((line, parts.collect()))
    }
}

fn parse_floats(line: usize, fields: &[&str], want: usize) -> Result<Vec<f64>, ModelError> {
    if fields.len() != want {
        return Err(ModelError::Checkpoint {
            line,
            message: format!("expected {want} values, found {}", fields.len()),
        });
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>().map_err(|e| ModelError::Checkpoint {
                line,
                message: format!("bad float `{f}`: {e}"),
            })
        })
        .collect()
}

fn parse_usize(line: usize, field: &str) -> Result<usize, ModelError> {
    field
        .parse::<usize>()
        .map_err(|e| ModelError::Checkpoint { line, message: format!("bad count `{field}`: {e}") })
}

fn read_mlp(reader: &mut CheckpointReader<'_>, out_dim: usize) -> Result<Mlp, ModelError> {
    let (line, fields) = reader.expect_field("layers")?;
    if fields.len() != 1 {
        return Err(ModelError::Checkpoint { line, message: "expected `layers <count>`".into() });
    }
    let count = parse_usize(line, fields[0])?;
    if count == 0 {
        return Err(ModelError::Checkpoint { line, message: "network has no layers".into() });
    }
    let mut parts = Vec::with_capacity(count);
    for i in 0..count {
        let (line, fields) = reader.expect_field("layer")?;
        if fields.len() != 3 {
            return Err(ModelError::Checkpoint {
                line,
                message: "expected `layer <index> <in> <out>`".into(),
            });
        }
        let index = parse_usize(line, fields[0])?;
        if index != i {
            return Err(ModelError::Checkpoint {
                line,
                message: format!("expected layer {i}, found {index}"),
            });
        }
        let fan_in = parse_usize(line, fields[1])?;
        let fan_out = parse_usize(line, fields[2])?;
        let (wline, wfields) = reader.expect_field("w")?;
        let w = parse_floats(wline, &wfields, fan_in * fan_out)?;
        let (bline, bfields) = reader.expect_field("b")?;
        let b = parse_floats(bline, &bfields, fan_out)?;
        let w = Matrix::from_vec(fan_out, fan_in, w).map_err(|e| ModelError::Checkpoint {
            line: wline,
            message: e.to_string(),
        })?;
        parts.push((w, b));
    }
    Mlp::from_parts(parts, out_dim)
}

fn read_header<'a>(
    reader: &mut CheckpointReader<'a>,
    want_kind: &str,
) -> Result<(), ModelError> {
    let (line, text) = reader.next_line()?;
    if text.trim() != CHECKPOINT_MAGIC {
        return Err(ModelError::Checkpoint {
            line,
            message: format!("unsupported checkpoint header `{}`", text.trim()),
        });
    }
    let (line, fields) = reader.expect_field("kind")?;
    if fields != [want_kind] {
        return Err(ModelError::Checkpoint {
            line,
            message: format!("expected kind {want_kind}, found {:?}", fields.join(" ")),
        });
    }
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<PolicyParams, ModelError> {
    let text = std::fs::read_to_string(path)?;
    let mut reader = CheckpointReader { lines: text.lines().enumerate() };
    read_header(&mut reader, "policy")?;
    let (line, fields) = reader.expect_field("p_min")?;
    let p_min = parse_floats(line, &fields, 1)?[0];
    check_p_min(p_min)?;
    let mlp = read_mlp(&mut reader, 2)?;
    Ok(PolicyParams { mlp, p_min })
}

pub fn load_value(path: &Path) -> Result<ValueParams, ModelError> {
    let text = std::fs::read_to_string(path)?;
    let mut reader = CheckpointReader { lines: text.lines().enumerate() };
    read_header(&mut reader, "value")?;
    let mlp = read_mlp(&mut reader, 1)?;
    Ok(ValueParams { mlp })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{central_diff, max_relative_error, random_policy, random_value};

    const PMIN: f64 = 1e-6;

    fn identity2() -> Matrix {
        Matrix::identity(2).unwrap()
    }

    /// Policy whose logits equal the 2-d input directly.
    fn passthrough_policy() -> PolicyParams {
        PolicyParams::from_parts(vec![(identity2(), vec![0.0, 0.0])], PMIN).unwrap()
    }

    #[test]
    fn zero_weight_policy_is_uniform() {
        let w = Matrix::zeros(2, 3).unwrap();
        let policy = PolicyParams::from_parts(vec![(w, vec![0.0, 0.0])], PMIN).unwrap();
        let (p0, p1, _) = policy.forward(&[0.3, -2.0, 5.0]).unwrap();
        assert_eq!((p0, p1), (0.5, 0.5));
    }

    #[test]
    fn equal_logits_give_half_half() {
        let policy = passthrough_policy();
        let (p0, p1, _) = policy.forward(&[2.0, 2.0]).unwrap();
        assert_eq!((p0, p1), (0.5, 0.5));
    }

    #[test]
    fn closed_form_softmax_quarter_three_quarters() {
        let policy = passthrough_policy();
        let (p0, p1, _) = policy.forward(&[0.0, 3.0f64.ln()]).unwrap();
        assert!((p0 - 0.25).abs() < 1e-12, "p0 = {p0}");
        assert!((p1 - 0.75).abs() < 1e-12, "p1 = {p1}");
    }

    #[test]
    fn probability_floor_pins_extreme_logits() {
        let policy = passthrough_policy();
        let (p0, p1, _) = policy.forward(&[0.0, 40.0]).unwrap();
        assert_eq!(p0, PMIN);
        assert_eq!(p1, 1.0 - PMIN);
    }

    #[test]
    fn normalization_and_floor_hold_across_random_networks() {
        let mut rng = Rng::new(31);
        for trial in 0..200 {
            // Every third network gets amped weights to exercise the floor.
            let mut policy = random_policy(&mut rng, 3, &[8]);
            if trial % 3 == 0 {
                let amped: Vec<f64> = policy.params_flat().iter().map(|w| w * 40.0).collect();
                policy.set_params_flat(&amped).unwrap();
            }
            let x: Vec<f64> = (0..3).map(|_| rng.normal() * 3.0).collect();
            let (p0, p1, _) = policy.forward(&x).unwrap();
            assert!((p0 + p1 - 1.0).abs() < 1e-12);
            assert!(p0.min(p1) >= PMIN, "floor violated: {p0}, {p1}");
        }
    }

    #[test]
    fn input_dimension_mismatch_is_rejected() {
        let policy = passthrough_policy();
        assert!(matches!(
            policy.forward(&[1.0]).unwrap_err(),
            ModelError::InputDim { got: 1, want: 2 }
        ));
    }

    #[test]
    fn explore_with_certain_probability_always_acts_one() {
        let mut rng = Rng::new(1);
        for _ in 0..1000 {
            assert_eq!(sample_action(1.0, Mode::Explore, &mut rng), Action::ONE);
        }
    }

    #[test]
    fn exploit_takes_argmax_with_tie_to_zero() {
        let mut rng = Rng::new(1);
        assert_eq!(sample_action(0.3, Mode::Exploit, &mut rng), Action::ZERO);
        assert_eq!(sample_action(0.7, Mode::Exploit, &mut rng), Action::ONE);
        assert_eq!(sample_action(0.5, Mode::Exploit, &mut rng), Action::ZERO);
    }

    #[test]
    fn explore_frequency_matches_probability() {
        let mut rng = Rng::new(7);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| sample_action(0.7, Mode::Explore, &mut rng) == Action::ONE)
            .count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.7).abs() < 0.01, "frequency {freq}");
    }

    #[test]
    fn zero_weight_value_net_outputs_zero() {
        let w = Matrix::zeros(1, 4).unwrap();
        let value = ValueParams::from_parts(vec![(w, vec![0.0])]).unwrap();
        let (v, _) = value.forward(&[1.0, -2.0, 3.0, 4.0]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn linear_value_layer_hand_computation() {
        let w = Matrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
        let value = ValueParams::from_parts(vec![(w, vec![0.0])]).unwrap();
        let (v, _) = value.forward(&[2.0, 3.0]).unwrap();
        assert_eq!(v, 5.0);
    }

    // Independent re-implementation of the tanh MLP forward pass.
    fn oracle_forward(flat: &[f64], shapes: &[(usize, usize)], x: &[f64]) -> Vec<f64> {
        let mut act = x.to_vec();
        let mut offset = 0;
        for (li, &(fan_in, fan_out)) in shapes.iter().enumerate() {
            let w = &flat[offset..offset + fan_in * fan_out];
            offset += fan_in * fan_out;
            let b = &flat[offset..offset + fan_out];
            offset += fan_out;
            let mut z = vec![0.0; fan_out];
            for i in 0..fan_out {
                z[i] = b[i] + (0..fan_in).map(|j| w[i * fan_in + j] * act[j]).sum::<f64>();
            }
            if li + 1 < shapes.len() {
                for zi in &mut z {
                    *zi = zi.tanh();
                }
            }
            act = z;
        }
        act
    }

    #[test]
    fn value_forward_matches_duplicate_oracle() {
        let mut rng = Rng::new(2718);
        let value = random_value(&mut rng, 5, &[16, 8]);
        let shapes = [(5, 16), (16, 8), (8, 1)];
        for _ in 0..50 {
            let x: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
            let (v, _) = value.forward(&x).unwrap();
            let want = oracle_forward(&value.params_flat(), &shapes, &x)[0];
            assert!((v - want).abs() < 1e-12, "{v} vs {want}");
        }
    }

    #[test]
    fn policy_forward_matches_duplicate_oracle() {
        let mut rng = Rng::new(99);
        let policy = random_policy(&mut rng, 4, &[12, 6]);
        let shapes = [(4, 12), (12, 6), (6, 2)];
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let (p0, p1, _) = policy.forward(&x).unwrap();
            let logits = oracle_forward(&policy.params_flat(), &shapes, &x);
            let m = logits[0].max(logits[1]);
            let (e0, e1) = ((logits[0] - m).exp(), (logits[1] - m).exp());
            let want1 = e1 / (e0 + e1);
            assert!((p1 - want1).abs() < 1e-12, "{p1} vs {want1}");
            assert!((p0 - (1.0 - want1)).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_layer_weight_gradient_is_input() {
        let w = Matrix::from_vec(1, 3, vec![0.4, -0.2, 0.9]).unwrap();
        let value = ValueParams::from_parts(vec![(w, vec![0.0])]).unwrap();
        let x = [2.0, -1.0, 0.5];
        let (_, cache) = value.forward(&x).unwrap();
        let grads = value.backward(&cache, 1.0).unwrap();
        let ranges = value.param_ranges();
        assert_eq!(&grads.as_slice()[ranges[0].weights.clone()], &x);
        assert_eq!(&grads.as_slice()[ranges[0].biases.clone()], &[1.0]);
    }

    #[test]
    fn log_prob_gradient_is_onehot_minus_probs() {
        let policy = passthrough_policy();
        let x = [0.2, 1.1];
        let (p0, p1, cache) = policy.forward(&x).unwrap();
        // L = ln p1  =>  dL/dp = (0, 1/p1); logits gradient lands in biases.
        let grads = policy.backward(&cache, [0.0, 1.0 / p1]).unwrap();
        let ranges = policy.param_ranges();
        let db = &grads.as_slice()[ranges[0].biases.clone()];
        assert!((db[0] - (0.0 - p0)).abs() < 1e-12, "db0 = {}", db[0]);
        assert!((db[1] - (1.0 - p1)).abs() < 1e-12, "db1 = {}", db[1]);
    }

    #[test]
    fn policy_backward_matches_finite_differences() {
        let mut rng = Rng::new(4242);
        for trial in 0..6 {
            let policy = random_policy(&mut rng, 3, &[10, 7]);
            let x: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            let u = [rng.normal(), rng.normal()];
            let (_, _, cache) = policy.forward(&x).unwrap();
            let analytic = policy.backward(&cache, u).unwrap();
            let mut flat = policy.params_flat();
            let numeric = central_diff(&mut flat, |p| {
                let mut probe = policy.clone();
                probe.set_params_flat(p).unwrap();
                let (p0, p1, _) = probe.forward(&x).unwrap();
                u[0] * p0 + u[1] * p1
            });
            let worst = max_relative_error(&numeric, analytic.as_slice());
            assert!(worst < 1e-4, "trial {trial}: max relative error {worst}");
        }
    }

    #[test]
    fn pinned_floor_region_has_zero_gradient_matching_finite_differences() {
        let mut rng = Rng::new(600);
        let mut policy = random_policy(&mut rng, 2, &[6]);
        let amped: Vec<f64> = policy.params_flat().iter().map(|w| w * 60.0).collect();
        policy.set_params_flat(&amped).unwrap();
        let x = [3.0, -3.0];
        let (p0, p1, cache) = policy.forward(&x).unwrap();
        assert_eq!(p0.min(p1), PMIN, "test requires the pinned branch");
        let analytic = policy.backward(&cache, [1.0, -1.0]).unwrap();
        assert!(analytic.as_slice().iter().all(|g| *g == 0.0));
        let mut flat = policy.params_flat();
        let numeric = central_diff(&mut flat, |p| {
            let mut probe = policy.clone();
            probe.set_params_flat(p).unwrap();
            let (a, b, _) = probe.forward(&x).unwrap();
            a - b
        });
        assert!(numeric.iter().all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn value_backward_matches_finite_differences() {
        let mut rng = Rng::new(1717);
        for _ in 0..6 {
            let value = random_value(&mut rng, 4, &[9]);
            let x: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let (_, cache) = value.forward(&x).unwrap();
            let analytic = value.backward(&cache, 1.0).unwrap();
            let mut flat = value.params_flat();
            let numeric = central_diff(&mut flat, |p| {
                let mut probe = value.clone();
                probe.set_params_flat(p).unwrap();
                probe.forward(&x).unwrap().0
            });
            let worst = max_relative_error(&numeric, analytic.as_slice());
            assert!(worst < 1e-4, "max relative error {worst}");
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = Rng::new(1);
        let mut policy = random_policy(&mut rng, 2, &[4]);
        let (_, _, cache) = policy.forward(&[0.5, -0.5]).unwrap();
        let flat = policy.params_flat();
        policy.set_params_flat(&flat).unwrap();
        assert!(matches!(
            policy.backward(&cache, [1.0, 0.0]).unwrap_err(),
            ModelError::StaleCache { .. }
        ));
    }

    #[test]
    fn snapshot_is_isolated_from_live_updates() {
        let mut rng = Rng::new(88);
        let mut live = random_policy(&mut rng, 3, &[5]);
        let frozen = FrozenPolicy::of(&live);
        let x = [0.1, 0.2, 0.3];
        let before = frozen.forward(&x).unwrap();
        let perturbed: Vec<f64> = live.params_flat().iter().map(|w| w + 1.0).collect();
        live.set_params_flat(&perturbed).unwrap();
        let after = frozen.forward(&x).unwrap();
        assert_eq!(before, after);
        assert_ne!(live.forward(&x).map(|(a, b, _)| (a, b)).unwrap(), after);
    }

    #[test]
    fn snapshot_of_snapshot_is_identical() {
        let mut rng = Rng::new(12);
        let live = random_policy(&mut rng, 2, &[4]);
        let frozen = FrozenPolicy::of(&live);
        let again = frozen.snapshot();
        for _ in 0..20 {
            let x = [rng.normal(), rng.normal()];
            assert_eq!(frozen.forward(&x).unwrap(), again.forward(&x).unwrap());
        }
    }

    #[test]
    fn snapshot_agrees_with_live_on_hundred_random_inputs() {
        let mut rng = Rng::new(55);
        let live = random_policy(&mut rng, 4, &[16, 16]);
        let frozen = FrozenPolicy::of(&live);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let (p0, p1, _) = live.forward(&x).unwrap();
            assert_eq!(frozen.forward(&x).unwrap(), (p0, p1));
        }
    }

    #[test]
    fn snapshot_outputs_bit_identical_after_many_live_updates() {
        let mut rng = Rng::new(321);
        let mut live = random_policy(&mut rng, 2, &[8]);
        let frozen = FrozenPolicy::of(&live);
        let xs: Vec<[f64; 2]> = (0..10).map(|_| [rng.normal(), rng.normal()]).collect();
        let before: Vec<(f64, f64)> = xs.iter().map(|x| frozen.forward(x).unwrap()).collect();
        for _ in 0..5 {
            let stepped: Vec<f64> = live.params_flat().iter().map(|w| w - 0.01).collect();
            live.set_params_flat(&stepped).unwrap();
        }
        let after: Vec<(f64, f64)> = xs.iter().map(|x| frozen.forward(x).unwrap()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = Rng::new(909);
        let policy = random_policy(&mut rng, 3, &[8, 4]);
        let path = dir.path().join("policy.ckpt");
        save_policy(&policy, &path).unwrap();
        let loaded = load_policy(&path).unwrap();
        let a: Vec<u64> = policy.params_flat().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = loaded.params_flat().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(policy.p_min(), loaded.p_min());
        assert_eq!(policy.hidden_sizes(), loaded.hidden_sizes());

        let value = random_value(&mut rng, 3, &[8]);
        let vpath = dir.path().join("value.ckpt");
        save_value(&value, &vpath).unwrap();
        let vloaded = load_value(&vpath).unwrap();
        let a: Vec<u64> = value.params_flat().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = vloaded.params_flat().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupt_checkpoint_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, "bppo-params v1\nkind policy\np_min 1e-6\nlayers one\n").unwrap();
        match load_policy(&path).unwrap_err() {
            ModelError::Checkpoint { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn wrong_kind_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = Rng::new(909);
        let value = random_value(&mut rng, 2, &[]);
        let path = dir.path().join("value.ckpt");
        save_value(&value, &path).unwrap();
        assert!(matches!(load_policy(&path).unwrap_err(), ModelError::Checkpoint { .. }));
    }
}
