//! Experiment plumbing: task realization, run directories with manifests,
//! byte-exact reruns, comparison grids, and report series extraction.
//!
//! Reproducibility contract: every stochastic stage draws from its own
//! stream derived from the run seed (1 training data, 2 test data, 3 label
//! noise, 4 training), so a manifest's config plus its dataset files pin the
//! entire run. Serialized metrics never include measured wall time, which
//! keeps rerun outputs byte-identical.
//!
//! Evaluation protocol: synthetic tasks generate the test split separately
//! from the training split, and the test split is always clean and
//! class-balanced. Label noise and class imbalance are training pathologies;
//! decision quality is measured against the undistorted concept, which is
//! also what makes the sampler ablation's cost visible instead of rewarding
//! majority-class collapse.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    apply_label_noise, content_hash, gen_blobs, gen_xor, load_dataset, save_dataset, DataError,
    Dataset, FileFormat, NoiseSpec, Provenance,
};
use crate::eval::{self, BinReport, EvalError};
use crate::linalg::{derive_seed, Rng};
use crate::model::{self, ModelError};
use crate::objective::LossBreakdown;
use crate::trainer::{self, EpochReport, Method, Sampler, TrainConfig, TrainError, TrainOutput};

/// RNG stream indices; see the module doc. Public because they define the
/// reproducibility protocol: external code that wants to replay a harness
/// stage must derive the same stream.
pub const STREAM_TRAIN_DATA: u64 = 1;
pub const STREAM_TEST_DATA: u64 = 2;
pub const STREAM_NOISE: u64 = 3;
pub const STREAM_TRAINING: u64 = 4;

pub const FORMAT_VERSION: u32 = 1;

pub fn code_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Json { path: String, message: String },
    #[error("run directory {0} already exists; pass --force to replace it")]
    RunDirExists(String),
    #[error("{path} changed on disk: content hash {got}, manifest pinned {want}")]
    DatasetDrift { path: String, got: String, want: String },
    #[error("manifest format_version {got} is newer than supported {want}")]
    FormatVersion { got: u32, want: u32 },
    #[error("unknown comparison arm {0:?}; expected binaryppo, sft, vanilla_ppo, no-entropy, or natural")]
    UnknownArm(String),
    #[error("comparison needs at least one arm and one seed")]
    EmptyGrid,
    #[error("comparison arms collapse to the same label {0:?}; with this base configuration the requested methods coincide")]
    DuplicateArm(String),
    #[error("numerical abort; diagnostic written to {0}")]
    Aborted(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

fn now_unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

// --- Synthetic tasks --------------------------------------------------------

/// Generator family and its geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum TaskKind {
    Blobs { separation: f64, dim: usize },
    Xor { scale: f64 },
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Blobs { .. } => "blobs",
            TaskKind::Xor { .. } => "xor",
        }
    }

    fn generate(&self, n: usize, noise: NoiseSpec, rng: &mut Rng) -> Result<Dataset, DataError> {
        match *self {
            TaskKind::Blobs { separation, dim } => gen_blobs(n, separation, dim, noise, rng),
            TaskKind::Xor { scale } => gen_xor(n, scale, noise, rng),
        }
    }
}

/// A synthetic experiment cell: training split with optional noise and
/// imbalance, and a clean balanced test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub n_train: usize,
    pub n_test: usize,
    pub flip_rate: f64,
    pub imbalance: f64,
}

impl TaskSpec {
    pub fn realize(&self, seed: u64) -> Result<(Dataset, Dataset), HarnessError> {
        let mut train_rng = Rng::new(derive_seed(seed, STREAM_TRAIN_DATA));
        let clean = self.kind.generate(
            self.n_train,
            NoiseSpec { flip_rate: 0.0, imbalance: self.imbalance },
            &mut train_rng,
        )?;
        let train = if self.flip_rate > 0.0 {
            let mut noise_rng = Rng::new(derive_seed(seed, STREAM_NOISE));
            apply_label_noise(&clean, self.flip_rate, &mut noise_rng)?
        } else {
            clean
        };
        let mut test_rng = Rng::new(derive_seed(seed, STREAM_TEST_DATA));
        let test = self.kind.generate(self.n_test, NoiseSpec::default(), &mut test_rng)?;
        Ok((train, test))
    }

    pub fn label(&self) -> String {
        let geometry = match self.kind {
            TaskKind::Blobs { separation, dim } => format!("blobs sep={separation} dim={dim}"),
            TaskKind::Xor { scale } => format!("xor scale={scale}"),
        };
        format!(
            "{geometry} n_train={} n_test={} flip={:.2} imbalance={:.2}",
            self.n_train, self.n_test, self.flip_rate, self.imbalance
        )
    }
}

// --- Dataset references -----------------------------------------------------

fn sidecar_path(data_path: &Path) -> PathBuf {
    let mut name = data_path.file_name().unwrap_or_default().to_os_string();
    name.push(".provenance.json");
    data_path.with_file_name(name)
}

/// A dataset file pinned by content hash, with provenance from the sidecar
/// when one exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: String,
    pub format: FileFormat,
    pub fnv1a64: String,
    pub provenance: Provenance,
}

impl DatasetRef {
    /// Load a dataset file and record its identity.
    pub fn capture(path: &Path, format: FileFormat) -> Result<(DatasetRef, Dataset), HarnessError> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        let hash = content_hash(&bytes);
        let dataset = load_dataset(path, format)?;
        let sidecar = sidecar_path(path);
        let provenance = match std::fs::read_to_string(&sidecar) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| HarnessError::Json {
                path: sidecar.display().to_string(),
                message: e.to_string(),
            })?,
            Err(_) => dataset.provenance().clone(),
        };
        let reference = DatasetRef {
            path: path.display().to_string(),
            format,
            fnv1a64: hash,
            provenance,
        };
        Ok((reference, dataset))
    }

    /// Reload the file, failing if its bytes no longer match the pinned hash.
    pub fn load_verified(&self) -> Result<Dataset, HarnessError> {
        let path = Path::new(&self.path);
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        let got = content_hash(&bytes);
        if got != self.fnv1a64 {
            return Err(HarnessError::DatasetDrift {
                path: self.path.clone(),
                got,
                want: self.fnv1a64.clone(),
            });
        }
        Ok(load_dataset(path, self.format)?)
    }
}

/// Write a dataset plus its provenance sidecar.
pub fn write_dataset_with_provenance(
    dataset: &Dataset,
    path: &Path,
    format: FileFormat,
) -> Result<(), HarnessError> {
    save_dataset(dataset, path, format)?;
    let sidecar = sidecar_path(path);
    let text = serde_json::to_string_pretty(dataset.provenance()).map_err(|e| HarnessError::Json {
        path: sidecar.display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::write(&sidecar, text).map_err(io_err(&sidecar))?;
    Ok(())
}

// --- Run directories ---------------------------------------------------------

/// Everything needed to reproduce a run bit-exactly, plus bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub code_version: String,
    pub config: TrainConfig,
    pub train_data: DatasetRef,
    pub eval_data: Option<DatasetRef>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

/// File layout of one run directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn manifest(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }
    pub fn metrics(&self) -> PathBuf {
        self.dir.join("metrics.jsonl")
    }
    pub fn bins(&self) -> PathBuf {
        self.dir.join("bins.jsonl")
    }
    pub fn policy(&self) -> PathBuf {
        self.dir.join("policy.ckpt")
    }
    pub fn value(&self) -> PathBuf {
        self.dir.join("value.ckpt")
    }
    pub fn eval(&self) -> PathBuf {
        self.dir.join("eval.json")
    }
    pub fn diagnostic(&self) -> PathBuf {
        self.dir.join("diagnostic.json")
    }
}

/// Final-policy metrics on a held-out dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub accuracy: f64,
    pub auroc: f64,
    pub auprc: f64,
    pub bins: BinReport,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub paths: RunPaths,
    pub output: TrainOutput,
    pub eval: Option<EvalSummary>,
    pub manifest: RunManifest,
}

pub fn evaluate_policy(
    policy: &crate::model::PolicyParams,
    dataset: &Dataset,
    bins: usize,
) -> Result<EvalSummary, HarnessError> {
    let preds = eval::score_dataset(policy, dataset)?;
    Ok(EvalSummary {
        accuracy: eval::accuracy(&preds, 0.5)?,
        auroc: eval::auroc(&preds)?,
        auprc: eval::auprc(&preds)?,
        bins: eval::confidence_bins(&preds, bins)?,
    })
}

fn prepare_run_dir(dir: &Path, force: bool) -> Result<(), HarnessError> {
    if dir.exists() {
        if !force {
            return Err(HarnessError::RunDirExists(dir.display().to_string()));
        }
        std::fs::remove_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(())
}

/// Default append-only run directory name under `root`.
pub fn fresh_run_dir(root: &Path, seed: u64) -> PathBuf {
    let base = now_unix_ms();
    let mut n = 0u32;
    loop {
        let candidate = root.join(format!("run-{base}-s{seed}{}", if n == 0 { String::new() } else { format!("-{n}") }));
        if !candidate.exists() {
            return candidate;
        }
        n += 1;
    }
}

fn write_json_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), HarnessError> {
    let mut out = String::new();
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| HarnessError::Json {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(path))?;
    Ok(())
}

fn write_json_pretty<T: Serialize>(path: &Path, item: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(item).map_err(|e| HarnessError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(io_err(path))?;
    Ok(())
}

/// Train from file-backed data, writing a complete run directory. On a
/// numerical abort the diagnostic batch dump lands in the run directory and
/// the error names it.
pub fn execute_run(
    config: &TrainConfig,
    train_ref: DatasetRef,
    train_data: &Dataset,
    eval_pair: Option<(DatasetRef, &Dataset)>,
    dir: PathBuf,
    force: bool,
) -> Result<RunOutcome, HarnessError> {
    prepare_run_dir(&dir, force)?;
    let paths = RunPaths { dir };
    let started_unix_ms = now_unix_ms();
    let mut rng = Rng::new(derive_seed(config.seed, STREAM_TRAINING));
    let output = match trainer::run(config, train_data, &mut rng) {
        Ok(output) => output,
        Err(TrainError::NumericalAbort(dump)) => {
            write_json_pretty(&paths.diagnostic(), &dump)?;
            return Err(HarnessError::Aborted(paths.diagnostic().display().to_string()));
        }
        Err(e) => return Err(e.into()),
    };
    write_json_lines(&paths.metrics(), &output.reports)?;
    write_json_lines(&paths.bins(), &output.epoch_bins)?;
    model::save_policy(&output.policy, &paths.policy())?;
    if let Some(value) = &output.value {
        model::save_value(value, &paths.value())?;
    }
    let (eval_ref, eval) = match eval_pair {
        Some((reference, dataset)) => {
            let summary = evaluate_policy(&output.policy, dataset, config.bins)?;
            write_json_pretty(&paths.eval(), &summary)?;
            (Some(reference), Some(summary))
        }
        None => (None, None),
    };
    let manifest = RunManifest {
        format_version: FORMAT_VERSION,
        code_version: code_version().to_string(),
        config: config.clone(),
        train_data: train_ref,
        eval_data: eval_ref,
        started_unix_ms,
        finished_unix_ms: now_unix_ms(),
    };
    write_json_pretty(&paths.manifest(), &manifest)?;
    Ok(RunOutcome { paths, output, eval, manifest })
}

pub fn load_manifest(path: &Path) -> Result<RunManifest, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| HarnessError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if manifest.format_version > FORMAT_VERSION {
        return Err(HarnessError::FormatVersion {
            got: manifest.format_version,
            want: FORMAT_VERSION,
        });
    }
    Ok(manifest)
}

/// Re-execute a prior run from its manifest: datasets are reloaded from the
/// pinned paths (hash-verified), and the stored config drives training.
pub fn rerun_from_manifest(
    manifest_path: &Path,
    dir: PathBuf,
    force: bool,
) -> Result<RunOutcome, HarnessError> {
    let manifest = load_manifest(manifest_path)?;
    let train_data = manifest.train_data.load_verified()?;
    let eval_loaded = match &manifest.eval_data {
        Some(reference) => Some((reference.clone(), reference.load_verified()?)),
        None => None,
    };
    let eval_pair = eval_loaded.as_ref().map(|(r, d)| (r.clone(), d));
    execute_run(&manifest.config, manifest.train_data.clone(), &train_data, eval_pair, dir, force)
}

// --- Comparison grids ---------------------------------------------------------

/// One row family of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub label: String,
    pub config: TrainConfig,
}

/// Row label for a method under the given config: default-config binaryppo
/// keeps its name, while recognized single-knob ablations are labeled by
/// what was removed.
pub fn arm_label(config: &TrainConfig) -> String {
    if config.method != Method::Binaryppo {
        return config.method.to_string();
    }
    let mut tags = Vec::new();
    if config.loss.gamma == 0.0 {
        tags.push("no-entropy");
    }
    if config.sampler == Sampler::Natural {
        tags.push("natural");
    }
    if tags.is_empty() {
        "binaryppo".to_string()
    } else {
        tags.join("+")
    }
}

/// Build a named arm from the base configuration.
pub fn arm_for(name: &str, base: &TrainConfig) -> Result<Arm, HarnessError> {
    let mut config = base.clone();
    match name {
        "binaryppo" => config.method = Method::Binaryppo,
        "sft" => config.method = Method::Sft,
        "vanilla_ppo" => config.method = Method::VanillaPpo,
        "no-entropy" => {
            config.method = Method::Binaryppo;
            config.loss.gamma = 0.0;
        }
        "natural" => {
            config.method = Method::Binaryppo;
            config.sampler = Sampler::Natural;
        }
        other => return Err(HarnessError::UnknownArm(other.to_string())),
    }
    Ok(Arm { label: arm_label(&config), config })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub accuracy: f64,
    pub auroc: f64,
    pub auprc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub arm: String,
    pub seed: u64,
    /// Metrics, or the sub-run's error message; failures never stop the grid.
    pub outcome: Result<CellMetrics, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub mean: Option<CellMetrics>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub task: TaskSpec,
    pub seeds: Vec<u64>,
    pub cells: Vec<CellResult>,
    pub summaries: Vec<ArmSummary>,
    /// Ordering observations: ablated arms that tie or beat the full method.
    pub flags: Vec<String>,
}

impl CompareReport {
    pub fn arm_mean(&self, arm: &str) -> Option<&CellMetrics> {
        self.summaries.iter().find(|s| s.arm == arm).and_then(|s| s.mean.as_ref())
    }
}

/// Run the factorial grid arms × seeds on freshly realized task data. Each
/// cell derives its data and training streams from its seed, so two arms see
/// identical data at the same seed and the grid is order-independent.
pub fn run_compare(task: &TaskSpec, arms: &[Arm], seeds: &[u64]) -> Result<CompareReport, HarnessError> {
    if arms.is_empty() || seeds.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    for (i, arm) in arms.iter().enumerate() {
        if arms[..i].iter().any(|prior| prior.label == arm.label) {
            return Err(HarnessError::DuplicateArm(arm.label.clone()));
        }
    }
    let mut cells = Vec::with_capacity(arms.len() * seeds.len());
    for arm in arms {
        for &seed in seeds {
            let outcome = run_cell(task, &arm.config, seed);
            cells.push(CellResult { arm: arm.label.clone(), seed, outcome });
        }
    }
    let mut summaries = Vec::with_capacity(arms.len());
    for arm in arms {
        let mine: Vec<&CellResult> = cells.iter().filter(|c| c.arm == arm.label).collect();
        let ok: Vec<&CellMetrics> = mine.iter().filter_map(|c| c.outcome.as_ref().ok()).collect();
        let failures = mine.len() - ok.len();
        let mean = if ok.is_empty() {
            None
        } else {
            let k = ok.len() as f64;
            Some(CellMetrics {
                accuracy: ok.iter().map(|m| m.accuracy).sum::<f64>() / k,
                auroc: ok.iter().map(|m| m.auroc).sum::<f64>() / k,
                auprc: ok.iter().map(|m| m.auprc).sum::<f64>() / k,
            })
        };
        summaries.push(ArmSummary { arm: arm.label.clone(), mean, failures });
    }
    let flags = ordering_flags(&summaries);
    Ok(CompareReport { task: *task, seeds: seeds.to_vec(), cells, summaries, flags })
}

fn run_cell(task: &TaskSpec, config: &TrainConfig, seed: u64) -> Result<CellMetrics, String> {
    let attempt = || -> Result<CellMetrics, HarnessError> {
        let (train_data, test_data) = task.realize(seed)?;
        let mut config = config.clone();
        config.seed = seed;
        let mut rng = Rng::new(derive_seed(seed, STREAM_TRAINING));
        let output = trainer::run(&config, &train_data, &mut rng)?;
        let summary = evaluate_policy(&output.policy, &test_data, config.bins)?;
        Ok(CellMetrics {
            accuracy: summary.accuracy,
            auroc: summary.auroc,
            auprc: summary.auprc,
        })
    };
    attempt().map_err(|e| e.to_string())
}

fn ordering_flags(summaries: &[ArmSummary]) -> Vec<String> {
    let baseline = match summaries.iter().find(|s| s.arm == "binaryppo").and_then(|s| s.mean.as_ref()) {
        Some(mean) => mean.accuracy,
        None => return Vec::new(),
    };
    let mut flags = Vec::new();
    for summary in summaries {
        if summary.arm == "binaryppo" {
            continue;
        }
        if let Some(mean) = &summary.mean {
            if mean.accuracy >= baseline {
                let relation = if mean.accuracy == baseline { "ties" } else { "beats" };
                flags.push(format!(
                    "{} {} binaryppo on this task (mean accuracy {:.4} vs {:.4})",
                    summary.arm, relation, mean.accuracy, baseline
                ));
            }
        }
    }
    flags
}

/// Deterministic text rendering: per-seed rows, mean rows, failure notes,
/// and ordering flags.
pub fn render_table(report: &CompareReport) -> String {
    let width = report
        .summaries
        .iter()
        .map(|s| s.arm.len())
        .chain(std::iter::once("arm".len()))
        .max()
        .unwrap_or(3);
    let mut out = String::new();
    let _ = writeln!(out, "task: {}", report.task.label());
    let _ = writeln!(out, "seeds: {:?}", report.seeds);
    let _ = writeln!(out, "{:<width$} {:>6} {:>10} {:>10} {:>10}", "arm", "seed", "accuracy", "auroc", "auprc");
    for cell in &report.cells {
        match &cell.outcome {
            Ok(m) => {
                let _ = writeln!(
                    out,
                    "{:<width$} {:>6} {:>10.4} {:>10.4} {:>10.4}",
                    cell.arm, cell.seed, m.accuracy, m.auroc, m.auprc
                );
            }
            Err(message) => {
                let _ = writeln!(out, "{:<width$} {:>6} ERROR {message}", cell.arm, cell.seed);
            }
        }
    }
    for summary in &report.summaries {
        match &summary.mean {
            Some(m) => {
                let _ = writeln!(
                    out,
                    "{:<width$} {:>6} {:>10.4} {:>10.4} {:>10.4}{}",
                    summary.arm,
                    "mean",
                    m.accuracy,
                    m.auroc,
                    m.auprc,
                    if summary.failures > 0 {
                        format!("  ({} failed cells excluded)", summary.failures)
                    } else {
                        String::new()
                    }
                );
            }
            None => {
                let _ = writeln!(out, "{:<width$} {:>6} all cells failed", summary.arm, "mean");
            }
        }
    }
    for flag in &report.flags {
        let _ = writeln!(out, "flag: {flag}");
    }
    out
}

// --- Report extraction --------------------------------------------------------

/// Epoch series pulled from a run's metrics stream, shaped for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    /// One entry per epoch.
    pub loss: Vec<(usize, LossBreakdown)>,
    /// Live-policy mean entropy per epoch; length equals the epoch count.
    pub entropy: Vec<(usize, f64)>,
    /// Successive-policy KL; entry k covers epochs (k -> k+1), so the series
    /// is one shorter than the epoch count.
    pub kl: Vec<((usize, usize), f64)>,
}

pub fn extract_series(reports: &[EpochReport]) -> RunSeries {
    let loss = reports.iter().map(|r| (r.epoch, r.loss)).collect();
    let entropy = reports.iter().map(|r| (r.epoch, r.mean_entropy)).collect();
    let kl = reports
        .iter()
        .skip(1)
        .map(|r| ((r.epoch - 1, r.epoch), r.mean_kl))
        .collect();
    RunSeries { loss, entropy, kl }
}

pub fn load_metrics(path: &Path) -> Result<Vec<EpochReport>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut reports = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let report: EpochReport = serde_json::from_str(line).map_err(|e| HarnessError::Json {
            path: format!("{}:{}", path.display(), i + 1),
            message: e.to_string(),
        })?;
        reports.push(report);
    }
    Ok(reports)
}

pub fn load_bins(path: &Path) -> Result<Vec<BinReport>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut bins = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let report: BinReport = serde_json::from_str(line).map_err(|e| HarnessError::Json {
            path: format!("{}:{}", path.display(), i + 1),
            message: e.to_string(),
        })?;
        bins.push(report);
    }
    Ok(bins)
}

/// Render the plot-data files for a run directory into `out_dir`:
/// `loss.tsv`, `entropy.tsv`, `kl.tsv`, and `bins-epoch<k>.tsv`.
pub fn write_report_files(
    reports: &[EpochReport],
    bins: &[BinReport],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let series = extract_series(reports);
    let mut written = Vec::new();

    let mut loss = String::from("epoch\tppo\tvalue\tsupervised\tentropy_mean\ttotal\n");
    for (epoch, b) in &series.loss {
        let _ = writeln!(
            loss,
            "{epoch}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}",
            b.ppo, b.value, b.supervised, b.entropy_mean, b.total
        );
    }
    let path = out_dir.join("loss.tsv");
    std::fs::write(&path, loss).map_err(io_err(&path))?;
    written.push(path);

    let mut entropy = String::from("epoch\tmean_entropy\n");
    for (epoch, h) in &series.entropy {
        let _ = writeln!(entropy, "{epoch}\t{h:?}");
    }
    let path = out_dir.join("entropy.tsv");
    std::fs::write(&path, entropy).map_err(io_err(&path))?;
    written.push(path);

    let mut kl = String::from("epochs\tmean_kl\n");
    for ((from, to), v) in &series.kl {
        let _ = writeln!(kl, "{from}->{to}\t{v:?}");
    }
    let path = out_dir.join("kl.tsv");
    std::fs::write(&path, kl).map_err(io_err(&path))?;
    written.push(path);

    for (i, report) in bins.iter().enumerate() {
        let mut table = String::from("bin\tlow\thigh\tcount\tmean_confidence\taccuracy\tmean_advantage\n");
        for (b, stat) in report.bins.iter().enumerate() {
            let opt = |v: &Option<f64>| match v {
                Some(x) => format!("{x:?}"),
                None => "-".to_string(),
            };
            let _ = writeln!(
                table,
                "{b}\t{:?}\t{:?}\t{}\t{}\t{}\t{}",
                report.edges[b],
                report.edges[b + 1],
                stat.count,
                opt(&stat.mean_confidence),
                opt(&stat.accuracy),
                opt(&stat.mean_advantage),
            );
        }
        let path = out_dir.join(format!("bins-epoch{}.tsv", i + 1));
        std::fs::write(&path, table).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}
