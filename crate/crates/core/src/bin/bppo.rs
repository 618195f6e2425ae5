//! Command-line front end: dataset generation, training runs, comparison
//! grids, and report extraction.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error
//! (unreadable, malformed, or drifted files), 4 numerical abort during
//! training (a diagnostic batch dump is left in the run directory).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use binaryppo::config::{self, ConfigError, Overrides};
use binaryppo::data::{DataError, FileFormat, NoiseSpec};
use binaryppo::harness::{
    self, arm_for, fresh_run_dir, render_table, DatasetRef, HarnessError, TaskKind, TaskSpec,
};
use binaryppo::linalg::Rng;
use binaryppo::reward::RewardShape;
use binaryppo::trainer::{Method, Optimizer, Sampler, Schedule};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser)]
#[command(
    name = "bppo",
    about = "Confidence-weighted offline policy optimization for binary classifiers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (plus provenance sidecar) to disk.
    Generate(GenerateArgs),
    /// Train a policy, writing a reproducible run directory.
    Train(TrainArgs),
    /// Run a methods-by-seeds comparison grid on a synthetic task.
    Compare(CompareArgs),
    /// Extract plot-ready series and bin tables from a run directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct TaskArgs {
    /// Task family: blobs or xor.
    #[arg(long)]
    task: String,
    /// Blobs: distance between the class means.
    #[arg(long, default_value_t = 4.0)]
    sep: f64,
    /// Blobs: feature dimension.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Xor: lobe center magnitude.
    #[arg(long, default_value_t = 2.5)]
    scale: f64,
    /// Label flip probability in [0, 0.5).
    #[arg(long, default_value_t = 0.0)]
    flip: f64,
    /// Positive-class fraction in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    imbalance: f64,
}

impl TaskArgs {
    fn kind(&self) -> Result<TaskKind, String> {
        match self.task.as_str() {
            "blobs" => Ok(TaskKind::Blobs { separation: self.sep, dim: self.dim }),
            "xor" => Ok(TaskKind::Xor { scale: self.scale }),
            other => Err(format!("unknown task {other:?}; expected blobs or xor")),
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    task: TaskArgs,
    /// Number of examples.
    #[arg(long)]
    n: usize,
    /// Generator seed.
    #[arg(long)]
    seed: u64,
    /// Output file; extension picks the format unless --format is given.
    #[arg(long)]
    out: PathBuf,
    /// csv or jsonl.
    #[arg(long)]
    format: Option<FileFormat>,
    /// Overwrite an existing output file.
    #[arg(long)]
    force: bool,
}

/// Training knobs shared by train and compare; every flag overrides the
/// config file, which overrides built-in defaults.
#[derive(Args, Default)]
struct KnobArgs {
    /// TOML config file (keys: method, epochs, schedule, batch_size,
    /// learning_rate, optimizer, sampler, seed, normalize_advantages, bins,
    /// hidden, loss.*, reward.*).
    #[arg(long)]
    config: Option<PathBuf>,
    /// binaryppo, vanilla_ppo, or sft.
    #[arg(long)]
    method: Option<Method>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// ee, pe, or a comma list of explore/exploit.
    #[arg(long)]
    schedule: Option<Schedule>,
    /// Examples per optimizer step.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Step size for both networks.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// adam or sgd.
    #[arg(long)]
    optimizer: Option<Optimizer>,
    /// balanced or natural minibatch sampling.
    #[arg(long)]
    sampler: Option<Sampler>,
    /// Root seed; every stochastic stage derives its own stream from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Standardize advantages within each batch.
    #[arg(long)]
    normalize_advantages: Option<bool>,
    /// Confidence-bin count for bin reports.
    #[arg(long)]
    bins: Option<usize>,
    /// Hidden layer widths, e.g. 32,32.
    #[arg(long, value_parser = config::parse_hidden)]
    hidden: Option<Vec<usize>>,
    /// Value-loss weight.
    #[arg(long)]
    alpha: Option<f64>,
    /// Supervised cross-entropy weight.
    #[arg(long)]
    beta: Option<f64>,
    /// Entropy-bonus weight.
    #[arg(long)]
    gamma: Option<f64>,
    /// PPO clip width.
    #[arg(long)]
    clip_epsilon: Option<f64>,
    /// Reward scale.
    #[arg(long)]
    kappa: Option<f64>,
    /// literal-log, one-plus-log, or linear.
    #[arg(long)]
    shape: Option<RewardShape>,
    /// Probability floor.
    #[arg(long)]
    p_min: Option<f64>,
}

impl KnobArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            method: self.method,
            epochs: self.epochs,
            schedule: self.schedule.clone(),
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            sampler: self.sampler,
            seed: self.seed,
            normalize_advantages: self.normalize_advantages,
            bins: self.bins,
            hidden: self.hidden.clone(),
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            clip_epsilon: self.clip_epsilon,
            kappa: self.kappa,
            shape: self.shape,
            p_min: self.p_min,
        }
    }

    fn any_set(&self) -> bool {
        self.config.is_some()
            || self.method.is_some()
            || self.epochs.is_some()
            || self.schedule.is_some()
            || self.batch_size.is_some()
            || self.learning_rate.is_some()
            || self.optimizer.is_some()
            || self.sampler.is_some()
            || self.seed.is_some()
            || self.normalize_advantages.is_some()
            || self.bins.is_some()
            || self.hidden.is_some()
            || self.alpha.is_some()
            || self.beta.is_some()
            || self.gamma.is_some()
            || self.clip_epsilon.is_some()
            || self.kappa.is_some()
            || self.shape.is_some()
            || self.p_min.is_some()
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset file.
    #[arg(long, required_unless_present = "from_manifest", conflicts_with = "from_manifest")]
    data: Option<PathBuf>,
    /// Dataset format; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<FileFormat>,
    /// Optional held-out dataset; adds eval.json to the run directory.
    #[arg(long, conflicts_with = "from_manifest")]
    eval_data: Option<PathBuf>,
    /// Reproduce a prior run from its manifest (datasets are hash-verified).
    #[arg(long)]
    from_manifest: Option<PathBuf>,
    /// Run directory; default is a timestamped directory under --runs-root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root for auto-named run directories.
    #[arg(long, default_value = "runs")]
    runs_root: PathBuf,
    /// Replace an existing run directory.
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    knobs: KnobArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    task: TaskArgs,
    /// Training split size per cell.
    #[arg(long, default_value_t = 2000)]
    n_train: usize,
    /// Clean balanced test split size per cell.
    #[arg(long, default_value_t = 500)]
    n_test: usize,
    /// Comma list of arms: binaryppo, sft, vanilla_ppo, no-entropy, natural.
    #[arg(long, default_value = "binaryppo,sft,vanilla_ppo")]
    methods: String,
    /// Comma list of seeds; every arm runs every seed on identical data.
    #[arg(long, default_value = "1,2,3")]
    seeds: String,
    /// Write the rendered table to this file as well as stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the full grid results as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    knobs: KnobArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory produced by train.
    #[arg(long)]
    run: PathBuf,
    /// Output directory for the series files; default <run>/report.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn usage(message: impl Into<String>) -> CliError {
        CliError { message: message.into(), code: EXIT_USAGE }
    }

    fn data(message: impl Into<String>) -> CliError {
        CliError { message: message.into(), code: EXIT_DATA }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> CliError {
        match e {
            ConfigError::Io { .. } | ConfigError::Parse { .. } => CliError::usage(e.to_string()),
            ConfigError::Invalid(_) => CliError::usage(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> CliError {
        CliError::data(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> CliError {
        let code = match &e {
            HarnessError::Aborted(_) => EXIT_NUMERIC,
            HarnessError::Train(_)
            | HarnessError::UnknownArm(_)
            | HarnessError::EmptyGrid
            | HarnessError::DuplicateArm(_) => EXIT_USAGE,
            HarnessError::RunDirExists(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        CliError { message: e.to_string(), code }
    }
}

fn infer_format(path: &Path, explicit: Option<FileFormat>) -> Result<FileFormat, CliError> {
    if let Some(format) = explicit {
        return Ok(format);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(FileFormat::Csv),
        Some("jsonl") => Ok(FileFormat::Jsonl),
        other => Err(CliError::usage(format!(
            "cannot infer dataset format from extension {other:?}; pass --format csv|jsonl"
        ))),
    }
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let kind = args.task.kind().map_err(CliError::usage)?;
    let noise = NoiseSpec { flip_rate: args.task.flip, imbalance: args.task.imbalance };
    noise.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let format = infer_format(&args.out, args.format)?;
    if args.out.exists() && !args.force {
        return Err(CliError::usage(format!(
            "{} already exists; pass --force to overwrite",
            args.out.display()
        )));
    }
    let mut rng = Rng::new(args.seed);
    let dataset = match kind {
        TaskKind::Blobs { separation, dim } => {
            binaryppo::data::gen_blobs(args.n, separation, dim, noise, &mut rng)?
        }
        TaskKind::Xor { scale } => binaryppo::data::gen_xor(args.n, scale, noise, &mut rng)?,
    };
    harness::write_dataset_with_provenance(&dataset, &args.out, format)?;
    println!(
        "wrote {} examples to {} (provenance sidecar alongside)",
        dataset.len(),
        args.out.display()
    );
    Ok(())
}

fn print_run_summary(outcome: &harness::RunOutcome) {
    println!("run directory: {}", outcome.paths.dir.display());
    for report in &outcome.output.reports {
        println!(
            "epoch {:>3} [{}] total {:.6} entropy {:.4} kl {:.6} train-acc {:.4}",
            report.epoch,
            report.mode,
            report.loss.total,
            report.mean_entropy,
            report.mean_kl,
            report.train_accuracy
        );
    }
    if let Some(eval) = &outcome.eval {
        println!(
            "eval: accuracy {:.4} auroc {:.4} auprc {:.4}",
            eval.accuracy, eval.auroc, eval.auprc
        );
    }
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    if let Some(manifest_path) = &args.from_manifest {
        if args.knobs.any_set() {
            return Err(CliError::usage(
                "--from-manifest reproduces the stored configuration; drop the other training flags",
            ));
        }
        let manifest = harness::load_manifest(manifest_path)?;
        let dir = args
            .out
            .clone()
            .unwrap_or_else(|| fresh_run_dir(&args.runs_root, manifest.config.seed));
        let outcome = harness::rerun_from_manifest(manifest_path, dir, args.force)?;
        print_run_summary(&outcome);
        return Ok(());
    }
    let data_path = args.data.as_ref().expect("clap enforces --data without --from-manifest");
    let config = config::resolve(args.knobs.config.as_deref(), &args.knobs.overrides())?;
    let format = infer_format(data_path, args.format)?;
    let (train_ref, train_data) = DatasetRef::capture(data_path, format)?;
    let eval_pair = match &args.eval_data {
        Some(path) => {
            let format = infer_format(path, args.format)?;
            Some(DatasetRef::capture(path, format)?)
        }
        None => None,
    };
    let dir = args.out.clone().unwrap_or_else(|| fresh_run_dir(&args.runs_root, config.seed));
    let eval_arg = eval_pair.as_ref().map(|(r, d)| (r.clone(), d));
    let outcome = harness::execute_run(&config, train_ref, &train_data, eval_arg, dir, args.force)?;
    print_run_summary(&outcome);
    Ok(())
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u64>()
                .map_err(|_| CliError::usage(format!("invalid seed {tok:?}")))
        })
        .collect()
}

fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let kind = args.task.kind().map_err(CliError::usage)?;
    let task = TaskSpec {
        kind,
        n_train: args.n_train,
        n_test: args.n_test,
        flip_rate: args.task.flip,
        imbalance: args.task.imbalance,
    };
    NoiseSpec { flip_rate: args.task.flip, imbalance: args.task.imbalance }
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let base = config::resolve(args.knobs.config.as_deref(), &args.knobs.overrides())?;
    let seeds = parse_seeds(&args.seeds)?;
    let mut arms = Vec::new();
    for name in args.methods.split(',') {
        arms.push(arm_for(name.trim(), &base)?);
    }
    let report = harness::run_compare(&task, &arms, &seeds)?;
    let table = render_table(&report);
    print!("{table}");
    if let Some(path) = &args.out {
        std::fs::write(path, &table)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    }
    if let Some(path) = &args.json {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::data(format!("cannot serialize grid results: {e}")))?;
        std::fs::write(path, json)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let run = &args.run;
    let metrics_path = run.join("metrics.jsonl");
    let bins_path = run.join("bins.jsonl");
    let reports = harness::load_metrics(&metrics_path)?;
    if reports.is_empty() {
        return Err(CliError::data(format!(
            "{} holds no epoch records",
            metrics_path.display()
        )));
    }
    let bins = harness::load_bins(&bins_path)?;
    let out_dir = args.out.clone().unwrap_or_else(|| run.join("report"));
    let files = harness::write_report_files(&reports, &bins, &out_dir)?;
    println!(
        "extracted {} epochs into {} files under {}",
        reports.len(),
        files.len(),
        out_dir.display()
    );
    for file in files {
        println!("  {}", file.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
