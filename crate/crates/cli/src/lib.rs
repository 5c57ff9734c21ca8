//! Command-line driver: synthetic data, augmentation, training, evaluation,
//! gradient checking and manifest replay.
//!
//! Exit codes: 0 on success, 1 for invalid input or configuration, 2 for
//! numerical failures (including a failed gradient check).

pub mod manifest;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use micl::checkpoint::Checkpoint;
use micl::data::{
    generate_synthetic, load_dataset, plan_augmentation, save_dataset, split_path, AugmentationPlan, Dataset,
    Split, SynthConfig,
};
use micl::model::{MiclModel, ModelConfig};
use micl::training::{credibility_report, evaluate, grad_check, train, TrainConfig};
use micl::MiclError;
use serde::de::DeserializeOwned;
use serde::Serialize;

use manifest::{write_json, Invocation, RunManifest, MANIFEST_FILE};

pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NUMERICAL,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<MiclError> for CliError {
    fn from(e: MiclError) -> Self {
        if e.is_numerical() {
            CliError::numerical(e.to_string())
        } else {
            CliError::validation(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "micl", version, about = "Multi-view incongruity learning for multimodal sarcasm detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus and write train/val/test splits.
    Synth(SynthArgs),
    /// Augment a training split with text and image surrogates.
    Augment(AugmentArgs),
    /// Train a model and keep the best-validation checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
    /// Re-run the command recorded in a manifest and verify its outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON file with corpus settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Training split file, or a directory holding train.jsonl.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub no_text_aug: bool,
    #[arg(long)]
    pub no_image_aug: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory holding train.jsonl (and optionally val.jsonl), or a
    /// training file.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with training settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub edge_threshold: Option<f64>,
    #[arg(long)]
    pub no_text_aug: bool,
    #[arg(long)]
    pub no_image_aug: bool,
    /// Fuse views with weight 1 instead of their credibility.
    #[arg(long)]
    pub no_credibility: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset file, or a directory holding test.jsonl.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-group mean view credibilities.
    #[arg(long)]
    pub credibility: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Check this checkpoint instead of a freshly initialised model.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// JSON file with model settings for a fresh model.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.07)]
    pub tau: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; defaults to a fresh `replay` directory beside the
    /// manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Synth(a) => {
            let mut synth: SynthConfig = read_config(a.config.as_deref())?;
            if let Some(size) = a.size {
                synth.size = size;
            }
            let inv = Invocation::Synth {
                synth,
                seed: a.seed,
                train_fraction: 0.6,
                val_fraction: 0.2,
            };
            execute(&inv, &a.out).map(|_| ())
        }
        Command::Augment(a) => {
            let inv = Invocation::Augment {
                dataset: resolve_split(&a.dataset, Split::Train),
                plan: AugmentationPlan {
                    text: !a.no_text_aug,
                    image: !a.no_image_aug,
                    ..AugmentationPlan::default()
                },
                seed: a.seed,
            };
            execute(&inv, &a.out).map(|_| ())
        }
        Command::Train(a) => {
            let mut config: TrainConfig = read_config(a.config.as_deref())?;
            apply_train_flags(&mut config, &a);
            let inv = Invocation::Train {
                dataset: a.dataset.clone(),
                config,
            };
            execute(&inv, &a.out).map(|_| ())
        }
        Command::Eval(a) => {
            let inv = Invocation::Eval {
                checkpoint: a.checkpoint,
                dataset: resolve_split(&a.dataset, Split::Test),
                credibility: a.credibility,
            };
            execute(&inv, &a.out).map(|_| ())
        }
        Command::Gradcheck(a) => {
            let mut model: ModelConfig = read_config(a.config.as_deref())?;
            model.dim = a.dim;
            let inv = Invocation::Gradcheck {
                checkpoint: a.checkpoint,
                model,
                seed: a.seed,
                batch: a.batch,
                eps: a.eps,
                tau: a.tau,
                lambda: a.lambda,
                tolerance: a.tolerance,
            };
            execute(&inv, &a.out).map(|_| ())
        }
        Command::Replay(a) => replay(&a.manifest, a.out.as_deref()),
    }
}

fn apply_train_flags(config: &mut TrainConfig, a: &TrainArgs) {
    if let Some(v) = a.seed {
        config.seed = v;
    }
    if let Some(v) = a.lambda {
        config.lambda = v;
    }
    if let Some(v) = a.tau {
        config.tau = v;
    }
    if let Some(v) = a.dim {
        config.model.dim = v;
    }
    if let Some(v) = a.epochs {
        config.epochs = v;
    }
    if let Some(v) = a.batch {
        config.batch_size = v;
    }
    if let Some(v) = a.lr {
        config.learning_rate = v;
    }
    if let Some(v) = a.edge_threshold {
        config.model.edge_threshold = v;
    }
    if a.no_text_aug {
        config.text_augmentation = false;
    }
    if a.no_image_aug {
        config.image_augmentation = false;
    }
    if a.no_credibility {
        config.model.use_credibility = false;
    }
}

/// Defaults overlaid with the JSON file, when given.
fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(format!("invalid config {}: {e}", path.display())))
}

fn resolve_split(path: &Path, split: Split) -> PathBuf {
    if path.is_dir() {
        split_path(path, split)
    } else {
        path.to_path_buf()
    }
}

fn create_dir(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::validation(format!("cannot create {}: {e}", out.display())))
}

fn write_artifact<T: Serialize>(out: &Path, name: &str, value: &T, written: &mut Vec<String>) -> CliResult<()> {
    write_json(&out.join(name), value)?;
    written.push(name.to_string());
    Ok(())
}

/// Runs `inv` into `out` and writes its manifest.
pub fn execute(inv: &Invocation, out: &Path) -> CliResult<RunManifest> {
    create_dir(out)?;
    let mut inputs: Vec<PathBuf> = Vec::new();
    let mut written: Vec<String> = Vec::new();
    match inv {
        Invocation::Synth {
            synth,
            seed,
            train_fraction,
            val_fraction,
        } => {
            let ds = generate_synthetic(synth, *seed)?;
            let (train, val, test) = ds.partition(*train_fraction, *val_fraction)?;
            for part in [&train, &val, &test] {
                let name = format!("{}.jsonl", part.split.as_str());
                save_dataset(part, out.join(&name))?;
                written.push(name);
            }
            println!(
                "wrote {} train, {} val, {} test samples to {}",
                train.len(),
                val.len(),
                test.len(),
                out.display()
            );
        }
        Invocation::Augment { dataset, plan, seed } => {
            let ds = load_dataset(dataset, Split::Train)?;
            inputs.push(dataset.clone());
            let (augmented, summary) = plan_augmentation(&ds, plan, *seed)?;
            save_dataset(&augmented, out.join("train.jsonl"))?;
            written.push("train.jsonl".into());
            write_artifact(out, "augmentation_summary.json", &summary, &mut written)?;
            println!("{}", serde_json::to_string(&summary.produced).unwrap_or_default());
        }
        Invocation::Train { dataset, config } => {
            let (train_path, val_path) = if dataset.is_dir() {
                (split_path(dataset, Split::Train), Some(split_path(dataset, Split::Val)))
            } else {
                (dataset.clone(), None)
            };
            let train_ds = load_dataset(&train_path, Split::Train)?;
            inputs.push(train_path);
            let val_ds: Option<Dataset> = match val_path.filter(|p| p.exists()) {
                Some(p) => {
                    let d = load_dataset(&p, Split::Val)?;
                    inputs.push(p);
                    Some(d)
                }
                None => None,
            };
            let outcome = train(config, &train_ds, val_ds.as_ref())?;
            outcome.checkpoint.save(out.join("checkpoint.json"))?;
            written.push("checkpoint.json".into());
            let mut log = String::new();
            for e in &outcome.logs {
                let row = serde_json::json!({
                    "epoch": e.epoch,
                    "l_ce": e.loss.l_ce,
                    "l_cl": e.loss.l_cl,
                    "l_total": e.loss.l_total,
                    "lambda": e.loss.lambda,
                    "val_accuracy": e.val_accuracy,
                    "val_macro_f1": e.val_macro_f1,
                });
                log.push_str(&row.to_string());
                log.push('\n');
            }
            fs::write(out.join("train_log.jsonl"), log)
                .map_err(|e| CliError::validation(format!("cannot write training log: {e}")))?;
            written.push("train_log.jsonl".into());
            let summary = serde_json::json!({
                "best_epoch": outcome.best_epoch,
                "train_size": outcome.train_size,
                "augmentation": outcome.augmentation,
            });
            write_artifact(out, "train_summary.json", &summary, &mut written)?;
            let last = outcome.logs.last().expect("at least one epoch");
            println!(
                "trained {} epochs; best epoch {}; final l_total {:.5}",
                outcome.logs.len(),
                outcome.best_epoch,
                last.loss.l_total
            );
        }
        Invocation::Eval {
            checkpoint,
            dataset,
            credibility,
        } => {
            let ck = Checkpoint::load(checkpoint)?;
            inputs.push(checkpoint.clone());
            let ds = load_dataset(dataset, Split::Test)?;
            inputs.push(dataset.clone());
            let metrics = evaluate(&ck, &ds)?;
            write_artifact(out, "metrics.json", &metrics, &mut written)?;
            println!(
                "accuracy {:.4}  binary F1 {:.4}  macro F1 {:.4}",
                metrics.accuracy, metrics.binary.f1, metrics.macro_avg.f1
            );
            if *credibility {
                let report = credibility_report(&ck, &ds)?;
                write_artifact(out, "credibility.json", &report, &mut written)?;
                for (name, g) in [
                    ("sarcastic", report.sarcastic),
                    ("non_sarcastic", report.non_sarcastic),
                    ("all", report.all),
                ] {
                    match g {
                        Some(g) => println!(
                            "{name:<14} c_w {:.4}  c_e {:.4}  c_s {:.4}",
                            g.token_patch, g.entity_object, g.sentiment
                        ),
                        None => println!("{name:<14} absent"),
                    }
                }
            }
        }
        Invocation::Gradcheck {
            checkpoint,
            model,
            seed,
            batch,
            eps,
            tau,
            lambda,
            tolerance,
        } => {
            let ck = match checkpoint {
                Some(path) => {
                    inputs.push(path.clone());
                    Checkpoint::load(path)?
                }
                None => {
                    let (_, store) = MiclModel::new(model.clone(), *seed)?;
                    Checkpoint::capture(model, &store)?
                }
            };
            let synth = SynthConfig {
                size: (*batch).max(2),
                vocab_size: ck.config.vocab_size,
                patch_dim: ck.config.patch_dim,
                ..SynthConfig::default()
            };
            let ds = generate_synthetic(&synth, *seed)?;
            let samples = &ds.samples[..(*batch).min(ds.len())];
            let report = grad_check(&ck, samples, *tau, *lambda, *eps, None)?;
            write_artifact(out, "gradcheck.json", &report, &mut written)?;
            for g in &report.groups {
                println!("{:<32} {:.3e}", g.name, g.max_rel_error);
            }
            write_manifest(inv, &inputs, out, &written)?;
            let failing = report.failing(*tolerance);
            if !failing.is_empty() {
                let names: Vec<&str> = failing.iter().map(|g| g.name.as_str()).collect();
                return Err(CliError::numerical(format!(
                    "gradient check failed (tolerance {tolerance:e}) for: {}",
                    names.join(", ")
                )));
            }
            println!("all {} groups below {tolerance:e}", report.groups.len());
            return RunManifest::read(&out.join(MANIFEST_FILE));
        }
    }
    write_manifest(inv, &inputs, out, &written)
}

fn write_manifest(inv: &Invocation, inputs: &[PathBuf], out: &Path, written: &[String]) -> CliResult<RunManifest> {
    let manifest = RunManifest::new(inv.clone(), inputs, out, written)?;
    manifest.write(out)?;
    Ok(manifest)
}

/// Re-runs a recorded invocation and compares every artifact hash.
pub fn replay(manifest_path: &Path, out: Option<&Path>) -> CliResult<()> {
    let recorded = RunManifest::read(manifest_path)?;
    let changed = recorded.changed_inputs()?;
    if !changed.is_empty() {
        let list: Vec<String> = changed.iter().map(|p| p.display().to_string()).collect();
        return Err(CliError::validation(format!("inputs changed since the run: {}", list.join(", "))));
    }
    let out = match out {
        Some(o) => o.to_path_buf(),
        None => manifest_path.parent().unwrap_or(Path::new(".")).join("replay"),
    };
    let fresh = execute(&recorded.invocation, &out)?;
    let mismatched: Vec<String> = recorded
        .artifacts
        .iter()
        .zip(&fresh.artifacts)
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.path.display().to_string())
        .collect();
    if mismatched.is_empty() && recorded.artifacts.len() == fresh.artifacts.len() {
        let mut stdout = std::io::stdout();
        let _ = writeln!(stdout, "replay reproduced {} artifact(s) exactly", fresh.artifacts.len());
        Ok(())
    } else {
        Err(CliError::validation(format!(
            "replay differs from the recorded run: {}",
            mismatched.join(", ")
        )))
    }
}
