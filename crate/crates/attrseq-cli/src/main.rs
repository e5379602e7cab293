//! Command-line pipelines over the attrseq library: generate benchmark data,
//! train, embed, detect outliers, sweep parameter grids, and check gradients.
//!
//! Options resolve in three layers: command-line flags win over the TOML
//! config file (`--config`), which wins over built-in defaults. Every output
//! carries the tool version, a hash of the resolved semantic config, and the
//! seed, but never absolute paths or wall-clock stamps, so fixed-seed runs
//! produce byte-identical artifacts (the sweep's wall_seconds column is the
//! one documented exception).
//!
//! Exit codes: 0 success, 2 config errors, 3 data/input/format errors,
//! 4 numeric failures, 1 anything else.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use attrseq::baselines::{run_method, Method};
use attrseq::data::{
    generate_synthetic, load_jsonl, load_sidecar, save_jsonl, save_sidecar, Dataset, Label,
    LoadOptions, Sidecar, StartMode, SyntheticConfig,
};
use attrseq::evaluation::{
    knn_outlier_scores_with, roc_auc, run_sweep, DistanceMetric, ScoreVariant, SweepConfig,
};
use attrseq::seqnet::GateActivation;
use attrseq::training::{
    gradient_check, init_model, load_model, save_model, train, write_loss_csv, ModelParams,
    TrainingConfig,
};
use attrseq::{Error, Result};

const TOOL: &str = "attrseq";
const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "attrseq", version, about = "Embeddings and outlier detection for attributed sequences")]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset with planted outliers.
    Synth(SynthArgs),
    /// Train a model and write it with its loss history.
    Train(TrainArgs),
    /// Write one embedding row per instance using a trained model.
    Embed(EmbedArgs),
    /// Score instances for outlierness and report ROC AUC.
    Detect(DetectArgs),
    /// Grid-run methods over (k, d, epochs) and write one AUC per cell.
    Sweep(SweepArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

/// Keys accepted in the TOML config file. Every key has a matching flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    data: Option<PathBuf>,
    model: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    k: Option<usize>,
    d: Option<usize>,
    epochs: Option<usize>,
    pretrain_epochs: Option<usize>,
    lr: Option<f64>,
    batch: Option<usize>,
    m: Option<usize>,
    method: Option<String>,
    methods: Option<Vec<String>>,
    no_condition: Option<bool>,
    g_gate: Option<String>,
    joint_loss: Option<bool>,
    grad_clip: Option<f64>,
    metric: Option<String>,
    variant: Option<String>,
    ks: Option<Vec<usize>>,
    dims: Option<Vec<usize>>,
    epoch_grid: Option<Vec<usize>>,
    inliers: Option<usize>,
    outlier_fraction: Option<f64>,
    regimes: Option<usize>,
    vocab_size: Option<usize>,
    informative_attrs: Option<usize>,
    nuisance_attrs: Option<usize>,
    nuisance_levels: Option<usize>,
    attr_noise: Option<f64>,
    transition_noise: Option<f64>,
    start_mode: Option<String>,
    min_len: Option<usize>,
    max_len: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset (JSONL); a schema sidecar and a manifest land next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    inliers: Option<usize>,
    /// Fraction of planted outliers, strictly inside (0, 0.5).
    #[arg(long)]
    outlier_fraction: Option<f64>,
    #[arg(long)]
    regimes: Option<usize>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    informative_attrs: Option<usize>,
    #[arg(long)]
    nuisance_attrs: Option<usize>,
    #[arg(long)]
    nuisance_levels: Option<usize>,
    #[arg(long)]
    attr_noise: Option<f64>,
    #[arg(long)]
    transition_noise: Option<f64>,
    /// shared | uniform
    #[arg(long)]
    start_mode: Option<String>,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
}

/// Training options shared by every command that fits a model.
#[derive(Args, Clone)]
struct TrainFlags {
    #[arg(long)]
    seed: Option<u64>,
    /// Embedding width d (attribute code and LSTM hidden size).
    #[arg(long)]
    d: Option<usize>,
    /// Sequence-phase epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Attribute pretraining epochs (defaults to --epochs).
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Mini-batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Attribute encoder depth M.
    #[arg(long)]
    m: Option<usize>,
    /// Train without attribute conditioning (the sequence-only variant).
    #[arg(long)]
    no_condition: bool,
    /// Candidate-gate activation: sigmoid | tanh.
    #[arg(long)]
    g_gate: Option<String>,
    /// Optimize the summed objective in one phase instead of two.
    #[arg(long)]
    joint_loss: bool,
    /// Per-batch L2 gradient clipping norm.
    #[arg(long)]
    grad_clip: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Input dataset (JSONL).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Loss history CSV (defaults to the model path with a .loss.csv ending).
    #[arg(long)]
    loss_out: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Trained model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output embeddings file (text, one instance per line).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Embed with this trained model (mutually exclusive with --method).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Fit this method fresh: nas | len | mcc | seq | atr | eml | csa.
    #[arg(long)]
    method: Option<String>,
    /// Neighbor count for the outlier score.
    #[arg(long)]
    k: Option<usize>,
    /// euclidean | cosine
    #[arg(long)]
    metric: Option<String>,
    /// kth | mean
    #[arg(long)]
    variant: Option<String>,
    /// Output report (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output CSV; rows are flushed as cells complete.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated methods (default: all seven).
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Comma-separated neighbor counts (default: 5,10,15,20,25).
    #[arg(long, value_delimiter = ',')]
    ks: Vec<usize>,
    /// Comma-separated embedding widths (default: --d or 15).
    #[arg(long, value_delimiter = ',')]
    dims: Vec<usize>,
    /// Comma-separated epoch budgets (default: --epochs or 10).
    #[arg(long, value_delimiter = ',')]
    epoch_grid: Vec<usize>,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Check a saved model instead of a fresh initialization.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Index of the instance to differentiate against.
    #[arg(long, default_value_t = 0)]
    instance: usize,
    /// Maximum allowed relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[command(flatten)]
    flags: TrainFlags,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let file = match load_file_config(cli.config.as_deref()) {
        Ok(file) => file,
        Err(err) => return fail(&err),
    };
    let outcome = match cli.command {
        Command::Synth(args) => cmd_synth(&args, &file),
        Command::Train(args) => cmd_train(&args, &file),
        Command::Embed(args) => cmd_embed(&args, &file),
        Command::Detect(args) => cmd_detect(&args, &file),
        Command::Sweep(args) => cmd_sweep(&args, &file),
        Command::Gradcheck(args) => cmd_gradcheck(&args, &file),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => fail(&err),
    }
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    let code = match err {
        Error::Config(_) => 2,
        Error::InputDomain(_) | Error::Data(_) | Error::Version { .. } | Error::Corrupt(_) => 3,
        Error::Numeric(_) => 4,
        Error::Io(_) => 1,
    };
    ExitCode::from(code)
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text)
                .map_err(|e| Error::config(format!("config file {}: {e}", path.display())))
        }
    }
}

fn require_path(path: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.ok_or_else(|| Error::config(format!("{flag} is required")))
}

fn parse_g_gate(name: &str) -> Result<GateActivation> {
    match name.to_ascii_lowercase().as_str() {
        "sigmoid" => Ok(GateActivation::Sigmoid),
        "tanh" => Ok(GateActivation::Tanh),
        other => Err(Error::config(format!(
            "unknown g-gate activation {other:?}; expected sigmoid or tanh"
        ))),
    }
}

fn parse_start_mode(name: &str) -> Result<StartMode> {
    match name.to_ascii_lowercase().as_str() {
        "shared" => Ok(StartMode::Shared),
        "uniform" => Ok(StartMode::Uniform),
        other => Err(Error::config(format!(
            "unknown start mode {other:?}; expected shared or uniform"
        ))),
    }
}

/// Resolve training options: flag, then config file, then default. The seed
/// has no default where reproducibility depends on it being stated.
fn resolve_training(
    flags: &TrainFlags,
    file: &FileConfig,
    seed_required: bool,
) -> Result<TrainingConfig> {
    let defaults = TrainingConfig::default();
    let seed = match flags.seed.or(file.seed) {
        Some(seed) => seed,
        None if seed_required => {
            return Err(Error::config("--seed is required for this command"))
        }
        None => 0,
    };
    let epochs = flags.epochs.or(file.epochs).unwrap_or(defaults.epochs);
    let config = TrainingConfig {
        learning_rate: flags.lr.or(file.lr).unwrap_or(defaults.learning_rate),
        epochs,
        pretrain_epochs: flags.pretrain_epochs.or(file.pretrain_epochs).unwrap_or(epochs),
        batch_size: flags.batch.or(file.batch).unwrap_or(defaults.batch_size),
        hidden_dim: flags.d.or(file.d).unwrap_or(defaults.hidden_dim),
        encoder_depth: flags.m.or(file.m).unwrap_or(defaults.encoder_depth),
        conditioning: !(flags.no_condition || file.no_condition.unwrap_or(false)),
        joint_encoder_update: true,
        joint_loss: flags.joint_loss || file.joint_loss.unwrap_or(false),
        g_gate: match flags.g_gate.as_deref().or(file.g_gate.as_deref()) {
            Some(name) => parse_g_gate(name)?,
            None => defaults.g_gate,
        },
        grad_clip: flags.grad_clip.or(file.grad_clip),
        seed,
    };
    config.validate()?;
    Ok(config)
}

/// First 16 hex digits of the SHA-256 of the resolved semantic config.
/// Deliberately excludes paths so reruns in different directories hash alike.
fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn header_line(command: &str, hash: &str, seed: u64) -> String {
    format!("# {TOOL} {VERSION} {command} config {hash} seed {seed}")
}

fn sidecar_path_for(data: &Path) -> PathBuf {
    let mut name = data.as_os_str().to_owned();
    name.push(".sidecar.json");
    PathBuf::from(name)
}

fn manifest_path_for(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Load a dataset, using the schema/vocabulary sidecar when one sits next to
/// the file, otherwise inferring both from the data.
fn load_dataset(path: &Path) -> Result<Dataset> {
    let sidecar_path = sidecar_path_for(path);
    let sidecar =
        if sidecar_path.exists() { Some(load_sidecar(&sidecar_path)?) } else { None };
    load_jsonl(path, &LoadOptions { sidecar, ..LoadOptions::default() })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut writer, value)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SynthManifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_hash: String,
    seed: u64,
    instances: usize,
    outliers: usize,
    config: SyntheticConfig,
}

fn cmd_synth(args: &SynthArgs, file: &FileConfig) -> Result<()> {
    let out = require_path(args.out.clone().or_else(|| file.out.clone()), "--out")?;
    let seed = args
        .seed
        .or(file.seed)
        .ok_or_else(|| Error::config("--seed is required for synth"))?;
    let defaults = SyntheticConfig::default();
    let config = SyntheticConfig {
        inliers: args.inliers.or(file.inliers).unwrap_or(defaults.inliers),
        outlier_fraction: args
            .outlier_fraction
            .or(file.outlier_fraction)
            .unwrap_or(defaults.outlier_fraction),
        regimes: args.regimes.or(file.regimes).unwrap_or(defaults.regimes),
        vocab_size: args.vocab_size.or(file.vocab_size).unwrap_or(defaults.vocab_size),
        informative_attrs: args
            .informative_attrs
            .or(file.informative_attrs)
            .unwrap_or(defaults.informative_attrs),
        nuisance_attrs: args
            .nuisance_attrs
            .or(file.nuisance_attrs)
            .unwrap_or(defaults.nuisance_attrs),
        nuisance_levels: args
            .nuisance_levels
            .or(file.nuisance_levels)
            .unwrap_or(defaults.nuisance_levels),
        attr_noise: args.attr_noise.or(file.attr_noise).unwrap_or(defaults.attr_noise),
        transition_noise: args
            .transition_noise
            .or(file.transition_noise)
            .unwrap_or(defaults.transition_noise),
        start_mode: match args.start_mode.as_deref().or(file.start_mode.as_deref()) {
            Some(name) => parse_start_mode(name)?,
            None => defaults.start_mode,
        },
        min_len: args.min_len.or(file.min_len).unwrap_or(defaults.min_len),
        max_len: args.max_len.or(file.max_len).unwrap_or(defaults.max_len),
        seed,
    };
    let dataset = generate_synthetic(&config)?;
    save_jsonl(&dataset, &out)?;
    save_sidecar(
        &Sidecar { schema: dataset.schema.clone(), vocabulary: dataset.vocabulary.clone() },
        &sidecar_path_for(&out),
    )?;
    let outliers = dataset
        .instances
        .iter()
        .filter(|inst| inst.label == Some(Label::Outlier))
        .count();
    let manifest = SynthManifest {
        tool: TOOL,
        version: VERSION,
        command: "synth",
        config_hash: config_hash(&config),
        seed,
        instances: dataset.len(),
        outliers,
        config,
    };
    write_json(&manifest, &manifest_path_for(&out))?;
    println!("wrote {} instances ({} outliers) to {}", dataset.len(), outliers, out.display());
    Ok(())
}

fn cmd_train(args: &TrainArgs, file: &FileConfig) -> Result<()> {
    let data = require_path(args.data.clone().or_else(|| file.data.clone()), "--data")?;
    let model_path = require_path(args.model.clone().or_else(|| file.model.clone()), "--model")?;
    let config = resolve_training(&args.flags, file, true)?;
    if config.learning_rate == 0.0 {
        eprintln!("warning: learning rate is 0, parameters will not move");
    }
    let dataset = load_dataset(&data)?;
    let model = train(&dataset, &config)?;
    save_model(&model, &model_path)?;
    let loss_path = args
        .loss_out
        .clone()
        .unwrap_or_else(|| model_path.with_extension("loss.csv"));
    let mut writer = BufWriter::new(File::create(&loss_path)?);
    writeln!(writer, "{}", header_line("train", &config_hash(&config), config.seed))?;
    write_loss_csv(&model.loss_history, &mut writer)?;
    println!(
        "trained on {} instances; wrote {} and {}",
        dataset.len(),
        model_path.display(),
        loss_path.display()
    );
    Ok(())
}

fn cmd_embed(args: &EmbedArgs, file: &FileConfig) -> Result<()> {
    let data = require_path(args.data.clone().or_else(|| file.data.clone()), "--data")?;
    let model_path = require_path(args.model.clone().or_else(|| file.model.clone()), "--model")?;
    let out = require_path(args.out.clone().or_else(|| file.out.clone()), "--out")?;
    let model = load_model(&model_path)?;
    let dataset = load_dataset(&data)?;
    let embeddings = model.embed_dataset(&dataset)?;
    let mut writer = BufWriter::new(File::create(&out)?);
    writeln!(
        writer,
        "{}",
        header_line("embed", &config_hash(&model.config), model.config.seed)
    )?;
    for (inst, emb) in dataset.instances.iter().zip(&embeddings) {
        write!(writer, "{}", inst.id)?;
        for v in emb.iter() {
            write!(writer, " {v}")?;
        }
        writeln!(writer)?;
    }
    writer.flush()?;
    println!("wrote {} embeddings to {}", embeddings.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct ReportRow {
    id: String,
    score: f64,
    label: String,
}

#[derive(Serialize)]
struct ReportDoc {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_hash: String,
    seed: u64,
    method: String,
    k: usize,
    metric: String,
    variant: String,
    auc: f64,
    instances: Vec<ReportRow>,
}

/// Semantic inputs hashed into a detect report's manifest.
#[derive(Serialize)]
struct DetectSettings<'a> {
    method: &'a str,
    k: usize,
    metric: &'a str,
    variant: &'a str,
    training: Option<&'a TrainingConfig>,
}

fn cmd_detect(args: &DetectArgs, file: &FileConfig) -> Result<()> {
    let data = require_path(args.data.clone().or_else(|| file.data.clone()), "--data")?;
    let out = require_path(args.out.clone().or_else(|| file.out.clone()), "--out")?;
    let k = args.k.or(file.k).unwrap_or(5);
    let metric = match args.metric.as_deref().or(file.metric.as_deref()) {
        Some(name) => DistanceMetric::parse(name)?,
        None => DistanceMetric::Euclidean,
    };
    let variant = match args.variant.as_deref().or(file.variant.as_deref()) {
        Some(name) => ScoreVariant::parse(name)?,
        None => ScoreVariant::KthDistance,
    };
    let model_path = args.model.clone().or_else(|| file.model.clone());
    let method_name = args.method.clone().or_else(|| file.method.clone());
    if model_path.is_some() && method_name.is_some() {
        return Err(Error::config("--model and --method are mutually exclusive"));
    }
    let dataset = load_dataset(&data)?;
    let labels = dataset.labels()?;

    let (method, seed, training, scores) = match model_path {
        Some(path) => {
            let model = load_model(&path)?;
            let method = if model.config.conditioning { Method::Nas } else { Method::Seq };
            let embeddings = model.embed_dataset(&dataset)?;
            let scores = knn_outlier_scores_with(&embeddings, k, metric, variant)?;
            (method, model.config.seed, Some(model.config.clone()), scores)
        }
        None => {
            let method = Method::parse(method_name.as_deref().unwrap_or("nas"))?;
            let config = resolve_training(&args.flags, file, false)?;
            let output = run_method(method, &dataset, &config)?;
            let scores = match output.scores() {
                Some(scores) => scores.to_vec(),
                None => knn_outlier_scores_with(
                    output.embeddings().expect("embedding method"),
                    k,
                    metric,
                    variant,
                )?,
            };
            let seed = config.seed;
            let training = if method.uses_training() { Some(config) } else { None };
            (method, seed, training, scores)
        }
    };
    let auc = roc_auc(&scores, &labels)?;
    let settings = DetectSettings {
        method: method.as_str(),
        k,
        metric: metric.as_str(),
        variant: variant.as_str(),
        training: training.as_ref(),
    };
    let report = ReportDoc {
        tool: TOOL,
        version: VERSION,
        command: "detect",
        config_hash: config_hash(&settings),
        seed,
        method: method.as_str().to_string(),
        k,
        metric: metric.as_str().to_string(),
        variant: variant.as_str().to_string(),
        auc,
        instances: dataset
            .instances
            .iter()
            .zip(&scores)
            .zip(&labels)
            .map(|((inst, &score), label)| ReportRow {
                id: inst.id.clone(),
                score,
                label: label.as_str().to_string(),
            })
            .collect(),
    };
    write_json(&report, &out)?;
    println!("method {method} k {k}: auc {auc:.4}; wrote {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct SweepSettings<'a> {
    methods: Vec<&'static str>,
    ks: &'a [usize],
    dims: &'a [usize],
    epoch_grid: &'a [usize],
    base: &'a TrainingConfig,
}

fn cmd_sweep(args: &SweepArgs, file: &FileConfig) -> Result<()> {
    let data = require_path(args.data.clone().or_else(|| file.data.clone()), "--data")?;
    let out = require_path(args.out.clone().or_else(|| file.out.clone()), "--out")?;
    let base = resolve_training(&args.flags, file, true)?;
    let method_names: Vec<String> = if !args.methods.is_empty() {
        args.methods.clone()
    } else if let Some(names) = &file.methods {
        names.clone()
    } else {
        Method::all().iter().map(|m| m.as_str().to_string()).collect()
    };
    let methods: Vec<Method> =
        method_names.iter().map(|n| Method::parse(n)).collect::<Result<_>>()?;
    let ks = if !args.ks.is_empty() {
        args.ks.clone()
    } else {
        file.ks.clone().unwrap_or_else(|| vec![5, 10, 15, 20, 25])
    };
    let dims = if !args.dims.is_empty() {
        args.dims.clone()
    } else {
        file.dims.clone().unwrap_or_else(|| vec![base.hidden_dim])
    };
    let epoch_grid = if !args.epoch_grid.is_empty() {
        args.epoch_grid.clone()
    } else {
        file.epoch_grid.clone().unwrap_or_else(|| vec![base.epochs])
    };
    let dataset = load_dataset(&data)?;
    let settings = SweepSettings {
        methods: methods.iter().map(Method::as_str).collect(),
        ks: &ks,
        dims: &dims,
        epoch_grid: &epoch_grid,
        base: &base,
    };
    let mut writer = BufWriter::new(File::create(&out)?);
    writeln!(writer, "{}", header_line("sweep", &config_hash(&settings), base.seed))?;
    writeln!(writer, "method,k,d,epochs,auc,wall_seconds")?;
    writer.flush()?;
    let mut rows = 0usize;
    // One run_sweep call per trained model so completed rows hit disk even if
    // a later cell dies.
    for &method in &methods {
        if method.is_score_based() {
            let result = run_sweep(
                &dataset,
                &SweepConfig {
                    methods: vec![method],
                    neighbor_grid: ks.clone(),
                    dim_grid: dims.clone(),
                    epoch_grid: epoch_grid.clone(),
                    base: base.clone(),
                },
            )?;
            for cell in &result.cells {
                writeln!(writer, "{}", cell.csv_row())?;
                rows += 1;
            }
            writer.flush()?;
        } else {
            for &d in &dims {
                for &epochs in &epoch_grid {
                    let result = run_sweep(
                        &dataset,
                        &SweepConfig {
                            methods: vec![method],
                            neighbor_grid: ks.clone(),
                            dim_grid: vec![d],
                            epoch_grid: vec![epochs],
                            base: base.clone(),
                        },
                    )?;
                    for cell in &result.cells {
                        writeln!(writer, "{}", cell.csv_row())?;
                        rows += 1;
                    }
                    writer.flush()?;
                }
            }
        }
    }
    println!("wrote {rows} sweep rows to {}", out.display());
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs, file: &FileConfig) -> Result<()> {
    let data = require_path(args.data.clone().or_else(|| file.data.clone()), "--data")?;
    let dataset = load_dataset(&data)?;
    let model: ModelParams = match args.model.clone().or_else(|| file.model.clone()) {
        Some(path) => load_model(&path)?,
        None => init_model(&dataset, &resolve_training(&args.flags, file, false)?)?,
    };
    let instance = dataset.instances.get(args.instance).ok_or_else(|| {
        Error::input(format!(
            "instance index {} out of range for {} instances",
            args.instance,
            dataset.len()
        ))
    })?;
    let report = gradient_check(&model, instance, args.tolerance)?;
    println!(
        "checked {} parameters; max relative error {:.3e} at {}",
        report.parameters_checked, report.max_rel_error, report.worst_parameter
    );
    if report.passed {
        println!("gradient check passed (tolerance {:.1e})", report.tolerance);
        Ok(())
    } else {
        Err(Error::numeric(format!(
            "gradient check failed: max relative error {:.3e} at {} exceeds tolerance {:.1e}",
            report.max_rel_error, report.worst_parameter, report.tolerance
        )))
    }
}
