//! Subcommands of the `gal` binary.

pub mod render;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use gal_core::encoder::InputMode;
use gal_core::metrics::write_instance_csv;
use gal_core::tensor::{load_checkpoint, save_checkpoint};
use gal_core::{
    build_mixed_set, evaluate, history_csv, load_dataset, save_dataset, summary_table_csv, train,
    BootstrapConfig, ClassicPlanner, Dataset, DatasetError, DiffAstarConfig, Encoder,
    EncoderConfig, EncoderError, GuidancePlacement, MapKind, MetricError, MetricSummary,
    MixedSetConfig, NeuralPlanner, Planner, SearchError, SearchPolicy, SearchVariant, Split,
    TauSpec, Tensor, TensorError, TrainConfig, TrainError, TrainingSample,
};

pub const CHECKPOINT_FILE: &str = "model.nast";
const LOG_TAU: &str = "log_tau";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numerical(_) => "numerical",
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::InvalidSize(_)
            | DatasetError::UnknownKind(_)
            | DatasetError::InvalidDensity(_)
            | DatasetError::EmptyRequest => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::InvalidGRatio(_) | SearchError::ZeroBeamWidth => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Search(s) => s.into(),
            MetricError::InvalidLevel(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Divergence { .. } => CliError::Numerical(e.to_string()),
            TrainError::ZeroBatch | TrainError::BadTemperature(_) => {
                CliError::Config(e.to_string())
            }
            TrainError::Search(s) => s.into(),
            TrainError::Metric(m) => m.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "gal", version, about = "Guided A* planning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset directory.
    Generate(GenerateArgs),
    /// Train an encoder through differentiable A*.
    Train(TrainArgs),
    /// Evaluate a planner on one split.
    Eval(EvalArgs),
    /// Train and evaluate once per value of one hyperparameter.
    Sweep(SweepArgs),
    /// Compare search variants with and without guidance.
    Compare(CompareArgs),
    /// Draw the search of one instance.
    Render(RenderArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Comma-separated kinds (maze, forest, forest:<density>, bugtrap, gaps) or `mixed`.
    #[arg(long, default_value = "mixed")]
    pub kind: String,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    /// Total number of instances; must be a multiple of the number of kinds.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 1)]
    pub instances_per_map: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainOptions {
    /// Encoder input: `m` (map) or `m+` (map, start and goal).
    #[arg(long, default_value = "m+")]
    pub mode: String,
    #[arg(long, default_value_t = 0.2)]
    pub g_ratio: f64,
    /// Fixed temperature, `train` or `train:<init>`; defaults to sqrt(map width).
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    /// Where guidance enters the score: `heuristic` or `cost_to_come`.
    #[arg(long, default_value = "heuristic")]
    pub placement: GuidancePlacement,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 100)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub options: TrainOptions,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// neural, vanilla, weighted, best_first or beam; neural when a checkpoint is given.
    #[arg(long)]
    pub planner: Option<String>,
    #[arg(long, default_value_t = 0.2)]
    pub g_ratio: f64,
    /// Guidance placement of the neural planner.
    #[arg(long, default_value = "heuristic")]
    pub placement: GuidancePlacement,
    #[arg(long, default_value_t = 10)]
    pub beam_width: usize,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `tau` or `g_ratio`.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values; `tau` defaults to multiples of sqrt(width).
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub options: TrainOptions,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "vanilla,weighted,best_first,beam"
    )]
    pub variants: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub beam_width: usize,
    /// g_ratio of the weighted and beam variants.
    #[arg(long, default_value_t = 0.2)]
    pub g_ratio: f64,
    /// Add a guided row for every variant (needs --checkpoint).
    #[arg(long)]
    pub with_guidance: bool,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "heuristic")]
    pub placement: GuidancePlacement,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV file.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RenderArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub instance: String,
    /// Planner whose search is drawn: vanilla, weighted, best_first, beam or neural.
    #[arg(long, default_value = "vanilla")]
    pub trace: String,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    pub g_ratio: f64,
    #[arg(long, default_value = "heuristic")]
    pub placement: GuidancePlacement,
    #[arg(long, default_value_t = 10)]
    pub beam_width: usize,
    /// Pixels per cell.
    #[arg(long, default_value_t = 8)]
    pub scale: usize,
    /// PPM file.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(&a),
        Command::Train(a) => train_cmd(&a).map(|_| ()),
        Command::Eval(a) => eval_cmd(&a).map(|_| ()),
        Command::Sweep(a) => sweep(&a),
        Command::Compare(a) => compare(&a),
        Command::Render(a) => render_cmd(&a),
    }
}

fn write_config(path: &Path, command: &str, args: &impl Serialize) -> Result<()> {
    let mut value = serde_json::json!({ "command": command, "version": env!("CARGO_PKG_VERSION") });
    value["args"] = serde_json::to_value(args).map_err(|e| CliError::Config(e.to_string()))?;
    let mut text = serde_json::to_string_pretty(&value).expect("json value serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Frozen config for commands whose output is a single file.
fn sibling_config(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("output");
    out.with_file_name(format!("{stem}.config.json"))
}

fn parse_kinds(spec: &str) -> Result<Vec<MapKind>> {
    if spec.trim() == "mixed" {
        return Ok(MapKind::ALL.to_vec());
    }
    spec.split(',')
        .map(|k| k.parse::<MapKind>().map_err(CliError::from))
        .collect()
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let kinds = parse_kinds(&a.kind)?;
    let per_map = a.instances_per_map.max(1);
    if a.count == 0 || !a.count.is_multiple_of(kinds.len() * per_map) {
        return Err(CliError::Config(format!(
            "--count {} is not a positive multiple of {} kinds x {} instances per map",
            a.count,
            kinds.len(),
            per_map
        )));
    }
    let mut config = MixedSetConfig::new(
        kinds.clone(),
        a.size,
        a.count / (kinds.len() * per_map),
        a.seed,
    );
    config.instances_per_map = per_map;
    let dataset = build_mixed_set(&config)?;
    save_dataset(&dataset, &a.out)?;
    write_config(&a.out.join("config.json"), "generate", a)
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(CliError::Config(format!("unknown split `{other}`"))),
    }
}

fn map_width(dataset: &Dataset) -> Result<usize> {
    dataset
        .entries
        .first()
        .map(|e| e.instance.width())
        .ok_or_else(|| CliError::Data("dataset is empty".into()))
}

pub fn resolve_tau(spec: Option<&str>, width: usize) -> Result<TauSpec> {
    let default = TauSpec::default_for_width(width);
    let tau = match spec {
        None => TauSpec::Fixed(default),
        Some(s) => s.parse::<TauSpec>().map_err(CliError::Config)?,
    };
    Ok(match tau {
        TauSpec::Trainable { init } if init.is_nan() => TauSpec::Trainable { init: default },
        t => t,
    })
}

fn samples<'a>(dataset: &'a Dataset, split: Split) -> Result<Vec<TrainingSample<'a>>> {
    dataset
        .split(split)
        .into_iter()
        .map(|e| TrainingSample::new(&e.id, &e.instance).map_err(CliError::from))
        .collect()
}

fn unix_time() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

#[derive(Debug, Serialize)]
struct ResolvedTrain<'a> {
    #[serde(flatten)]
    args: &'a TrainArgs,
    train_config: &'a TrainConfig,
    encoder: &'a EncoderConfig,
}

/// Trains on the train split, validates on the val split and writes the
/// checkpoint, history and config into `out`.
pub fn train_cmd(a: &TrainArgs) -> Result<TrainSummary> {
    let dataset = load_dataset(&a.data)?;
    train_on(&dataset, a)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub final_val: Option<MetricSummary>,
}

fn train_on(dataset: &Dataset, a: &TrainArgs) -> Result<TrainSummary> {
    let o = &a.options;
    let mode: InputMode = o.mode.parse().map_err(CliError::Config)?;
    if !(0.0..1.0).contains(&o.dropout) {
        return Err(CliError::Config(format!(
            "--dropout must lie in [0, 1), got {}",
            o.dropout
        )));
    }
    if !(o.lr >= 0.0 && o.lr.is_finite()) {
        return Err(CliError::Config(format!(
            "--lr must be a finite non-negative number, got {}",
            o.lr
        )));
    }
    if !(0.0..=1.0).contains(&o.g_ratio) {
        return Err(SearchError::InvalidGRatio(o.g_ratio as f32).into());
    }
    let width = map_width(dataset)?;
    let mut search = DiffAstarConfig::new(o.g_ratio, width);
    search.placement = o.placement;
    search.tau = resolve_tau(o.tau.as_deref(), width)?;
    let mut config = TrainConfig::new(search, o.seed);
    config.epochs = o.epochs;
    config.batch_size = o.batch;
    config.optimizer.learning_rate = o.lr;
    let encoder_config = EncoderConfig {
        mode,
        dropout: o.dropout,
        ..EncoderConfig::default()
    };

    fs::create_dir_all(&a.out)?;
    write_config(
        &a.out.join("config.json"),
        "train",
        &ResolvedTrain {
            args: a,
            train_config: &config,
            encoder: &encoder_config,
        },
    )?;
    let mut log = fs::File::create(a.out.join("run.log"))?;
    writeln!(log, "started {} (unix seconds)", unix_time())?;

    let train_set = samples(dataset, Split::Train)?;
    let val_set = samples(dataset, Split::Val)?;
    let encoder = Encoder::new(encoder_config, o.seed);
    let clock = Instant::now();
    let mut log_err = None;
    let outcome = train(encoder, &train_set, &val_set, &config, |r| {
        if let Err(e) = writeln!(
            log,
            "epoch {} loss {:.6} val_hmean {:.2} tau {:.4} elapsed {:.1}s",
            r.epoch,
            r.train_loss,
            r.val_hmean,
            r.tau,
            clock.elapsed().as_secs_f64()
        ) {
            log_err = Some(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(e.into());
    }

    let checkpoint = a.out.join(CHECKPOINT_FILE);
    let log_tau = outcome
        .log_tau
        .map(|v| Tensor::from_vec(&[1], vec![v]))
        .transpose()?;
    let mut named: Vec<(&str, &Tensor<f32>)> = outcome
        .encoder
        .named_parameters()
        .iter()
        .map(|(n, t)| (n.as_str(), t))
        .collect();
    if let Some(t) = &log_tau {
        named.push((LOG_TAU, t));
    }
    save_checkpoint(&checkpoint, named)?;
    fs::write(a.out.join("history.csv"), history_csv(&outcome.history))?;
    writeln!(log, "finished {} (unix seconds)", unix_time())?;
    Ok(TrainSummary {
        checkpoint,
        final_val: outcome.last,
    })
}

/// Encoder stored in a checkpoint; the input mode is read off the first layer.
pub fn load_encoder(path: &Path) -> Result<Encoder<f32>> {
    let named: Vec<_> = load_checkpoint(path)?
        .into_iter()
        .filter(|(n, _)| n != LOG_TAU)
        .collect();
    Ok(Encoder::from_checkpoint(&named, 0.0)?)
}

fn parse_variant(s: &str) -> Result<SearchVariant> {
    s.parse().map_err(CliError::Config)
}

/// Planner for a name like `vanilla` or `neural`.
fn build_planner(
    name: &str,
    checkpoint: Option<&Path>,
    g_ratio: f64,
    placement: GuidancePlacement,
    beam_width: usize,
) -> Result<Box<dyn Planner>> {
    let g = g_ratio as f32;
    if name == "neural" {
        let path = checkpoint
            .ok_or_else(|| CliError::Config("the neural planner needs --checkpoint".into()))?;
        let policy = SearchPolicy::weighted(g)?.with_placement(placement);
        return Ok(Box::new(NeuralPlanner::new(load_encoder(path)?, policy)));
    }
    let policy = SearchPolicy::for_variant(parse_variant(name)?, g, beam_width)?;
    Ok(Box::new(ClassicPlanner::new(policy)))
}

fn split_pairs(dataset: &Dataset, split: Split) -> Result<Vec<(&str, &gal_core::ProblemInstance)>> {
    let pairs: Vec<_> = dataset
        .split(split)
        .into_iter()
        .map(|e| (e.id.as_str(), &e.instance))
        .collect();
    if pairs.is_empty() {
        return Err(CliError::Data(format!("split {split:?} is empty")));
    }
    Ok(pairs)
}

fn write_summary(path: &Path, summary: &MetricSummary) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn eval_cmd(a: &EvalArgs) -> Result<MetricSummary> {
    let split = parse_split(&a.split)?;
    let name = a.planner.clone().unwrap_or_else(|| {
        if a.checkpoint.is_some() {
            "neural"
        } else {
            "vanilla"
        }
        .to_string()
    });
    let planner = build_planner(
        &name,
        a.checkpoint.as_deref(),
        a.g_ratio,
        a.placement,
        a.beam_width,
    )?;
    let dataset = load_dataset(&a.data)?;
    let boot = BootstrapConfig {
        resamples: a.resamples,
        seed: a.seed,
        ..BootstrapConfig::default()
    };
    let ev = evaluate(planner.as_ref(), &split_pairs(&dataset, split)?, &boot)?;
    fs::create_dir_all(&a.out)?;
    write_config(&a.out.join("config.json"), "eval", a)?;
    write_summary(&a.out.join("summary.json"), &ev.summary)?;
    write_instance_csv(&ev.results, fs::File::create(a.out.join("instances.csv"))?)?;
    Ok(ev.summary)
}

pub fn default_tau_grid(width: usize) -> Vec<f64> {
    let base = (width as f64).sqrt();
    vec![
        base / 3.0,
        base / 2.0,
        base,
        2.0 * base,
        3.0 * base,
        4.0 * base,
    ]
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let dataset = load_dataset(&a.data)?;
    let width = map_width(&dataset)?;
    let values = match (a.param.as_str(), a.values.is_empty()) {
        ("tau", true) => default_tau_grid(width),
        ("g_ratio", true) => vec![0.0, 0.2, 0.5],
        ("tau" | "g_ratio", false) => a.values.clone(),
        (other, _) => {
            return Err(CliError::Config(format!(
                "cannot sweep `{other}`; use tau or g_ratio"
            )))
        }
    };
    fs::create_dir_all(&a.out)?;
    write_config(&a.out.join("config.json"), "sweep", a)?;
    let pairs = split_pairs(&dataset, Split::Test)?;
    let boot = BootstrapConfig {
        resamples: a.resamples,
        seed: a.options.seed,
        ..BootstrapConfig::default()
    };
    let mut rows = Vec::with_capacity(values.len());
    for (k, &v) in values.iter().enumerate() {
        let mut options = a.options.clone();
        match a.param.as_str() {
            "tau" => options.tau = Some(v.to_string()),
            _ => options.g_ratio = v,
        }
        let run_dir = a.out.join(format!("run_{k:02}"));
        let summary = train_on(
            &dataset,
            &TrainArgs {
                data: a.data.clone(),
                options: options.clone(),
                out: run_dir.clone(),
            },
        )?;
        let planner = NeuralPlanner::new(
            load_encoder(&summary.checkpoint)?,
            SearchPolicy::weighted(options.g_ratio as f32)?.with_placement(options.placement),
        );
        let ev = evaluate(&planner, &pairs, &boot)?;
        write_summary(&run_dir.join("summary.json"), &ev.summary)?;
        write_instance_csv(
            &ev.results,
            fs::File::create(run_dir.join("instances.csv"))?,
        )?;
        rows.push((format!("{v:.4}"), ev.summary));
    }
    let table: Vec<_> = rows.iter().map(|(l, s)| (l.clone(), s)).collect();
    fs::write(a.out.join("sweep.csv"), summary_table_csv(&a.param, &table))?;
    Ok(())
}

pub fn compare(a: &CompareArgs) -> Result<()> {
    if a.with_guidance && a.checkpoint.is_none() {
        return Err(CliError::Config(
            "--with-guidance needs --checkpoint".into(),
        ));
    }
    let split = parse_split(&a.split)?;
    let variants = a
        .variants
        .iter()
        .map(|v| parse_variant(v))
        .collect::<Result<Vec<_>>>()?;
    let encoder = a.checkpoint.as_deref().map(load_encoder).transpose()?;
    let dataset = load_dataset(&a.data)?;
    let pairs = split_pairs(&dataset, split)?;
    let boot = BootstrapConfig {
        resamples: a.resamples,
        seed: a.seed,
        ..BootstrapConfig::default()
    };
    let mut rows = Vec::new();
    for &variant in &variants {
        let policy = SearchPolicy::for_variant(variant, a.g_ratio as f32, a.beam_width)?;
        let ev = evaluate(&ClassicPlanner::new(policy), &pairs, &boot)?;
        rows.push((variant.to_string(), ev.summary));
        if let (true, Some(enc)) = (a.with_guidance, &encoder) {
            let guided = NeuralPlanner::new(enc.clone(), policy.with_placement(a.placement));
            let ev = evaluate(&guided, &pairs, &boot)?;
            rows.push((format!("neural_{variant}"), ev.summary));
        }
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let table: Vec<_> = rows.iter().map(|(l, s)| (l.clone(), s)).collect();
    fs::write(&a.out, summary_table_csv("planner", &table))?;
    write_config(&sibling_config(&a.out), "compare", a)
}

pub fn render_cmd(a: &RenderArgs) -> Result<()> {
    let planner = build_planner(
        &a.trace,
        a.checkpoint.as_deref(),
        a.g_ratio,
        a.placement,
        a.beam_width,
    )?;
    let dataset = load_dataset(&a.data)?;
    let entry = dataset
        .entries
        .iter()
        .find(|e| e.id == a.instance)
        .ok_or_else(|| {
            CliError::Data(format!(
                "no instance `{}` in {}",
                a.instance,
                a.data.display()
            ))
        })?;
    let trace = planner.plan(&entry.instance)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(
        &a.out,
        render::overlay_ppm(&entry.instance, &trace, a.scale),
    )?;
    write_config(&sibling_config(&a.out), "render", a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_json_and_codes() {
        let e = CliError::Config("bad flag".into());
        assert_eq!(e.exit_code(), 2);
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["error"], "config");
        assert_eq!(v["exit_code"], 2);
        assert_eq!(
            CliError::from(TrainError::Divergence { epoch: 1, batch: 0 }).exit_code(),
            4
        );
        assert_eq!(
            CliError::from(DatasetError::ChecksumMismatch("x".into())).exit_code(),
            3
        );
    }

    #[test]
    fn tau_resolution() {
        assert_eq!(resolve_tau(None, 16).unwrap(), TauSpec::Fixed(4.0));
        assert_eq!(
            resolve_tau(Some("train"), 16).unwrap(),
            TauSpec::Trainable { init: 4.0 }
        );
        assert_eq!(resolve_tau(Some("1.5"), 16).unwrap(), TauSpec::Fixed(1.5));
        assert!(resolve_tau(Some("hot"), 16).is_err());
    }

    #[test]
    fn tau_grid() {
        let g = default_tau_grid(32);
        let s = 32f64.sqrt();
        assert_eq!(g, vec![s / 3.0, s / 2.0, s, 2.0 * s, 3.0 * s, 4.0 * s]);
    }

    #[test]
    fn kinds() {
        assert_eq!(parse_kinds("mixed").unwrap(), MapKind::ALL.to_vec());
        assert_eq!(
            parse_kinds("maze,gaps").unwrap(),
            vec![MapKind::Maze, MapKind::Gaps]
        );
        assert!(parse_kinds("maze,lava").is_err());
    }
}
