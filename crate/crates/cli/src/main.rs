use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lptraffic::data::{convert_long, convert_wide, load_dataset, save_dataset, synth_generate, SplitScheme, SynthConfig};
use lptraffic::harness::{
    aggregate_mse, dump_predictions, parse_epsilon, read_predictions, records_mse, run_experiment_on,
    write_outputs, ExperimentConfig, PredictionSeries, VariantChoice,
};
use lptraffic::{Error, Result};
use serde_json::json;

/// Decentralized traffic forecasting with differentially private neighbour histograms.
#[derive(Debug, Parser)]
#[command(name = "lptraffic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic ring-graph dataset in the canonical format.
    SynthGen(SynthArgs),
    /// Fit and evaluate one variant; writes report.json, predictions.csv, traffic.csv.
    Train(TrainArgs),
    /// Recompute metrics from a predictions.csv and print them as JSON.
    Evaluate(EvaluateArgs),
    /// Write a plot-ready slice of one node's predictions for one or more runs.
    DumpPredictions(DumpArgs),
    /// Convert public dataset exports into the canonical format.
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    nodes: usize,
    #[arg(long, default_value_t = 2880)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Neighbour coupling strength in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    coupling: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitKind {
    Holdout,
    Kfold,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// JSON experiment config; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Canonical dataset directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// knn, local or todense.
    #[arg(long)]
    variant: Option<String>,
    /// Privacy parameter for todense: a positive number or `none` [default: none].
    #[arg(long)]
    epsilon: Option<String>,
    /// Window length in steps [default: 12].
    #[arg(long)]
    window: Option<usize>,
    /// Histogram bins [default: 10].
    #[arg(long)]
    bins: Option<usize>,
    /// LSTM hidden size [default: 32].
    #[arg(long)]
    hidden: Option<usize>,
    /// Mini-batch size [default: 32].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Training epochs [default: 5, or 15 with kfold].
    #[arg(long)]
    epochs: Option<usize>,
    /// ADAM learning rate [default: 0.01].
    #[arg(long)]
    lr: Option<f64>,
    /// Split scheme [default: holdout].
    #[arg(long, value_enum)]
    split: Option<SplitKind>,
    /// Training fraction for holdout [default: 0.8].
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Folds for kfold [default: 5].
    #[arg(long)]
    k: Option<usize>,
    /// Master seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Channel the MSE is reported on [default: speed, else the first channel].
    #[arg(long)]
    metric_channel: Option<String>,
    /// Noise each histogram once and resend it every epoch.
    #[arg(long)]
    reuse_noise: bool,
    /// Use one LSTM for all channels.
    #[arg(long)]
    share_lstm: bool,
    /// Output directory [default: config `output`, else `out`].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// A predictions.csv written by `train`.
    #[arg(long)]
    predictions: PathBuf,
    /// Channel to score [default: speed if present, else the first seen].
    #[arg(long)]
    channel: Option<String>,
}

#[derive(Debug, Args)]
struct DumpArgs {
    /// predictions.csv files, one per variant (repeatable).
    #[arg(long = "predictions", required = true)]
    predictions: Vec<PathBuf>,
    #[arg(long)]
    node: String,
    /// Channel to dump [default: speed if present, else the first seen].
    #[arg(long)]
    channel: Option<String>,
    /// First row (position among the node's test predictions).
    #[arg(long, default_value_t = 0)]
    start: usize,
    #[arg(long, default_value_t = 200)]
    rows: usize,
    /// Output file [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InputFormat {
    /// One CSV per channel: timestamp column, then one column per node.
    Wide,
    /// One CSV with header `time,node,<channel>...`.
    Long,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    #[arg(long, value_enum)]
    format: InputFormat,
    /// Wide: `<channel>=<path>` (repeatable). Long: a single path.
    #[arg(long, required = true)]
    input: Vec<String>,
    /// Adjacency CSV (node ids in the first row and column).
    #[arg(long)]
    adjacency: PathBuf,
    /// Weights with absolute value above this become edges.
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    /// Treat zero readings as missing.
    #[arg(long)]
    zero_is_missing: bool,
    #[arg(long, default_value_t = 5)]
    interval_minutes: u32,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            return fail(&Error::Usage(msg.trim().to_owned()));
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

/// Usage errors exit with 2, everything else with 1.
fn fail(e: &Error) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": e.kind(), "message": e.to_string() } }));
    ExitCode::from(if e.kind() == "usage" { 2 } else { 1 })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::SynthGen(a) => {
            let ds = synth_generate(&SynthConfig::new(a.nodes, a.steps, a.seed, a.coupling))?;
            save_dataset(&ds, &a.out)?;
            log::info!("wrote {} nodes x {} steps to {}", ds.node_count(), ds.steps(), a.out.display());
            Ok(())
        }
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::DumpPredictions(a) => dump(a),
        Command::Convert(a) => convert(a),
    }
}

/// Writes to stdout; a reader that closed the pipe early is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn build_config(a: &TrainArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&a.config, &a.variant) {
        (Some(path), _) => ExperimentConfig::from_json(&read_text(path)?)
            .map_err(|e| e.context(format!("reading config {}", path.display())))?,
        (None, Some(v)) => ExperimentConfig::new(v.parse()?),
        (None, None) => return Err(Error::Usage("either --config or --variant is required".into())),
    };
    if let Some(v) = &a.variant {
        cfg.variant = v.parse::<VariantChoice>()?;
    }
    if let Some(p) = &a.dataset {
        cfg.dataset = Some(p.clone());
    }
    if let Some(e) = &a.epsilon {
        cfg.epsilon = parse_epsilon(e)?;
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(if let Some(v) = a.$flag { cfg.$field = v; })*};
    }
    set!(window => window, bins => bins, hidden => hidden, batch_size => batch_size, lr => learning_rate, seed => seed);
    if a.epochs.is_some() {
        cfg.epochs = a.epochs;
    }
    match (a.split, a.train_fraction, a.k) {
        (Some(SplitKind::Kfold), _, k) => cfg.split = SplitScheme::Kfold { k: k.unwrap_or(5) },
        (Some(SplitKind::Holdout), f, _) => cfg.split = SplitScheme::Holdout { train_fraction: f.unwrap_or(0.8) },
        (None, Some(f), _) => cfg.split = SplitScheme::Holdout { train_fraction: f },
        (None, None, Some(k)) => cfg.split = SplitScheme::Kfold { k },
        (None, None, None) => {}
    }
    if let Some(c) = &a.metric_channel {
        cfg.metric_channel = Some(c.clone());
    }
    cfg.reuse_noise |= a.reuse_noise;
    cfg.share_lstm |= a.share_lstm;
    if let Some(o) = &a.out {
        cfg.output = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = build_config(&a)?;
    let dataset = cfg
        .dataset
        .clone()
        .ok_or_else(|| Error::Usage("no dataset given (--dataset or config `dataset`)".into()))?;
    let ds = load_dataset(&dataset)?;
    let report = run_experiment_on(&cfg, &ds)?;
    let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from("out"));
    write_outputs(&report, &ds, &out)?;
    emit(&format!(
        "{}\n",
        json!({
            "label": report.label,
            "mse": report.mse,
            "metric_channel": report.metric_channel,
            "traffic_bytes": report.traffic.bytes,
            "output": out,
        })
    ))
}

fn load_predictions(path: &Path) -> Result<PredictionSeries> {
    let file = fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let (label, records) = read_predictions(file, &path.display().to_string())?;
    Ok(PredictionSeries { label, records })
}

fn default_channel(series: &PredictionSeries) -> String {
    if series.records.iter().any(|r| r.channel == "speed") {
        "speed".into()
    } else {
        series.records[0].channel.clone()
    }
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let s = load_predictions(&a.predictions)?;
    let channel = a.channel.unwrap_or_else(|| default_channel(&s));
    let mse = aggregate_mse(&s.records, &channel)?;
    let mut folds: Vec<usize> = s.records.iter().map(|r| r.fold).collect();
    folds.sort_unstable();
    folds.dedup();
    let per_fold = folds
        .iter()
        .map(|&k| records_mse(s.records.iter().filter(|r| r.fold == k), &channel).map(|m| json!({"fold": k, "mse": m})))
        .collect::<Result<Vec<_>>>()?;
    let mut nodes: Vec<&str> = s.records.iter().map(|r| r.node.as_str()).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let per_node = nodes
        .iter()
        .map(|&n| records_mse(s.records.iter().filter(|r| r.node.as_str() == n), &channel).map(|m| json!({"node": n, "mse": m})))
        .collect::<Result<Vec<_>>>()?;
    emit(&format!(
        "{}\n",
        serde_json::to_string_pretty(&json!({
            "label": s.label,
            "channel": channel,
            "mse": mse,
            "folds": per_fold,
            "per_node": per_node,
            "records": s.records.iter().filter(|r| r.channel == channel).count(),
        }))?
    ))
}

fn dump(a: DumpArgs) -> Result<()> {
    let series = a.predictions.iter().map(|p| load_predictions(p)).collect::<Result<Vec<_>>>()?;
    let channel = a.channel.unwrap_or_else(|| default_channel(&series[0]));
    let csv = dump_predictions(&series, &a.node.as_str().into(), &channel, a.start..a.start + a.rows)?;
    match a.out {
        Some(path) => fs::write(&path, csv).map_err(|source| Error::Io { path, source }),
        None => emit(&csv),
    }
}

fn convert(a: ConvertArgs) -> Result<()> {
    let ds = match a.format {
        InputFormat::Wide => {
            let files = a
                .input
                .iter()
                .map(|s| {
                    s.split_once('=')
                        .map(|(c, p)| (c.to_owned(), PathBuf::from(p)))
                        .ok_or_else(|| Error::Usage(format!("wide input must be `<channel>=<path>`, got `{s}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            convert_wide(&files, &a.adjacency, a.threshold, a.zero_is_missing, a.interval_minutes)?
        }
        InputFormat::Long => {
            let [input] = a.input.as_slice() else {
                return Err(Error::Usage("long format takes exactly one --input".into()));
            };
            convert_long(Path::new(input), &a.adjacency, a.threshold, a.zero_is_missing, a.interval_minutes)?
        }
    };
    save_dataset(&ds, &a.out)?;
    log::info!(
        "wrote {} nodes x {} steps x {} channels to {}",
        ds.node_count(),
        ds.steps(),
        ds.channel_count(),
        a.out.display()
    );
    Ok(())
}
