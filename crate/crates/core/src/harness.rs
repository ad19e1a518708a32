//! Experiment driver: fit and evaluate one variant on one dataset, compute the
//! distributed MSE, and write `report.json`, `predictions.csv` and `traffic.csv`.
//!
//! A `local`/`todense` run trains one [`NodeModel`] per node, in parallel.
//! For `todense`, every epoch starts with a publish phase in which each node
//! sends the (optionally noised) label histogram of each of its training
//! windows to its neighbours; once all nodes have published, each node
//! resolves its dense-head inputs and trains. Evaluation repeats the publish
//! phase on the test windows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{label_window, load_dataset, make_split, make_windows_in, SeriesDataset, SplitScheme, Window};
use crate::exchange::{Mailbox, TrafficLedger};
use crate::models::{HistogramSource, KnnStore, ModelShape, NodeModel, PreparedWindow, TrainConfig, Variant};
use crate::neuralnet::AdamConfig;
use crate::privacy::{build_histogram, privatize, BinSpec, Epsilon, HistogramInput, HistogramTag, NoisyHistogram};
use crate::seed::{stream, Purpose};
use crate::topology::NodeId;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantChoice {
    Knn,
    Local,
    Todense,
}

impl std::str::FromStr for VariantChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn" => Ok(VariantChoice::Knn),
            "local" => Ok(VariantChoice::Local),
            "todense" => Ok(VariantChoice::Todense),
            other => Err(Error::InvalidParameter(format!(
                "unknown variant `{other}` (expected knn, local or todense)"
            ))),
        }
    }
}

/// `epsilon` as either a positive number or `"none"`/`null`.
mod epsilon_field {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(eps: &Option<Epsilon>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match eps {
            Some(e) => s.serialize_f64(e.value()),
            None => s.serialize_str("none"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Epsilon>, D::Error> {
        use serde::de::Error as _;
        match Option::<Raw>::deserialize(d)? {
            None => Ok(None),
            Some(Raw::Text(t)) if t.eq_ignore_ascii_case("none") => Ok(None),
            Some(Raw::Text(t)) => t
                .parse::<f64>()
                .map_err(D::Error::custom)
                .and_then(|v| Epsilon::new(v).map(Some).map_err(D::Error::custom)),
            Some(Raw::Number(v)) => Epsilon::new(v).map(Some).map_err(D::Error::custom),
        }
    }
}

/// Parses `"none"` or a positive number.
pub fn parse_epsilon(s: &str) -> Result<Option<Epsilon>> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("epsilon must be a number or `none`, got `{s}`")))?;
    Epsilon::new(v).map(Some)
}

fn default_window() -> usize {
    12
}
fn default_bins() -> usize {
    10
}
fn default_hidden() -> usize {
    32
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Canonical dataset directory; not needed when a dataset is passed in directly.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    pub variant: VariantChoice,
    #[serde(default, with = "epsilon_field")]
    pub epsilon: Option<Epsilon>,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Defaults to 5, or 15 under a kfold split.
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub split: SplitScheme,
    #[serde(default)]
    pub seed: u64,
    /// Channel the reported MSE is computed on; `speed` if present, else the first.
    #[serde(default)]
    pub metric_channel: Option<String>,
    /// Noise each window's histogram once and resend it every epoch.
    #[serde(default)]
    pub reuse_noise: bool,
    #[serde(default)]
    pub share_lstm: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(variant: VariantChoice) -> Self {
        ExperimentConfig {
            dataset: None,
            variant,
            epsilon: None,
            window: default_window(),
            bins: default_bins(),
            hidden: default_hidden(),
            batch_size: default_batch(),
            epochs: None,
            learning_rate: default_lr(),
            split: SplitScheme::default(),
            seed: 0,
            metric_channel: None,
            reuse_noise: false,
            share_lstm: false,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn effective_epochs(&self) -> usize {
        self.epochs.unwrap_or(match self.split {
            SplitScheme::Kfold { .. } => 15,
            SplitScheme::Holdout { .. } => 5,
        })
    }

    /// Row label used in prediction dumps and result tables.
    pub fn label(&self) -> String {
        match (self.variant, self.epsilon) {
            (VariantChoice::Knn, _) => "KNNCentralized".into(),
            (VariantChoice::Local, _) => "LabelProportionLocal".into(),
            (VariantChoice::Todense, None) => "LabelProportionToDense".into(),
            (VariantChoice::Todense, Some(e)) => format!("LabelProportionToDense-eps{e}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.window == 0 {
            return bad("window must be positive".into());
        }
        if self.bins == 0 {
            return bad("bins must be positive".into());
        }
        if self.hidden == 0 {
            return bad("hidden size must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.effective_epochs() == 0 {
            return bad("epochs must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.epsilon.is_some() && self.variant != VariantChoice::Todense {
            return bad("epsilon only applies to the todense variant".into());
        }
        Ok(())
    }
}

/// One test prediction in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub fold: usize,
    pub node: NodeId,
    pub channel: String,
    /// Time index of the predicted step.
    pub time: usize,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMse {
    pub node: NodeId,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train: Vec<Range<usize>>,
    pub test: Range<usize>,
    pub mse: f64,
    /// Mean over nodes of each epoch's training loss (normalized space).
    pub train_loss: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrafficSummary {
    pub messages: u64,
    pub bytes: u64,
    /// Bytes needed to ship every raw reading to one sink instead (8 per value).
    pub centralized_bytes: u64,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub config: ExperimentConfig,
    pub metric_channel: String,
    /// Distributed MSE over the metric channel; the unweighted fold mean under kfold.
    pub mse: f64,
    pub per_node: Vec<NodeMse>,
    pub folds: Vec<FoldReport>,
    pub traffic: TrafficSummary,
    pub wall_clock_seconds: f64,
    /// Also written to `predictions.csv`; kept out of `report.json`.
    #[serde(skip)]
    pub records: Vec<PredictionRecord>,
    #[serde(skip)]
    pub ledger: TrafficLedger,
}

/// Sum of squared errors over all records divided by their count.
pub fn distributed_mse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::shape("prediction/truth records", actual.len(), predicted.len()));
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput("prediction records"));
    }
    let sum: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok(sum / predicted.len() as f64)
}

/// Distributed MSE of the records on `channel`.
pub fn records_mse<'a>(records: impl IntoIterator<Item = &'a PredictionRecord>, channel: &str) -> Result<f64> {
    let (p, a): (Vec<f64>, Vec<f64>) = records
        .into_iter()
        .filter(|r| r.channel == channel)
        .map(|r| (r.predicted, r.actual))
        .unzip();
    distributed_mse(&p, &a)
}

/// Aggregate as reported: the unweighted mean of per-fold MSEs.
pub fn aggregate_mse(records: &[PredictionRecord], channel: &str) -> Result<f64> {
    let mut folds: BTreeMap<usize, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        folds.entry(r.fold).or_default().push(r);
    }
    if folds.is_empty() {
        return Err(Error::EmptyInput("prediction records"));
    }
    let mut total = 0.0;
    for recs in folds.values() {
        total += records_mse(recs.iter().copied(), channel)?;
    }
    Ok(total / folds.len() as f64)
}

fn pick_metric_channel(ds: &SeriesDataset, requested: Option<&str>) -> Result<String> {
    match requested {
        Some(c) => ds.channel_index(c).map(|_| c.to_owned()),
        None if ds.channels().iter().any(|c| c == "speed") => Ok("speed".into()),
        None => Ok(ds.channels()[0].clone()),
    }
}

/// Loads the configured dataset and runs the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    let path = config
        .dataset
        .as_deref()
        .ok_or_else(|| Error::Usage("no dataset path configured".into()))?;
    let ds = load_dataset(path).map_err(|e| e.context(format!("loading dataset {}", path.display())))?;
    run_experiment_on(config, &ds)
}

/// Runs fit + evaluate for every fold of the configured split.
pub fn run_experiment_on(config: &ExperimentConfig, ds: &SeriesDataset) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    let metric_channel = pick_metric_channel(ds, config.metric_channel.as_deref())?;
    let plan = make_split(ds.steps(), config.split, config.seed)?;
    let mut records = Vec::new();
    let mut folds = Vec::with_capacity(plan.folds.len());
    let mut ledger = TrafficLedger::default();
    for (k, fold) in plan.folds.iter().enumerate() {
        let outcome = match config.variant {
            VariantChoice::Knn => run_knn_fold(config, ds, k, &fold.train, fold.test.clone()),
            VariantChoice::Local | VariantChoice::Todense => {
                run_model_fold(config, ds, k, &fold.train, fold.test.clone())
            }
        }
        .map_err(|e| e.context(format!("{} fold {k}", config.label())))?;
        let mse = records_mse(&outcome.records, &metric_channel)?;
        log::info!("{} fold {k}: test MSE {mse:.6}", config.label());
        folds.push(FoldReport {
            fold: k,
            train: fold.train.clone(),
            test: fold.test.clone(),
            mse,
            train_loss: outcome.train_loss,
        });
        ledger.merge(&outcome.ledger);
        records.extend(outcome.records);
    }
    let mse = folds.iter().map(|f| f.mse).sum::<f64>() / folds.len() as f64;
    let per_node = ds
        .node_ids()
        .iter()
        .map(|id| {
            let mse = records_mse(records.iter().filter(|r| &r.node == id), &metric_channel)?;
            Ok(NodeMse { node: id.clone(), mse })
        })
        .collect::<Result<Vec<_>>>()?;
    let total = ledger.total();
    let traffic = TrafficSummary {
        messages: total.messages,
        bytes: total.bytes,
        centralized_bytes: (ds.node_count() * ds.channel_count() * ds.steps() * 8) as u64,
        edges: ledger.edges().count(),
    };
    Ok(RunReport {
        label: config.label(),
        config: config.clone(),
        metric_channel,
        mse,
        per_node,
        folds,
        traffic,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        records,
        ledger,
    })
}

struct FoldOutcome {
    records: Vec<PredictionRecord>,
    train_loss: Vec<f64>,
    ledger: TrafficLedger,
}

/// Window starts whose target lies in the test block. Inputs may reach back
/// before the block: they are history observed at prediction time.
fn test_starts(test: &Range<usize>, w: usize) -> Result<Range<usize>> {
    let first_target = test.start.max(w);
    if first_target >= test.end {
        return Err(Error::InvalidParameter(format!(
            "test block {test:?} has no target reachable with window size {w}"
        )));
    }
    Ok(first_target - w..test.end - w)
}

fn run_knn_fold(
    config: &ExperimentConfig,
    ds: &SeriesDataset,
    fold: usize,
    train: &[Range<usize>],
    test: Range<usize>,
) -> Result<FoldOutcome> {
    let w = config.window;
    let mut store = KnnStore::new(w);
    store.fit(ds, train)?;
    let starts: Vec<usize> = test_starts(&test, w)?.collect();
    let predictions = starts
        .iter()
        .map(|&s| store.predict(&KnnStore::features_at(ds, s, w)).map(<[f64]>::to_vec))
        .collect::<Result<Vec<_>>>()?;
    let c = ds.channel_count();
    let mut records = Vec::with_capacity(starts.len() * ds.node_count() * c);
    for n in 0..ds.node_count() {
        for (&s, pred) in starts.iter().zip(&predictions) {
            for ch in 0..c {
                records.push(PredictionRecord {
                    fold,
                    node: ds.node_ids()[n].clone(),
                    channel: ds.channels()[ch].clone(),
                    time: s + w,
                    actual: ds.value(n, ch, s + w),
                    predicted: pred[n * c + ch],
                });
            }
        }
    }
    Ok(FoldOutcome {
        records,
        train_loss: Vec::new(),
        ledger: TrafficLedger::default(),
    })
}

/// Dense-head inputs resolved for one node, keyed by window start.
struct ResolvedInputs(BTreeMap<usize, Vec<HistogramInput>>);

impl HistogramSource for ResolvedInputs {
    fn histograms(&self, window_start: usize) -> Result<Vec<HistogramInput>> {
        self.0
            .get(&window_start)
            .cloned()
            .ok_or_else(|| Error::InvalidParameter(format!("no histogram inputs for window {window_start}")))
    }
}

/// Seed-stream index for (fold, pass, node). `pass` is the epoch, or `epochs` for the test pass.
fn stream_index(fold: usize, pass: usize, node: usize) -> u64 {
    ((fold as u64 & 0xff) << 24) | ((pass as u64 & 0xff) << 16) | (node as u64 & 0xffff)
}

struct Exchange<'a> {
    ds: &'a SeriesDataset,
    specs: &'a [BinSpec],
    window: usize,
    epsilon: Option<Epsilon>,
    mailbox: Mailbox,
}

impl Exchange<'_> {
    /// Histograms of every channel for each window start, noised if configured.
    fn node_histograms(&self, node: usize, starts: &[usize], noise_index: u64, seed: u64) -> Result<Vec<Vec<NoisyHistogram>>> {
        let mut rng = stream(seed, Purpose::Noise, noise_index);
        let id = &self.ds.node_ids()[node];
        starts
            .iter()
            .map(|&s| {
                (0..self.ds.channel_count())
                    .map(|ch| {
                        let tag = HistogramTag {
                            origin: id.clone(),
                            window_index: s,
                            channel: ch,
                        };
                        let raw = build_histogram(label_window(self.ds, node, ch, s, self.window), &self.specs[ch], tag)?;
                        match self.epsilon {
                            Some(eps) => privatize(&raw, eps, &mut rng),
                            None => Ok(raw),
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Publish phase for all nodes. Returns what each node sent (its own histograms).
    fn publish_all(&self, starts: &[Vec<usize>], hists: &[Vec<Vec<NoisyHistogram>>]) -> Result<()> {
        let graph = self.ds.graph();
        (0..self.ds.node_count()).into_par_iter().try_for_each(|n| {
            let id = &self.ds.node_ids()[n];
            for (s, h) in starts[n].iter().zip(&hists[n]) {
                self.mailbox.publish_window(id, *s, h, graph)?;
            }
            Ok(())
        })
    }

    fn resolve(&self, node: usize, starts: &[usize], own: &[Vec<NoisyHistogram>]) -> Result<ResolvedInputs> {
        let graph = self.ds.graph();
        let id = &self.ds.node_ids()[node];
        let mut map = BTreeMap::new();
        for (&s, own) in starts.iter().zip(own) {
            let inputs = (0..self.ds.channel_count())
                .map(|ch| self.mailbox.resolve_input_histogram(id, s, ch, graph, &own[ch], self.window))
                .collect::<Result<Vec<_>>>()?;
            map.insert(s, inputs);
        }
        Ok(ResolvedInputs(map))
    }
}

fn run_model_fold(
    config: &ExperimentConfig,
    ds: &SeriesDataset,
    fold: usize,
    train: &[Range<usize>],
    test: Range<usize>,
) -> Result<FoldOutcome> {
    let w = config.window;
    let n_nodes = ds.node_count();
    let c = ds.channel_count();
    let epochs = config.effective_epochs();
    let variant = match config.variant {
        VariantChoice::Todense => Variant::ToDense,
        _ => Variant::Local,
    };
    let shape = ModelShape {
        window: w,
        channels: c,
        bins: config.bins,
        hidden: config.hidden,
        share_lstm: config.share_lstm,
    };
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let train_cfg = TrainConfig {
        batch_size: config.batch_size,
        adam,
    };

    // Bins are shared by all nodes so that neighbour histograms can be averaged.
    let specs = (0..c)
        .map(|ch| {
            let values = (0..n_nodes).flat_map(|n| {
                train
                    .iter()
                    .flat_map(move |r| ds.series(n, ch)[r.clone()].iter().copied())
            });
            BinSpec::fit(values, config.bins)
        })
        .collect::<Result<Vec<_>>>()?;

    let windows_for = |n: usize, ranges: &[Range<usize>]| -> Result<Vec<Window>> {
        let mut out = Vec::new();
        for r in ranges {
            if r.len() > w {
                out.extend(make_windows_in(ds, n, w, r.clone())?);
            }
        }
        Ok(out)
    };
    let train_windows = (0..n_nodes)
        .map(|n| {
            let ws = windows_for(n, train)?;
            if ws.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "training segments {train:?} hold no complete window of size {w}"
                )));
            }
            ws.iter().map(|x| PreparedWindow::new(x, c)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let train_starts: Vec<Vec<usize>> = train_windows.iter().map(|ws| ws.iter().map(|x| x.start).collect()).collect();
    let test_span = test_starts(&test, w)?;
    let test_windows = (0..n_nodes)
        .map(|n| make_windows_in(ds, n, w, test_span.start..test.end))
        .collect::<Result<Vec<_>>>()?;
    let test_starts: Vec<Vec<usize>> = test_windows.iter().map(|ws| ws.iter().map(|x| x.start).collect()).collect();

    let mut models = (0..n_nodes)
        .map(|n| {
            let mut rng = stream(config.seed, Purpose::ModelInit, stream_index(fold, 0, n));
            Ok(NodeModel::new(variant, shape, adam, &mut rng)?.with_required_epsilon(config.epsilon))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut order_rngs: Vec<_> = (0..n_nodes)
        .map(|n| stream(config.seed, Purpose::BatchOrder, stream_index(fold, 0, n)))
        .collect();

    let exchange = Exchange {
        ds,
        specs: &specs,
        window: w,
        epsilon: config.epsilon,
        mailbox: Mailbox::new(config.epsilon),
    };
    let mut cached: Option<Vec<Vec<Vec<NoisyHistogram>>>> = None;
    let mut train_loss = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let sources = if variant == Variant::ToDense {
            let hists = match (&cached, config.reuse_noise) {
                (Some(h), true) => h.clone(),
                _ => (0..n_nodes)
                    .into_par_iter()
                    .map(|n| exchange.node_histograms(n, &train_starts[n], stream_index(fold, epoch, n), config.seed))
                    .collect::<Result<Vec<_>>>()?,
            };
            exchange.mailbox.clear();
            exchange.publish_all(&train_starts, &hists)?;
            let sources = (0..n_nodes)
                .into_par_iter()
                .map(|n| exchange.resolve(n, &train_starts[n], &hists[n]).map(Some))
                .collect::<Result<Vec<_>>>()?;
            exchange.mailbox.clear();
            if config.reuse_noise {
                cached = Some(hists);
            }
            sources
        } else {
            (0..n_nodes).map(|_| None).collect()
        };
        let losses = models
            .par_iter_mut()
            .zip(order_rngs.par_iter_mut())
            .zip(train_windows.par_iter())
            .zip(sources.par_iter())
            .enumerate()
            .map(|(n, (((model, rng), windows), source))| {
                model
                    .train_epoch(windows, source.as_ref().map(|s| s as &dyn HistogramSource), &train_cfg, rng)
                    .map_err(|e| e.context(format!("node {} epoch {epoch}", ds.node_ids()[n])))
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean = losses.iter().sum::<f64>() / n_nodes as f64;
        log::debug!("{} fold {fold} epoch {epoch}: train loss {mean:.6}", config.label());
        train_loss.push(mean);
    }

    let test_sources = if variant == Variant::ToDense {
        let hists = (0..n_nodes)
            .into_par_iter()
            .map(|n| exchange.node_histograms(n, &test_starts[n], stream_index(fold, epochs, n), config.seed))
            .collect::<Result<Vec<_>>>()?;
        exchange.mailbox.clear();
        exchange.publish_all(&test_starts, &hists)?;
        let s = (0..n_nodes)
            .into_par_iter()
            .map(|n| exchange.resolve(n, &test_starts[n], &hists[n]).map(Some))
            .collect::<Result<Vec<_>>>()?;
        exchange.mailbox.clear();
        s
    } else {
        (0..n_nodes).map(|_| None).collect()
    };

    let per_node = models
        .par_iter()
        .zip(test_windows.par_iter())
        .zip(test_sources.par_iter())
        .enumerate()
        .map(|(n, ((model, windows), source))| {
            let mut out = Vec::with_capacity(windows.len() * c);
            for win in windows {
                let hist = source.as_ref().map(|s| s.histograms(win.start)).transpose()?;
                let pred = model.predict(&win.input, hist.as_deref())?;
                for ch in 0..c {
                    out.push(PredictionRecord {
                        fold,
                        node: ds.node_ids()[n].clone(),
                        channel: ds.channels()[ch].clone(),
                        time: win.target_time(w),
                        actual: win.target[ch],
                        predicted: pred[ch],
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldOutcome {
        records: per_node.into_iter().flatten().collect(),
        train_loss,
        ledger: exchange.mailbox.ledger(),
    })
}

/// Messages a `todense` run sends: every node sends one message per
/// neighbour, channel and window, for every training epoch and the test pass.
pub fn expected_traffic(ds: &SeriesDataset, config: &ExperimentConfig) -> Result<(u64, u64)> {
    if config.variant != VariantChoice::Todense {
        return Ok((0, 0));
    }
    let plan = make_split(ds.steps(), config.split, config.seed)?;
    let w = config.window;
    let per_node_sends: u64 = plan
        .folds
        .iter()
        .map(|f| {
            let train: usize = f.train.iter().map(|r| r.len().saturating_sub(w)).sum();
            let test = test_starts(&f.test, w).map_or(0, |r| r.len());
            (train * config.effective_epochs() + test) as u64
        })
        .sum();
    let degree_sum: u64 = (0..ds.node_count()).map(|n| ds.graph().neighbor_indices(n).len() as u64).sum();
    let messages = degree_sum * ds.channel_count() as u64 * per_node_sends;
    Ok((messages, messages * crate::exchange::message_size(config.bins)))
}

pub const PREDICTIONS_HEADER: [&str; 7] = ["variant", "fold", "node", "channel", "time", "actual", "predicted"];

pub fn write_predictions<W: Write>(label: &str, records: &[PredictionRecord], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(PREDICTIONS_HEADER)?;
    for r in records {
        out.write_record([
            label.to_owned(),
            r.fold.to_string(),
            r.node.to_string(),
            r.channel.clone(),
            r.time.to_string(),
            format!("{:?}", r.actual),
            format!("{:?}", r.predicted),
        ])?;
    }
    out.flush().map_err(|e| Error::io("predictions", e))?;
    Ok(())
}

/// Reads `predictions.csv`; returns the variant label and the records.
pub fn read_predictions<R: Read>(reader: R, path: &str) -> Result<(String, Vec<PredictionRecord>)> {
    let mut rd = csv::Reader::from_reader(reader);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header != PREDICTIONS_HEADER {
        return Err(Error::Parse {
            path: path.into(),
            row: 1,
            column: 1,
            message: format!("expected header {}", PREDICTIONS_HEADER.join(",")),
        });
    }
    let mut label = None;
    let mut records = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let field = |k: usize| row.get(k).unwrap_or("");
        let parse_err = |k: usize, what: &str| Error::Parse {
            path: path.into(),
            row: line,
            column: k + 1,
            message: format!("invalid {what} `{}`", field(k)),
        };
        let l = field(0).to_owned();
        match &label {
            None => label = Some(l),
            Some(prev) if *prev != l => {
                return Err(Error::Parse {
                    path: path.into(),
                    row: line,
                    column: 1,
                    message: format!("mixed variants `{prev}` and `{l}`"),
                })
            }
            Some(_) => {}
        }
        records.push(PredictionRecord {
            fold: field(1).parse().map_err(|_| parse_err(1, "fold"))?,
            node: NodeId(field(2).to_owned()),
            channel: field(3).to_owned(),
            time: field(4).parse().map_err(|_| parse_err(4, "time"))?,
            actual: field(5).parse().map_err(|_| parse_err(5, "number"))?,
            predicted: field(6).parse().map_err(|_| parse_err(6, "number"))?,
        });
    }
    let label = label.ok_or(Error::EmptyInput("prediction records"))?;
    Ok((label, records))
}

/// Writes `report.json`, `predictions.csv` and `traffic.csv` into `dir`.
pub fn write_outputs(report: &RunReport, ds: &SeriesDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| {
        let p = dir.join(name);
        File::create(&p).map(BufWriter::new).map_err(|e| Error::io(&p, e))
    };
    let mut f = create("report.json")?;
    serde_json::to_writer_pretty(&mut f, report)?;
    f.write_all(b"\n").map_err(|e| Error::io(dir.join("report.json"), e))?;
    f.flush().map_err(|e| Error::io(dir.join("report.json"), e))?;
    write_predictions(&report.label, &report.records, create("predictions.csv")?)?;
    report.ledger.write_csv(ds.graph(), create("traffic.csv")?)?;
    Ok(())
}

/// A prediction series ready to be dumped next to others.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSeries {
    pub label: String,
    pub records: Vec<PredictionRecord>,
}

impl From<&RunReport> for PredictionSeries {
    fn from(r: &RunReport) -> Self {
        PredictionSeries {
            label: r.label.clone(),
            records: r.records.clone(),
        }
    }
}

/// Plot-ready CSV for one node and channel: `index,actual,<label>...`, one
/// row per test time in `range` (positions in time order).
pub fn dump_predictions(series: &[PredictionSeries], node: &NodeId, channel: &str, range: Range<usize>) -> Result<String> {
    let first = series.first().ok_or(Error::EmptyInput("prediction series"))?;
    let pick = |s: &PredictionSeries| -> Vec<(usize, f64, f64)> {
        let mut v: Vec<_> = s
            .records
            .iter()
            .filter(|r| &r.node == node && r.channel == channel)
            .map(|r| (r.time, r.actual, r.predicted))
            .collect();
        v.sort_by_key(|x| x.0);
        v
    };
    let base = pick(first);
    if base.is_empty() {
        return Err(Error::UnknownNode(format!("{node} (channel {channel}) has no predictions")));
    }
    if range.start >= range.end || range.end > base.len() {
        return Err(Error::InvalidParameter(format!(
            "row range {range:?} outside the {} available predictions",
            base.len()
        )));
    }
    let columns = series
        .iter()
        .map(|s| {
            let v = pick(s);
            if v.len() != base.len() || v.iter().zip(&base).any(|(a, b)| a.0 != b.0) {
                return Err(Error::InvalidParameter(format!(
                    "`{}` does not cover the same test times as `{}`",
                    s.label, first.label
                )));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = String::from("index,actual");
    for s in series {
        out.push(',');
        out.push_str(&s.label);
    }
    out.push('\n');
    for i in range {
        let _ = write!(out, "{},{:?}", base[i].0, base[i].1);
        for col in &columns {
            let _ = write!(out, ",{:?}", col[i].2);
        }
        out.push('\n');
    }
    Ok(out)
}
