//! Node predictors and the centralized kNN baseline.
//!
//! A [`NodeModel`] chains, per channel, LSTM -> scalar projection -> ReLU, then
//! a [`LocalLinearParams`] layer that mixes channels per timestep, then a
//! channelwise dense head. The `ToDense` variant feeds averaged neighbour
//! histogram proportions into the dense head next to the time features; the
//! `Local` variant feeds zeros and never updates the histogram weights.

use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{SeriesDataset, Window};
use crate::neuralnet::{
    instance_norm_window, mse_loss, relu, relu_backward, AdamConfig, AdamState, Checkpoint,
    DenseParams, LocalLinearParams, LstmParams, LstmTrace, NormStats, Parameterized,
};
use crate::privacy::{Epsilon, HistogramInput};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Local,
    ToDense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub window: usize,
    pub channels: usize,
    pub bins: usize,
    pub hidden: usize,
    /// One LSTM for all channels instead of one per channel.
    #[serde(default)]
    pub share_lstm: bool,
}

/// Every trainable block of a node model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    pub lstms: Vec<LstmParams>,
    pub local: LocalLinearParams,
    pub dense: DenseParams,
}

impl NodeParams {
    pub fn init<R: Rng + ?Sized>(shape: &ModelShape, rng: &mut R) -> Self {
        let count = if shape.share_lstm { 1 } else { shape.channels };
        NodeParams {
            lstms: (0..count).map(|_| LstmParams::init(shape.hidden, rng)).collect(),
            local: LocalLinearParams::identity(shape.window, shape.channels),
            dense: DenseParams::init(shape.window, shape.bins, shape.channels, rng),
        }
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }
}

impl Parameterized for NodeParams {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'static str, [usize; 2], &'a [f64])) {
        for l in &self.lstms {
            l.visit(f);
        }
        self.local.visit(f);
        self.dense.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&'static str, &mut [f64])) {
        for l in &mut self.lstms {
            l.visit_mut(f);
        }
        self.local.visit_mut(f);
        self.dense.visit_mut(f);
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    lstm: Vec<LstmTrace>,
    /// Projected LSTM outputs, `window x channels`.
    projected: Vec<f64>,
    /// ReLU of `projected`; these are the local linear inputs.
    activated: Vec<f64>,
    /// Local linear outputs; the dense head's time features.
    time_features: Vec<f64>,
    hist: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl ForwardTrace {
    pub fn time_features(&self) -> &[f64] {
        &self.time_features
    }

    pub fn activated(&self) -> &[f64] {
        &self.activated
    }
}

/// A window prepared for training: instance-normalized inputs and target.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedWindow {
    pub start: usize,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub stats: Vec<NormStats>,
}

impl PreparedWindow {
    /// Normalizes with the statistics of the input window itself; the target
    /// uses the same statistics.
    pub fn new(window: &Window, channels: usize) -> Result<Self> {
        let (input, stats) = instance_norm_window(&window.input, channels)?;
        let target = window
            .target
            .iter()
            .zip(&stats)
            .map(|(&y, s)| s.normalize(y))
            .collect();
        Ok(PreparedWindow {
            start: window.start,
            input,
            target,
            stats,
        })
    }
}

/// Supplies the dense-head histogram inputs for a window (one per channel).
pub trait HistogramSource: Sync {
    fn histograms(&self, window_start: usize) -> Result<Vec<HistogramInput>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeModel {
    pub variant: Variant,
    pub shape: ModelShape,
    pub params: NodeParams,
    pub adam: AdamState,
    /// Privacy tag every histogram input must carry (`ToDense` with noise).
    pub required_epsilon: Option<Epsilon>,
}

impl Parameterized for NodeModel {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'static str, [usize; 2], &'a [f64])) {
        self.params.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&'static str, &mut [f64])) {
        self.params.visit_mut(f);
    }
}

impl NodeModel {
    pub fn new<R: Rng + ?Sized>(variant: Variant, shape: ModelShape, adam: AdamConfig, rng: &mut R) -> Result<Self> {
        if shape.window == 0 || shape.channels == 0 || shape.bins == 0 || shape.hidden == 0 {
            return Err(Error::InvalidParameter(format!("degenerate model shape {shape:?}")));
        }
        let params = NodeParams::init(&shape, rng);
        Ok(Self::from_params(variant, shape, params, adam))
    }

    pub fn from_params(variant: Variant, shape: ModelShape, params: NodeParams, adam: AdamConfig) -> Self {
        let adam = AdamState::new(&params, adam);
        NodeModel {
            variant,
            shape,
            params,
            adam,
            required_epsilon: None,
        }
    }

    pub fn with_required_epsilon(mut self, eps: Option<Epsilon>) -> Self {
        self.required_epsilon = eps;
        self
    }

    fn lstm_for(&self, channel: usize) -> usize {
        if self.shape.share_lstm {
            0
        } else {
            channel
        }
    }

    fn histogram_inputs(&self, hist: Option<&[HistogramInput]>) -> Result<Vec<Vec<f64>>> {
        match (self.variant, hist) {
            (Variant::Local, Some(_)) => Err(Error::Usage(
                "the Local variant does not take histogram inputs".into(),
            )),
            (Variant::Local, None) => Ok(vec![vec![0.0; self.shape.bins]; self.shape.channels]),
            (Variant::ToDense, None) => Err(Error::Usage(
                "the ToDense variant needs one histogram input per channel".into(),
            )),
            (Variant::ToDense, Some(h)) => {
                if h.len() != self.shape.channels {
                    return Err(Error::shape("histogram inputs", self.shape.channels, h.len()));
                }
                if let Some(required) = self.required_epsilon {
                    if let Some(bad) = h.iter().find(|x| x.epsilon != Some(required)) {
                        return Err(Error::PrivacyViolation(format!(
                            "model requires epsilon {required} histograms, got {:?}",
                            bad.epsilon
                        )));
                    }
                }
                Ok(h.iter().map(|x| x.proportions.clone()).collect())
            }
        }
    }

    /// Forward pass on a normalized `window x channels` block.
    pub fn forward_trace(&self, window: &[f64], hist: Option<&[HistogramInput]>) -> Result<ForwardTrace> {
        let ModelShape { window: w, channels: c, .. } = self.shape;
        if window.len() != w * c {
            return Err(Error::shape("model input (window x channels)", w * c, window.len()));
        }
        let hist = self.histogram_inputs(hist)?;
        let mut lstm = Vec::with_capacity(c);
        let mut projected = vec![0.0; w * c];
        let mut column = vec![0.0; w];
        for ch in 0..c {
            for t in 0..w {
                column[t] = window[t * c + ch];
            }
            let trace = self.params.lstms[self.lstm_for(ch)]
                .forward(&column)
                .map_err(|e| e.context(format!("channel {ch}")))?;
            for (t, &y) in trace.outputs().iter().enumerate() {
                projected[t * c + ch] = y;
            }
            lstm.push(trace);
        }
        let activated = relu(&projected);
        let time_features = self.params.local.forward(&activated)?;
        let output = self.params.dense.forward(&time_features, &hist)?;
        Ok(ForwardTrace {
            lstm,
            projected,
            activated,
            time_features,
            hist,
            output,
        })
    }

    /// Predictions in normalized space, one per channel.
    pub fn forward(&self, window: &[f64], hist: Option<&[HistogramInput]>) -> Result<Vec<f64>> {
        Ok(self.forward_trace(window, hist)?.output)
    }

    /// Gradients of `sum_c d_output[c] * output[c]` w.r.t. every parameter.
    pub fn backward(&self, trace: &ForwardTrace, d_output: &[f64]) -> Result<NodeParams> {
        let ModelShape { window: w, channels: c, .. } = self.shape;
        let hist_trainable = self.variant == Variant::ToDense;
        let (dense, d_time) =
            self.params
                .dense
                .backward(&trace.time_features, &trace.hist, d_output, hist_trainable)?;
        let (local, d_act) = self.params.local.backward(&trace.activated, &d_time)?;
        let d_proj = relu_backward(&trace.projected, &d_act);
        let mut grads = self.params.zeros_like();
        grads.dense = dense;
        grads.local = local;
        let mut column = vec![0.0; w];
        for ch in 0..c {
            for t in 0..w {
                column[t] = d_proj[t * c + ch];
            }
            let idx = self.lstm_for(ch);
            let (g, _) = self.params.lstms[idx].backward(&trace.lstm[ch], &column)?;
            grads.lstms[idx].add_assign_from(&g);
        }
        Ok(grads)
    }

    /// Loss and gradients of the batch MSE over all channels.
    pub fn batch_gradients(
        &self,
        batch: &[&PreparedWindow],
        hists: Option<&[Vec<HistogramInput>]>,
    ) -> Result<(f64, NodeParams)> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("training batch"));
        }
        let c = self.shape.channels;
        let mut traces = Vec::with_capacity(batch.len());
        let mut preds = Vec::with_capacity(batch.len() * c);
        let mut targets = Vec::with_capacity(batch.len() * c);
        for (i, ex) in batch.iter().enumerate() {
            let h = hists.map(|hs| hs[i].as_slice());
            let trace = self.forward_trace(&ex.input, h)?;
            preds.extend_from_slice(&trace.output);
            targets.extend_from_slice(&ex.target);
            traces.push(trace);
        }
        let (loss, d_pred) = mse_loss(&preds, &targets)?;
        let mut grads = self.params.zeros_like();
        for (i, trace) in traces.iter().enumerate() {
            let g = self.backward(trace, &d_pred[i * c..(i + 1) * c])?;
            grads.add_assign_from(&g);
        }
        if self.variant == Variant::Local {
            grads.dense.zero_hist_weights();
        }
        Ok((loss, grads))
    }

    /// One optimizer step on a batch; returns the batch loss.
    pub fn train_step(
        &mut self,
        batch: &[&PreparedWindow],
        hists: Option<&[Vec<HistogramInput>]>,
    ) -> Result<f64> {
        let (loss, grads) = self.batch_gradients(batch, hists)?;
        self.adam.step(&mut self.params, &grads)?;
        if !self.params.all_finite() {
            return Err(Error::InvalidParameter(
                "training produced non-finite parameters".into(),
            ));
        }
        Ok(loss)
    }

    /// One pass over `windows` in shuffled mini-batches. Returns the mean batch loss.
    pub fn train_epoch<R: Rng + ?Sized>(
        &mut self,
        windows: &[PreparedWindow],
        source: Option<&dyn HistogramSource>,
        config: &TrainConfig,
        rng: &mut R,
    ) -> Result<f64> {
        if windows.is_empty() {
            return Err(Error::EmptyInput("training windows"));
        }
        if config.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        if self.variant == Variant::ToDense && source.is_none() {
            return Err(Error::Usage("ToDense training needs a histogram source".into()));
        }
        let mut order: Vec<usize> = (0..windows.len()).collect();
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&PreparedWindow> = chunk.iter().map(|&i| &windows[i]).collect();
            let hists = match (self.variant, source) {
                (Variant::ToDense, Some(src)) => Some(
                    batch
                        .iter()
                        .map(|ex| src.histograms(ex.start))
                        .collect::<Result<Vec<_>>>()?,
                ),
                _ => None,
            };
            total += self.train_step(&batch, hists.as_deref())?;
            batches += 1;
        }
        Ok(total / batches as f64)
    }

    /// Mean squared error in normalized space over `windows`.
    pub fn evaluate_normalized(&self, windows: &[PreparedWindow], source: Option<&dyn HistogramSource>) -> Result<f64> {
        if windows.is_empty() {
            return Err(Error::EmptyInput("evaluation windows"));
        }
        let mut sum = 0.0;
        let mut n = 0usize;
        for ex in windows {
            let hist = self.source_histograms(source, ex.start)?;
            let pred = self.forward(&ex.input, hist.as_deref())?;
            for (p, t) in pred.iter().zip(&ex.target) {
                sum += (p - t).powi(2);
                n += 1;
            }
        }
        Ok(sum / n as f64)
    }

    fn source_histograms(&self, source: Option<&dyn HistogramSource>, start: usize) -> Result<Option<Vec<HistogramInput>>> {
        match (self.variant, source) {
            (Variant::ToDense, Some(src)) => Ok(Some(src.histograms(start)?)),
            (Variant::ToDense, None) => Err(Error::Usage("ToDense prediction needs a histogram source".into())),
            (Variant::Local, _) => Ok(None),
        }
    }

    /// Prediction in original units: normalize the raw window with its own
    /// statistics, run the model, invert the normalization per channel.
    pub fn predict(&self, raw_window: &[f64], hist: Option<&[HistogramInput]>) -> Result<Vec<f64>> {
        let (input, stats) = instance_norm_window(raw_window, self.shape.channels)?;
        let out = self.forward(&input, hist)?;
        Ok(out.iter().zip(&stats).map(|(&z, s)| s.invert(z)).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Checkpoint::save(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::<NodeModel>::load(path)
    }
}

/// One memorized whole-graph window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnEntry {
    pub start: usize,
    /// `window x nodes x channels`, time-major.
    pub features: Vec<f64>,
    /// Next-step value per node and channel, node-major.
    pub labels: Vec<f64>,
}

/// Memorized training windows for the 1-nearest-neighbour baseline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnnStore {
    pub window: usize,
    pub nodes: usize,
    pub channels: usize,
    pub entries: Vec<KnnEntry>,
}

impl KnnStore {
    pub fn new(window: usize) -> Self {
        KnnStore {
            window,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Whole-graph features of the window starting at `start`.
    pub fn features_at(ds: &SeriesDataset, start: usize, window: usize) -> Vec<f64> {
        let mut f = Vec::with_capacity(window * ds.node_count() * ds.channel_count());
        for t in start..start + window {
            for n in 0..ds.node_count() {
                for c in 0..ds.channel_count() {
                    f.push(ds.value(n, c, t));
                }
            }
        }
        f
    }

    pub fn labels_at(ds: &SeriesDataset, t: usize) -> Vec<f64> {
        let mut l = Vec::with_capacity(ds.node_count() * ds.channel_count());
        for n in 0..ds.node_count() {
            for c in 0..ds.channel_count() {
                l.push(ds.value(n, c, t));
            }
        }
        l
    }

    /// Forgets previous entries and memorizes every stride-1 window inside the
    /// training segments, each paired with the following step.
    pub fn fit(&mut self, ds: &SeriesDataset, segments: &[Range<usize>]) -> Result<()> {
        let w = self.window;
        if w == 0 {
            return Err(Error::InvalidParameter("kNN window must be positive".into()));
        }
        self.entries.clear();
        self.nodes = ds.node_count();
        self.channels = ds.channel_count();
        for seg in segments {
            if seg.end > ds.steps() {
                return Err(Error::InvalidParameter(format!("segment {seg:?} exceeds series length")));
            }
            if seg.len() <= w {
                continue;
            }
            for start in seg.start..seg.end - w {
                self.entries.push(KnnEntry {
                    start,
                    features: Self::features_at(ds, start, w),
                    labels: Self::labels_at(ds, start + w),
                });
            }
        }
        if self.entries.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "training series too short for kNN window {w}"
            )));
        }
        Ok(())
    }

    /// Index of the stored window closest to `query`; ties go to the lowest index.
    pub fn nearest(&self, query: &[f64]) -> Result<usize> {
        let first = self.entries.first().ok_or(Error::EmptyInput("kNN store"))?;
        if query.len() != first.features.len() {
            return Err(Error::shape("kNN query", first.features.len(), query.len()));
        }
        let best = self
            .entries
            .par_iter()
            .enumerate()
            .map(|(i, e)| (squared_distance(&e.features, query), i))
            .reduce(
                || (f64::INFINITY, usize::MAX),
                |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
            );
        Ok(best.1)
    }

    /// Labels of the nearest stored window (k = 1).
    pub fn predict(&self, query: &[f64]) -> Result<&[f64]> {
        let i = self.nearest(query)?;
        Ok(&self.entries[i].labels)
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::gradcheck::max_rel_error;
    use crate::seed::{stream, Purpose};
    use crate::topology::SensorGraph;

    fn shape(channels: usize) -> ModelShape {
        ModelShape {
            window: 4,
            channels,
            bins: 3,
            hidden: 3,
            share_lstm: false,
        }
    }

    fn hist_inputs(n: usize, eps: Option<Epsilon>) -> Vec<HistogramInput> {
        (0..n)
            .map(|c| HistogramInput {
                proportions: vec![0.2 + 0.1 * c as f64, 0.5, 0.3],
                epsilon: eps,
            })
            .collect()
    }

    #[test]
    fn variant_usage_errors() {
        let mut rng = stream(1, Purpose::ModelInit, 0);
        let local = NodeModel::new(Variant::Local, shape(2), AdamConfig::default(), &mut rng).unwrap();
        let x = vec![0.1; 8];
        assert!(matches!(local.forward(&x, Some(&hist_inputs(2, None))), Err(Error::Usage(_))));
        let dense = NodeModel::new(Variant::ToDense, shape(2), AdamConfig::default(), &mut rng).unwrap();
        assert!(matches!(dense.forward(&x, None), Err(Error::Usage(_))));
        assert!(dense.forward(&x[..6], Some(&hist_inputs(2, None))).is_err());
    }

    #[test]
    fn privacy_tag_is_enforced() {
        let mut rng = stream(1, Purpose::ModelInit, 0);
        let eps = Epsilon::new(0.5).unwrap();
        let m = NodeModel::new(Variant::ToDense, shape(1), AdamConfig::default(), &mut rng)
            .unwrap()
            .with_required_epsilon(Some(eps));
        let x = vec![0.1; 4];
        assert!(matches!(
            m.forward(&x, Some(&hist_inputs(1, None))),
            Err(Error::PrivacyViolation(_))
        ));
        assert!(m.forward(&x, Some(&hist_inputs(1, Some(eps)))).is_ok());
    }

    #[test]
    fn fresh_model_time_features_equal_relu_of_projections() {
        let mut rng = stream(2, Purpose::ModelInit, 0);
        let m = NodeModel::new(Variant::Local, shape(2), AdamConfig::default(), &mut rng).unwrap();
        let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let trace = m.forward_trace(&x, None).unwrap();
        assert_eq!(trace.time_features(), trace.activated());
    }

    #[test]
    fn full_model_gradient_check() {
        let mut rng = stream(3, Purpose::ModelInit, 0);
        for variant in [Variant::Local, Variant::ToDense] {
            for share in [false, true] {
                let sh = ModelShape { share_lstm: share, ..shape(2) };
                let mut m = NodeModel::new(variant, sh, AdamConfig::default(), &mut rng).unwrap();
                m.params.local = LocalLinearParams::random(4, 2, 0.8, &mut rng);
                let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let h = hist_inputs(2, None);
                let hist = (variant == Variant::ToDense).then_some(h.as_slice());
                let d = [0.6, -1.1];
                let trace = m.forward_trace(&x, hist).unwrap();
                let grads = m.backward(&trace, &d).unwrap();
                let err = max_rel_error(
                    &m.params,
                    &grads,
                    |p| {
                        let mut q = m.clone();
                        q.params = p.clone();
                        let out = q.forward(&x, hist).unwrap();
                        out[0] * d[0] + out[1] * d[1]
                    },
                    1e-5,
                );
                assert!(err < 1e-4, "{variant:?} shared={share}: {err}");
            }
        }
    }

    #[test]
    fn local_variant_has_zero_hist_gradient() {
        let mut rng = stream(4, Purpose::ModelInit, 0);
        let m = NodeModel::new(Variant::Local, shape(1), AdamConfig::default(), &mut rng).unwrap();
        let ws: Vec<PreparedWindow> = (0..5)
            .map(|k| PreparedWindow {
                start: k,
                input: (0..4).map(|i| ((i + k) as f64).cos()).collect(),
                target: vec![0.3],
                stats: vec![],
            })
            .collect();
        let refs: Vec<&PreparedWindow> = ws.iter().collect();
        let (_, g) = m.batch_gradients(&refs, None).unwrap();
        assert!(g.dense.hist_weights(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reduction_to_local() {
        let mut rng = stream(5, Purpose::ModelInit, 0);
        let mut dense = NodeModel::new(Variant::ToDense, shape(2), AdamConfig::default(), &mut rng).unwrap();
        dense.params.dense.zero_hist_weights();
        let mut local = dense.clone();
        local.variant = Variant::Local;
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let a = dense.forward(&x, Some(&hist_inputs(2, None))).unwrap();
        let b = local.forward(&x, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_series_is_learned() {
        let mut rng = stream(6, Purpose::ModelInit, 0);
        let sh = ModelShape { window: 12, channels: 1, bins: 10, hidden: 8, share_lstm: false };
        let mut m = NodeModel::new(Variant::Local, sh, AdamConfig::default(), &mut rng).unwrap();
        let windows: Vec<PreparedWindow> = (0..64)
            .map(|s| {
                PreparedWindow::new(
                    &Window { start: s, input: vec![42.0; 12], target: vec![42.0] },
                    1,
                )
                .unwrap()
            })
            .collect();
        let cfg = TrainConfig::default();
        let mut loss = f64::INFINITY;
        for _ in 0..50 {
            loss = m.train_epoch(&windows, None, &cfg, &mut rng).unwrap();
        }
        assert!(loss < 1e-3, "loss {loss}");
        let p = m.predict(&[42.0; 12], None).unwrap();
        assert!(p[0].is_finite());
        assert!((p[0] - 42.0).abs() < 0.1);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = stream(7, Purpose::ModelInit, 0);
        let m = NodeModel::new(Variant::ToDense, shape(2), AdamConfig::default(), &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.json");
        m.save(&path).unwrap();
        assert_eq!(NodeModel::load(&path).unwrap(), m);
    }

    fn tiny_dataset(series: Vec<Vec<f64>>) -> SeriesDataset {
        let ids: Vec<String> = (0..series.len()).map(|i| format!("n{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let g = SensorGraph::path(&refs);
        SeriesDataset::new(g, vec!["v".into()], 5, series.into_iter().map(|s| vec![s]).collect()).unwrap()
    }

    #[test]
    fn knn_store_sizes_and_refit() {
        let ds = tiny_dataset(vec![(0..13).map(f64::from).collect()]);
        let mut store = KnnStore::new(12);
        store.fit(&ds, &[0..13]).unwrap();
        assert_eq!(store.len(), 1);
        let ds = tiny_dataset(vec![(0..40).map(f64::from).collect(), vec![1.0; 40]]);
        store.fit(&ds, &[0..30]).unwrap();
        assert_eq!(store.len(), 18);
        store.fit(&ds, &[0..30]).unwrap();
        assert_eq!(store.len(), 18);
        assert!(KnnStore::new(12).fit(&ds, &[0..12]).is_err());
    }

    #[test]
    fn knn_exact_match_and_ties() {
        let ds = tiny_dataset(vec![vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 5.0]]);
        let mut store = KnnStore::new(2);
        store.fit(&ds, &[0..7]).unwrap();
        let q = KnnStore::features_at(&ds, 1, 2);
        assert_eq!(store.nearest(&q).unwrap(), 1);
        assert_eq!(store.predict(&q).unwrap(), &[1.0]);
        assert_eq!(store.nearest(&[0.0, 1.0]).unwrap(), 0);
        assert!(KnnStore::new(2).predict(&[0.0, 1.0]).is_err());
    }
}
