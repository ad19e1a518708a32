//! Datasets, windowing, splits and the synthetic generator.

mod io;
mod synth;

use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use io::{convert_long, convert_wide, load_dataset, save_dataset, DatasetMeta, DATASET_FORMAT};
pub use synth::{synth_generate, SynthConfig, DAY_STEPS};

use crate::topology::{NodeId, SensorGraph};
use crate::{Error, Result};

/// Per-node, per-channel series of equal length on a sensor graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesDataset {
    graph: SensorGraph,
    channels: Vec<String>,
    interval_minutes: u32,
    steps: usize,
    /// node-major: `values[(node * channels + channel) * steps + t]`
    values: Vec<f64>,
}

impl SeriesDataset {
    /// `series[node][channel]` must all have the same length and be finite.
    pub fn new(
        graph: SensorGraph,
        channels: Vec<String>,
        interval_minutes: u32,
        series: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::EmptyInput("dataset channels"));
        }
        if series.len() != graph.len() {
            return Err(Error::shape("dataset nodes", graph.len(), series.len()));
        }
        let steps = series
            .first()
            .and_then(|s| s.first())
            .map(Vec::len)
            .ok_or(Error::EmptyInput("dataset series"))?;
        let mut values = Vec::with_capacity(graph.len() * channels.len() * steps);
        for (n, per_node) in series.iter().enumerate() {
            if per_node.len() != channels.len() {
                return Err(Error::shape("dataset channels", channels.len(), per_node.len()));
            }
            for s in per_node {
                if s.len() != steps {
                    return Err(Error::shape("dataset series length", steps, s.len()).context(
                        format!("node `{}`", graph.node_ids()[n]),
                    ));
                }
                if let Some(t) = s.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        context: "dataset value",
                        index: t,
                    }
                    .context(format!("node `{}`", graph.node_ids()[n])));
                }
                values.extend_from_slice(s);
            }
        }
        Ok(SeriesDataset {
            graph,
            channels,
            interval_minutes,
            steps,
            values,
        })
    }

    pub fn graph(&self) -> &SensorGraph {
        &self.graph
    }

    pub fn node_ids(&self) -> &[NodeId] {
        self.graph.node_ids()
    }

    pub fn node_count(&self) -> usize {
        self.graph.len()
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel_index(&self, name: &str) -> Result<usize> {
        self.channels
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown channel `{name}`")))
    }

    pub fn interval_minutes(&self) -> u32 {
        self.interval_minutes
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn series(&self, node: usize, channel: usize) -> &[f64] {
        let start = (node * self.channels.len() + channel) * self.steps;
        &self.values[start..start + self.steps]
    }

    pub fn value(&self, node: usize, channel: usize, t: usize) -> f64 {
        self.series(node, channel)[t]
    }
}

/// One training or test example: `window x channels` inputs (row-major) and
/// the next-step value of every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// Time index of the first input step. Doubles as the histogram window index.
    pub start: usize,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl Window {
    /// Time index of the target.
    pub fn target_time(&self, window: usize) -> usize {
        self.start + window
    }
}

/// All stride-1 windows of `node` over the whole series; `T - w` of them.
pub fn make_windows(ds: &SeriesDataset, node: usize, w: usize) -> Result<Vec<Window>> {
    make_windows_in(ds, node, w, 0..ds.steps())
}

/// Windows whose inputs and target all lie inside `range`.
pub fn make_windows_in(ds: &SeriesDataset, node: usize, w: usize, range: Range<usize>) -> Result<Vec<Window>> {
    if w == 0 {
        return Err(Error::InvalidParameter("window size must be positive".into()));
    }
    if node >= ds.node_count() {
        return Err(Error::UnknownNode(format!("#{node}")));
    }
    if range.end > ds.steps() || range.start > range.end {
        return Err(Error::InvalidParameter(format!(
            "time range {range:?} outside [0, {})",
            ds.steps()
        )));
    }
    let len = range.len();
    if len <= w {
        return Err(Error::InvalidParameter(format!(
            "series segment of length {len} is too short for window size {w}"
        )));
    }
    let c = ds.channel_count();
    let windows = (range.start..range.end - w)
        .map(|start| {
            let mut input = Vec::with_capacity(w * c);
            for t in start..start + w {
                input.extend((0..c).map(|ch| ds.value(node, ch, t)));
            }
            let target = (0..c).map(|ch| ds.value(node, ch, start + w)).collect();
            Window {
                start,
                input,
                target,
            }
        })
        .collect();
    Ok(windows)
}

/// Values of `channel` over `[start, start + w)`: the label window a node
/// histograms for window index `start`.
pub fn label_window(ds: &SeriesDataset, node: usize, channel: usize, start: usize, w: usize) -> &[f64] {
    &ds.series(node, channel)[start..start + w]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    /// Contiguous prefix for training, the rest for testing.
    Holdout { train_fraction: f64 },
    /// `k` contiguous blocks, each used as the test block once.
    Kfold { k: usize },
}

impl Default for SplitScheme {
    fn default() -> Self {
        SplitScheme::Holdout { train_fraction: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    /// Contiguous training segments, in time order.
    pub train: Vec<Range<usize>>,
    pub test: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scheme: SplitScheme,
    pub steps: usize,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Splits `[0, steps)` into contiguous train/test blocks. Never shuffles;
/// `seed` is recorded only.
pub fn make_split(steps: usize, scheme: SplitScheme, seed: u64) -> Result<SplitPlan> {
    let folds = match scheme {
        SplitScheme::Holdout { train_fraction } => {
            if !(train_fraction > 0.0 && train_fraction < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "train fraction must be in (0, 1), got {train_fraction}"
                )));
            }
            let cut = (steps as f64 * train_fraction).round() as usize;
            if cut == 0 || cut >= steps {
                return Err(Error::InvalidParameter(format!(
                    "{steps} steps are too few for a {train_fraction} holdout split"
                )));
            }
            vec![Fold {
                train: vec![0..cut],
                test: cut..steps,
            }]
        }
        SplitScheme::Kfold { k } => {
            if k < 2 {
                return Err(Error::InvalidParameter(format!("kfold needs k >= 2, got {k}")));
            }
            if steps < k {
                return Err(Error::InvalidParameter(format!(
                    "{steps} steps are too few for {k} folds"
                )));
            }
            let base = steps / k;
            let extra = steps % k;
            let mut bounds = Vec::with_capacity(k + 1);
            bounds.push(0);
            for i in 0..k {
                bounds.push(bounds[i] + base + usize::from(i < extra));
            }
            (0..k)
                .map(|i| {
                    let test = bounds[i]..bounds[i + 1];
                    let train = [0..bounds[i], bounds[i + 1]..steps]
                        .into_iter()
                        .filter(|r| !r.is_empty())
                        .collect();
                    Fold { train, test }
                })
                .collect()
        }
    };
    Ok(SplitPlan {
        scheme,
        steps,
        seed,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn toy(steps: usize, channels: usize) -> SeriesDataset {
        let graph = SensorGraph::path(&["a", "b"]);
        let series = (0..2)
            .map(|n| {
                (0..channels)
                    .map(|c| (0..steps).map(|t| (n * 1000 + c * 100 + t) as f64).collect())
                    .collect()
            })
            .collect();
        let names = (0..channels).map(|c| format!("ch{c}")).collect();
        SeriesDataset::new(graph, names, 5, series).unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&toy(13, 1), 0, 12).unwrap().len(), 1);
        assert_eq!(make_windows(&toy(100, 1), 1, 12).unwrap().len(), 88);
        assert!(make_windows(&toy(12, 1), 0, 12).is_err());
    }

    #[test]
    fn window_layout_is_time_major() {
        let ds = toy(20, 2);
        let w = make_windows(&ds, 1, 3).unwrap();
        assert_eq!(w[0].input, vec![1000.0, 1100.0, 1001.0, 1101.0, 1002.0, 1102.0]);
        assert_eq!(w[0].target, vec![1003.0, 1103.0]);
    }

    #[test]
    fn windows_respect_range() {
        let ds = toy(50, 1);
        let w = make_windows_in(&ds, 0, 5, 20..30).unwrap();
        assert_eq!(w.len(), 5);
        assert_eq!(w[0].start, 20);
        assert_eq!(w.last().unwrap().target_time(5), 29);
    }

    #[test]
    fn rejects_ragged_series() {
        let graph = SensorGraph::path(&["a", "b"]);
        let series = vec![vec![vec![1.0; 5]], vec![vec![1.0; 4]]];
        assert!(SeriesDataset::new(graph, vec!["x".into()], 5, series).is_err());
    }

    #[test]
    fn holdout_split() {
        let plan = make_split(100, SplitScheme::Holdout { train_fraction: 0.8 }, 0).unwrap();
        assert_eq!(plan.folds.len(), 1);
        assert_eq!(plan.folds[0].train, vec![0..80]);
        assert_eq!(plan.folds[0].test, 80..100);
    }

    #[test]
    fn kfold_blocks_of_twenty() {
        let plan = make_split(100, SplitScheme::Kfold { k: 5 }, 0).unwrap();
        let tests: Vec<_> = plan.folds.iter().map(|f| f.test.clone()).collect();
        assert_eq!(tests, vec![0..20, 20..40, 40..60, 60..80, 80..100]);
        assert_eq!(plan.folds[2].train, vec![0..40, 60..100]);
        assert_eq!(plan.folds[0].train, vec![20..100]);
    }

    #[test]
    fn split_errors() {
        assert!(make_split(3, SplitScheme::Kfold { k: 5 }, 0).is_err());
        assert!(make_split(100, SplitScheme::Holdout { train_fraction: 1.0 }, 0).is_err());
        assert!(make_split(1, SplitScheme::Holdout { train_fraction: 0.8 }, 0).is_err());
    }

    proptest! {
        #[test]
        fn kfold_partitions_time(steps in 10usize..2000, k in 2usize..10) {
            let plan = make_split(steps, SplitScheme::Kfold { k }, 1).unwrap();
            let mut seen = vec![0u32; steps];
            for fold in &plan.folds {
                for t in fold.test.clone() {
                    seen[t] += 1;
                }
                let train_len: usize = fold.train.iter().map(|r| r.len()).sum();
                prop_assert_eq!(train_len + fold.test.len(), steps);
                for r in &fold.train {
                    prop_assert!(r.end <= fold.test.start || r.start >= fold.test.end);
                }
            }
            prop_assert!(seen.iter().all(|&n| n == 1));
        }

        #[test]
        fn target_aligns_with_next_window(steps in 15usize..60, w in 1usize..12) {
            let ds = toy(steps, 2);
            let windows = make_windows(&ds, 0, w).unwrap();
            prop_assert_eq!(windows.len(), steps - w);
            for pair in windows.windows(2) {
                let last_step = &pair[1].input[(w - 1) * 2..];
                prop_assert_eq!(&pair[0].target[..], last_step);
            }
        }
    }
}
