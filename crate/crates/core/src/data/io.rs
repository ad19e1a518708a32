//! Canonical on-disk dataset format and converters.
//!
//! A dataset is a directory:
//!
//! * `meta.json` - format tag, interval, channel names, loader options.
//! * `adjacency.csv` - node ids in the first row and first column, numeric cells.
//! * `<channel>.csv` for every channel - header row of node ids, one row per time step.
//!
//! Missing cells (empty, `NaN`, `NA`, and zeros when `zero_is_missing` is set)
//! are forward-filled per series; a leading gap is back-filled from the first
//! observed value.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SeriesDataset;
use crate::topology::{NodeId, SensorGraph};
use crate::{Error, Result};

pub const DATASET_FORMAT: &str = "lptraffic-dataset";
const DATASET_VERSION: u32 = 1;
const META_FILE: &str = "meta.json";
const ADJACENCY_FILE: &str = "adjacency.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format: String,
    pub version: u32,
    pub interval_minutes: u32,
    pub channels: Vec<String>,
    /// Adjacency cells with `|w| > threshold` become edges.
    #[serde(default)]
    pub adjacency_threshold: f64,
    /// Treat exact zeros as missing readings.
    #[serde(default)]
    pub zero_is_missing: bool,
}

impl DatasetMeta {
    pub fn new(interval_minutes: u32, channels: Vec<String>) -> Self {
        DatasetMeta {
            format: DATASET_FORMAT.to_owned(),
            version: DATASET_VERSION,
            interval_minutes,
            channels,
            adjacency_threshold: 0.0,
            zero_is_missing: false,
        }
    }
}

fn channel_file(dir: &Path, channel: &str) -> PathBuf {
    dir.join(format!("{channel}.csv"))
}

fn parse_cell(cell: &str, zero_is_missing: bool) -> std::result::Result<Option<f64>, String> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") || cell.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    let v: f64 = cell.parse().map_err(|e| format!("`{cell}`: {e}"))?;
    if !v.is_finite() {
        return Err(format!("`{cell}` is not finite"));
    }
    if zero_is_missing && v == 0.0 {
        return Ok(None);
    }
    Ok(Some(v))
}

/// Forward fill, then back-fill a leading gap. Returns the number of filled cells.
fn impute(series: &mut [Option<f64>]) -> Option<(Vec<f64>, usize)> {
    let first = series.iter().flatten().next().copied()?;
    let mut filled = 0;
    let mut last = first;
    let out = series
        .iter()
        .map(|v| match v {
            Some(x) => {
                last = *x;
                *x
            }
            None => {
                filled += 1;
                last
            }
        })
        .collect();
    Some((out, filled))
}

fn assemble(
    graph: SensorGraph,
    channels: Vec<String>,
    interval_minutes: u32,
    raw: Vec<Vec<Vec<Option<f64>>>>,
    source: &Path,
) -> Result<SeriesDataset> {
    let mut total_filled = 0;
    let mut series = Vec::with_capacity(raw.len());
    for (n, per_node) in raw.into_iter().enumerate() {
        let mut per_channel = Vec::with_capacity(per_node.len());
        for (c, mut s) in per_node.into_iter().enumerate() {
            let (values, filled) = impute(&mut s).ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "node `{}` has no observed value in channel `{}` ({})",
                    graph.node_ids()[n],
                    channels[c],
                    source.display()
                ))
            })?;
            total_filled += filled;
            per_channel.push(values);
        }
        series.push(per_channel);
    }
    if total_filled > 0 {
        log::info!(
            "imputed {total_filled} missing readings in {} (forward fill)",
            source.display()
        );
    }
    SeriesDataset::new(graph, channels, interval_minutes, series)
}

/// Reads one wide table (header row of node ids, one row per time step) and
/// returns columns in graph order. `skip_first_column` drops a leading
/// timestamp/index column.
fn read_wide(
    path: &Path,
    graph: &SensorGraph,
    zero_is_missing: bool,
    skip_first_column: bool,
) -> Result<Vec<Vec<Option<f64>>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let offset = usize::from(skip_first_column);
    let header: Vec<NodeId> = rdr
        .headers()?
        .iter()
        .skip(offset)
        .map(|s| NodeId(s.trim().to_owned()))
        .collect();
    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };
    let mut positions = Vec::with_capacity(header.len());
    for (col, id) in header.iter().enumerate() {
        let idx = graph.index_of(id).map_err(|_| {
            parse_err(0, col + offset, format!("node `{id}` is not in the adjacency matrix"))
        })?;
        positions.push(idx);
    }
    let mut seen = vec![false; graph.len()];
    for &p in &positions {
        if std::mem::replace(&mut seen[p], true) {
            return Err(parse_err(0, 0, format!("duplicate column for node `{}`", graph.node_ids()[p])));
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(parse_err(
            0,
            0,
            format!("no column for node `{}`", graph.node_ids()[missing]),
        ));
    }
    let mut columns = vec![Vec::new(); graph.len()];
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != header.len() + offset {
            return Err(parse_err(
                row,
                record.len(),
                format!("expected {} cells, found {}", header.len() + offset, record.len()),
            ));
        }
        for (col, cell) in record.iter().skip(offset).enumerate() {
            let v = parse_cell(cell, zero_is_missing).map_err(|m| parse_err(row, col + offset, m))?;
            columns[positions[col]].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(parse_err(1, 0, "no data rows".into()));
    }
    Ok(columns)
}

fn transpose_channels(per_channel: Vec<Vec<Vec<Option<f64>>>>, nodes: usize) -> Vec<Vec<Vec<Option<f64>>>> {
    let mut raw: Vec<Vec<Vec<Option<f64>>>> = vec![Vec::with_capacity(per_channel.len()); nodes];
    for columns in per_channel {
        for (n, col) in columns.into_iter().enumerate() {
            raw[n].push(col);
        }
    }
    raw
}

/// Loads a dataset directory in the canonical format.
pub fn load_dataset(dir: &Path) -> Result<SeriesDataset> {
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&text)
        .map_err(|e| Error::from(e).context(format!("reading {}", meta_path.display())))?;
    if meta.format != DATASET_FORMAT || meta.version != DATASET_VERSION {
        return Err(Error::InvalidParameter(format!(
            "{} is not a version {DATASET_VERSION} `{DATASET_FORMAT}` file",
            meta_path.display()
        )));
    }
    let graph = SensorGraph::read_csv(&dir.join(ADJACENCY_FILE), meta.adjacency_threshold)?;
    let per_channel = meta
        .channels
        .iter()
        .map(|ch| read_wide(&channel_file(dir, ch), &graph, meta.zero_is_missing, false))
        .collect::<Result<Vec<_>>>()?;
    let lengths: Vec<usize> = per_channel.iter().map(|c| c[0].len()).collect();
    if lengths.iter().any(|&l| l != lengths[0]) {
        return Err(Error::shape("channel file lengths", lengths[0], format!("{lengths:?}")));
    }
    let raw = transpose_channels(per_channel, graph.len());
    assemble(graph, meta.channels, meta.interval_minutes, raw, dir)
}

/// Writes `ds` in the canonical format, creating `dir` if needed.
pub fn save_dataset(ds: &SeriesDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = DatasetMeta::new(ds.interval_minutes(), ds.channels().to_vec());
    let meta_path = dir.join(META_FILE);
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;

    let adj_path = dir.join(ADJACENCY_FILE);
    let file = File::create(&adj_path).map_err(|e| Error::io(&adj_path, e))?;
    ds.graph().write_csv(BufWriter::new(file))?;

    for (c, name) in ds.channels().iter().enumerate() {
        let path = channel_file(dir, name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let mut line = String::new();
        let header: Vec<&str> = ds.node_ids().iter().map(NodeId::as_str).collect();
        let write_err = |e| Error::io(&path, e);
        writeln!(w, "{}", header.join(",")).map_err(write_err)?;
        for t in 0..ds.steps() {
            line.clear();
            for n in 0..ds.node_count() {
                if n > 0 {
                    line.push(',');
                }
                line.push_str(&ds.value(n, c, t).to_string());
            }
            writeln!(w, "{line}").map_err(write_err)?;
        }
        w.flush().map_err(write_err)?;
    }
    Ok(())
}

/// Converts wide per-channel tables (first column a timestamp or index, then
/// one column per node) plus a weighted adjacency CSV.
pub fn convert_wide(
    channel_files: &[(String, PathBuf)],
    adjacency: &Path,
    threshold: f64,
    zero_is_missing: bool,
    interval_minutes: u32,
) -> Result<SeriesDataset> {
    if channel_files.is_empty() {
        return Err(Error::EmptyInput("channel files"));
    }
    let graph = SensorGraph::read_csv(adjacency, threshold)?;
    let per_channel = channel_files
        .iter()
        .map(|(_, path)| read_wide(path, &graph, zero_is_missing, true))
        .collect::<Result<Vec<_>>>()?;
    let len = per_channel[0][0].len();
    if let Some((name, _)) = channel_files
        .iter()
        .zip(&per_channel)
        .find(|(_, c)| c[0].len() != len)
        .map(|(f, _)| f)
    {
        return Err(Error::shape("channel file length", len, format!("differs for `{name}`")));
    }
    let channels = channel_files.iter().map(|(n, _)| n.clone()).collect();
    let raw = transpose_channels(per_channel, graph.len());
    assemble(graph, channels, interval_minutes, raw, &channel_files[0].1)
}

/// Converts a long table with header `time,node,<channel>...` (one row per
/// node and time stamp). Rows may come in any order; a missing
/// (time, node) pair is treated as a missing reading.
pub fn convert_long(
    input: &Path,
    adjacency: &Path,
    threshold: f64,
    zero_is_missing: bool,
    interval_minutes: u32,
) -> Result<SeriesDataset> {
    let graph = SensorGraph::read_csv(adjacency, threshold)?;
    let file = File::open(input).map_err(|e| Error::io(input, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = rdr.headers()?.clone();
    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        path: input.to_path_buf(),
        row,
        column,
        message,
    };
    if header.len() < 3 || header[0].trim() != "time" || header[1].trim() != "node" {
        return Err(parse_err(0, 0, "expected header `time,node,<channel>...`".into()));
    }
    let channels: Vec<String> = header.iter().skip(2).map(|s| s.trim().to_owned()).collect();
    let mut times: BTreeMap<i64, usize> = BTreeMap::new();
    let mut cells: HashMap<(i64, usize), Vec<Option<f64>>> = HashMap::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != header.len() {
            return Err(parse_err(row, record.len(), format!("expected {} cells", header.len())));
        }
        let time: i64 = record[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(row, 0, format!("time `{}`: {e}", &record[0])))?;
        let node = graph
            .index_of(&NodeId(record[1].trim().to_owned()))
            .map_err(|e| parse_err(row, 1, e.to_string()))?;
        let values = record
            .iter()
            .skip(2)
            .enumerate()
            .map(|(c, cell)| parse_cell(cell, zero_is_missing).map_err(|m| parse_err(row, c + 2, m)))
            .collect::<Result<Vec<_>>>()?;
        times.insert(time, 0);
        if cells.insert((time, node), values).is_some() {
            return Err(parse_err(row, 0, format!("duplicate row for time {time}")));
        }
    }
    if times.is_empty() {
        return Err(parse_err(1, 0, "no data rows".into()));
    }
    for (i, slot) in times.values_mut().enumerate() {
        *slot = i;
    }
    let steps = times.len();
    let mut raw = vec![vec![vec![None; steps]; channels.len()]; graph.len()];
    for ((time, node), values) in cells {
        let t = times[&time];
        for (c, v) in values.into_iter().enumerate() {
            raw[node][c][t] = v;
        }
    }
    assemble(graph, channels, interval_minutes, raw, input)
}
