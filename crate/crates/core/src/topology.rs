//! Sensor graph: ordered node ids plus a symmetric adjacency without self-loops.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Opaque sensor identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

/// Undirected sensor graph. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorGraph {
    node_ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    adjacency: Vec<Vec<bool>>,
    neighbor_lists: Vec<Vec<usize>>,
}

impl SensorGraph {
    /// Builds a graph from a boolean adjacency matrix.
    ///
    /// The matrix must be square, symmetric and have an all-false diagonal.
    pub fn new(node_ids: Vec<NodeId>, adjacency: Vec<Vec<bool>>) -> Result<Self> {
        let n = node_ids.len();
        if adjacency.len() != n {
            return Err(Error::shape("adjacency rows", n, adjacency.len()));
        }
        for (i, row) in adjacency.iter().enumerate() {
            if row.len() != n {
                return Err(Error::shape("adjacency columns", n, row.len()));
            }
            if row[i] {
                return Err(Error::InvalidParameter(format!(
                    "self-loop on node `{}`",
                    node_ids[i]
                )));
            }
            for (j, &edge) in row.iter().enumerate() {
                if edge != adjacency[j][i] {
                    return Err(Error::InvalidParameter(format!(
                        "adjacency is not symmetric between `{}` and `{}`",
                        node_ids[i], node_ids[j]
                    )));
                }
            }
        }
        let mut index = HashMap::with_capacity(n);
        for (i, id) in node_ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate node id `{id}`")));
            }
        }
        let neighbor_lists = adjacency
            .iter()
            .map(|row| row.iter().enumerate().filter(|(_, &e)| e).map(|(j, _)| j).collect())
            .collect();
        Ok(SensorGraph {
            node_ids,
            index,
            adjacency,
            neighbor_lists,
        })
    }

    /// Builds a graph from a weighted, possibly asymmetric matrix.
    ///
    /// An entry becomes an edge when `|w| > threshold`; the result is
    /// symmetrized by logical OR and diagonal entries are dropped with a warning.
    pub fn from_weights(node_ids: Vec<NodeId>, weights: &[Vec<f64>], threshold: f64) -> Result<Self> {
        let n = node_ids.len();
        if weights.len() != n {
            return Err(Error::shape("adjacency rows", n, weights.len()));
        }
        let mut adjacency = vec![vec![false; n]; n];
        let mut self_loops = 0usize;
        for (i, row) in weights.iter().enumerate() {
            if row.len() != n {
                return Err(Error::shape("adjacency columns", n, row.len()));
            }
            for (j, &w) in row.iter().enumerate() {
                if w.is_nan() {
                    return Err(Error::InvalidParameter(format!(
                        "NaN adjacency weight at ({}, {})",
                        node_ids[i], node_ids[j]
                    )));
                }
                if w.abs() > threshold {
                    if i == j {
                        self_loops += 1;
                        continue;
                    }
                    adjacency[i][j] = true;
                    adjacency[j][i] = true;
                }
            }
        }
        if self_loops > 0 {
            log::warn!("dropped {self_loops} self-loop weight(s) above the threshold");
        }
        Self::new(node_ids, adjacency)
    }

    /// Undirected path `ids[0] - ids[1] - ...`.
    pub fn path(ids: &[&str]) -> Self {
        let n = ids.len();
        let mut adjacency = vec![vec![false; n]; n];
        for i in 1..n {
            adjacency[i - 1][i] = true;
            adjacency[i][i - 1] = true;
        }
        Self::new(ids.iter().map(|&s| s.into()).collect(), adjacency).expect("path graph is valid")
    }

    /// Ring where every node is linked to the `reach` nearest nodes on each side.
    pub fn ring(node_ids: Vec<NodeId>, reach: usize) -> Self {
        let n = node_ids.len();
        let mut adjacency = vec![vec![false; n]; n];
        for i in 0..n {
            for step in 1..=reach {
                let j = (i + step) % n;
                if j != i {
                    adjacency[i][j] = true;
                    adjacency[j][i] = true;
                }
            }
        }
        Self::new(node_ids, adjacency).expect("ring graph is valid")
    }

    pub fn complete(node_ids: Vec<NodeId>) -> Self {
        let n = node_ids.len();
        let adjacency = (0..n).map(|i| (0..n).map(|j| i != j).collect()).collect();
        Self::new(node_ids, adjacency).expect("complete graph is valid")
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.node_ids
    }

    pub fn adjacency(&self) -> &[Vec<bool>] {
        &self.adjacency
    }

    pub fn index_of(&self, node: &NodeId) -> Result<usize> {
        self.index
            .get(node)
            .copied()
            .ok_or_else(|| Error::UnknownNode(node.0.clone()))
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.index.contains_key(node)
    }

    pub fn is_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a][b]
    }

    /// Direct neighbours of `node`, in node order.
    pub fn neighbors(&self, node: &NodeId) -> Result<Vec<NodeId>> {
        let i = self.index_of(node)?;
        Ok(self.neighbor_lists[i]
            .iter()
            .map(|&j| self.node_ids[j].clone())
            .collect())
    }

    /// Positional variant of [`Self::neighbors`].
    pub fn neighbor_indices(&self, index: usize) -> &[usize] {
        &self.neighbor_lists[index]
    }

    pub fn degree(&self, node: &NodeId) -> Result<usize> {
        Ok(self.neighbor_lists[self.index_of(node)?].len())
    }

    pub fn edge_count(&self) -> usize {
        self.neighbor_lists.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Reads the adjacency CSV: first row and first column hold node ids,
    /// every other cell is a number.
    pub fn read_csv(path: &Path, threshold: f64) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(file, path, threshold)
    }

    pub fn read_csv_from<R: Read>(reader: R, path: &Path, threshold: f64) -> Result<Self> {
        let parse_err = |row: usize, column: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            column,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| parse_err(0, 0, "missing header row".into()))??;
        let col_ids: Vec<NodeId> = header.iter().skip(1).map(|s| NodeId(s.trim().to_owned())).collect();
        let mut row_ids = Vec::with_capacity(col_ids.len());
        let mut weights = Vec::with_capacity(col_ids.len());
        for (r, record) in records.enumerate() {
            let record = record?;
            let row = r + 1;
            if record.len() != col_ids.len() + 1 {
                return Err(parse_err(
                    row,
                    record.len(),
                    format!("expected {} cells, found {}", col_ids.len() + 1, record.len()),
                ));
            }
            row_ids.push(NodeId(record[0].trim().to_owned()));
            let values = record
                .iter()
                .skip(1)
                .enumerate()
                .map(|(c, cell)| {
                    cell.trim()
                        .parse::<f64>()
                        .map_err(|e| parse_err(row, c + 1, format!("`{cell}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            weights.push(values);
        }
        if row_ids != col_ids {
            return Err(parse_err(
                0,
                0,
                "row node ids must match header node ids in the same order".into(),
            ));
        }
        Self::from_weights(col_ids, &weights, threshold)
    }

    /// Writes the adjacency as a 0/1 CSV in the format read by [`Self::read_csv`].
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(self.node_ids.iter().map(|id| id.0.clone()));
        wtr.write_record(&header)?;
        for (id, row) in self.node_ids.iter().zip(&self.adjacency) {
            let mut record = vec![id.0.clone()];
            record.extend(row.iter().map(|&e| if e { "1" } else { "0" }.to_owned()));
            wtr.write_record(&record)?;
        }
        wtr.flush().map_err(|e| Error::io("<adjacency>", e))?;
        Ok(())
    }
}
