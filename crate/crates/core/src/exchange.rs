//! Simulated peer-to-peer histogram exchange.
//!
//! Nodes publish one histogram per (window, channel) to each direct
//! neighbour. Messages land in an in-process mailbox keyed by
//! `(receiver, window, channel)`; a later publish from the same sender to the
//! same key replaces the earlier one. Every delivered message is metered in a
//! [`TrafficLedger`].
//!
//! The training driver runs a publish phase for all nodes, then a collect
//! phase; the mailbox only needs to be safe for concurrent publishes.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::privacy::{Epsilon, HistogramInput, NoisyHistogram};
use crate::topology::{NodeId, SensorGraph};
use crate::{Error, Result};

/// Fixed per-message overhead in bytes (origin, window, channel).
pub const MESSAGE_HEADER_BYTES: u64 = 24;
/// Bytes per transmitted bin.
pub const BYTES_PER_BIN: u64 = 8;

pub fn message_size(bin_count: usize) -> u64 {
    bin_count as u64 * BYTES_PER_BIN + MESSAGE_HEADER_BYTES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramMessage {
    pub origin: NodeId,
    pub window_index: usize,
    pub channel: usize,
    pub payload: NoisyHistogram,
    pub byte_size: u64,
}

impl HistogramMessage {
    pub fn new(payload: NoisyHistogram) -> Self {
        HistogramMessage {
            origin: payload.origin.clone(),
            window_index: payload.window_index,
            channel: payload.channel,
            byte_size: message_size(payload.bin_count()),
            payload,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeTraffic {
    pub messages: u64,
    pub bytes: u64,
}

/// Cumulative traffic per directed (sender, receiver) pair, by node position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrafficLedger {
    edges: BTreeMap<(usize, usize), EdgeTraffic>,
}

impl TrafficLedger {
    pub fn record(&mut self, sender: usize, receiver: usize, bytes: u64) {
        let entry = self.edges.entry((sender, receiver)).or_default();
        entry.messages += 1;
        entry.bytes += bytes;
    }

    pub fn edges(&self) -> impl Iterator<Item = (&(usize, usize), &EdgeTraffic)> {
        self.edges.iter()
    }

    pub fn get(&self, sender: usize, receiver: usize) -> EdgeTraffic {
        self.edges.get(&(sender, receiver)).copied().unwrap_or_default()
    }

    pub fn total(&self) -> EdgeTraffic {
        self.edges.values().fold(EdgeTraffic::default(), |acc, e| EdgeTraffic {
            messages: acc.messages + e.messages,
            bytes: acc.bytes + e.bytes,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn merge(&mut self, other: &TrafficLedger) {
        for (&k, e) in &other.edges {
            let entry = self.edges.entry(k).or_default();
            entry.messages += e.messages;
            entry.bytes += e.bytes;
        }
    }

    /// CSV with header `sender,receiver,messages,bytes`, one row per directed edge.
    pub fn write_csv<W: Write>(&self, graph: &SensorGraph, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["sender", "receiver", "messages", "bytes"])?;
        for (&(s, r), e) in &self.edges {
            wtr.write_record([
                graph.node_ids()[s].as_str(),
                graph.node_ids()[r].as_str(),
                &e.messages.to_string(),
                &e.bytes.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<traffic>", e))?;
        Ok(())
    }
}

type MailKey = (usize, usize, usize);

/// In-process transport between graph neighbours.
#[derive(Debug)]
pub struct Mailbox {
    privacy: Option<Epsilon>,
    inbox: Mutex<BTreeMap<MailKey, BTreeMap<usize, HistogramMessage>>>,
    ledger: Mutex<TrafficLedger>,
}

impl Mailbox {
    /// With `privacy` set, only histograms noised with exactly that epsilon may be published.
    pub fn new(privacy: Option<Epsilon>) -> Self {
        Mailbox {
            privacy,
            inbox: Mutex::new(BTreeMap::new()),
            ledger: Mutex::new(TrafficLedger::default()),
        }
    }

    pub fn privacy(&self) -> Option<Epsilon> {
        self.privacy
    }

    /// Sends `histograms` (one per channel) from `node` to all of its neighbours.
    pub fn publish_window(
        &self,
        node: &NodeId,
        window_index: usize,
        histograms: &[NoisyHistogram],
        graph: &SensorGraph,
    ) -> Result<()> {
        let sender = graph.index_of(node)?;
        for h in histograms {
            if &h.origin != node || h.window_index != window_index {
                return Err(Error::InvalidParameter(format!(
                    "histogram tagged ({}, window {}) published as ({node}, window {window_index})",
                    h.origin, h.window_index
                )));
            }
            if let Some(required) = self.privacy {
                match h.epsilon {
                    None => {
                        return Err(Error::PrivacyViolation(format!(
                            "`{node}` tried to publish a raw histogram (window {window_index}, channel {}) while epsilon {required} is configured",
                            h.channel
                        )))
                    }
                    Some(e) if e != required => {
                        return Err(Error::PrivacyViolation(format!(
                            "`{node}` published epsilon {e}, expected {required}"
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        let neighbors = graph.neighbor_indices(sender);
        if neighbors.is_empty() {
            return Ok(());
        }
        let mut sent = Vec::with_capacity(neighbors.len() * histograms.len());
        {
            let mut inbox = self.inbox.lock().expect("mailbox poisoned");
            for &receiver in neighbors {
                for h in histograms {
                    let msg = HistogramMessage::new(h.clone());
                    sent.push((receiver, msg.byte_size));
                    inbox
                        .entry((receiver, window_index, h.channel))
                        .or_default()
                        .insert(sender, msg);
                }
            }
        }
        let mut ledger = self.ledger.lock().expect("ledger poisoned");
        for (receiver, bytes) in sent {
            ledger.record(sender, receiver, bytes);
        }
        Ok(())
    }

    /// Histograms addressed to `node` for (window, channel), ordered by sender.
    pub fn collect_neighbor_histograms(
        &self,
        node: &NodeId,
        window_index: usize,
        channel: usize,
        graph: &SensorGraph,
    ) -> Result<Vec<NoisyHistogram>> {
        let receiver = graph.index_of(node)?;
        Ok(self.collect_by_index(receiver, window_index, channel))
    }

    fn collect_by_index(&self, receiver: usize, window_index: usize, channel: usize) -> Vec<NoisyHistogram> {
        let inbox = self.inbox.lock().expect("mailbox poisoned");
        inbox
            .get(&(receiver, window_index, channel))
            .map(|by_sender| by_sender.values().map(|m| m.payload.clone()).collect())
            .unwrap_or_default()
    }

    /// Histogram proportions for the dense head of `node`.
    ///
    /// Falls back from this window's neighbour histograms to the previous
    /// window's, and finally to the node's own histogram.
    pub fn resolve_input_histogram(
        &self,
        node: &NodeId,
        window_index: usize,
        channel: usize,
        graph: &SensorGraph,
        own: &NoisyHistogram,
        window_size: usize,
    ) -> Result<HistogramInput> {
        let receiver = graph.index_of(node)?;
        if own.window_index != window_index || own.channel != channel || &own.origin != node {
            return Err(Error::InvalidParameter(format!(
                "own histogram is for ({}, window {}, channel {}), expected ({node}, window {window_index}, channel {channel})",
                own.origin, own.window_index, own.channel
            )));
        }
        let current = self.collect_by_index(receiver, window_index, channel);
        if !current.is_empty() {
            return HistogramInput::from_histograms(&current, window_size);
        }
        if let Some(prev) = window_index.checked_sub(1) {
            let previous = self.collect_by_index(receiver, prev, channel);
            if !previous.is_empty() {
                return HistogramInput::from_histograms(&previous, window_size);
            }
        }
        HistogramInput::from_histograms(std::slice::from_ref(own), window_size)
    }

    /// Drops all queued messages; the ledger is kept.
    pub fn clear(&self) {
        self.inbox.lock().expect("mailbox poisoned").clear();
    }

    /// Every queued message, for auditing.
    pub fn messages(&self) -> Vec<(usize, HistogramMessage)> {
        let inbox = self.inbox.lock().expect("mailbox poisoned");
        inbox
            .iter()
            .flat_map(|(&(receiver, _, _), by_sender)| by_sender.values().map(move |m| (receiver, m.clone())))
            .collect()
    }

    pub fn ledger(&self) -> TrafficLedger {
        self.ledger.lock().expect("ledger poisoned").clone()
    }
}
