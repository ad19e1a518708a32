//! Decentralized traffic forecasting on a sensor graph.
//!
//! Every node trains its own LSTM-based predictor on local readings. In the
//! `ToDense` variant a node additionally consumes label histograms published by
//! its direct neighbours; each histogram is protected with the Laplace
//! mechanism before it leaves the sender. A centralized 1-nearest-neighbour
//! baseline is provided for comparison.
//!
//! Module map:
//!
//! * [`topology`] - sensor graph and neighbour queries.
//! * [`privacy`] - histogram construction and the Laplace mechanism.
//! * [`neuralnet`] - LSTM, local linear and dense layers with hand-derived gradients, ADAM.
//! * [`exchange`] - simulated peer-to-peer mailbox and traffic accounting.
//! * [`models`] - the `Local` / `ToDense` node models and the kNN baseline.
//! * [`data`] - dataset IO, windowing, splits and a synthetic generator.
//! * [`harness`] - experiment driver, metric and report output.

pub mod data;
pub mod error;
pub mod exchange;
pub mod harness;
pub mod models;
pub mod neuralnet;
pub mod privacy;
pub mod seed;
pub mod topology;

pub use error::{Error, Result};
