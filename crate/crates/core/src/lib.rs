//! Treatment–problem relation extraction from clinical text.
//!
//! A bidirectional LSTM over word, POS, chunk and position features, merged
//! with sentence-level statistics, is combined with a high-precision rule
//! engine (phrase patterns and dependency-path verbs).

pub mod corpus;
pub mod features;
pub mod network;
pub mod rules;
pub mod hybrid;
pub mod metrics;
pub mod pipeline;
pub mod synthetic;
pub mod cli;
