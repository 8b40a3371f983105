//! Bidirectional LSTM relation classifier written without an autodiff
//! framework: lookup tables, forward/backward recurrences, merge with the
//! sentence-level block, softmax output and hand-derived gradients.

mod io;
mod lstm;
mod model;
mod tensor;
mod train;

use std::path::PathBuf;

use thiserror::Error;

pub use io::{from_bytes, load_model, save_model, to_bytes, FORMAT_VERSION, MAGIC};
pub use lstm::{lstm_cell, GateParams, LstmParams};
pub use model::{
    argmax_label, backward, bilstm_forward, embed, forward, loss, predict, softmax, BiLstmModel,
    EmbeddingTables, ParamGroup, Params, TableSizes, TensorView, TrainConfig, N_LABELS,
};
pub use tensor::Mat;
pub use train::{accuracy, class_weights, continue_training, train, Adam, TrainOutcome};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty input sequence")]
    EmptySequence,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, instance {instance}")]
    NonFinite { epoch: usize, instance: usize },
    #[error("model format: {0}")]
    Format(String),
    #[error("model format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Loads a `word v1 .. v_dw` text file into the word table for words the
/// vocabulary knows. Returns how many rows were replaced.
pub fn load_word_vectors(
    model: &mut BiLstmModel,
    vocab: &crate::features::Vocab,
    text: &str,
) -> Result<usize, NetworkError> {
    let d_w = model.config.d_w;
    let mut replaced = 0;
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values: Vec<f64> = parts
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| NetworkError::Format(format!("embedding line {}: {e}", i + 1)))?;
        if values.len() != d_w {
            return Err(NetworkError::Dimension(format!(
                "embedding line {} has {} values, word table width is {d_w}",
                i + 1,
                values.len()
            )));
        }
        let id = vocab.id(word);
        if id == 0 {
            continue;
        }
        model.params.tables.word.row_mut(id).copy_from_slice(&values);
        replaced += 1;
    }
    Ok(replaced)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Vocab;

    #[test]
    fn word_vectors_fill_known_rows() {
        let cfg = TrainConfig {
            d_w: 2,
            ..Default::default()
        };
        let vocab = Vocab::from(vec!["fever".to_string(), "rash".to_string()]);
        let sizes = TableSizes {
            words: 2,
            pos: 1,
            chunks: 1,
        };
        let mut m = BiLstmModel::zeros(cfg, sizes);
        let n = load_word_vectors(&mut m, &vocab, "rash 0.5 -1\nunknown 1 1\n").unwrap();
        assert_eq!(n, 1);
        assert_eq!(m.params.tables.word.row(2), [0.5, -1.0]);
        assert_eq!(m.params.tables.word.row(1), [0.0, 0.0]);
        assert!(load_word_vectors(&mut m, &vocab, "rash 1\n").is_err());
    }
}
