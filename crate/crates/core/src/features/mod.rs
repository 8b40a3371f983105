//! Word-level feature ids, position offsets and the sentence-level block
//! fed to the classifier.

mod sentence;
mod vocab;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ConceptSpan, Corpus, RelationInstance, RelationLabel};

pub use sentence::{
    assertion_indices, between_pos_sequence, compute_pmi, encode_pos_sequence, pmi_from_counts,
    top_pos_sequences, AssertionLexicons, CooccurrenceCounts, SentenceLevelFeatures,
    TopPosSequences, ASSERTION_DIM, LEXICON_NAMES, POS_SEQ_DIM, SENTENCE_FEATURE_DIM,
};
pub use vocab::{build_vocab, FeatureVocab, Vocab};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("span {start}..={end} out of bounds for sentence of length {len}")]
    Range { start: usize, end: usize, len: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("feature file: {0}")]
    Format(String),
}

/// Signed token distance of every token to a reference span: negative to
/// the left, zero inside, positive to the right.
pub fn position_vector(sentence_len: usize, span: &ConceptSpan) -> Result<Vec<i64>, FeatureError> {
    let (start, end) = (span.tok_start, span.tok_end);
    if start > end || end >= sentence_len {
        return Err(FeatureError::Range {
            start,
            end,
            len: sentence_len,
        });
    }
    Ok((0..sentence_len)
        .map(|i| {
            if i < start {
                i as i64 - start as i64
            } else if i > end {
                (i - end) as i64
            } else {
                0
            }
        })
        .collect())
}

/// Per-token id rows plus the sentence-level block for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInstance {
    pub words: Vec<usize>,
    pub pos: Vec<usize>,
    pub chunks: Vec<usize>,
    pub to_treatment: Vec<i64>,
    pub to_problem: Vec<i64>,
    pub sentence: SentenceLevelFeatures,
    pub label: RelationLabel,
}

impl EncodedInstance {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Everything built from the training split that encoding needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub vocab: FeatureVocab,
    pub top_pos: TopPosSequences,
    pub counts: CooccurrenceCounts,
    pub lexicons: AssertionLexicons,
}

impl FeatureSet {
    pub fn build(train: &Corpus, train_instances: &[RelationInstance], lexicons: AssertionLexicons) -> Self {
        FeatureSet {
            vocab: build_vocab(train),
            top_pos: top_pos_sequences(train_instances, POS_SEQ_DIM),
            counts: CooccurrenceCounts::build(train),
            lexicons,
        }
    }

    pub fn encode(&self, inst: &RelationInstance) -> Result<EncodedInstance, FeatureError> {
        encode_instance(inst, &self.vocab, &self.top_pos, &self.counts, &self.lexicons)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("feature set serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, FeatureError> {
        serde_json::from_str(s).map_err(|e| FeatureError::Format(e.to_string()))
    }
}

pub fn encode_instance(
    inst: &RelationInstance,
    vocab: &FeatureVocab,
    top_pos: &TopPosSequences,
    counts: &CooccurrenceCounts,
    lexicons: &AssertionLexicons,
) -> Result<EncodedInstance, FeatureError> {
    let s = &inst.sentence;
    let n = s.len();
    Ok(EncodedInstance {
        words: s.tokens.iter().map(|t| vocab.words.id(&t.text)).collect(),
        pos: s.tokens.iter().map(|t| vocab.pos.id(&t.pos)).collect(),
        chunks: s.tokens.iter().map(|t| vocab.chunks.id(&t.chunk)).collect(),
        to_treatment: position_vector(n, &inst.treatment)?,
        to_problem: position_vector(n, &inst.problem)?,
        sentence: SentenceLevelFeatures {
            pos_seq_onehot: encode_pos_sequence(inst, top_pos),
            pmi: compute_pmi(counts, &inst.treatment.text, &inst.problem.text),
            assertion_idx: assertion_indices(s, lexicons),
        },
        label: inst.label,
    })
}
