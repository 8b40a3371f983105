use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;

/// Dense string→id map. Ids start at 1 in first-occurrence order; 0 is the
/// out-of-vocabulary id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    items: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    pub fn insert(&mut self, s: &str) -> usize {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        self.items.push(s.to_string());
        let id = self.items.len();
        self.ids.insert(s.to_string(), id);
        id
    }

    pub fn id(&self, s: &str) -> usize {
        self.ids.get(s).copied().unwrap_or(0)
    }

    /// Number of known strings; the lookup table needs `len() + 1` rows.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }
}

impl From<Vec<String>> for Vocab {
    fn from(items: Vec<String>) -> Self {
        let mut v = Vocab::default();
        for s in &items {
            v.insert(s);
        }
        v
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.items
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVocab {
    pub words: Vocab,
    pub pos: Vocab,
    pub chunks: Vocab,
}

pub fn build_vocab(train: &Corpus) -> FeatureVocab {
    let mut v = FeatureVocab::default();
    for tok in train.sentences().flat_map(|s| s.tokens.iter()) {
        v.words.insert(&tok.text);
        v.pos.insert(&tok.pos);
        v.chunks.insert(&tok.chunk);
    }
    v
}
