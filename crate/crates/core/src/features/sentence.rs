//! Sentence-level features: between-span POS-sequence one-hot, concept PMI
//! and assertion-lexicon indices.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::corpus::{Corpus, RelationInstance, Sentence};

pub const POS_SEQ_DIM: usize = 100;
pub const ASSERTION_DIM: usize = 7;
pub const SENTENCE_FEATURE_DIM: usize = POS_SEQ_DIM + 1 + ASSERTION_DIM;

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceLevelFeatures {
    pub pos_seq_onehot: [f64; POS_SEQ_DIM],
    pub pmi: f64,
    pub assertion_idx: [f64; ASSERTION_DIM],
}

impl SentenceLevelFeatures {
    pub fn zeros() -> Self {
        SentenceLevelFeatures {
            pos_seq_onehot: [0.0; POS_SEQ_DIM],
            pmi: 0.0,
            assertion_idx: [0.0; ASSERTION_DIM],
        }
    }

    /// Flattened 108-dim block in the order one-hot, PMI, assertion.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(SENTENCE_FEATURE_DIM);
        v.extend_from_slice(&self.pos_seq_onehot);
        v.push(self.pmi);
        v.extend_from_slice(&self.assertion_idx);
        v
    }
}

/// POS tags of the tokens strictly between the two spans, in surface order.
pub fn between_pos_sequence(inst: &RelationInstance) -> Vec<String> {
    let (first, second) = inst.surface_order();
    if first.tok_end + 1 >= second.tok_start {
        return Vec::new();
    }
    inst.sentence.tokens[first.tok_end + 1..second.tok_start]
        .iter()
        .map(|t| t.pos.clone())
        .collect()
}

/// Most frequent between-span POS sequences over the positive instances.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopPosSequences {
    sequences: Vec<Vec<String>>,
}

impl TopPosSequences {
    pub fn new(mut sequences: Vec<Vec<String>>) -> Self {
        sequences.truncate(POS_SEQ_DIM);
        TopPosSequences { sequences }
    }

    pub fn sequences(&self) -> &[Vec<String>] {
        &self.sequences
    }

    pub fn position(&self, seq: &[String]) -> Option<usize> {
        self.sequences.iter().position(|s| s == seq)
    }

    /// One sequence per line, tags separated by single spaces. The empty
    /// sequence is an empty line.
    pub fn to_text(&self) -> String {
        self.sequences
            .iter()
            .map(|s| s.join(" ") + "\n")
            .collect()
    }

    pub fn from_text(text: &str) -> Self {
        TopPosSequences::new(
            text.lines()
                .map(|l| l.split_whitespace().map(str::to_string).collect())
                .collect(),
        )
    }
}

/// Counts sequences over positive instances; ties broken lexicographically.
pub fn top_pos_sequences(train: &[RelationInstance], k: usize) -> TopPosSequences {
    let mut counts: HashMap<Vec<String>, usize> = HashMap::new();
    for inst in train.iter().filter(|i| i.label.is_positive()) {
        *counts.entry(between_pos_sequence(inst)).or_default() += 1;
    }
    let mut ranked: Vec<(Vec<String>, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut seqs: Vec<Vec<String>> = ranked.into_iter().map(|(s, _)| s).collect();
    seqs.truncate(k.min(POS_SEQ_DIM));
    TopPosSequences::new(seqs)
}

pub fn encode_pos_sequence(inst: &RelationInstance, top: &TopPosSequences) -> [f64; POS_SEQ_DIM] {
    let mut v = [0.0; POS_SEQ_DIM];
    if let Some(j) = top.position(&between_pos_sequence(inst)) {
        v[j] = 1.0;
    }
    v
}

/// Sentence-level co-occurrence counts of case-folded concept texts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooccurrenceCounts {
    pub n_sentences: u64,
    pub single: BTreeMap<String, u64>,
    pub pair: BTreeMap<String, BTreeMap<String, u64>>,
}

impl CooccurrenceCounts {
    pub fn build(train: &Corpus) -> Self {
        let mut counts = CooccurrenceCounts {
            n_sentences: train.n_sentences() as u64,
            ..Default::default()
        };
        for doc in &train.documents {
            let mut by_line: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
            for c in &doc.concepts {
                by_line.entry(c.line).or_default().insert(c.text.to_lowercase());
            }
            for texts in by_line.values() {
                for a in texts {
                    *counts.single.entry(a.clone()).or_default() += 1;
                    for b in texts.range::<String, _>((std::ops::Bound::Excluded(a), std::ops::Bound::Unbounded)) {
                        *counts
                            .pair
                            .entry(a.clone())
                            .or_default()
                            .entry(b.clone())
                            .or_default() += 1;
                    }
                }
            }
        }
        counts
    }

    pub fn count(&self, text: &str) -> u64 {
        self.single.get(&text.to_lowercase()).copied().unwrap_or(0)
    }

    pub fn pair_count(&self, a: &str, b: &str) -> u64 {
        let (a, b) = (a.to_lowercase(), b.to_lowercase());
        if a == b {
            return self.count(&a);
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.pair
            .get(&lo)
            .and_then(|m| m.get(&hi))
            .copied()
            .unwrap_or(0)
    }
}

/// Add-one smoothed natural-log PMI:
/// `ln(((c(t,p) + 1) * N) / ((c(t) + 1) * (c(p) + 1)))`.
pub fn pmi_from_counts(c_tp: u64, c_t: u64, c_p: u64, n: u64) -> f64 {
    let n = n.max(1) as f64;
    (((c_tp + 1) as f64 * n) / ((c_t + 1) as f64 * (c_p + 1) as f64)).ln()
}

pub fn compute_pmi(counts: &CooccurrenceCounts, treatment: &str, problem: &str) -> f64 {
    pmi_from_counts(
        counts.pair_count(treatment, problem),
        counts.count(treatment),
        counts.count(problem),
        counts.n_sentences,
    )
}

/// File stems of the seven assertion dictionaries, in feature order.
pub const LEXICON_NAMES: [&str; ASSERTION_DIM] = [
    "allergy",
    "cause",
    "fail",
    "certainty",
    "history",
    "hypothetical",
    "uncertainty",
];

const STARTER_LEXICONS: [&str; ASSERTION_DIM] = [
    include_str!("../../data/lexicons/allergy.txt"),
    include_str!("../../data/lexicons/cause.txt"),
    include_str!("../../data/lexicons/fail.txt"),
    include_str!("../../data/lexicons/certainty.txt"),
    include_str!("../../data/lexicons/history.txt"),
    include_str!("../../data/lexicons/hypothetical.txt"),
    include_str!("../../data/lexicons/uncertainty.txt"),
];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionLexicons {
    lists: Vec<Vec<String>>,
}

fn parse_word_list(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .filter(|w| seen.insert(w.clone()))
        .collect()
}

impl AssertionLexicons {
    pub fn from_texts(texts: [&str; ASSERTION_DIM]) -> Self {
        AssertionLexicons {
            lists: texts.iter().map(|t| parse_word_list(t)).collect(),
        }
    }

    /// The bundled starter lists.
    pub fn starter() -> Self {
        Self::from_texts(STARTER_LEXICONS)
    }

    pub fn empty() -> Self {
        AssertionLexicons {
            lists: vec![Vec::new(); ASSERTION_DIM],
        }
    }

    /// Reads `<name>.txt` for each of the seven dictionaries.
    pub fn load_dir(dir: &Path) -> Result<Self, FeatureError> {
        let mut texts = Vec::with_capacity(ASSERTION_DIM);
        for name in LEXICON_NAMES {
            let path = dir.join(format!("{name}.txt"));
            let text = std::fs::read_to_string(&path)
                .map_err(|source| FeatureError::Io { path, source })?;
            texts.push(text);
        }
        Ok(AssertionLexicons {
            lists: texts.iter().map(|t| parse_word_list(t)).collect(),
        })
    }

    pub fn list(&self, i: usize) -> &[String] {
        &self.lists[i]
    }
}

/// Per dictionary: `(1 + index of the first matching token) / len`, or 0.
pub fn assertion_indices(sentence: &Sentence, lex: &AssertionLexicons) -> [f64; ASSERTION_DIM] {
    let mut out = [0.0; ASSERTION_DIM];
    let n = sentence.len();
    if n == 0 {
        return out;
    }
    let lowered: Vec<String> = sentence.tokens.iter().map(|t| t.text.to_lowercase()).collect();
    for (slot, list) in out.iter_mut().zip(&lex.lists) {
        if let Some(i) = lowered.iter().position(|w| list.contains(w)) {
            *slot = (i + 1) as f64 / n as f64;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::corpus::{tokenize_line, ConceptSpan, ConceptType, RelationLabel};

    fn instance(tags: &[&str], t: (usize, usize), p: (usize, usize), label: RelationLabel) -> RelationInstance {
        let mut tokens = tokenize_line(&vec!["w"; tags.len()].join(" "));
        for (tok, tag) in tokens.iter_mut().zip(tags) {
            tok.pos = tag.to_string();
        }
        let span = |(s, e), ctype| ConceptSpan {
            text: vec!["w"; e - s + 1].join(" "),
            line: 1,
            tok_start: s,
            tok_end: e,
            ctype,
        };
        RelationInstance {
            sentence: Arc::new(Sentence {
                doc_id: "d".into(),
                line: 1,
                tokens,
            }),
            treatment: span(t, ConceptType::Treatment),
            problem: span(p, ConceptType::Problem),
            label,
        }
    }

    #[test]
    fn single_candidate_sequence() {
        let data: Vec<_> = (0..4)
            .map(|_| instance(&["NN", "VBN", "IN", "NN"], (3, 3), (0, 0), RelationLabel::TrAP))
            .collect();
        let top = top_pos_sequences(&data, 100);
        assert_eq!(top.sequences(), &[vec!["VBN".to_string(), "IN".to_string()]]);
    }

    #[test]
    fn adjacent_spans_yield_empty_sequence() {
        let data = vec![instance(&["NN", "NN"], (0, 0), (1, 1), RelationLabel::TrIP)];
        let top = top_pos_sequences(&data, 100);
        assert_eq!(top.sequences(), &[Vec::<String>::new()]);
        let v = encode_pos_sequence(&data[0], &top);
        assert_eq!(v[0], 1.0);
        assert_eq!(v.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn frequency_order_matches_brute_force() {
        // Sequences A (5x), B (3x), C (1x); Null instances are ignored.
        let mut data = Vec::new();
        let a = ["NN", "DT", "NN"];
        let b = ["NN", "VB", "IN", "NN"];
        let c = ["NN", "JJ", "JJ", "NN"];
        for _ in 0..5 {
            data.push(instance(&a, (0, 0), (2, 2), RelationLabel::TrAP));
        }
        for _ in 0..3 {
            data.push(instance(&b, (0, 0), (3, 3), RelationLabel::TrCP));
        }
        data.push(instance(&c, (3, 3), (0, 0), RelationLabel::TrWP));
        for _ in 0..10 {
            data.push(instance(&c, (0, 0), (3, 3), RelationLabel::Null));
        }

        let mut brute: Vec<(Vec<String>, usize)> = Vec::new();
        for inst in data.iter().filter(|i| i.label.is_positive()) {
            let seq = between_pos_sequence(inst);
            match brute.iter_mut().find(|(s, _)| *s == seq) {
                Some(e) => e.1 += 1,
                None => brute.push((seq, 1)),
            }
        }
        brute.sort_by_key(|e| std::cmp::Reverse(e.1));
        assert_eq!(brute.iter().map(|e| e.1).collect::<Vec<_>>(), [5, 3, 1]);

        let top = top_pos_sequences(&data, 100);
        let expected: Vec<Vec<String>> = brute.into_iter().map(|e| e.0).collect();
        assert_eq!(top.sequences(), expected.as_slice());
        assert_eq!(top_pos_sequences(&data, 2).sequences().len(), 2);
    }

    #[test]
    fn pos_sequence_onehot_positions() {
        let seqs: Vec<Vec<String>> = (0..100).map(|i| vec![format!("T{i}")]).collect();
        let top = TopPosSequences::new(seqs);
        let first = instance(&["NN", "T0", "NN"], (0, 0), (2, 2), RelationLabel::TrAP);
        let last = instance(&["NN", "T99", "NN"], (0, 0), (2, 2), RelationLabel::TrAP);
        let unseen = instance(&["NN", "XX", "NN"], (0, 0), (2, 2), RelationLabel::TrAP);
        assert_eq!(encode_pos_sequence(&first, &top)[0], 1.0);
        assert_eq!(encode_pos_sequence(&last, &top)[99], 1.0);
        assert_eq!(encode_pos_sequence(&unseen, &top).iter().sum::<f64>(), 0.0);
        assert_eq!(encode_pos_sequence(&last, &top).iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn top_sequences_text_round_trip() {
        let top = TopPosSequences::new(vec![
            vec!["VBN".into(), "IN".into()],
            vec![],
            vec!["DT".into()],
        ]);
        assert_eq!(top.to_text(), "VBN IN\n\nDT\n");
        assert_eq!(TopPosSequences::from_text(&top.to_text()), top);
    }

    #[test]
    fn pmi_substitution() {
        // ln((1 * 100) / (1 * 1)) for never-seen terms.
        assert!((pmi_from_counts(0, 0, 0, 100) - 100f64.ln()).abs() < 1e-12);
        assert!((pmi_from_counts(0, 0, 0, 100) - 4.605170185988091).abs() < 1e-12);
        // ln((10 * 100) / (10 * 10)) = ln 10.
        assert!((pmi_from_counts(9, 9, 9, 100) - 10f64.ln()).abs() < 1e-12);
        assert!((pmi_from_counts(9, 9, 9, 100) - std::f64::consts::LN_10).abs() < 1e-12);
    }

    #[test]
    fn pmi_near_zero_for_independent_counts() {
        // c(t)=c(p)=999, c(t,p)=99, N=10000: (100 * 10000) / (1000 * 1000) = 1.
        assert!(pmi_from_counts(99, 999, 999, 10_000).abs() < 1e-12);
        // Slightly off independence stays close to zero.
        assert!(pmi_from_counts(199, 1999, 4999, 50_000).abs() < 0.01);
    }

    #[test]
    fn assertion_first_match_index() {
        let lex = AssertionLexicons::from_texts(["allergic", "", "", "", "history\nallergic", "", ""]);
        let s = Sentence {
            doc_id: "d".into(),
            line: 1,
            tokens: tokenize_line("no known Allergic reaction history"),
        };
        let v = assertion_indices(&s, &lex);
        assert!((v[0] - 0.6).abs() < 1e-12);
        assert!((v[4] - 0.6).abs() < 1e-12);
        assert_eq!(v[1], 0.0);

        let plain = Sentence {
            doc_id: "d".into(),
            line: 1,
            tokens: tokenize_line("nothing here"),
        };
        assert_eq!(assertion_indices(&plain, &lex), [0.0; 7]);
    }

    #[test]
    fn word_lists_are_lowercased_and_deduplicated() {
        assert_eq!(parse_word_list("# c\nFoo\nfoo\n\nbar\n"), ["foo", "bar"]);
        let starter = AssertionLexicons::starter();
        for (i, name) in LEXICON_NAMES.iter().enumerate() {
            assert!(!starter.list(i).is_empty(), "{name}");
        }
    }
}
