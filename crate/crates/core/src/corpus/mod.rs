//! Annotated clinical corpus: documents, concepts, gold relations and
//! candidate treatment–problem pairs.

mod format;
mod load;
mod sample;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use format::{parse_concept_line, parse_relation_line, RelationLine, SpanRef};
pub use load::{load_corpus, read_tag_file, CorpusPaths};
pub use sample::sample_negatives;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
    #[error("invalid token range {start}..={end}")]
    Range { start: usize, end: usize },
    #[error("unknown relation label {0:?}")]
    Label(String),
    #[error("dangling relation annotations:\n  {}", .0.join("\n  "))]
    Dangling(Vec<String>),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}:{line}: {source}")]
    AtLine {
        path: PathBuf,
        line: usize,
        #[source]
        source: Box<CorpusError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    pub(crate) fn at(self, path: impl Into<PathBuf>, line: usize) -> Self {
        CorpusError::AtLine {
            path: path.into(),
            line,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Placeholder value for POS and chunk tags before tagging.
pub const UNTAGGED: &str = "UNK";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub index: usize,
    pub pos: String,
    pub chunk: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    /// 1-based line number in the source document.
    pub line: usize,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    pub fn text(&self) -> String {
        self.words().collect::<Vec<_>>().join(" ")
    }
}

/// Splits a pre-tokenized line on whitespace. An empty result means the line
/// carries no sentence.
pub fn tokenize_line(text: &str) -> Vec<Token> {
    text.split_whitespace()
        .enumerate()
        .map(|(index, word)| Token {
            text: word.to_string(),
            index,
            pos: UNTAGGED.to_string(),
            chunk: UNTAGGED.to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConceptType {
    Treatment,
    Problem,
    Test,
}

impl ConceptType {
    pub fn as_str(self) -> &'static str {
        match self {
            ConceptType::Treatment => "treatment",
            ConceptType::Problem => "problem",
            ConceptType::Test => "test",
        }
    }
}

impl FromStr for ConceptType {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "treatment" => Ok(ConceptType::Treatment),
            "problem" => Ok(ConceptType::Problem),
            "test" => Ok(ConceptType::Test),
            other => Err(CorpusError::Invalid(format!("unknown concept type {other:?}"))),
        }
    }
}

/// A gold concept. Offsets follow the i2b2 convention: 1-based line,
/// 0-based token indices, inclusive end.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConceptSpan {
    pub text: String,
    pub line: usize,
    pub tok_start: usize,
    pub tok_end: usize,
    pub ctype: ConceptType,
}

impl ConceptSpan {
    pub fn len(&self) -> usize {
        self.tok_end - self.tok_start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn span_ref(&self) -> SpanRef {
        SpanRef {
            text: self.text.clone(),
            line: self.line,
            tok_start: self.tok_start,
            tok_end: self.tok_end,
        }
    }

    pub fn overlaps(&self, other: &ConceptSpan) -> bool {
        self.line == other.line
            && self.tok_start <= other.tok_end
            && other.tok_start <= self.tok_end
    }

    /// Concept-file line for this span.
    pub fn to_con_line(&self) -> String {
        format!("{}||t=\"{}\"", self.span_ref(), self.ctype.as_str())
    }
}

/// Relation types between a treatment and a problem. The declaration order
/// is the fixed label index order used by the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum RelationLabel {
    TrAP,
    TrCP,
    TrIP,
    TrNAP,
    TrWP,
    Null,
}

impl RelationLabel {
    pub const COUNT: usize = 6;
    pub const ALL: [RelationLabel; 6] = [
        RelationLabel::TrAP,
        RelationLabel::TrCP,
        RelationLabel::TrIP,
        RelationLabel::TrNAP,
        RelationLabel::TrWP,
        RelationLabel::Null,
    ];
    pub const POSITIVE: [RelationLabel; 5] = [
        RelationLabel::TrAP,
        RelationLabel::TrCP,
        RelationLabel::TrIP,
        RelationLabel::TrNAP,
        RelationLabel::TrWP,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_positive(self) -> bool {
        self != RelationLabel::Null
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationLabel::TrAP => "TrAP",
            RelationLabel::TrCP => "TrCP",
            RelationLabel::TrIP => "TrIP",
            RelationLabel::TrNAP => "TrNAP",
            RelationLabel::TrWP => "TrWP",
            RelationLabel::Null => "Null",
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationLabel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        RelationLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| CorpusError::Label(s.to_string()))
    }
}

/// Identifies a candidate pair independently of its label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstanceKey {
    pub doc_id: String,
    pub line: usize,
    pub treatment: (usize, usize),
    pub problem: (usize, usize),
}

/// One classification unit: a treatment and a problem in the same sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationInstance {
    pub sentence: Arc<Sentence>,
    pub treatment: ConceptSpan,
    pub problem: ConceptSpan,
    pub label: RelationLabel,
}

impl RelationInstance {
    pub fn key(&self) -> InstanceKey {
        InstanceKey {
            doc_id: self.sentence.doc_id.clone(),
            line: self.sentence.line,
            treatment: (self.treatment.tok_start, self.treatment.tok_end),
            problem: (self.problem.tok_start, self.problem.tok_end),
        }
    }

    /// Relation-file line with the treatment written first.
    pub fn to_rel_line(&self) -> String {
        RelationLine {
            first: self.treatment.span_ref(),
            label: self.label,
            second: self.problem.span_ref(),
        }
        .to_string()
    }

    /// The two spans in surface order.
    pub fn surface_order(&self) -> (&ConceptSpan, &ConceptSpan) {
        if self.treatment.tok_start <= self.problem.tok_start {
            (&self.treatment, &self.problem)
        } else {
            (&self.problem, &self.treatment)
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Arc<Sentence>>,
    pub concepts: Vec<ConceptSpan>,
    pub relations: Vec<RelationInstance>,
}

impl Document {
    pub fn sentence_at(&self, line: usize) -> Option<&Arc<Sentence>> {
        self.sentences
            .binary_search_by_key(&line, |s| s.line)
            .ok()
            .map(|i| &self.sentences[i])
    }

    /// Number of lines the document text occupies.
    pub fn line_count(&self) -> usize {
        self.sentences.last().map_or(0, |s| s.line)
    }

    pub fn txt_contents(&self) -> String {
        let mut out = String::new();
        let mut next = 1;
        for s in &self.sentences {
            while next < s.line {
                out.push('\n');
                next += 1;
            }
            out.push_str(&s.text());
            out.push('\n');
            next += 1;
        }
        out
    }

    pub fn con_contents(&self) -> String {
        self.concepts
            .iter()
            .map(|c| c.to_con_line() + "\n")
            .collect()
    }

    pub fn rel_contents(&self) -> String {
        self.relations
            .iter()
            .map(|r| r.to_rel_line() + "\n")
            .collect()
    }

    pub fn tags_contents(&self) -> String {
        let blocks: Vec<String> = self
            .sentences
            .iter()
            .map(|s| {
                s.tokens
                    .iter()
                    .map(|t| format!("{}\t{}\t{}\n", t.text, t.pos, t.chunk))
                    .collect()
            })
            .collect();
        blocks.join("\n")
    }

    /// Writes `<id>.txt`, `<id>.con`, `<id>.rel` and `<id>.tags` into `dir`.
    pub fn write_to(&self, dir: &std::path::Path) -> Result<()> {
        let write = |ext: &str, body: String| {
            let path = dir.join(format!("{}.{ext}", self.id));
            std::fs::write(&path, body).map_err(|e| CorpusError::io(path, e))
        };
        write("txt", self.txt_contents())?;
        write("con", self.con_contents())?;
        write("rel", self.rel_contents())?;
        write("tags", self.tags_contents())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub sources: Vec<PathBuf>,
}

impl Corpus {
    pub fn sentences(&self) -> impl Iterator<Item = &Arc<Sentence>> {
        self.documents.iter().flat_map(|d| d.sentences.iter())
    }

    pub fn concepts(&self) -> impl Iterator<Item = &ConceptSpan> {
        self.documents.iter().flat_map(|d| d.concepts.iter())
    }

    pub fn gold_relations(&self) -> impl Iterator<Item = &RelationInstance> {
        self.documents.iter().flat_map(|d| d.relations.iter())
    }

    pub fn n_sentences(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }

    pub fn n_concepts(&self) -> usize {
        self.documents.iter().map(|d| d.concepts.len()).sum()
    }

    pub fn n_relations(&self) -> usize {
        self.documents.iter().map(|d| d.relations.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Keeps the documents whose index satisfies `keep`.
    pub fn subset(&self, mut keep: impl FnMut(usize) -> bool) -> Corpus {
        Corpus {
            documents: self
                .documents
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, d)| d.clone())
                .collect(),
            sources: self.sources.clone(),
        }
    }

    pub fn write_to(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
        self.documents.iter().try_for_each(|d| d.write_to(dir))
    }
}

/// Every (treatment, problem) pair sharing a sentence, labelled from gold
/// where the unordered pair matches and `Null` otherwise.
pub fn generate_candidates(corpus: &Corpus) -> Vec<RelationInstance> {
    let mut out = Vec::new();
    for doc in &corpus.documents {
        let mut gold = std::collections::HashMap::new();
        for r in &doc.relations {
            gold.entry(r.key()).or_insert(r.label);
        }
        for sentence in &doc.sentences {
            let on_line = |ctype| {
                let mut v: Vec<&ConceptSpan> = doc
                    .concepts
                    .iter()
                    .filter(|c| c.line == sentence.line && c.ctype == ctype)
                    .collect();
                v.sort_by_key(|c| (c.tok_start, c.tok_end));
                v
            };
            let treatments = on_line(ConceptType::Treatment);
            let problems = on_line(ConceptType::Problem);
            for t in &treatments {
                for p in &problems {
                    if t.overlaps(p) {
                        continue;
                    }
                    let mut inst = RelationInstance {
                        sentence: Arc::clone(sentence),
                        treatment: (*t).clone(),
                        problem: (*p).clone(),
                        label: RelationLabel::Null,
                    };
                    if let Some(label) = gold.get(&inst.key()) {
                        inst.label = *label;
                    }
                    out.push(inst);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Character-scan reference: a token starts at a non-space following a
    /// space (or the start) and runs to the next space.
    fn scan_tokens(s: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = String::new();
        for ch in s.chars() {
            if ch.is_whitespace() {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    }

    #[test]
    fn tokenize_examples() {
        let toks = tokenize_line("Given her fever .");
        let texts: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["Given", "her", "fever", "."]);
        assert_eq!(toks.iter().map(|t| t.index).collect::<Vec<_>>(), [0, 1, 2, 3]);
        assert!(toks.iter().all(|t| t.pos == UNTAGGED && t.chunk == UNTAGGED));

        let one = tokenize_line("a");
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].text, "a");
        assert_eq!(one[0].index, 0);

        let spaced = tokenize_line("  x   y  ");
        let texts: Vec<_> = spaced.iter().map(|t| t.text.clone()).collect();
        assert_eq!(texts, scan_tokens("  x   y  "));
        assert_eq!(texts, ["x", "y"]);

        assert!(tokenize_line("   \t ").is_empty());
    }

    proptest::proptest! {
        #[test]
        fn tokenize_matches_char_scan(s in "[a-z .\\t]{0,40}") {
            let texts: Vec<String> = tokenize_line(&s).into_iter().map(|t| t.text).collect();
            proptest::prop_assert_eq!(texts, scan_tokens(&s));
        }
    }

    #[test]
    fn label_order_and_parse() {
        assert_eq!(RelationLabel::ALL.len(), 6);
        for (i, l) in RelationLabel::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(l.as_str().parse::<RelationLabel>().unwrap(), *l);
        }
        assert!(matches!("TrXX".parse::<RelationLabel>(), Err(CorpusError::Label(_))));
    }

    fn sentence(doc: &str, line: usize, text: &str) -> Arc<Sentence> {
        Arc::new(Sentence {
            doc_id: doc.into(),
            line,
            tokens: tokenize_line(text),
        })
    }

    fn concept(text: &str, line: usize, s: usize, e: usize, ctype: ConceptType) -> ConceptSpan {
        ConceptSpan {
            text: text.into(),
            line,
            tok_start: s,
            tok_end: e,
            ctype,
        }
    }

    #[test]
    fn candidates_two_treatments_one_problem() {
        let s = sentence("d", 1, "aspirin and heparin for pain");
        let asp = concept("aspirin", 1, 0, 0, ConceptType::Treatment);
        let hep = concept("heparin", 1, 2, 2, ConceptType::Treatment);
        let pain = concept("pain", 1, 4, 4, ConceptType::Problem);
        let doc = Document {
            id: "d".into(),
            sentences: vec![s.clone()],
            concepts: vec![asp.clone(), hep.clone(), pain.clone()],
            relations: vec![RelationInstance {
                sentence: s,
                treatment: hep,
                problem: pain,
                label: RelationLabel::TrAP,
            }],
        };
        let corpus = Corpus {
            documents: vec![doc],
            sources: vec![],
        };
        let c = generate_candidates(&corpus);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].treatment.text, "aspirin");
        assert_eq!(c[0].label, RelationLabel::Null);
        assert_eq!(c[1].treatment.text, "heparin");
        assert_eq!(c[1].label, RelationLabel::TrAP);
    }

    #[test]
    fn candidates_tests_only() {
        let s = sentence("d", 1, "CT scan and MRI");
        let doc = Document {
            id: "d".into(),
            sentences: vec![s],
            concepts: vec![
                concept("ct scan", 1, 0, 1, ConceptType::Test),
                concept("mri", 1, 3, 3, ConceptType::Test),
            ],
            relations: vec![],
        };
        let corpus = Corpus {
            documents: vec![doc],
            sources: vec![],
        };
        assert!(generate_candidates(&corpus).is_empty());
    }

    #[test]
    fn document_text_keeps_line_numbers() {
        let doc = Document {
            id: "d".into(),
            sentences: vec![sentence("d", 1, "a b"), sentence("d", 3, "c")],
            ..Default::default()
        };
        assert_eq!(doc.txt_contents(), "a b\n\nc\n");
        assert_eq!(doc.sentence_at(3).unwrap().text(), "c");
        assert!(doc.sentence_at(2).is_none());
    }
}
