//! High-precision rule engine. A candidate pair is labelled by the longest
//! phrase template that matches it, otherwise by the first lexicon verb on
//! the dependency path between the entities (or the surface words between
//! them when no parse is available).

mod lexicon;
mod path;
mod pattern;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::{ConceptType, Corpus, RelationInstance, RelationLabel};

pub use lexicon::{verb_classify, VerbLexicon, VERB_PRIORITY};
pub use path::{dep_shortest_path, parse_dep_file, surface_path, ParseGraph};
pub use pattern::{match_pattern, parse_pattern, parse_pattern_file, PatternElement, PhrasePattern};

pub const STARTER_PATTERNS: &str = include_str!("../../data/patterns.tsv");
pub const STARTER_VERBS: &str = include_str!("../../data/verbs.tsv");

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("pattern error: {0}")]
    Pattern(String),
    #[error("lexicon error: {0}")]
    Lexicon(String),
    #[error("dependency parse error: {0}")]
    Parse(String),
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<RuleError>,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<RuleError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// `s = before m1 middle m2 after`, with `m1` the surface-first entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleContext {
    pub before: Vec<String>,
    pub middle: Vec<String>,
    pub after: Vec<String>,
    pub first_role: ConceptType,
    pub second_role: ConceptType,
}

impl RuleContext {
    pub fn new(inst: &RelationInstance) -> Self {
        let (first, second) = inst.surface_order();
        let words = |r: std::ops::Range<usize>| -> Vec<String> {
            inst.sentence.tokens[r].iter().map(|t| t.text.clone()).collect()
        };
        let n = inst.sentence.len();
        let mid_start = (first.tok_end + 1).min(second.tok_start);
        RuleContext {
            before: words(0..first.tok_start),
            middle: words(mid_start..second.tok_start),
            after: words((second.tok_end + 1).min(n)..n),
            first_role: first.ctype,
            second_role: second.ctype,
        }
    }
}

/// Compiled patterns (longest first, ties in file order) and verb lexicon.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    patterns: Vec<PhrasePattern>,
    pub lexicon: VerbLexicon,
}

impl RuleSet {
    pub fn new(mut patterns: Vec<PhrasePattern>, lexicon: VerbLexicon) -> Self {
        patterns.sort_by_key(|p| std::cmp::Reverse(p.len()));
        RuleSet { patterns, lexicon }
    }

    pub fn from_texts(patterns: &str, verbs: &str) -> Result<Self, RuleError> {
        Ok(Self::new(parse_pattern_file(patterns)?, VerbLexicon::parse(verbs)?))
    }

    /// The bundled patterns and verbs.
    pub fn starter() -> Self {
        Self::from_texts(STARTER_PATTERNS, STARTER_VERBS).expect("starter rule files parse")
    }

    pub fn load(patterns: &Path, verbs: &Path) -> Result<Self, RuleError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| RuleError::Io {
                path: p.to_path_buf(),
                source,
            })
        };
        let in_file = |p: &Path| {
            let p = p.to_path_buf();
            move |e| RuleError::InFile {
                path: p,
                source: Box::new(e),
            }
        };
        let pats = parse_pattern_file(&read(patterns)?).map_err(in_file(patterns))?;
        let lex = VerbLexicon::parse(&read(verbs)?).map_err(in_file(verbs))?;
        Ok(Self::new(pats, lex))
    }

    pub fn patterns(&self) -> &[PhrasePattern] {
        &self.patterns
    }
}

/// Pattern match first, then verb lookup on the dependency (or surface)
/// path, otherwise no opinion.
pub fn rule_predict(
    inst: &RelationInstance,
    rules: &RuleSet,
    parse: Option<&ParseGraph>,
) -> Result<Option<RelationLabel>, RuleError> {
    if let Some(p) = rules.patterns.iter().find(|p| p.matches(inst)) {
        return Ok(Some(p.label));
    }
    let path = dep_shortest_path(parse, inst)?;
    Ok(verb_classify(&path, &rules.lexicon))
}

/// Dependency parses keyed by `(doc_id, line)`.
#[derive(Debug, Clone, Default)]
pub struct ParseIndex {
    graphs: HashMap<(String, usize), ParseGraph>,
}

impl ParseIndex {
    pub fn get(&self, doc_id: &str, line: usize) -> Option<&ParseGraph> {
        self.graphs.get(&(doc_id.to_string(), line))
    }

    pub fn insert(&mut self, doc_id: &str, line: usize, graph: ParseGraph) {
        self.graphs.insert((doc_id.to_string(), line), graph);
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Reads `<id>.dep` for every document that has one. Parse blocks align
    /// with the document's non-empty lines in order.
    pub fn load(dir: &Path, corpus: &Corpus) -> Result<Self, RuleError> {
        let mut index = ParseIndex::default();
        for doc in &corpus.documents {
            let path = dir.join(format!("{}.dep", doc.id));
            let text = match std::fs::read_to_string(&path) {
                Ok(t) => t,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
                Err(source) => return Err(RuleError::Io { path, source }),
            };
            let in_file = |e| RuleError::InFile {
                path: path.clone(),
                source: Box::new(e),
            };
            let graphs = parse_dep_file(&text).map_err(in_file)?;
            if graphs.len() != doc.sentences.len() {
                return Err(in_file(RuleError::Parse(format!(
                    "{} parses for {} sentences",
                    graphs.len(),
                    doc.sentences.len()
                ))));
            }
            for (s, g) in doc.sentences.iter().zip(graphs) {
                if g.len() != s.len() {
                    return Err(in_file(RuleError::Parse(format!(
                        "line {}: parse has {} tokens, sentence has {}",
                        s.line,
                        g.len(),
                        s.len()
                    ))));
                }
                index.insert(&doc.id, s.line, g);
            }
        }
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::corpus::{tokenize_line, ConceptSpan, Sentence};

    fn inst(text: &str, t: (usize, usize), p: (usize, usize)) -> RelationInstance {
        let tokens = tokenize_line(text);
        let span = |(s, e): (usize, usize), ctype| ConceptSpan {
            text: tokens[s..=e].iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" "),
            line: 1,
            tok_start: s,
            tok_end: e,
            ctype,
        };
        let treatment = span(t, ConceptType::Treatment);
        let problem = span(p, ConceptType::Problem);
        RelationInstance {
            sentence: Arc::new(Sentence {
                doc_id: "d".into(),
                line: 1,
                tokens,
            }),
            treatment,
            problem,
            label: RelationLabel::Null,
        }
    }

    const CEPTAZ: &str = "Given her fever the patient was treated with Ceptaz and Levaquin";

    #[test]
    fn parse_pattern_examples() {
        let p = parse_pattern("<problem> is diagnosed with <treatment>", RelationLabel::TrAP).unwrap();
        let slots = p.template.iter().filter(|e| matches!(e, PatternElement::Slot(_))).count();
        assert_eq!((slots, p.len() - slots), (2, 3));

        let cp = parse_pattern("<problem> resistant to <treatment>", RelationLabel::TrCP).unwrap();
        let wp = parse_pattern("<problem> intermittently resistant to <treatment>", RelationLabel::TrWP).unwrap();
        assert_ne!(cp, wp);
        assert!(wp.len() > cp.len());

        assert!(matches!(parse_pattern("<treatment> foo", RelationLabel::TrAP), Err(RuleError::Pattern(_))));
        assert!(parse_pattern("<treatment> <problem> <problem> x", RelationLabel::TrAP).is_err());
        assert!(parse_pattern("<treatment> <problem>", RelationLabel::TrAP).is_err());
    }

    #[test]
    fn match_pattern_examples() {
        let p = parse_pattern("<problem> is diagnosed with <treatment>", RelationLabel::TrAP).unwrap();
        let good = inst("his rash is diagnosed with steroids", (5, 5), (1, 1));
        assert!(match_pattern(&p, &good));
        let swapped = inst("his rash is diagnosed with steroids", (1, 1), (5, 5));
        assert!(!match_pattern(&p, &swapped));
        let shuffled = inst("his rash with diagnosed is steroids", (5, 5), (1, 1));
        assert!(!match_pattern(&p, &shuffled));
        let upper = inst("His RASH Is Diagnosed With steroids", (5, 5), (1, 1));
        assert!(match_pattern(&p, &upper));
    }

    #[test]
    fn outer_literals_must_be_adjacent() {
        let p = parse_pattern("held <treatment> for <problem> today", RelationLabel::TrNAP).unwrap();
        assert!(p.matches(&inst("we held coumadin for bleed today", (2, 2), (4, 4))));
        assert!(!p.matches(&inst("held we coumadin for bleed today", (2, 2), (4, 4))));
        assert!(!p.matches(&inst("we held coumadin for bleed", (2, 2), (4, 4))));
    }

    #[test]
    fn surface_and_context() {
        let i = inst(CEPTAZ, (8, 8), (2, 2));
        assert_eq!(surface_path(&i), ["the", "patient", "was", "treated", "with"]);
        let ctx = RuleContext::new(&i);
        assert_eq!(ctx.before, ["Given", "her"]);
        assert_eq!(ctx.after, ["and", "Levaquin"]);
        assert_eq!(ctx.first_role, ConceptType::Problem);
        assert!(surface_path(&inst("aspirin pain", (0, 0), (1, 1))).is_empty());
        let reversed = inst("pain after aspirin", (2, 2), (0, 0));
        assert_eq!(surface_path(&reversed), ["after"]);
    }

    #[test]
    fn dependency_paths() {
        let chain = ParseGraph::new(vec![1, 2, 3, -1], vec!["dep".into(); 4]).unwrap();
        assert_eq!(chain.path_between(0, 3), [1, 2]);
        let i = inst("a b c d", (0, 0), (3, 3));
        assert_eq!(dep_shortest_path(Some(&chain), &i).unwrap(), ["b", "c"]);
        let direct = inst("a b c d", (2, 2), (3, 3));
        assert!(dep_shortest_path(Some(&chain), &direct).unwrap().is_empty());
        assert_eq!(dep_shortest_path(None, &i).unwrap(), surface_path(&i));
    }

    #[test]
    fn malformed_parses() {
        assert!(ParseGraph::new(vec![-1, -1], vec!["x".into(); 2]).is_err());
        assert!(ParseGraph::new(vec![1, 2, 1, -1], vec!["x".into(); 4]).is_err());
        assert!(ParseGraph::new(vec![5, -1], vec!["x".into(); 2]).is_err());
        assert!(ParseGraph::new(vec![0, -1], vec!["x".into(); 2]).is_err());
        let f = parse_dep_file("0\t1\tnsubj\n1\t-1\troot\n\n0\t-1\troot\n").unwrap();
        assert_eq!(f.len(), 2);
        assert!(parse_dep_file("0\t1\tx\n1\t0\tx\n").is_err());
    }

    #[test]
    fn ceptaz_example_via_parse() {
        // Given(0) her(1) fever(2) the(3) patient(4) was(5) treated(6)
        // with(7) Ceptaz(8) and(9) Levaquin(10)
        let heads = vec![6, 2, 0, 4, 6, 6, -1, 8, 6, 10, 8];
        let parse = ParseGraph::new(heads, vec!["dep".into(); 11]).unwrap();
        let rules = RuleSet::starter();
        for t in [8, 10] {
            let i = inst(CEPTAZ, (t, t), (2, 2));
            let path = dep_shortest_path(Some(&parse), &i).unwrap();
            assert!(path.contains(&"treated".to_string()), "{path:?}");
            assert_eq!(rule_predict(&i, &rules, Some(&parse)).unwrap(), Some(RelationLabel::TrAP));
            assert_eq!(rule_predict(&i, &rules, None).unwrap(), Some(RelationLabel::TrAP));
        }
    }

    #[test]
    fn longest_pattern_wins() {
        let rules = RuleSet::from_texts(
            "TrCP\t<problem> resistant to <treatment>\nTrWP\t<problem> intermittently resistant to <treatment>\n",
            "",
        )
        .unwrap();
        let i = inst("infection intermittently resistant to vancomycin", (4, 4), (0, 0));
        assert_eq!(rule_predict(&i, &rules, None).unwrap(), Some(RelationLabel::TrWP));
        let j = inst("infection resistant to vancomycin", (3, 3), (0, 0));
        assert_eq!(rule_predict(&j, &rules, None).unwrap(), Some(RelationLabel::TrCP));
        let k = inst("infection seen with vancomycin", (3, 3), (0, 0));
        assert_eq!(rule_predict(&k, &rules, None).unwrap(), None);
    }

    #[test]
    fn pattern_file_errors_name_the_line() {
        match parse_pattern_file("# header\nTrAP\t<treatment> only\n") {
            Err(RuleError::AtLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_pattern_file("TrAP <treatment> for <problem>\n").is_err());
    }

    proptest! {
        #[test]
        fn context_reconstructs_sentence(pre in 0usize..4, la in 1usize..3, gap in 0usize..4, lb in 1usize..3, post in 0usize..4, swap: bool) {
            let a = pre;
            let a_end = a + la - 1;
            let b = a_end + 1 + gap;
            let b_end = b + lb - 1;
            let n = b_end + 1 + post;
            let ((a, a_end), (b, b_end)) = if swap { ((b, b_end), (a, a_end)) } else { ((a, a_end), (b, b_end)) };
            let text: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
            let i = inst(&text.join(" "), (a, a_end), (b, b_end));
            let ctx = RuleContext::new(&i);
            let (f, s) = i.surface_order();
            let words = |r: std::ops::Range<usize>| text[r].to_vec();
            let rebuilt = [
                ctx.before.clone(),
                words(f.tok_start..f.tok_end + 1),
                ctx.middle.clone(),
                words(s.tok_start..s.tok_end + 1),
                ctx.after.clone(),
            ]
            .concat();
            prop_assert_eq!(rebuilt, text);
        }

        #[test]
        fn chain_path_has_interior_tokens(n in 2usize..20) {
            let heads: Vec<i64> = (0..n).map(|i| if i + 1 == n { -1 } else { i as i64 + 1 }).collect();
            let g = ParseGraph::new(heads, vec!["d".into(); n]).unwrap();
            prop_assert_eq!(g.path_between(0, n - 1), (1..n - 1).collect::<Vec<_>>());
        }
    }
}
