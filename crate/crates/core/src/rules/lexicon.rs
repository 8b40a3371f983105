use std::collections::{BTreeMap, BTreeSet};

use super::RuleError;
use crate::corpus::RelationLabel;

/// When a word is listed under several labels, the rarer class wins.
pub const VERB_PRIORITY: [RelationLabel; 5] = [
    RelationLabel::TrIP,
    RelationLabel::TrWP,
    RelationLabel::TrNAP,
    RelationLabel::TrCP,
    RelationLabel::TrAP,
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerbLexicon {
    verbs: BTreeMap<RelationLabel, BTreeSet<String>>,
}

impl VerbLexicon {
    pub fn insert(&mut self, label: RelationLabel, verb: &str) -> Result<(), RuleError> {
        if !label.is_positive() {
            return Err(RuleError::Lexicon(format!("verb {verb:?} listed under {label}")));
        }
        let verb = verb.trim().to_lowercase();
        if verb.is_empty() {
            return Err(RuleError::Lexicon("empty verb".into()));
        }
        self.verbs.entry(label).or_default().insert(verb);
        Ok(())
    }

    /// Reads `LABEL<TAB>verb` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, RuleError> {
        let mut lex = VerbLexicon::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = |e: RuleError| RuleError::AtLine {
                line: i + 1,
                source: Box::new(e),
            };
            let (label, verb) = line
                .split_once('\t')
                .ok_or_else(|| at(RuleError::Lexicon("expected LABEL<TAB>verb".into())))?;
            let label: RelationLabel = label
                .trim()
                .parse()
                .map_err(|_| at(RuleError::Lexicon(format!("unknown label {label:?}"))))?;
            lex.insert(label, verb).map_err(at)?;
        }
        Ok(lex)
    }

    pub fn verbs(&self, label: RelationLabel) -> impl Iterator<Item = &str> {
        self.verbs.get(&label).into_iter().flatten().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.verbs.is_empty()
    }

    /// Highest-priority label listing `word` (already lowercased).
    fn label_of(&self, word: &str) -> Option<RelationLabel> {
        VERB_PRIORITY
            .into_iter()
            .find(|l| self.verbs.get(l).is_some_and(|s| s.contains(word)))
    }
}

/// Label of the first path word found in the lexicon, scanning left to
/// right.
pub fn verb_classify<S: AsRef<str>>(path: &[S], lex: &VerbLexicon) -> Option<RelationLabel> {
    path.iter()
        .find_map(|w| lex.label_of(&w.as_ref().to_lowercase()))
}
