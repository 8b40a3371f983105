use std::fmt;

use super::{RuleContext, RuleError};
use crate::corpus::{ConceptType, RelationInstance, RelationLabel};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternElement {
    /// Lowercased literal word.
    Literal(String),
    Slot(ConceptType),
}

/// Phrase template such as `<problem> is diagnosed with <treatment>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhrasePattern {
    pub label: RelationLabel,
    pub template: Vec<PatternElement>,
}

const TREATMENT_SLOT: &str = "<treatment>";
const PROBLEM_SLOT: &str = "<problem>";

pub fn parse_pattern(text: &str, label: RelationLabel) -> Result<PhrasePattern, RuleError> {
    if !label.is_positive() {
        return Err(RuleError::Pattern(format!("pattern label must be positive, got {label}")));
    }
    let template: Vec<PatternElement> = text
        .split_whitespace()
        .map(|w| match w.to_lowercase().as_str() {
            TREATMENT_SLOT => PatternElement::Slot(ConceptType::Treatment),
            PROBLEM_SLOT => PatternElement::Slot(ConceptType::Problem),
            lower => PatternElement::Literal(lower.to_string()),
        })
        .collect();
    let count = |t| {
        template
            .iter()
            .filter(|e| **e == PatternElement::Slot(t))
            .count()
    };
    for (t, name) in [(ConceptType::Treatment, TREATMENT_SLOT), (ConceptType::Problem, PROBLEM_SLOT)] {
        match count(t) {
            1 => {}
            0 => return Err(RuleError::Pattern(format!("{text:?}: missing {name} slot"))),
            _ => return Err(RuleError::Pattern(format!("{text:?}: duplicate {name} slot"))),
        }
    }
    if template.len() < 3 {
        return Err(RuleError::Pattern(format!("{text:?}: needs at least one literal")));
    }
    Ok(PhrasePattern { label, template })
}

fn words_eq(literals: &[&str], tokens: &[String]) -> bool {
    literals.len() == tokens.len() && literals.iter().zip(tokens).all(|(l, t)| *l == t)
}

fn contains_run(haystack: &[String], run: &[&str]) -> bool {
    run.is_empty() || haystack.windows(run.len()).any(|w| words_eq(run, w))
}

impl PhrasePattern {
    /// Number of template elements; longer templates take precedence.
    pub fn len(&self) -> usize {
        self.template.len()
    }

    pub fn is_empty(&self) -> bool {
        self.template.is_empty()
    }

    fn slot_positions(&self) -> (usize, usize) {
        let mut slots = self
            .template
            .iter()
            .enumerate()
            .filter(|(_, e)| matches!(e, PatternElement::Slot(_)))
            .map(|(i, _)| i);
        (slots.next().expect("two slots"), slots.next().expect("two slots"))
    }

    fn literals(&self, range: std::ops::Range<usize>) -> Vec<&str> {
        self.template[range]
            .iter()
            .map(|e| match e {
                PatternElement::Literal(w) => w.as_str(),
                PatternElement::Slot(_) => unreachable!("slots are excluded"),
            })
            .collect()
    }

    /// Slot order must equal the surface order of the roles. Literals before
    /// the first slot must directly precede the first entity, literals after
    /// the second slot must directly follow the second entity, and the
    /// literals between the slots must occur as a contiguous run inside the
    /// middle context. Matching is case-insensitive.
    pub fn matches(&self, inst: &RelationInstance) -> bool {
        let ctx = RuleContext::new(inst);
        let (a, b) = self.slot_positions();
        let first_role = match self.template[a] {
            PatternElement::Slot(t) => t,
            PatternElement::Literal(_) => unreachable!(),
        };
        if first_role != ctx.first_role {
            return false;
        }
        let lower = |toks: &[String]| toks.iter().map(|t| t.to_lowercase()).collect::<Vec<_>>();
        let before = lower(&ctx.before);
        let middle = lower(&ctx.middle);
        let after = lower(&ctx.after);

        let pre = self.literals(0..a);
        let mid = self.literals(a + 1..b);
        let post = self.literals(b + 1..self.template.len());
        before.len() >= pre.len()
            && words_eq(&pre, &before[before.len() - pre.len()..])
            && after.len() >= post.len()
            && words_eq(&post, &after[..post.len()])
            && contains_run(&middle, &mid)
    }
}

impl fmt::Display for PhrasePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let words: Vec<&str> = self
            .template
            .iter()
            .map(|e| match e {
                PatternElement::Literal(w) => w.as_str(),
                PatternElement::Slot(ConceptType::Treatment) => TREATMENT_SLOT,
                PatternElement::Slot(_) => PROBLEM_SLOT,
            })
            .collect();
        write!(f, "{}\t{}", self.label, words.join(" "))
    }
}

pub fn match_pattern(pattern: &PhrasePattern, inst: &RelationInstance) -> bool {
    pattern.matches(inst)
}

/// Reads `LABEL<TAB>template` lines; `#` starts a comment line.
pub fn parse_pattern_file(text: &str) -> Result<Vec<PhrasePattern>, RuleError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = |e: RuleError| RuleError::AtLine {
            line: i + 1,
            source: Box::new(e),
        };
        let (label, template) = line
            .split_once('\t')
            .ok_or_else(|| at(RuleError::Pattern("expected LABEL<TAB>template".into())))?;
        let label: RelationLabel = label
            .trim()
            .parse()
            .map_err(|_| at(RuleError::Pattern(format!("unknown label {label:?}"))))?;
        out.push(parse_pattern(template, label).map_err(at)?);
    }
    Ok(out)
}
