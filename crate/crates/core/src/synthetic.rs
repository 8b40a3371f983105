//! Generated corpora for tests and demonstrations, since real clinical
//! notes cannot be redistributed.
//!
//! Every generated sentence is tagged (POS and chunk) and has gold concepts
//! and relations, so it passes through the same pipeline as loaded data.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ConceptSpan, ConceptType, Corpus, Document, RelationInstance, RelationLabel, Sentence, Token};
use crate::rules::{parse_pattern_file, PhrasePattern, RuleSet, VerbLexicon, STARTER_PATTERNS, STARTER_VERBS};

const PROBLEMS: &[&str] = &[
    "fever", "rash", "pain", "cough", "edema", "anemia", "infection", "hypertension", "nausea", "bleeding",
    "chest pain", "atrial fibrillation", "renal failure", "back pain", "shortness of breath", "headache",
];
const TREATMENTS: &[&str] = &[
    "aspirin", "heparin", "morphine", "vancomycin", "lasix", "insulin", "coumadin", "percocet", "ceptaz",
    "levaquin", "metoprolol", "iv fluids", "tylenol", "prednisone", "antibiotics", "oxygen",
];
const PREPOSITIONS: &[&str] = &["with", "by", "after", "on"];

/// Incrementally builds one document of tagged sentences.
struct DocBuilder {
    doc: Document,
}

/// A sentence fragment under construction: `(word, pos, chunk)` tokens plus
/// concept spans recorded as they are appended.
#[derive(Default)]
struct Line {
    tokens: Vec<(String, &'static str, &'static str)>,
    concepts: Vec<(usize, usize, ConceptType)>,
}

impl Line {
    fn word(&mut self, w: &str, pos: &'static str, chunk: &'static str) -> &mut Self {
        for part in w.split_whitespace() {
            self.tokens.push((part.to_string(), pos, chunk));
        }
        self
    }

    /// Appends a concept and returns its index in `concepts`.
    fn concept(&mut self, text: &str, ctype: ConceptType) -> usize {
        let start = self.tokens.len();
        self.word(text, "NN", "NP");
        self.concepts.push((start, self.tokens.len() - 1, ctype));
        self.concepts.len() - 1
    }
}

impl DocBuilder {
    fn new(id: String) -> Self {
        DocBuilder {
            doc: Document {
                id,
                ..Default::default()
            },
        }
    }

    /// Adds `line` with `relations` given as `(treatment concept, problem
    /// concept, label)`.
    fn push(&mut self, line: Line, relations: &[(usize, usize, RelationLabel)]) {
        let n = self.doc.sentences.len() + 1;
        let sentence = Arc::new(Sentence {
            doc_id: self.doc.id.clone(),
            line: n,
            tokens: line
                .tokens
                .iter()
                .enumerate()
                .map(|(index, (w, pos, chunk))| Token {
                    text: w.clone(),
                    index,
                    pos: pos.to_string(),
                    chunk: chunk.to_string(),
                })
                .collect(),
        });
        let spans: Vec<ConceptSpan> = line
            .concepts
            .iter()
            .map(|&(s, e, ctype)| ConceptSpan {
                text: sentence.tokens[s..=e].iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" "),
                line: n,
                tok_start: s,
                tok_end: e,
                ctype,
            })
            .collect();
        for &(t, p, label) in relations {
            if label.is_positive() {
                self.doc.relations.push(RelationInstance {
                    sentence: Arc::clone(&sentence),
                    treatment: spans[t].clone(),
                    problem: spans[p].clone(),
                    label,
                });
            }
        }
        self.doc.concepts.extend(spans);
        self.doc.sentences.push(sentence);
    }
}

fn pick<'a, R: Rng>(rng: &mut R, items: &'a [&'a str]) -> &'a str {
    items.choose(rng).expect("non-empty list")
}

/// `n` single-pair sentences `the <problem> was <marker> with <treatment>`,
/// where the marker word alone determines the label. Labels cycle through
/// all six classes.
pub fn marker_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut doc = DocBuilder::new("markers".into());
    for i in 0..n {
        let label = RelationLabel::ALL[i % RelationLabel::COUNT];
        let mut line = Line::default();
        line.word("the", "DT", "NP");
        let p = line.concept(pick(&mut rng, PROBLEMS), ConceptType::Problem);
        line.word("was", "VBD", "VP")
            .word(&format!("marker{}", label.index()), "VBN", "VP")
            .word("with", "IN", "PP");
        let t = line.concept(pick(&mut rng, TREATMENTS), ConceptType::Treatment);
        doc.push(line, &[(t, p, label)]);
    }
    Corpus {
        documents: vec![doc.doc],
        sources: Vec::new(),
    }
}

/// Cue vocabulary of one relation class.
#[derive(Debug, Clone)]
pub struct CueList {
    pub label: RelationLabel,
    pub words: Vec<String>,
}

fn expand(seeds: &[&str], stems: &[&str], size: usize) -> Vec<String> {
    const SUFFIXES: &[&str] = &["ed", "ing", "ive", "al", "ment", "ous", "ant", "ity", "ist", "ure"];
    let mut out: Vec<String> = seeds.iter().map(|s| s.to_string()).collect();
    'outer: for suffix in SUFFIXES {
        for stem in stems {
            if out.len() >= size {
                break 'outer;
            }
            let w = format!("{stem}{suffix}");
            if !out.contains(&w) {
                out.push(w);
            }
        }
    }
    out
}

/// Settings for [`hybrid_corpus`].
#[derive(Debug, Clone)]
pub struct HybridCorpusConfig {
    /// Number of main (treatment, problem) pairs; distractor pairs come on top.
    pub n_instances: usize,
    pub sentences_per_doc: usize,
    /// Relative frequency of each label in `RelationLabel::ALL` order.
    pub label_weights: [f64; 6],
    /// Cue words per rare (non-TrAP) positive class.
    pub rare_cues: usize,
    /// Cue words for TrAP and for unrelated pairs.
    pub common_cues: usize,
    /// Share of rare-class sentences using a fixed `resistant to` phrase.
    pub phrase_rate: f64,
    /// Share of TrAP / Null sentences prefixed by a clause about a second
    /// problem that is unrelated to the treatment.
    pub distractor_rate: f64,
    pub seed: u64,
}

impl Default for HybridCorpusConfig {
    fn default() -> Self {
        HybridCorpusConfig {
            n_instances: 2000,
            sentences_per_doc: 20,
            //              TrAP  TrCP  TrIP  TrNAP TrWP  Null
            label_weights: [0.33, 0.09, 0.08, 0.05, 0.05, 0.40],
            rare_cues: 60,
            common_cues: 30,
            phrase_rate: 0.15,
            distractor_rate: 0.3,
            seed: 7,
        }
    }
}

/// A generated corpus with pattern-governed labels, plus the rule set that
/// encodes those patterns.
///
/// Each main sentence links one problem and one treatment through a
/// `was <cue> <preposition>` frame. The cue word alone decides the label and
/// the frame is identical for every class, so a classifier that has never
/// seen a cue has nothing else to go on. Rare classes draw cues uniformly from
/// a large vocabulary, so many held-out cues are unseen in training. The rule
/// lexicon lists every rare-class cue but only `treated` for TrAP, and
/// distractor clauses put `treated` between unrelated pairs.
pub fn hybrid_corpus(cfg: &HybridCorpusConfig) -> (Corpus, RuleSet) {
    use RelationLabel::*;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cues = [
        CueList {
            label: TrAP,
            words: expand(&["treated", "given", "started", "managed", "administered"], &["dos", "prescrib", "medicat", "therap"], cfg.common_cues),
        },
        CueList {
            label: TrCP,
            words: expand(&["control", "regulate", "modulate", "restrict", "caused", "induced", "precipitated"], &["provok", "trigger", "elicit", "engender", "spawn", "incit"], cfg.rare_cues),
        },
        CueList {
            label: TrIP,
            words: expand(&["improvement", "relieved", "resolved", "controlled", "eased", "alleviated"], &["amelior", "mitigat", "palliat", "assuag", "allay", "sooth"], cfg.rare_cues),
        },
        CueList {
            label: TrNAP,
            words: expand(&["held", "withheld", "deferred", "avoided", "stopped"], &["postpon", "suspend", "cancel", "declin", "omitt", "forgo"], cfg.rare_cues),
        },
        CueList {
            label: TrWP,
            words: expand(&["worsened", "exacerbated", "aggravated", "intensified"], &["compound", "inflam", "escalat", "deteriorat", "amplif", "heighten"], cfg.rare_cues),
        },
        CueList {
            label: Null,
            words: expand(&["noted", "listed", "reviewed", "documented", "charted", "seen"], &["record", "observ", "report", "mention"], cfg.common_cues),
        },
    ];
    let cue_words = |label: RelationLabel| &cues.iter().find(|c| c.label == label).expect("every label has cues").words;

    let total: f64 = cfg.label_weights.iter().sum();
    let mut docs = Vec::new();
    let mut doc = DocBuilder::new("synth000".into());
    for i in 0..cfg.n_instances {
        if i > 0 && i % cfg.sentences_per_doc == 0 {
            docs.push(std::mem::replace(&mut doc, DocBuilder::new(format!("synth{:03}", docs.len() + 1))).doc);
        }
        let mut u = rng.gen::<f64>() * total;
        let label = *RelationLabel::ALL
            .iter()
            .zip(cfg.label_weights)
            .find(|(_, w)| {
                u -= w;
                u < 0.0
            })
            .map(|(l, _)| l)
            .unwrap_or(&Null);
        let rare = label.is_positive() && label != TrAP;
        let mut line = Line::default();
        let mut relations = Vec::new();

        let distractor = !rare && rng.gen_bool(cfg.distractor_rate);
        let extra_problem = if distractor {
            line.word("the", "DT", "NP");
            let p = line.concept(pick(&mut rng, PROBLEMS), ConceptType::Problem);
            line.word("was", "VBD", "VP")
                .word(cue_words(Null).choose(&mut rng).unwrap(), "VBN", "VP")
                .word("and", "CC", "O");
            Some(p)
        } else {
            None
        };

        let phrase = matches!(label, TrCP | TrWP) && rng.gen_bool(cfg.phrase_rate);
        let problem_first = phrase || rng.gen_bool(0.5);
        let (t, p) = if problem_first {
            line.word("the", "DT", "NP");
            let p = line.concept(pick(&mut rng, PROBLEMS), ConceptType::Problem);
            line.word("was", "VBD", "VP");
            if phrase {
                if label == TrWP {
                    line.word("intermittently", "RB", "ADVP");
                }
                line.word("resistant", "JJ", "ADJP").word("to", "TO", "PP");
            } else {
                line.word(cue_words(label).choose(&mut rng).unwrap(), "VBN", "VP")
                    .word(pick(&mut rng, PREPOSITIONS), "IN", "PP");
            }
            let t = line.concept(pick(&mut rng, TREATMENTS), ConceptType::Treatment);
            (t, p)
        } else {
            let t = line.concept(pick(&mut rng, TREATMENTS), ConceptType::Treatment);
            line.word("was", "VBD", "VP")
                .word(cue_words(label).choose(&mut rng).unwrap(), "VBN", "VP")
                .word(pick(&mut rng, PREPOSITIONS), "IN", "PP")
                .word("the", "DT", "NP");
            let p = line.concept(pick(&mut rng, PROBLEMS), ConceptType::Problem);
            (t, p)
        };
        if rng.gen_bool(0.3) {
            line.word("today", "NN", "NP");
        }
        relations.push((t, p, label));
        if let Some(x) = extra_problem {
            relations.push((t, x, Null));
        }
        doc.push(line, &relations);
    }
    docs.push(doc.doc);

    let mut lexicon = VerbLexicon::parse(STARTER_VERBS).expect("starter verbs parse");
    for c in &cues {
        if c.label.is_positive() && c.label != TrAP {
            for w in &c.words {
                lexicon.insert(c.label, w).expect("positive label");
            }
        }
    }
    let patterns: Vec<PhrasePattern> = parse_pattern_file(STARTER_PATTERNS).expect("starter patterns parse");
    (
        Corpus {
            documents: docs,
            sources: Vec::new(),
        },
        RuleSet::new(patterns, lexicon),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_candidates;

    #[test]
    fn marker_corpus_labels_cycle() {
        let c = marker_corpus(12, 1);
        let cands = generate_candidates(&c);
        assert_eq!(cands.len(), 12);
        for (i, inst) in cands.iter().enumerate() {
            assert_eq!(inst.label, RelationLabel::ALL[i % 6]);
        }
    }

    #[test]
    fn hybrid_corpus_shape() {
        let cfg = HybridCorpusConfig {
            n_instances: 300,
            ..Default::default()
        };
        let (c, rules) = hybrid_corpus(&cfg);
        assert_eq!(c.documents.len(), 15);
        assert_eq!(c.n_sentences(), 300);
        let cands = generate_candidates(&c);
        assert!(cands.len() > 300);
        assert!(!rules.lexicon.is_empty());
        // Deterministic under the seed.
        let (again, _) = hybrid_corpus(&cfg);
        let texts = |c: &Corpus| c.sentences().map(|s| s.text()).collect::<Vec<_>>();
        assert_eq!(texts(&c), texts(&again));
    }

    #[test]
    fn rare_cues_are_disjoint() {
        let (_, rules) = hybrid_corpus(&HybridCorpusConfig {
            n_instances: 10,
            ..Default::default()
        });
        let mut seen = std::collections::HashSet::new();
        for l in RelationLabel::POSITIVE {
            for w in rules.lexicon.verbs(l) {
                assert!(seen.insert(w.to_string()), "{w} listed twice");
            }
        }
    }
}
