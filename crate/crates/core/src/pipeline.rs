//! End-to-end operations shared by the command line, the Python bindings and
//! the tests: training a network on a corpus, predicting, running rules and
//! evaluating on a held-out document split.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{generate_candidates, sample_negatives, Corpus, CorpusError, RelationInstance, RelationLabel};
use crate::features::{AssertionLexicons, FeatureError, FeatureSet};
use crate::hybrid::{merge_predictions, prediction_set, MergePolicy, PredictionSet};
use crate::metrics::{evaluate, EvalReport, MetricsError};
use crate::network::{self, BiLstmModel, NetworkError, TableSizes, TrainConfig};
use crate::rules::{rule_predict, ParseIndex, RuleError, RuleSet};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// A trained network together with the feature tables it was trained with.
#[derive(Debug, Clone)]
pub struct TrainedSystem {
    pub features: FeatureSet,
    pub model: BiLstmModel,
}

/// Where the feature tables of a model file live.
pub fn features_path(model_path: &Path) -> PathBuf {
    let mut name = model_path.as_os_str().to_os_string();
    name.push(".features.json");
    PathBuf::from(name)
}

impl TrainedSystem {
    /// Writes the model file and its `.features.json` sidecar.
    pub fn save(&self, model_path: &Path) -> Result<()> {
        network::save_model(&self.model, model_path)?;
        let fp = features_path(model_path);
        std::fs::write(&fp, self.features.to_json()).map_err(|e| PipelineError::io(&fp, e))
    }

    pub fn load(model_path: &Path) -> Result<Self> {
        let model = network::load_model(model_path)?;
        let fp = features_path(model_path);
        let text = std::fs::read_to_string(&fp).map_err(|e| PipelineError::io(&fp, e))?;
        Ok(TrainedSystem {
            features: FeatureSet::from_json(&text)?,
            model,
        })
    }

    pub fn predict_instance(&self, inst: &RelationInstance) -> Result<(RelationLabel, [f64; network::N_LABELS])> {
        let enc = self.features.encode(inst)?;
        Ok(network::predict(&self.model, &enc)?)
    }
}

/// Gold positives plus up to `config.neg_samples` sampled `Null` candidates.
pub fn training_instances(corpus: &Corpus, config: &TrainConfig) -> Vec<RelationInstance> {
    sample_negatives(&generate_candidates(corpus), config.neg_samples, config.seed)
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub system: TrainedSystem,
    pub loss_trace: Vec<f64>,
    pub n_instances: usize,
}

/// Builds features from `corpus`, samples negatives and trains the network.
/// `word_vectors` optionally seeds the word table from a text embedding file.
pub fn train_system(
    corpus: &Corpus,
    config: &TrainConfig,
    lexicons: AssertionLexicons,
    word_vectors: Option<&str>,
) -> Result<TrainRun> {
    config.validate()?;
    let instances = training_instances(corpus, config);
    let features = FeatureSet::build(corpus, &instances, lexicons);
    let encoded = instances
        .iter()
        .map(|i| features.encode(i))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let sizes = TableSizes {
        words: features.vocab.words.len(),
        pos: features.vocab.pos.len(),
        chunks: features.vocab.chunks.len(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = BiLstmModel::init(config.clone(), sizes, &mut rng);
    if let Some(text) = word_vectors {
        let n = network::load_word_vectors(&mut model, &features.vocab.words, text)?;
        log::info!("initialized {n} word vectors");
    }
    let outcome = network::continue_training(model, &encoded, config)?;
    Ok(TrainRun {
        system: TrainedSystem {
            features,
            model: outcome.model,
        },
        loss_trace: outcome.loss_trace,
        n_instances: encoded.len(),
    })
}

/// Network label for every candidate pair of `corpus`.
pub fn predict_corpus(system: &TrainedSystem, corpus: &Corpus) -> Result<PredictionSet> {
    let candidates = generate_candidates(corpus);
    let labels = candidates
        .par_iter()
        .map(|inst| system.predict_instance(inst).map(|(l, _)| (inst.key(), l)))
        .collect::<Result<Vec<_>>>()?;
    Ok(labels.into_iter().collect())
}

/// Rule label for every candidate pair the rules fire on.
pub fn rules_corpus(rules: &RuleSet, corpus: &Corpus, parses: Option<&ParseIndex>) -> Result<PredictionSet> {
    let mut out = PredictionSet::new();
    for inst in generate_candidates(corpus) {
        let parse = parses.and_then(|p| p.get(&inst.sentence.doc_id, inst.sentence.line));
        if let Some(label) = rule_predict(&inst, rules, parse)? {
            out.insert(inst.key(), label);
        }
    }
    Ok(out)
}

/// Gold label (`Null` for unrelated pairs) of every candidate pair.
pub fn gold_set(corpus: &Corpus) -> PredictionSet {
    prediction_set(&generate_candidates(corpus))
}

/// `.rel` contents per document id for the positive predictions. Documents
/// without any positive prediction map to an empty string.
pub fn render_predictions(corpus: &Corpus, preds: &PredictionSet) -> BTreeMap<String, String> {
    let mut out: BTreeMap<String, String> = corpus.documents.iter().map(|d| (d.id.clone(), String::new())).collect();
    for mut inst in generate_candidates(corpus) {
        match preds.get(&inst.key()) {
            Some(&l) if l.is_positive() => inst.label = l,
            _ => continue,
        }
        let text = out.entry(inst.sentence.doc_id.clone()).or_default();
        text.push_str(&inst.to_rel_line());
        text.push('\n');
    }
    out
}

/// Writes one `<id>.rel` file per document into `dir`.
pub fn write_predictions(dir: &Path, corpus: &Corpus, preds: &PredictionSet) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    for (id, text) in render_predictions(corpus, preds) {
        let path = dir.join(format!("{id}.rel"));
        std::fs::write(&path, text).map_err(|e| PipelineError::io(&path, e))?;
    }
    Ok(())
}

/// Seeded document-level split: `ceil(fraction * n)` shuffled documents go
/// to the test side (at least one when there are two or more documents).
pub fn split_documents(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(PipelineError::Config(format!(
            "test fraction must be in [0, 1), got {test_fraction}"
        )));
    }
    let n = corpus.documents.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_test = (test_fraction * n as f64).ceil() as usize;
    if n >= 2 && test_fraction > 0.0 {
        n_test = n_test.clamp(1, n - 1);
    }
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    Ok((corpus.subset(|i| !is_test[i]), corpus.subset(|i| is_test[i])))
}

/// Network, rules-only and merged predictions scored against the gold pairs
/// of a test corpus.
#[derive(Debug, Clone)]
pub struct HybridReports {
    pub network: EvalReport,
    pub rules: EvalReport,
    pub hybrid: EvalReport,
    pub merged: PredictionSet,
}

pub fn evaluate_hybrid(
    system: &TrainedSystem,
    rules: &RuleSet,
    test: &Corpus,
    parses: Option<&ParseIndex>,
    policy: &MergePolicy,
) -> Result<HybridReports> {
    let gold = gold_set(test);
    let nn = predict_corpus(system, test)?;
    let rp = rules_corpus(rules, test, parses)?;
    let merged = merge_predictions(&nn, &rp, policy);
    Ok(HybridReports {
        network: evaluate(&gold, &nn)?,
        rules: evaluate(&gold, &rp)?,
        hybrid: evaluate(&gold, &merged)?,
        merged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    NegSamples,
    EmbeddingSize,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NegSamples => "neg_samples",
            SweepAxis::EmbeddingSize => "embedding_size",
        }
    }

    pub fn apply(self, config: &mut TrainConfig, value: usize) {
        match self {
            SweepAxis::NegSamples => config.neg_samples = value,
            SweepAxis::EmbeddingSize => config.d_w = value,
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "neg_samples" => Ok(SweepAxis::NegSamples),
            "embedding_size" => Ok(SweepAxis::EmbeddingSize),
            _ => Err(PipelineError::Config(format!(
                "unknown sweep axis {s:?} (expected neg-samples or embedding-size)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: usize,
    pub seed: u64,
    pub report: EvalReport,
}

/// Trains and evaluates one network per value on the same seeded document
/// split. Row `i` uses seed `base.seed + i`; rows run in parallel.
pub fn sweep(
    corpus: &Corpus,
    base: &TrainConfig,
    axis: SweepAxis,
    values: &[usize],
    lexicons: &AssertionLexicons,
    test_fraction: f64,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(PipelineError::Config("sweep needs at least one value".into()));
    }
    let (train, test) = split_documents(corpus, test_fraction, base.seed)?;
    let gold = gold_set(&test);
    values
        .par_iter()
        .enumerate()
        .map(|(i, &value)| {
            let mut config = base.clone();
            config.seed = base.seed.wrapping_add(i as u64);
            axis.apply(&mut config, value);
            let run = train_system(&train, &config, lexicons.clone(), None)?;
            let report = evaluate(&gold, &predict_corpus(&run.system, &test)?)?;
            Ok(SweepRow {
                value,
                seed: config.seed,
                report,
            })
        })
        .collect()
}

/// One line per row: value, seed, then total P/R/F and per-class F.
pub fn render_sweep(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut out = format!("{}\tseed\tP\tR\tF", axis.name());
    for l in RelationLabel::POSITIVE {
        out.push_str(&format!("\tF_{l}"));
    }
    out.push('\n');
    for r in rows {
        let t = &r.report.total;
        out.push_str(&format!("{}\t{}\t{:.4}\t{:.4}\t{:.4}", r.value, r.seed, t.precision, t.recall, t.f));
        for m in &r.report.per_class {
            out.push_str(&format!("\t{:.4}", m.f));
        }
        out.push('\n');
    }
    out
}
