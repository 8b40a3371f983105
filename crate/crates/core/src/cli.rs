//! The `medrel` command line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::corpus::{load_corpus, Corpus, CorpusPaths};
use crate::features::AssertionLexicons;
use crate::hybrid::{merge_predictions, MergePolicy, PredictionSet};
use crate::metrics::{evaluate, EvalReport};
use crate::network::TrainConfig;
use crate::pipeline::{
    gold_set, predict_corpus, render_sweep, rules_corpus, sweep, train_system, write_predictions, PipelineError,
    SweepAxis, TrainedSystem,
};
use crate::rules::{parse_pattern_file, ParseIndex, RuleSet, VerbLexicon};

#[derive(Debug, Parser)]
#[command(name = "medrel", version, about = "Treatment-problem relation extraction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the network on an annotated corpus and save the model.
    Train(Opts),
    /// Label every candidate pair with a trained model; writes .rel files.
    Predict(Opts),
    /// Label candidate pairs with the rule engine only; writes .rel files.
    Rules(Opts),
    /// Merge network and rule predictions and evaluate against the corpus.
    Hybrid(Opts),
    /// Score a directory of predicted .rel files against the corpus.
    Eval(Opts),
    /// Train and evaluate once per value of one hyperparameter.
    Sweep(SweepOpts),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory with .txt/.con/.rel (and optional .tags) files.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Phrase pattern file (LABEL<TAB>template).
    #[arg(long)]
    pub patterns: Option<PathBuf>,
    /// Verb lexicon file (LABEL<TAB>word).
    #[arg(long)]
    pub verbs: Option<PathBuf>,
    /// Directory with the seven assertion word lists.
    #[arg(long)]
    pub lexicons: Option<PathBuf>,
    /// Directory with `<id>.dep` dependency parses.
    #[arg(long)]
    pub parses: Option<PathBuf>,
    /// Output directory for .rel files.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Directory of predicted .rel files (eval).
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Pretrained word vectors, one `word v1 .. vn` per line.
    #[arg(long)]
    pub word_vectors: Option<PathBuf>,
    /// Training log path (default: `<model>.log`).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub neg_samples: Option<usize>,
    #[arg(long)]
    pub embedding_size: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Held-out document share for sweeps.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Let rule TrAP predictions override the network too.
    #[arg(long)]
    pub keep_trap: bool,
    /// Also report macro averages.
    #[arg(long = "macro")]
    pub macro_avg: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepOpts {
    #[command(flatten)]
    pub opts: Opts,
    /// neg-samples or embedding-size.
    #[arg(long)]
    pub axis: String,
    /// Comma-separated values, e.g. 40,100,200.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<usize>,
}

/// Everything a command needs, after merging defaults, the config file and
/// flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub corpus: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub patterns: Option<PathBuf>,
    pub verbs: Option<PathBuf>,
    pub lexicons: Option<PathBuf>,
    pub parses: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub test_fraction: f64,
    pub keep_trap: bool,
    pub macro_avg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            corpus: None,
            model: None,
            patterns: None,
            verbs: None,
            lexicons: None,
            parses: None,
            output: None,
            predictions: None,
            word_vectors: None,
            log: None,
            test_fraction: 0.1,
            keep_trap: false,
            macro_avg: false,
        }
    }
}

/// Failure categories; each maps to its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config = 3,
    Io = 4,
    Data = 5,
    Model = 6,
    Evaluation = 7,
}

pub fn categorize(e: &PipelineError) -> ErrorCategory {
    use crate::corpus::CorpusError;
    use crate::network::NetworkError;
    match e {
        PipelineError::Config(_) => ErrorCategory::Config,
        PipelineError::Io { .. } => ErrorCategory::Io,
        PipelineError::Corpus(CorpusError::Io { .. }) => ErrorCategory::Io,
        PipelineError::Network(NetworkError::Io { .. }) => ErrorCategory::Io,
        PipelineError::Feature(crate::features::FeatureError::Io { .. }) => ErrorCategory::Io,
        PipelineError::Rule(crate::rules::RuleError::Io { .. }) => ErrorCategory::Io,
        PipelineError::Corpus(_) | PipelineError::Feature(_) | PipelineError::Rule(_) => ErrorCategory::Data,
        PipelineError::Network(NetworkError::Config(_)) => ErrorCategory::Config,
        PipelineError::Network(_) => ErrorCategory::Model,
        PipelineError::Metrics(_) => ErrorCategory::Evaluation,
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value
        .parse()
        .map_err(|_| PipelineError::Config(format!("invalid value {value:?} for {key}")))
}

impl RunConfig {
    /// Sets one setting from its textual form. Keys accept `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let key = key.trim().replace('-', "_");
        let path = || Some(PathBuf::from(value));
        let t = &mut self.train;
        match key.as_str() {
            "corpus" => self.corpus = path(),
            "model" => self.model = path(),
            "patterns" => self.patterns = path(),
            "verbs" => self.verbs = path(),
            "lexicons" => self.lexicons = path(),
            "parses" => self.parses = path(),
            "output" => self.output = path(),
            "predictions" => self.predictions = path(),
            "word_vectors" => self.word_vectors = path(),
            "log" => self.log = path(),
            "seed" => t.seed = parse_value(&key, value)?,
            "epochs" => t.epochs = parse_value(&key, value)?,
            "neg_samples" => t.neg_samples = parse_value(&key, value)?,
            "embedding_size" => t.d_w = parse_value(&key, value)?,
            "hidden" => t.lstm_hidden = parse_value(&key, value)?,
            "pos_size" => t.d_p = parse_value(&key, value)?,
            "chunk_size" => t.d_c = parse_value(&key, value)?,
            "position_size" => t.d_pos = parse_value(&key, value)?,
            "max_distance" => t.p_max = parse_value(&key, value)?,
            "learning_rate" => t.learning_rate = parse_value(&key, value)?,
            "batch_size" => t.batch_size = parse_value(&key, value)?,
            "class_weighting" => t.class_weighting = parse_value(&key, value)?,
            "init_scale" => t.init_scale = parse_value(&key, value)?,
            "test_fraction" => self.test_fraction = parse_value(&key, value)?,
            "keep_trap" => self.keep_trap = parse_value(&key, value)?,
            "macro" => self.macro_avg = parse_value(&key, value)?,
            _ => return Err(PipelineError::Config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file; blank lines and `#` comments are ignored.
    pub fn apply_file_text(&mut self, text: &str) -> Result<(), PipelineError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("config line {}: expected key = value", i + 1)))?;
            self.set(k, v.trim())
                .map_err(|e| PipelineError::Config(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// Defaults, then the config file named by `--config`, then flags.
    pub fn resolve(opts: &Opts) -> Result<Self, PipelineError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &opts.config {
            let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
            cfg.apply_file_text(&text)?;
        }
        let paths = [
            (&opts.corpus, &mut cfg.corpus),
            (&opts.model, &mut cfg.model),
            (&opts.patterns, &mut cfg.patterns),
            (&opts.verbs, &mut cfg.verbs),
            (&opts.lexicons, &mut cfg.lexicons),
            (&opts.parses, &mut cfg.parses),
            (&opts.output, &mut cfg.output),
            (&opts.predictions, &mut cfg.predictions),
            (&opts.word_vectors, &mut cfg.word_vectors),
            (&opts.log, &mut cfg.log),
        ];
        for (flag, slot) in paths {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        let t = &mut cfg.train;
        if let Some(v) = opts.seed {
            t.seed = v;
        }
        if let Some(v) = opts.epochs {
            t.epochs = v;
        }
        if let Some(v) = opts.neg_samples {
            t.neg_samples = v;
        }
        if let Some(v) = opts.embedding_size {
            t.d_w = v;
        }
        if let Some(v) = opts.hidden {
            t.lstm_hidden = v;
        }
        if let Some(v) = opts.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = opts.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = opts.test_fraction {
            cfg.test_fraction = v;
        }
        cfg.keep_trap |= opts.keep_trap;
        cfg.macro_avg |= opts.macro_avg;
        Ok(cfg)
    }

    fn required<'a>(&self, value: &'a Option<PathBuf>, name: &str) -> Result<&'a Path, PipelineError> {
        value
            .as_deref()
            .ok_or_else(|| PipelineError::Config(format!("--{name} is required")))
    }

    fn load_corpus(&self) -> Result<Corpus, PipelineError> {
        let dir = self.required(&self.corpus, "corpus")?;
        if !dir.is_dir() {
            return Err(PipelineError::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "corpus directory not found"),
            ));
        }
        Ok(load_corpus(&CorpusPaths::single(dir))?)
    }

    fn lexicons(&self) -> Result<AssertionLexicons, PipelineError> {
        Ok(match &self.lexicons {
            Some(dir) => AssertionLexicons::load_dir(dir)?,
            None => AssertionLexicons::starter(),
        })
    }

    /// Rule files named in the configuration; an absent file contributes
    /// nothing.
    fn rules(&self) -> Result<RuleSet, PipelineError> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| PipelineError::io(p, e));
        let in_file = |p: &Path| {
            let p = p.to_path_buf();
            move |e| crate::rules::RuleError::InFile {
                path: p,
                source: Box::new(e),
            }
        };
        let patterns = match &self.patterns {
            Some(p) => parse_pattern_file(&read(p)?).map_err(in_file(p))?,
            None => Vec::new(),
        };
        let verbs = match &self.verbs {
            Some(p) => VerbLexicon::parse(&read(p)?).map_err(in_file(p))?,
            None => VerbLexicon::default(),
        };
        Ok(RuleSet::new(patterns, verbs))
    }

    fn parses(&self, corpus: &Corpus) -> Result<Option<ParseIndex>, PipelineError> {
        self.parses
            .as_deref()
            .map(|dir| ParseIndex::load(dir, corpus))
            .transpose()
            .map_err(Into::into)
    }

    fn merge_policy(&self) -> MergePolicy {
        if self.keep_trap {
            MergePolicy::keep_all()
        } else {
            MergePolicy::default()
        }
    }

    fn report(&self, r: &EvalReport) -> String {
        format!("{}\n{}", r.to_table(self.macro_avg), r.to_key_values(self.macro_avg))
    }
}

/// SHA-256 of the training configuration serialized as JSON.
pub fn config_hash(config: &TrainConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Trains, saves the model and its log; returns the log text.
pub fn cmd_train(cfg: &RunConfig) -> Result<String, PipelineError> {
    let model_path = cfg.required(&cfg.model, "model")?;
    let corpus = cfg.load_corpus()?;
    let vectors = cfg
        .word_vectors
        .as_deref()
        .map(|p| std::fs::read_to_string(p).map_err(|e| PipelineError::io(p, e)))
        .transpose()?;
    let run = train_system(&corpus, &cfg.train, cfg.lexicons()?, vectors.as_deref())?;
    run.system.save(model_path)?;

    let mut log = String::new();
    let _ = writeln!(log, "seed={}", cfg.train.seed);
    let _ = writeln!(log, "config_hash={}", config_hash(&cfg.train));
    let _ = writeln!(log, "config={}", serde_json::to_string(&cfg.train).expect("config serializes"));
    let _ = writeln!(log, "instances={}", run.n_instances);
    for (i, l) in run.loss_trace.iter().enumerate() {
        let _ = writeln!(log, "epoch={} loss={l}", i + 1);
    }
    let log_path = cfg.log.clone().unwrap_or_else(|| {
        let mut p = model_path.as_os_str().to_os_string();
        p.push(".log");
        PathBuf::from(p)
    });
    std::fs::write(&log_path, &log).map_err(|e| PipelineError::io(&log_path, e))?;
    Ok(log)
}

fn predict_with_model(cfg: &RunConfig, corpus: &Corpus) -> Result<PredictionSet, PipelineError> {
    let system = TrainedSystem::load(cfg.required(&cfg.model, "model")?)?;
    predict_corpus(&system, corpus)
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<PredictionSet, PipelineError> {
    let out = cfg.required(&cfg.output, "output")?;
    let corpus = cfg.load_corpus()?;
    let preds = predict_with_model(cfg, &corpus)?;
    write_predictions(out, &corpus, &preds)?;
    Ok(preds)
}

pub fn cmd_rules(cfg: &RunConfig) -> Result<PredictionSet, PipelineError> {
    let out = cfg.required(&cfg.output, "output")?;
    let rules = cfg.rules()?;
    let corpus = cfg.load_corpus()?;
    let parses = cfg.parses(&corpus)?;
    let preds = rules_corpus(&rules, &corpus, parses.as_ref())?;
    write_predictions(out, &corpus, &preds)?;
    Ok(preds)
}

/// Merged predictions (written when `--output` is set) and their report
/// against the corpus annotations.
pub fn cmd_hybrid(cfg: &RunConfig) -> Result<(PredictionSet, EvalReport), PipelineError> {
    let rules = cfg.rules()?;
    let corpus = cfg.load_corpus()?;
    let parses = cfg.parses(&corpus)?;
    let nn = predict_with_model(cfg, &corpus)?;
    let rp = rules_corpus(&rules, &corpus, parses.as_ref())?;
    let merged = merge_predictions(&nn, &rp, &cfg.merge_policy());
    if let Some(out) = &cfg.output {
        write_predictions(out, &corpus, &merged)?;
    }
    let report = evaluate(&gold_set(&corpus), &merged)?;
    Ok((merged, report))
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport, PipelineError> {
    let gold = cfg.load_corpus()?;
    let pred_dir = cfg.required(&cfg.predictions, "predictions")?;
    let gold_dir = cfg.required(&cfg.corpus, "corpus")?;
    let predicted = load_corpus(&CorpusPaths {
        rel: pred_dir.to_path_buf(),
        ..CorpusPaths::single(gold_dir)
    })?;
    Ok(evaluate(&gold_set(&gold), &predicted_set(&predicted))?)
}

/// Predicted labels keyed like the gold candidates, without the `Null`
/// entries.
fn predicted_set(predicted: &Corpus) -> PredictionSet {
    predicted.gold_relations().map(|r| (r.key(), r.label)).collect()
}

pub fn cmd_sweep(cfg: &RunConfig, axis: SweepAxis, values: &[usize]) -> Result<String, PipelineError> {
    let corpus = cfg.load_corpus()?;
    let rows = sweep(&corpus, &cfg.train, axis, values, &cfg.lexicons()?, cfg.test_fraction)?;
    Ok(render_sweep(axis, &rows))
}

/// Runs one parsed command, returning what it prints on success.
pub fn execute(cli: Cli) -> Result<String, PipelineError> {
    match cli.command {
        Command::Train(o) => cmd_train(&RunConfig::resolve(&o)?),
        Command::Predict(o) => {
            let cfg = RunConfig::resolve(&o)?;
            let n = cmd_predict(&cfg)?.values().filter(|l| l.is_positive()).count();
            Ok(format!("{n} relations written\n"))
        }
        Command::Rules(o) => {
            let cfg = RunConfig::resolve(&o)?;
            Ok(format!("{} relations written\n", cmd_rules(&cfg)?.len()))
        }
        Command::Hybrid(o) => {
            let cfg = RunConfig::resolve(&o)?;
            let (_, report) = cmd_hybrid(&cfg)?;
            Ok(cfg.report(&report))
        }
        Command::Eval(o) => {
            let cfg = RunConfig::resolve(&o)?;
            Ok(cfg.report(&cmd_eval(&cfg)?))
        }
        Command::Sweep(s) => {
            let cfg = RunConfig::resolve(&s.opts)?;
            cmd_sweep(&cfg, s.axis.parse()?, &s.values)
        }
    }
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let cat = categorize(&e);
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(cat as u8)
        }
    }
}

/// Parses `key = value` text into a map (for inspection and tests).
pub fn parse_config_text(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().replace('-', "_"), v.trim().to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_flags_over_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# settings\nepochs = 7\nseed = 3\nneg-samples = 500\n").unwrap();
        let opts = Opts {
            config: Some(path),
            seed: Some(11),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&opts).unwrap();
        assert_eq!(cfg.train.seed, 11);
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.neg_samples, 500);
        assert_eq!(cfg.train.d_w, 40);
        assert_eq!(cfg.train.lstm_hidden, 64);
    }

    #[test]
    fn defaults_match_chosen_settings() {
        let cfg = RunConfig::default();
        assert_eq!(
            (cfg.train.d_w, cfg.train.lstm_hidden, cfg.train.epochs, cfg.train.neg_samples),
            (40, 64, 20, 20_000)
        );
    }

    #[test]
    fn dimension_keys() {
        let mut cfg = RunConfig::default();
        cfg.apply_file_text("pos_size = 3\nchunk_size = 4\nposition_size = 7\nmax_distance = 9").unwrap();
        let t = &cfg.train;
        assert_eq!((t.d_p, t.d_c, t.d_pos, t.p_max), (3, 4, 7, 9));
    }

    #[test]
    fn bad_config_lines() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.apply_file_text("epochs 3"), Err(PipelineError::Config(_))));
        assert!(cfg.apply_file_text("epochs = many").is_err());
        assert!(cfg.apply_file_text("colour = blue").is_err());
        assert_eq!(parse_config_text("a-b = 1\n# x\n")["a_b"], "1");
    }

    #[test]
    fn config_hash_tracks_config() {
        let a = TrainConfig::default();
        let b = TrainConfig {
            epochs: 3,
            ..Default::default()
        };
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
