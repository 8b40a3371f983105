//! Precision, recall and F-score over the five positive relation types.

use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::{InstanceKey, RelationLabel};
use crate::hybrid::PredictionSet;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("predicted pair {0:?} is not a gold candidate")]
    UnknownKey(InstanceKey),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl ClassMetrics {
    pub fn from_counts(counts: Counts) -> Self {
        let (precision, recall, f) = prf(counts.tp, counts.fp, counts.fn_);
        ClassMetrics {
            counts,
            precision,
            recall,
            f,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and their harmonic mean; every 0/0 is 0.
///
/// F is computed as `2tp / (2tp + fp + fn)`, algebraically the harmonic mean
/// of P and R but with a single rounding step.
pub fn prf(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    (ratio(tp, tp + fp), ratio(tp, tp + fn_), ratio(2 * tp, 2 * tp + fp + fn_))
}

/// Harmonic mean of already computed precision and recall (0 when both are 0).
pub fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Per-label counts in `RelationLabel::POSITIVE` order. Gold keys missing from
/// `pred` count as predicted `Null`.
pub fn count_confusion(gold: &PredictionSet, pred: &PredictionSet) -> Result<[Counts; 5], MetricsError> {
    if let Some(k) = pred.keys().find(|k| !gold.contains_key(k)) {
        return Err(MetricsError::UnknownKey(k.clone()));
    }
    let mut counts = [Counts::default(); 5];
    for (k, &g) in gold {
        let p = pred.get(k).copied().unwrap_or(RelationLabel::Null);
        if g == p {
            if g.is_positive() {
                counts[g.index()].tp += 1;
            }
            continue;
        }
        if g.is_positive() {
            counts[g.index()].fn_ += 1;
        }
        if p.is_positive() {
            counts[p.index()].fp += 1;
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// In `RelationLabel::POSITIVE` order.
    pub per_class: [ClassMetrics; 5],
    /// Micro average over pooled counts.
    pub total: ClassMetrics,
}

pub fn evaluate(gold: &PredictionSet, pred: &PredictionSet) -> Result<EvalReport, MetricsError> {
    Ok(EvalReport::from_counts(count_confusion(gold, pred)?))
}

impl EvalReport {
    pub fn from_counts(counts: [Counts; 5]) -> Self {
        let mut pooled = Counts::default();
        for c in counts {
            pooled += c;
        }
        EvalReport {
            per_class: counts.map(ClassMetrics::from_counts),
            total: ClassMetrics::from_counts(pooled),
        }
    }

    pub fn class(&self, label: RelationLabel) -> Option<&ClassMetrics> {
        label.is_positive().then(|| &self.per_class[label.index()])
    }

    /// Unweighted mean of the per-class precision, recall and F.
    pub fn macro_average(&self) -> (f64, f64, f64) {
        let n = self.per_class.len() as f64;
        let sum = |f: fn(&ClassMetrics) -> f64| self.per_class.iter().map(f).sum::<f64>() / n;
        (sum(|m| m.precision), sum(|m| m.recall), sum(|m| m.f))
    }

    /// Aligned table: one column per label plus Total, rows P, R, F.
    pub fn to_table(&self, include_macro: bool) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<10}", "");
        for l in RelationLabel::POSITIVE {
            let _ = write!(out, "{:>8}", l.as_str());
        }
        let _ = write!(out, "{:>8}", "Total");
        if include_macro {
            let _ = write!(out, "{:>8}", "Macro");
        }
        out.push('\n');
        let (mp, mr, mf) = self.macro_average();
        type Row<'a> = (&'a str, fn(&ClassMetrics) -> f64, f64);
        let rows: [Row; 3] = [
            ("Precision", |m| m.precision, mp),
            ("Recall", |m| m.recall, mr),
            ("F-score", |m| m.f, mf),
        ];
        for (name, get, macro_v) in rows {
            let _ = write!(out, "{name:<10}");
            for m in self.per_class.iter().chain([&self.total]) {
                let _ = write!(out, "{:>8.2}", get(m));
            }
            if include_macro {
                let _ = write!(out, "{macro_v:>8.2}");
            }
            out.push('\n');
        }
        out
    }

    /// `key=value` lines with full precision, e.g. `TrAP.precision=0.5`.
    pub fn to_key_values(&self, include_macro: bool) -> String {
        let mut out = String::new();
        let names = RelationLabel::POSITIVE.iter().map(|l| l.as_str()).chain(["Total"]);
        for (name, m) in names.zip(self.per_class.iter().chain([&self.total])) {
            let c = m.counts;
            let _ = writeln!(out, "{name}.tp={}", c.tp);
            let _ = writeln!(out, "{name}.fp={}", c.fp);
            let _ = writeln!(out, "{name}.fn={}", c.fn_);
            let _ = writeln!(out, "{name}.precision={}", m.precision);
            let _ = writeln!(out, "{name}.recall={}", m.recall);
            let _ = writeln!(out, "{name}.f={}", m.f);
        }
        if include_macro {
            let (p, r, f) = self.macro_average();
            let _ = writeln!(out, "Macro.precision={p}\nMacro.recall={r}\nMacro.f={f}");
        }
        out
    }
}
