//! Merging network predictions with rule predictions.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{InstanceKey, RelationInstance, RelationLabel};

/// One label per candidate pair.
pub type PredictionSet = BTreeMap<InstanceKey, RelationLabel>;

/// Labels of `instances` keyed by instance key (later duplicates win).
pub fn prediction_set<'a>(instances: impl IntoIterator<Item = &'a RelationInstance>) -> PredictionSet {
    instances.into_iter().map(|i| (i.key(), i.label)).collect()
}

/// Which rule labels are ignored when merging. `Null` is always ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergePolicy {
    pub excluded: BTreeSet<RelationLabel>,
}

impl Default for MergePolicy {
    /// Rule TrAP output is too imprecise to override the network.
    fn default() -> Self {
        MergePolicy {
            excluded: BTreeSet::from([RelationLabel::TrAP]),
        }
    }
}

impl MergePolicy {
    pub fn keep_all() -> Self {
        MergePolicy {
            excluded: BTreeSet::new(),
        }
    }

    pub fn accepts(&self, label: RelationLabel) -> bool {
        label.is_positive() && !self.excluded.contains(&label)
    }
}

/// Starts from the network labels and lets every accepted rule label
/// overwrite (or insert) its key.
pub fn merge_predictions(nn: &PredictionSet, rules: &PredictionSet, policy: &MergePolicy) -> PredictionSet {
    let mut out = nn.clone();
    for (k, &label) in rules {
        if policy.accepts(label) {
            out.insert(k.clone(), label);
        }
    }
    out
}
