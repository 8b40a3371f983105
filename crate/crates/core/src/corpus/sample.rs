use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::RelationInstance;

/// Keeps every positive instance and `min(n, available)` `Null` instances
/// drawn uniformly without replacement. Input order is preserved.
pub fn sample_negatives(instances: &[RelationInstance], n: usize, seed: u64) -> Vec<RelationInstance> {
    let nulls: Vec<usize> = instances
        .iter()
        .enumerate()
        .filter(|(_, inst)| !inst.label.is_positive())
        .map(|(i, _)| i)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amount = n.min(nulls.len());
    let mut keep = vec![false; instances.len()];
    for j in rand::seq::index::sample(&mut rng, nulls.len(), amount) {
        keep[nulls[j]] = true;
    }
    instances
        .iter()
        .enumerate()
        .filter(|(i, inst)| inst.label.is_positive() || keep[*i])
        .map(|(_, inst)| inst.clone())
        .collect()
}
