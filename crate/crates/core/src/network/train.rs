use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{accumulate_gradients, BiLstmModel, Params, TableSizes, TrainConfig, N_LABELS};
use super::NetworkError;
use crate::corpus::RelationLabel;
use crate::features::EncodedInstance;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adaptive-moment optimizer state, one moment pair per tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &Params, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.3.len()]).collect();
        Adam {
            lr,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, params: &mut Params, grad: &Params) {
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step);
        let bc2 = 1.0 - BETA2.powi(self.step);
        let grads = grad.tensors();
        for (((p, (_, _, _, g)), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * gk;
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

/// `n / (k * count)` for each of the `k` labels present; absent labels get 0.
pub fn class_weights(instances: &[EncodedInstance]) -> [f64; N_LABELS] {
    let mut counts = [0usize; N_LABELS];
    for e in instances {
        counts[e.label.index()] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count().max(1);
    let n = instances.len() as f64;
    let mut w = [0.0; N_LABELS];
    for (wk, &ck) in w.iter_mut().zip(&counts) {
        if ck > 0 {
            *wk = n / (present as f64 * ck as f64);
        }
    }
    w
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: BiLstmModel,
    /// Mean (class-weighted) training loss of each epoch.
    pub loss_trace: Vec<f64>,
}

/// Mini-batch training with Adam. Initialization, per-epoch shuffling and
/// therefore the whole run are determined by `config.seed`.
pub fn train(
    instances: &[EncodedInstance],
    config: &TrainConfig,
    sizes: TableSizes,
) -> Result<TrainOutcome, NetworkError> {
    config.validate()?;
    let model = {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        BiLstmModel::init(config.clone(), sizes, &mut rng)
    };
    continue_training(model, instances, config)
}

/// Trains an already initialized model (for example one with pretrained
/// word vectors loaded).
pub fn continue_training(
    mut model: BiLstmModel,
    instances: &[EncodedInstance],
    config: &TrainConfig,
) -> Result<TrainOutcome, NetworkError> {
    config.validate()?;
    if instances.is_empty() {
        return Err(NetworkError::EmptyTrainingSet);
    }
    // Separate stream from initialization so both stay reproducible.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
    let weights = if config.class_weighting {
        class_weights(instances)
    } else {
        [1.0; N_LABELS]
    };
    let mut adam = Adam::new(&model.params, config.learning_rate);
    let mut grad = model.params.zeros_like();
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            for t in grad.tensors_mut() {
                t.fill(0.0);
            }
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let enc = &instances[i];
                let w = weights[enc.label.index()];
                let l = accumulate_gradients(enc, enc.label, w * scale, &model, &mut grad)?;
                if !l.is_finite() {
                    return Err(NetworkError::NonFinite { epoch, instance: i });
                }
                total += w * l;
            }
            adam.update(&mut model.params, &grad);
        }
        let mean = total / instances.len() as f64;
        log::debug!("epoch {} loss {mean:.6}", epoch + 1);
        loss_trace.push(mean);
    }
    Ok(TrainOutcome { model, loss_trace })
}

/// Fraction of instances whose argmax prediction equals their label.
pub fn accuracy(model: &BiLstmModel, instances: &[EncodedInstance]) -> Result<f64, NetworkError> {
    if instances.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for e in instances {
        let (label, _): (RelationLabel, _) = super::model::predict(model, e)?;
        if label == e.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / instances.len() as f64)
}
