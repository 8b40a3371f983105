use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{self, LstmParams, StepCache};
use super::tensor::{axpy, uniform_vec, Mat};
use super::NetworkError;
use crate::corpus::RelationLabel;
use crate::features::{EncodedInstance, SENTENCE_FEATURE_DIM};

pub const N_LABELS: usize = RelationLabel::COUNT;
const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lstm_hidden: usize,
    pub d_w: usize,
    pub d_p: usize,
    pub d_c: usize,
    pub d_pos: usize,
    pub p_max: usize,
    pub neg_samples: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub class_weighting: bool,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            lstm_hidden: 64,
            d_w: 40,
            d_p: 10,
            d_c: 10,
            d_pos: 5,
            p_max: 60,
            neg_samples: 20_000,
            learning_rate: 0.001,
            batch_size: 32,
            seed: 42,
            class_weighting: true,
            init_scale: 0.08,
        }
    }
}

impl TrainConfig {
    /// Per-token input width: word, POS, chunk and two position channels.
    pub fn input_size(&self) -> usize {
        self.d_w + self.d_p + self.d_c + 2 * self.d_pos
    }

    pub fn merge_size(&self) -> usize {
        2 * self.lstm_hidden + SENTENCE_FEATURE_DIM
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let positive = [
            ("epochs", self.epochs),
            ("lstm_hidden", self.lstm_hidden),
            ("d_w", self.d_w),
            ("d_p", self.d_p),
            ("d_c", self.d_c),
            ("d_pos", self.d_pos),
            ("p_max", self.p_max),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(NetworkError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NetworkError::Config("learning_rate must be positive".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(NetworkError::Config("init_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Vocabulary sizes (without the OOV row) for the three id features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSizes {
    pub words: usize,
    pub pos: usize,
    pub chunks: usize,
}

/// Lookup tables. Row 0 of the id tables is the OOV row; the position table
/// has `2 * p_max + 1` rows indexed by `offset + p_max` and is shared by the
/// treatment and problem channels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTables {
    pub word: Mat,
    pub pos: Mat,
    pub chunk: Mat,
    pub position: Mat,
}

/// All trainable tensors. Gradients use the same structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub tables: EmbeddingTables,
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    pub out_w: Mat,
    pub out_b: Vec<f64>,
}

/// `(name, group, (rows, cols), values)` of one tensor.
pub type TensorView<'a> = (String, ParamGroup, (usize, usize), &'a [f64]);

/// Parameter groups, used to report gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    Embedding,
    InputWeights,
    Recurrent,
    Bias,
    Output,
}

impl Params {
    pub fn zeros(config: &TrainConfig, sizes: TableSizes) -> Self {
        let input = config.input_size();
        Params {
            tables: EmbeddingTables {
                word: Mat::zeros(sizes.words + 1, config.d_w),
                pos: Mat::zeros(sizes.pos + 1, config.d_p),
                chunk: Mat::zeros(sizes.chunks + 1, config.d_c),
                position: Mat::zeros(2 * config.p_max + 1, config.d_pos),
            },
            fwd: LstmParams::zeros(input, config.lstm_hidden),
            bwd: LstmParams::zeros(input, config.lstm_hidden),
            out_w: Mat::zeros(N_LABELS, config.merge_size()),
            out_b: vec![0.0; N_LABELS],
        }
    }

    pub fn uniform(config: &TrainConfig, sizes: TableSizes, scale: f64, rng: &mut impl Rng) -> Self {
        let input = config.input_size();
        let tables = EmbeddingTables {
            word: Mat::uniform(sizes.words + 1, config.d_w, scale, rng),
            pos: Mat::uniform(sizes.pos + 1, config.d_p, scale, rng),
            chunk: Mat::uniform(sizes.chunks + 1, config.d_c, scale, rng),
            position: Mat::uniform(2 * config.p_max + 1, config.d_pos, scale, rng),
        };
        let fwd = LstmParams::uniform(input, config.lstm_hidden, scale, rng);
        let bwd = LstmParams::uniform(input, config.lstm_hidden, scale, rng);
        let out_w = Mat::uniform(N_LABELS, config.merge_size(), scale, rng);
        let out_b = uniform_vec(N_LABELS, scale, rng);
        Params {
            tables,
            fwd,
            bwd,
            out_w,
            out_b,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Every tensor in the declared serialization order: word, pos, chunk,
    /// position tables; forward then backward LSTM (gates input, forget,
    /// output, cell; each W, U, b); output weights and bias.
    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut out: Vec<TensorView<'_>> = Vec::new();
        let t = &self.tables;
        for (name, m) in [("word", &t.word), ("pos", &t.pos), ("chunk", &t.chunk), ("position", &t.position)] {
            out.push((format!("emb.{name}"), ParamGroup::Embedding, (m.rows, m.cols), &m.data));
        }
        for (dir, p) in [("fwd", &self.fwd), ("bwd", &self.bwd)] {
            for (gname, g) in ["input", "forget", "output", "cell"].iter().zip(p.gates()) {
                out.push((format!("{dir}.{gname}.w"), ParamGroup::InputWeights, (g.w.rows, g.w.cols), &g.w.data));
                out.push((format!("{dir}.{gname}.u"), ParamGroup::Recurrent, (g.u.rows, g.u.cols), &g.u.data));
                out.push((format!("{dir}.{gname}.b"), ParamGroup::Bias, (g.b.len(), 1), &g.b));
            }
        }
        out.push(("out.w".into(), ParamGroup::Output, (self.out_w.rows, self.out_w.cols), &self.out_w.data));
        out.push(("out.b".into(), ParamGroup::Output, (self.out_b.len(), 1), &self.out_b));
        out
    }

    /// Mutable views in the same order as [`Params::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        let t = &mut self.tables;
        out.push(&mut t.word.data);
        out.push(&mut t.pos.data);
        out.push(&mut t.chunk.data);
        out.push(&mut t.position.data);
        for p in [&mut self.fwd, &mut self.bwd] {
            for g in p.gates_mut() {
                out.push(&mut g.w.data);
                out.push(&mut g.u.data);
                out.push(&mut g.b);
            }
        }
        out.push(&mut self.out_w.data);
        out.push(&mut self.out_b);
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.3.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmModel {
    pub config: TrainConfig,
    pub params: Params,
}

impl BiLstmModel {
    /// Parameters drawn uniformly from `[-init_scale, init_scale]`.
    pub fn init(config: TrainConfig, sizes: TableSizes, rng: &mut impl Rng) -> Self {
        let params = Params::uniform(&config, sizes, config.init_scale, rng);
        BiLstmModel { config, params }
    }

    pub fn zeros(config: TrainConfig, sizes: TableSizes) -> Self {
        let params = Params::zeros(&config, sizes);
        BiLstmModel { config, params }
    }

    pub fn table_sizes(&self) -> TableSizes {
        let t = &self.params.tables;
        TableSizes {
            words: t.word.rows - 1,
            pos: t.pos.rows - 1,
            chunks: t.chunk.rows - 1,
        }
    }

    fn row_or_oov(table: &Mat, id: usize) -> usize {
        if id < table.rows {
            id
        } else {
            0
        }
    }

    fn position_row(&self, offset: i64) -> usize {
        let p = self.config.p_max as i64;
        (offset.clamp(-p, p) + p) as usize
    }

    /// Table rows used by token `t`, in concatenation order.
    fn rows_for(&self, enc: &EncodedInstance, t: usize) -> [usize; 5] {
        let tb = &self.params.tables;
        [
            Self::row_or_oov(&tb.word, enc.words[t]),
            Self::row_or_oov(&tb.pos, enc.pos[t]),
            Self::row_or_oov(&tb.chunk, enc.chunks[t]),
            self.position_row(enc.to_treatment[t]),
            self.position_row(enc.to_problem[t]),
        ]
    }
}

/// Per-token input vectors `[word | pos | chunk | pos_to_treatment |
/// pos_to_problem]`. Out-of-range ids use the OOV row and offsets are
/// clipped to `[-p_max, p_max]`.
pub fn embed(enc: &EncodedInstance, model: &BiLstmModel) -> Vec<Vec<f64>> {
    let tb = &model.params.tables;
    (0..enc.len())
        .map(|t| {
            let [w, p, c, pt, pp] = model.rows_for(enc, t);
            let mut x = Vec::with_capacity(model.config.input_size());
            x.extend_from_slice(tb.word.row(w));
            x.extend_from_slice(tb.pos.row(p));
            x.extend_from_slice(tb.chunk.row(c));
            x.extend_from_slice(tb.position.row(pt));
            x.extend_from_slice(tb.position.row(pp));
            x
        })
        .collect()
}

pub(crate) struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    fwd: Vec<StepCache>,
    bwd: Vec<StepCache>,
    merged: Vec<f64>,
    probs: [f64; N_LABELS],
}

fn bilstm_caches(inputs: &[Vec<f64>], model: &BiLstmModel) -> (Vec<StepCache>, Vec<StepCache>) {
    let fwd = lstm::run(&model.params.fwd, inputs.iter());
    let bwd = lstm::run(&model.params.bwd, inputs.iter().rev());
    (fwd, bwd)
}

/// `[h_fwd_final | h_bwd_final]`: the forward direction reads left to right,
/// the backward direction right to left, both from zero state.
pub fn bilstm_forward(inputs: &[Vec<f64>], model: &BiLstmModel) -> Result<Vec<f64>, NetworkError> {
    if inputs.is_empty() {
        return Err(NetworkError::EmptySequence);
    }
    let input = model.config.input_size();
    if let Some(x) = inputs.iter().find(|x| x.len() != input) {
        return Err(NetworkError::Dimension(format!(
            "expected input width {input}, got {}",
            x.len()
        )));
    }
    let (fwd, bwd) = bilstm_caches(inputs, model);
    let mut out = fwd.last().expect("non-empty").h.clone();
    out.extend_from_slice(&bwd.last().expect("non-empty").h);
    Ok(out)
}

pub fn softmax(z: &[f64; N_LABELS]) -> [f64; N_LABELS] {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; N_LABELS];
    let mut sum = 0.0;
    for (pk, zk) in p.iter_mut().zip(z) {
        *pk = (zk - max).exp();
        sum += *pk;
    }
    p.iter_mut().for_each(|v| *v /= sum);
    p
}

fn check_encoding(enc: &EncodedInstance) -> Result<(), NetworkError> {
    let n = enc.len();
    if n == 0 {
        return Err(NetworkError::EmptySequence);
    }
    if [enc.pos.len(), enc.chunks.len(), enc.to_treatment.len(), enc.to_problem.len()]
        .iter()
        .any(|&l| l != n)
    {
        return Err(NetworkError::Dimension("encoded id rows differ in length".into()));
    }
    Ok(())
}

pub(crate) fn forward_cached(enc: &EncodedInstance, model: &BiLstmModel) -> Result<ForwardCache, NetworkError> {
    check_encoding(enc)?;
    let inputs = embed(enc, model);
    let (fwd, bwd) = bilstm_caches(&inputs, model);
    let mut merged = fwd.last().expect("non-empty").h.clone();
    merged.extend_from_slice(&bwd.last().expect("non-empty").h);
    merged.extend(enc.sentence.to_vec());
    let mut z = [0.0; N_LABELS];
    z.copy_from_slice(&model.params.out_b);
    model.params.out_w.matvec_acc(&merged, &mut z);
    Ok(ForwardCache {
        inputs,
        fwd,
        bwd,
        merged,
        probs: softmax(&z),
    })
}

/// Class probabilities in [`RelationLabel::ALL`] order.
pub fn forward(enc: &EncodedInstance, model: &BiLstmModel) -> Result<[f64; N_LABELS], NetworkError> {
    Ok(forward_cached(enc, model)?.probs)
}

/// Cross-entropy `-ln p[label]`, with `p[label]` clamped at 1e-12.
pub fn loss(probs: &[f64; N_LABELS], label: RelationLabel) -> f64 {
    -probs[label.index()].max(LOG_CLAMP).ln()
}

/// Adds `weight * d loss / d params` for one instance into `grad` and
/// returns the unweighted loss.
pub(crate) fn accumulate_gradients(
    enc: &EncodedInstance,
    label: RelationLabel,
    weight: f64,
    model: &BiLstmModel,
    grad: &mut Params,
) -> Result<f64, NetworkError> {
    let cache = forward_cached(enc, model)?;
    let l = loss(&cache.probs, label);
    let p = &model.params;
    let hidden = model.config.lstm_hidden;

    // Softmax + cross-entropy: dz = p - onehot. The clamp has zero slope.
    let mut dz = cache.probs;
    if cache.probs[label.index()] >= LOG_CLAMP {
        dz[label.index()] -= 1.0;
    } else {
        dz = [0.0; N_LABELS];
    }
    dz.iter_mut().for_each(|v| *v *= weight);

    grad.out_w.outer_acc(&dz, &cache.merged);
    axpy(1.0, &dz, &mut grad.out_b);
    let mut dmerged = vec![0.0; cache.merged.len()];
    p.out_w.matvec_t_acc(&dz, &mut dmerged);

    let dx_fwd = lstm::backward(&p.fwd, cache.inputs.iter(), &cache.fwd, &dmerged[..hidden], &mut grad.fwd);
    let dx_bwd = lstm::backward(
        &p.bwd,
        cache.inputs.iter().rev(),
        &cache.bwd,
        &dmerged[hidden..2 * hidden],
        &mut grad.bwd,
    );

    let n = enc.len();
    let cfg = &model.config;
    let bounds = [
        0,
        cfg.d_w,
        cfg.d_w + cfg.d_p,
        cfg.d_w + cfg.d_p + cfg.d_c,
        cfg.d_w + cfg.d_p + cfg.d_c + cfg.d_pos,
        cfg.input_size(),
    ];
    for t in 0..n {
        let mut dx = dx_fwd[t].clone();
        axpy(1.0, &dx_bwd[n - 1 - t], &mut dx);
        let rows = model.rows_for(enc, t);
        let g = &mut grad.tables;
        let targets: [&mut Mat; 4] = [&mut g.word, &mut g.pos, &mut g.chunk, &mut g.position];
        let [word, pos, chunk, position] = targets;
        axpy(1.0, &dx[bounds[0]..bounds[1]], word.row_mut(rows[0]));
        axpy(1.0, &dx[bounds[1]..bounds[2]], pos.row_mut(rows[1]));
        axpy(1.0, &dx[bounds[2]..bounds[3]], chunk.row_mut(rows[2]));
        axpy(1.0, &dx[bounds[3]..bounds[4]], position.row_mut(rows[3]));
        axpy(1.0, &dx[bounds[4]..bounds[5]], position.row_mut(rows[4]));
    }
    Ok(l)
}

/// Exact gradient of `loss(forward(enc), label)` with respect to every
/// parameter, by backpropagation through time.
pub fn backward(enc: &EncodedInstance, label: RelationLabel, model: &BiLstmModel) -> Result<Params, NetworkError> {
    let mut grad = model.params.zeros_like();
    accumulate_gradients(enc, label, 1.0, model, &mut grad)?;
    Ok(grad)
}

/// Argmax over the probabilities; ties go to the lowest label index.
pub fn argmax_label(probs: &[f64; N_LABELS]) -> RelationLabel {
    let mut best = 0;
    for k in 1..N_LABELS {
        if probs[k] > probs[best] {
            best = k;
        }
    }
    RelationLabel::ALL[best]
}

pub fn predict(model: &BiLstmModel, enc: &EncodedInstance) -> Result<(RelationLabel, [f64; N_LABELS]), NetworkError> {
    let probs = forward(enc, model)?;
    Ok((argmax_label(&probs), probs))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::features::SentenceLevelFeatures;

    fn small_config() -> TrainConfig {
        TrainConfig {
            lstm_hidden: 3,
            d_w: 4,
            d_p: 2,
            d_c: 2,
            d_pos: 2,
            p_max: 5,
            ..Default::default()
        }
    }

    fn sizes() -> TableSizes {
        TableSizes {
            words: 6,
            pos: 3,
            chunks: 2,
        }
    }

    fn encoded(words: Vec<usize>) -> EncodedInstance {
        let n = words.len();
        EncodedInstance {
            pos: vec![1; n],
            chunks: vec![1; n],
            to_treatment: (0..n as i64).collect(),
            to_problem: (0..n as i64).map(|i| i - n as i64 + 1).collect(),
            words,
            sentence: SentenceLevelFeatures::zeros(),
            label: RelationLabel::TrAP,
        }
    }

    #[test]
    fn embed_dims_oov_and_clip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = TrainConfig::default();
        assert_eq!(cfg.input_size(), 70);
        let model = BiLstmModel::init(cfg, sizes(), &mut rng);
        let mut enc = encoded(vec![0, 99]);
        enc.pos = vec![0, 0];
        enc.chunks = vec![0, 0];
        enc.to_treatment = vec![1000, 0];
        enc.to_problem = vec![-1000, 60];
        let x = embed(&enc, &model);
        assert_eq!(x[0].len(), 70);
        let t = &model.params.tables;
        let oov: Vec<f64> = [t.word.row(0), t.pos.row(0), t.chunk.row(0)].concat();
        assert_eq!(&x[0][..60], oov.as_slice());
        // id 99 is past the table and falls back to the OOV row
        assert_eq!(&x[1][..40], t.word.row(0));
        assert_eq!(&x[0][60..65], t.position.row(120));
        assert_eq!(&x[0][65..70], t.position.row(0));
        assert_eq!(&x[1][65..70], t.position.row(120));
    }

    #[test]
    fn bilstm_single_step_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = BiLstmModel::init(small_config(), sizes(), &mut rng);
        let x = vec![vec![0.3; model.config.input_size()]];
        let out = bilstm_forward(&x, &model).unwrap();
        let zero = vec![0.0; 3];
        let (hf, _) = lstm::lstm_cell(&x[0], &zero, &zero, &model.params.fwd).unwrap();
        let (hb, _) = lstm::lstm_cell(&x[0], &zero, &zero, &model.params.bwd).unwrap();
        assert_eq!(out, [hf, hb].concat());

        let zeros = BiLstmModel::zeros(small_config(), sizes());
        let out = bilstm_forward(&[x[0].clone(), x[0].clone()], &zeros).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        assert!(matches!(bilstm_forward(&[], &model), Err(NetworkError::EmptySequence)));
    }

    #[test]
    fn palindrome_with_tied_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut model = BiLstmModel::init(small_config(), sizes(), &mut rng);
        model.params.bwd = model.params.fwd.clone();
        let width = model.config.input_size();
        let a: Vec<f64> = (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let seq = vec![a.clone(), b, a];
        let out = bilstm_forward(&seq, &model).unwrap();
        assert_eq!(out[..3], out[3..]);
    }

    #[test]
    fn forward_uniform_and_dominant() {
        let model = BiLstmModel::zeros(small_config(), sizes());
        let p = forward(&encoded(vec![1, 2, 3]), &model).unwrap();
        for v in p {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
        assert_eq!(argmax_label(&p), RelationLabel::TrAP);
        assert!((loss(&p, RelationLabel::TrWP) - 6f64.ln()).abs() < 1e-12);

        let mut model = model;
        model.params.out_b[0] = 10.0;
        let (label, p) = predict(&model, &encoded(vec![1])).unwrap();
        assert_eq!(label, RelationLabel::TrAP);
        assert!(p[0] > 0.99);
    }

    #[test]
    fn loss_values() {
        let mut p = [0.0; N_LABELS];
        p[2] = 1.0;
        assert_eq!(loss(&p, RelationLabel::TrIP), 0.0);
        let p = [0.25, 0.25, 0.25, 0.25, 0.0, 0.0];
        assert!((loss(&p, RelationLabel::TrAP) - 4f64.ln()).abs() < 1e-12);
        assert!((loss(&p, RelationLabel::TrWP) - 1e-12f64.ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn predict_peaked_on_null() {
        let mut model = BiLstmModel::zeros(small_config(), sizes());
        model.params.out_b[5] = 3.0;
        assert_eq!(predict(&model, &encoded(vec![1, 2])).unwrap().0, RelationLabel::Null);
        // A shared shift of every logit leaves the argmax unchanged.
        model.params.out_b.iter_mut().for_each(|b| *b += 123.0);
        assert_eq!(predict(&model, &encoded(vec![1, 2])).unwrap().0, RelationLabel::Null);
    }

    #[test]
    fn untouched_rows_have_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = BiLstmModel::init(small_config(), sizes(), &mut rng);
        let enc = encoded(vec![2, 4]);
        let g = backward(&enc, RelationLabel::TrCP, &model).unwrap();
        for r in [0, 1, 3, 5, 6] {
            assert!(g.tables.word.row(r).iter().all(|&v| v == 0.0), "row {r}");
        }
        assert!(g.tables.word.row(2).iter().any(|&v| v != 0.0));
        assert!(g.tables.pos.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_is_linear_in_instance_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let model = BiLstmModel::init(small_config(), sizes(), &mut rng);
        let enc = encoded(vec![1, 3, 5]);
        let once = backward(&enc, RelationLabel::TrNAP, &model).unwrap();
        let mut twice = model.params.zeros_like();
        accumulate_gradients(&enc, RelationLabel::TrNAP, 1.0, &model, &mut twice).unwrap();
        accumulate_gradients(&enc, RelationLabel::TrNAP, 1.0, &model, &mut twice).unwrap();
        for ((_, _, _, a), (_, _, _, b)) in once.tensors().iter().zip(twice.tensors().iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1e-12));
            }
        }
    }
}
