//! Standard LSTM cell (input, forget and output gates, tanh candidate, no
//! peepholes) with backpropagation through time.

use rand::Rng;

use super::tensor::{sigmoid, uniform_vec, Mat};
use super::NetworkError;

/// Parameters of one gate: `pre = W x + U h_prev + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub w: Mat,
    pub u: Mat,
    pub b: Vec<f64>,
}

impl GateParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        GateParams {
            w: Mat::zeros(hidden, input),
            u: Mat::zeros(hidden, hidden),
            b: vec![0.0; hidden],
        }
    }

    fn uniform(input: usize, hidden: usize, scale: f64, rng: &mut impl Rng) -> Self {
        GateParams {
            w: Mat::uniform(hidden, input, scale, rng),
            u: Mat::uniform(hidden, hidden, scale, rng),
            b: uniform_vec(hidden, scale, rng),
        }
    }

    fn pre_activation(&self, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
        let mut out = self.b.clone();
        self.w.matvec_acc(x, &mut out);
        self.u.matvec_acc(h_prev, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input: GateParams,
    pub forget: GateParams,
    pub output: GateParams,
    pub cell: GateParams,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            input: GateParams::zeros(input, hidden),
            forget: GateParams::zeros(input, hidden),
            output: GateParams::zeros(input, hidden),
            cell: GateParams::zeros(input, hidden),
        }
    }

    pub fn uniform(input: usize, hidden: usize, scale: f64, rng: &mut impl Rng) -> Self {
        LstmParams {
            input: GateParams::uniform(input, hidden, scale, rng),
            forget: GateParams::uniform(input, hidden, scale, rng),
            output: GateParams::uniform(input, hidden, scale, rng),
            cell: GateParams::uniform(input, hidden, scale, rng),
        }
    }

    pub fn input_size(&self) -> usize {
        self.input.w.cols
    }

    pub fn hidden_size(&self) -> usize {
        self.input.w.rows
    }

    /// Gates in the fixed order input, forget, output, cell.
    pub fn gates(&self) -> [&GateParams; 4] {
        [&self.input, &self.forget, &self.output, &self.cell]
    }

    pub fn gates_mut(&mut self) -> [&mut GateParams; 4] {
        [&mut self.input, &mut self.forget, &mut self.output, &mut self.cell]
    }

    fn check(&self, x: usize, h: usize, c: usize) -> Result<(), NetworkError> {
        let (input, hidden) = (self.input_size(), self.hidden_size());
        if x != input || h != hidden || c != hidden {
            return Err(NetworkError::Dimension(format!(
                "lstm expects input {input} and hidden {hidden}, got x={x}, h={h}, c={c}"
            )));
        }
        Ok(())
    }
}

/// Activations of one time step kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

pub(crate) fn step(x: &[f64], h_prev: &[f64], c_prev: &[f64], p: &LstmParams) -> StepCache {
    let mut i = p.input.pre_activation(x, h_prev);
    let mut f = p.forget.pre_activation(x, h_prev);
    let mut o = p.output.pre_activation(x, h_prev);
    let mut g = p.cell.pre_activation(x, h_prev);
    i.iter_mut().for_each(|v| *v = sigmoid(*v));
    f.iter_mut().for_each(|v| *v = sigmoid(*v));
    o.iter_mut().for_each(|v| *v = sigmoid(*v));
    g.iter_mut().for_each(|v| *v = v.tanh());
    let c: Vec<f64> = (0..c_prev.len())
        .map(|k| f[k] * c_prev[k] + i[k] * g[k])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(a, b)| a * b).collect();
    StepCache {
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        o,
        g,
        tanh_c,
        h,
        c,
    }
}

/// One LSTM step; returns the new `(h, c)`.
pub fn lstm_cell(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &LstmParams,
) -> Result<(Vec<f64>, Vec<f64>), NetworkError> {
    p.check(x.len(), h_prev.len(), c_prev.len())?;
    let s = step(x, h_prev, c_prev, p);
    Ok((s.h, s.c))
}

/// Runs the recurrence over `inputs` in the given order from zero state.
/// Caches are returned in processing order.
pub(crate) fn run<'a>(p: &LstmParams, inputs: impl Iterator<Item = &'a Vec<f64>>) -> Vec<StepCache> {
    let hidden = p.hidden_size();
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut caches = Vec::new();
    for x in inputs {
        let s = step(x, &h, &c, p);
        h.clone_from(&s.h);
        c.clone_from(&s.c);
        caches.push(s);
    }
    caches
}

/// Backpropagates `dh_last` (gradient w.r.t. the final hidden state) through
/// the cached steps. Parameter gradients accumulate into `grad`; the input
/// gradient of each step is returned in processing order.
pub(crate) fn backward<'a>(
    p: &LstmParams,
    inputs: impl DoubleEndedIterator<Item = &'a Vec<f64>>,
    caches: &[StepCache],
    dh_last: &[f64],
    grad: &mut LstmParams,
) -> Vec<Vec<f64>> {
    let hidden = p.hidden_size();
    let inputs: Vec<&Vec<f64>> = inputs.collect();
    let mut dh = dh_last.to_vec();
    let mut dc = vec![0.0; hidden];
    let mut dxs = vec![Vec::new(); caches.len()];
    for t in (0..caches.len()).rev() {
        let s = &caches[t];
        let x = inputs[t];
        let mut da_i = vec![0.0; hidden];
        let mut da_f = vec![0.0; hidden];
        let mut da_o = vec![0.0; hidden];
        let mut da_g = vec![0.0; hidden];
        for k in 0..hidden {
            let d_o = dh[k] * s.tanh_c[k];
            let dck = dc[k] + dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
            let d_i = dck * s.g[k];
            let d_g = dck * s.i[k];
            let d_f = dck * s.c_prev[k];
            dc[k] = dck * s.f[k];
            da_i[k] = d_i * s.i[k] * (1.0 - s.i[k]);
            da_f[k] = d_f * s.f[k] * (1.0 - s.f[k]);
            da_o[k] = d_o * s.o[k] * (1.0 - s.o[k]);
            da_g[k] = d_g * (1.0 - s.g[k] * s.g[k]);
        }
        let mut dx = vec![0.0; x.len()];
        let mut dh_prev = vec![0.0; hidden];
        let das = [&da_i, &da_f, &da_o, &da_g];
        for ((gp, gg), da) in p.gates().into_iter().zip(grad.gates_mut()).zip(das) {
            gg.w.outer_acc(da, x);
            gg.u.outer_acc(da, &s.h_prev);
            for (b, d) in gg.b.iter_mut().zip(da.iter()) {
                *b += d;
            }
            gp.w.matvec_t_acc(da, &mut dx);
            gp.u.matvec_t_acc(da, &mut dh_prev);
        }
        dxs[t] = dx;
        dh = dh_prev;
    }
    dxs
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn zero_params_zero_state() {
        let p = LstmParams::zeros(3, 2);
        let (h, c) = lstm_cell(&[1.0, -2.0, 0.5], &[0.0; 2], &[0.0; 2], &p).unwrap();
        assert_eq!(h, [0.0, 0.0]);
        assert_eq!(c, [0.0, 0.0]);
    }

    #[test]
    fn zero_params_carry_cell() {
        let p = LstmParams::zeros(2, 3);
        let c_prev = [1.0, -2.0, 0.3];
        let (h, c) = lstm_cell(&[0.4, 0.1], &[0.7, 0.1, 0.2], &c_prev, &p).unwrap();
        for k in 0..3 {
            assert!((c[k] - 0.5 * c_prev[k]).abs() < 1e-15);
            assert!((h[k] - 0.5 * (0.5 * c_prev[k]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_scalar_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n_in, n_h) = (4, 3);
        let p = LstmParams::uniform(n_in, n_h, 0.7, &mut rng);
        let x: Vec<f64> = (0..n_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h0: Vec<f64> = (0..n_h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c0: Vec<f64> = (0..n_h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (h, c) = lstm_cell(&x, &h0, &c0, &p).unwrap();

        // Gate by gate, one unit at a time.
        let gate = |g: &GateParams, k: usize| {
            let mut z = g.b[k];
            for j in 0..n_in {
                z += g.w.get(k, j) * x[j];
            }
            for j in 0..n_h {
                z += g.u.get(k, j) * h0[j];
            }
            z
        };
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        for k in 0..n_h {
            let i = sig(gate(&p.input, k));
            let f = sig(gate(&p.forget, k));
            let o = sig(gate(&p.output, k));
            let g = gate(&p.cell, k).tanh();
            let ck = f * c0[k] + i * g;
            let hk = o * ck.tanh();
            assert!((c[k] - ck).abs() < 1e-14);
            assert!((h[k] - hk).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let p = LstmParams::zeros(3, 2);
        assert!(matches!(
            lstm_cell(&[1.0], &[0.0; 2], &[0.0; 2], &p),
            Err(NetworkError::Dimension(_))
        ));
        assert!(lstm_cell(&[1.0; 3], &[0.0; 3], &[0.0; 2], &p).is_err());
    }
}
