//! Reusable layers. Each layer only stores [`ParamId`]s; values live in a
//! [`ParamStore`] so a whole model checkpoints as one store.

use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Var};
use crate::params::{Init, ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, g: &mut Graph<'_>, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Tanh => g.tanh(x),
            Activation::Relu => g.relu(x),
            Activation::Sigmoid => g.sigmoid(x),
        }
    }
}

/// `x · W + b`, applied row-wise.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, input_dim: usize, output_dim: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), init.glorot(input_dim, output_dim));
        let bias = store.add(format!("{name}.bias"), init.zeros(1, output_dim));
        Self { weight, bias, input_dim, output_dim }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let xw = g.matmul(x, w);
        g.add_row(xw, b)
    }
}

/// Stack of linear layers with a shared hidden activation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeedForward {
    pub layers: Vec<Linear>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl FeedForward {
    /// `dims` lists every width from input to output, so `[50, 32, 16]`
    /// builds two layers.
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        dims: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Self {
        assert!(dims.len() >= 2, "feed-forward needs input and output widths");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, init, &format!("{name}.{i}"), w[0], w[1]))
            .collect();
        Self { layers, hidden_activation, output_activation }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.output_dim).unwrap_or(0)
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, h);
            let act = if i == last { self.output_activation } else { self.hidden_activation };
            h = act.apply(g, h);
        }
        h
    }
}

/// Single-direction LSTM over the rows of a `T × input_dim` matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lstm {
    pub input_weight: ParamId,
    pub recurrent_weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, input_dim: usize, hidden_dim: usize) -> Self {
        let input_weight = store.add(format!("{name}.w_x"), init.glorot(input_dim, 4 * hidden_dim));
        let recurrent_weight = store.add(format!("{name}.w_h"), init.glorot(hidden_dim, 4 * hidden_dim));
        // forget-gate bias starts at 1
        let mut b = Tensor::zeros(1, 4 * hidden_dim);
        for j in hidden_dim..2 * hidden_dim {
            b.set(0, j, 1.0);
        }
        let bias = store.add(format!("{name}.bias"), b);
        Self { input_weight, recurrent_weight, bias, input_dim, hidden_dim }
    }

    /// Hidden states, one row per input row, in input order. With
    /// `reverse` the sequence is consumed back to front.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var, reverse: bool) -> Var {
        let wx = g.param(self.input_weight);
        let wh = g.param(self.recurrent_weight);
        let b = g.param(self.bias);
        let projected = g.matmul(x, wx);
        let projected = g.add_row(projected, b);
        g.lstm(projected, wh, reverse)
    }

    /// Same recurrence spelled out with elementary ops. Slow; kept as the
    /// reference the fused op is tested against.
    pub fn forward_unfused(&self, g: &mut Graph<'_>, x: Var, reverse: bool) -> Var {
        let steps = g.shape(x).0;
        assert!(steps > 0, "LSTM over an empty sequence");
        let h_dim = self.hidden_dim;
        let wx = g.param(self.input_weight);
        let wh = g.param(self.recurrent_weight);
        let b = g.param(self.bias);
        let projected = g.matmul(x, wx);
        let projected = g.add_row(projected, b);

        let mut h = g.input(Tensor::zeros(1, h_dim));
        let mut c = g.input(Tensor::zeros(1, h_dim));
        let mut outputs = vec![h; steps];
        let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
        for (n, &t) in order.iter().enumerate() {
            let xt = g.slice_rows(projected, t, 1);
            let z = if n == 0 {
                xt
            } else {
                let hz = g.matmul(h, wh);
                g.add(xt, hz)
            };
            let zi = g.slice_cols(z, 0, h_dim);
            let zf = g.slice_cols(z, h_dim, h_dim);
            let zg = g.slice_cols(z, 2 * h_dim, h_dim);
            let zo = g.slice_cols(z, 3 * h_dim, h_dim);
            let i_gate = g.sigmoid(zi);
            let f_gate = g.sigmoid(zf);
            let g_gate = g.tanh(zg);
            let o_gate = g.sigmoid(zo);
            let ig = g.mul(i_gate, g_gate);
            c = if n == 0 {
                ig
            } else {
                let fc = g.mul(f_gate, c);
                g.add(fc, ig)
            };
            let tc = g.tanh(c);
            h = g.mul(o_gate, tc);
            outputs[t] = h;
        }
        g.concat_rows(&outputs)
    }
}

/// Forward and backward LSTMs with concatenated outputs (`T × 2H`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

impl BiLstm {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            forward: Lstm::new(store, init, &format!("{name}.fw"), input_dim, hidden_dim),
            backward: Lstm::new(store, init, &format!("{name}.bw"), input_dim, hidden_dim),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden_dim
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let f = self.forward.forward(g, x, false);
        let b = self.backward.forward(g, x, true);
        g.concat_cols(&[f, b])
    }
}

/// Scaled dot-product attention: `softmax(Q·Kᵀ / √d) · V`.
pub fn attention(g: &mut Graph<'_>, queries: Var, keys: Var, values: Var) -> Var {
    let d = g.shape(queries).1 as f64;
    let scores = g.matmul_t(queries, keys);
    let scores = g.scale(scores, 1.0 / d.sqrt());
    let weights = g.softmax_rows(scores);
    g.matmul(weights, values)
}

/// Projected self/cross attention block with one head.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttentionBlock {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub dim: usize,
}

impl AttentionBlock {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        query_dim: usize,
        key_dim: usize,
        dim: usize,
    ) -> Self {
        Self {
            query: store.add(format!("{name}.q"), init.glorot(query_dim, dim)),
            key: store.add(format!("{name}.k"), init.glorot(key_dim, dim)),
            value: store.add(format!("{name}.v"), init.glorot(key_dim, dim)),
            dim,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, from: Var, to: Var) -> Var {
        let wq = g.param(self.query);
        let wk = g.param(self.key);
        let wv = g.param(self.value);
        let q = g.matmul(from, wq);
        let k = g.matmul(to, wk);
        let v = g.matmul(to, wv);
        attention(g, q, k, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;

    #[test]
    fn bilstm_gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let mut init = Init::new(3);
        let lstm = BiLstm::new(&mut store, &mut init, "enc", 3, 2);
        let head = Linear::new(&mut store, &mut init, "head", 4, 1);
        let x = Tensor::from_vec(4, 3, vec![0.1, -0.3, 0.5, 0.9, 0.2, -0.1, -0.4, 0.7, 0.3, 0.05, -0.6, 0.2]);
        let report = check_gradients(&store, 1e-6, |g| {
            let xi = g.input(x.clone());
            let h = lstm.forward(g, xi);
            let y = head.forward(g, h);
            let y = g.tanh(y);
            g.sum(y)
        });
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }

    #[test]
    fn fused_lstm_matches_unfused_reference() {
        let mut store = ParamStore::new();
        let mut init = Init::new(11);
        let lstm = Lstm::new(&mut store, &mut init, "l", 3, 4);
        let x = Tensor::from_vec(5, 3, (0..15).map(|i| ((i * 7 % 11) as f64 - 5.0) / 6.0).collect());
        let w = Tensor::from_vec(5, 4, (0..20).map(|i| ((i * 3 % 7) as f64 - 3.0) / 4.0).collect());
        for reverse in [false, true] {
            let run = |fused: bool| {
                let mut g = Graph::with_params(&store);
                let xi = g.input(x.clone());
                let h = if fused { lstm.forward(&mut g, xi, reverse) } else { lstm.forward_unfused(&mut g, xi, reverse) };
                let wi = g.input(w.clone());
                let y = g.mul(h, wi);
                let y = g.sum(y);
                let grads = g.backward(y);
                (g.value(h).clone(), g.param_grads(&grads), grads.wrt(xi).unwrap().clone())
            };
            let (hf, gf, xf) = run(true);
            let (hu, gu, xu) = run(false);
            for (a, b) in hf.data().iter().zip(hu.data()) {
                assert!((a - b).abs() < 1e-12);
            }
            for (ta, tb) in gf.iter().zip(&gu).chain(std::iter::once((&xf, &xu))) {
                for (a, b) in ta.data().iter().zip(tb.data()) {
                    assert!((a - b).abs() < 1e-10, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn attention_block_gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let mut init = Init::new(5);
        let att = AttentionBlock::new(&mut store, &mut init, "att", 3, 2, 4);
        let a = Tensor::from_vec(2, 3, vec![0.2, -0.1, 0.4, 0.3, 0.8, -0.5]);
        let b = Tensor::from_vec(3, 2, vec![0.5, 0.1, -0.3, 0.7, 0.2, 0.2]);
        let report = check_gradients(&store, 1e-6, |g| {
            let ai = g.input(a.clone());
            let bi = g.input(b.clone());
            let o = att.forward(g, ai, bi);
            let o = g.square(o);
            g.sum(o)
        });
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }
}
