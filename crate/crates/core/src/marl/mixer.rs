use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{DenseNet, ForwardCache};

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

fn abs_grad(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Monotonic mixer: `Q_tot = elu(Q·|W1(s)| + b1(s)) · |w2(s)| + V(s)`.
///
/// `W1` and `w2` come from hypernetworks with one hidden layer, `b1` from a
/// linear map of the state and `V` from a two-layer network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingNet {
    n_agents: usize,
    state_dim: usize,
    embed: usize,
    hyper_w1: DenseNet,
    hyper_b1: DenseNet,
    hyper_w2: DenseNet,
    hyper_v: DenseNet,
}

/// Intermediate values of a batched mixer forward pass.
#[derive(Debug, Clone)]
pub struct MixerCache {
    qs: Array2<f64>,
    w1_raw: Array2<f64>,
    w2_raw: Array2<f64>,
    pre: Array2<f64>,
    hidden: Array2<f64>,
    c_w1: ForwardCache,
    c_b1: ForwardCache,
    c_w2: ForwardCache,
    c_v: ForwardCache,
}

impl MixingNet {
    pub fn new(n_agents: usize, state_dim: usize, embed: usize, hyper_hidden: usize, rng: &mut impl Rng) -> Self {
        MixingNet {
            n_agents,
            state_dim,
            embed,
            hyper_w1: DenseNet::new(&[state_dim, hyper_hidden, n_agents * embed], rng),
            hyper_b1: DenseNet::new(&[state_dim, embed], rng),
            hyper_w2: DenseNet::new(&[state_dim, hyper_hidden, embed], rng),
            hyper_v: DenseNet::new(&[state_dim, embed, 1], rng),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn embed(&self) -> usize {
        self.embed
    }

    pub fn hypernets(&self) -> [&DenseNet; 4] {
        [&self.hyper_w1, &self.hyper_b1, &self.hyper_w2, &self.hyper_v]
    }

    fn hypernets_mut(&mut self) -> [&mut DenseNet; 4] {
        [
            &mut self.hyper_w1,
            &mut self.hyper_b1,
            &mut self.hyper_w2,
            &mut self.hyper_v,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.hypernets().iter().map(|n| n.num_params()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for n in self.hypernets() {
            out.extend_from_slice(n.params());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut off = 0;
        for n in self.hypernets_mut() {
            let k = n.num_params();
            n.params_mut().copy_from_slice(&flat[off..off + k]);
            off += k;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.hypernets().iter().all(|n| n.all_finite())
    }

    /// Makes every hypernetwork output state-independent: final-layer
    /// weights are zeroed and the final biases set to the given values.
    /// `w1` is `n_agents × embed` row-major (pre-abs), `w2` and `b1` have
    /// `embed` entries, `v` is the final bias.
    pub fn force_constant(&mut self, w1: &[f64], b1: &[f64], w2: &[f64], v: f64) {
        let e = self.embed;
        assert_eq!(w1.len(), self.n_agents * e);
        assert_eq!(b1.len(), e);
        assert_eq!(w2.len(), e);
        let pin = |net: &mut DenseNet, bias: &[f64]| {
            let last = net.sizes().len() - 2;
            net.weights_mut(last).fill(0.0);
            net.bias_mut(last).copy_from_slice(bias);
        };
        pin(&mut self.hyper_w1, w1);
        pin(&mut self.hyper_b1, b1);
        pin(&mut self.hyper_w2, w2);
        pin(&mut self.hyper_v, &[v]);
    }

    /// Effective (non-negative) first- and second-layer weights for one state.
    pub fn effective_weights(&self, state: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let w1 = self.hyper_w1.forward(state).expect("state width");
        let w2 = self.hyper_w2.forward(state).expect("state width");
        (
            w1.into_iter().map(f64::abs).collect(),
            w2.into_iter().map(f64::abs).collect(),
        )
    }

    pub fn forward(&self, qs: ArrayView2<f64>, states: ArrayView2<f64>) -> Array1<f64> {
        self.forward_cached(qs, states).0
    }

    /// Mixes `qs` (`batch × n_agents`) under `states` (`batch × state_dim`).
    pub fn forward_cached(&self, qs: ArrayView2<f64>, states: ArrayView2<f64>) -> (Array1<f64>, MixerCache) {
        assert_eq!(qs.ncols(), self.n_agents);
        assert_eq!(qs.nrows(), states.nrows());
        let (w1_raw, c_w1) = self.hyper_w1.forward_batch(states).expect("state width");
        let (b1, c_b1) = self.hyper_b1.forward_batch(states).expect("state width");
        let (w2_raw, c_w2) = self.hyper_w2.forward_batch(states).expect("state width");
        let (v, c_v) = self.hyper_v.forward_batch(states).expect("state width");
        let (m, n, e) = (qs.nrows(), self.n_agents, self.embed);
        let mut pre = Array2::zeros((m, e));
        let mut hidden = Array2::zeros((m, e));
        let mut out = Array1::zeros(m);
        for r in 0..m {
            let mut q_tot = v[[r, 0]];
            for k in 0..e {
                let mut z = b1[[r, k]];
                for i in 0..n {
                    z += qs[[r, i]] * w1_raw[[r, i * e + k]].abs();
                }
                pre[[r, k]] = z;
                let h = elu(z);
                hidden[[r, k]] = h;
                q_tot += h * w2_raw[[r, k]].abs();
            }
            out[r] = q_tot;
        }
        let cache = MixerCache {
            qs: qs.to_owned(),
            w1_raw,
            w2_raw,
            pre,
            hidden,
            c_w1,
            c_b1,
            c_w2,
            c_v,
        };
        (out, cache)
    }

    /// Backward pass for `upstream = dL/dQ_tot` per row. Returns flat
    /// parameter gradients (in [`flat_params`](Self::flat_params) order) and
    /// `dL/dQ` (`batch × n_agents`).
    pub fn backward(&self, cache: &MixerCache, upstream: &[f64]) -> (Vec<f64>, Array2<f64>) {
        let (m, n, e) = (cache.qs.nrows(), self.n_agents, self.embed);
        assert_eq!(upstream.len(), m);
        let mut d_w1 = Array2::zeros((m, n * e));
        let mut d_b1 = Array2::zeros((m, e));
        let mut d_w2 = Array2::zeros((m, e));
        let mut d_v = Array2::zeros((m, 1));
        let mut d_qs = Array2::zeros((m, n));
        for r in 0..m {
            let g = upstream[r];
            d_v[[r, 0]] = g;
            for k in 0..e {
                let w2 = cache.w2_raw[[r, k]];
                d_w2[[r, k]] = g * cache.hidden[[r, k]] * abs_grad(w2);
                let d_pre = g * w2.abs() * elu_grad(cache.pre[[r, k]]);
                d_b1[[r, k]] = d_pre;
                for i in 0..n {
                    let w1 = cache.w1_raw[[r, i * e + k]];
                    d_w1[[r, i * e + k]] = cache.qs[[r, i]] * d_pre * abs_grad(w1);
                    d_qs[[r, i]] += w1.abs() * d_pre;
                }
            }
        }
        let mut grads = vec![0.0; self.num_params()];
        let mut off = 0;
        for (net, cache, up) in [
            (&self.hyper_w1, &cache.c_w1, &d_w1),
            (&self.hyper_b1, &cache.c_b1, &d_b1),
            (&self.hyper_w2, &cache.c_w2, &d_w2),
            (&self.hyper_v, &cache.c_v, &d_v),
        ] {
            let k = net.num_params();
            net.backward(cache, up.view(), &mut grads[off..off + k]);
            off += k;
        }
        (grads, d_qs)
    }
}
