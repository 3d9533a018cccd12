//! Small dense network engine: ReLU multilayer perceptrons with exact
//! reverse-mode gradients and an Adam optimizer over flat parameter vectors.

mod adam;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected} inputs, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("parameter vector has {got} entries, network needs {expected}")]
    ParamCount { expected: usize, got: usize },
}

/// Fully connected network: ReLU between layers, identity output.
///
/// Parameters live in one flat vector; layer `l` stores its weight matrix
/// (`in × out`, row-major) followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Layer inputs recorded by a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the network input; `acts[l]` the ReLU output feeding layer `l`.
    acts: Vec<Array2<f64>>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl DenseNet {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization for weights and biases.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "a network needs at least an input and an output layer");
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(rng.random_range(-bound..bound));
            }
        }
        DenseNet {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2);
        DenseNet {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self, NnError> {
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(NnError::ParamCount {
                expected,
                got: params.len(),
            });
        }
        Ok(DenseNet {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn layer_offset(&self, layer: usize) -> usize {
        param_count(&self.sizes[..=layer])
    }

    fn layer(&self, layer: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = self.layer_offset(layer);
        let w = ArrayView2::from_shape((i, o), &self.params[off..off + i * o]).unwrap();
        let b = ArrayView1::from(&self.params[off + i * o..off + i * o + o]);
        (w, b)
    }

    /// Mutable bias of `layer`; used to pin a network's output to a constant.
    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = self.layer_offset(layer);
        &mut self.params[off + i * o..off + i * o + o]
    }

    /// Mutable weights of `layer`, `in × out` row-major.
    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = self.layer_offset(layer);
        &mut self.params[off..off + i * o]
    }

    fn check_input(&self, cols: usize) -> Result<(), NnError> {
        if cols != self.input_dim() {
            return Err(NnError::Shape {
                expected: self.input_dim(),
                got: cols,
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(input.len())?;
        let x = ArrayView2::from_shape((1, input.len()), input).unwrap();
        Ok(self.predict_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass over a `batch × input_dim` matrix without recording activations.
    pub fn predict_batch(&self, input: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(input.ncols())?;
        let mut h = input.to_owned();
        for l in 0..self.num_layers() {
            let (w, b) = self.layer(l);
            h = h.dot(&w) + &b;
            if l + 1 < self.num_layers() {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(h)
    }

    /// Forward pass that keeps what [`backward`](Self::backward) needs.
    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache), NnError> {
        self.check_input(input.ncols())?;
        let mut acts = Vec::with_capacity(self.num_layers());
        acts.push(input.to_owned());
        let mut out = None;
        for l in 0..self.num_layers() {
            let (w, b) = self.layer(l);
            let mut z = acts[l].dot(&w) + &b;
            if l + 1 < self.num_layers() {
                z.mapv_inplace(|v| v.max(0.0));
                acts.push(z);
            } else {
                out = Some(z);
            }
        }
        Ok((out.unwrap(), ForwardCache { acts }))
    }

    /// Reverse pass for `upstream = dL/d(output)`; adds parameter gradients
    /// into `grads` and returns `dL/d(input)`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<f64>,
        grads: &mut [f64],
    ) -> Array2<f64> {
        assert_eq!(grads.len(), self.params.len());
        let mut delta = upstream.to_owned();
        for l in (0..self.num_layers()).rev() {
            let (w, _) = self.layer(l);
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let a = &cache.acts[l];
            let dw = a.t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            for (g, d) in grads[off..off + i * o].iter_mut().zip(dw.iter()) {
                *g += d;
            }
            for (g, d) in grads[off + i * o..off + i * o + o].iter_mut().zip(db.iter()) {
                *g += d;
            }
            let mut prev = delta.dot(&w.t());
            if l > 0 {
                // ReLU derivative from the recorded post-activation.
                ndarray::Zip::from(&mut prev).and(a).for_each(|p, &act| {
                    if act <= 0.0 {
                        *p = 0.0;
                    }
                });
            }
            delta = prev;
        }
        delta
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

/// Converts rows of equal length into a matrix.
pub fn stack_rows(rows: &[Vec<f64>]) -> Array2<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut m = Array2::zeros((rows.len(), cols));
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).assign(&Array1::from(r.clone()));
    }
    m
}
