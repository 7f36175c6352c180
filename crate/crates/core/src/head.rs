//! Three-layer MLP phrase head: `affine -> relu -> affine -> relu -> affine`.
//!
//! Parameters live in one flat buffer, layer by layer, each layer stored as
//! its row-major weight matrix (`out x in`) followed by its bias.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_LAYERS: usize = 3;
/// Scale of the output layer init relative to He; target entries are small.
pub const OUTPUT_GAIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseHead {
    widths: [usize; NUM_LAYERS + 1],
    params: Vec<f64>,
}

/// Per-layer inputs kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input of layer `l`; `inputs[0]` is the sample.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation outputs of the hidden layers.
    pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

fn param_count(widths: &[usize; NUM_LAYERS + 1]) -> usize {
    widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl PhraseHead {
    pub fn zeros(widths: [usize; NUM_LAYERS + 1]) -> Result<Self> {
        if widths.contains(&0) {
            return Err(Error::Config(format!("layer widths must be positive: {widths:?}")));
        }
        Ok(PhraseHead {
            widths,
            params: vec![0.0; param_count(&widths)],
        })
    }

    /// He-normal weights, zero biases; the output layer is shrunk by
    /// [`OUTPUT_GAIN`].
    pub fn init<R: Rng + ?Sized>(widths: [usize; NUM_LAYERS + 1], rng: &mut R) -> Result<Self> {
        let mut head = PhraseHead::zeros(widths)?;
        for layer in 0..NUM_LAYERS {
            let fan_in = widths[layer] as f64;
            let gain = if layer + 1 == NUM_LAYERS { OUTPUT_GAIN } else { 1.0 };
            let normal = Normal::new(0.0, gain * (2.0 / fan_in).sqrt()).expect("valid std");
            let (w, _) = head.layer_range(layer);
            for p in &mut head.params[w] {
                *p = normal.sample(rng);
            }
        }
        Ok(head)
    }

    pub fn from_params(widths: [usize; NUM_LAYERS + 1], params: Vec<f64>) -> Result<Self> {
        let mut head = PhraseHead::zeros(widths)?;
        if params.len() != head.params.len() {
            return Err(Error::DimensionMismatch {
                expected: head.params.len(),
                found: params.len(),
            });
        }
        head.params = params;
        Ok(head)
    }

    pub fn widths(&self) -> [usize; NUM_LAYERS + 1] {
        self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        self.widths[NUM_LAYERS]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offset(&self, layer: usize) -> usize {
        self.widths[..=layer]
            .windows(2)
            .map(|w| w[1] * w[0] + w[1])
            .sum()
    }

    /// Index ranges of the weight matrix and bias of `layer`.
    pub fn layer_range(&self, layer: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let start = self.offset(layer);
        let (fan_in, fan_out) = (self.widths[layer], self.widths[layer + 1]);
        let w_end = start + fan_in * fan_out;
        (start..w_end, w_end..w_end + fan_out)
    }

    /// Sets the weights and bias of one layer.
    pub fn set_layer(&mut self, layer: usize, weights: &[f64], bias: &[f64]) -> Result<()> {
        let (w, b) = self.layer_range(layer);
        if weights.len() != w.len() || bias.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: w.len() + b.len(),
                found: weights.len() + bias.len(),
            });
        }
        self.params[w].copy_from_slice(weights);
        self.params[b].copy_from_slice(bias);
        Ok(())
    }

    fn affine(&self, layer: usize, x: &[f64], out: &mut Vec<f64>) {
        let (w, b) = self.layer_range(layer);
        let fan_in = self.widths[layer];
        let weights = &self.params[w];
        out.clear();
        out.extend_from_slice(&self.params[b]);
        for (o, row) in out.iter_mut().zip(weights.chunks_exact(fan_in)) {
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("head input".into()));
        }
        let mut inputs = Vec::with_capacity(NUM_LAYERS);
        let mut pre = Vec::with_capacity(NUM_LAYERS - 1);
        let mut current = x.to_vec();
        for layer in 0..NUM_LAYERS {
            let mut z = Vec::with_capacity(self.widths[layer + 1]);
            self.affine(layer, &current, &mut z);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteActivation { layer });
            }
            inputs.push(current);
            if layer + 1 < NUM_LAYERS {
                current = z.iter().map(|v| v.max(0.0)).collect();
                pre.push(z);
            } else {
                current = z;
            }
        }
        Ok(ForwardCache {
            inputs,
            pre,
            output: current,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.output)
    }

    /// Accumulates `d(loss)/d(params)` into `grads` given `d(loss)/d(output)`.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64], grads: &mut [f64]) {
        debug_assert_eq!(grads.len(), self.params.len());
        let mut delta = grad_output.to_vec();
        for layer in (0..NUM_LAYERS).rev() {
            let (w, b) = self.layer_range(layer);
            let fan_in = self.widths[layer];
            let input = &cache.inputs[layer];
            for (g, d) in grads[b.clone()].iter_mut().zip(&delta) {
                *g += d;
            }
            let gw = &mut grads[w.clone()];
            for (row, &d) in gw.chunks_exact_mut(fan_in).zip(&delta) {
                if d != 0.0 {
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
            }
            if layer == 0 {
                break;
            }
            let weights = &self.params[w];
            let mut prev = vec![0.0; fan_in];
            for (row, &d) in weights.chunks_exact(fan_in).zip(&delta) {
                if d != 0.0 {
                    for (p, wv) in prev.iter_mut().zip(row) {
                        *p += d * wv;
                    }
                }
            }
            for (p, z) in prev.iter_mut().zip(&cache.pre[layer - 1]) {
                if *z <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}
