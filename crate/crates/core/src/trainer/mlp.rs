//! Fully connected ReLU network with a linear output layer, float64 throughout.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::loss::softmax_xent_into;
use crate::error::{Error, Result};

/// Dense layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.bias))
        {
            *o = b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

impl MlpParams {
    /// All-zero parameters for widths `[D, H..., K]`.
    pub fn zeros(architecture: &[usize]) -> Self {
        MlpParams {
            layers: architecture
                .windows(2)
                .map(|w| Dense::zeros(w[0], w[1]))
                .collect(),
        }
    }

    /// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases.
    pub fn he_init<R: Rng + ?Sized>(architecture: &[usize], rng: &mut R) -> Self {
        let mut params = Self::zeros(architecture);
        for layer in &mut params.layers {
            let normal =
                Normal::new(0.0, (2.0 / layer.inputs as f64).sqrt()).expect("positive std");
            for w in &mut layer.weights {
                *w = normal.sample(rng);
            }
        }
        params
    }

    pub fn architecture(&self) -> Vec<usize> {
        let mut arch: Vec<usize> = self.layers.iter().map(|l| l.inputs).collect();
        if let Some(last) = self.layers.last() {
            arch.push(last.outputs);
        }
        arch
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Shape and finiteness checks, for parameters read from disk.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 {
                return Err(Error::invalid(format!("layer {i} has a zero width")));
            }
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::invalid(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && self.layers[i - 1].outputs != l.inputs {
                return Err(Error::invalid(format!(
                    "layer {i} input width does not match previous layer"
                )));
            }
            if l.weights.iter().chain(&l.bias).any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!(
                    "layer {i} has non-finite parameters"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    pub(crate) fn fill(&mut self, value: f64) {
        for l in &mut self.layers {
            l.weights.fill(value);
            l.bias.fill(value);
        }
    }

    /// Output logits for one input.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = Workspace::new(self);
        self.forward_into(x, &mut ws);
        ws.acts.last().expect("at least one layer").clone()
    }

    fn forward_into(&self, x: &[f64], ws: &mut Workspace) {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(i);
            let input = if i == 0 { x } else { &before[i - 1] };
            let out = &mut after[0];
            layer.forward(input, out);
            if i != last {
                for v in out.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
    }

    /// Mean softmax cross-entropy over `batch` and its gradient with respect
    /// to every parameter, accumulated into `grads` (which is overwritten).
    pub fn loss_and_grad<'a, I>(&self, batch: I, grads: &mut MlpParams) -> f64
    where
        I: IntoIterator<Item = (&'a [f64], usize)>,
    {
        let mut ws = Workspace::new(self);
        self.loss_and_grad_with(batch, grads, &mut ws)
    }

    pub(crate) fn loss_and_grad_with<'a, I>(
        &self,
        batch: I,
        grads: &mut MlpParams,
        ws: &mut Workspace,
    ) -> f64
    where
        I: IntoIterator<Item = (&'a [f64], usize)>,
    {
        grads.fill(0.0);
        let n_layers = self.layers.len();
        let mut total = 0.0;
        let mut count = 0usize;
        for (x, label) in batch {
            self.forward_into(x, ws);
            total += softmax_xent_into(&ws.acts[n_layers - 1], label, &mut ws.deltas[n_layers - 1]);
            count += 1;
            for i in (0..n_layers).rev() {
                let layer = &self.layers[i];
                let g = &mut grads.layers[i];
                let (lower, upper) = ws.deltas.split_at_mut(i);
                let delta = &upper[0];
                let input: &[f64] = if i == 0 { x } else { &ws.acts[i - 1] };
                for (o, &d) in delta.iter().enumerate() {
                    g.bias[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, xi) in row.iter_mut().zip(input) {
                        *gw += d * xi;
                    }
                }
                if i > 0 {
                    let prev = &mut lower[i - 1];
                    prev.fill(0.0);
                    for (o, &d) in delta.iter().enumerate() {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += w * d;
                        }
                    }
                    // ReLU derivative, taken as 0 at the kink.
                    for (p, a) in prev.iter_mut().zip(&ws.acts[i - 1]) {
                        if *a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                }
            }
        }
        if count == 0 {
            return 0.0;
        }
        let scale = 1.0 / count as f64;
        for l in &mut grads.layers {
            l.weights.iter_mut().for_each(|w| *w *= scale);
            l.bias.iter_mut().for_each(|b| *b *= scale);
        }
        total * scale
    }
}

/// Scratch buffers for one forward/backward pass.
pub(crate) struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    pub(crate) fn new(params: &MlpParams) -> Self {
        let widths: Vec<usize> = params.layers.iter().map(|l| l.outputs).collect();
        Workspace {
            acts: widths.iter().map(|&w| vec![0.0; w]).collect(),
            deltas: widths.iter().map(|&w| vec![0.0; w]).collect(),
        }
    }
}
