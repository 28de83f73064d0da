use serde::{Deserialize, Serialize};

use super::linalg::dot;
use super::rng::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    Relu,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Softplus => softplus(z),
        }
    }

    /// Derivative with respect to the pre-activation.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(z),
        }
    }
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    (-z.abs()).exp().ln_1p() + z.max(0.0)
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    act: Activation,
    w_off: usize,
    b_off: usize,
}

/// Fully connected network with parameters stored in one flat buffer.
///
/// Layer `l` owns a `fan_out x fan_in` row-major weight block followed by a
/// bias vector of length `fan_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
    params: Vec<f64>,
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `outs[0]` is the input, `outs[l + 1]` the output of layer `l`.
    pub outs: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pub pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.outs.last().expect("trace has at least the input")
    }

    /// Activations feeding the final layer.
    pub fn penultimate(&self) -> &[f64] {
        &self.outs[self.outs.len() - 2]
    }
}

impl Mlp {
    /// Zero-initialized network. `sizes` lists every width from input to output;
    /// `acts` gives one activation per layer (`sizes.len() - 1` entries).
    pub fn zeros(sizes: &[usize], acts: &[Activation]) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::config("mlp.sizes", "need at least input and output widths"));
        }
        if acts.len() != sizes.len() - 1 {
            return Err(Error::Dimension {
                context: "mlp activations",
                expected: sizes.len() - 1,
                got: acts.len(),
            });
        }
        if sizes.contains(&0) {
            return Err(Error::config("mlp.sizes", "widths must be positive"));
        }
        let mut layers = Vec::with_capacity(acts.len());
        let mut off = 0;
        for (i, &act) in acts.iter().enumerate() {
            let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
            let w_off = off;
            let b_off = w_off + fan_in * fan_out;
            off = b_off + fan_out;
            layers.push(Layer {
                fan_in,
                fan_out,
                act,
                w_off,
                b_off,
            });
        }
        Ok(Self {
            layers,
            params: vec![0.0; off],
        })
    }

    /// Random weights, zero biases. He-uniform bounds for ReLU layers,
    /// LeCun-uniform otherwise.
    pub fn new(sizes: &[usize], acts: &[Activation], rng: &mut Rng) -> Result<Self> {
        let mut m = Self::zeros(sizes, acts)?;
        for l in m.layers.clone() {
            let scale = match l.act {
                Activation::Relu => 6.0,
                _ => 3.0,
            };
            let bound = (scale / l.fan_in as f64).sqrt();
            for w in &mut m.params[l.w_off..l.b_off] {
                *w = rng.uniform_in(-bound, bound);
            }
        }
        Ok(m)
    }

    /// `d_in -> hidden... -> d_out` with one hidden activation and a final one.
    pub fn with_hidden(
        d_in: usize,
        hidden: &[usize],
        d_out: usize,
        hidden_act: Activation,
        out_act: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut sizes = vec![d_in];
        sizes.extend_from_slice(hidden);
        sizes.push(d_out);
        let mut acts = vec![hidden_act; hidden.len()];
        acts.push(out_act);
        Self::new(&sizes, &acts, rng)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
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

    pub fn activation(&self, layer: usize) -> Activation {
        self.layers[layer].act
    }

    /// Weight block of a layer, `fan_out x fan_in` row-major.
    pub fn weights(&self, layer: usize) -> &[f64] {
        let l = &self.layers[layer];
        &self.params[l.w_off..l.b_off]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let l = self.layers[layer];
        &mut self.params[l.w_off..l.b_off]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let l = &self.layers[layer];
        &self.params[l.b_off..l.b_off + l.fan_out]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let l = self.layers[layer];
        &mut self.params[l.b_off..l.b_off + l.fan_out]
    }

    /// Offset of a layer's bias within the flat parameter buffer.
    pub fn bias_offset(&self, layer: usize) -> usize {
        self.layers[layer].b_off
    }

    pub fn weight_offset(&self, layer: usize) -> usize {
        self.layers[layer].w_off
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                context: "mlp input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for l in &self.layers {
            let w = &self.params[l.w_off..l.b_off];
            let b = &self.params[l.b_off..l.b_off + l.fan_out];
            cur = (0..l.fan_out)
                .map(|o| l.act.apply(dot(&w[o * l.fan_in..(o + 1) * l.fan_in], &cur) + b[o]))
                .collect();
        }
        cur
    }

    pub fn trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        Ok(self.trace_unchecked(x))
    }

    pub(crate) fn trace_unchecked(&self, x: &[f64]) -> Trace {
        let mut outs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        outs.push(x.to_vec());
        for l in &self.layers {
            let w = &self.params[l.w_off..l.b_off];
            let b = &self.params[l.b_off..l.b_off + l.fan_out];
            let input = outs.last().unwrap();
            let z: Vec<f64> = (0..l.fan_out)
                .map(|o| dot(&w[o * l.fan_in..(o + 1) * l.fan_in], input) + b[o])
                .collect();
            outs.push(z.iter().map(|&v| l.act.apply(v)).collect());
            pre.push(z);
        }
        Trace { outs, pre }
    }

    /// Backpropagate `upstream = dL/d(output)`. Parameter gradients are added
    /// into `param_grads` when given; the input gradient is returned.
    pub fn backward(
        &self,
        trace: &Trace,
        upstream: &[f64],
        param_grads: Option<&mut [f64]>,
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::Dimension {
                context: "mlp upstream",
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }
        if let Some(g) = &param_grads {
            if g.len() != self.params.len() {
                return Err(Error::Dimension {
                    context: "mlp param grads",
                    expected: self.params.len(),
                    got: g.len(),
                });
            }
        }
        Ok(self.backward_unchecked(trace, upstream, param_grads))
    }

    pub(crate) fn backward_unchecked(
        &self,
        trace: &Trace,
        upstream: &[f64],
        mut param_grads: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let mut delta = upstream.to_vec();
        for (li, l) in self.layers.iter().enumerate().rev() {
            for (dv, &z) in delta.iter_mut().zip(&trace.pre[li]) {
                *dv *= l.act.derivative(z);
            }
            let input = &trace.outs[li];
            if let Some(g) = param_grads.as_deref_mut() {
                for o in 0..l.fan_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut g[l.w_off + o * l.fan_in..l.w_off + (o + 1) * l.fan_in];
                    for (gi, &xi) in row.iter_mut().zip(input) {
                        *gi += d * xi;
                    }
                    g[l.b_off + o] += d;
                }
            }
            let w = &self.params[l.w_off..l.b_off];
            let mut next = vec![0.0; l.fan_in];
            for o in 0..l.fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (ni, &wi) in next.iter_mut().zip(&w[o * l.fan_in..(o + 1) * l.fan_in]) {
                    *ni += d * wi;
                }
            }
            delta = next;
        }
        delta
    }

    /// Gradient of `upstream . f(x)` with respect to `x`.
    pub fn input_grad(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        let tr = self.trace(x)?;
        self.backward(&tr, upstream, None)
    }
}
