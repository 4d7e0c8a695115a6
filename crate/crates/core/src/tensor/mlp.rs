//! Fixed-topology feed-forward networks with hand-written reverse mode.
//!
//! Parameters live in one flat buffer, layer by layer: the `out × in`
//! weight matrix in row-major order followed by the `out` biases. Gradients
//! and optimizer moments share that layout, so Adam, soft target updates and
//! checksums are plain slice operations.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use super::linalg::{matmul, matmul_at, matmul_bt};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => libm::tanh(x),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Relu => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Relu),
            _ => None,
        }
    }
}

#[derive(Clone, PartialEq)]
pub struct MlpParams {
    dims: Vec<usize>,
    hidden: Activation,
    output: Activation,
    data: Vec<f64>,
}

impl fmt::Debug for MlpParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MlpParams")
            .field("dims", &self.dims)
            .field("hidden", &self.hidden)
            .field("output", &self.output)
            .field("params", &self.data.len())
            .finish()
    }
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl MlpParams {
    /// All-zero network with layer widths `dims = [input, hidden.., output]`.
    pub fn zeros(dims: &[usize], hidden: Activation, output: Activation) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        Self {
            dims: dims.to_vec(),
            hidden,
            output,
            data: vec![0.0; param_count(dims)],
        }
    }

    /// Glorot-uniform weights in ±sqrt(6 / (fan_in + fan_out)), zero biases.
    pub fn glorot<R: Rng + ?Sized>(dims: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        let mut p = Self::zeros(dims, hidden, output);
        let mut off = 0;
        for w in p.dims.clone().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            for x in &mut p.data[off..off + fan_in * fan_out] {
                *x = rng.gen_range(-limit..=limit);
            }
            off += fan_in * fan_out + fan_out;
        }
        p
    }

    /// Build from explicit `(weights[out][in], bias[out])` layers.
    pub fn from_layers(layers: &[(Vec<Vec<f64>>, Vec<f64>)], hidden: Activation, output: Activation) -> Result<Self> {
        let first = layers.first().ok_or(Error::Config("empty layer list".into()))?;
        let mut dims = vec![first.0.first().map_or(0, Vec::len)];
        let mut data = Vec::new();
        for (w, b) in layers {
            let input = *dims.last().unwrap();
            check_len("layer bias", w.len(), b.len())?;
            for row in w {
                check_len("layer input", input, row.len())?;
                data.extend_from_slice(row);
            }
            data.extend_from_slice(b);
            dims.push(w.len());
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("layer weights"));
        }
        Ok(Self {
            dims,
            hidden,
            output,
            data,
        })
    }

    pub(crate) fn from_raw(dims: Vec<usize>, hidden: Activation, output: Activation, data: Vec<f64>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Checkpoint("network has no layers"));
        }
        check_len("parameter buffer", param_count(&dims), data.len())?;
        Ok(Self {
            dims,
            hidden,
            output,
            data,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn num_params(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output
        } else {
            self.hidden
        }
    }

    fn offset(&self, layer: usize) -> usize {
        param_count(&self.dims[..=layer])
    }

    /// Weights (row-major `out × in`) and biases of one layer.
    pub fn layer(&self, layer: usize) -> (&[f64], &[f64]) {
        let (i, o) = (self.dims[layer], self.dims[layer + 1]);
        let off = self.offset(layer);
        (&self.data[off..off + i * o], &self.data[off + i * o..off + i * o + o])
    }

    /// `self ← (1 − tau)·self + tau·source`.
    pub fn soft_update_from(&mut self, source: &MlpParams, tau: f64) {
        assert_eq!(self.dims, source.dims, "soft update between differently shaped networks");
        for (t, s) in self.data.iter_mut().zip(&source.data) {
            *t = (1.0 - tau) * *t + tau * s;
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let cache = self.forward_batch(x, 1)?;
        Ok(cache.into_output())
    }

    /// Forward a row-major `n × input_dim` batch, keeping the activations
    /// needed by [`MlpParams::backward_batch`].
    pub fn forward_batch(&self, x: &[f64], n: usize) -> Result<ForwardCache> {
        check_len("mlp input", n * self.input_dim(), x.len())?;
        let mut acts = Vec::with_capacity(self.dims.len());
        acts.push(x.to_vec());
        for l in 0..self.num_layers() {
            let (i, o) = (self.dims[l], self.dims[l + 1]);
            let (w, b) = self.layer(l);
            let mut z = Vec::with_capacity(n * o);
            for _ in 0..n {
                z.extend_from_slice(b);
            }
            matmul_bt(&acts[l], w, n, i, o, &mut z, true);
            let act = self.activation(l);
            if act != Activation::Identity {
                z.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            acts.push(z);
        }
        Ok(ForwardCache { n, acts })
    }

    /// Reverse pass for a batch: returns parameter gradients of
    /// `Σ_rows ⟨upstream_row, output_row⟩` and the gradient with respect to
    /// the inputs.
    pub fn backward_batch(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let mut grads = Gradients::zeros_like(self);
        let input = self.backward_impl(cache, upstream, Some(&mut grads), true)?;
        Ok((grads, input.unwrap_or_default()))
    }

    /// Like [`MlpParams::backward_batch`] but accumulates into `grads` and
    /// skips the input gradient.
    pub fn accumulate_grads(&self, cache: &ForwardCache, upstream: &[f64], grads: &mut Gradients) -> Result<()> {
        check_len("gradient buffer", self.num_params(), grads.data.len())?;
        self.backward_impl(cache, upstream, Some(grads), false).map(|_| ())
    }

    /// Input gradient only; parameter gradients are not formed.
    pub fn input_grad_batch(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<Vec<f64>> {
        Ok(self.backward_impl(cache, upstream, None, true)?.unwrap_or_default())
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        mut grads: Option<&mut Gradients>,
        want_input: bool,
    ) -> Result<Option<Vec<f64>>> {
        let n = cache.n;
        check_len("mlp cache depth", self.dims.len(), cache.acts.len())?;
        check_len("mlp upstream", n * self.output_dim(), upstream.len())?;
        let mut delta = upstream.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (i, o) = (self.dims[l], self.dims[l + 1]);
            let act = self.activation(l);
            if act != Activation::Identity {
                for (d, y) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= act.grad_from_output(*y);
                }
            }
            if let Some(g) = grads.as_deref_mut() {
                let off = self.offset(l);
                let (gw, gb) = g.data[off..off + i * o + o].split_at_mut(i * o);
                matmul_at(&delta, &cache.acts[l], n, o, i, gw, true);
                for row in delta.chunks_exact(o) {
                    for (b, d) in gb.iter_mut().zip(row) {
                        *b += d;
                    }
                }
            }
            if l > 0 || want_input {
                let (w, _) = self.layer(l);
                let mut prev = vec![0.0; n * i];
                matmul(&delta, w, n, o, i, &mut prev, false);
                delta = prev;
            } else {
                return Ok(None);
            }
        }
        Ok(Some(delta))
    }
}

/// Per-layer activations from a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    n: usize,
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.n
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }

    pub fn into_output(mut self) -> Vec<f64> {
        self.acts.pop().unwrap()
    }
}

/// Parameter partials, laid out exactly like [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    data: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            data: vec![0.0; params.num_params()],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|x| *x *= k);
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

pub fn mlp_forward(params: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    params.forward(x)
}

/// Exact partials of `⟨upstream, mlp_forward(params, x)⟩` with respect to the
/// parameters and to `x`.
pub fn mlp_backward(params: &MlpParams, x: &[f64], upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
    check_len("mlp upstream", params.output_dim(), upstream.len())?;
    let cache = params.forward_batch(x, 1)?;
    params.backward_batch(&cache, upstream)
}
