//! Batched reverse-mode gradients of the network with respect to all weights
//! and biases.

use super::Loss;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{kernels, DenseMatrix, DenseVector};
use crate::network::NetParams;

/// Gradient (or any other per-parameter quantity) shaped like [`NetParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<DenseVector>,
}

impl Gradients {
    pub fn zeros_like(p: &NetParams) -> Self {
        Self {
            weights: p
                .weights()
                .iter()
                .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: p.biases().iter().map(|b| DenseVector::zeros(b.len())).collect(),
        }
    }

    /// Frobenius norm of the weight gradient of layer `layer` (0-based).
    pub fn weight_norm(&self, layer: usize) -> f64 {
        self.weights[layer].frobenius_norm()
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Same layout as [`NetParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }
}

/// Activations of one batch, kept for the backward pass.
pub(crate) struct ForwardCache {
    batch: usize,
    /// Layer inputs: `inputs[0]` is the batch itself, `inputs[l]` is
    /// `φ(pre[l-1])`. Row-major `batch × cols_l`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations per layer, row-major `batch × rows_l`.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// Network outputs, row-major `batch × k`.
    pub(crate) fn output(&self) -> &[f64] {
        self.pre.last().expect("depth >= 2")
    }
}

/// Forward pass over `batch` inputs stored row-major in `x`.
pub(crate) fn forward_batch(p: &NetParams, x: Vec<f64>, batch: usize) -> ForwardCache {
    let shape = p.shape();
    debug_assert_eq!(x.len(), batch * shape.input_dim);
    let act = shape.activation;
    let mut inputs = Vec::with_capacity(shape.depth);
    let mut pre = Vec::with_capacity(shape.depth);
    inputs.push(x);
    for l in 0..shape.depth {
        let w = p.weight(l);
        let (rows, cols) = w.shape();
        let mut z = vec![0.0; batch * rows];
        kernels::matmul_nt(batch, cols, rows, &inputs[l], w.as_slice(), 0.0, &mut z);
        let b = p.bias(l).as_slice();
        for row in z.chunks_exact_mut(rows) {
            for (zi, bi) in row.iter_mut().zip(b) {
                *zi += bi;
            }
        }
        if l + 1 < shape.depth {
            inputs.push(z.iter().map(|&v| act.apply(v)).collect());
        }
        pre.push(z);
    }
    ForwardCache { batch, inputs, pre }
}

/// Backward pass given `∂objective/∂output` (row-major `batch × k`).
pub(crate) fn backward_batch(p: &NetParams, cache: &ForwardCache, d_out: &[f64]) -> Gradients {
    let shape = p.shape();
    let act = shape.activation;
    let batch = cache.batch;
    let mut grads = Gradients::zeros_like(p);
    let mut delta = d_out.to_vec();
    for l in (0..shape.depth).rev() {
        let w = p.weight(l);
        let (rows, cols) = w.shape();
        kernels::matmul_tn(
            rows,
            batch,
            cols,
            &delta,
            &cache.inputs[l],
            0.0,
            grads.weights[l].as_mut_slice(),
        );
        let gb = grads.biases[l].as_mut_slice();
        for row in delta.chunks_exact(rows) {
            kernels::axpy(1.0, row, gb);
        }
        if l > 0 {
            let mut d_in = vec![0.0; batch * cols];
            kernels::matmul_nn(batch, rows, cols, &delta, w.as_slice(), 0.0, &mut d_in);
            for (d, &z) in d_in.iter_mut().zip(&cache.pre[l - 1]) {
                *d *= act.derivative(z);
            }
            delta = d_in;
        }
    }
    grads
}

pub(crate) fn gather_inputs(data: &Dataset, indices: &[usize]) -> Vec<f64> {
    let mut x = Vec::with_capacity(indices.len() * data.input_dim());
    for &i in indices {
        x.extend_from_slice(data.input(i));
    }
    x
}

pub(crate) fn check_compatible(p: &NetParams, data: &Dataset) -> Result<()> {
    let s = p.shape();
    if s.input_dim != data.input_dim() {
        return Err(Error::dims("network input", s.input_dim, data.input_dim()));
    }
    if s.output_dim != data.target_dim() {
        return Err(Error::dims("network output", data.target_dim(), s.output_dim));
    }
    Ok(())
}

/// Mean loss over the examples `batch` of `data` and its exact gradient.
pub fn backprop(
    p: &NetParams,
    data: &Dataset,
    batch: &[usize],
    loss: Loss,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::arg("backprop: empty batch"));
    }
    check_compatible(p, data)?;
    loss.check_dataset(data)?;
    if let Some(&bad) = batch.iter().find(|&&i| i >= data.len()) {
        return Err(Error::arg(format!("backprop: index {bad} out of range")));
    }
    Ok(backprop_unchecked(p, data, batch, loss))
}

pub(crate) fn backprop_unchecked(
    p: &NetParams,
    data: &Dataset,
    batch: &[usize],
    loss: Loss,
) -> (f64, Gradients) {
    let k = p.shape().output_dim;
    let cache = forward_batch(p, gather_inputs(data, batch), batch.len());
    let out = cache.output();
    let mut d_out = vec![0.0; batch.len() * k];
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for (b, &i) in batch.iter().enumerate() {
        let g = &mut d_out[b * k..(b + 1) * k];
        total += loss.eval_example(&out[b * k..(b + 1) * k], data, i, Some(&mut *g));
        kernels::scale(scale, g);
    }
    (total * scale, backward_batch(p, &cache, &d_out))
}

/// Gradient of the single output coordinate `f_j(x)` with respect to all
/// parameters.
pub fn output_gradient(p: &NetParams, x: &DenseVector, output: usize) -> Result<Gradients> {
    let s = p.shape();
    if x.len() != s.input_dim {
        return Err(Error::dims("output_gradient", s.input_dim, x.len()));
    }
    if output >= s.output_dim {
        return Err(Error::arg(format!(
            "output index {output} out of range {}",
            s.output_dim
        )));
    }
    let cache = forward_batch(p, x.as_slice().to_vec(), 1);
    let mut d_out = vec![0.0; s.output_dim];
    d_out[output] = 1.0;
    Ok(backward_batch(p, &cache, &d_out))
}

/// Outputs for every example, row-major `m × k`, computed in chunks.
pub(crate) fn outputs(p: &NetParams, data: &Dataset) -> Vec<f64> {
    const CHUNK: usize = 256;
    let k = p.shape().output_dim;
    let mut out = Vec::with_capacity(data.len() * k);
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(CHUNK) {
        let cache = forward_batch(p, gather_inputs(data, chunk), chunk.len());
        out.extend_from_slice(cache.output());
    }
    out
}
