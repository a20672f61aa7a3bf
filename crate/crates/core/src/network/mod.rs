//! Plain feed-forward networks: shape, Xavier initialization, forward pass,
//! per-layer pre-activations, and distance from a frozen initialization.
//!
//! A network of depth `d` has weight matrices `W₁: H×n`, `W₂..W_{d−1}: H×H`,
//! `W_d: k×H` and one bias vector per layer. The pre-activation of layer `k`
//! is `f⁽ᵏ⁾(x) = W_k g + b_k`, where `g = x` for the first layer and
//! `g = φ(f⁽ᵏ⁻¹⁾(x))` afterwards.

pub mod checkpoint;

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, kernels, DenseMatrix, DenseVector, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Linear => v,
        }
    }

    /// Derivative, with the ReLU derivative at exactly zero taken as zero.
    #[inline]
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::arg(format!("unknown activation '{other}'"))),
        }
    }
}

/// Architecture of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetShape {
    pub input_dim: usize,
    pub hidden_width: usize,
    /// Number of weight layers; at least 2.
    pub depth: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl NetShape {
    pub fn new(
        input_dim: usize,
        hidden_width: usize,
        depth: usize,
        output_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        let shape = Self {
            input_dim,
            hidden_width,
            depth,
            output_dim,
            activation,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::arg(format!("depth must be at least 2, got {}", self.depth)));
        }
        if self.input_dim == 0 || self.hidden_width == 0 || self.output_dim == 0 {
            return Err(Error::arg(format!("all dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    /// `(rows, cols)` of weight layer `layer` (0-based).
    pub fn layer_dims(&self, layer: usize) -> (usize, usize) {
        let rows = if layer + 1 == self.depth {
            self.output_dim
        } else {
            self.hidden_width
        };
        let cols = if layer == 0 {
            self.input_dim
        } else {
            self.hidden_width
        };
        (rows, cols)
    }

    pub fn num_params(&self) -> usize {
        (0..self.depth)
            .map(|l| {
                let (r, c) = self.layer_dims(l);
                r * c + r
            })
            .sum()
    }
}

/// Weights and biases of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    shape: NetShape,
    weights: Vec<DenseMatrix>,
    biases: Vec<DenseVector>,
}

impl NetParams {
    /// All-zero parameters.
    pub fn zeros(shape: NetShape) -> Result<Self> {
        shape.validate()?;
        let (weights, biases) = (0..shape.depth)
            .map(|l| {
                let (r, c) = shape.layer_dims(l);
                (DenseMatrix::zeros(r, c), DenseVector::zeros(r))
            })
            .unzip();
        Ok(Self {
            shape,
            weights,
            biases,
        })
    }

    pub fn from_parts(
        shape: NetShape,
        weights: Vec<DenseMatrix>,
        biases: Vec<DenseVector>,
    ) -> Result<Self> {
        shape.validate()?;
        if weights.len() != shape.depth || biases.len() != shape.depth {
            return Err(Error::dims(
                "NetParams::from_parts",
                format!("{} layers", shape.depth),
                format!("{} weights / {} biases", weights.len(), biases.len()),
            ));
        }
        for l in 0..shape.depth {
            let (r, c) = shape.layer_dims(l);
            if weights[l].shape() != (r, c) || biases[l].len() != r {
                return Err(Error::dims(
                    "NetParams::from_parts",
                    format!("layer {}: {r}x{c} + {r}", l + 1),
                    format!(
                        "{}x{} + {}",
                        weights[l].rows(),
                        weights[l].cols(),
                        biases[l].len()
                    ),
                ));
            }
            if !weights[l].is_finite() || biases[l].iter().any(|v| !v.is_finite()) {
                return Err(Error::arg(format!("layer {} has non-finite entries", l + 1)));
            }
        }
        Ok(Self {
            shape,
            weights,
            biases,
        })
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn depth(&self) -> usize {
        self.shape.depth
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[DenseVector] {
        &self.biases
    }

    /// Weight matrix of layer `layer` (0-based).
    pub fn weight(&self, layer: usize) -> &DenseMatrix {
        &self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &DenseVector {
        &self.biases[layer]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut DenseMatrix {
        &mut self.weights[layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut DenseVector {
        &mut self.biases[layer]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(DenseMatrix::is_finite)
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// All parameters flattened layer by layer: `W₁` row-major, `b₁`, `W₂`, ...
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.shape.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    /// Inverse of [`NetParams::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.shape.num_params() {
            return Err(Error::dims("set_flat", self.shape.num_params(), flat.len()));
        }
        let mut pos = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let nw = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&flat[pos..pos + nw]);
            pos += nw;
            let nb = b.len();
            b.as_mut_slice().copy_from_slice(&flat[pos..pos + nb]);
            pos += nb;
        }
        Ok(())
    }

    /// `‖(W, B) − (W', B')‖_F` over all weights and biases jointly.
    pub fn distance(&self, other: &NetParams) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::dims(
                "distance",
                format!("{:?}", self.shape),
                format!("{:?}", other.shape),
            ));
        }
        let mut total = 0.0;
        for l in 0..self.depth() {
            total += self.weights[l].distance_sq(&other.weights[l])?;
            total += self.biases[l].distance_sq(&other.biases[l])?;
        }
        Ok(total.sqrt())
    }

    fn check_input(&self, x: &DenseVector) -> Result<()> {
        if x.len() != self.shape.input_dim {
            return Err(Error::dims("forward", self.shape.input_dim, x.len()));
        }
        Ok(())
    }

    /// Network output `f(x)`.
    pub fn forward(&self, x: &DenseVector) -> Result<DenseVector> {
        self.layer_output(x, self.depth())
    }

    /// Pre-activation `f⁽ᵏ⁾(x)` of layer `k`; `k = 0` returns `x` and
    /// `k = depth` returns the network output.
    pub fn layer_output(&self, x: &DenseVector, k: usize) -> Result<DenseVector> {
        self.check_input(x)?;
        if k > self.depth() {
            return Err(Error::arg(format!(
                "layer index {k} out of range 0..={}",
                self.depth()
            )));
        }
        Ok(self.pre_activations(x.as_slice(), k).pop().expect("k+1 entries"))
    }

    /// `[f⁽⁰⁾, f⁽¹⁾, …, f⁽ᵘᵖᵗᵒ⁾]` for one input. No dimension checks.
    pub(crate) fn pre_activations(&self, x: &[f64], upto: usize) -> Vec<DenseVector> {
        let act = self.shape.activation;
        let mut outs = Vec::with_capacity(upto + 1);
        outs.push(DenseVector::from(x));
        for l in 0..upto {
            let input: Vec<f64> = if l == 0 {
                x.to_vec()
            } else {
                outs[l].iter().map(|&v| act.apply(v)).collect()
            };
            let w = &self.weights[l];
            let b = &self.biases[l];
            let out: Vec<f64> = (0..w.rows())
                .map(|i| kernels::dot(w.row(i), &input) + b[i])
                .collect();
            outs.push(DenseVector::from(out));
        }
        outs
    }
}

/// Xavier-style Gaussian initialization: every weight entry i.i.d.
/// `N(0, 1/H)` (standard deviation `1/√H` in every layer), all biases zero.
pub fn xavier_init(rng: &mut Rng, shape: NetShape) -> Result<NetParams> {
    shape.validate()?;
    let std = 1.0 / (shape.hidden_width as f64).sqrt();
    let mut weights = Vec::with_capacity(shape.depth);
    let mut biases = Vec::with_capacity(shape.depth);
    for l in 0..shape.depth {
        let (r, c) = shape.layer_dims(l);
        weights.push(gaussian_matrix(rng, r, c, std)?);
        biases.push(DenseVector::zeros(r));
    }
    NetParams::from_parts(shape, weights, biases)
}

/// Frozen initialization `(Z, C)` with cached per-layer norms.
#[derive(Debug, Clone)]
pub struct InitSnapshot {
    params: NetParams,
    spectral: Vec<f64>,
    frobenius: Vec<f64>,
}

impl InitSnapshot {
    pub fn new(params: NetParams) -> Self {
        let spectral = params.weights.iter().map(DenseMatrix::spectral_norm).collect();
        let frobenius = params.weights.iter().map(DenseMatrix::frobenius_norm).collect();
        Self {
            params,
            spectral,
            frobenius,
        }
    }

    pub fn params(&self) -> &NetParams {
        &self.params
    }

    pub fn shape(&self) -> &NetShape {
        self.params.shape()
    }

    /// `‖Z_k‖₂` per layer.
    pub fn spectral_norms(&self) -> &[f64] {
        &self.spectral
    }

    /// `‖Z_k‖_F` per layer.
    pub fn frobenius_norms(&self) -> &[f64] {
        &self.frobenius
    }
}

/// `‖(W, B) − (Z, C)‖_F`.
pub fn distance_from_init(p: &NetParams, z: &InitSnapshot) -> Result<f64> {
    p.distance(&z.params)
}
