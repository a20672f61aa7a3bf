//! Norm-based capacity measures of a trained network and the certificates
//! implied by its distance `r` from initialization.
//!
//! Every certificate is computed from measured quantities (`‖Z_k‖₂`, `‖x‖`,
//! `r`, ...) with explicit constants, so "bound ≥ measured" is a hard
//! inequality that tests can check. Single-output statements hold per output
//! coordinate for multi-output networks.
//!
//! Nonzero initial biases `C` add `‖c_k‖` to each bias term; under Xavier
//! initialization `C = 0` and the recursions reduce to their textbook form.

use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::network::{distance_from_init, Activation, InitSnapshot, NetParams};
use crate::training::output_gradient;

/// Relative rounding allowance when comparing a certificate to the quantity it
/// bounds. Power iteration returns spectral norms to about `1e-10` relative
/// accuracy, which is far below any gap the theory guarantees.
pub const ROUNDING_SLACK: f64 = 1e-9;

/// `Π_k ‖W_k‖_F²`.
pub fn l2_product(p: &NetParams) -> f64 {
    p.weights()
        .iter()
        .map(|w| {
            let f = w.frobenius_norm();
            f * f
        })
        .product()
}

/// `Π_k ‖W_k‖₂`.
pub fn spectral_product(p: &NetParams) -> f64 {
    p.weights().iter().map(|w| w.spectral_norm()).product()
}

/// `H^{d−1} · Π_k ‖W_k‖₂`.
pub fn spectral_measure(p: &NetParams) -> f64 {
    let s = p.shape();
    (s.hidden_width as f64).powi(s.depth as i32 - 1) * spectral_product(p)
}

/// `Π_k (‖Z_k‖₂ + r)` with `r` the distance of `p` from `z`; never below
/// [`spectral_product`]`(p)`.
pub fn spectral_from_distance_bound(p: &NetParams, z: &InitSnapshot) -> Result<f64> {
    let r = distance_from_init(p, z)?;
    Ok(spectral_bound_at_radius(z, r))
}

/// `Π_k (‖Z_k‖₂ + r)`: the largest spectral product anywhere in the ball of
/// radius `r` around `z`.
pub fn spectral_bound_at_radius(z: &InitSnapshot, r: f64) -> f64 {
    z.spectral_norms().iter().map(|s| s + r).product()
}

/// The output recursion `B_0 = ‖x‖`,
/// `B_k = (‖W_k − Z_k‖_F + ‖Z_k‖₂)·B_{k−1} + ‖c_k‖ + r`, returned as
/// `[B_0, …, B_d]`. `‖f⁽ᵏ⁾(x)‖ ≤ B_k` for every `k`.
pub fn output_bound_trace(p: &NetParams, z: &InitSnapshot, x: &DenseVector) -> Result<Vec<f64>> {
    let geom = Geometry::measure(p, z)?;
    if x.len() != p.shape().input_dim {
        return Err(Error::dims("output_bound", p.shape().input_dim, x.len()));
    }
    Ok(geom.trace(z, x.norm()))
}

/// Per-layer distances `‖W_k − Z_k‖_F` and the total distance `r`.
struct Geometry {
    layer: Vec<f64>,
    r: f64,
}

impl Geometry {
    fn measure(p: &NetParams, z: &InitSnapshot) -> Result<Self> {
        let r = distance_from_init(p, z)?;
        let layer = (0..p.depth())
            .map(|l| Ok(p.weight(l).distance_sq(z.params().weight(l))?.sqrt()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layer, r })
    }

    fn at_init(depth: usize) -> Self {
        Self {
            layer: vec![0.0; depth],
            r: 0.0,
        }
    }

    fn trace(&self, z: &InitSnapshot, x_norm: f64) -> Vec<f64> {
        let mut trace = Vec::with_capacity(self.layer.len() + 1);
        trace.push(x_norm);
        for (l, dw) in self.layer.iter().enumerate() {
            let prev = trace[l];
            trace.push((dw + z.spectral_norms()[l]) * prev + z.params().bias(l).norm() + self.r);
        }
        trace
    }
}

/// `B_d(x)`: bounds `‖f(x)‖`.
pub fn output_bound(p: &NetParams, z: &InitSnapshot, x: &DenseVector) -> Result<f64> {
    Ok(*output_bound_trace(p, z, x)?.last().expect("depth >= 2"))
}

/// The output recursion with every `‖W_k − Z_k‖_F` replaced by its worst
/// case `r`; bounds `‖f(x)‖` for every network in the ball.
pub fn output_bound_at_radius(z: &InitSnapshot, r: f64, x: &DenseVector) -> Result<f64> {
    check_radius(r)?;
    if x.len() != z.shape().input_dim {
        return Err(Error::dims("output_bound", z.shape().input_dim, x.len()));
    }
    let zp = z.params();
    let mut b = x.norm();
    for l in 0..zp.depth() {
        b = (r + z.spectral_norms()[l]) * b + zp.bias(l).norm() + r;
    }
    Ok(b)
}

/// `(max_i B_d(x_i) + max_i ‖y_i‖)²` evaluated at `p = z`; bounds the mean
/// squared loss of the initial network on `xs`.
pub fn initial_loss_bound(z: &InitSnapshot, xs: &[&[f64]], max_target_norm: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::arg("initial_loss_bound: no inputs"));
    }
    let n = z.shape().input_dim;
    if let Some(x) = xs.iter().find(|x| x.len() != n) {
        return Err(Error::dims("initial_loss_bound", n, x.len()));
    }
    // The recursion is increasing in ‖x‖, so the largest input decides.
    let max_norm = xs
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let worst = *Geometry::at_init(z.shape().depth).trace(z, max_norm).last().expect("depth >= 2");
    let b = worst + max_target_norm;
    Ok(b * b)
}

/// `B_{l−1}(x) · Π_{j>l} (‖Z_j‖₂ + r)` for 1-based layer `l`: bounds
/// `‖∂f_i/∂W_l‖_F` for every output coordinate `i`.
pub fn gradient_bound(p: &NetParams, z: &InitSnapshot, x: &DenseVector, layer: usize) -> Result<f64> {
    let d = p.depth();
    if layer == 0 || layer > d {
        return Err(Error::arg(format!("layer {layer} outside 1..={d}")));
    }
    let trace = output_bound_trace(p, z, x)?;
    let r = distance_from_init(p, z)?;
    Ok(trace[layer - 1] * downstream_factor(z, r, layer))
}

/// `Π_{j>l} (‖Z_j‖₂ + r)`: bounds `‖∂f_i/∂b_l‖` for every output coordinate
/// `i` (1-based `l`). This is the weight-gradient bound with `B_{l−1}`
/// replaced by 1.
pub fn bias_gradient_bound(p: &NetParams, z: &InitSnapshot, layer: usize) -> Result<f64> {
    let d = p.depth();
    if layer == 0 || layer > d {
        return Err(Error::arg(format!("layer {layer} outside 1..={d}")));
    }
    let r = distance_from_init(p, z)?;
    Ok(downstream_factor(z, r, layer))
}

fn downstream_factor(z: &InitSnapshot, r: f64, layer: usize) -> f64 {
    z.spectral_norms()[layer..].iter().map(|s| s + r).product()
}

fn check_radius(r: f64) -> Result<()> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::arg(format!("radius must be finite and >= 0, got {r}")));
    }
    Ok(())
}

/// Upper bound on `E_ξ sup Σ_i ξ_i f(x_i)` over the ball of radius `r`
/// around `z`, for linear-activation networks with one output.
///
/// Recursion: `R_0 = √(Σ_i ‖x_i‖²)`,
/// `R_k = (r + ‖Z_k‖₂)·R_{k−1} + (‖c_k‖ + r)·√m`. The base case uses
/// `E‖Σ ξ_i x_i‖ ≤ (E‖Σ ξ_i x_i‖²)^{1/2} = (Σ ‖x_i‖²)^{1/2}`.
pub fn linear_rademacher_bound(z: &InitSnapshot, r: f64, xs: &[&[f64]]) -> Result<f64> {
    check_radius(r)?;
    let s = z.shape();
    if s.activation != Activation::Linear {
        return Err(Error::arg("linear_rademacher_bound needs a linear-activation network"));
    }
    if xs.is_empty() {
        return Err(Error::arg("linear_rademacher_bound: no inputs"));
    }
    if let Some(x) = xs.iter().find(|x| x.len() != s.input_dim) {
        return Err(Error::dims("linear_rademacher_bound", s.input_dim, x.len()));
    }
    let sqrt_m = (xs.len() as f64).sqrt();
    let mut bound = xs
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    for l in 0..s.depth {
        bound = (r + z.spectral_norms()[l]) * bound + (z.params().bias(l).norm() + r) * sqrt_m;
    }
    Ok(bound)
}

/// A bound next to the quantity it bounds, when that quantity is measurable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub bound: f64,
    pub measured: Option<f64>,
}

impl Certificate {
    pub fn new(bound: f64, measured: f64) -> Self {
        Self {
            bound,
            measured: Some(measured),
        }
    }

    pub fn bound_only(bound: f64) -> Self {
        Self {
            bound,
            measured: None,
        }
    }

    /// True when the bound dominates the measurement (up to
    /// [`ROUNDING_SLACK`]) or nothing was measured.
    pub fn holds(&self) -> bool {
        match self.measured {
            Some(m) => dominates(self.bound, m),
            None => self.bound.is_finite(),
        }
    }
}

/// `bound ≥ measured` up to [`ROUNDING_SLACK`]; false if either is NaN.
pub fn dominates(bound: f64, measured: f64) -> bool {
    measured <= bound * (1.0 + ROUNDING_SLACK) + f64::MIN_POSITIVE
}

/// All measured norms and certificates of one trained network.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityReport {
    pub r: f64,
    pub weight_frobenius: Vec<f64>,
    pub weight_spectral: Vec<f64>,
    pub distance_frobenius: Vec<f64>,
    pub l2_product: f64,
    pub spectral_product: f64,
    pub spectral_measure: f64,
    /// Bound `Π (‖Z_k‖₂ + r)` against the measured spectral product.
    pub spectral_from_distance: Certificate,
    /// Largest output bound over the probe inputs against the largest
    /// output norm.
    pub output: Certificate,
    /// Per layer: largest weight-gradient bound over the probe inputs against
    /// the largest `‖∂f_i/∂W_l‖_F` over inputs and output coordinates.
    pub gradient: Vec<Certificate>,
    /// Unnormalized linear Rademacher bound on the probe inputs, and the same
    /// divided by their count. Linear activation only.
    pub linear_rademacher: Option<(f64, f64)>,
}

impl CapacityReport {
    /// Measures `p` against its initialization `z`, using `probes` as the
    /// inputs for the output and gradient certificates.
    pub fn compute(p: &NetParams, z: &InitSnapshot, probes: &[&[f64]]) -> Result<Self> {
        if probes.is_empty() {
            return Err(Error::arg("capacity report needs at least one probe input"));
        }
        let geom = Geometry::measure(p, z)?;
        let r = geom.r;
        let d = p.depth();
        let n = p.shape().input_dim;
        if let Some(x) = probes.iter().find(|x| x.len() != n) {
            return Err(Error::dims("capacity probes", n, x.len()));
        }
        let weight_frobenius: Vec<f64> = p.weights().iter().map(|w| w.frobenius_norm()).collect();
        let weight_spectral: Vec<f64> = p.weights().iter().map(|w| w.spectral_norm()).collect();
        let l2 = weight_frobenius.iter().map(|f| f * f).product();
        let sp: f64 = weight_spectral.iter().product();
        let h = p.shape().hidden_width as f64;

        let k = p.shape().output_dim;
        let mut out_bound = 0.0f64;
        let mut out_measured = 0.0f64;
        let mut grad_bound = vec![0.0f64; d];
        let mut grad_measured = vec![0.0f64; d];
        for x in probes {
            let x = DenseVector::from(*x);
            let trace = geom.trace(z, x.norm());
            out_bound = out_bound.max(trace[d]);
            out_measured = out_measured.max(p.forward(&x)?.norm());
            for l in 0..d {
                grad_bound[l] = grad_bound[l].max(trace[l] * downstream_factor(z, r, l + 1));
            }
            for i in 0..k {
                let g = output_gradient(p, &x, i)?;
                for l in 0..d {
                    grad_measured[l] = grad_measured[l].max(g.weight_norm(l));
                }
            }
        }

        let linear_rademacher = if p.shape().activation == Activation::Linear && k == 1 {
            let b = linear_rademacher_bound(z, r, probes)?;
            Some((b, b / probes.len() as f64))
        } else {
            None
        };

        Ok(Self {
            r,
            weight_frobenius,
            weight_spectral,
            distance_frobenius: geom.layer,
            l2_product: l2,
            spectral_product: sp,
            spectral_measure: h.powi(d as i32 - 1) * sp,
            spectral_from_distance: Certificate::new(spectral_bound_at_radius(z, r), sp),
            output: Certificate::new(out_bound, out_measured),
            gradient: grad_bound
                .into_iter()
                .zip(grad_measured)
                .map(|(b, m)| Certificate::new(b, m))
                .collect(),
            linear_rademacher,
        })
    }

    /// Names of every certificate that fails.
    pub fn violations(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if !self.spectral_from_distance.holds() {
            bad.push("spectral_from_distance".to_string());
        }
        if !self.output.holds() {
            bad.push("output_bound".to_string());
        }
        for (l, c) in self.gradient.iter().enumerate() {
            if !c.holds() {
                bad.push(format!("gradient_bound_layer{}", l + 1));
            }
        }
        bad
    }

    pub fn all_finite(&self) -> bool {
        let scalars = [
            self.r,
            self.l2_product,
            self.spectral_product,
            self.spectral_measure,
            self.spectral_from_distance.bound,
            self.output.bound,
        ];
        scalars.iter().all(|v| v.is_finite())
            && self
                .weight_frobenius
                .iter()
                .chain(&self.weight_spectral)
                .chain(&self.distance_frobenius)
                .chain(self.gradient.iter().map(|c| &c.bound))
                .all(|v| v.is_finite())
    }

    /// Fixed-order `(column, value)` pairs; per-layer columns are suffixed
    /// with the 1-based layer index.
    pub fn columns(&self) -> Vec<(String, f64)> {
        let mut cols = vec![
            ("r".to_string(), self.r),
            ("l2_product".to_string(), self.l2_product),
            ("spectral_product".to_string(), self.spectral_product),
            ("spectral_measure".to_string(), self.spectral_measure),
            ("spectral_from_distance_bound".to_string(), self.spectral_from_distance.bound),
            ("output_bound".to_string(), self.output.bound),
            ("output_measured".to_string(), self.output.measured.unwrap_or(f64::NAN)),
        ];
        for (l, c) in self.gradient.iter().enumerate() {
            cols.push((format!("gradient_bound_{}", l + 1), c.bound));
            cols.push((format!("gradient_measured_{}", l + 1), c.measured.unwrap_or(f64::NAN)));
        }
        for (l, v) in self.weight_frobenius.iter().enumerate() {
            cols.push((format!("frobenius_{}", l + 1), *v));
        }
        for (l, v) in self.weight_spectral.iter().enumerate() {
            cols.push((format!("spectral_{}", l + 1), *v));
        }
        for (l, v) in self.distance_frobenius.iter().enumerate() {
            cols.push((format!("distance_{}", l + 1), *v));
        }
        cols
    }
}

#[cfg(test)]
mod tests;
