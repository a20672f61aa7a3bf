//! Monte-Carlo estimates of the empirical Rademacher complexity of the ball
//! `{(W, B) : ‖(W, B) − (Z, C)‖_F ≤ r}` on a fixed set of inputs.
//!
//! For each sign vector `ξ` the inner supremum of `Σ_i ξ_i f(x_i)` is
//! approached by projected gradient ascent over the concatenated parameter
//! displacement. Ascent only ever finds feasible points, so every per-trial
//! value is a lower bound on the true supremum.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Rng;
use crate::network::{InitSnapshot, NetParams};
use crate::training::{backward_batch, forward_batch};

/// Largest parameter count [`brute_force_sup`] accepts.
pub const BRUTE_FORCE_MAX_PARAMS: usize = 64;

/// Inner-maximization budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentConfig {
    pub restarts: usize,
    pub steps: usize,
    /// Initial step length; step `t` moves `step_size/√t` along the
    /// normalized gradient. `None` uses `0.3·r`.
    pub step_size: Option<f64>,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            steps: 200,
            step_size: None,
        }
    }
}

impl AscentConfig {
    fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::arg("restarts must be at least 1"));
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::arg(format!("step size must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadEstimate {
    pub mean: f64,
    /// Sample standard deviation of the per-trial values over `√trials`.
    pub std_error: f64,
    /// Trials that produced a finite value.
    pub trials: usize,
    pub inner_restarts: usize,
    pub per_trial: Vec<f64>,
    /// Trials dropped because the objective became non-finite.
    pub discarded: usize,
}

/// Inputs stacked row-major, with their count.
struct Problem<'a> {
    z: &'a InitSnapshot,
    r: f64,
    x: Vec<f64>,
    m: usize,
}

impl<'a> Problem<'a> {
    fn new(z: &'a InitSnapshot, r: f64, xs: &[&[f64]]) -> Result<Self> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::arg(format!("radius must be finite and >= 0, got {r}")));
        }
        let s = z.shape();
        if s.output_dim != 1 {
            return Err(Error::arg(format!(
                "Rademacher estimation needs a single-output network, got {} outputs",
                s.output_dim
            )));
        }
        if xs.is_empty() {
            return Err(Error::arg("no inputs"));
        }
        let mut x = Vec::with_capacity(xs.len() * s.input_dim);
        for xi in xs {
            if xi.len() != s.input_dim {
                return Err(Error::dims("rademacher inputs", s.input_dim, xi.len()));
            }
            x.extend_from_slice(xi);
        }
        Ok(Self {
            z,
            r,
            x,
            m: xs.len(),
        })
    }

    fn check_signs(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.m {
            return Err(Error::dims("sign vector", self.m, xi.len()));
        }
        if xi.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::arg("sign vector entries must be +1 or -1"));
        }
        Ok(())
    }

    fn params_at(&self, base: &[f64], disp: &[f64], scratch: &mut NetParams) {
        let flat: Vec<f64> = base.iter().zip(disp).map(|(a, b)| a + b).collect();
        scratch.set_flat(&flat).expect("length matches shape");
    }

    /// `Σ_i ξ_i f(x_i)`.
    fn objective(&self, p: &NetParams, xi: &[f64]) -> f64 {
        let cache = forward_batch(p, self.x.clone(), self.m);
        cache.output().iter().zip(xi).map(|(f, s)| f * s).sum()
    }

    /// Objective and its gradient in the flat parameter layout.
    fn objective_and_gradient(&self, p: &NetParams, xi: &[f64]) -> (f64, Vec<f64>) {
        let cache = forward_batch(p, self.x.clone(), self.m);
        let value = cache.output().iter().zip(xi).map(|(f, s)| f * s).sum();
        (value, backward_batch(p, &cache, xi).to_flat())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn project(v: &mut [f64], r: f64) {
    let n = norm(v);
    if n > r {
        let s = if n > 0.0 { r / n } else { 0.0 };
        v.iter_mut().for_each(|a| *a *= s);
    }
}

/// Uniform point of the `dim`-dimensional ball of radius `r`.
pub fn uniform_in_ball(rng: &mut Rng, dim: usize, r: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
    let n = norm(&v);
    let radius = r * rng.uniform().powf(1.0 / dim as f64);
    if n > 0.0 {
        v.iter_mut().for_each(|a| *a *= radius / n);
    }
    v
}

/// Candidate starts tried by each random restart.
const CANDIDATES: usize = 16;

/// Best point seen so far.
struct Incumbent {
    value: f64,
    disp: Vec<f64>,
}

impl Incumbent {
    fn offer(&mut self, value: f64, disp: &[f64]) {
        if value > self.value {
            self.value = value;
            self.disp.clear();
            self.disp.extend_from_slice(disp);
        }
    }
}

/// Normalized projected gradient steps `t ∈ steps` from `disp`, each of
/// length `step0/√t`, offering every iterate to `inc`. Returns the value at
/// the final iterate, or NaN if the objective became non-finite.
#[allow(clippy::too_many_arguments)]
fn climb(
    prob: &Problem<'_>,
    base: &[f64],
    scratch: &mut NetParams,
    xi: &[f64],
    disp: &mut [f64],
    steps: std::ops::RangeInclusive<usize>,
    step0: f64,
    inc: &mut Incumbent,
) -> f64 {
    for t in steps {
        prob.params_at(base, disp, scratch);
        let (value, grad) = prob.objective_and_gradient(scratch, xi);
        if !value.is_finite() {
            return f64::NAN;
        }
        inc.offer(value, disp);
        let g = norm(&grad);
        if prob.r == 0.0 || g == 0.0 || !g.is_finite() {
            return value;
        }
        let eta = step0 / (t as f64).sqrt() / g;
        disp.iter_mut().zip(&grad).for_each(|(d, gi)| *d += eta * gi);
        project(disp, prob.r);
    }
    prob.params_at(base, disp, scratch);
    let value = prob.objective(scratch, xi);
    if value.is_finite() {
        inc.offer(value, disp);
    }
    if value.is_finite() { value } else { f64::NAN }
}

/// Best value of `Σ_i ξ_i f(x_i)` found by projected gradient ascent with
/// restarts. Restart 0 starts at the center. Each other restart climbs a
/// tenth of the steps from [`CANDIDATES`] uniform points of the ball and
/// finishes from the most promising one, which keeps it out of flat regions
/// where every unit is inactive. A last run with a tenth of the step length
/// polishes the best point found, since long steps keep jumping over narrow
/// ridges of the piecewise-linear objective. Returns NaN if the objective
/// became non-finite.
fn ascend(prob: &Problem<'_>, xi: &[f64], cfg: &AscentConfig, rng: &mut Rng) -> f64 {
    let base = prob.z.params().to_flat();
    let dim = base.len();
    let mut scratch = prob.z.params().clone();
    let step0 = cfg.step_size.unwrap_or(0.3 * prob.r);
    let mut inc = Incumbent {
        value: f64::NEG_INFINITY,
        disp: vec![0.0; dim],
    };
    let probe = (cfg.steps / 10).max(1).min(cfg.steps);
    for restart in 0..cfg.restarts {
        let v = if restart == 0 || prob.r == 0.0 {
            let mut disp = vec![0.0; dim];
            climb(prob, &base, &mut scratch, xi, &mut disp, 1..=cfg.steps, step0, &mut inc)
        } else {
            let mut lead: Option<(f64, Vec<f64>)> = None;
            for _ in 0..CANDIDATES {
                let mut disp = uniform_in_ball(rng, dim, prob.r);
                let v = climb(prob, &base, &mut scratch, xi, &mut disp, 1..=probe, step0, &mut inc);
                if v.is_nan() {
                    return f64::NAN;
                }
                if lead.as_ref().map_or(true, |(lv, _)| v > *lv) {
                    lead = Some((v, disp));
                }
            }
            let (_, mut disp) = lead.expect("at least one candidate");
            climb(prob, &base, &mut scratch, xi, &mut disp, probe + 1..=cfg.steps, step0, &mut inc)
        };
        if v.is_nan() {
            return f64::NAN;
        }
    }
    if prob.r > 0.0 {
        let mut disp = inc.disp.clone();
        let v = climb(prob, &base, &mut scratch, xi, &mut disp, 1..=cfg.steps, 0.1 * step0, &mut inc);
        if v.is_nan() {
            return f64::NAN;
        }
    }
    inc.value
}

/// Projected-gradient-ascent value of `sup Σ_i ξ_i f(x_i)` over the ball for
/// one fixed sign vector.
pub fn maximize(
    z: &InitSnapshot,
    r: f64,
    xs: &[&[f64]],
    xi: &[f64],
    cfg: &AscentConfig,
    rng: &mut Rng,
) -> Result<f64> {
    cfg.validate()?;
    let prob = Problem::new(z, r, xs)?;
    prob.check_signs(xi)?;
    let v = ascend(&prob, xi, cfg, rng);
    if v.is_nan() {
        return Err(Error::Estimation("objective became non-finite".into()));
    }
    Ok(v)
}

/// `E_ξ sup Σ_i ξ_i f(x_i)` over the ball of radius `r` around `z`, averaged
/// over `trials` uniform sign vectors.
///
/// Trial `t` draws its signs and restarts from `rng.fork(t)`, so the result
/// does not depend on how trials are scheduled across threads.
pub fn estimate(
    z: &InitSnapshot,
    r: f64,
    xs: &[&[f64]],
    trials: usize,
    cfg: &AscentConfig,
    rng: &Rng,
) -> Result<RadEstimate> {
    if trials == 0 {
        return Err(Error::arg("trials must be at least 1"));
    }
    cfg.validate()?;
    let prob = Problem::new(z, r, xs)?;
    let values: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut trng = rng.fork(t);
            let xi: Vec<f64> = (0..prob.m).map(|_| trng.sign()).collect();
            ascend(&prob, &xi, cfg, &mut trng)
        })
        .collect();
    let per_trial: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let discarded = trials - per_trial.len();
    if discarded * 10 > trials {
        return Err(Error::Estimation(format!(
            "{discarded} of {trials} trials had a non-finite objective"
        )));
    }
    let n = per_trial.len() as f64;
    let mean = per_trial.iter().sum::<f64>() / n;
    let std_error = if per_trial.len() > 1 {
        let var = per_trial.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(RadEstimate {
        mean,
        std_error,
        trials: per_trial.len(),
        inner_restarts: cfg.restarts,
        per_trial,
        discarded,
    })
}

/// Best objective over `samples` uniform draws from the ball, together with
/// the displacement that achieved it. Draw 0 is the center itself.
pub fn brute_force_argmax(
    z: &InitSnapshot,
    r: f64,
    xs: &[&[f64]],
    xi: &[f64],
    samples: usize,
    rng: &mut Rng,
) -> Result<(f64, Vec<f64>)> {
    let dim = z.shape().num_params();
    if dim > BRUTE_FORCE_MAX_PARAMS {
        return Err(Error::arg(format!(
            "brute force needs at most {BRUTE_FORCE_MAX_PARAMS} parameters, got {dim}"
        )));
    }
    let prob = Problem::new(z, r, xs)?;
    prob.check_signs(xi)?;
    let base = z.params().to_flat();
    let mut scratch = z.params().clone();
    let mut best_disp = vec![0.0; dim];
    let mut best = prob.objective(z.params(), xi);
    for _ in 0..samples {
        let disp = uniform_in_ball(rng, dim, r);
        prob.params_at(&base, &disp, &mut scratch);
        let v = prob.objective(&scratch, xi);
        if v > best {
            best = v;
            best_disp = disp;
        }
    }
    Ok((best, best_disp))
}

/// Largest objective over `samples` uniform draws from the ball.
pub fn brute_force_sup(
    z: &InitSnapshot,
    r: f64,
    xs: &[&[f64]],
    xi: &[f64],
    samples: usize,
    rng: &mut Rng,
) -> Result<f64> {
    Ok(brute_force_argmax(z, r, xs, xi, samples, rng)?.0)
}

/// Gradient-free local search from displacement `start`: Gaussian proposals
/// with a shrinking radius, projected back into the ball, accepted when they
/// improve the objective.
pub fn refine_by_search(
    z: &InitSnapshot,
    r: f64,
    xs: &[&[f64]],
    xi: &[f64],
    start: &[f64],
    iters: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let prob = Problem::new(z, r, xs)?;
    prob.check_signs(xi)?;
    let base = z.params().to_flat();
    if start.len() != base.len() {
        return Err(Error::dims("refine start", base.len(), start.len()));
    }
    let mut scratch = z.params().clone();
    let mut cur = start.to_vec();
    project(&mut cur, r);
    prob.params_at(&base, &cur, &mut scratch);
    let mut best = prob.objective(&scratch, xi);
    let mut sigma = 0.1 * r;
    let mut accepted = 0usize;
    for it in 1..=iters {
        let mut cand: Vec<f64> = cur.iter().map(|v| v + sigma * rng.standard_normal()).collect();
        project(&mut cand, r);
        prob.params_at(&base, &cand, &mut scratch);
        let v = prob.objective(&scratch, xi);
        if v > best {
            best = v;
            cur = cand;
            accepted += 1;
        }
        if it % 100 == 0 {
            // Keep the acceptance rate in a useful range.
            sigma *= if accepted > 20 { 1.5 } else { 0.6 };
            accepted = 0;
        }
    }
    Ok(best)
}
