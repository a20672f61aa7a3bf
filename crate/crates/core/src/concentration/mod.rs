//! Simulation checks of the Gaussian concentration facts behind the
//! certificates: chi-square tails, the spectral norm of Gaussian matrices,
//! width scaling of Xavier initial norms, and the second-moment identity for
//! Rademacher sums.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, Rng};
use crate::network::{xavier_init, Activation, NetShape};

/// Calibration constant for the spectral deviation scale `K·√(n2/n1)`.
pub const SPECTRAL_K: f64 = 5.0;

/// One checked cell: an empirical statistic next to its theoretical limit.
#[derive(Debug, Clone, PartialEq)]
pub struct TailCell {
    pub check: &'static str,
    pub params: Vec<(&'static str, f64)>,
    pub empirical: f64,
    pub bound: f64,
    /// Monte-Carlo allowance added to `bound` before comparing.
    pub slack: f64,
    pub samples: usize,
    pub pass: bool,
}

impl TailCell {
    fn param_string(&self) -> String {
        self.params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TailReport {
    pub cells: Vec<TailCell>,
}

impl TailReport {
    pub fn all_pass(&self) -> bool {
        self.cells.iter().all(|c| c.pass)
    }

    pub fn total_samples(&self) -> usize {
        self.cells.iter().map(|c| c.samples).sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["check", "params", "empirical", "bound", "slack", "samples", "pass"])?;
        for c in &self.cells {
            w.write_record([
                c.check.to_string(),
                c.param_string(),
                c.empirical.to_string(),
                c.bound.to_string(),
                c.slack.to_string(),
                c.samples.to_string(),
                if c.pass { "PASS" } else { "FAIL" }.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Fixed-width PASS/FAIL table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<18} {:<28} {:>12} {:>12} {:>10} {:>6}",
            "check", "params", "empirical", "bound", "samples", "result"
        );
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{:<18} {:<28} {:>12.4e} {:>12.4e} {:>10} {:>6}",
                c.check,
                c.param_string(),
                c.empirical,
                c.bound + c.slack,
                c.samples,
                if c.pass { "PASS" } else { "FAIL" }
            );
        }
        out
    }

    pub fn print_table(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(self.table().as_bytes())
    }
}

/// Three binomial standard errors at success probability `p` (clamped to
/// `[0, 1]`).
fn binomial_slack(p: f64, samples: usize) -> f64 {
    let p = p.clamp(0.0, 1.0);
    3.0 * (p * (1.0 - p) / samples as f64).sqrt()
}

/// Frequency of `|(1/k) Σ z_i² − 1| ≥ t` over `samples` draws, against the
/// tail bound `2·exp(−k t²/8)`.
pub fn verify_chisq_tail(k: usize, t: f64, samples: usize, rng: &mut Rng) -> Result<TailCell> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::arg(format!("t must lie in (0, 1), got {t}")));
    }
    if k == 0 || samples == 0 {
        return Err(Error::arg("k and samples must be positive"));
    }
    let mut hits = 0usize;
    for _ in 0..samples {
        let mean = (0..k)
            .map(|_| {
                let z = rng.standard_normal();
                z * z
            })
            .sum::<f64>()
            / k as f64;
        if (mean - 1.0).abs() >= t {
            hits += 1;
        }
    }
    let freq = hits as f64 / samples as f64;
    let bound = 2.0 * (-(k as f64) * t * t / 8.0).exp();
    let slack = binomial_slack(bound, samples);
    Ok(TailCell {
        check: "chisq_tail",
        params: vec![("k", k as f64), ("t", t)],
        empirical: freq,
        bound,
        slack,
        samples,
        pass: freq <= bound + slack,
    })
}

/// Result of one Gaussian spectral-norm cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCell {
    pub n1: usize,
    pub n2: usize,
    pub samples: usize,
    /// Median of `‖W‖₂ / √n1`.
    pub median_scaled_norm: f64,
    /// Median of `|‖W‖₂² / n1 − 1|`.
    pub median_deviation: f64,
    /// `K · √(n2/n1)`.
    pub bound: f64,
    pub pass: bool,
}

impl SpectralCell {
    pub fn cell(&self) -> TailCell {
        TailCell {
            check: "gaussian_spectral",
            params: vec![("n1", self.n1 as f64), ("n2", self.n2 as f64)],
            empirical: self.median_deviation,
            bound: self.bound,
            slack: 0.0,
            samples: self.samples,
            pass: self.pass,
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Concentration of `‖W‖₂² / n1` for `n1 × n2` matrices with i.i.d. entries
/// of standard deviation `std` (1 for the check proper).
pub(crate) fn spectral_cell_with_std(
    n1: usize,
    n2: usize,
    samples: usize,
    std: f64,
    rng: &mut Rng,
) -> Result<SpectralCell> {
    if n2 == 0 || n1 < n2 {
        return Err(Error::arg(format!("need n1 >= n2 >= 1, got {n1} x {n2}")));
    }
    if samples == 0 {
        return Err(Error::arg("samples must be positive"));
    }
    let mut scaled = Vec::with_capacity(samples);
    let mut dev = Vec::with_capacity(samples);
    for _ in 0..samples {
        let w = gaussian_matrix(rng, n1, n2, std)?;
        let s = w.spectral_norm();
        scaled.push(s / (n1 as f64).sqrt());
        dev.push((s * s / n1 as f64 - 1.0).abs());
    }
    let median_deviation = median(dev);
    let bound = SPECTRAL_K * (n2 as f64 / n1 as f64).sqrt();
    Ok(SpectralCell {
        n1,
        n2,
        samples,
        median_scaled_norm: median(scaled),
        median_deviation,
        bound,
        pass: median_deviation <= bound,
    })
}

/// Checks that `sup_u ‖Wu‖² / n1` for standard Gaussian `n1 × n2` matrices
/// deviates from 1 by at most `K·√(n2/n1)` in median.
pub fn verify_gaussian_spectral(
    n1: usize,
    n2: usize,
    samples: usize,
    rng: &mut Rng,
) -> Result<SpectralCell> {
    spectral_cell_with_std(n1, n2, samples, 1.0, rng)
}

/// Slope of the least-squares line through `(xs, ys)`.
fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Width scaling of fresh Xavier norms.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub widths: Vec<usize>,
    /// Mean over reps of the average `log ‖Z_k‖_F` across hidden layers.
    pub hidden_frobenius_log: Vec<f64>,
    pub hidden_spectral_log: Vec<f64>,
    pub output_frobenius_log: Vec<f64>,
    /// Slopes of the log norms against `log H`.
    pub hidden_frobenius_slope: f64,
    pub hidden_spectral_slope: f64,
    pub output_frobenius_slope: f64,
    /// Largest `|‖Z₁‖_F / √n − 1|` over all draws.
    pub first_layer_rel_error: f64,
    pub pass: bool,
}

/// Fresh Xavier inits of depth `d` (one output) at every width in `widths`,
/// `reps` draws each. Passes when the hidden Frobenius slope is in
/// `[0.45, 0.55]`, the hidden spectral and output Frobenius slopes are in
/// `[−0.05, 0.05]`, and `‖Z₁‖_F` is within 15% of `√n`.
pub fn verify_init_scalings(
    widths: &[usize],
    d: usize,
    input_dim: usize,
    reps: usize,
    rng: &Rng,
) -> Result<ScalingReport> {
    if widths.len() < 4 || widths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::arg("width grid must be ascending with at least 4 points"));
    }
    if d < 3 || reps == 0 {
        return Err(Error::arg("need depth >= 3 (one hidden-to-hidden layer) and reps >= 1"));
    }
    let per_width: Vec<Result<(f64, f64, f64, f64)>> = widths
        .par_iter()
        .map(|&h| {
            let shape = NetShape::new(input_dim, h, d, 1, Activation::Relu)?;
            let mut wrng = rng.fork(h as u64);
            let (mut fro, mut spec, mut out, mut first) = (0.0, 0.0, 0.0, 0.0f64);
            for _ in 0..reps {
                let p = xavier_init(&mut wrng, shape)?;
                let hidden = &p.weights()[1..d - 1];
                fro += hidden.iter().map(|w| w.frobenius_norm().ln()).sum::<f64>()
                    / hidden.len() as f64;
                spec += hidden.iter().map(|w| w.spectral_norm().ln()).sum::<f64>()
                    / hidden.len() as f64;
                out += p.weight(d - 1).frobenius_norm().ln();
                let rel = p.weight(0).frobenius_norm() / (input_dim as f64).sqrt() - 1.0;
                first = first.max(rel.abs());
            }
            let r = reps as f64;
            Ok((fro / r, spec / r, out / r, first))
        })
        .collect();
    let mut rows = Vec::with_capacity(widths.len());
    for r in per_width {
        rows.push(r?);
    }
    let log_h: Vec<f64> = widths.iter().map(|&h| (h as f64).ln()).collect();
    let hidden_frobenius_log: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let hidden_spectral_log: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let output_frobenius_log: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let first_layer_rel_error = rows.iter().map(|r| r.3).fold(0.0, f64::max);
    let hidden_frobenius_slope = ols_slope(&log_h, &hidden_frobenius_log);
    let hidden_spectral_slope = ols_slope(&log_h, &hidden_spectral_log);
    let output_frobenius_slope = ols_slope(&log_h, &output_frobenius_log);
    let pass = (0.45..=0.55).contains(&hidden_frobenius_slope)
        && hidden_spectral_slope.abs() <= 0.05
        && output_frobenius_slope.abs() <= 0.05
        && first_layer_rel_error <= 0.15;
    Ok(ScalingReport {
        widths: widths.to_vec(),
        hidden_frobenius_log,
        hidden_spectral_log,
        output_frobenius_log,
        hidden_frobenius_slope,
        hidden_spectral_slope,
        output_frobenius_slope,
        first_layer_rel_error,
        pass,
    })
}

/// Largest `m` for which the sign vectors are enumerated exhaustively.
pub const KK_ENUMERATION_MAX: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct KkReport {
    pub m: usize,
    /// `Σ_i ‖x_i‖²`.
    pub sum_sq: f64,
    /// `E_ξ ‖Σ ξ_i x_i‖²` and `E_ξ ‖Σ ξ_i x_i‖` over all `2^m` sign vectors.
    pub exact_second_moment: Option<f64>,
    pub exact_first_moment: Option<f64>,
    pub mc_second_moment: f64,
    pub mc_std_error: f64,
    pub mc_first_moment: f64,
    pub trials: usize,
    pub pass: bool,
}

fn signed_sum_norms(vectors: &[&[f64]], signs: impl Fn(usize) -> f64, acc: &mut [f64]) -> f64 {
    acc.iter_mut().for_each(|a| *a = 0.0);
    for (i, v) in vectors.iter().enumerate() {
        let s = signs(i);
        acc.iter_mut().zip(v.iter()).for_each(|(a, x)| *a += s * x);
    }
    acc.iter().map(|a| a * a).sum()
}

/// Checks `E_ξ ‖Σ ξ_i x_i‖² = Σ ‖x_i‖²` (exactly by enumeration when
/// `m ≤ 15`, within three standard errors by Monte Carlo otherwise) and
/// `E_ξ ‖Σ ξ_i x_i‖ ≤ √(Σ ‖x_i‖²)`.
pub fn verify_kk_identity(vectors: &[&[f64]], trials: usize, rng: &mut Rng) -> Result<KkReport> {
    let Some(first) = vectors.first() else {
        return Err(Error::arg("no vectors"));
    };
    let dim = first.len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::dims("kk vectors", dim, v.len()));
    }
    if trials < 2 {
        return Err(Error::arg("need at least 2 Monte-Carlo trials"));
    }
    let m = vectors.len();
    let sum_sq: f64 = vectors.iter().flat_map(|v| v.iter()).map(|x| x * x).sum();
    let mut acc = vec![0.0; dim];

    let (exact_second_moment, exact_first_moment) = if m <= KK_ENUMERATION_MAX {
        let count = 1u64 << m;
        let (mut s2, mut s1) = (0.0, 0.0);
        for mask in 0..count {
            let sq = signed_sum_norms(
                vectors,
                |i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 },
                &mut acc,
            );
            s2 += sq;
            s1 += sq.sqrt();
        }
        (Some(s2 / count as f64), Some(s1 / count as f64))
    } else {
        (None, None)
    };

    let mut draws = Vec::with_capacity(trials);
    let mut first_sum = 0.0;
    for _ in 0..trials {
        let xi: Vec<f64> = (0..m).map(|_| rng.sign()).collect();
        let sq = signed_sum_norms(vectors, |i| xi[i], &mut acc);
        first_sum += sq.sqrt();
        draws.push(sq);
    }
    let n = trials as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let mc_first_moment = first_sum / n;

    let tol = 1e-9 * sum_sq.max(1.0);
    let exact_ok = exact_second_moment.map_or(true, |e| (e - sum_sq).abs() <= tol)
        && exact_first_moment.map_or(true, |e| e <= sum_sq.sqrt() + tol);
    let mc_ok = (mean - sum_sq).abs() <= 3.0 * se + tol;
    Ok(KkReport {
        m,
        sum_sq,
        exact_second_moment,
        exact_first_moment,
        mc_second_moment: mean,
        mc_std_error: se,
        mc_first_moment,
        trials,
        pass: exact_ok && mc_ok,
    })
}

impl KkReport {
    pub fn cell(&self) -> TailCell {
        TailCell {
            check: "kk_identity",
            params: vec![("m", self.m as f64)],
            empirical: self.exact_second_moment.unwrap_or(self.mc_second_moment),
            bound: self.sum_sq,
            slack: if self.exact_second_moment.is_some() {
                0.0
            } else {
                3.0 * self.mc_std_error
            },
            samples: self.trials,
            pass: self.pass,
        }
    }
}

/// The default verification suite: chi-square tails on a `(k, t)` grid,
/// Gaussian spectral cells, and the second-moment identity at `m = 12` and
/// `m = 100`.
pub fn default_suite(rng: &Rng) -> Result<TailReport> {
    let mut cells = Vec::new();
    let chisq: [(usize, f64); 9] = [
        (1, 0.9),
        (10, 0.99),
        (10, 0.5),
        (50, 0.5),
        (100, 0.3),
        (200, 0.5),
        (500, 0.2),
        (1000, 0.1),
        (1000, 0.5),
    ];
    let chisq_cells: Vec<Result<TailCell>> = chisq
        .par_iter()
        .enumerate()
        .map(|(i, &(k, t))| verify_chisq_tail(k, t, 10_000, &mut rng.fork(i as u64)))
        .collect();
    for c in chisq_cells {
        cells.push(c?);
    }
    let spectral: [(usize, usize, usize); 5] =
        [(64, 64, 40), (256, 256, 20), (1024, 1, 200), (10_000, 1, 100), (512, 32, 40)];
    let spectral_cells: Vec<Result<SpectralCell>> = spectral
        .par_iter()
        .enumerate()
        .map(|(i, &(n1, n2, s))| verify_gaussian_spectral(n1, n2, s, &mut rng.fork(100 + i as u64)))
        .collect();
    for c in spectral_cells {
        cells.push(c?.cell());
    }
    let mut vrng = rng.fork(200);
    for m in [12usize, 100] {
        let vs: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..5).map(|_| vrng.standard_normal()).collect())
            .collect();
        let refs: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
        cells.push(verify_kk_identity(&refs, 20_000, &mut vrng)?.cell());
    }
    Ok(TailReport { cells })
}
