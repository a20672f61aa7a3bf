//! Re-checks every certificate of a finished sweep from its saved checkpoints.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::record::{read_sweep_csv, SweepRecord};
use super::sweep::SWEEP_CSV;
use crate::capacity::{dominates, spectral_bound_at_radius, spectral_product, CapacityReport};
use crate::error::Result;
use crate::linalg::{hash_bytes, Rng};
use crate::network::checkpoint::load_checkpoint;
use crate::network::{distance_from_init, InitSnapshot, NetParams};

/// Tolerance on recomputing a recorded distance from its checkpoints.
pub const R_TOLERANCE: f64 = 1e-9;

/// Random inputs in `[0, 1]^n` used as certificate probes.
pub const VERIFY_PROBES: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub key: String,
    pub check: String,
    pub bound: f64,
    pub measured: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<BoundCheck>,
    /// Missing, unreadable or corrupt files and other problems that prevent a
    /// check from running. Any entry fails the report.
    pub problems: Vec<String>,
    pub checkpoints: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.problems.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &BoundCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{} {} {}: measured {:.6e} bound {:.6e}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.key,
                c.check,
                c.measured,
                c.bound
            ));
        }
        for p in &self.problems {
            s.push_str(&format!("ERROR {p}\n"));
        }
        let failed = self.failures().count();
        s.push_str(&format!(
            "{} checkpoints, {} checks, {} failed, {} problems\n",
            self.checkpoints,
            self.checks.len(),
            failed,
            self.problems.len()
        ));
        s
    }

    fn push(&mut self, key: &str, check: impl Into<String>, bound: f64, measured: f64, pass: bool) {
        self.checks.push(BoundCheck {
            key: key.to_string(),
            check: check.into(),
            bound,
            measured,
            pass,
        });
    }
}

#[derive(Default)]
struct Pair {
    init: Option<PathBuf>,
    fin: Option<PathBuf>,
}

fn scan(dir: &Path) -> Result<BTreeMap<String, Pair>> {
    let mut pairs: BTreeMap<String, Pair> = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| crate::error::Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(key) = name.strip_suffix("_init.icap") {
            pairs.entry(key.to_string()).or_default().init = Some(path.clone());
        } else if let Some(key) = name.strip_suffix("_final.icap") {
            pairs.entry(key.to_string()).or_default().fin = Some(path.clone());
        }
    }
    Ok(pairs)
}

fn probes(key: &str, n: usize) -> Vec<Vec<f64>> {
    let mut rng = Rng::new(hash_bytes(key.as_bytes()));
    (0..VERIFY_PROBES)
        .map(|_| (0..n).map(|_| rng.uniform()).collect())
        .collect()
}

fn check_pair(report: &mut VerifyReport, key: &str, p: &NetParams, z: &InitSnapshot, rec: Option<&SweepRecord>) {
    let r = match distance_from_init(p, z) {
        Ok(r) => r,
        Err(e) => {
            report.problems.push(format!("{key}: {e}"));
            return;
        }
    };
    // The recorded distance is what the sweep reported; certificates are
    // evaluated at that radius so a checkpoint altered after the fact shows
    // up as a violation.
    let radius = match rec {
        Some(rec) => {
            let diff = (rec.r - r).abs();
            report.push(key, "r_recomputed", R_TOLERANCE, diff, diff <= R_TOLERANCE);
            rec.r
        }
        None => r,
    };
    let sp = spectral_product(p);
    let sb = spectral_bound_at_radius(z, radius);
    report.push(key, "spectral_from_distance", sb, sp, dominates(sb, sp));

    let xs = probes(key, p.shape().input_dim);
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    match CapacityReport::compute(p, z, &refs) {
        Ok(cap) => {
            if let Some(m) = cap.output.measured {
                report.push(key, "output", cap.output.bound, m, cap.output.holds());
            }
            for (l, c) in cap.gradient.iter().enumerate() {
                if let Some(m) = c.measured {
                    report.push(key, format!("gradient_{}", l + 1), c.bound, m, c.holds());
                }
            }
        }
        Err(e) => report.problems.push(format!("{key}: {e}")),
    }
}

/// Verifies every checkpoint pair in `dir` against `sweep.csv` (if present).
pub fn verify_bounds(dir: &Path) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    let pairs = scan(dir)?;
    if pairs.is_empty() {
        report.problems.push(format!("no checkpoints in {}", dir.display()));
        return Ok(report);
    }
    let csv = dir.join(SWEEP_CSV);
    let records: BTreeMap<String, SweepRecord> = if csv.exists() {
        match read_sweep_csv(&csv) {
            Ok(rows) => rows.into_iter().map(|r| (r.key.clone(), r)).collect(),
            Err(e) => {
                report.problems.push(format!("{}: {e}", csv.display()));
                BTreeMap::new()
            }
        }
    } else {
        BTreeMap::new()
    };

    for (key, pair) in &pairs {
        let rec = records.get(key);
        if let Some(rec) = rec {
            if rec.initial_loss_bound.is_finite() {
                report.push(
                    key,
                    "initial_loss",
                    rec.initial_loss_bound,
                    rec.initial_sq_loss,
                    dominates(rec.initial_loss_bound, rec.initial_sq_loss),
                );
            }
        }
        let Some(init_path) = &pair.init else {
            report.problems.push(format!("{key}: missing initialization checkpoint"));
            continue;
        };
        let z = match load_checkpoint(init_path) {
            Ok(z) => {
                report.checkpoints += 1;
                InitSnapshot::new(z)
            }
            Err(e) => {
                report.problems.push(format!("{}: {e}", init_path.display()));
                continue;
            }
        };
        let Some(fin_path) = &pair.fin else {
            let diverged = rec.is_some_and(|r| r.status == "diverged" || !r.succeeded());
            if !diverged {
                report.problems.push(format!("{key}: missing final checkpoint"));
            }
            continue;
        };
        let p = match load_checkpoint(fin_path) {
            Ok(p) => {
                report.checkpoints += 1;
                p
            }
            Err(e) => {
                report.problems.push(format!("{}: {e}", fin_path.display()));
                continue;
            }
        };
        check_pair(&mut report, key, &p, &z, rec);
    }
    for key in records.keys() {
        let rec = &records[key];
        if rec.succeeded() && !pairs.contains_key(key) {
            report.problems.push(format!("{key}: listed in {SWEEP_CSV} but has no checkpoints"));
        }
    }
    Ok(report)
}
