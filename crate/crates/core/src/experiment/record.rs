//! The sweep CSV: one row per grid point with a fixed, versioned header.

use std::path::Path;

use crate::error::{Error, Result};

/// Bumped whenever [`COLUMNS`] changes.
pub const SCHEMA_VERSION: u32 = 1;

/// Header of the sweep CSV, in order.
pub const COLUMNS: [&str; 33] = [
    "schema_version",
    "experiment",
    "profile",
    "dataset",
    "key",
    "seed",
    "point_seed",
    "H",
    "m",
    "noise",
    "depth",
    "loss",
    "stop",
    "lr",
    "momentum",
    "status",
    "epochs",
    "initial_loss",
    "final_train_loss",
    "train_error",
    "test_error",
    "r",
    "l2_product",
    "spectral_product",
    "spectral_measure",
    "spectral_bound",
    "output_bound",
    "output_measured",
    "grad_ratio_max",
    "initial_sq_loss",
    "initial_loss_bound",
    "certificates_ok",
    "wall_time_s",
];

/// Columns that legitimately differ between reruns of the same sweep.
pub const TIMING_COLUMNS: [&str; 1] = ["wall_time_s"];

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub experiment: String,
    pub profile: String,
    pub dataset: String,
    /// File-name stem of the point's checkpoints.
    pub key: String,
    /// Replicate seed from the seed list.
    pub seed: u64,
    /// Derived seed of this grid point.
    pub point_seed: u64,
    pub width: usize,
    pub m: usize,
    pub noise: f64,
    pub depth: usize,
    pub loss: String,
    pub stop: String,
    pub lr: f64,
    pub momentum: f64,
    /// `converged`, `epoch_limit`, `diverged`, or `failed: <reason>`.
    pub status: String,
    pub epochs: usize,
    pub initial_loss: f64,
    pub final_train_loss: f64,
    pub train_error: f64,
    pub test_error: f64,
    pub r: f64,
    pub l2_product: f64,
    pub spectral_product: f64,
    pub spectral_measure: f64,
    /// `Π (‖Z_k‖₂ + r)`.
    pub spectral_bound: f64,
    pub output_bound: f64,
    pub output_measured: f64,
    /// Largest measured/bound ratio over the per-layer gradient certificates.
    pub grad_ratio_max: f64,
    /// Mean squared loss of the initial network on the training set.
    pub initial_sq_loss: f64,
    pub initial_loss_bound: f64,
    pub certificates_ok: bool,
    pub wall_time_s: f64,
}

impl SweepRecord {
    /// A row for a point that failed before producing measurements.
    pub fn failed(template: SweepRecord, reason: &str) -> Self {
        SweepRecord {
            status: format!("failed: {reason}"),
            certificates_ok: false,
            ..template
        }
    }

    pub fn succeeded(&self) -> bool {
        !self.status.starts_with("failed")
    }

    pub fn to_row(&self) -> Vec<String> {
        let f = |v: f64| v.to_string();
        vec![
            SCHEMA_VERSION.to_string(),
            self.experiment.clone(),
            self.profile.clone(),
            self.dataset.clone(),
            self.key.clone(),
            self.seed.to_string(),
            self.point_seed.to_string(),
            self.width.to_string(),
            self.m.to_string(),
            f(self.noise),
            self.depth.to_string(),
            self.loss.clone(),
            self.stop.clone(),
            f(self.lr),
            f(self.momentum),
            self.status.clone(),
            self.epochs.to_string(),
            f(self.initial_loss),
            f(self.final_train_loss),
            f(self.train_error),
            f(self.test_error),
            f(self.r),
            f(self.l2_product),
            f(self.spectral_product),
            f(self.spectral_measure),
            f(self.spectral_bound),
            f(self.output_bound),
            f(self.output_measured),
            f(self.grad_ratio_max),
            f(self.initial_sq_loss),
            f(self.initial_loss_bound),
            self.certificates_ok.to_string(),
            f(self.wall_time_s),
        ]
    }

    pub fn from_row(row: &[String]) -> Result<Self> {
        if row.len() != COLUMNS.len() {
            return Err(Error::arg(format!(
                "sweep row has {} fields, expected {}",
                row.len(),
                COLUMNS.len()
            )));
        }
        if row[0] != SCHEMA_VERSION.to_string() {
            return Err(Error::arg(format!(
                "sweep row has schema version {}, expected {SCHEMA_VERSION}",
                row[0]
            )));
        }
        fn num<T: std::str::FromStr>(row: &[String], i: usize) -> Result<T> {
            row[i]
                .parse()
                .map_err(|_| Error::arg(format!("column {}: cannot parse '{}'", COLUMNS[i], row[i])))
        }
        Ok(SweepRecord {
            experiment: row[1].clone(),
            profile: row[2].clone(),
            dataset: row[3].clone(),
            key: row[4].clone(),
            seed: num(row, 5)?,
            point_seed: num(row, 6)?,
            width: num(row, 7)?,
            m: num(row, 8)?,
            noise: num(row, 9)?,
            depth: num(row, 10)?,
            loss: row[11].clone(),
            stop: row[12].clone(),
            lr: num(row, 13)?,
            momentum: num(row, 14)?,
            status: row[15].clone(),
            epochs: num(row, 16)?,
            initial_loss: num(row, 17)?,
            final_train_loss: num(row, 18)?,
            train_error: num(row, 19)?,
            test_error: num(row, 20)?,
            r: num(row, 21)?,
            l2_product: num(row, 22)?,
            spectral_product: num(row, 23)?,
            spectral_measure: num(row, 24)?,
            spectral_bound: num(row, 25)?,
            output_bound: num(row, 26)?,
            output_measured: num(row, 27)?,
            grad_ratio_max: num(row, 28)?,
            initial_sq_loss: num(row, 29)?,
            initial_loss_bound: num(row, 30)?,
            certificates_ok: num(row, 31)?,
            wall_time_s: num(row, 32)?,
        })
    }
}

pub fn write_sweep_csv(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record(r.to_row())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let table = CsvTable::read(path)?;
    if table.header != COLUMNS {
        return Err(Error::arg(format!(
            "{}: header does not match sweep schema version {SCHEMA_VERSION}",
            path.display()
        )));
    }
    table.rows.iter().map(|r| SweepRecord::from_row(r)).collect()
}

/// A CSV file held as strings, addressed by column name.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(file);
        let header = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(Self { header, rows })
    }

    /// Index of `name`, or an argument error listing the available columns.
    pub fn column(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| {
            Error::arg(format!(
                "unknown column '{name}'; available: {}",
                self.header.join(", ")
            ))
        })
    }

    /// Column `name` parsed as numbers.
    pub fn numeric(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column(name)?;
        self.rows
            .iter()
            .map(|r| {
                r[i].parse::<f64>()
                    .map_err(|_| Error::arg(format!("column {name}: '{}' is not a number", r[i])))
            })
            .collect()
    }
}
