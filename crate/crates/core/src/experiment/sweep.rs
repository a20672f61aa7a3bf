//! Grid sweeps: train every `(H, m, noise, seed)` point from a fresh Xavier
//! initialization and record distance, norms and certificates.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::config::{DataSource, DatasetKind, ExperimentProfile, SweepConfig};
use super::record::{write_sweep_csv, SweepRecord};
use crate::capacity::{dominates, initial_loss_bound, CapacityReport};
use crate::data::{
    load_cifar10_dir, load_mnist_dir, subset, synthetic_split, two_class_filter, Dataset, Labels,
    MnistSplit, Provenance,
};
use crate::error::{Error, Result};
use crate::linalg::{hash_bytes, mix_seed, Rng};
use crate::network::checkpoint::save_checkpoint;
use crate::network::{xavier_init, InitSnapshot, NetShape};
use crate::training::{corrupt_labels, evaluate, sgd_train, Corruption, Loss, TrainStatus};

/// Name of the CSV written into the output directory.
pub const SWEEP_CSV: &str = "sweep.csv";

/// Stream tags separating the seeds derived for one grid point.
const DATA_STREAM: u64 = 1;
const CORRUPTION_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub width: usize,
    pub m: usize,
    pub noise: f64,
    pub seed: u64,
}

impl GridPoint {
    /// Seed of this point: a hash of the experiment id, `H`, `m`, the noise
    /// level and the replicate seed. Drives the SGD example order.
    pub fn point_seed(&self, experiment: &str) -> u64 {
        mix_seed(&[
            hash_bytes(experiment.as_bytes()),
            self.width as u64,
            self.m as u64,
            self.noise.to_bits(),
            self.seed,
        ])
    }

    /// Seed of the training/test draw and (with another stream) the label
    /// corruption. Shared by points that differ only in `H` or noise, so those
    /// comparisons see the same examples and nested corruptions.
    fn data_seed(&self, experiment: &str, stream: u64) -> u64 {
        mix_seed(&[hash_bytes(experiment.as_bytes()), self.m as u64, self.seed, stream])
    }

    /// Seed of the initialization; shared by points that differ only in `m`
    /// or noise.
    fn init_seed(&self, experiment: &str) -> u64 {
        mix_seed(&[hash_bytes(experiment.as_bytes()), self.width as u64, self.seed, INIT_STREAM])
    }

    /// File-name stem of the point's checkpoints.
    pub fn key(&self, experiment: &str) -> String {
        let id: String = experiment
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect();
        format!("{id}_H{}_m{}_noise{}_s{}", self.width, self.m, self.noise, self.seed)
    }
}

/// Grid points in key order: `H`, then `m`, then noise, then seed.
pub fn grid(cfg: &SweepConfig) -> Vec<GridPoint> {
    let mut widths = cfg.widths.clone();
    widths.sort_unstable();
    widths.dedup();
    let mut ms = cfg.sample_sizes.clone();
    ms.sort_unstable();
    ms.dedup();
    let mut noise = cfg.noise_levels.clone();
    noise.sort_by(f64::total_cmp);
    noise.dedup();
    let mut points = Vec::new();
    for &width in &widths {
        for &m in &ms {
            for &nz in &noise {
                for &seed in &cfg.seeds {
                    points.push(GridPoint {
                        width,
                        m,
                        noise: nz,
                        seed,
                    });
                }
            }
        }
    }
    points
}

pub fn init_checkpoint_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}_init.icap"))
}

pub fn final_checkpoint_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}_final.icap"))
}

/// Real data loaded once per sweep.
struct Loaded {
    train: Dataset,
    test: Dataset,
}

fn load_directory(dir: &Path, profile: ExperimentProfile) -> Result<Loaded> {
    let (train, test) = match profile.dataset_kind() {
        DatasetKind::Mnist => (
            load_mnist_dir(dir, MnistSplit::Train)?,
            load_mnist_dir(dir, MnistSplit::Test)?,
        ),
        DatasetKind::Cifar10 => (load_cifar10_dir(dir, false)?, load_cifar10_dir(dir, true)?),
    };
    if profile.two_class() {
        Ok(Loaded {
            train: two_class_filter(&train, 0, 1)?,
            test: two_class_filter(&test, 0, 1)?,
        })
    } else {
        Ok(Loaded { train, test })
    }
}

fn to_signs(data: &Dataset) -> Result<Dataset> {
    let Labels::Classes(c) = data.labels() else {
        return Ok(data.clone());
    };
    let signs = c.iter().map(|&c| if c == 0 { 1.0 } else { -1.0 }).collect();
    data.with_labels(Labels::Targets(signs), data.provenance().clone())
}

fn point_data(cfg: &SweepConfig, loaded: Option<&Loaded>, pt: &GridPoint) -> Result<(Dataset, Dataset)> {
    let exp = &cfg.experiment;
    let mut rng = Rng::new(pt.data_seed(exp, DATA_STREAM));
    let (train, test) = match (&cfg.source, loaded) {
        (
            DataSource::Synthetic {
                input_dim,
                num_classes,
                separation,
            },
            _,
        ) => {
            let k = if cfg.profile.two_class() { 2 } else { *num_classes };
            let (train, test) = synthetic_split(&mut rng, pt.m, cfg.test_size, *input_dim, k, *separation)?;
            if cfg.profile.two_class() {
                (to_signs(&train)?, to_signs(&test)?)
            } else {
                (train, test)
            }
        }
        (DataSource::Directory(_), Some(l)) => {
            let train = subset(&l.train, pt.m, &mut rng)?;
            let n_test = cfg.test_size.min(l.test.len());
            let test = l.test.select(&(0..n_test).collect::<Vec<_>>())?;
            (train, test)
        }
        (DataSource::Directory(d), None) => {
            return Err(Error::arg(format!("dataset {} was not loaded", d.display())))
        }
    };
    let mut crng = Rng::new(pt.data_seed(exp, CORRUPTION_STREAM));
    let train = match cfg.profile {
        ExperimentProfile::NoiseFull => corrupt_labels(&train, Corruption::FullRandomSign, &mut crng)?,
        _ if pt.noise > 0.0 => corrupt_labels(&train, Corruption::PartialFlip(pt.noise), &mut crng)?,
        _ => train,
    };
    Ok((train, test))
}

fn template(cfg: &SweepConfig, pt: &GridPoint, dataset: String) -> SweepRecord {
    let nan = f64::NAN;
    SweepRecord {
        experiment: cfg.experiment.clone(),
        profile: cfg.profile.name().to_string(),
        dataset,
        key: pt.key(&cfg.experiment),
        seed: pt.seed,
        point_seed: pt.point_seed(&cfg.experiment),
        width: pt.width,
        m: pt.m,
        noise: pt.noise,
        depth: cfg.depth,
        loss: cfg.train.loss.name().to_string(),
        stop: cfg.train.stop.describe(),
        lr: cfg.train.learning_rate,
        momentum: cfg.train.momentum,
        status: String::new(),
        epochs: 0,
        initial_loss: nan,
        final_train_loss: nan,
        train_error: nan,
        test_error: nan,
        r: nan,
        l2_product: nan,
        spectral_product: nan,
        spectral_measure: nan,
        spectral_bound: nan,
        output_bound: nan,
        output_measured: nan,
        grad_ratio_max: nan,
        initial_sq_loss: nan,
        initial_loss_bound: nan,
        certificates_ok: false,
        wall_time_s: 0.0,
    }
}

/// Trains and measures one grid point, saving its checkpoints into `dir`.
fn run_point(
    cfg: &SweepConfig,
    loaded: Option<&Loaded>,
    pt: &GridPoint,
    dir: &Path,
) -> Result<SweepRecord> {
    let start = Instant::now();
    let (train, test) = point_data(cfg, loaded, pt)?;
    let mut rec = template(cfg, pt, dataset_name(&train));
    let shape = NetShape::new(
        train.input_dim(),
        pt.width,
        cfg.depth,
        train.target_dim(),
        cfg.activation,
    )?;
    let mut p = xavier_init(&mut Rng::new(pt.init_seed(&cfg.experiment)), shape)?;
    let z = InitSnapshot::new(p.clone());
    save_checkpoint(z.params(), init_checkpoint_path(dir, &rec.key))?;

    let inputs: Vec<&[f64]> = (0..train.len()).map(|i| train.input(i)).collect();
    rec.initial_sq_loss = evaluate(z.params(), &train, Loss::Squared)?.loss;
    rec.initial_loss_bound = initial_loss_bound(&z, &inputs, train.max_abs_target())?;

    let train_cfg = crate::training::TrainConfig {
        seed: pt.point_seed(&cfg.experiment),
        ..cfg.train.clone()
    };
    let trace = sgd_train(&mut p, &z, &train, &train_cfg)?;
    rec.status = trace.status.name().to_string();
    rec.epochs = trace.epochs();
    rec.initial_loss = trace.initial_loss();
    rec.final_train_loss = trace.last().train_loss;
    rec.train_error = trace.last().train_error;
    if trace.status == TrainStatus::Diverged {
        rec.wall_time_s = start.elapsed().as_secs_f64();
        return Ok(rec);
    }
    save_checkpoint(&p, final_checkpoint_path(dir, &rec.key))?;
    rec.test_error = evaluate(&p, &test, cfg.train.loss)?.error_rate;

    let probes = &inputs[..cfg.probes.min(inputs.len())];
    let report = CapacityReport::compute(&p, &z, probes)?;
    rec.r = report.r;
    rec.l2_product = report.l2_product;
    rec.spectral_product = report.spectral_product;
    rec.spectral_measure = report.spectral_measure;
    rec.spectral_bound = report.spectral_from_distance.bound;
    rec.output_bound = report.output.bound;
    rec.output_measured = report.output.measured.unwrap_or(f64::NAN);
    rec.grad_ratio_max = report
        .gradient
        .iter()
        .map(|c| match c.measured {
            Some(m) if c.bound > 0.0 => m / c.bound,
            Some(m) if m > 0.0 => f64::INFINITY,
            _ => 0.0,
        })
        .fold(0.0, f64::max);
    rec.certificates_ok = report.violations().is_empty()
        && dominates(rec.initial_loss_bound, rec.initial_sq_loss);
    rec.wall_time_s = start.elapsed().as_secs_f64();
    Ok(rec)
}

fn dataset_name(d: &Dataset) -> String {
    fn base(p: &Provenance) -> String {
        match p {
            Provenance::Corrupted(parent) => base(parent),
            other => other.to_string(),
        }
    }
    base(d.provenance())
}

/// Runs the full grid of `cfg`, writing checkpoints and `sweep.csv` into
/// `cfg.out_dir`. Points that fail are recorded with a `failed` status; the
/// sweep itself only fails on configuration, data-loading or output errors,
/// all of which are detected before any training starts.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(SWEEP_CSV);
    // Fail early if the CSV cannot be written.
    std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;

    let loaded = match &cfg.source {
        DataSource::Directory(d) => Some(load_directory(d, cfg.profile)?),
        DataSource::Synthetic { .. } => None,
    };
    let points = grid(cfg);
    let work = || -> Vec<SweepRecord> {
        points
            .par_iter()
            .map(|pt| {
                let outcome = catch_unwind(AssertUnwindSafe(|| run_point(cfg, loaded.as_ref(), pt, dir)));
                let fallback = || template(cfg, pt, String::from("unknown"));
                match outcome {
                    Ok(Ok(rec)) => rec,
                    Ok(Err(e)) => SweepRecord::failed(fallback(), &e.to_string()),
                    Err(_) => SweepRecord::failed(fallback(), "panic during training"),
                }
            })
            .collect()
    };
    let records = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::arg(format!("cannot build thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    write_sweep_csv(&csv_path, &records)?;
    Ok(records)
}
