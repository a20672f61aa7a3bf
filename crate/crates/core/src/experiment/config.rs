//! Experiment presets and the layered sweep configuration
//! (command line over config file over profile defaults).

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::network::Activation;
use crate::training::{Loss, StopRule, TrainConfig};

/// Named experiment presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentProfile {
    /// MNIST, SGD lr 0.01 with momentum 0.9, until loss < 0.001.
    A,
    /// CIFAR-10, SGD lr 0.5, until loss < 0.02.
    B,
    /// MNIST, SGD lr 1.0 without momentum, until the loss is 10% of its
    /// initial value.
    C,
    /// Every label replaced by a random sign, lr 0.01, until loss < 0.1.
    NoiseFull,
    /// Two classes with a fraction of labels randomized, lr 0.01, until
    /// loss < 0.1.
    NoisePartial,
}

/// Which real dataset a profile reads when given a directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Cifar10,
}

impl ExperimentProfile {
    pub const ALL: [ExperimentProfile; 5] = [
        ExperimentProfile::A,
        ExperimentProfile::B,
        ExperimentProfile::C,
        ExperimentProfile::NoiseFull,
        ExperimentProfile::NoisePartial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentProfile::A => "A",
            ExperimentProfile::B => "B",
            ExperimentProfile::C => "C",
            ExperimentProfile::NoiseFull => "noise-full",
            ExperimentProfile::NoisePartial => "noise-partial",
        }
    }

    pub fn train_config(self) -> TrainConfig {
        let base = TrainConfig {
            batch_size: 64,
            max_epochs: 2000,
            loss: Loss::Squared,
            momentum: 0.0,
            ..TrainConfig::default()
        };
        match self {
            ExperimentProfile::A => TrainConfig {
                learning_rate: 0.01,
                momentum: 0.9,
                stop: StopRule::LossBelow(0.001),
                ..base
            },
            ExperimentProfile::B => TrainConfig {
                learning_rate: 0.5,
                stop: StopRule::LossBelow(0.02),
                ..base
            },
            ExperimentProfile::C => TrainConfig {
                learning_rate: 1.0,
                stop: StopRule::LossFractionOfInitial(0.1),
                ..base
            },
            ExperimentProfile::NoiseFull | ExperimentProfile::NoisePartial => TrainConfig {
                learning_rate: 0.01,
                stop: StopRule::LossBelow(0.1),
                ..base
            },
        }
    }

    pub fn dataset_kind(self) -> DatasetKind {
        match self {
            ExperimentProfile::B => DatasetKind::Cifar10,
            _ => DatasetKind::Mnist,
        }
    }

    /// Noise profiles train on `±1` scalar targets.
    pub fn two_class(self) -> bool {
        matches!(self, ExperimentProfile::NoiseFull | ExperimentProfile::NoisePartial)
    }
}

impl FromStr for ExperimentProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "a" => Ok(ExperimentProfile::A),
            "b" => Ok(ExperimentProfile::B),
            "c" => Ok(ExperimentProfile::C),
            "noise-full" | "noisefull" => Ok(ExperimentProfile::NoiseFull),
            "noise-partial" | "noisepartial" => Ok(ExperimentProfile::NoisePartial),
            other => Err(Error::arg(format!(
                "unknown profile '{other}' (expected A, B, C, noise-full or noise-partial)"
            ))),
        }
    }
}

/// Data for a sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Gaussian clusters drawn fresh for every grid point.
    Synthetic {
        input_dim: usize,
        num_classes: usize,
        separation: f64,
    },
    /// Directory holding the profile's dataset files.
    Directory(PathBuf),
}

impl DataSource {
    pub fn synthetic_default() -> Self {
        DataSource::Synthetic {
            input_dim: 10,
            num_classes: 10,
            separation: 1.0,
        }
    }
}

/// Everything that determines a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub experiment: String,
    pub profile: ExperimentProfile,
    pub source: DataSource,
    pub widths: Vec<usize>,
    pub sample_sizes: Vec<usize>,
    pub noise_levels: Vec<f64>,
    pub seeds: Vec<u64>,
    pub depth: usize,
    pub activation: Activation,
    pub train: TrainConfig,
    /// Held-out examples used for the test error.
    pub test_size: usize,
    /// Training inputs used as probes for the output and gradient
    /// certificates.
    pub probes: usize,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
}

impl SweepConfig {
    /// Profile defaults with the desk-scale grids.
    pub fn from_profile(profile: ExperimentProfile) -> Self {
        let noise_levels = match profile {
            ExperimentProfile::NoisePartial => vec![0.0, 0.25, 0.5, 0.75, 1.0],
            ExperimentProfile::NoiseFull => vec![1.0],
            _ => vec![0.0],
        };
        Self {
            experiment: profile.name().to_string(),
            profile,
            source: DataSource::synthetic_default(),
            widths: vec![32, 64, 128, 256, 512],
            sample_sizes: vec![128, 256, 512, 1024, 2048, 4096],
            noise_levels,
            seeds: vec![0, 1, 2],
            depth: 5,
            activation: Activation::Relu,
            train: profile.train_config(),
            test_size: 10_000,
            probes: 32,
            threads: None,
            out_dir: PathBuf::from("sweep_out"),
        }
    }

    /// Applies one `key = value` setting. Keys: `profile`, `experiment`,
    /// `dataset`, `input_dim`, `classes`, `separation`, `H`, `m`, `noise`,
    /// `seeds`, `depth`, `activation`, `lr`, `momentum`, `batch_size`,
    /// `max_epochs`, `stop`, `loss`, `test_size`, `probes`, `threads`, `out`.
    /// Changing `profile` resets the optimizer settings and noise grid to
    /// that profile's.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = |what: &str| Error::arg(format!("invalid value '{value}' for {key}: {what}"));
        match key.trim() {
            "profile" => {
                let p: ExperimentProfile = value.parse()?;
                if self.experiment == self.profile.name() {
                    self.experiment = p.name().to_string();
                }
                self.profile = p;
                self.train = p.train_config();
                self.noise_levels = SweepConfig::from_profile(p).noise_levels;
            }
            "experiment" => {
                if value.is_empty() {
                    return Err(bad("empty"));
                }
                self.experiment = value.to_string();
            }
            "dataset" => {
                self.source = if value == "synthetic" {
                    match self.source {
                        DataSource::Synthetic { .. } => self.source.clone(),
                        DataSource::Directory(_) => DataSource::synthetic_default(),
                    }
                } else {
                    DataSource::Directory(PathBuf::from(value))
                };
            }
            "input_dim" | "classes" | "separation" => {
                let DataSource::Synthetic {
                    input_dim,
                    num_classes,
                    separation,
                } = &mut self.source
                else {
                    return Err(bad("only applies to the synthetic dataset"));
                };
                match key.trim() {
                    "input_dim" => *input_dim = parse_positive(value).map_err(|_| bad("positive integer"))?,
                    "classes" => {
                        *num_classes = parse_positive(value).map_err(|_| bad("positive integer"))?
                    }
                    _ => {
                        let s: f64 = value.parse().map_err(|_| bad("number"))?;
                        if !(s >= 0.0 && s.is_finite()) {
                            return Err(bad("non-negative number"));
                        }
                        *separation = s;
                    }
                }
            }
            "H" | "widths" => self.widths = parse_sizes(value).map_err(|_| bad("list of positive integers"))?,
            "m" | "sample_sizes" => {
                self.sample_sizes = parse_sizes(value).map_err(|_| bad("list of positive integers"))?
            }
            "noise" | "noise_levels" => {
                let levels = parse_list(value, |s| {
                    let v: f64 = s.parse().map_err(|_| ())?;
                    if (0.0..=1.0).contains(&v) {
                        Ok(v)
                    } else {
                        Err(())
                    }
                })
                .map_err(|_| bad("list of levels in [0, 1]"))?;
                self.noise_levels = levels;
            }
            "seeds" => {
                self.seeds = parse_list(value, |s| s.parse::<u64>().map_err(|_| ()))
                    .map_err(|_| bad("list of integers"))?
            }
            "depth" => {
                let d = parse_positive(value).map_err(|_| bad("integer >= 2"))?;
                if d < 2 {
                    return Err(bad("integer >= 2"));
                }
                self.depth = d;
            }
            "activation" => self.activation = value.parse()?,
            "lr" | "learning_rate" => self.train.learning_rate = value.parse().map_err(|_| bad("number"))?,
            "momentum" => self.train.momentum = value.parse().map_err(|_| bad("number"))?,
            "batch_size" => self.train.batch_size = parse_positive(value).map_err(|_| bad("positive integer"))?,
            "max_epochs" => self.train.max_epochs = value.parse().map_err(|_| bad("integer"))?,
            "stop" => self.train.stop = value.parse()?,
            "loss" => self.train.loss = value.parse()?,
            "test_size" => self.test_size = parse_positive(value).map_err(|_| bad("positive integer"))?,
            "probes" => self.probes = parse_positive(value).map_err(|_| bad("positive integer"))?,
            "threads" => self.threads = Some(parse_positive(value).map_err(|_| bad("positive integer"))?),
            "out" | "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(Error::arg(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file. Blank lines and lines starting with
    /// `#` are ignored. A `profile` line is applied before the other keys.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut pairs = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::arg(format!("config line {}: expected key = value", no + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        pairs.sort_by_key(|(k, _)| k != "profile");
        for (k, v) in pairs {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty()
            || self.sample_sizes.is_empty()
            || self.noise_levels.is_empty()
            || self.seeds.is_empty()
        {
            return Err(Error::arg("every grid (H, m, noise, seeds) must be nonempty"));
        }
        self.train.validate()?;
        if self.train.loss == Loss::CrossEntropy && self.profile.two_class() {
            return Err(Error::arg("noise profiles use sign targets and need the squared loss"));
        }
        if self.profile == ExperimentProfile::NoiseFull && self.noise_levels.iter().any(|&v| v != 1.0) {
            return Err(Error::arg("noise-full randomizes every label; its noise grid must be 1.0"));
        }
        if let DataSource::Synthetic { num_classes, .. } = self.source {
            if num_classes < 2 {
                return Err(Error::arg("synthetic data needs at least 2 classes"));
            }
        }
        Ok(())
    }
}

fn parse_positive(s: &str) -> std::result::Result<usize, ()> {
    match s.trim().parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(()),
    }
}

fn parse_list<T>(
    s: &str,
    item: impl Fn(&str) -> std::result::Result<T, ()>,
) -> std::result::Result<Vec<T>, ()> {
    s.split(',').map(|part| item(part.trim())).collect()
}

/// Comma-separated positive sizes; `a..b` expands to the powers of two from
/// `a` to `b` inclusive (both must be powers of two).
fn parse_sizes(s: &str) -> std::result::Result<Vec<usize>, ()> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if let Some((a, b)) = part.split_once("..") {
            let a = parse_positive(a)?;
            let b = parse_positive(b)?;
            if !a.is_power_of_two() || !b.is_power_of_two() || a > b {
                return Err(());
            }
            let mut v = a;
            while v <= b {
                out.push(v);
                v *= 2;
            }
        } else {
            out.push(parse_positive(part)?);
        }
    }
    Ok(out)
}
