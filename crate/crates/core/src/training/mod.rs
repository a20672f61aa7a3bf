//! Mini-batch SGD with classical momentum, losses, stopping rules and label
//! corruption.

mod backprop;
mod loss;

pub use backprop::{backprop, output_gradient, Gradients};
pub use loss::{cross_entropy_loss, squared_loss, Loss};

pub(crate) use backprop::{backward_batch, forward_batch, outputs};

use std::time::Instant;

use crate::data::{Dataset, Labels, Provenance};
use crate::error::{Error, Result};
use crate::linalg::{kernels, Rng};
use crate::network::{distance_from_init, InitSnapshot, NetParams};

/// Loss above which a run is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Full-data training loss strictly below the threshold.
    LossBelow(f64),
    /// Training loss at most `fraction` of the loss at initialization.
    LossFractionOfInitial(f64),
    /// At least `fraction` of training examples have margin `≥ margin`.
    MarginSatisfied { margin: f64, fraction: f64 },
    /// Train for exactly `max_epochs`.
    EpochLimit,
}

impl StopRule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StopRule::LossBelow(t) => t > 0.0,
            StopRule::LossFractionOfInitial(f) => f > 0.0 && f <= 1.0,
            StopRule::MarginSatisfied { margin, fraction } => {
                margin > 0.0 && fraction > 0.0 && fraction <= 1.0
            }
            StopRule::EpochLimit => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::arg(format!("invalid stop rule {self:?}")))
        }
    }

    /// Compact text form, also accepted by [`StopRule::from_str`].
    pub fn describe(&self) -> String {
        match *self {
            StopRule::LossBelow(t) => format!("loss<{t}"),
            StopRule::LossFractionOfInitial(f) => format!("loss<={f}*initial"),
            StopRule::MarginSatisfied { margin, fraction } => {
                format!("margin>={margin}@{fraction}")
            }
            StopRule::EpochLimit => "epochs".to_string(),
        }
    }
}

impl std::str::FromStr for StopRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::arg(format!("cannot parse stop rule '{s}'"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let rule = if let Some(t) = s.strip_prefix("loss<=") {
            StopRule::LossFractionOfInitial(num(t.strip_suffix("*initial").ok_or_else(bad)?)?)
        } else if let Some(t) = s.strip_prefix("loss<") {
            StopRule::LossBelow(num(t)?)
        } else if let Some(t) = s.strip_prefix("margin>=") {
            let (m, f) = t.split_once('@').ok_or_else(bad)?;
            StopRule::MarginSatisfied {
                margin: num(m)?,
                fraction: num(f)?,
            }
        } else if s == "epochs" {
            StopRule::EpochLimit
        } else {
            return Err(bad());
        };
        rule.validate()?;
        Ok(rule)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub stop: StopRule,
    pub loss: Loss,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.0,
            batch_size: 64,
            max_epochs: 2000,
            stop: StopRule::LossFractionOfInitial(0.1),
            loss: Loss::Squared,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::arg(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be at least 1"));
        }
        self.stop.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainStatus {
    Converged,
    EpochLimitHit,
    Diverged,
}

impl TrainStatus {
    pub fn name(self) -> &'static str {
        match self {
            TrainStatus::Converged => "converged",
            TrainStatus::EpochLimitHit => "epoch_limit",
            TrainStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_error: f64,
    pub distance_from_init: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    /// Epoch 0 is the state at initialization.
    pub records: Vec<EpochRecord>,
    pub status: TrainStatus,
}

impl TrainTrace {
    pub fn last(&self) -> &EpochRecord {
        self.records.last().expect("trace always has the initial record")
    }

    pub fn initial_loss(&self) -> f64 {
        self.records[0].train_loss
    }

    pub fn epochs(&self) -> usize {
        self.last().epoch
    }
}

/// Loss, error rate and margins of a network on a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub error_rate: f64,
    /// Per-example margin: true-class output minus the largest other output
    /// for class labels, `y·f(x)` for sign targets.
    pub margins: Vec<f64>,
}

impl Evaluation {
    pub fn fraction_with_margin(&self, margin: f64) -> f64 {
        self.margins.iter().filter(|&&m| m >= margin).count() as f64 / self.margins.len() as f64
    }
}

pub fn evaluate(p: &NetParams, data: &Dataset, loss: Loss) -> Result<Evaluation> {
    backprop::check_compatible(p, data)?;
    loss.check_dataset(data)?;
    let k = p.shape().output_dim;
    let out = outputs(p, data);
    let mut total = 0.0;
    let mut errors = 0usize;
    let mut margins = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let o = &out[i * k..(i + 1) * k];
        total += loss.eval_example(o, data, i, None);
        let margin = match data.labels() {
            Labels::Classes(c) => {
                let other = o
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != c[i])
                    .fold(f64::NEG_INFINITY, |a, (_, &v)| a.max(v));
                if k == 1 {
                    f64::INFINITY
                } else {
                    o[c[i]] - other
                }
            }
            Labels::Targets(s) => s[i] * o[0],
        };
        if margin <= 0.0 {
            errors += 1;
        }
        margins.push(margin);
    }
    Ok(Evaluation {
        loss: total / data.len() as f64,
        error_rate: errors as f64 / data.len() as f64,
        margins,
    })
}

fn stop_reached(rule: StopRule, eval: &Evaluation, initial_loss: f64) -> bool {
    match rule {
        StopRule::LossBelow(t) => eval.loss < t,
        StopRule::LossFractionOfInitial(f) => eval.loss <= f * initial_loss,
        StopRule::MarginSatisfied { margin, fraction } => {
            eval.fraction_with_margin(margin) >= fraction
        }
        StopRule::EpochLimit => false,
    }
}

fn diverged(loss: f64) -> bool {
    !loss.is_finite() || loss > DIVERGENCE_LOSS
}

/// Trains `p` in place from the initialization `z`.
///
/// Each epoch visits the examples in a fresh random order, in mini-batches of
/// `cfg.batch_size`, applying `v ← μv − η∇`, `W ← W + v`. The stop rule is
/// checked on the full training set after every epoch (and once before the
/// first).
pub fn sgd_train(
    p: &mut NetParams,
    z: &InitSnapshot,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainTrace> {
    cfg.validate()?;
    backprop::check_compatible(p, data)?;
    cfg.loss.check_dataset(data)?;
    if p.shape() != z.shape() {
        return Err(Error::dims(
            "sgd_train",
            format!("{:?}", z.shape()),
            format!("{:?}", p.shape()),
        ));
    }

    let start = Instant::now();
    let record = |p: &NetParams, epoch: usize, eval: &Evaluation| -> Result<EpochRecord> {
        Ok(EpochRecord {
            epoch,
            train_loss: eval.loss,
            train_error: eval.error_rate,
            distance_from_init: distance_from_init(p, z)?,
            wall_time: start.elapsed().as_secs_f64(),
        })
    };

    let eval = evaluate(p, data, cfg.loss)?;
    let initial_loss = eval.loss;
    let mut records = vec![record(p, 0, &eval)?];
    if diverged(initial_loss) {
        return Ok(TrainTrace {
            records,
            status: TrainStatus::Diverged,
        });
    }
    if stop_reached(cfg.stop, &eval, initial_loss) {
        return Ok(TrainTrace {
            records,
            status: TrainStatus::Converged,
        });
    }

    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut velocity = Gradients::zeros_like(p);
    for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let (batch_loss, grads) = backprop::backprop_unchecked(p, data, batch, cfg.loss);
            if !batch_loss.is_finite() {
                records.push(EpochRecord {
                    epoch,
                    train_loss: f64::NAN,
                    train_error: 1.0,
                    distance_from_init: f64::NAN,
                    wall_time: start.elapsed().as_secs_f64(),
                });
                return Ok(TrainTrace {
                    records,
                    status: TrainStatus::Diverged,
                });
            }
            apply_update(p, &mut velocity, &grads, cfg);
        }
        let eval = evaluate(p, data, cfg.loss)?;
        records.push(record(p, epoch, &eval)?);
        if diverged(eval.loss) || !p.is_finite() {
            return Ok(TrainTrace {
                records,
                status: TrainStatus::Diverged,
            });
        }
        if stop_reached(cfg.stop, &eval, initial_loss) {
            return Ok(TrainTrace {
                records,
                status: TrainStatus::Converged,
            });
        }
    }
    Ok(TrainTrace {
        records,
        status: TrainStatus::EpochLimitHit,
    })
}

fn apply_update(p: &mut NetParams, velocity: &mut Gradients, grads: &Gradients, cfg: &TrainConfig) {
    let (mu, eta) = (cfg.momentum, cfg.learning_rate);
    for l in 0..p.depth() {
        let v = velocity.weights[l].as_mut_slice();
        kernels::scale(mu, v);
        kernels::axpy(-eta, grads.weights[l].as_slice(), v);
        kernels::axpy(1.0, v, p.weight_mut(l).as_mut_slice());

        let v = velocity.biases[l].as_mut_slice();
        kernels::scale(mu, v);
        kernels::axpy(-eta, grads.biases[l].as_slice(), v);
        kernels::axpy(1.0, v, p.bias_mut(l).as_mut_slice());
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corruption {
    /// Every label replaced by a uniform `±1` scalar target.
    FullRandomSign,
    /// A uniformly chosen `⌊level·m⌋` subset receives uniformly random labels
    /// (which may coincide with the original). For a fixed generator state the
    /// corrupted sets and their new labels are nested across levels.
    PartialFlip(f64),
}

/// Returns a copy of `data` with corrupted labels.
pub fn corrupt_labels(data: &Dataset, mode: Corruption, rng: &mut Rng) -> Result<Dataset> {
    let parent = Provenance::Corrupted(Box::new(data.provenance().clone()));
    match mode {
        Corruption::FullRandomSign => {
            let signs = (0..data.len()).map(|_| rng.sign()).collect();
            data.with_labels(Labels::Targets(signs), parent)
        }
        Corruption::PartialFlip(level) => {
            if !(0.0..=1.0).contains(&level) {
                return Err(Error::arg(format!("corruption level {level} outside [0, 1]")));
            }
            let count = (level * data.len() as f64).floor() as usize;
            if count == 0 {
                return Ok(data.clone());
            }
            // A full permutation, so a higher level extends the lower one.
            let mut order: Vec<usize> = (0..data.len()).collect();
            rng.shuffle(&mut order);
            let chosen = order[..count].to_vec();
            let labels = match data.labels() {
                Labels::Classes(c) => {
                    let mut c = c.clone();
                    for i in chosen {
                        c[i] = rng.below(data.num_classes());
                    }
                    Labels::Classes(c)
                }
                Labels::Targets(s) => {
                    let mut s = s.clone();
                    for i in chosen {
                        s[i] = rng.sign();
                    }
                    Labels::Targets(s)
                }
            };
            data.with_labels(labels, parent)
        }
    }
}

#[cfg(test)]
mod tests;
