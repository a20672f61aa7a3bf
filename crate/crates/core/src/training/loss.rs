use crate::data::{Dataset, Labels};
use crate::error::{Error, Result};
use crate::linalg::DenseVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Loss {
    /// `(1/k) Σ_j (f_j − y_j)²` against one-hot (or scalar sign) targets.
    Squared,
    /// Softmax cross entropy against a class id.
    CrossEntropy,
}

impl Loss {
    pub fn name(self) -> &'static str {
        match self {
            Loss::Squared => "squared",
            Loss::CrossEntropy => "cross_entropy",
        }
    }

    /// Loss of `out` on example `i` of `data`; if `grad` is given it receives
    /// `∂loss/∂out`.
    pub(crate) fn eval_example(
        self,
        out: &[f64],
        data: &Dataset,
        i: usize,
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let k = out.len() as f64;
        match self {
            Loss::Squared => {
                let mut loss = 0.0;
                match data.labels() {
                    Labels::Classes(c) => {
                        let class = c[i];
                        for (j, &o) in out.iter().enumerate() {
                            let y = if j == class { 1.0 } else { 0.0 };
                            loss += (o - y) * (o - y);
                        }
                        if let Some(g) = grad {
                            for (j, (gj, &o)) in g.iter_mut().zip(out).enumerate() {
                                let y = if j == class { 1.0 } else { 0.0 };
                                *gj = 2.0 * (o - y) / k;
                            }
                        }
                    }
                    Labels::Targets(s) => {
                        let y = s[i];
                        loss = (out[0] - y) * (out[0] - y);
                        if let Some(g) = grad {
                            g[0] = 2.0 * (out[0] - y);
                        }
                    }
                }
                loss / k
            }
            Loss::CrossEntropy => {
                let class = data.class(i).expect("cross entropy requires class labels");
                let max = out.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let sum: f64 = out.iter().map(|&o| (o - max).exp()).sum();
                let log_z = max + sum.ln();
                if let Some(g) = grad {
                    for (j, (gj, &o)) in g.iter_mut().zip(out).enumerate() {
                        let p = (o - log_z).exp();
                        *gj = if j == class { p - 1.0 } else { p };
                    }
                }
                log_z - out[class]
            }
        }
    }

    pub(crate) fn check_dataset(self, data: &Dataset) -> Result<()> {
        if self == Loss::CrossEntropy && data.class(0).is_none() {
            return Err(Error::arg("cross entropy loss needs class labels"));
        }
        Ok(())
    }
}

impl std::str::FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" | "mse" => Ok(Loss::Squared),
            "cross_entropy" | "xent" | "ce" => Ok(Loss::CrossEntropy),
            other => Err(Error::arg(format!("unknown loss '{other}'"))),
        }
    }
}

/// `(1/k) Σ_j (f_j − y_j)²`.
pub fn squared_loss(output: &DenseVector, target: &DenseVector) -> Result<f64> {
    if output.len() != target.len() || output.is_empty() {
        return Err(Error::dims("squared_loss", output.len(), target.len()));
    }
    let sum: f64 = output
        .iter()
        .zip(target.iter())
        .map(|(f, y)| (f - y) * (f - y))
        .sum();
    Ok(sum / output.len() as f64)
}

/// Softmax cross entropy `log Σ_j e^{z_j} − z_label`, computed after
/// subtracting the maximum logit.
pub fn cross_entropy_loss(logits: &DenseVector, label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::arg(format!(
            "label {label} out of range for {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    Ok(max + sum.ln() - logits[label])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::from(x)
    }

    #[test]
    fn squared_examples() {
        let t = v(&[0.0, 1.0, 0.0]);
        assert_eq!(squared_loss(&t, &t).unwrap(), 0.0);
        let mut onehot = vec![0.0; 10];
        onehot[3] = 1.0;
        assert!((squared_loss(&DenseVector::zeros(10), &v(&onehot)).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(squared_loss(&v(&[1.0, -1.0]), &v(&[0.0, 1.0])).unwrap(), 2.5);
        assert!(squared_loss(&v(&[1.0]), &v(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let uniform = DenseVector::from(vec![0.7; 10]);
        assert!((cross_entropy_loss(&uniform, 4).unwrap() - 10f64.ln()).abs() < 1e-12);
        let mut sat = vec![0.0; 10];
        sat[2] = 1000.0;
        assert!(cross_entropy_loss(&v(&sat), 2).unwrap() <= 1e-9);
        assert!((cross_entropy_loss(&v(&[0.0, 0.0]), 0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(cross_entropy_loss(&v(&[0.0, 0.0]), 2).is_err());
    }
}
