//! Datasets: MNIST IDX and CIFAR-10 binary ingestion, a synthetic cluster
//! generator, subsetting and two-class filtering.
//!
//! Ingested features are scaled to `[0, 1]`. Inputs are stored as one
//! row-major `m × n` matrix, one row per example.

mod cifar;
mod idx;

pub use cifar::{load_cifar10, load_cifar10_dir, parse_cifar10};
pub use idx::{
    load_mnist, load_mnist_dir, mnist_from_bytes, parse_idx_images, parse_idx_labels, MnistSplit,
};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Rng};

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Mnist,
    Cifar10,
    Synthetic,
    Corrupted(Box<Provenance>),
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Mnist => write!(f, "mnist"),
            Provenance::Cifar10 => write!(f, "cifar10"),
            Provenance::Synthetic => write!(f, "synthetic"),
            Provenance::Corrupted(parent) => write!(f, "corrupted({parent})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    /// Class ids, trained against one-hot targets of length `num_classes`.
    OneHot,
    /// Scalar `±1` regression targets for a single-output network.
    SignScalar,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Classes(Vec<usize>),
    /// Real-valued targets for a single-output network (`±1` after
    /// two-class filtering or sign corruption).
    Targets(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(c) => c.len(),
            Labels::Targets(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: DenseMatrix,
    labels: Labels,
    num_classes: usize,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        inputs: DenseMatrix,
        labels: Labels,
        num_classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::arg("dataset must contain at least one example"));
        }
        if labels.len() != inputs.rows() {
            return Err(Error::dims("Dataset::new", inputs.rows(), labels.len()));
        }
        match &labels {
            Labels::Classes(c) => {
                if num_classes == 0 {
                    return Err(Error::arg("num_classes must be positive"));
                }
                if let Some(bad) = c.iter().find(|&&c| c >= num_classes) {
                    return Err(Error::arg(format!("class id {bad} >= {num_classes}")));
                }
            }
            Labels::Targets(s) => {
                if let Some(bad) = s.iter().find(|v| !v.is_finite()) {
                    return Err(Error::arg(format!("non-finite target {bad}")));
                }
            }
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn inputs(&self) -> &DenseMatrix {
        &self.inputs
    }

    pub fn input(&self, i: usize) -> &[f64] {
        self.inputs.row(i)
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn encoding(&self) -> Encoding {
        match self.labels {
            Labels::Classes(_) => Encoding::OneHot,
            Labels::Targets(_) => Encoding::SignScalar,
        }
    }

    /// Output dimension a network needs to fit this dataset.
    pub fn target_dim(&self) -> usize {
        match self.labels {
            Labels::Classes(_) => self.num_classes,
            Labels::Targets(_) => 1,
        }
    }

    pub fn class(&self, i: usize) -> Option<usize> {
        match &self.labels {
            Labels::Classes(c) => Some(c[i]),
            Labels::Targets(_) => None,
        }
    }

    /// Writes the regression target of example `i` into `out`
    /// (length [`Dataset::target_dim`]).
    pub fn write_target(&self, i: usize, out: &mut [f64]) {
        match &self.labels {
            Labels::Classes(c) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                out[c[i]] = 1.0;
            }
            Labels::Targets(s) => out[0] = s[i],
        }
    }

    /// Largest absolute target coordinate of any example.
    pub fn max_abs_target(&self) -> f64 {
        match &self.labels {
            Labels::Classes(_) => 1.0,
            Labels::Targets(s) => s.iter().fold(0.0f64, |a, v| a.max(v.abs())),
        }
    }

    /// Examples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::arg(format!("index {bad} out of range {}", self.len())));
        }
        let n = self.input_dim();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.input(i));
        }
        let labels = match &self.labels {
            Labels::Classes(c) => Labels::Classes(indices.iter().map(|&i| c[i]).collect()),
            Labels::Targets(s) => Labels::Targets(indices.iter().map(|&i| s[i]).collect()),
        };
        Dataset::new(
            DenseMatrix::from_vec(indices.len(), n, data)?,
            labels,
            self.num_classes,
            self.provenance.clone(),
        )
    }

    pub fn with_labels(&self, labels: Labels, provenance: Provenance) -> Result<Dataset> {
        let num_classes = match labels {
            Labels::Classes(_) => self.num_classes,
            Labels::Targets(_) => 2,
        };
        Dataset::new(self.inputs.clone(), labels, num_classes, provenance)
    }

    pub fn features_in_unit_interval(&self) -> bool {
        self.inputs.as_slice().iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// Uniform subsample of `m` examples without replacement.
pub fn subset(data: &Dataset, m: usize, rng: &mut Rng) -> Result<Dataset> {
    if m == 0 || m > data.len() {
        return Err(Error::arg(format!(
            "subset size {m} outside 1..={}",
            data.len()
        )));
    }
    let idx = rng.sample_indices(data.len(), m);
    data.select(&idx)
}

/// Keeps classes `a` and `b`, relabelled as `+1` and `−1` scalar targets.
pub fn two_class_filter(data: &Dataset, a: usize, b: usize) -> Result<Dataset> {
    let Labels::Classes(classes) = data.labels() else {
        return Err(Error::arg("two_class_filter needs class labels"));
    };
    if a == b || a >= data.num_classes() || b >= data.num_classes() {
        return Err(Error::arg(format!(
            "invalid class pair ({a}, {b}) for {} classes",
            data.num_classes()
        )));
    }
    let idx: Vec<usize> = (0..data.len())
        .filter(|&i| classes[i] == a || classes[i] == b)
        .collect();
    if idx.is_empty() {
        return Err(Error::arg(format!("no examples of classes {a} or {b}")));
    }
    let kept = data.select(&idx)?;
    let signs = idx
        .iter()
        .map(|&i| if classes[i] == a { 1.0 } else { -1.0 })
        .collect();
    kept.with_labels(Labels::Targets(signs), data.provenance().clone())
}

/// Gaussian clusters around class means placed uniformly on a sphere.
///
/// Class `c` has mean `μ_c` with `‖μ_c‖ = separation`; each example is
/// `μ_c + ε` with `ε ~ N(0, I/n)`. Classes are balanced (`i mod k`) and
/// examples shuffled. Features are then mapped to `[0, 1]` by one affine map
/// shared by all coordinates.
pub fn synthetic_clusters(
    rng: &mut Rng,
    m: usize,
    n: usize,
    num_classes: usize,
    separation: f64,
) -> Result<Dataset> {
    if num_classes == 0 || n == 0 {
        return Err(Error::arg("synthetic_clusters: n and num_classes must be positive"));
    }
    if m < num_classes {
        return Err(Error::arg(format!(
            "synthetic_clusters: m = {m} < num_classes = {num_classes}"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::arg(format!(
            "synthetic_clusters: separation must be non-negative, got {separation}"
        )));
    }
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| {
            let mut v: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.iter_mut().for_each(|x| *x *= separation / norm);
            v
        })
        .collect();
    let mut classes: Vec<usize> = (0..m).map(|i| i % num_classes).collect();
    rng.shuffle(&mut classes);
    let noise = 1.0 / (n as f64).sqrt();
    let mut data = Vec::with_capacity(m * n);
    for &c in &classes {
        for &mu in &means[c] {
            data.push(mu + noise * rng.standard_normal());
        }
    }
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    data.iter_mut().for_each(|v| *v = ((*v - lo) / span).clamp(0.0, 1.0));
    Dataset::new(
        DenseMatrix::from_vec(m, n, data)?,
        Labels::Classes(classes),
        num_classes,
        Provenance::Synthetic,
    )
}

/// Draws `m_train + m_test` examples from one synthetic distribution and
/// splits them into a training and a held-out set.
pub fn synthetic_split(
    rng: &mut Rng,
    m_train: usize,
    m_test: usize,
    n: usize,
    num_classes: usize,
    separation: f64,
) -> Result<(Dataset, Dataset)> {
    let all = synthetic_clusters(rng, m_train + m_test, n, num_classes, separation)?;
    let train: Vec<usize> = (0..m_train).collect();
    let test: Vec<usize> = (m_train..m_train + m_test).collect();
    Ok((all.select(&train)?, all.select(&test)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic_balanced_and_scaled() {
        let a = synthetic_clusters(&mut Rng::new(1), 300, 5, 3, 2.0).unwrap();
        let b = synthetic_clusters(&mut Rng::new(1), 300, 5, 3, 2.0).unwrap();
        assert_eq!(a, b);
        assert!(a.features_in_unit_interval());
        let Labels::Classes(c) = a.labels() else { panic!() };
        for k in 0..3 {
            assert_eq!(c.iter().filter(|&&v| v == k).count(), 100);
        }
    }

    #[test]
    fn synthetic_rejects_bad_arguments() {
        assert!(synthetic_clusters(&mut Rng::new(1), 2, 5, 3, 1.0).is_err());
        assert!(synthetic_clusters(&mut Rng::new(1), 10, 5, 3, -1.0).is_err());
    }

    #[test]
    fn subset_full_size_is_permutation() {
        let d = synthetic_clusters(&mut Rng::new(2), 50, 3, 5, 1.0).unwrap();
        let s = subset(&d, 50, &mut Rng::new(3)).unwrap();
        let key = |ds: &Dataset| {
            let mut rows: Vec<Vec<u64>> = (0..ds.len())
                .map(|i| {
                    let mut r: Vec<u64> = ds.input(i).iter().map(|v| v.to_bits()).collect();
                    r.push(ds.class(i).unwrap() as u64);
                    r
                })
                .collect();
            rows.sort();
            rows
        };
        assert_eq!(key(&d), key(&s));
        assert_eq!(s, subset(&d, 50, &mut Rng::new(3)).unwrap());
        assert!(subset(&d, 51, &mut Rng::new(3)).is_err());
    }

    #[test]
    fn two_class_filter_produces_signs() {
        let d = synthetic_clusters(&mut Rng::new(2), 100, 3, 4, 1.0).unwrap();
        let f = two_class_filter(&d, 0, 1).unwrap();
        assert_eq!(f.len(), 50);
        assert_eq!(f.encoding(), Encoding::SignScalar);
        assert_eq!(f.target_dim(), 1);
        let Labels::Targets(s) = f.labels() else { panic!() };
        assert!(s.iter().all(|&v| v == 1.0 || v == -1.0));
        assert!(s.contains(&1.0) && s.contains(&-1.0));
        assert!(two_class_filter(&d, 1, 1).is_err());
        assert!(two_class_filter(&d, 0, 9).is_err());
        assert!(two_class_filter(&f, 0, 1).is_err());
    }

    #[test]
    fn targets_are_one_hot() {
        let d = synthetic_clusters(&mut Rng::new(2), 10, 3, 4, 1.0).unwrap();
        let mut t = vec![9.0; 4];
        d.write_target(0, &mut t);
        assert_eq!(t.iter().sum::<f64>(), 1.0);
        assert_eq!(t[d.class(0).unwrap()], 1.0);
    }
}
