//! Dense row-major `f64` containers, Gaussian sampling, and the Frobenius and
//! spectral norms.

pub mod kernels;
mod rng;

pub use rng::{hash_bytes, mix_seed, Rng};

use crate::error::{Error, Result};

/// Default relative tolerance for [`spectral_norm`].
pub const SPECTRAL_TOL: f64 = 1e-10;
/// Default iteration cap for [`spectral_norm`].
pub const SPECTRAL_MAX_ITER: usize = 10_000;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Dense column vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("DenseMatrix::from_vec", rows * cols, data.len()));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite matrix entry {bad}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::arg("ragged rows"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Outer product `u · vᵀ`.
    pub fn outer(u: &DenseVector, v: &DenseVector) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self · x`
    pub fn matvec(&self, x: &DenseVector) -> Result<DenseVector> {
        if x.len() != self.cols {
            return Err(Error::dims("matvec", self.cols, x.len()));
        }
        Ok(DenseVector::from(
            (0..self.rows)
                .map(|i| kernels::dot(self.row(i), x.as_slice()))
                .collect::<Vec<_>>(),
        ))
    }

    /// `selfᵀ · x`
    pub fn matvec_t(&self, x: &DenseVector) -> Result<DenseVector> {
        if x.len() != self.rows {
            return Err(Error::dims("matvec_t", self.rows, x.len()));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            kernels::axpy(xi, self.row(i), &mut out);
        }
        Ok(DenseVector::from(out))
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::dims(
                "matmul",
                format!("{} rows", self.cols),
                format!("{} rows", other.rows),
            ));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        kernels::matmul_nn(
            self.rows,
            self.cols,
            other.cols,
            &self.data,
            &other.data,
            0.0,
            &mut out.data,
        );
        Ok(out)
    }

    fn check_same_shape(&self, other: &DenseMatrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dims(
                op,
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(())
    }

    /// `self += alpha · x`
    pub fn axpy(&mut self, alpha: f64, x: &DenseMatrix) -> Result<()> {
        self.check_same_shape(x, "axpy")?;
        kernels::axpy(alpha, &x.data, &mut self.data);
        Ok(())
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn scaled(&self, alpha: f64) -> DenseMatrix {
        let mut out = self.clone();
        kernels::scale(alpha, &mut out.data);
        out
    }

    /// `‖self − other‖_F²` without allocating.
    pub fn distance_sq(&self, other: &DenseMatrix) -> Result<f64> {
        self.check_same_shape(other, "distance_sq")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    /// Spectral norm with the default tolerance and iteration cap.
    pub fn spectral_norm(&self) -> f64 {
        spectral_norm(self, SPECTRAL_TOL, SPECTRAL_MAX_ITER)
            .expect("default spectral parameters are valid")
            .value
    }
}

impl DenseVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::dims("dot", self.len(), other.len()));
        }
        Ok(kernels::dot(&self.data, &other.data))
    }

    pub fn norm(&self) -> f64 {
        kernels::sum_squares(&self.data).sqrt()
    }

    /// `self += alpha · x`
    pub fn axpy(&mut self, alpha: f64, x: &DenseVector) -> Result<()> {
        if self.len() != x.len() {
            return Err(Error::dims("axpy", self.len(), x.len()));
        }
        kernels::axpy(alpha, &x.data, &mut self.data);
        Ok(())
    }

    pub fn add(&self, other: &DenseVector) -> Result<DenseVector> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &DenseVector) -> Result<DenseVector> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn scaled(&self, alpha: f64) -> DenseVector {
        DenseVector::from(self.data.iter().map(|v| alpha * v).collect::<Vec<_>>())
    }

    pub fn distance_sq(&self, other: &DenseVector) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::dims("distance_sq", self.len(), other.len()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(data: Vec<f64>) -> Self {
        Self { data }
    }
}

impl From<&[f64]> for DenseVector {
    fn from(data: &[f64]) -> Self {
        Self {
            data: data.to_vec(),
        }
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// Matrix with i.i.d. `N(0, std²)` entries.
pub fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize, std: f64) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::arg(format!("gaussian_matrix: dimensions {rows}x{cols}")));
    }
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::arg(format!("gaussian_matrix: std must be positive, got {std}")));
    }
    let data = (0..rows * cols).map(|_| std * rng.standard_normal()).collect();
    Ok(DenseMatrix { rows, cols, data })
}

pub fn frobenius_norm(m: &DenseMatrix) -> f64 {
    kernels::sum_squares(&m.data).sqrt()
}

/// Result of power iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralNorm {
    pub value: f64,
    pub iterations: usize,
    /// False when `max_iter` was reached before the estimate settled; `value`
    /// is then the best estimate found, which never exceeds the true norm.
    pub converged: bool,
}

/// Largest singular value by power iteration on `mᵀm`.
///
/// The start vector is derived from a hash of the entries, so the result is a
/// deterministic function of the matrix. The estimate `‖m v‖` for unit `v` is
/// always a lower bound on the true norm; iteration stops once its relative
/// change drops below `tol`.
pub fn spectral_norm(m: &DenseMatrix, tol: f64, max_iter: usize) -> Result<SpectralNorm> {
    if !(tol > 0.0) {
        return Err(Error::arg(format!("spectral_norm: tol must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::arg("spectral_norm: max_iter must be at least 1"));
    }
    let fro = frobenius_norm(m);
    if fro == 0.0 || m.rows == 0 || m.cols == 0 {
        return Ok(SpectralNorm {
            value: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let seed = m
        .data
        .iter()
        .fold(hash_bytes(&(m.rows as u64 ^ ((m.cols as u64) << 32)).to_le_bytes()), |h, v| {
            mix_seed(&[h, v.to_bits()])
        });
    let mut rng = Rng::new(seed);
    let mut v: Vec<f64> = (0..m.cols).map(|_| rng.standard_normal()).collect();
    normalize(&mut v);

    let mut u = vec![0.0; m.rows];
    let mut w = vec![0.0; m.cols];
    let mut best = 0.0f64;
    let mut prev = 0.0f64;
    for it in 1..=max_iter {
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = kernels::dot(m.row(i), &v);
        }
        let sigma = kernels::sum_squares(&u).sqrt();
        best = best.max(sigma);
        if it > 1 && (sigma - prev).abs() <= tol * sigma {
            return Ok(SpectralNorm {
                value: best.min(fro),
                iterations: it,
                converged: true,
            });
        }
        prev = sigma;

        w.iter_mut().for_each(|x| *x = 0.0);
        for (i, &ui) in u.iter().enumerate() {
            kernels::axpy(ui, m.row(i), &mut w);
        }
        if normalize(&mut w) == 0.0 {
            // v landed in the null space; the current estimate is exact.
            return Ok(SpectralNorm {
                value: best.min(fro),
                iterations: it,
                converged: true,
            });
        }
        std::mem::swap(&mut v, &mut w);
    }
    Ok(SpectralNorm {
        value: best.min(fro),
        iterations: max_iter,
        converged: false,
    })
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = kernels::sum_squares(v).sqrt();
    if n > 0.0 {
        kernels::scale(1.0 / n, v);
    }
    n
}
