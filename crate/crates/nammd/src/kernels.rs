//! Bounded kernels, samples, and Gram-matrix computation.
//!
//! Three translation-invariant kernel families are supported (Gaussian,
//! Laplace, Mahalanobis), all bounded by `K = 1` with `κ(x, x) = K`. The
//! bandwidth parameter `γ` follows the convention `exp(-‖x-y‖²/(2γ²))` for
//! the Gaussian family, so the unit-exponent kernel `exp(-‖x-y‖²)`
//! corresponds to `γ = 1/√2`.

use crate::error::{Error, Result};
use rayon::prelude::*;

/// Dense row-major matrix of kernel values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in &rows {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    left: n_cols,
                    right: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn from_flat(data: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::invalid(format!(
                "matrix buffer has {} entries, expected {}",
                data.len(),
                n_rows * n_cols
            )));
        }
        Ok(Matrix {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Matrix {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n_cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_cols];
        for i in 0..self.n_rows {
            for (s, v) in sums.iter_mut().zip(self.row(i)) {
                *s += v;
            }
        }
        sums
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        for i in 0..self.n_rows {
            for j in (i + 1)..self.n_cols {
                if (self.get(i, j) - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

/// Kernel family identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian,
    Laplace,
    Mahalanobis,
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelFamily::Gaussian => write!(f, "gaussian"),
            KernelFamily::Laplace => write!(f, "laplace"),
            KernelFamily::Mahalanobis => write!(f, "mahalanobis"),
        }
    }
}

/// A bounded positive-definite kernel: family, bandwidth, optional metric
/// matrix, and the supremum `K` of the kernel (1 for all three families).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    bandwidth: f64,
    /// Row-major symmetric positive-definite metric (Mahalanobis only).
    metric: Option<Matrix>,
    upper_bound: f64,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        Self::validate_bandwidth(bandwidth)?;
        Ok(KernelSpec {
            family: KernelFamily::Gaussian,
            bandwidth,
            metric: None,
            upper_bound: 1.0,
        })
    }

    pub fn laplace(bandwidth: f64) -> Result<Self> {
        Self::validate_bandwidth(bandwidth)?;
        Ok(KernelSpec {
            family: KernelFamily::Laplace,
            bandwidth,
            metric: None,
            upper_bound: 1.0,
        })
    }

    pub fn mahalanobis(bandwidth: f64, metric: Matrix) -> Result<Self> {
        Self::validate_bandwidth(bandwidth)?;
        if metric.n_rows() != metric.n_cols() {
            return Err(Error::invalid("metric matrix must be square"));
        }
        if !metric.is_symmetric(1e-10) {
            return Err(Error::invalid("metric matrix must be symmetric"));
        }
        if !is_positive_definite(&metric) {
            return Err(Error::invalid(
                "metric matrix must have strictly positive eigenvalues",
            ));
        }
        Ok(KernelSpec {
            family: KernelFamily::Mahalanobis,
            bandwidth,
            metric: Some(metric),
            upper_bound: 1.0,
        })
    }

    /// Mahalanobis kernel with a diagonal metric.
    pub fn mahalanobis_diag(bandwidth: f64, diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        let mut metric = Matrix::zeros(d, d);
        for (i, &v) in diag.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid("metric diagonal entries must be positive"));
            }
            metric.set(i, i, v);
        }
        Self::mahalanobis(bandwidth, metric)
    }

    fn validate_bandwidth(bandwidth: f64) -> Result<()> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::invalid(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(())
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn metric(&self) -> Option<&Matrix> {
        self.metric.as_ref()
    }

    /// The supremum `K` of the kernel; `κ(x, x) = K` for every `x`.
    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }
}

/// Cholesky-based positive-definiteness check.
fn is_positive_definite(m: &Matrix) -> bool {
    let n = m.n_rows();
    let mut chol = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m.get(i, j);
            for k in 0..j {
                sum -= chol[i * n + k] * chol[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return false;
                }
                chol[i * n + i] = sum.sqrt();
            } else {
                chol[i * n + j] = sum / chol[j * n + j];
            }
        }
    }
    true
}

/// An i.i.d. sample of `m ≥ 2` points in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    data: Vec<f64>,
    m: usize,
    d: usize,
}

impl Sample {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m < 2 {
            return Err(Error::invalid(format!("sample needs at least 2 points, got {m}")));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::invalid("points must have at least one coordinate"));
        }
        let mut data = Vec::with_capacity(m * d);
        for row in &rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    left: d,
                    right: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(data, m, d)
    }

    pub fn from_flat(data: Vec<f64>, m: usize, d: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid(format!("sample needs at least 2 points, got {m}")));
        }
        if data.len() != m * d || d == 0 {
            return Err(Error::invalid(format!(
                "buffer of {} entries does not form an {m}x{d} sample",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample entry {bad}")));
        }
        Ok(Sample { data, m, d })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Concatenates two equal-dimension samples into one pooled sample.
    pub fn pooled(&self, other: &Sample) -> Result<Sample> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch {
                left: self.d,
                right: other.d,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Sample::from_flat(data, self.m + other.m, self.d)
    }

    /// New sample from a subset of row indices.
    pub fn select(&self, indices: &[usize]) -> Result<Sample> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.m {
                return Err(Error::invalid(format!("row index {i} out of range")));
            }
            data.extend_from_slice(self.row(i));
        }
        Sample::from_flat(data, indices.len(), self.d)
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
fn l1_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

fn mahalanobis_form(metric: &Matrix, x: &[f64], y: &[f64]) -> f64 {
    let d = x.len();
    let mut q = 0.0;
    for i in 0..d {
        let di = x[i] - y[i];
        let row = metric.row(i);
        for j in 0..d {
            q += di * row[j] * (x[j] - y[j]);
        }
    }
    q
}

/// Evaluates the kernel at a pair of points.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite point coordinate"));
    }
    if let Some(metric) = spec.metric() {
        if metric.n_rows() != x.len() {
            return Err(Error::DimensionMismatch {
                left: metric.n_rows(),
                right: x.len(),
            });
        }
    }
    Ok(eval_unchecked(spec, x, y))
}

#[inline]
pub(crate) fn eval_unchecked(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    let gamma = spec.bandwidth;
    match spec.family {
        KernelFamily::Gaussian => (-sq_dist(x, y) / (2.0 * gamma * gamma)).exp(),
        KernelFamily::Laplace => (-l1_dist(x, y) / gamma).exp(),
        KernelFamily::Mahalanobis => {
            let metric = spec.metric.as_ref().expect("mahalanobis spec carries a metric");
            (-mahalanobis_form(metric, x, y) / (2.0 * gamma * gamma)).exp()
        }
    }
}

/// The three kernel matrices of a sample pair: within-X, within-Y, cross.
#[derive(Debug, Clone)]
pub struct GramBlock {
    kxx: Matrix,
    kyy: Matrix,
    kxy: Matrix,
    upper_bound: f64,
}

impl GramBlock {
    /// Assembles a block from precomputed matrices, checking the invariants
    /// (symmetry, entries in `[0, K]`, diagonals equal to `K`).
    pub fn from_matrices(kxx: Matrix, kyy: Matrix, kxy: Matrix, upper_bound: f64) -> Result<Self> {
        let m = kxx.n_rows();
        if kxx.n_cols() != m || kyy.n_rows() != m || kyy.n_cols() != m {
            return Err(Error::SizeMismatch {
                left: m,
                right: kyy.n_rows(),
            });
        }
        if kxy.n_rows() != m || kxy.n_cols() != m {
            return Err(Error::SizeMismatch {
                left: m,
                right: kxy.n_rows(),
            });
        }
        if m < 2 {
            return Err(Error::invalid("gram block needs m >= 2"));
        }
        if !kxx.is_symmetric(1e-9) || !kyy.is_symmetric(1e-9) {
            return Err(Error::invalid("within-sample kernel matrices must be symmetric"));
        }
        let tol = 1e-9;
        for mat in [&kxx, &kyy, &kxy] {
            if mat
                .data
                .iter()
                .any(|&v| !v.is_finite() || v < -tol || v > upper_bound + tol)
            {
                return Err(Error::invalid("kernel entries must lie in [0, K]"));
            }
        }
        for i in 0..m {
            if (kxx.get(i, i) - upper_bound).abs() > tol || (kyy.get(i, i) - upper_bound).abs() > tol {
                return Err(Error::invalid("within-sample diagonals must equal K"));
            }
        }
        Ok(GramBlock {
            kxx,
            kyy,
            kxy,
            upper_bound,
        })
    }

    pub fn m(&self) -> usize {
        self.kxx.n_rows()
    }

    pub fn kxx(&self) -> &Matrix {
        &self.kxx
    }

    pub fn kyy(&self) -> &Matrix {
        &self.kyy
    }

    pub fn kxy(&self) -> &Matrix {
        &self.kxy
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }
}

fn symmetric_gram(spec: &KernelSpec, s: &Sample) -> Matrix {
    let m = s.len();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let xi = s.row(i);
            (0..m)
                .map(|j| {
                    if i == j {
                        spec.upper_bound()
                    } else {
                        eval_unchecked(spec, xi, s.row(j))
                    }
                })
                .collect()
        })
        .collect();
    let mut mat = Matrix::zeros(m, m);
    // Symmetrize exactly so row-parallel evaluation cannot introduce
    // asymmetric rounding.
    for i in 0..m {
        for j in i..m {
            let v = rows[i][j];
            mat.set(i, j, v);
            mat.set(j, i, v);
        }
    }
    mat
}

fn cross_gram(spec: &KernelSpec, x: &Sample, y: &Sample) -> Matrix {
    let m = x.len();
    let n = y.len();
    let data: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            (0..n).map(|j| eval_unchecked(spec, xi, y.row(j))).collect()
        })
        .collect();
    Matrix::from_rows(data).expect("cross gram rows are rectangular")
}

/// Computes the three kernel matrices for an equal-size sample pair.
pub fn gram_blocks(spec: &KernelSpec, x: &Sample, y: &Sample) -> Result<GramBlock> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            left: x.dim(),
            right: y.dim(),
        });
    }
    if x.len() != y.len() {
        return Err(Error::SizeMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if let Some(metric) = spec.metric() {
        if metric.n_rows() != x.dim() {
            return Err(Error::DimensionMismatch {
                left: metric.n_rows(),
                right: x.dim(),
            });
        }
    }
    Ok(GramBlock {
        kxx: symmetric_gram(spec, x),
        kyy: symmetric_gram(spec, y),
        kxy: cross_gram(spec, x, y),
        upper_bound: spec.upper_bound(),
    })
}

/// Kernel matrix over a single point set (used for pooled samples and
/// discrete supports).
pub fn gram_matrix(spec: &KernelSpec, points: &Sample) -> Result<Matrix> {
    if let Some(metric) = spec.metric() {
        if metric.n_rows() != points.dim() {
            return Err(Error::DimensionMismatch {
                left: metric.n_rows(),
                right: points.dim(),
            });
        }
    }
    Ok(symmetric_gram(spec, points))
}

/// Median of all pairwise Euclidean distances over the pooled sample.
///
/// Errors if every pooled point is identical (the median would be zero,
/// which is not a usable bandwidth).
pub fn median_heuristic(x: &Sample, y: &Sample) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            left: x.dim(),
            right: y.dim(),
        });
    }
    let pooled: Vec<&[f64]> = x.rows().chain(y.rows()).collect();
    let n = pooled.len();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(sq_dist(pooled[i], pooled[j]).sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    let k = dists.len();
    let median = if k % 2 == 1 {
        dists[k / 2]
    } else {
        0.5 * (dists[k / 2 - 1] + dists[k / 2])
    };
    if median <= 0.0 {
        return Err(Error::DegenerateInput(
            "all pooled points identical; median pairwise distance is zero".into(),
        ));
    }
    Ok(median)
}
