//! Dense linear algebra, Gaussian densities and the seeded random stream.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The generator every stochastic routine draws from.
pub type HerdRng = ChaCha8Rng;

/// Relative pivot floor for Cholesky, as a fraction of the largest diagonal entry.
pub const PIVOT_TOLERANCE: f64 = 1e-12;
/// Jitter added to the diagonal once before a factorization is declared failed.
pub const CHOLESKY_JITTER: f64 = 1e-10;
const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// An ordered set of points in ℝ^d stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn empty(dim: usize) -> Self {
        Points {
            dim,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Points {
            dim,
            data: Vec::with_capacity(dim * n),
        }
    }

    /// Builds a point set from rows, rejecting ragged or non-finite input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyInput)?;
        let dim = first.as_ref().len();
        let mut points = Points::with_capacity(dim, rows.len());
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::RaggedRows {
                    row: i,
                    expected: dim,
                    got: row.len(),
                });
            }
            points.push(row)?;
        }
        Ok(points)
    }

    /// Wraps a flat row-major buffer.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Points { dim, data })
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        self.data.extend_from_slice(x);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// The first `n` points (all of them if `n` exceeds the length).
    pub fn prefix(&self, n: usize) -> Points {
        let n = n.min(self.len());
        Points {
            dim: self.dim,
            data: self.data[..n * self.dim].to_vec(),
        }
    }

    /// Gathers the listed rows, repeats allowed.
    pub fn select(&self, indices: &[usize]) -> Points {
        let mut out = Points::with_capacity(self.dim, indices.len());
        for &i in indices {
            out.data.extend_from_slice(self.row(i));
        }
        out
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.len() as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.data)
    }
}

/// A symmetric d×d matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let diff = (m[(i, j)] - m[(j, i)]).abs();
                if diff > SYMMETRY_TOLERANCE * scale {
                    return Err(Error::NotSymmetric {
                        row: i,
                        col: j,
                        diff,
                    });
                }
            }
        }
        Ok(SymMatrix(m))
    }

    pub fn from_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        SymMatrix::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        SymMatrix(DMatrix::identity(dim, dim) * scale)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    /// `self + other`, both symmetric.
    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn add_diagonal(&self, value: f64) -> SymMatrix {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += value;
        }
        SymMatrix(m)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

/// Lower-triangular Cholesky factor L with L·Lᵀ equal to the factored matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    lower: DMatrix<f64>,
}

impl Cholesky {
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// ln det(L·Lᵀ).
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<f64>()
    }

    /// Solves L·y = b.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.lower[(i, k)] * y[k];
            }
            y[i] = s / self.lower[(i, i)];
        }
        y
    }

    /// Solves Lᵀ·x = y.
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lower[(k, i)] * x[k];
            }
            x[i] = s / self.lower[(i, i)];
        }
        x
    }

    /// Solves (L·Lᵀ)·x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// bᵀ(L·Lᵀ)⁻¹b.
    pub fn quad_form(&self, b: &[f64]) -> f64 {
        self.solve_lower(b).iter().map(|v| v * v).sum()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }

    /// L·z.
    pub fn mul_vec(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..=i).map(|k| self.lower[(i, k)] * z[k]).sum())
            .collect()
    }
}

fn try_cholesky(m: &DMatrix<f64>, floor: f64) -> std::result::Result<DMatrix<f64>, (usize, f64)> {
    let n = m.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > floor) {
            return Err((j, pivot));
        }
        let diag = pivot.sqrt();
        l[(j, j)] = diag;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / diag;
        }
    }
    Ok(l)
}

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// A pivot at or below `1e-12 · max diagonal` marks the matrix as degenerate;
/// the factorization is then retried once with `1e-10·I` added before failing.
pub fn cholesky(m: &SymMatrix) -> Result<Cholesky> {
    let mat = m.matrix();
    let max_diag = (0..mat.nrows())
        .map(|i| mat[(i, i)])
        .fold(0.0_f64, f64::max);
    let floor = PIVOT_TOLERANCE * max_diag;
    match try_cholesky(mat, floor) {
        Ok(lower) => Ok(Cholesky { lower }),
        Err(_) => {
            let jittered = m.add_diagonal(CHOLESKY_JITTER);
            let floor = PIVOT_TOLERANCE * (max_diag + CHOLESKY_JITTER);
            try_cholesky(jittered.matrix(), floor)
                .map(|lower| Cholesky { lower })
                .map_err(|(row, pivot)| Error::NotPositiveDefinite { row, pivot })
        }
    }
}

/// A square-root factor usable for sampling from a PSD covariance.
///
/// The all-zero covariance factors to L = 0 (a point mass); anything else goes
/// through [`cholesky`].
pub fn sampling_factor(cov: &SymMatrix) -> Result<Option<Cholesky>> {
    if cov.is_zero() {
        Ok(None)
    } else {
        cholesky(cov).map(Some)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Log density of N(mean, cov) at x.
pub fn mvn_logpdf(x: &[f64], mean: &[f64], cov: &SymMatrix) -> Result<f64> {
    check_dim(mean.len(), x.len())?;
    check_dim(mean.len(), cov.dim())?;
    let chol = cholesky(cov)?;
    let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let q = chol.quad_form(&diff);
    let d = mean.len() as f64;
    Ok(-0.5 * (d * (2.0 * std::f64::consts::PI).ln() + chol.log_det() + q))
}

/// Draws `n` points from N(mean, cov) as mean + L·z.
pub fn mvn_sample(rng: &mut HerdRng, mean: &[f64], cov: &SymMatrix, n: usize) -> Result<Points> {
    check_dim(mean.len(), cov.dim())?;
    let factor = sampling_factor(cov)?;
    let d = mean.len();
    let mut out = Points::with_capacity(d, n);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        let draw = draw_with_factor(rng, mean, factor.as_ref(), &mut z);
        out.data.extend_from_slice(&draw);
    }
    Ok(out)
}

pub(crate) fn draw_with_factor(
    rng: &mut HerdRng,
    mean: &[f64],
    factor: Option<&Cholesky>,
    scratch: &mut [f64],
) -> Vec<f64> {
    match factor {
        None => mean.to_vec(),
        Some(chol) => {
            for v in scratch.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            let lz = chol.mul_vec(scratch);
            mean.iter().zip(lz).map(|(m, v)| m + v).collect()
        }
    }
}

/// Root of the deterministic seed tree.
///
/// Every consumer derives its own generator from a label so that adding or
/// reordering consumers does not shift anyone else's stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SeedStream(pub u64);

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream(seed)
    }

    pub fn seed(&self) -> u64 {
        self.0
    }

    /// A child seed for `label`.
    pub fn derive(&self, label: &str) -> SeedStream {
        let mut h = splitmix64(self.0);
        for b in label.bytes() {
            h = splitmix64(h ^ u64::from(b));
        }
        SeedStream(h)
    }

    /// A child seed for the `index`-th member of a family (e.g. iid repeat `i`).
    pub fn derive_index(&self, label: &str, index: u64) -> SeedStream {
        SeedStream(splitmix64(self.derive(label).0 ^ splitmix64(index)))
    }

    pub fn rng(&self) -> HerdRng {
        HerdRng::seed_from_u64(self.0)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
