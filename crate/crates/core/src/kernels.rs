//! Kernels and the RKHS mean quantities herding needs.
//!
//! For the Gaussian kernel `k(x, y) = exp(-‖x-y‖²/(2σ²))` and a Gaussian
//! component N(μ, Σ), convolving gives
//!
//! ```text
//! E_{x'~N(μ,Σ)}[k(x, x')] = σ^d |Σ + σ²I|^{-1/2} exp(-½ (x-μ)ᵀ(Σ + σ²I)⁻¹(x-μ))
//! ```
//!
//! and the double expectation between two components i, j uses Σ_i + Σ_j + σ²I
//! in the same formula. Both stay well defined for point-mass components
//! (Σ = 0) because σ²I is positive definite.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, HerdRng, Points, SymMatrix};
use crate::targets::{EmpiricalDistribution, GaussianMixture, Target};

/// Number of target draws used by the median heuristic.
pub const MEDIAN_HEURISTIC_DRAWS: usize = 1000;

/// A positive-definite kernel on ℝ^d.
pub trait Kernel: Send + Sync {
    /// k(x, y); callers guarantee equal lengths.
    fn eval(&self, x: &[f64], y: &[f64]) -> f64;

    /// Adds `scale · ∂k(x, y)/∂x` into `out`.
    fn add_gradient(&self, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]);

    /// Whether a closed-form mean map against Gaussian mixtures exists.
    fn has_mixture_mean_map(&self) -> bool {
        false
    }
}

/// Isotropic Gaussian (RBF) kernel with bandwidth σ; k(x, x) = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel {
    sigma: f64,
    neg_half_inv_sigma_sq: f64,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidBandwidth(sigma));
        }
        Ok(GaussianKernel {
            sigma,
            neg_half_inv_sigma_sq: -0.5 / (sigma * sigma),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Dimension-checked evaluation.
    pub fn eval_checked(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(self.eval(x, y))
    }

    #[inline]
    fn eval_sq(&self, sq_dist: f64) -> f64 {
        (sq_dist * self.neg_half_inv_sigma_sq).exp()
    }
}

impl Kernel for GaussianKernel {
    #[inline]
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        self.eval_sq(numerics::squared_distance(x, y))
    }

    fn add_gradient(&self, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) {
        let k = self.eval(x, y);
        let c = scale * k * 2.0 * self.neg_half_inv_sigma_sq;
        for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
            *o += c * (a - b);
        }
    }

    fn has_mixture_mean_map(&self) -> bool {
        true
    }
}

/// How to pick σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise distance among [`MEDIAN_HEURISTIC_DRAWS`] target draws.
    MedianHeuristic,
}

impl Bandwidth {
    pub fn resolve(&self, target: &Target, rng: &mut HerdRng) -> Result<GaussianKernel> {
        match *self {
            Bandwidth::Fixed(s) => GaussianKernel::new(s),
            Bandwidth::MedianHeuristic => {
                let draws = match target {
                    Target::Mixture(gm) => gm.sample(rng, MEDIAN_HEURISTIC_DRAWS),
                    Target::Empirical(e) if e.len() <= MEDIAN_HEURISTIC_DRAWS => e.points().clone(),
                    Target::Empirical(e) => {
                        let idx = index::sample(rng, e.len(), MEDIAN_HEURISTIC_DRAWS).into_vec();
                        e.points().select(&idx)
                    }
                };
                let sigma = median_pairwise_distance(&draws);
                // all draws coincide: any bandwidth works
                GaussianKernel::new(if sigma > 0.0 { sigma } else { 1.0 })
            }
        }
    }
}

/// Median of the Euclidean distances over all unordered pairs.
pub fn median_pairwise_distance(points: &Points) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(numerics::squared_distance(points.row(i), points.row(j)));
        }
    }
    let m = d.len();
    d.select_nth_unstable_by(m / 2, f64::total_cmp);
    let upper = d[m / 2].sqrt();
    if m % 2 == 1 {
        upper
    } else {
        let lower = d[..m / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower.sqrt() + upper)
    }
}

#[derive(Debug, Clone)]
struct ConvolvedComponent {
    mean: Vec<f64>,
    /// (Σ + σ²I)⁻¹, row-major.
    precision: Vec<f64>,
    /// π σ^d |Σ + σ²I|^{-1/2}
    coefficient: f64,
}

/// Closed-form mean map of a Gaussian mixture under a Gaussian kernel.
#[derive(Debug, Clone)]
pub struct GmMeanMap {
    dim: usize,
    components: Vec<ConvolvedComponent>,
}

impl GmMeanMap {
    pub fn new(kernel: &GaussianKernel, gm: &GaussianMixture) -> Result<Self> {
        let d = gm.dim();
        let s2 = kernel.sigma() * kernel.sigma();
        let components = (0..gm.components())
            .map(|j| {
                let conv = gm.covariances()[j].add_diagonal(s2);
                let chol = numerics::cholesky(&conv)?;
                let log_coef = d as f64 * kernel.sigma().ln() - 0.5 * chol.log_det();
                let inv = chol.inverse();
                let precision = (0..d * d).map(|k| inv[(k / d, k % d)]).collect();
                Ok(ConvolvedComponent {
                    mean: gm.means().row(j).to_vec(),
                    precision,
                    coefficient: gm.weights()[j] * log_coef.exp(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GmMeanMap { dim: d, components })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Value at `x`; also accumulates the gradient when `gradient` is given.
    fn eval_inner(&self, x: &[f64], mut gradient: Option<&mut [f64]>) -> f64 {
        let d = self.dim;
        let mut r = vec![0.0; d];
        let mut u = vec![0.0; d];
        let mut total = 0.0;
        for c in &self.components {
            for i in 0..d {
                r[i] = x[i] - c.mean[i];
            }
            let mut q = 0.0;
            for i in 0..d {
                let row = &c.precision[i * d..(i + 1) * d];
                u[i] = numerics::dot(row, &r);
                q += r[i] * u[i];
            }
            let term = c.coefficient * (-0.5 * q).exp();
            total += term;
            if let Some(g) = gradient.as_deref_mut() {
                for i in 0..d {
                    g[i] -= term * u[i];
                }
            }
        }
        total
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_inner(x, None)
    }

    /// Adds the gradient of the mean map at `x` into `out` and returns the value.
    pub fn eval_with_gradient(&self, x: &[f64], out: &mut [f64]) -> f64 {
        self.eval_inner(x, Some(out))
    }
}

/// Mean map of an empirical distribution: an average of kernel evaluations.
#[derive(Debug, Clone)]
pub struct EmpiricalMeanMap<K = GaussianKernel> {
    kernel: K,
    points: Points,
}

impl<K: Kernel> EmpiricalMeanMap<K> {
    pub fn new(kernel: K, dist: &EmpiricalDistribution) -> Self {
        EmpiricalMeanMap {
            kernel,
            points: dist.points().clone(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.points.rows().map(|p| self.kernel.eval(x, p)).sum();
        sum / self.points.len() as f64
    }

    /// The mean map evaluated at every support point, computed row-parallel.
    pub fn values_at_support(&self) -> Vec<f64> {
        (0..self.points.len())
            .into_par_iter()
            .map(|i| self.eval(self.points.row(i)))
            .collect()
    }
}

/// Where a [`MeanMap`]'s values come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanMapKind {
    AnalyticMixture,
    Empirical,
}

/// x ↦ E_{x'~p}[k(x, x')] for a herding target.
#[derive(Debug, Clone)]
pub enum MeanMap {
    Analytic(GmMeanMap),
    Empirical(EmpiricalMeanMap),
}

impl MeanMap {
    pub fn for_target(kernel: &GaussianKernel, target: &Target) -> Result<Self> {
        Ok(match target {
            Target::Mixture(gm) => MeanMap::Analytic(GmMeanMap::new(kernel, gm)?),
            Target::Empirical(e) => MeanMap::Empirical(EmpiricalMeanMap::new(*kernel, e)),
        })
    }

    pub fn kind(&self) -> MeanMapKind {
        match self {
            MeanMap::Analytic(_) => MeanMapKind::AnalyticMixture,
            MeanMap::Empirical(_) => MeanMapKind::Empirical,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            MeanMap::Analytic(m) => m.eval(x),
            MeanMap::Empirical(m) => m.eval(x),
        }
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// E_{x'~gm}[k(x, x')] in closed form.
pub fn mean_map_gm(kernel: &GaussianKernel, gm: &GaussianMixture, x: &[f64]) -> Result<f64> {
    check_dim(gm.dim(), x.len())?;
    Ok(GmMeanMap::new(kernel, gm)?.eval(x))
}

/// (1/|D|) Σ_i k(x, d_i).
pub fn mean_map_empirical<K: Kernel + Clone>(
    kernel: &K,
    dist: &EmpiricalDistribution,
    x: &[f64],
) -> Result<f64> {
    if dist.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    check_dim(dist.dim(), x.len())?;
    Ok(EmpiricalMeanMap::new(kernel.clone(), dist).eval(x))
}

/// E_{x,x'~gm}[k(x, x')] in closed form.
pub fn double_expectation_gm(kernel: &GaussianKernel, gm: &GaussianMixture) -> Result<f64> {
    let d = gm.dim();
    let s2 = kernel.sigma() * kernel.sigma();
    let log_sigma_d = d as f64 * kernel.sigma().ln();
    let m = gm.components();
    let mut total = 0.0;
    for i in 0..m {
        for j in i..m {
            let conv: SymMatrix = gm.covariances()[i]
                .add(&gm.covariances()[j])
                .add_diagonal(s2);
            let chol = numerics::cholesky(&conv)?;
            let diff: Vec<f64> = gm
                .means()
                .row(i)
                .iter()
                .zip(gm.means().row(j))
                .map(|(a, b)| a - b)
                .collect();
            let q = chol.quad_form(&diff);
            let term = gm.weights()[i]
                * gm.weights()[j]
                * (log_sigma_d - 0.5 * chol.log_det() - 0.5 * q).exp();
            total += if i == j { term } else { 2.0 * term };
        }
    }
    Ok(total)
}

/// (1/|D|²) Σ_{i,j} k(d_i, d_j).
pub fn double_expectation_empirical<K: Kernel + Clone>(
    kernel: &K,
    dist: &EmpiricalDistribution,
) -> Result<f64> {
    if dist.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let values = EmpiricalMeanMap::new(kernel.clone(), dist).values_at_support();
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}
