//! Target distributions: Gaussian mixtures and empirical point sets.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, Cholesky, HerdRng, Points, SymMatrix};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// A finite mixture of multivariate normals.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MixtureJson", into = "MixtureJson")]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Points,
    covariances: Vec<SymMatrix>,
    factors: Vec<Option<Cholesky>>,
    cumulative: Vec<f64>,
}

impl PartialEq for GaussianMixture {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights
            && self.means == other.means
            && self.covariances == other.covariances
    }
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Points, covariances: Vec<SymMatrix>) -> Result<Self> {
        let m = weights.len();
        if m == 0 {
            return Err(Error::InvalidMixture("no components".into()));
        }
        if means.len() != m || covariances.len() != m {
            return Err(Error::InvalidMixture(format!(
                "{m} weights but {} means and {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMixture(format!("invalid weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidMixture(format!("weights sum to {total}")));
        }
        let d = means.dim();
        if let Some(c) = covariances.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: c.dim(),
            });
        }
        let factors = covariances
            .iter()
            .map(numerics::sampling_factor)
            .collect::<Result<Vec<_>>>()?;
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(GaussianMixture {
            weights,
            means,
            covariances,
            factors,
            cumulative,
        })
    }

    /// A single Gaussian component.
    pub fn single(mean: &[f64], cov: SymMatrix) -> Result<Self> {
        GaussianMixture::new(vec![1.0], Points::from_rows(&[mean])?, vec![cov])
    }

    /// Equal-weight point masses at the given points.
    pub fn point_masses(points: &Points) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let d = points.dim();
        let mut weights = vec![1.0 / n as f64; n];
        // keep the sum within tolerance for awkward n
        let excess: f64 = weights.iter().sum::<f64>() - 1.0;
        weights[0] -= excess;
        GaussianMixture::new(weights, points.clone(), vec![SymMatrix::zeros(d); n])
    }

    pub fn dim(&self) -> usize {
        self.means.dim()
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &Points {
        &self.means
    }

    pub fn covariances(&self) -> &[SymMatrix] {
        &self.covariances
    }

    fn pick_component(&self, rng: &mut HerdRng) -> usize {
        let u: f64 = rng.random();
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.components() - 1)
    }

    /// Draws `n` points together with the component each came from.
    pub fn sample_labeled(&self, rng: &mut HerdRng, n: usize) -> (Points, Vec<usize>) {
        let d = self.dim();
        let mut out = Points::with_capacity(d, n);
        let mut labels = Vec::with_capacity(n);
        let mut scratch = vec![0.0; d];
        for _ in 0..n {
            let j = self.pick_component(rng);
            let x = numerics::draw_with_factor(
                rng,
                self.means.row(j),
                self.factors[j].as_ref(),
                &mut scratch,
            );
            out.push(&x).expect("finite draw");
            labels.push(j);
        }
        (out, labels)
    }

    pub fn sample(&self, rng: &mut HerdRng, n: usize) -> Points {
        self.sample_labeled(rng, n).0
    }

    /// Per-dimension raw moment ⟨x_i^order⟩ for order 1, 2 or 3.
    pub fn raw_moment(&self, order: u32) -> Result<Vec<f64>> {
        if !(1..=3).contains(&order) {
            return Err(Error::UnsupportedOrder(order));
        }
        let d = self.dim();
        let mut out = vec![0.0; d];
        for (j, &w) in self.weights.iter().enumerate() {
            let mu = self.means.row(j);
            for i in 0..d {
                let m = mu[i];
                let v = self.covariances[j].get(i, i);
                let moment = match order {
                    1 => m,
                    2 => m * m + v,
                    _ => m * m * m + 3.0 * m * v,
                };
                out[i] += w * moment;
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct MixtureJson {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    /// One row-major d×d block per component.
    covariances: Vec<Vec<f64>>,
    dim: usize,
}

impl TryFrom<MixtureJson> for GaussianMixture {
    type Error = Error;

    fn try_from(j: MixtureJson) -> Result<Self> {
        let means = Points::from_rows(&j.means)?;
        if means.dim() != j.dim {
            return Err(Error::DimensionMismatch {
                expected: j.dim,
                got: means.dim(),
            });
        }
        let covariances = j
            .covariances
            .iter()
            .map(|c| SymMatrix::from_row_major(j.dim, c))
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(j.weights, means, covariances)
    }
}

impl From<GaussianMixture> for MixtureJson {
    fn from(gm: GaussianMixture) -> Self {
        MixtureJson {
            dim: gm.dim(),
            means: gm.means.rows().map(<[f64]>::to_vec).collect(),
            covariances: gm.covariances.iter().map(SymMatrix::to_row_major).collect(),
            weights: gm.weights,
        }
    }
}

/// Parameters of the random mixture generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomMixtureSpec {
    pub dim: usize,
    pub components: usize,
    /// Means are uniform in `[box_low, box_high]^d`.
    pub box_low: f64,
    pub box_high: f64,
    /// Expected covariance is roughly `cov_scale · I`.
    pub cov_scale: f64,
}

impl RandomMixtureSpec {
    pub fn new(dim: usize, components: usize) -> Self {
        RandomMixtureSpec {
            dim,
            components,
            box_low: 0.0,
            box_high: 10.0,
            cov_scale: 1.0,
        }
    }
}

/// Builds a random mixture: uniform means in the box, Dirichlet(1) weights and
/// covariances `cov_scale · (A·Aᵀ/d + 0.01·I)` with standard-normal `A`.
pub fn random_mixture(rng: &mut HerdRng, spec: &RandomMixtureSpec) -> Result<GaussianMixture> {
    let RandomMixtureSpec {
        dim: d,
        components: m,
        box_low,
        box_high,
        cov_scale,
    } = *spec;
    if d == 0 {
        return Err(Error::config("dim", "must be at least 1"));
    }
    if m == 0 {
        return Err(Error::config("components", "must be at least 1"));
    }
    if !(box_high > box_low) {
        return Err(Error::config("box", "upper bound must exceed lower bound"));
    }
    if !(cov_scale > 0.0) {
        return Err(Error::config("cov_scale", "must be positive"));
    }

    let mut raw: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter_mut().for_each(|w| *w /= total);

    let mut means = Points::with_capacity(d, m);
    let mut covariances = Vec::with_capacity(m);
    for _ in 0..m {
        let mu: Vec<f64> = (0..d)
            .map(|_| rng.random_range(box_low..box_high))
            .collect();
        means.push(&mu)?;
        let a: nalgebra::DMatrix<f64> = nalgebra::DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
        let mut c = (&a * a.transpose()) * (cov_scale / d as f64);
        c = (&c + c.transpose()) * 0.5;
        for i in 0..d {
            c[(i, i)] += 0.01 * cov_scale;
        }
        covariances.push(SymMatrix::new(c)?);
    }
    GaussianMixture::new(raw, means, covariances)
}

/// A finite, uniformly weighted set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    points: Points,
}

impl EmpiricalDistribution {
    pub fn new(points: Points) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        Ok(EmpiricalDistribution { points })
    }

    /// Wraps rows in order; rejects empty or ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        EmpiricalDistribution::new(Points::from_rows(rows)?)
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// Uniform draws with replacement.
    pub fn sample(&self, rng: &mut HerdRng, n: usize) -> Points {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.len())).collect();
        self.points.select(&idx)
    }

    pub fn raw_moment(&self, order: u32) -> Result<Vec<f64>> {
        sample_raw_moment(&self.points, order)
    }
}

/// Per-dimension raw moment of a point set.
pub fn sample_raw_moment(points: &Points, order: u32) -> Result<Vec<f64>> {
    if !(1..=3).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    if points.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut out = vec![0.0; points.dim()];
    for row in points.rows() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v.powi(order as i32);
        }
    }
    let n = points.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// The distribution herding tries to match.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Mixture(GaussianMixture),
    Empirical(EmpiricalDistribution),
}

impl Target {
    pub fn dim(&self) -> usize {
        match self {
            Target::Mixture(gm) => gm.dim(),
            Target::Empirical(e) => e.dim(),
        }
    }

    pub fn sample(&self, rng: &mut HerdRng, n: usize) -> Points {
        match self {
            Target::Mixture(gm) => gm.sample(rng, n),
            Target::Empirical(e) => e.sample(rng, n),
        }
    }
}

impl From<GaussianMixture> for Target {
    fn from(gm: GaussianMixture) -> Self {
        Target::Mixture(gm)
    }
}

impl From<EmpiricalDistribution> for Target {
    fn from(e: EmpiricalDistribution) -> Self {
        Target::Empirical(e)
    }
}
