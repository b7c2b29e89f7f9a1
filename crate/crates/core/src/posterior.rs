//! Bayesian logistic regression and posterior compression.
//!
//! The pipeline whitens the training features, samples the posterior over
//! weights with random-walk Metropolis–Hastings, and then compresses the chain
//! with discrete herding in a whitened parameter space. Predictive quality is
//! compared through the average predictive probability on a test set.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::herding::{run_herding, HerdingConfig, SuperSampleSet};
use crate::kernels::Bandwidth;
use crate::numerics::{dot, HerdRng, Points, SeedStream};
use crate::targets::{EmpiricalDistribution, Target};

/// Eigenvalues below this fraction of the largest are dropped when whitening.
pub const EIGENVALUE_FLOOR: f64 = 1e-10;
pub const DEFAULT_PRIOR_VAR: f64 = 100.0;
pub const DEFAULT_THIN: usize = 100;
pub const DEFAULT_N_TRAIN: usize = 3000;
/// Kernel width used on the whitened chain.
pub const DEFAULT_COMPRESSION_SIGMA: f64 = 10.0;

const TARGET_ACCEPTANCE: (f64, f64) = (0.2, 0.4);

/// Features, binary labels and a train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Points,
    pub labels: Vec<u8>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Rows of a dataset selected by a split.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub x: Points,
    pub y: Vec<u8>,
}

impl LabeledSet {
    pub fn new(x: Points, y: Vec<u8>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
        }
        if let Some(&bad) = y.iter().find(|&&v| v > 1) {
            return Err(Error::NonBinaryLabel { row: 0, value: bad.to_string() });
        }
        Ok(LabeledSet { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn positive_fraction(&self) -> f64 {
        self.y.iter().map(|&v| v as f64).sum::<f64>() / self.len() as f64
    }
}

impl Dataset {
    /// Builds a dataset whose first `n_train` rows (after a seeded shuffle) form the training split.
    pub fn new(features: Points, labels: Vec<u8>, n_train: usize, seed: u64) -> Result<Self> {
        let n = features.len();
        if n == 0 {
            return Err(Error::EmptyFile);
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
        }
        if n_train == 0 || n_train > n {
            return Err(Error::config(
                "n_train",
                format!("must be in 1..={n}, got {n_train}"),
            ));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut SeedStream::new(seed).derive("split").rng());
        let test = order.split_off(n_train);
        Ok(Dataset { features, labels, train: order, test })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn train_set(&self) -> LabeledSet {
        self.subset(&self.train)
    }

    pub fn test_set(&self) -> LabeledSet {
        self.subset(&self.test)
    }

    fn subset(&self, idx: &[usize]) -> LabeledSet {
        LabeledSet {
            x: self.features.select(idx),
            y: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

fn is_numeric(field: &str) -> bool {
    field.trim().parse::<f64>().is_ok()
}

/// Reads a comma-separated file whose last column is a 0/1 label.
///
/// A first line made only of non-numeric fields is treated as a header.
/// Row numbers in errors are 1-based line numbers.
pub fn load_dataset(path: &Path, n_train: usize, seed: u64) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;
    let mut rows: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if i == 0 && record.iter().all(|f| !is_numeric(f)) {
            continue;
        }
        if record.len() < 2 {
            return Err(Error::ParseError { row: line, message: "need at least one feature and a label".into() });
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::ParseError {
                    row: line,
                    message: format!("expected {w} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        let last = record.len() - 1;
        for (j, field) in record.iter().take(last).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::ParseError {
                row: line,
                message: format!("field {} is not a number: {field:?}", j + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::ParseError { row: line, message: format!("field {} is not finite", j + 1) });
            }
            rows.push(v);
        }
        let label = &record[last];
        labels.push(match label.parse::<f64>() {
            Ok(v) if v == 0.0 => 0,
            Ok(v) if v == 1.0 => 1,
            _ => return Err(Error::NonBinaryLabel { row: line, value: label.to_string() }),
        });
    }
    let Some(w) = width else {
        return Err(Error::EmptyFile);
    };
    let features = Points::from_flat(w - 1, rows)?;
    Dataset::new(features, labels, n_train, seed)
}

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::ParseError { row, message: format!("{other:?}") },
    }
}

/// Shape of the bundled synthetic logistic problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec { dim: 10, n_train: 2000, n_test: 1000 }
    }
}

/// Standard-normal features, a random true weight vector and intercept, Bernoulli labels.
pub fn synthetic_dataset(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    if spec.dim == 0 || spec.n_train == 0 {
        return Err(Error::config("synthetic", "dim and n_train must be positive"));
    }
    let mut rng = SeedStream::new(seed).derive("synthetic").rng();
    let d = spec.dim;
    let truth: Vec<f64> = (0..=d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = spec.n_train + spec.n_test;
    let mut features = Points::with_capacity(d, n);
    let mut labels = Vec::with_capacity(n);
    let mut x = vec![0.0; d];
    for _ in 0..n {
        for v in x.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        features.push(&x)?;
        let p = sigmoid(dot(&truth[..d], &x) + truth[d]);
        labels.push(u8::from(rng.random::<f64>() < p));
    }
    Ok(Dataset {
        features,
        labels,
        train: (0..spec.n_train).collect(),
        test: (spec.n_train..n).collect(),
    })
}

/// Affine map to decorrelated, unit-variance coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenTransform {
    pub mean: Vec<f64>,
    /// `retained × input_dim`; rows are principal directions divided by root eigenvalues.
    pub projection: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub floor: f64,
}

impl WhitenTransform {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn retained(&self) -> usize {
        self.projection.nrows()
    }

    pub fn apply_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        let centered = DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(a, m)| a - m));
        Ok((&self.projection * centered).iter().copied().collect())
    }

    pub fn apply(&self, points: &Points) -> Result<Points> {
        let mut out = Points::with_capacity(self.retained(), points.len());
        for row in points.rows() {
            out.push(&self.apply_row(row)?)?;
        }
        Ok(out)
    }
}

/// Sample covariance with the n−1 normalizer.
pub fn sample_covariance(points: &Points) -> (Vec<f64>, DMatrix<f64>) {
    let mean = points.column_means();
    let d = points.dim();
    let mut cov = DMatrix::zeros(d, d);
    let mut c = vec![0.0; d];
    for row in points.rows() {
        for (ci, (a, m)) in c.iter_mut().zip(row.iter().zip(&mean)) {
            *ci = a - m;
        }
        for i in 0..d {
            for j in 0..=i {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    let denom = (points.len().max(2) - 1) as f64;
    for i in 0..d {
        for j in 0..=i {
            cov[(i, j)] /= denom;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    (mean, cov)
}

/// PCA whitening of `points`; returns the transform and the transformed points.
pub fn pca_whiten(points: &Points) -> Result<(WhitenTransform, Points)> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    if points.len() < 2 {
        return Err(Error::DegenerateData);
    }
    let (mean, cov) = sample_covariance(points);
    let eig = SymmetricEigen::new(cov);
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::DegenerateData);
    }
    let floor = EIGENVALUE_FLOOR * max;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] >= floor)
        .collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let d = points.dim();
    let mut projection = DMatrix::zeros(order.len(), d);
    let mut eigenvalues = Vec::with_capacity(order.len());
    for (r, &i) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[i];
        let v = eig.eigenvectors.column(i);
        // fix the sign so the largest-magnitude entry is positive
        let pivot = (0..d).fold(0, |best, j| if v[j].abs() > v[best].abs() { j } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let scale = sign / lambda.sqrt();
        for j in 0..d {
            projection[(r, j)] = v[j] * scale;
        }
        eigenvalues.push(lambda);
    }
    let transform = WhitenTransform { mean, projection, eigenvalues, floor };
    let whitened = transform.apply(points)?;
    Ok((transform, whitened))
}

/// Appends a constant-1 column when `bias` is set.
pub fn design_matrix(features: &Points, bias: bool) -> Points {
    if !bias {
        return features.clone();
    }
    let mut out = Points::with_capacity(features.dim() + 1, features.len());
    let mut row = vec![1.0; features.dim() + 1];
    for x in features.rows() {
        row[..x.len()].copy_from_slice(x);
        out.push(&row).expect("row width is fixed");
    }
    out
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Log posterior of logistic regression with an isotropic Gaussian prior, up to a constant.
///
/// `design` rows already include any bias column.
pub fn log_posterior(theta: &[f64], design: &Points, labels: &[u8], prior_var: f64) -> Result<f64> {
    if theta.len() != design.dim() {
        return Err(Error::DimensionMismatch { expected: design.dim(), got: theta.len() });
    }
    if labels.len() != design.len() {
        return Err(Error::DimensionMismatch { expected: design.len(), got: labels.len() });
    }
    Ok(log_posterior_unchecked(theta, design, labels, prior_var))
}

fn log_posterior_unchecked(theta: &[f64], design: &Points, labels: &[u8], prior_var: f64) -> f64 {
    let mut ll = 0.0;
    for (x, &y) in design.rows().zip(labels) {
        let z = dot(theta, x);
        ll += if y == 1 { -softplus(-z) } else { -softplus(z) };
    }
    ll - dot(theta, theta) / (2.0 * prior_var)
}

/// Posterior mode by damped Newton iterations from zero.
pub fn map_estimate(design: &Points, labels: &[u8], prior_var: f64) -> Result<Vec<f64>> {
    let p = design.dim();
    let mut theta = vec![0.0; p];
    let mut current = log_posterior(&theta, design, labels, prior_var)?;
    for _ in 0..100 {
        let mut grad = DVector::from_iterator(p, theta.iter().map(|t| -t / prior_var));
        let mut hess = DMatrix::from_diagonal_element(p, p, 1.0 / prior_var);
        for (x, &y) in design.rows().zip(labels) {
            let s = sigmoid(dot(&theta, x));
            let r = y as f64 - s;
            let w = s * (1.0 - s);
            for i in 0..p {
                grad[i] += r * x[i];
                for j in 0..=i {
                    hess[(i, j)] += w * x[i] * x[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                hess[(j, i)] = hess[(i, j)];
            }
        }
        let Some(chol) = hess.cholesky() else {
            break;
        };
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
            let value = log_posterior_unchecked(&trial, design, labels, prior_var);
            if value >= current {
                theta = trial;
                current = value;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || t * step.norm() < 1e-10 * (1.0 + DVector::from_column_slice(&theta).norm()) {
            break;
        }
    }
    Ok(theta)
}

/// Result of a random-walk Metropolis run.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcRun {
    pub samples: Points,
    pub acceptance_rate: f64,
}

/// Random-walk Metropolis with isotropic Gaussian proposals of scale `proposal_scale`.
///
/// After `burn_in` iterations every `thin`-th state is kept until `n_keep` are stored.
pub fn metropolis<F>(
    log_target: F,
    init: &[f64],
    proposal_scale: f64,
    n_keep: usize,
    thin: usize,
    burn_in: usize,
    rng: &mut HerdRng,
) -> Result<McmcRun>
where
    F: Fn(&[f64]) -> f64,
{
    if !(proposal_scale >= 0.0) || !proposal_scale.is_finite() {
        return Err(Error::config("proposal_scale", "must be finite and non-negative"));
    }
    if thin == 0 {
        return Err(Error::config("thin", "must be at least 1"));
    }
    let d = init.len();
    let mut current = init.to_vec();
    let mut current_lp = log_target(&current);
    let mut proposal = vec![0.0; d];
    let mut samples = Points::with_capacity(d, n_keep);
    let total = burn_in + n_keep * thin;
    let mut accepted = 0usize;
    for it in 1..=total {
        for (p, c) in proposal.iter_mut().zip(&current) {
            let z: f64 = StandardNormal.sample(rng);
            *p = c + proposal_scale * z;
        }
        let lp = log_target(&proposal);
        let delta = lp - current_lp;
        if delta >= 0.0 || rng.random::<f64>().ln() < delta {
            current.copy_from_slice(&proposal);
            current_lp = lp;
            accepted += 1;
        }
        if it > burn_in && (it - burn_in) % thin == 0 {
            samples.push(&current)?;
        }
    }
    let acceptance_rate = if total == 0 { 1.0 } else { accepted as f64 / total as f64 };
    Ok(McmcRun { samples, acceptance_rate })
}

/// Finds a proposal scale whose pilot acceptance rate lies in [0.2, 0.4].
///
/// Doubles or halves until the target band is bracketed, then bisects geometrically.
/// Returns the closest scale found if the band is never hit.
pub fn tune_proposal_scale<F>(log_target: F, init: &[f64], initial: f64, pilot: usize, seed: SeedStream) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let (lo_rate, hi_rate) = TARGET_ACCEPTANCE;
    let mid = 0.5 * (lo_rate + hi_rate);
    let rate_at = |scale: f64, round: u64| -> Result<f64> {
        let mut rng = seed.derive_index("pilot", round).rng();
        Ok(metropolis(&log_target, init, scale, pilot, 1, 0, &mut rng)?.acceptance_rate)
    };
    let mut scale = initial;
    let mut best = (f64::INFINITY, scale);
    let mut too_small: Option<f64> = None;
    let mut too_large: Option<f64> = None;
    for round in 0..60u64 {
        let rate = rate_at(scale, round)?;
        if (rate - mid).abs() < best.0 {
            best = ((rate - mid).abs(), scale);
        }
        if (lo_rate..=hi_rate).contains(&rate) {
            return Ok(scale);
        }
        if rate > hi_rate {
            too_small = Some(scale);
        } else {
            too_large = Some(scale);
        }
        scale = match (too_small, too_large) {
            (Some(a), Some(b)) => (a * b).sqrt(),
            (Some(a), None) => a * 2.0,
            (None, Some(b)) => b * 0.5,
            (None, None) => unreachable!(),
        };
    }
    Ok(best.1)
}

/// MH settings for the logistic posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub prior_var: f64,
    /// `None` tunes the scale on pilot chains.
    pub proposal_scale: Option<f64>,
    pub n_keep: usize,
    pub thin: usize,
    pub burn_in: usize,
    pub pilot: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            prior_var: DEFAULT_PRIOR_VAR,
            proposal_scale: None,
            n_keep: 5000,
            thin: DEFAULT_THIN,
            burn_in: 2000,
            pilot: 1000,
            seed: 0,
        }
    }
}

/// Thinned posterior draws and how they were produced.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    pub thetas: Points,
    pub acceptance_rate: f64,
    pub proposal_scale: f64,
    pub prior_var: f64,
    pub thin: usize,
    pub burn_in: usize,
    pub seed: u64,
}

/// Persisted alongside the chain CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainManifest {
    pub prior_var: f64,
    pub proposal_scale: f64,
    pub thin: usize,
    pub burn_in: usize,
    pub acceptance_rate: f64,
    pub seed: u64,
}

impl PosteriorChain {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn manifest(&self) -> ChainManifest {
        ChainManifest {
            prior_var: self.prior_var,
            proposal_scale: self.proposal_scale,
            thin: self.thin,
            burn_in: self.burn_in,
            acceptance_rate: self.acceptance_rate,
            seed: self.seed,
        }
    }
}

/// Samples the logistic posterior, starting from the MAP estimate.
pub fn mh_sample(train: &LabeledSet, cfg: &ChainConfig) -> Result<PosteriorChain> {
    if !(cfg.prior_var > 0.0) || !cfg.prior_var.is_finite() {
        return Err(Error::config("prior_var", "must be positive and finite"));
    }
    if train.is_empty() {
        return Err(Error::EmptySet);
    }
    let design = &train.x;
    let labels = &train.y;
    let target = |t: &[f64]| log_posterior_unchecked(t, design, labels, cfg.prior_var);
    let init = map_estimate(design, labels, cfg.prior_var)?;
    let root = SeedStream::new(cfg.seed);
    let proposal_scale = match cfg.proposal_scale {
        Some(s) => s,
        None => {
            let initial = 2.38 / (design.dim() as f64 * design.len() as f64).sqrt();
            tune_proposal_scale(target, &init, initial, cfg.pilot.max(1), root.derive("tune"))?
        }
    };
    let run = metropolis(target, &init, proposal_scale, cfg.n_keep, cfg.thin, cfg.burn_in, &mut root.derive("chain").rng())?;
    Ok(PosteriorChain {
        thetas: run.samples,
        acceptance_rate: run.acceptance_rate,
        proposal_scale,
        prior_var: cfg.prior_var,
        thin: cfg.thin,
        burn_in: cfg.burn_in,
        seed: cfg.seed,
    })
}

/// Average predicted probability of class 1 over a set of weight vectors.
pub fn predictive_prob(thetas: &Points, x: &[f64]) -> Result<f64> {
    if thetas.is_empty() {
        return Err(Error::EmptyThetaSet);
    }
    if x.len() != thetas.dim() {
        return Err(Error::DimensionMismatch { expected: thetas.dim(), got: x.len() });
    }
    Ok(thetas.rows().map(|t| sigmoid(dot(t, x))).sum::<f64>() / thetas.len() as f64)
}

fn mean_predictions(thetas: &Points, test: &Points) -> Result<Vec<f64>> {
    if thetas.is_empty() {
        return Err(Error::EmptySet);
    }
    if test.dim() != thetas.dim() {
        return Err(Error::DimensionMismatch { expected: thetas.dim(), got: test.dim() });
    }
    Ok(test
        .rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|x| thetas.rows().map(|t| sigmoid(dot(t, x))).sum::<f64>() / thetas.len() as f64)
        .collect())
}

/// Root mean squared gap between the average predictions of `s` and of `d` over the test inputs.
pub fn predictive_rmse(s: &Points, d: &Points, test: &Points) -> Result<f64> {
    let a = mean_predictions(s, test)?;
    let b = mean_predictions(d, test)?;
    Ok(rms_gap(&a, &b))
}

fn rms_gap(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

fn accuracy_of(predictions: &[f64], labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| u8::from(p >= 0.5) == y)
        .count();
    hits as f64 / labels.len() as f64
}

/// Fraction of test points whose averaged prediction (thresholded at 0.5) matches the label.
pub fn accuracy(thetas: &Points, test: &LabeledSet) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(accuracy_of(&mean_predictions(thetas, &test.x)?, &test.y))
}

/// Mean over test points of std(p(y|x, θ_i)) / √|D|, with the population std.
pub fn noise_floor(d: &Points, test: &Points) -> Result<f64> {
    if d.is_empty() || test.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(PredictiveTable::new(d, test)?.noise_floor())
}

/// Per-θ predictions on a fixed test design, for fast evaluation of many subsets.
#[derive(Debug, Clone)]
pub struct PredictiveTable {
    /// `probs[i * n_test + n]` is p(y=1 | x_n, θ_i).
    probs: Vec<f64>,
    n_theta: usize,
    n_test: usize,
    full_mean: Vec<f64>,
}

impl PredictiveTable {
    pub fn new(thetas: &Points, test: &Points) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::EmptyThetaSet);
        }
        if test.dim() != thetas.dim() {
            return Err(Error::DimensionMismatch { expected: thetas.dim(), got: test.dim() });
        }
        let n_test = test.len();
        let probs: Vec<f64> = thetas
            .rows()
            .collect::<Vec<_>>()
            .par_iter()
            .flat_map_iter(|t| test.rows().map(move |x| sigmoid(dot(t, x))))
            .collect();
        let n_theta = thetas.len();
        let mut full_mean = vec![0.0; n_test];
        for i in 0..n_theta {
            for (m, p) in full_mean.iter_mut().zip(&probs[i * n_test..(i + 1) * n_test]) {
                *m += p;
            }
        }
        for m in full_mean.iter_mut() {
            *m /= n_theta as f64;
        }
        Ok(PredictiveTable { probs, n_theta, n_test, full_mean })
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn full_mean(&self) -> &[f64] {
        &self.full_mean
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.n_test..(i + 1) * self.n_test]
    }

    pub fn mean_of(&self, indices: &[usize]) -> Result<Vec<f64>> {
        if indices.is_empty() {
            return Err(Error::EmptySet);
        }
        let mut out = vec![0.0; self.n_test];
        for &i in indices {
            if i >= self.n_theta {
                return Err(Error::config("indices", format!("index {i} out of range")));
            }
            for (o, p) in out.iter_mut().zip(self.row(i)) {
                *o += p;
            }
        }
        for o in out.iter_mut() {
            *o /= indices.len() as f64;
        }
        Ok(out)
    }

    pub fn rmse(&self, indices: &[usize]) -> Result<f64> {
        Ok(rms_gap(&self.mean_of(indices)?, &self.full_mean))
    }

    pub fn accuracy(&self, indices: &[usize], labels: &[u8]) -> Result<f64> {
        if labels.len() != self.n_test {
            return Err(Error::DimensionMismatch { expected: self.n_test, got: labels.len() });
        }
        Ok(accuracy_of(&self.mean_of(indices)?, labels))
    }

    pub fn full_accuracy(&self, labels: &[u8]) -> Result<f64> {
        if labels.len() != self.n_test {
            return Err(Error::DimensionMismatch { expected: self.n_test, got: labels.len() });
        }
        Ok(accuracy_of(&self.full_mean, labels))
    }

    /// RMSE and accuracy of every prefix of `order` whose length is in `sizes`.
    pub fn prefix_trace(&self, order: &[usize], sizes: &[usize], labels: &[u8]) -> Result<(Vec<f64>, Vec<f64>)> {
        if labels.len() != self.n_test {
            return Err(Error::DimensionMismatch { expected: self.n_test, got: labels.len() });
        }
        let mut want: Vec<usize> = sizes.to_vec();
        want.sort_unstable();
        if want.first() == Some(&0) || want.last().is_some_and(|&m| m > order.len()) {
            return Err(Error::config("sizes", "prefix sizes must be in 1..=len(order)"));
        }
        let mut sums = vec![0.0; self.n_test];
        let mut mean = vec![0.0; self.n_test];
        let mut result = std::collections::BTreeMap::new();
        let mut next = 0;
        for (k, &i) in order.iter().enumerate() {
            if next == want.len() {
                break;
            }
            if i >= self.n_theta {
                return Err(Error::config("indices", format!("index {i} out of range")));
            }
            for (s, p) in sums.iter_mut().zip(self.row(i)) {
                *s += p;
            }
            while next < want.len() && want[next] == k + 1 {
                for (m, s) in mean.iter_mut().zip(&sums) {
                    *m = s / (k + 1) as f64;
                }
                result.insert(k + 1, (rms_gap(&mean, &self.full_mean), accuracy_of(&mean, labels)));
                next += 1;
            }
        }
        Ok(sizes.iter().map(|s| result[s]).unzip())
    }

    pub fn noise_floor(&self) -> f64 {
        let m = self.n_theta as f64;
        let mut acc = 0.0;
        for n in 0..self.n_test {
            let mu = self.full_mean[n];
            let var = (0..self.n_theta)
                .map(|i| (self.probs[i * self.n_test + n] - mu).powi(2))
                .sum::<f64>()
                / m;
            acc += var.sqrt();
        }
        acc / self.n_test as f64 / m.sqrt()
    }
}

/// Herds a posterior chain in whitened coordinates and maps the picks back to the original θ's.
///
/// A chain whose spread is degenerate (one distinct θ) is herded as is.
pub fn compress_posterior(thetas: &Points, bandwidth: Bandwidth, t_max: usize, seed: u64) -> Result<SuperSampleSet> {
    if thetas.is_empty() {
        return Err(Error::EmptySet);
    }
    let space = match pca_whiten(thetas) {
        Ok((_, w)) => w,
        Err(Error::DegenerateData) => thetas.clone(),
        Err(e) => return Err(e),
    };
    let cfg = HerdingConfig::discrete(t_max, bandwidth, seed);
    let mut run = run_herding(&cfg, &Target::Empirical(EmpiricalDistribution::new(space)?))?;
    let indices = run.indices.as_deref().unwrap_or_default();
    run.samples = thetas.select(indices);
    Ok(run)
}

/// Settings for the full compression experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PosteriorExperiment {
    pub chain: ChainConfig,
    pub bias: bool,
    pub bandwidth: Bandwidth,
    pub sizes: Vec<usize>,
    pub bootstrap_repeats: usize,
}

impl Default for PosteriorExperiment {
    fn default() -> Self {
        PosteriorExperiment {
            chain: ChainConfig::default(),
            bias: true,
            bandwidth: Bandwidth::Fixed(DEFAULT_COMPRESSION_SIGMA),
            sizes: vec![10, 20, 50, 100, 200, 500, 1000],
            bootstrap_repeats: 10,
        }
    }
}

/// Metrics of herding and random subsets of the chain, per subset size.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorReport {
    pub chain: PosteriorChain,
    pub herding: SuperSampleSet,
    pub whiten: WhitenTransform,
    pub sizes: Vec<usize>,
    pub herding_rmse: Vec<f64>,
    pub herding_accuracy: Vec<f64>,
    pub random_rmse_mean: Vec<f64>,
    pub random_rmse_std: Vec<f64>,
    pub random_accuracy_mean: Vec<f64>,
    pub full_accuracy: f64,
    pub noise_floor: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Whitens features, samples the posterior, compresses it and scores herding against bootstrap subsets.
pub fn run_posterior_experiment(data: &Dataset, exp: &PosteriorExperiment) -> Result<PosteriorReport> {
    if data.test.is_empty() {
        return Err(Error::config("n_train", "no test rows left after the split"));
    }
    if exp.sizes.is_empty() || exp.sizes.contains(&0) {
        return Err(Error::config("t_grid", "sizes must be positive and non-empty"));
    }
    if exp.chain.n_keep == 0 {
        return Err(Error::config("keep", "must keep at least one sample"));
    }
    let train = data.train_set();
    let test = data.test_set();
    let (whiten, train_w) = pca_whiten(&train.x)?;
    let train_design = LabeledSet::new(design_matrix(&train_w, exp.bias), train.y)?;
    let test_design = LabeledSet::new(design_matrix(&whiten.apply(&test.x)?, exp.bias), test.y)?;

    let chain = mh_sample(&train_design, &exp.chain)?;
    let t_max = *exp.sizes.iter().max().expect("non-empty");
    let herding = compress_posterior(&chain.thetas, exp.bandwidth, t_max, exp.chain.seed)?;
    let table = PredictiveTable::new(&chain.thetas, &test_design.x)?;
    let labels = &test_design.y;
    let order = herding.indices.clone().unwrap_or_default();
    let (herding_rmse, herding_accuracy) = table.prefix_trace(&order, &exp.sizes, labels)?;

    let root = SeedStream::new(exp.chain.seed);
    let mut per_rep = Vec::with_capacity(exp.bootstrap_repeats);
    for r in 0..exp.bootstrap_repeats {
        let mut rng = root.derive_index("bootstrap", r as u64).rng();
        let draws: Vec<usize> = (0..t_max).map(|_| rng.random_range(0..chain.len())).collect();
        per_rep.push(table.prefix_trace(&draws, &exp.sizes, labels)?);
    }
    let mut random_rmse_mean = Vec::new();
    let mut random_rmse_std = Vec::new();
    let mut random_accuracy_mean = Vec::new();
    if !per_rep.is_empty() {
        for k in 0..exp.sizes.len() {
            let rmse: Vec<f64> = per_rep.iter().map(|(r, _)| r[k]).collect();
            let acc: Vec<f64> = per_rep.iter().map(|(_, a)| a[k]).collect();
            let (m, s) = mean_std(&rmse);
            random_rmse_mean.push(m);
            random_rmse_std.push(s);
            random_accuracy_mean.push(mean_std(&acc).0);
        }
    }
    Ok(PosteriorReport {
        full_accuracy: table.full_accuracy(labels)?,
        noise_floor: table.noise_floor(),
        chain,
        herding,
        whiten,
        sizes: exp.sizes.clone(),
        herding_rmse,
        herding_accuracy,
        random_rmse_mean,
        random_rmse_std,
        random_accuracy_mean,
    })
}
