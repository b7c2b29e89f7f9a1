//! The herding engine.
//!
//! A [`HerdingState`] is the dual view of the herding weight vector: with the
//! weights initialized at the target mean map, the state after T steps is
//! fully described by the sample history x₁..x_T. Each step maximizes
//!
//! ```text
//! J_T(x) = E_{x'~p}[k(x, x')] - 1/(T+1) · Σ_{t≤T} k(x, x_t)
//! ```
//!
//! and the state keeps running sums so that the squared MMD
//!
//! ```text
//! E_T² = E_{x,x'~p}[k] - (2/T) Σ_t E_{x~p}[k(x, x_t)] + (1/T²) Σ_{t,t'} k(x_t, x_t')
//! ```
//!
//! is available in O(1) after every step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    double_expectation_gm, Bandwidth, GaussianKernel, GmMeanMap, Kernel, MeanMap,
};
use crate::numerics::{self, HerdRng, Points, SeedStream};
use crate::targets::{GaussianMixture, Target};

/// Armijo sufficient-increase constant for the line search.
const ARMIJO: f64 = 1e-4;
/// Largest line-search start, as a multiple of the base step.
const MAX_STEP_GROWTH: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HerdingMode {
    /// Argmax over ℝ^d by multi-start gradient ascent (mixture targets).
    Continuous,
    /// Argmax over the points of an empirical target.
    Discrete,
}

impl std::fmt::Display for HerdingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HerdingMode::Continuous => "continuous",
            HerdingMode::Discrete => "discrete",
        })
    }
}

/// Settings of the continuous-mode argmax.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig {
    /// Fresh target draws used as seeds each step (the previous sample is added).
    pub n_seeds: usize,
    /// Best-scoring seeds that are ascended; the highest end point wins.
    pub n_starts: usize,
    /// First trial step of every line search, in units of σ².
    pub initial_step: f64,
    /// After an accepted step the next search starts at `step_growth ×` that step.
    pub step_growth: f64,
    /// Halvings per line search before giving up.
    pub max_halvings: u32,
    pub max_iterations: usize,
    /// Stop once ‖∇J‖ < `gradient_tolerance · σ`.
    pub gradient_tolerance: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            n_seeds: 50,
            n_starts: 20,
            initial_step: 0.5,
            step_growth: 2.0,
            max_halvings: 40,
            max_iterations: 100,
            gradient_tolerance: 1e-8,
        }
    }
}

impl AscentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_step > 0.0) {
            return Err(Error::config("initial_step", "must be positive"));
        }
        if self.n_starts == 0 {
            return Err(Error::config("n_starts", "must be at least 1"));
        }
        if !(self.step_growth >= 1.0) {
            return Err(Error::config("step_growth", "must be at least 1"));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::config("gradient_tolerance", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HerdingConfig {
    pub mode: HerdingMode,
    pub t_max: usize,
    pub bandwidth: Bandwidth,
    pub ascent: AscentConfig,
    pub seed: u64,
}

impl HerdingConfig {
    pub fn continuous(t_max: usize, bandwidth: Bandwidth, seed: u64) -> Self {
        HerdingConfig {
            mode: HerdingMode::Continuous,
            t_max,
            bandwidth,
            ascent: AscentConfig::default(),
            seed,
        }
    }

    pub fn discrete(t_max: usize, bandwidth: Bandwidth, seed: u64) -> Self {
        HerdingConfig {
            mode: HerdingMode::Discrete,
            ..HerdingConfig::continuous(t_max, bandwidth, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(s) = self.bandwidth {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::config("sigma", format!("must be positive, got {s}")));
            }
        }
        self.ascent.validate()
    }
}

#[derive(Debug, Clone)]
struct CandidateCache {
    points: Points,
    /// Mean map at each candidate.
    mean_map: Vec<f64>,
    /// Σ_t k(c_i, x_t) over the current history.
    kernel_sums: Vec<f64>,
}

/// Sample history plus the running sums behind the objective and the error.
#[derive(Debug, Clone)]
pub struct HerdingState {
    kernel: GaussianKernel,
    mean_map: MeanMap,
    mixture: Option<GaussianMixture>,
    candidates: Option<CandidateCache>,
    samples: Points,
    indices: Vec<usize>,
    /// Σ_t meanmap(x_t)
    mean_map_sum: f64,
    /// Σ_{t,t'} k(x_t, x_t')
    gram_sum: f64,
    /// E_{x,x'~p}[k(x, x')]
    self_similarity: f64,
    errors: Vec<f64>,
    objective_values: Vec<f64>,
}

impl HerdingState {
    /// Fresh state for `target`; mixtures herd continuously, empirical sets discretely.
    pub fn new(kernel: GaussianKernel, target: &Target) -> Result<Self> {
        let mean_map = MeanMap::for_target(&kernel, target)?;
        let (mixture, candidates, self_similarity) = match (target, &mean_map) {
            (Target::Mixture(gm), _) => (Some(gm.clone()), None, double_expectation_gm(&kernel, gm)?),
            (Target::Empirical(e), MeanMap::Empirical(m)) => {
                let values = m.values_at_support();
                let constant = values.iter().sum::<f64>() / values.len() as f64;
                let cache = CandidateCache {
                    points: e.points().clone(),
                    kernel_sums: vec![0.0; values.len()],
                    mean_map: values,
                };
                (None, Some(cache), constant)
            }
            (Target::Empirical(_), MeanMap::Analytic(_)) => unreachable!(),
        };
        Ok(HerdingState {
            kernel,
            mean_map,
            mixture,
            candidates,
            samples: Points::empty(target.dim()),
            indices: Vec::new(),
            mean_map_sum: 0.0,
            gram_sum: 0.0,
            self_similarity,
            errors: Vec::new(),
            objective_values: Vec::new(),
        })
    }

    pub fn mode(&self) -> HerdingMode {
        if self.candidates.is_some() {
            HerdingMode::Discrete
        } else {
            HerdingMode::Continuous
        }
    }

    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }

    pub fn mean_map(&self) -> &MeanMap {
        &self.mean_map
    }

    pub fn dim(&self) -> usize {
        self.samples.dim()
    }

    /// Number of samples T.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &Points {
        &self.samples
    }

    /// Candidate indices chosen so far (discrete mode only).
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// E_1..E_T.
    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    /// Objective value J attained by each accepted sample.
    pub fn objective_values(&self) -> &[f64] {
        &self.objective_values
    }

    pub fn self_similarity(&self) -> f64 {
        self.self_similarity
    }

    pub fn mean_map_sum(&self) -> f64 {
        self.mean_map_sum
    }

    pub fn gram_sum(&self) -> f64 {
        self.gram_sum
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            })
        }
    }

    fn repulsion_sum(&self, x: &[f64]) -> f64 {
        self.samples.rows().map(|s| self.kernel.eval(x, s)).sum()
    }

    fn repulsion_weight(&self) -> f64 {
        1.0 / (self.len() + 1) as f64
    }

    /// J_T(x).
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.mean_map.eval(x) - self.repulsion_weight() * self.repulsion_sum(x))
    }

    fn analytic(&self) -> Result<&GmMeanMap> {
        match &self.mean_map {
            MeanMap::Analytic(m) => Ok(m),
            MeanMap::Empirical(_) => Err(Error::config(
                "mode",
                "continuous herding needs a Gaussian-mixture target",
            )),
        }
    }

    /// J_T(x) and ∇J_T(x) in one pass over the history.
    fn objective_with_gradient(&self, map: &GmMeanMap, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let attraction = map.eval_with_gradient(x, grad);
        let w = self.repulsion_weight();
        let mut repulsion = 0.0;
        for s in self.samples.rows() {
            // same value as kernel.eval, reused for the gradient
            let k = self.kernel.eval(x, s);
            repulsion += k;
            let c = w * k / (self.kernel.sigma() * self.kernel.sigma());
            for ((g, a), b) in grad.iter_mut().zip(x).zip(s) {
                *g += c * (a - b);
            }
        }
        attraction - w * repulsion
    }

    /// ∇J_T(x); requires the analytic mean map of a mixture target.
    pub fn objective_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let map = self.analytic()?;
        let mut grad = vec![0.0; x.len()];
        self.objective_with_gradient(map, x, &mut grad);
        Ok(grad)
    }

    /// E_T² from the running sums, clamped at zero.
    pub fn herding_error_squared(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyHistory);
        }
        let t = self.len() as f64;
        let e2 = self.self_similarity - 2.0 * self.mean_map_sum / t + self.gram_sum / (t * t);
        Ok(e2.max(0.0))
    }

    /// E_T, the RKHS distance between p and the sample measure.
    pub fn herding_error(&self) -> Result<f64> {
        self.herding_error_squared().map(f64::sqrt)
    }

    fn record(&mut self, objective: f64) {
        self.objective_values.push(objective);
        let e = self.herding_error().expect("non-empty after push");
        self.errors.push(e);
    }

    /// Appends an arbitrary point, updating every cache in O(T).
    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        self.check_dim(x)?;
        if let Some(cache) = &self.candidates {
            // keep candidate sums exact even for off-grid points
            let kernel = self.kernel;
            let sums: Vec<f64> = (0..cache.points.len())
                .into_par_iter()
                .map(|i| cache.kernel_sums[i] + kernel.eval(cache.points.row(i), x))
                .collect();
            self.candidates.as_mut().expect("checked").kernel_sums = sums;
        }
        let objective = self.objective(x)?;
        let cross = self.repulsion_sum(x);
        self.mean_map_sum += self.mean_map.eval(x);
        self.gram_sum += 2.0 * cross + self.kernel.eval(x, x);
        self.samples.push(x)?;
        self.record(objective);
        Ok(())
    }

    /// One continuous step: seed, ascend, append. Returns the new sample.
    pub fn herd_step_continuous(&mut self, rng: &mut HerdRng, cfg: &AscentConfig) -> Result<Vec<f64>> {
        let map = self.analytic()?.clone();
        let gm = self.mixture.as_ref().expect("analytic map implies mixture");
        let mut seeds = gm.sample(rng, cfg.n_seeds);
        if let Some(last) = self.samples.rows().last() {
            seeds.push(last)?;
        }
        if seeds.is_empty() {
            // no fresh draws and no history: start from the heaviest component
            let j = argmax(gm.weights());
            seeds.push(gm.means().row(j))?;
        }
        let scores: Vec<f64> = seeds.rows().map(|s| self.objective(s)).collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut x = Vec::new();
        let mut value = f64::NEG_INFINITY;
        for &i in order.iter().take(cfg.n_starts) {
            let (y, v) = self.ascend(&map, seeds.row(i).to_vec(), cfg)?;
            if v > value {
                x = y;
                value = v;
            }
        }

        let cross = self.repulsion_sum(&x);
        self.mean_map_sum += map.eval(&x);
        self.gram_sum += 2.0 * cross + 1.0;
        self.samples.push(&x)?;
        self.record(value);
        Ok(x)
    }

    fn ascend(&self, map: &GmMeanMap, mut x: Vec<f64>, cfg: &AscentConfig) -> Result<(Vec<f64>, f64)> {
        let sigma = self.kernel.sigma();
        let base_step = cfg.initial_step * sigma * sigma;
        let tol = cfg.gradient_tolerance * sigma;
        let d = x.len();
        let mut grad = vec![0.0; d];
        let mut trial_grad = vec![0.0; d];
        let mut value = self.objective_with_gradient(map, &x, &mut grad);
        let mut trial = vec![0.0; d];
        let mut step = base_step;
        for _ in 0..cfg.max_iterations {
            let g2 = numerics::dot(&grad, &grad);
            if g2.sqrt() < tol {
                break;
            }
            let mut accepted = false;
            let mut last = value;
            for _ in 0..=cfg.max_halvings {
                for i in 0..d {
                    trial[i] = x[i] + step * grad[i];
                }
                let v = self.objective_with_gradient(map, &trial, &mut trial_grad);
                last = v;
                if v >= value + ARMIJO * step * g2 {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                let roundoff = 1e-12 * value.abs().max(1.0);
                if last < value - roundoff {
                    return Err(Error::AscentDiverged {
                        step: self.len() + 1,
                        from: value,
                        to: last,
                    });
                }
                // stalled at working precision
                break;
            }
            std::mem::swap(&mut x, &mut trial);
            std::mem::swap(&mut grad, &mut trial_grad);
            value = last;
            step = (step * cfg.step_growth).clamp(base_step, MAX_STEP_GROWTH * base_step);
        }
        Ok((x, value))
    }

    /// One discrete step over the cached candidates. Returns the chosen index.
    ///
    /// Ties go to the lowest index; a candidate may be chosen repeatedly.
    pub fn herd_step_discrete(&mut self) -> Result<usize> {
        let w = self.repulsion_weight();
        let cache = self.candidates.as_ref().ok_or_else(|| {
            Error::config("mode", "discrete herding needs an empirical target")
        })?;
        if cache.points.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let scores: Vec<f64> = cache
            .mean_map
            .iter()
            .zip(&cache.kernel_sums)
            .map(|(m, s)| m - w * s)
            .collect();
        let best = argmax(&scores);
        self.push_candidate(best)?;
        Ok(best)
    }

    /// Appends candidate `index` as the next sample.
    pub fn push_candidate(&mut self, index: usize) -> Result<()> {
        let w = self.repulsion_weight();
        let kernel = self.kernel;
        let cache = self.candidates.as_mut().ok_or_else(|| {
            Error::config("mode", "discrete herding needs an empirical target")
        })?;
        if index >= cache.points.len() {
            return Err(Error::DimensionMismatch {
                expected: cache.points.len(),
                got: index,
            });
        }
        let objective = cache.mean_map[index] - w * cache.kernel_sums[index];
        let cross = cache.kernel_sums[index];
        let chosen = cache.points.row(index).to_vec();
        let points = &cache.points;
        cache
            .kernel_sums
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, s)| *s += kernel.eval(points.row(i), &chosen));
        self.mean_map_sum += cache.mean_map[index];
        self.gram_sum += 2.0 * cross + 1.0;
        self.samples.push(&chosen)?;
        self.indices.push(index);
        self.record(objective);
        Ok(())
    }

    /// Current Σ_t k(c_i, x_t) per candidate (discrete mode).
    pub fn candidate_kernel_sums(&self) -> Option<&[f64]> {
        self.candidates.as_ref().map(|c| c.kernel_sums.as_slice())
    }

    /// Mean map at each candidate (discrete mode).
    pub fn candidate_mean_map(&self) -> Option<&[f64]> {
        self.candidates.as_ref().map(|c| c.mean_map.as_slice())
    }
}

/// Index of the first maximum.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// What produced a [`SuperSampleSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub mode: HerdingMode,
    pub sigma: f64,
    pub seed: u64,
    pub t_max: usize,
    pub bandwidth: Bandwidth,
    pub ascent: AscentConfig,
}

/// Ordered herding output with the error after each step.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperSampleSet {
    pub samples: Points,
    /// Candidate indices for discrete runs.
    pub indices: Option<Vec<usize>>,
    pub errors: Vec<f64>,
    pub objective_values: Vec<f64>,
    pub config: RunSnapshot,
}

impl SuperSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn from_state(state: &HerdingState, config: RunSnapshot) -> Self {
        SuperSampleSet {
            samples: state.samples().clone(),
            indices: match state.mode() {
                HerdingMode::Discrete => Some(state.indices().to_vec()),
                HerdingMode::Continuous => None,
            },
            errors: state.errors().to_vec(),
            objective_values: state.objective_values().to_vec(),
            config,
        }
    }
}

/// Runs `config.t_max` herding steps with a given kernel.
pub fn run_herding_with_kernel(
    kernel: GaussianKernel,
    config: &HerdingConfig,
    target: &Target,
    rng: &mut HerdRng,
) -> Result<HerdingState> {
    config.validate()?;
    match (config.mode, target) {
        (HerdingMode::Continuous, Target::Mixture(_)) | (HerdingMode::Discrete, Target::Empirical(_)) => {}
        (mode, _) => {
            return Err(Error::config(
                "mode",
                format!("{mode} herding does not match the target type"),
            ))
        }
    }
    let mut state = HerdingState::new(kernel, target)?;
    for _ in 0..config.t_max {
        match config.mode {
            HerdingMode::Continuous => {
                state.herd_step_continuous(rng, &config.ascent)?;
            }
            HerdingMode::Discrete => {
                state.herd_step_discrete()?;
            }
        }
    }
    Ok(state)
}

/// Resolves the bandwidth and runs herding, all randomness derived from `config.seed`.
pub fn run_herding(config: &HerdingConfig, target: &Target) -> Result<SuperSampleSet> {
    config.validate()?;
    let root = SeedStream::new(config.seed);
    let kernel = config
        .bandwidth
        .resolve(target, &mut root.derive("bandwidth").rng())?;
    let state = run_herding_with_kernel(kernel, config, target, &mut root.derive("seeds").rng())?;
    let snapshot = RunSnapshot {
        mode: config.mode,
        sigma: kernel.sigma(),
        seed: config.seed,
        t_max: config.t_max,
        bandwidth: config.bandwidth,
        ascent: config.ascent,
    };
    Ok(SuperSampleSet::from_state(&state, snapshot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SymMatrix;
    use crate::targets::{random_mixture, EmpiricalDistribution, RandomMixtureSpec};

    fn kernel(s: f64) -> GaussianKernel {
        GaussianKernel::new(s).unwrap()
    }

    fn point_mass(z: &[f64]) -> Target {
        Target::Mixture(GaussianMixture::single(z, SymMatrix::zeros(z.len())).unwrap())
    }

    #[test]
    fn objective_without_history_is_mean_map() {
        let mut rng = SeedStream::new(1).rng();
        let gm = random_mixture(&mut rng, &RandomMixtureSpec::new(2, 3)).unwrap();
        let k = kernel(1.5);
        let state = HerdingState::new(k, &Target::Mixture(gm.clone())).unwrap();
        let x = [3.0, 4.0];
        let expected = crate::kernels::mean_map_gm(&k, &gm, &x).unwrap();
        assert_eq!(state.objective(&x).unwrap(), expected);
    }

    #[test]
    fn objective_point_mass_with_its_own_history() {
        let z = [1.0, -2.0];
        let mut state = HerdingState::new(kernel(0.5), &point_mass(&z)).unwrap();
        state.push(&z).unwrap();
        assert!((state.objective(&z).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(state.herding_error().unwrap(), 0.0);
    }

    #[test]
    fn objective_rejects_wrong_dimension() {
        let state = HerdingState::new(kernel(1.0), &point_mass(&[0.0, 0.0])).unwrap();
        assert!(matches!(
            state.objective(&[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(state.herding_error(), Err(Error::EmptyHistory)));
    }

    #[test]
    fn gradient_vanishes_at_symmetric_mode() {
        let mu = [2.0, 3.0];
        let target = Target::Mixture(GaussianMixture::single(&mu, SymMatrix::identity(2)).unwrap());
        let state = HerdingState::new(kernel(1.0), &target).unwrap();
        let g = state.objective_gradient(&mu).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn gradient_points_toward_point_mass() {
        let sigma = 0.7;
        let state = HerdingState::new(kernel(sigma), &point_mass(&[0.0])).unwrap();
        let g = state.objective_gradient(&[sigma]).unwrap();
        let expected = -(1.0 / sigma) * (-0.5f64).exp();
        assert!(g[0] < 0.0);
        assert!((g[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn continuous_step_finds_point_mass() {
        let z = [1.5, -0.5];
        let mut state = HerdingState::new(kernel(1.0), &point_mass(&z)).unwrap();
        let x = state
            .herd_step_continuous(&mut SeedStream::new(3).rng(), &AscentConfig::default())
            .unwrap();
        assert!(numerics::squared_distance(&x, &z).sqrt() < 1e-8);
    }

    #[test]
    fn continuous_step_without_seeds_starts_at_heaviest_mean() {
        let z = [0.25];
        let mut state = HerdingState::new(kernel(1.0), &point_mass(&z)).unwrap();
        let cfg = AscentConfig {
            n_seeds: 0,
            ..AscentConfig::default()
        };
        let x = state.herd_step_continuous(&mut SeedStream::new(0).rng(), &cfg).unwrap();
        assert_eq!(x, vec![0.25]);
    }

    #[test]
    fn discrete_single_candidate_always_chosen() {
        let target = Target::Empirical(EmpiricalDistribution::from_rows(&[[4.0, 2.0]]).unwrap());
        let mut state = HerdingState::new(kernel(1.0), &target).unwrap();
        for _ in 0..5 {
            assert_eq!(state.herd_step_discrete().unwrap(), 0);
        }
        assert!(state.herding_error().unwrap() < 1e-12);
    }

    #[test]
    fn discrete_tie_goes_to_lowest_index() {
        let target = Target::Empirical(EmpiricalDistribution::from_rows(&[[-1.0], [1.0]]).unwrap());
        let mut state = HerdingState::new(kernel(1.0), &target).unwrap();
        let mm = state.candidate_mean_map().unwrap();
        assert_eq!(mm[0], mm[1]);
        assert_eq!(state.herd_step_discrete().unwrap(), 0);
        assert_eq!(state.herd_step_discrete().unwrap(), 1);
    }

    #[test]
    fn full_pass_over_empirical_target_has_zero_error() {
        let mut rng = SeedStream::new(5).rng();
        let gm = random_mixture(&mut rng, &RandomMixtureSpec::new(3, 2)).unwrap();
        let dist = EmpiricalDistribution::new(gm.sample(&mut rng, 30)).unwrap();
        let mut state = HerdingState::new(kernel(2.0), &Target::Empirical(dist)).unwrap();
        for i in 0..30 {
            state.push_candidate(i).unwrap();
        }
        assert!(state.herding_error_squared().unwrap() < 1e-12);
    }

    #[test]
    fn mode_mismatch_is_a_config_error() {
        let cfg = HerdingConfig::discrete(3, Bandwidth::Fixed(1.0), 0);
        assert!(matches!(
            run_herding(&cfg, &point_mass(&[0.0])),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn zero_steps_give_empty_set() {
        let cfg = HerdingConfig::continuous(0, Bandwidth::Fixed(1.0), 0);
        let out = run_herding(&cfg, &point_mass(&[0.0])).unwrap();
        assert!(out.is_empty());
        assert!(out.errors.is_empty());
    }

    #[test]
    fn runs_are_deterministic() {
        let mut rng = SeedStream::new(77).rng();
        let gm = random_mixture(&mut rng, &RandomMixtureSpec::new(2, 4)).unwrap();
        let cfg = HerdingConfig::continuous(15, Bandwidth::MedianHeuristic, 9);
        let a = run_herding(&cfg, &Target::Mixture(gm.clone())).unwrap();
        let b = run_herding(&cfg, &Target::Mixture(gm)).unwrap();
        let bits = |s: &SuperSampleSet| s.samples.as_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.errors, b.errors);
    }
}
