//! Metrics for judging sample sets against their target.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::herding::{run_herding, HerdingConfig, HerdingMode, HerdingState};
use crate::kernels::{GaussianKernel, Kernel};
use crate::numerics::{self, HerdRng, Points, SeedStream};
use crate::targets::{sample_raw_moment, EmpiricalDistribution, GaussianMixture, Target};

/// Minimum number of trace points a rate fit accepts.
pub const MIN_FIT_POINTS: usize = 10;
/// Slack on the Koksma–Hlawka comparison.
pub const KOKSMA_HLAWKA_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Herding,
    Iid,
    Subsample,
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Estimator::Herding => "herding",
            Estimator::Iid => "iid",
            Estimator::Subsample => "subsample",
        })
    }
}

/// Error of one estimator as a function of the number of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTrace {
    pub estimator: Estimator,
    pub function: String,
    /// What the error is measured against, e.g. `"p"` or `"empirical"`.
    pub target: String,
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub errors: Vec<f64>,
    /// Spread across repeats when `errors` is a mean.
    pub std: Option<Vec<f64>>,
}

impl ErrorTrace {
    pub fn new(
        estimator: Estimator,
        function: impl Into<String>,
        target: impl Into<String>,
        seed: u64,
    ) -> Self {
        ErrorTrace {
            estimator,
            function: function.into(),
            target: target.into(),
            seed,
            sizes: Vec::new(),
            errors: Vec::new(),
            std: None,
        }
    }

    pub fn push(&mut self, size: usize, error: f64) {
        self.sizes.push(size);
        self.errors.push(error);
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Error at sample size `size`, if recorded.
    pub fn at(&self, size: usize) -> Option<f64> {
        self.sizes.iter().position(|&t| t == size).map(|i| self.errors[i])
    }

    /// Pointwise mean and standard deviation of traces sharing one grid.
    pub fn mean_of(traces: &[ErrorTrace]) -> Result<ErrorTrace> {
        let first = traces.first().ok_or(Error::EmptySet)?;
        let n = traces.len() as f64;
        let mut out = ErrorTrace {
            errors: Vec::with_capacity(first.len()),
            std: Some(Vec::with_capacity(first.len())),
            ..first.clone()
        };
        for i in 0..first.len() {
            let vals: Vec<f64> = traces.iter().map(|t| t.errors[i]).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            out.errors.push(mean);
            out.std.as_mut().expect("set above").push(var.sqrt());
        }
        Ok(out)
    }
}

/// f(x) = Σ_i α_i k(x, z_i), an element of the kernel's RKHS.
#[derive(Debug, Clone, PartialEq)]
pub struct RkhsFunction {
    pub centers: Points,
    pub coefficients: Vec<f64>,
    pub kernel: GaussianKernel,
}

impl RkhsFunction {
    pub fn new(centers: Points, coefficients: Vec<f64>, kernel: GaussianKernel) -> Result<Self> {
        if centers.len() != coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: centers.len(),
                got: coefficients.len(),
            });
        }
        Ok(RkhsFunction {
            centers,
            coefficients,
            kernel,
        })
    }

    /// Random centers drawn from `target` with standard-normal coefficients.
    pub fn random(rng: &mut HerdRng, target: &Target, kernel: GaussianKernel, n_centers: usize) -> Self {
        let centers = target.sample(rng, n_centers);
        let coefficients = (0..n_centers)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        RkhsFunction {
            centers,
            coefficients,
            kernel,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.centers
            .rows()
            .zip(&self.coefficients)
            .map(|(z, a)| a * self.kernel.eval(x, z))
            .sum()
    }

    /// ‖f‖²_H = Σ_{i,j} α_i α_j k(z_i, z_j).
    pub fn norm_squared(&self) -> f64 {
        let mut total = 0.0;
        for (zi, ai) in self.centers.rows().zip(&self.coefficients) {
            for (zj, aj) in self.centers.rows().zip(&self.coefficients) {
                total += ai * aj * self.kernel.eval(zi, zj);
            }
        }
        total
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().max(0.0).sqrt()
    }
}

/// √((1/d) Σ_i (a_i − b_i)²).
pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let d = a.len() as f64;
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / d).sqrt()
}

/// RMSE across dimensions between the samples' and the mixture's raw moments.
pub fn moment_rmse(samples: &Points, gm: &GaussianMixture, order: u32) -> Result<f64> {
    let truth = gm.raw_moment(order)?;
    let est = sample_raw_moment(samples, order)?;
    Ok(rmse(&est, &truth))
}

/// Reference value of E_p[f].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub value: f64,
    /// Monte Carlo standard error; `None` when exact.
    pub std_error: Option<f64>,
    pub draws: Option<usize>,
}

impl GroundTruth {
    pub fn exact(value: f64) -> Self {
        GroundTruth {
            value,
            std_error: None,
            draws: None,
        }
    }
}

/// Draws per parallel chunk of a Monte Carlo estimate.
const MC_CHUNK: usize = 100_000;

/// Monte Carlo estimate of E_gm[f] with its standard error.
///
/// Work is split into fixed chunks with their own derived seeds, so the result
/// does not depend on the thread count.
pub fn mc_ground_truth<F>(gm: &GaussianMixture, f: F, draws: usize, seed: SeedStream) -> GroundTruth
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let chunks = draws.div_ceil(MC_CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = MC_CHUNK.min(draws - c * MC_CHUNK);
            let mut rng = seed.derive_index("mc", c as u64).rng();
            let pts = gm.sample(&mut rng, n);
            pts.rows().fold((0.0, 0.0), |(s, s2), x| {
                let v = f(x);
                (s + v, s2 + v * v)
            })
        })
        .collect();
    let (s, s2) = partial
        .iter()
        .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    let n = draws as f64;
    let mean = s / n;
    let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
    GroundTruth {
        value: mean,
        std_error: Some((var / n).sqrt()),
        draws: Some(draws),
    }
}

/// |mean of f over samples − ground truth|.
pub fn expectation_error<F>(samples: &Points, f: F, truth: &GroundTruth) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mean = samples.rows().map(f).sum::<f64>() / samples.len() as f64;
    Ok((mean - truth.value).abs())
}

/// sin ‖x‖.
pub fn sin_norm(x: &[f64]) -> f64 {
    numerics::norm(x).sin()
}

/// The functions whose expectations the comparisons track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    /// Per-dimension raw moment of order 1, 2 or 3, scored by RMSE.
    Moment(u32),
    SinNorm,
}

impl TestFunction {
    pub fn name(&self) -> String {
        match self {
            TestFunction::Moment(m) => format!("moment{m}"),
            TestFunction::SinNorm => "sin_norm".to_string(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "moment1" | "m1" => Ok(TestFunction::Moment(1)),
            "moment2" | "m2" => Ok(TestFunction::Moment(2)),
            "moment3" | "m3" => Ok(TestFunction::Moment(3)),
            "sin_norm" | "sin" => Ok(TestFunction::SinNorm),
            other => Err(Error::config("functions", format!("unknown function {other:?}"))),
        }
    }

    pub fn all() -> Vec<TestFunction> {
        vec![
            TestFunction::Moment(1),
            TestFunction::Moment(2),
            TestFunction::Moment(3),
            TestFunction::SinNorm,
        ]
    }
}

/// A test function's reference value under some distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Moments(Vec<f64>),
    Scalar(GroundTruth),
}

impl Reference {
    /// Reference under the mixture; `sin_norm` uses `mc_draws` Monte Carlo draws.
    pub fn for_mixture(f: TestFunction, gm: &GaussianMixture, mc_draws: usize, seed: SeedStream) -> Result<Self> {
        Ok(match f {
            TestFunction::Moment(m) => Reference::Moments(gm.raw_moment(m)?),
            TestFunction::SinNorm => Reference::Scalar(mc_ground_truth(gm, sin_norm, mc_draws, seed)),
        })
    }

    /// Exact reference under an empirical distribution.
    pub fn for_points(f: TestFunction, points: &Points) -> Result<Self> {
        Ok(match f {
            TestFunction::Moment(m) => Reference::Moments(sample_raw_moment(points, m)?),
            TestFunction::SinNorm => Reference::Scalar(GroundTruth::exact(
                points.rows().map(sin_norm).sum::<f64>() / points.len() as f64,
            )),
        })
    }

    /// Error of `samples` for function `f` against this reference.
    pub fn error(&self, f: TestFunction, samples: &Points) -> Result<f64> {
        match (f, self) {
            (TestFunction::Moment(m), Reference::Moments(truth)) => {
                Ok(rmse(&sample_raw_moment(samples, m)?, truth))
            }
            (TestFunction::SinNorm, Reference::Scalar(truth)) => expectation_error(samples, sin_norm, truth),
            _ => Err(Error::config("functions", "reference does not match function")),
        }
    }
}

/// Least-squares line y ≈ slope·x + intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::config("fit", "need at least two paired points"));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::config("fit", "abscissae are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (slope * a + intercept)).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LinearFit {
        slope,
        intercept,
        r2,
        points: n,
    })
}

/// Smallest non-increasing sequence lying on or above `errors`:
/// `env[i] = max_{j ≥ i} errors[j]`.
pub fn upper_envelope(errors: &[f64]) -> Vec<f64> {
    let mut env = errors.to_vec();
    for i in (0..env.len().saturating_sub(1)).rev() {
        env[i] = env[i].max(env[i + 1]);
    }
    env
}

/// Log-log slope of the upper envelope of a trace over sizes ≥ `t_min`.
pub fn fit_rate(trace: &ErrorTrace, t_min: usize) -> Result<LinearFit> {
    let env = upper_envelope(&trace.errors);
    let (lx, ly): (Vec<f64>, Vec<f64>) = trace
        .sizes
        .iter()
        .zip(&env)
        .filter(|(&t, &e)| t >= t_min && t > 0 && e > 0.0)
        .map(|(&t, &e)| ((t as f64).ln(), e.ln()))
        .unzip();
    let eligible = trace.sizes.iter().filter(|&&t| t >= t_min).count();
    if eligible < MIN_FIT_POINTS {
        return Err(Error::config(
            "trace",
            format!("rate fit needs {MIN_FIT_POINTS} points with T >= {t_min}, got {eligible}"),
        ));
    }
    if lx.len() < 2 {
        return Err(Error::DegenerateTrace);
    }
    linear_fit(&lx, &ly)
}

/// Outcome of checking |E_p f − E_p̂ f| ≤ ‖f‖_H · E_T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KoksmaHlawka {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn koksma_hlawka_check(state: &HerdingState, f: &RkhsFunction) -> Result<KoksmaHlawka> {
    if f.kernel != *state.kernel() {
        return Err(Error::KernelMismatch {
            function: f.kernel.sigma(),
            state: state.kernel().sigma(),
        });
    }
    let error = state.herding_error()?;
    let exact: f64 = f
        .centers
        .rows()
        .zip(&f.coefficients)
        .map(|(z, a)| a * state.mean_map().eval(z))
        .sum();
    let samples = state.samples();
    let empirical = samples.rows().map(|x| f.eval(x)).sum::<f64>() / samples.len() as f64;
    let lhs = (exact - empirical).abs();
    let rhs = f.norm() * error;
    Ok(KoksmaHlawka {
        lhs,
        rhs,
        holds: lhs <= rhs + KOKSMA_HLAWKA_SLACK,
    })
}

/// `n` roughly log-spaced distinct sizes from `lo` to `hi` inclusive.
pub fn log_grid(lo: usize, hi: usize, n: usize) -> Vec<usize> {
    let lo = lo.max(1);
    if hi <= lo || n < 2 {
        return vec![hi.max(lo)];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp().round() as usize)
        .collect();
    out.dedup();
    out
}

/// What herding runs against in a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonMode {
    /// Continuous herding on the mixture itself.
    Mixture,
    /// Discrete herding on `points` iid draws from the mixture.
    Empirical { points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSpec {
    pub mode: ComparisonMode,
    pub functions: Vec<TestFunction>,
    pub sizes: Vec<usize>,
    pub iid_repeats: usize,
    pub herding: HerdingConfig,
    /// Monte Carlo draws for references without closed form.
    pub mc_draws: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Herding traces against p (and against the empirical set in empirical mode).
    pub herding: Vec<ErrorTrace>,
    /// Mean ± std of the iid traces against p.
    pub iid: Vec<ErrorTrace>,
    /// Error of the empirical set itself against p, per function.
    pub empirical_baseline: Vec<(String, f64)>,
    pub sigma: f64,
}

impl Comparison {
    pub fn traces(&self) -> impl Iterator<Item = &ErrorTrace> {
        self.herding.iter().chain(&self.iid)
    }

    pub fn find(&self, estimator: Estimator, function: &str, target: &str) -> Option<&ErrorTrace> {
        self.traces()
            .find(|t| t.estimator == estimator && t.function == function && t.target == target)
    }
}

fn trace_for(
    samples: &Points,
    sizes: &[usize],
    f: TestFunction,
    reference: &Reference,
    mut trace: ErrorTrace,
) -> Result<ErrorTrace> {
    for &t in sizes {
        trace.push(t, reference.error(f, &samples.prefix(t))?);
    }
    Ok(trace)
}

/// Herding versus iid sampling on a mixture target.
pub fn compare_estimators(truth: &GaussianMixture, spec: &ComparisonSpec) -> Result<Comparison> {
    if spec.sizes.is_empty() || spec.sizes.contains(&0) {
        return Err(Error::config("t_grid", "sizes must be positive and non-empty"));
    }
    if spec.functions.is_empty() {
        return Err(Error::config("functions", "no functions requested"));
    }
    let t_max = *spec.sizes.iter().max().expect("non-empty");
    let root = SeedStream::new(spec.herding.seed);

    let references = spec
        .functions
        .iter()
        .map(|&f| Reference::for_mixture(f, truth, spec.mc_draws, root.derive(&format!("truth-{}", f.name()))))
        .collect::<Result<Vec<_>>>()?;

    let mut herd_cfg = spec.herding.clone();
    herd_cfg.t_max = t_max;
    let mut empirical_baseline = Vec::new();
    let mut local_references = Vec::new();
    let run = match spec.mode {
        ComparisonMode::Mixture => {
            herd_cfg.mode = HerdingMode::Continuous;
            run_herding(&herd_cfg, &Target::Mixture(truth.clone()))?
        }
        ComparisonMode::Empirical { points } => {
            if points == 0 {
                return Err(Error::config("empirical_points", "must be positive"));
            }
            herd_cfg.mode = HerdingMode::Discrete;
            let pts = truth.sample(&mut root.derive("empirical").rng(), points);
            for (&f, r) in spec.functions.iter().zip(&references) {
                empirical_baseline.push((f.name(), r.error(f, &pts)?));
                local_references.push((f, Reference::for_points(f, &pts)?));
            }
            run_herding(&herd_cfg, &Target::Empirical(EmpiricalDistribution::new(pts)?))?
        }
    };

    let mut herding = Vec::new();
    for (f, local) in &local_references {
        let t = ErrorTrace::new(Estimator::Herding, f.name(), "empirical", spec.herding.seed);
        herding.push(trace_for(&run.samples, &spec.sizes, *f, local, t)?);
    }
    for (&f, r) in spec.functions.iter().zip(&references) {
        let t = ErrorTrace::new(Estimator::Herding, f.name(), "p", spec.herding.seed);
        herding.push(trace_for(&run.samples, &spec.sizes, f, r, t)?);
    }

    let repeats: Vec<Points> = (0..spec.iid_repeats)
        .map(|i| truth.sample(&mut root.derive_index("iid", i as u64).rng(), t_max))
        .collect();
    let mut iid = Vec::new();
    if !repeats.is_empty() {
        for (&f, r) in spec.functions.iter().zip(&references) {
            let per_seed = repeats
                .iter()
                .enumerate()
                .map(|(i, pts)| {
                    let t = ErrorTrace::new(Estimator::Iid, f.name(), "p", root.derive_index("iid", i as u64).seed());
                    trace_for(pts, &spec.sizes, f, r, t)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut mean = ErrorTrace::mean_of(&per_seed)?;
            mean.seed = spec.herding.seed;
            iid.push(mean);
        }
    }

    Ok(Comparison {
        herding,
        iid,
        empirical_baseline,
        sigma: run.config.sigma,
    })
}
