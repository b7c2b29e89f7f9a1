use std::path::{Path, PathBuf};

use kherd::evaluation::{compare_estimators, fit_rate, log_grid, ComparisonMode, ComparisonSpec, TestFunction};
use kherd::herding::{run_herding, AscentConfig};
use kherd::io::{self, SampleSidecar, SlopeRecord};
use kherd::posterior::{
    load_dataset, run_posterior_experiment, synthetic_dataset, PosteriorExperiment, SyntheticSpec,
    DEFAULT_COMPRESSION_SIGMA, DEFAULT_N_TRAIN,
};
use kherd::targets::{random_mixture, RandomMixtureSpec};
use kherd::{Bandwidth, EmpiricalDistribution, Error, GaussianMixture, HerdingConfig, Result, SeedStream, Target};
use serde::Serialize;

use crate::args::{CompareArgs, EmpiricalArgs, GmArgs, PosteriorArgs};
use crate::Outcome;

pub type CommandResult = std::result::Result<Outcome, (Outcome, Error)>;

fn finish(outcome: Outcome, r: Result<()>) -> CommandResult {
    match r {
        Ok(()) => Ok(outcome),
        Err(e) => Err((outcome, e)),
    }
}

fn empty_outcome() -> Outcome {
    Outcome { config: serde_json::Value::Null, seed: None, artifacts: Vec::new() }
}

struct Artifacts<'a> {
    dir: &'a Path,
    outcome: &'a mut Outcome,
}

impl Artifacts<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.outcome.artifacts.push(p.clone());
        p
    }
}

fn prepare(out: &Path, outcome: &mut Outcome, config: &impl Serialize, seed: u64) -> Result<()> {
    outcome.config = serde_json::to_value(config)?;
    outcome.seed = Some(seed);
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn bandwidth(sigma: Option<f64>) -> Result<Bandwidth> {
    match sigma {
        Some(s) if !(s > 0.0) || !s.is_finite() => Err(Error::config("sigma", format!("must be positive, got {s}"))),
        Some(s) => Ok(Bandwidth::Fixed(s)),
        None => Ok(Bandwidth::MedianHeuristic),
    }
}

fn existing<'a>(field: &str, path: &'a Path) -> Result<&'a Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::config(field, format!("no such file: {}", path.display())))
    }
}

fn starts(n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::config("starts", "must be at least 1"));
    }
    Ok(n)
}

fn load_or_generate_mixture(
    path: Option<&Path>,
    spec: RandomMixtureSpec,
    seed: u64,
) -> Result<GaussianMixture> {
    if let Some(p) = path {
        let gm = GaussianMixture::from_json(&std::fs::read_to_string(existing("mixture", p)?)?)
            .map_err(|e| Error::config("mixture", e.to_string()))?;
        return Ok(gm);
    }
    if spec.dim == 0 {
        return Err(Error::config("dim", "must be positive"));
    }
    if spec.components == 0 {
        return Err(Error::config("components", "must be positive"));
    }
    if !(spec.box_high > spec.box_low) {
        return Err(Error::config("box-high", "must exceed box-low"));
    }
    if !(spec.cov_scale > 0.0) {
        return Err(Error::config("cov-scale", "must be positive"));
    }
    random_mixture(&mut SeedStream::new(seed).derive("mixture").rng(), &spec)
}

pub fn gm_herd(a: GmArgs) -> CommandResult {
    let mut outcome = empty_outcome();
    let r = gm_herd_inner(a, &mut outcome);
    finish(outcome, r)
}

fn gm_herd_inner(a: GmArgs, outcome: &mut Outcome) -> Result<()> {
    let mut a = a.layered()?;
    let seed = *a.seed.get_or_insert(0);
    let t = *a.t.get_or_insert(100);
    let defaults = AscentConfig::default();
    let n_seeds = *a.seeds.get_or_insert(defaults.n_seeds);
    let n_starts = *a.starts.get_or_insert(defaults.n_starts);
    let mut spec = RandomMixtureSpec::new(*a.dim.get_or_insert(2), *a.components.get_or_insert(5));
    spec.box_low = *a.box_low.get_or_insert(spec.box_low);
    spec.box_high = *a.box_high.get_or_insert(spec.box_high);
    spec.cov_scale = *a.cov_scale.get_or_insert(spec.cov_scale);
    let out = a.out_dir();
    prepare(&out, outcome, &a, seed)?;

    let gm = load_or_generate_mixture(a.mixture.as_deref(), spec, seed)?;
    let mut cfg = HerdingConfig::continuous(t, bandwidth(a.sigma)?, seed);
    cfg.ascent.n_seeds = n_seeds;
    cfg.ascent.n_starts = starts(n_starts)?;
    let mut files = Artifacts { dir: &out, outcome };
    std::fs::write(files.path("mixture.json"), gm.to_json()? + "\n")?;
    let run = run_herding(&cfg, &Target::Mixture(gm))?;
    io::write_samples_csv(&files.path("samples.csv"), &run.samples, None)?;
    io::write_json(&files.path("samples.json"), &SampleSidecar::from_run(&run))?;
    io::write_error_trace_csv(&files.path("errors.csv"), &run.errors)?;
    Ok(())
}

pub fn empirical_herd(a: EmpiricalArgs) -> CommandResult {
    let mut outcome = empty_outcome();
    let r = empirical_herd_inner(a, &mut outcome);
    finish(outcome, r)
}

fn empirical_herd_inner(a: EmpiricalArgs, outcome: &mut Outcome) -> Result<()> {
    let mut a = a.layered()?;
    let seed = *a.seed.get_or_insert(0);
    let t = *a.t.get_or_insert(100);
    let out = a.out_dir();
    prepare(&out, outcome, &a, seed)?;
    let input = a.input.as_deref().ok_or_else(|| Error::config("input", "an input CSV is required"))?;
    let points = io::read_points_csv(existing("input", input)?)?;
    let target = Target::Empirical(EmpiricalDistribution::new(points)?);
    let run = run_herding(&HerdingConfig::discrete(t, bandwidth(a.sigma)?, seed), &target)?;
    let mut files = Artifacts { dir: &out, outcome };
    io::write_samples_csv(&files.path("samples.csv"), &run.samples, run.indices.as_deref())?;
    io::write_json(&files.path("samples.json"), &SampleSidecar::from_run(&run))?;
    io::write_error_trace_csv(&files.path("errors.csv"), &run.errors)?;
    Ok(())
}

pub fn compare(a: CompareArgs) -> CommandResult {
    let mut outcome = empty_outcome();
    let r = compare_inner(a, &mut outcome);
    finish(outcome, r)
}

#[derive(Serialize)]
struct Baseline<'a> {
    function: &'a str,
    error: f64,
}

fn compare_inner(a: CompareArgs, outcome: &mut Outcome) -> Result<()> {
    let mut a = a.layered()?;
    match a.preset.as_deref() {
        None => {}
        Some("gm5d") => {
            a.dim.get_or_insert(5);
            a.components.get_or_insert(100);
            a.t_max.get_or_insert(2000);
        }
        Some(other) => return Err(Error::config("preset", format!("unknown preset {other:?}"))),
    }
    let seed = *a.seed.get_or_insert(0);
    let dim = *a.dim.get_or_insert(5);
    let components = *a.components.get_or_insert(20);
    let t_max = *a.t_max.get_or_insert(2000);
    let grid_points = *a.grid_points.get_or_insert(40);
    let iid_repeats = *a.iid_repeats.get_or_insert(10);
    let mc_draws = *a.mc_draws.get_or_insert(10_000_000);
    let t_min = *a.t_min.get_or_insert(1);
    let ascent = AscentConfig::default();
    let n_seeds = *a.seeds.get_or_insert(ascent.n_seeds);
    let n_starts = *a.starts.get_or_insert(ascent.n_starts);
    let names = a
        .functions
        .get_or_insert_with(|| TestFunction::all().iter().map(TestFunction::name).collect())
        .clone();
    let sizes = a.t_grid.get_or_insert_with(|| log_grid(1, t_max, grid_points)).clone();
    let out = a.out_dir();
    prepare(&out, outcome, &a, seed)?;

    let functions = names.iter().map(|n| TestFunction::parse(n)).collect::<Result<Vec<_>>>()?;
    let gm = load_or_generate_mixture(a.mixture.as_deref(), RandomMixtureSpec::new(dim, components), seed)?;
    let mode = match a.empirical {
        Some(0) => return Err(Error::config("empirical", "must be positive")),
        Some(points) => ComparisonMode::Empirical { points },
        None => ComparisonMode::Mixture,
    };
    let mut herding = match mode {
        ComparisonMode::Mixture => HerdingConfig::continuous(0, bandwidth(a.sigma)?, seed),
        ComparisonMode::Empirical { .. } => HerdingConfig::discrete(0, bandwidth(a.sigma)?, seed),
    };
    herding.ascent.n_seeds = n_seeds;
    herding.ascent.n_starts = starts(n_starts)?;
    let spec = ComparisonSpec { mode, functions, sizes, iid_repeats, herding, mc_draws };
    let cmp = compare_estimators(&gm, &spec)?;

    let mut files = Artifacts { dir: &out, outcome };
    std::fs::write(files.path("mixture.json"), gm.to_json()? + "\n")?;
    io::write_traces_csv(&files.path("traces.csv"), cmp.traces())?;
    let slopes: Vec<SlopeRecord> = cmp
        .traces()
        .map(|t| SlopeRecord::new(t, fit_rate(t, t_min).ok().as_ref()))
        .collect();
    io::write_json(&files.path("slopes.json"), &slopes)?;
    if !cmp.empirical_baseline.is_empty() {
        let rows: Vec<Baseline> = cmp
            .empirical_baseline
            .iter()
            .map(|(f, e)| Baseline { function: f, error: *e })
            .collect();
        io::write_json(&files.path("baseline.json"), &rows)?;
    }
    Ok(())
}

pub fn posterior(a: PosteriorArgs) -> CommandResult {
    let mut outcome = empty_outcome();
    let r = posterior_inner(a, &mut outcome);
    finish(outcome, r)
}

#[derive(Serialize)]
struct PosteriorSummary {
    noise_floor: f64,
    full_accuracy: f64,
    acceptance_rate: f64,
    proposal_scale: f64,
    sigma: f64,
    whitened_features: usize,
    n_train: usize,
    n_test: usize,
    kept: usize,
}

fn posterior_inner(a: PosteriorArgs, outcome: &mut Outcome) -> Result<()> {
    let mut a = a.layered()?;
    let seed = *a.seed.get_or_insert(0);
    let synthetic = *a.synthetic.get_or_insert(false);
    let defaults = PosteriorExperiment::default();
    let mut exp = defaults.clone();
    exp.chain.seed = seed;
    exp.chain.prior_var = *a.prior_var.get_or_insert(defaults.chain.prior_var);
    exp.chain.proposal_scale = a.proposal_scale;
    exp.chain.n_keep = *a.keep.get_or_insert(defaults.chain.n_keep);
    exp.chain.thin = *a.thin.get_or_insert(defaults.chain.thin);
    exp.chain.burn_in = *a.burn_in.get_or_insert(defaults.chain.burn_in);
    exp.chain.pilot = *a.pilot.get_or_insert(defaults.chain.pilot);
    exp.bias = !*a.no_bias.get_or_insert(false);
    exp.bandwidth = if *a.median.get_or_insert(false) {
        Bandwidth::MedianHeuristic
    } else {
        bandwidth(Some(*a.sigma.get_or_insert(DEFAULT_COMPRESSION_SIGMA)))?
    };
    exp.sizes = a.t_grid.get_or_insert_with(|| defaults.sizes.clone()).clone();
    exp.bootstrap_repeats = *a.bootstrap.get_or_insert(defaults.bootstrap_repeats);

    let data = match (&a.dataset, synthetic) {
        (Some(_), true) => return Err(Error::config("dataset", "give either --dataset or --synthetic, not both")),
        (None, false) => return Err(Error::config("dataset", "a dataset path or --synthetic is required")),
        (Some(path), false) => {
            let n_train = *a.n_train.get_or_insert(DEFAULT_N_TRAIN);
            let path = path.clone();
            let out = a.out_dir();
            prepare(&out, outcome, &a, seed)?;
            load_dataset(existing("dataset", &path)?, n_train, seed)?
        }
        (None, true) => {
            let d = SyntheticSpec::default();
            let spec = SyntheticSpec {
                dim: *a.dim.get_or_insert(d.dim),
                n_train: *a.n_train.get_or_insert(d.n_train),
                n_test: *a.n_test.get_or_insert(d.n_test),
            };
            let out = a.out_dir();
            prepare(&out, outcome, &a, seed)?;
            synthetic_dataset(&spec, seed)?
        }
    };
    let out = a.out_dir();
    let report = run_posterior_experiment(&data, &exp)?;

    let mut files = Artifacts { dir: &out, outcome };
    io::write_chain(&files.path("chain.csv"), &files.path("chain.json"), &report.chain)?;
    io::write_samples_csv(&files.path("samples.csv"), &report.herding.samples, report.herding.indices.as_deref())?;
    io::write_posterior_trace_csv(&files.path("posterior_trace.csv"), &report)?;
    let summary = PosteriorSummary {
        noise_floor: report.noise_floor,
        full_accuracy: report.full_accuracy,
        acceptance_rate: report.chain.acceptance_rate,
        proposal_scale: report.chain.proposal_scale,
        sigma: report.herding.config.sigma,
        whitened_features: report.whiten.retained(),
        n_train: data.train.len(),
        n_test: data.test.len(),
        kept: report.chain.len(),
    };
    io::write_json(&files.path("summary.json"), &summary)?;
    Ok(())
}
