//! Flag definitions. Every flag can also come from a JSON config file whose
//! keys mirror the long flag names; flags win over the file, the file wins
//! over built-in defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use kherd::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const DEFAULT_OUT: &str = "kherd-out";

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))
}

macro_rules! layered {
    ($name:ident { $($field:ident),* $(,)? }) => {
        impl $name {
            /// Fills unset flags from the config file.
            pub fn layered(mut self) -> Result<Self> {
                let mut file: $name = read_config(self.config.as_deref())?;
                $( if self.$field.is_none() { self.$field = file.$field.take(); } )*
                Ok(self)
            }

            pub fn out_dir(&self) -> PathBuf {
                if let Some(out) = &self.out {
                    return out.clone();
                }
                read_config::<$name>(self.config.as_deref())
                    .ok()
                    .and_then(|f| f.out)
                    .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
            }
        }
    };
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct GmArgs {
    /// JSON config file; keys mirror the long flag names.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Mixture JSON (weights, means, covariances, dim); random mixture if absent.
    #[arg(long)]
    pub mixture: Option<PathBuf>,
    /// Dimension of the random mixture.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Components of the random mixture.
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub box_low: Option<f64>,
    #[arg(long)]
    pub box_high: Option<f64>,
    #[arg(long)]
    pub cov_scale: Option<f64>,
    /// Kernel bandwidth; median heuristic if absent.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Number of super-samples.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t: Option<usize>,
    /// Fresh target draws used as ascent seeds per step.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Best-scoring seeds ascended per step.
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}
layered!(GmArgs { out, mixture, dim, components, box_low, box_high, cov_scale, sigma, t, seeds, starts, seed });

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EmpiricalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of points, one per row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}
layered!(EmpiricalArgs { out, input, sigma, t, seed });

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CompareArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `gm5d`: 5-D mixture with 100 components, T up to 2000.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub mixture: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub components: Option<usize>,
    /// Herd on this many iid draws instead of the mixture itself.
    #[arg(long)]
    pub empirical: Option<usize>,
    /// Comma-separated: moment1, moment2, moment3, sin_norm.
    #[arg(long, value_delimiter = ',')]
    pub functions: Option<Vec<String>>,
    /// Comma-separated sample sizes; overrides --t-max/--grid-points.
    #[arg(long, value_delimiter = ',')]
    pub t_grid: Option<Vec<usize>>,
    #[arg(long)]
    pub t_max: Option<usize>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub iid_repeats: Option<usize>,
    /// Monte Carlo draws for the sin‖x‖ reference.
    #[arg(long)]
    pub mc_draws: Option<usize>,
    /// Smallest T used when fitting slopes.
    #[arg(long)]
    pub t_min: Option<usize>,
    /// Fresh target draws used as ascent seeds per step.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Best-scoring seeds ascended per step.
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}
layered!(CompareArgs {
    out, preset, mixture, dim, components, empirical, functions, t_grid, t_max, grid_points,
    iid_repeats, mc_draws, t_min, seeds, starts, sigma, seed,
});

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PosteriorArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV dataset, last column a 0/1 label.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Use the bundled synthetic logistic dataset.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub synthetic: Option<bool>,
    /// Synthetic feature dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Synthetic test rows.
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub prior_var: Option<f64>,
    /// Random-walk scale; tuned on pilot chains if absent.
    #[arg(long)]
    pub proposal_scale: Option<f64>,
    /// Thinned samples kept.
    #[arg(long)]
    pub keep: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub pilot: Option<usize>,
    /// Kernel bandwidth on the whitened chain.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Use the median heuristic instead of --sigma.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub median: Option<bool>,
    /// Drop the intercept column.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_bias: Option<bool>,
    #[arg(long, value_delimiter = ',')]
    pub t_grid: Option<Vec<usize>>,
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}
layered!(PosteriorArgs {
    out, dataset, synthetic, dim, n_train, n_test, prior_var, proposal_scale, keep, thin,
    burn_in, pilot, sigma, median, no_bias, t_grid, bootstrap, seed,
});
