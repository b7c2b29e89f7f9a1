//! Kernel herding.
//!
//! Herding produces a deterministic sequence of "super-samples" x₁, x₂, … whose
//! empirical measure approaches a target distribution p in the RKHS of a
//! Gaussian kernel. Each new sample maximizes
//!
//! ```text
//! E_{x'~p}[k(x, x')] - 1/(T+1) · Σ_{t≤T} k(x, x_t)
//! ```
//!
//! i.e. attraction to high-density regions of p minus repulsion from the
//! samples already placed. The squared RKHS distance between p and the sample
//! measure (the maximum mean discrepancy) shrinks as O(1/T²) instead of the
//! O(1/T) seen with iid draws.
//!
//! Two modes are supported:
//!
//! - **continuous**: p is a Gaussian mixture, whose kernel mean map has a closed
//!   form; the argmax is found by multi-start gradient ascent.
//! - **discrete**: p is an empirical set of points and the argmax runs over
//!   those points, which compresses a large sample (for example an MCMC chain)
//!   into a short, well-ordered subset.
//!
//! The [`posterior`] module wires discrete herding into a Bayesian logistic
//! regression pipeline, and [`evaluation`] holds the metrics used to compare
//! herding against iid sampling.

pub mod error;
pub mod evaluation;
pub mod herding;
pub mod io;
pub mod kernels;
pub mod numerics;
pub mod posterior;
pub mod targets;

pub use error::{Error, Result};
pub use herding::{HerdingConfig, HerdingMode, HerdingState, SuperSampleSet};
pub use kernels::{Bandwidth, GaussianKernel, Kernel, MeanMap};
pub use numerics::{Points, SeedStream, SymMatrix};
pub use targets::{EmpiricalDistribution, GaussianMixture, Target};
