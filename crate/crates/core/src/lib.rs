//! Conditional Nelson-Aalen and Aalen-Johansen estimation for
//! right-censored multi-state data.
//!
//! Given subjects with fixed covariates `X` and a jump process observed up
//! to censoring, the crate estimates the cumulative conditional transition
//! rates `Λ(t|x)` and occupation probabilities `p(t|x)` at a covariate value
//! `x` by kernel-weighting each subject. Denominators are floored at a small
//! `ε`, covariates may carry declared atoms (which turns conditioning into
//! sub-sampling, e.g. landmarking), and per-subject influence curves give
//! plug-in covariance surfaces.
//!
//! Runnable walkthroughs live in `examples/`; `cargo run --example <name>`.
//!
//! ```no_run
//! use condaj::prelude::*;
//!
//! let sample = simulate_sample(&default_intensity(), &default_censoring(), 500, 1)?;
//! let config = FitConfig::new(KernelSpec::uniform_kind(KernelKind::Epanechnikov, 1));
//! let fit = fit(&sample, &[0.5], &config)?;
//! println!("p(1 | x=0.5) = {:?}", fit.occupation.at(1.0));
//! # Ok::<(), condaj::Error>(())
//! ```

pub mod check;
pub mod cli;
pub mod covariance;
pub mod data;
pub mod error;
pub mod estimators;
pub mod kernels;
pub mod output;
pub mod simulate;
pub mod step;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::covariance::{covariance_surfaces, CovarianceReport, CovarianceSurface};
    pub use crate::data::{
        load_sample, read_sample, write_sample, EndReason, EvalPoint, LoadOptions, ObservedPath, Sample,
        StateSpace,
    };
    pub use crate::estimators::{
        aalen_johansen, fit, nelson_aalen, product_integral, ConditionalFit, FitConfig, HazardEstimate,
        OccupationEstimate,
    };
    pub use crate::kernels::{bandwidth, nw_weights, BandwidthSchedule, KernelKind, KernelSpec, WeightVector};
    pub use crate::simulate::{
        default_censoring, default_intensity, markov_occupation_oracle, simulate_sample, IntensitySpec, Scenario,
    };
    pub use crate::Error;
}
