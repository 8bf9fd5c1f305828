//! Time-varying two-component Gaussian-Cauchy mixtures for return series.
//!
//! Four models of increasing structure share one mixture form, with the
//! Gaussian weight `alpha_i` varying across time intervals:
//!
//! * Model 1: independent mixtures per interval ([`em::fit_model1`]).
//! * Model 2: shared components, free weights ([`em::fit_model2`]).
//! * Model 3: shared components, logistic weights driven by exogenous
//!   predictors ([`logistic::fit_model3`]).
//! * Model 4: Model 3 plus an AR(1) disturbance on the logit weights,
//!   fitted by Monte Carlo EM ([`mcem::mcem_fit`]).
//!
//! [`simgen`] regenerates the simulation studies, [`risk`] turns fits into
//! value-at-risk tables and [`data`] ingests price and macro CSV files.

pub mod data;
pub mod distributions;
pub mod em;
pub mod error;
pub mod logistic;
pub mod mcem;
pub mod model;
pub mod risk;
pub mod rng;
pub mod simgen;
pub mod stats;

pub use distributions::{CauchyParams, GaussianParams, MixtureParams, SamplingScheme};
pub use em::{EmConfig, Model2Params};
pub use error::{Error, Result};
pub use logistic::{ExogenousMatrix, LogisticMixtureParams};
pub use mcem::{Ar1Params, McemConfig, Model4Params};
pub use model::{observed_loglik, Diagnostics, FitResult, HasComponents, IntervalSeries, StdErrors, WeightSeries};
