//! Vector autoregressive-to-anything (VARTA) time series models.
//!
//! A latent stationary Gaussian VAR(k) process `Z_t` with unit marginal
//! variances is mapped componentwise through `F_i^{-1}(Φ(·))` to series with
//! arbitrary continuous marginals `F_i`. The crate provides the likelihood of
//! the observed series, maximum-likelihood fitting with observed-information
//! standard errors, simulation, simulation-based forecast distributions,
//! residual diagnostics and a Monte Carlo coverage harness.
//!
//! The numerical core (`linalg`, `gaussian`, `marginals`, `var_model`,
//! `likelihood`, `simulation`, `forecasting`, `diagnostics`) is generic over
//! the floating point type through [`Scalar`]. Estimation and the Monte Carlo
//! harness work in `f64`; the aliases at the crate root name the `f64`
//! instantiations used there.

pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod forecasting;
pub mod gaussian;
pub mod io;
pub mod likelihood;
pub mod linalg;
pub mod marginals;
pub mod montecarlo;
mod optim;
pub mod scalar;
pub mod simulation;
pub mod var_model;

pub use error::{Result, VartaError};
pub use scalar::Scalar;

pub use estimation::{fit, FitOptions, FitResult, LikelihoodKind, ParamInfo};
pub use gaussian::{normal_cdf, normal_pdf, normal_quantile};
pub use marginals::{MarginalFamily, MarginalSpec};
pub use simulation::RngSpec;

/// Dense `f64` matrix.
pub type Mat = linalg::Matrix<f64>;
/// `f64` correlation matrix.
pub type Correlation = gaussian::CorrelationMatrix<f64>;
/// `f64` marginal distribution.
pub type Marginal = marginals::MarginalSpec<f64>;
/// `f64` latent VAR parameters.
pub type VarParams = var_model::VarParams<f64>;
/// `f64` VARTA model.
pub type VartaModel = likelihood::VartaModel<f64>;
/// `f64` forecast sample.
pub type ForecastResult = forecasting::ForecastResult<f64>;
/// Residual report in double precision.
pub type ResidualReport = diagnostics::ResidualReport<f64>;
/// `f64` observed series.
pub type TimeSeriesData = likelihood::TimeSeriesData<f64>;
/// Monte Carlo design.
pub type McDesign = montecarlo::McDesign;
pub use montecarlo::{run_mc, McReport};
