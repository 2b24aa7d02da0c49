//! Calibrated prediction intervals that combine aleatoric and epistemic uncertainty.
//!
//! A point predictor and its epistemic band come from a bootstrap ensemble of base models
//! ([`epistemic`]); aleatoric widths come from quantile regression on the ensemble's residuals
//! ([`aleatoric`]). [`clear`] then scales the two with separate factors
//!
//! ```text
//! [f - g1 * ale_lo - g2 * epi_lo,  f + g1 * ale_hi + g2 * epi_hi],   g2 = lambda * g1
//! ```
//!
//! choosing `g1` by split conformal calibration for each `lambda` on a grid and `lambda` by
//! validation pinball loss. [`metrics`] scores the resulting intervals.
//!
//! Numeric routines are generic over [`Scalar`] (`f32` or `f64`); the `*F64` / `*F32` aliases
//! below name the common instantiations.

pub mod aleatoric;
pub mod clear;
pub mod components;
pub mod data;
pub mod epistemic;
pub mod error;
pub mod interval;
pub mod learners;
pub mod level;
pub mod metrics;
pub mod num;
pub mod quantile;
pub mod seed;
pub mod synthetic;

pub use error::{Error, Result};
pub use interval::IntervalSet;
pub use level::Alpha;
pub use num::Scalar;
pub use quantile::Overflow;

pub type DatasetF64 = data::Dataset<f64>;
pub type DatasetF32 = data::Dataset<f32>;
pub type IntervalSetF64 = IntervalSet<f64>;
pub type IntervalSetF32 = IntervalSet<f32>;
pub type FittedModelF64 = learners::FittedModel<f64>;
pub type FittedModelF32 = learners::FittedModel<f32>;
pub type PcsEnsembleF64 = epistemic::PcsEnsemble<f64>;
pub type PcsEnsembleF32 = epistemic::PcsEnsemble<f32>;
pub type EpistemicBandF64 = epistemic::EpistemicBand<f64>;
pub type EpistemicBandF32 = epistemic::EpistemicBand<f32>;
pub type AleatoricBandF64 = aleatoric::AleatoricBand<f64>;
pub type AleatoricBandF32 = aleatoric::AleatoricBand<f32>;
pub type UncertaintyComponentsF64 = clear::UncertaintyComponents<f64>;
pub type UncertaintyComponentsF32 = clear::UncertaintyComponents<f32>;
pub type LambdaGridF64 = clear::LambdaGrid<f64>;
pub type LambdaGridF32 = clear::LambdaGrid<f32>;
pub type ClearFitF64 = clear::ClearFit<f64>;
pub type ClearFitF32 = clear::ClearFit<f32>;
pub type MetricsReportF64 = metrics::MetricsReport<f64>;
pub type MetricsReportF32 = metrics::MetricsReport<f32>;
