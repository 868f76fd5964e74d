//! Remote state estimation over an additive gamma-noise channel.
//!
//! A sensor observes an i.i.d. Laplace source, decides each stage whether
//! to transmit (paying a communication cost `c`), an encoder maps the
//! observation to a power-limited channel input, gamma noise is added, and
//! a decoder forms the estimate with the help of a noiseless sign bit.
//!
//! The crate provides the jointly optimal policies (a symmetric threshold
//! scheduler with a piecewise-affine coder), the closed-form expected cost
//! and its minimising threshold `β* = √(c + m)`, characteristic-function
//! matching checks, and a reproducible Monte Carlo simulator that ties the
//! formulas back to the system they describe.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64` and
//! `*32` aliases below fix the precision.

pub mod analytics;
pub mod cli;
pub mod distributions;
pub mod error;
pub mod matching;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod simulator;
pub mod strategies;

pub use error::{Error, Result};
pub use params::{DerivedQuantities, SystemParams};
pub use rng::RngHandle;
pub use scalar::Scalar;

pub type SystemParams64 = params::SystemParams<f64>;
pub type SystemParams32 = params::SystemParams<f32>;
pub type Laplace64 = distributions::Laplace<f64>;
pub type Exponential64 = distributions::Exponential<f64>;
pub type Gamma64 = distributions::Gamma<f64>;
pub type AffineCoder64 = strategies::AffineCoder<f64>;
pub type ThresholdStrategy64 = strategies::ThresholdStrategy<f64>;
pub type ThresholdStrategy32 = strategies::ThresholdStrategy<f32>;
pub type CostBreakdown64 = analytics::CostBreakdown<f64>;
pub type CfResidualReport64 = matching::CfResidualReport<f64>;
pub type MatchSpec64 = matching::MatchSpec<f64>;
pub type MonteCarloEstimate64 = simulator::MonteCarloEstimate<f64>;
pub type EpisodeTrace64 = simulator::EpisodeTrace<f64>;
pub type SweepRow64 = analytics::SweepRow<f64>;
