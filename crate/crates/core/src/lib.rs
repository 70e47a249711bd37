//! Cramer-Rao derived SDR upper bound for single-channel speech separation,
//! the modelling checks it rests on, and the SepIt iterative refiner.
//!
//! Numeric code is generic over [`Scalar`] (`f32` / `f64`); the aliases
//! below fix the common choices.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bound;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod io;
pub mod metrics;
pub mod mixture;
pub mod rng;
pub mod scalar;
pub mod sepit;
pub mod signal;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Version string embedded in every artifact.
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub type Signal = signal::Signal<f64>;
pub type SignalF32 = signal::Signal<f32>;
pub type SyntheticMixture = mixture::SyntheticMixture<f64>;
pub type SepItModel = sepit::SepItModel<f32>;
pub type SepItModelF64 = sepit::SepItModel<f64>;
pub type LaplaceParams = distributions::LaplaceParams<f64>;
pub type NormalParams = distributions::NormalParams<f64>;
