//! Battery scheduling under net-load uncertainty with mixed random variables.
//!
//! A battery following a power interval `[pb_lo, pb_hi]` and a desired grid
//! power `pg_des` turns a continuous net-load distribution into battery and
//! grid powers with point masses at the interval bounds. Their expectations
//! have closed forms for Gaussian-mixture net-load, which makes the
//! stochastic scheduling problem a smooth nonlinear program.
//!
//! The numeric building blocks ([`gmix`], [`mixedrv`], [`battery`], [`tariff`])
//! are generic over [`Scalar`]; the optimization and simulation layers work in
//! `f64`. The aliases below fix the scalar type.

pub mod battery;
pub mod controllers;
pub mod error;
pub mod forecast;
pub mod gmix;
pub mod mixedrv;
pub mod nlp;
pub mod scalar;
pub mod scheduler;
pub mod sim;
pub mod synth;
pub mod tariff;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mixture = gmix::GaussianMixture2<f64>;
pub type Component = gmix::GaussianComponent<f64>;
pub type Policy = mixedrv::DispatchPolicy<f64>;
pub type Battery = battery::BatterySpec<f64>;
pub type BatteryState = battery::BatteryState<f64>;
pub type Tariff = tariff::TariffSeries<f64>;

pub type Mixture32 = gmix::GaussianMixture2<f32>;
pub type Policy32 = mixedrv::DispatchPolicy<f32>;
pub type Battery32 = battery::BatterySpec<f32>;
pub type BatteryState32 = battery::BatteryState<f32>;
pub type Tariff32 = tariff::TariffSeries<f32>;
