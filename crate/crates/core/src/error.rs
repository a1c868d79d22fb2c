use thiserror::Error;

use crate::scheduler::SolverStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("invalid dispatch policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid battery parameters: {0}")]
    InvalidBattery(String),

    /// A battery power outside the state-dependent feasible interval.
    #[error("battery power {power} kW violates the {bound} bound {limit} kW")]
    BatteryConstraint {
        bound: &'static str,
        power: f64,
        limit: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("controller {controller} failed at hour {hour}: solver status {status:?}")]
    Controller {
        controller: String,
        hour: usize,
        status: SolverStatus,
    },
}
