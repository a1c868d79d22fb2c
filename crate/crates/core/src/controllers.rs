//! The six receding-horizon control strategies behind one interface.
//!
//! Fixed-Grid controllers (SMPC-FG, MPC-FG) emit a [`Policy`]: a desired grid
//! power that the battery tracks within an interval. Fixed-Battery
//! controllers (MPC-FB, SMPC-FB, MPC-Ideal) emit a battery setpoint and let
//! the grid absorb deviations. RBC needs no plan: it covers the net-load
//! with the battery as far as physics allows.
//!
//! SMPC-FB minimizes the expected cost of fixed setpoints under the mixture
//! forecast; it is a reconstruction, since only its intent (stochastic
//! scheduling of battery setpoints) is given.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixedrv::realize;
use crate::scheduler::{
    self, fixed_battery, solve_deterministic, HorizonFrame, HorizonProblem, Price, SolverOptions,
    SolverStatus,
};
use crate::{Battery, BatteryState, Mixture, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ControllerKind {
    #[serde(rename = "SMPC-FG")]
    SmpcFg,
    #[serde(rename = "MPC-FG")]
    MpcFg,
    #[serde(rename = "MPC-FB")]
    MpcFb,
    #[serde(rename = "SMPC-FB")]
    SmpcFb,
    #[serde(rename = "MPC-Ideal")]
    MpcIdeal,
    #[serde(rename = "RBC")]
    Rbc,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 6] = [
        Self::SmpcFg,
        Self::MpcFg,
        Self::MpcFb,
        Self::SmpcFb,
        Self::MpcIdeal,
        Self::Rbc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SmpcFg => "SMPC-FG",
            Self::MpcFg => "MPC-FG",
            Self::MpcFb => "MPC-FB",
            Self::SmpcFb => "SMPC-FB",
            Self::MpcIdeal => "MPC-Ideal",
            Self::Rbc => "RBC",
        }
    }

    /// Plans with perfect knowledge of the future net-load.
    pub fn is_ideal(self) -> bool {
        self == Self::MpcIdeal
    }

    pub fn uses_forecast(self) -> bool {
        !matches!(self, Self::MpcIdeal | Self::Rbc)
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    /// Case-insensitive; `-` and `_` are interchangeable.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_uppercase() == key)
            .ok_or_else(|| {
                let valid: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!(
                    "unknown controller {s:?}; valid kinds: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// This hour's decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HourAction {
    /// Track a desired grid power with the battery inside an interval.
    Grid(Policy),
    /// Hold the battery at a setpoint, kW.
    Battery(f64),
    /// Rule-based: cover the realized net-load with the battery.
    Rule,
}

/// What a controller sees when planning one hour.
#[derive(Debug, Clone, Copy)]
pub struct PlanInput<'a> {
    /// Mixture forecasts for the next K hours.
    pub forecasts: &'a [Mixture],
    /// Realized net-load for the same hours, kW; read only by MPC-Ideal.
    pub truth: &'a [f64],
    pub prices: &'a [Price],
    pub spec: &'a Battery,
    pub state: BatteryState,
    pub dt: f64,
    pub solver: &'a SolverOptions,
}

/// Outcome of one hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Realization {
    pub p_b: f64,
    pub p_g: f64,
    /// The action had to be narrowed to the realized feasible interval.
    pub tightened: bool,
}

/// Plans this hour with the given controller.
///
/// `hour` only labels errors. Solver iteration caps are logged and the best
/// feasible candidate is used; an infeasible horizon problem is an error.
pub fn plan(kind: ControllerKind, input: &PlanInput<'_>, hour: usize) -> Result<HourAction> {
    let fail = |status| Error::Controller {
        controller: kind.name().into(),
        hour,
        status,
    };
    let k = input.forecasts.len().min(input.prices.len());
    let prices = &input.prices[..k];
    match kind {
        ControllerKind::Rbc => Ok(HourAction::Rule),
        ControllerKind::MpcFg | ControllerKind::MpcFb | ControllerKind::MpcIdeal => {
            let netload: Vec<f64> = if kind.is_ideal() {
                input.truth[..k].to_vec()
            } else {
                input.forecasts[..k].iter().map(Mixture::mean).collect()
            };
            let det =
                solve_deterministic(&netload, prices, input.spec, input.state, input.dt, None)
                    .map_err(fail)?;
            if kind == ControllerKind::MpcFg {
                let (lo, hi) = input.spec.feasible_interval(input.state, input.dt);
                Ok(HourAction::Grid(Policy::new(lo, hi, det.grid[0])?))
            } else {
                Ok(HourAction::Battery(det.battery[0]))
            }
        }
        ControllerKind::SmpcFg | ControllerKind::SmpcFb => {
            let prob = HorizonProblem {
                frames: input.forecasts[..k]
                    .iter()
                    .zip(prices)
                    .map(|(&forecast, &price)| HorizonFrame { forecast, price })
                    .collect(),
                spec: *input.spec,
                initial_state: input.state,
                dt: input.dt,
                terminal_soe_min: None,
            };
            let (status, action) = if kind == ControllerKind::SmpcFg {
                let sol = scheduler::solve(&prob, input.solver);
                (
                    sol.solver_status,
                    sol.policies.first().map(|&p| HourAction::Grid(p)),
                )
            } else {
                let plan = fixed_battery::solve(&prob, input.solver);
                (
                    plan.solver_status,
                    plan.battery.first().map(|&p| HourAction::Battery(p)),
                )
            };
            if status == SolverStatus::MaxIterations {
                log::debug!(
                    "{kind} hour {hour}: iteration cap reached, using best feasible candidate"
                );
            }
            action.ok_or_else(|| fail(status))
        }
    }
}

/// Applies an action to the realized net-load.
///
/// Physics wins: the action is first narrowed to the interval the current
/// state of energy permits, and `p_b + p_g = p_l` holds exactly.
pub fn apply(
    action: &HourAction,
    spec: &Battery,
    state: BatteryState,
    dt: f64,
    p_l: f64,
) -> Realization {
    let (lo, hi) = spec.feasible_interval(state, dt);
    let clamp = |p: f64| p.max(lo).min(hi);
    match *action {
        HourAction::Grid(pol) => {
            let a = clamp(pol.pb_lo);
            let b = clamp(pol.pb_hi);
            let narrowed = Policy {
                pb_lo: a,
                pb_hi: b,
                ..pol
            };
            let (p_b, p_g) = realize(&narrowed, p_l);
            Realization {
                p_b,
                p_g,
                tightened: a != pol.pb_lo || b != pol.pb_hi,
            }
        }
        HourAction::Battery(p) => {
            let p_b = clamp(p);
            Realization {
                p_b,
                p_g: p_l - p_b,
                tightened: p_b != p,
            }
        }
        HourAction::Rule => {
            let p_b = clamp(p_l);
            Realization {
                p_b,
                p_g: p_l - p_b,
                tightened: false,
            }
        }
    }
}

/// Rule-based control: the battery covers as much of the net-load as it can.
pub fn plan_rbc(spec: &Battery, state: BatteryState, dt: f64, p_l: f64) -> (f64, f64) {
    let r = apply(&HourAction::Rule, spec, state, dt, p_l);
    (r.p_b, r.p_g)
}
