//! Battery limits, state of energy and efficiency-aware dynamics.
//!
//! Sign convention: negative battery power charges, positive discharges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Slack allowed when checking powers and energies against their limits.
const SLACK: f64 = 1e-9;

/// Missing fields deserialize to the default battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct BatterySpec<T> {
    /// kWh
    pub e_min: T,
    /// kWh
    pub e_max: T,
    /// Charging power limit, kW (<= 0).
    pub p_min: T,
    /// Discharging power limit, kW (>= 0).
    pub p_max: T,
    pub eta_ch: T,
    pub eta_dis: T,
}

impl<T: Scalar> Default for BatterySpec<T> {
    /// 7.68 kWh / 5.12 kW residential battery with 98 % efficiency each way.
    fn default() -> Self {
        Self {
            e_min: T::zero(),
            e_max: T::lit(7.68),
            p_min: T::lit(-5.12),
            p_max: T::lit(5.12),
            eta_ch: T::lit(0.98),
            eta_dis: T::lit(0.98),
        }
    }
}

impl<T: Scalar> BatterySpec<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.e_min,
            self.e_max,
            self.p_min,
            self.p_max,
            self.eta_ch,
            self.eta_dis,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBattery("non-finite parameter".into()));
        }
        if !(self.e_min < self.e_max) {
            return Err(Error::InvalidBattery(format!(
                "e_min {} must be below e_max {}",
                self.e_min, self.e_max
            )));
        }
        if !(self.p_min < T::zero() && T::zero() < self.p_max) {
            return Err(Error::InvalidBattery(format!(
                "power limits must satisfy p_min < 0 < p_max, got [{}, {}]",
                self.p_min, self.p_max
            )));
        }
        for (name, eta) in [("eta_ch", self.eta_ch), ("eta_dis", self.eta_dis)] {
            if !(eta > T::zero() && eta <= T::one()) {
                return Err(Error::InvalidBattery(format!(
                    "{name} must lie in (0,1], got {eta}"
                )));
            }
        }
        Ok(())
    }

    /// Midpoint of the energy window, the default starting state.
    pub fn midpoint(&self) -> BatteryState<T> {
        BatteryState {
            soe: T::lit(0.5) * (self.e_min + self.e_max),
        }
    }

    /// Change of stored energy caused by battery power `p_b` over `dt` hours.
    #[inline]
    pub fn energy_delta(&self, p_b: T, dt: T) -> T {
        let ch = p_b.min(T::zero());
        let dis = p_b.max(T::zero());
        -(ch * self.eta_ch * dt) - dis / self.eta_dis * dt
    }

    /// Derivative of [`Self::energy_delta`] w.r.t. `p_b` (charging side at 0).
    #[inline]
    pub fn energy_delta_slope(&self, p_b: T, dt: T) -> T {
        if p_b > T::zero() {
            -dt / self.eta_dis
        } else {
            -(self.eta_ch * dt)
        }
    }

    /// Battery power interval that keeps the next state within the energy window.
    pub fn feasible_interval(&self, state: BatteryState<T>, dt: T) -> (T, T) {
        let e = state.soe.max(self.e_min).min(self.e_max);
        let lo = self.p_min.max((e - self.e_max) / (self.eta_ch * dt));
        let hi = self.p_max.min((e - self.e_min) * self.eta_dis / dt);
        (lo.min(T::zero()), hi.max(T::zero()))
    }

    /// Advances the state by one interval with battery power `p_b`.
    pub fn step(&self, state: BatteryState<T>, p_b: T, dt: T) -> Result<BatteryState<T>> {
        if !(dt > T::zero()) {
            return Err(Error::Domain(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let (lo, hi) = self.feasible_interval(state, dt);
        let slack = T::lit(SLACK);
        if p_b < lo - slack {
            return Err(Error::BatteryConstraint {
                bound: "lower",
                power: p_b.to_f64().unwrap_or(f64::NAN),
                limit: lo.to_f64().unwrap_or(f64::NAN),
            });
        }
        if p_b > hi + slack || p_b.is_nan() {
            return Err(Error::BatteryConstraint {
                bound: "upper",
                power: p_b.to_f64().unwrap_or(f64::NAN),
                limit: hi.to_f64().unwrap_or(f64::NAN),
            });
        }
        let soe = state.soe + self.energy_delta(p_b, dt);
        Ok(BatteryState {
            soe: soe.max(self.e_min).min(self.e_max),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState<T> {
    /// State of energy, kWh.
    pub soe: T,
}

impl<T: Scalar> BatteryState<T> {
    pub fn new(soe: T) -> Self {
        Self { soe }
    }

    pub fn validate(&self, spec: &BatterySpec<T>) -> Result<()> {
        let slack = T::lit(SLACK);
        if !(self.soe >= spec.e_min - slack && self.soe <= spec.e_max + slack) {
            return Err(Error::InvalidBattery(format!(
                "state of energy {} outside [{}, {}]",
                self.soe, spec.e_min, spec.e_max
            )));
        }
        Ok(())
    }
}
