//! Retail import/export prices derived from wholesale day-ahead prices.
//!
//! Import price: wholesale plus a constant offset hitting a target mean.
//! Export price: wholesale plus an offset, clipped at zero, with the offset
//! found by bisection because the clipping makes the mean nonlinear in it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mean retail import price, €/kWh.
pub const DEFAULT_BUY_MEAN: f64 = 0.4;
/// Mean feed-in remuneration, €/kWh.
pub const DEFAULT_SELL_MEAN: f64 = 0.08;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffSeries<T> {
    pub wholesale: Vec<T>,
    pub c_buy: Vec<T>,
    pub c_sell: Vec<T>,
    pub buy_offset: T,
    pub sell_offset: T,
}

impl<T: Scalar> TariffSeries<T> {
    pub fn len(&self) -> usize {
        self.c_buy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_buy.is_empty()
    }
}

fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |a, &b| a + b) / T::from_usize(xs.len()).unwrap()
}

fn clipped_mean<T: Scalar>(xs: &[T], offset: T) -> T {
    xs.iter()
        .fold(T::zero(), |a, &w| a + (w + offset).max(T::zero()))
        / T::from_usize(xs.len()).unwrap()
}

pub fn build<T: Scalar>(
    wholesale: &[T],
    target_buy_mean: T,
    target_sell_mean: T,
) -> Result<TariffSeries<T>> {
    if wholesale.is_empty() {
        return Err(Error::Config("wholesale price series is empty".into()));
    }
    if let Some(i) = wholesale.iter().position(|w| !w.is_finite()) {
        return Err(Error::Config(format!(
            "wholesale price at hour {i} is not finite"
        )));
    }
    if !(target_sell_mean > T::zero()) || !target_sell_mean.is_finite() {
        return Err(Error::Config(format!(
            "export price target {target_sell_mean} is unreachable with a zero-clipped tariff"
        )));
    }
    if !target_buy_mean.is_finite() {
        return Err(Error::Config("import price target must be finite".into()));
    }

    let buy_offset = target_buy_mean - mean(wholesale);
    let c_buy: Vec<T> = wholesale.iter().map(|&w| w + buy_offset).collect();

    // The clipped mean is continuous and nondecreasing in the offset; with
    // the offset at -max(w) every hour clips to zero.
    let w_max = wholesale.iter().copied().fold(T::neg_infinity(), T::max);
    let mut lo = -w_max;
    // At target - min(w) no hour clips, so the clipped mean equals the
    // target up to rounding; nudge upward until the bracket holds.
    let mut hi = target_sell_mean - wholesale.iter().copied().fold(T::infinity(), T::min);
    let mut nudge = T::epsilon() * (T::one() + hi.abs());
    for _ in 0..64 {
        if clipped_mean(wholesale, hi) >= target_sell_mean {
            break;
        }
        hi = hi + nudge;
        nudge = nudge + nudge;
    }
    if clipped_mean(wholesale, hi) < target_sell_mean {
        return Err(Error::Config(
            "export price target cannot be bracketed".into(),
        ));
    }
    for _ in 0..200 {
        let mid = T::lit(0.5) * (lo + hi);
        if clipped_mean(wholesale, mid) < target_sell_mean {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * (T::one() + hi.abs()) {
            break;
        }
    }
    let sell_offset = hi;
    let c_sell = wholesale
        .iter()
        .map(|&w| (w + sell_offset).max(T::zero()))
        .collect();

    Ok(TariffSeries {
        wholesale: wholesale.to_vec(),
        c_buy,
        c_sell,
        buy_offset,
        sell_offset,
    })
}
