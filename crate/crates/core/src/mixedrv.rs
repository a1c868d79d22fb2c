//! Clipped battery and grid power as mixed random variables.
//!
//! A dispatch policy `(lo, hi, g)` tells the downstream controller to track the
//! desired grid power `g` with the battery, clipping the battery power to
//! `[lo, hi]`. For a net-load `L` with density `f`:
//!
//! ```text
//! P_B = clamp(L - g, lo, hi)       P_G = L - P_B
//! ```
//!
//! `P_B` has point masses `p1 = F(lo + g)` at `lo` and `p2 = 1 - F(hi + g)` at
//! `hi`; `P_G` has the point mass `1 - p1 - p2` at `g` and the shifted tails of
//! `f` elsewhere. The functions here evaluate the expectations of these
//! variables, and their derivatives, in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmix::{Bound, GaussianMixture2};
use crate::scalar::Scalar;

/// Relaxed complementarity tolerance for split variables.
pub const COMPLEMENTARITY_EPS: f64 = 1e-8;

/// Battery power interval plus desired grid power for one hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchPolicy<T> {
    pub pb_lo: T,
    pub pb_hi: T,
    pub pg_des: T,
    pub pg_des_sell: T,
    pub pg_des_buy: T,
}

impl<T: Scalar> DispatchPolicy<T> {
    /// Policy with the desired grid power split exactly into its sign parts.
    pub fn new(pb_lo: T, pb_hi: T, pg_des: T) -> Result<Self> {
        Self::from_split(pb_lo, pb_hi, pg_des.min(T::zero()), pg_des.max(T::zero()))
    }

    pub fn from_split(pb_lo: T, pb_hi: T, pg_des_sell: T, pg_des_buy: T) -> Result<Self> {
        let pol = Self {
            pb_lo,
            pb_hi,
            pg_des: pg_des_sell + pg_des_buy,
            pg_des_sell,
            pg_des_buy,
        };
        pol.validate()?;
        Ok(pol)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.pb_lo,
            self.pb_hi,
            self.pg_des,
            self.pg_des_sell,
            self.pg_des_buy,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPolicy("non-finite field".into()));
        }
        if self.pb_lo > self.pb_hi {
            return Err(Error::InvalidPolicy(format!(
                "interval lower bound {} above upper bound {}",
                self.pb_lo, self.pb_hi
            )));
        }
        if (self.pg_des - self.pg_des_sell - self.pg_des_buy).abs() > T::lit(1e-9) {
            return Err(Error::InvalidPolicy(
                "pg_des differs from sell + buy".into(),
            ));
        }
        if self.pg_des_sell > T::zero() || self.pg_des_buy < T::zero() {
            return Err(Error::InvalidPolicy(
                "sell part must be <= 0 and buy part >= 0".into(),
            ));
        }
        if self.pg_des_sell * self.pg_des_buy < -T::lit(COMPLEMENTARITY_EPS) {
            return Err(Error::InvalidPolicy(format!(
                "sell/buy split violates complementarity: {} * {}",
                self.pg_des_sell, self.pg_des_buy
            )));
        }
        Ok(())
    }

    /// Width of the battery interval.
    pub fn width(&self) -> T {
        self.pb_hi - self.pb_lo
    }
}

/// Probabilities of the battery sitting on its lower (`p1`) or upper (`p2`) bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryProbabilities<T> {
    pub p1: T,
    pub p2: T,
}

impl<T: Scalar> BoundaryProbabilities<T> {
    /// Probability that the grid follows its desired value exactly.
    pub fn tracking(&self) -> T {
        T::one() - self.p1 - self.p2
    }
}

/// Expected export (`exp_sell <= 0`) and import (`exp_buy >= 0`) power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedGridSplit<T> {
    pub exp_sell: T,
    pub exp_buy: T,
}

impl<T: Scalar> ExpectedGridSplit<T> {
    pub fn total(&self) -> T {
        self.exp_sell + self.exp_buy
    }
}

pub fn boundary_probabilities<T: Scalar>(
    f: &GaussianMixture2<T>,
    pol: &DispatchPolicy<T>,
) -> BoundaryProbabilities<T> {
    BoundaryProbabilities {
        p1: f.cdf(pol.pb_lo + pol.pg_des),
        p2: f.sf(pol.pb_hi + pol.pg_des),
    }
}

/// Probability mass of the interior (tracking) region.
pub fn tracking_mass<T: Scalar>(f: &GaussianMixture2<T>, pol: &DispatchPolicy<T>) -> T {
    f.mass_unchecked(
        Bound::Finite(pol.pb_lo),
        Bound::Finite(pol.pb_hi),
        pol.pg_des,
    )
}

/// `E[P_B] = p1 lo + ∫_lo^hi z f(z + g) dz + p2 hi`.
pub fn expected_battery_power<T: Scalar>(f: &GaussianMixture2<T>, pol: &DispatchPolicy<T>) -> T {
    let bp = boundary_probabilities(f, pol);
    let inner = f.partial_expectation_unchecked(
        Bound::Finite(pol.pb_lo),
        Bound::Finite(pol.pb_hi),
        pol.pg_des,
    );
    let e = bp.p1 * pol.pb_lo + inner + bp.p2 * pol.pb_hi;
    // Rounding can leave the value a hair outside the interval.
    e.max(pol.pb_lo).min(pol.pb_hi)
}

/// `E[P_G]` from the grid-power density: lower tail, point mass, upper tail.
pub fn expected_grid_power<T: Scalar>(f: &GaussianMixture2<T>, pol: &DispatchPolicy<T>) -> T {
    let g = Bound::Finite(pol.pg_des);
    let lower = f.partial_expectation_unchecked(Bound::NegInf, g, pol.pb_lo);
    let upper = f.partial_expectation_unchecked(g, Bound::PosInf, pol.pb_hi);
    lower + tracking_mass(f, pol) * pol.pg_des + upper
}

/// Decomposition of the expected grid power into export and import parts.
pub fn expected_grid_split<T: Scalar>(
    f: &GaussianMixture2<T>,
    pol: &DispatchPolicy<T>,
) -> ExpectedGridSplit<T> {
    let (lo, hi) = (pol.pb_lo, pol.pb_hi);
    let (s, b) = (pol.pg_des_sell, pol.pg_des_buy);
    let m = tracking_mass(f, pol);
    let zero = Bound::Finite(T::zero());
    let exp_sell = f.partial_expectation_unchecked(Bound::NegInf, Bound::Finite(s), lo)
        + m * s
        + f.partial_expectation_unchecked(Bound::Finite(s), zero, hi);
    let exp_buy = f.partial_expectation_unchecked(zero, Bound::Finite(b), lo)
        + m * b
        + f.partial_expectation_unchecked(Bound::Finite(b), Bound::PosInf, hi);
    ExpectedGridSplit {
        exp_sell: exp_sell.min(T::zero()),
        exp_buy: exp_buy.max(T::zero()),
    }
}

/// Realized `(p_b, p_g)` for a net-load outcome under the tracking rule.
pub fn realize<T: Scalar>(pol: &DispatchPolicy<T>, p_l: T) -> (T, T) {
    let p_b = (p_l - pol.pg_des).max(pol.pb_lo).min(pol.pb_hi);
    (p_b, p_l - p_b)
}

/// Continuous part of the battery-power density: `f(z + g)` inside `(lo, hi)`.
///
/// The point masses `p1` at `lo` and `p2` at `hi` come from [`boundary_probabilities`].
pub fn battery_density<T: Scalar>(f: &GaussianMixture2<T>, pol: &DispatchPolicy<T>, z: T) -> T {
    if z > pol.pb_lo && z < pol.pb_hi {
        f.pdf(z + pol.pg_des)
    } else {
        T::zero()
    }
}

/// Continuous part of the grid-power density: `f(z + lo)` below `g` and
/// `f(z + hi)` above it.
///
/// The point mass at `g` is the [`tracking_mass`].
pub fn grid_density<T: Scalar>(f: &GaussianMixture2<T>, pol: &DispatchPolicy<T>, z: T) -> T {
    if z < pol.pg_des {
        f.pdf(z + pol.pb_lo)
    } else if z > pol.pg_des {
        f.pdf(z + pol.pb_hi)
    } else {
        T::zero()
    }
}

/// Values and partial derivatives of the three policy expectations.
///
/// Derivatives are ordered `[d/d lo, d/d hi, d/d sell, d/d buy]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyExpectations<T> {
    pub battery: T,
    pub exp_sell: T,
    pub exp_buy: T,
    pub d_battery: [T; 4],
    pub d_sell: [T; 4],
    pub d_buy: [T; 4],
}

/// Expectations with analytic gradients (Leibniz rule on each integral).
pub fn policy_expectations<T: Scalar>(
    f: &GaussianMixture2<T>,
    pol: &DispatchPolicy<T>,
) -> PolicyExpectations<T> {
    let (lo, hi) = (pol.pb_lo, pol.pb_hi);
    let (s, b) = (pol.pg_des_sell, pol.pg_des_buy);
    let g = s + b;
    let fin = Bound::Finite;
    let zero = fin(T::zero());

    let p1 = f.cdf(lo + g);
    let p2 = f.sf(hi + g);
    let m = f.mass_unchecked(fin(lo), fin(hi), g);
    let f_a = f.pdf(lo + g);
    let f_b = f.pdf(hi + g);
    let dm_dg = f_b - f_a;

    let battery = p1 * lo + f.partial_expectation_unchecked(fin(lo), fin(hi), g) + p2 * hi;

    let exp_sell = f.partial_expectation_unchecked(Bound::NegInf, fin(s), lo)
        + m * s
        + f.partial_expectation_unchecked(fin(s), zero, hi);
    let exp_buy = f.partial_expectation_unchecked(zero, fin(b), lo)
        + m * b
        + f.partial_expectation_unchecked(fin(b), Bound::PosInf, hi);

    let f_s_lo = f.pdf(s + lo);
    let f_s_hi = f.pdf(s + hi);
    let f_b_lo = f.pdf(b + lo);
    let f_b_hi = f.pdf(b + hi);

    let d_sell = [
        s * f_s_lo - f.mass_unchecked(Bound::NegInf, fin(s), lo) - s * f_a,
        s * f_b - s * f_s_hi - f.mass_unchecked(fin(s), zero, hi),
        s * f_s_lo + m + s * dm_dg - s * f_s_hi,
        s * dm_dg,
    ];
    let d_buy = [
        b * f_b_lo - f.mass_unchecked(zero, fin(b), lo) - b * f_a,
        b * f_b - b * f_b_hi - f.mass_unchecked(fin(b), Bound::PosInf, hi),
        b * dm_dg,
        b * f_b_lo + m + b * dm_dg - b * f_b_hi,
    ];

    PolicyExpectations {
        battery,
        exp_sell,
        exp_buy,
        d_battery: [p1, p2, -m, -m],
        d_sell,
        d_buy,
    }
}
