//! Two-component Gaussian mixtures with closed-form partial expectations.
//!
//! The net-load uncertainty of one hour is modelled as
//! `f(z) = w1 N(z; mu1, s1) + w2 N(z; mu2, s2)`. Every expectation the
//! scheduler needs reduces to integrals of the form `∫_a^b z f(z + shift) dz`
//! and `∫_a^b f(z + shift) dz`, which are evaluated per component with the
//! truncated-normal identities below. Interval endpoints may be unbounded;
//! those are carried as [`Bound::NegInf`]/[`Bound::PosInf`] and evaluated
//! exactly rather than by substituting large numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{std_cdf, std_interval, std_pdf, std_sf, Scalar};

/// One weighted normal component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent<T> {
    pub weight: T,
    pub mean: T,
    pub stdev: T,
}

impl<T: Scalar> GaussianComponent<T> {
    pub fn new(weight: T, mean: T, stdev: T) -> Result<Self> {
        if !(stdev > T::zero()) || !stdev.is_finite() {
            return Err(Error::InvalidMixture(format!(
                "stdev must be positive, got {stdev}"
            )));
        }
        if !(weight >= T::zero() && weight <= T::one()) {
            return Err(Error::InvalidMixture(format!(
                "weight must lie in [0,1], got {weight}"
            )));
        }
        if !mean.is_finite() {
            return Err(Error::InvalidMixture(format!(
                "mean must be finite, got {mean}"
            )));
        }
        Ok(Self {
            weight,
            mean,
            stdev,
        })
    }

    #[inline]
    fn standardize(&self, z: T) -> T {
        (z - self.mean) / self.stdev
    }
}

/// Interval endpoint, possibly unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound<T> {
    NegInf,
    Finite(T),
    PosInf,
}

impl<T: Scalar> Bound<T> {
    /// Position on the extended real line; infinities map to IEEE infinities.
    #[inline]
    pub fn value(self) -> T {
        match self {
            Bound::NegInf => T::neg_infinity(),
            Bound::Finite(v) => v,
            Bound::PosInf => T::infinity(),
        }
    }

    /// Standardized endpoint `(self + shift - mean) / stdev` of a component.
    #[inline]
    fn standardized(self, c: &GaussianComponent<T>, shift: T) -> T {
        match self {
            Bound::NegInf => T::neg_infinity(),
            Bound::PosInf => T::infinity(),
            Bound::Finite(v) => (v + shift - c.mean) / c.stdev,
        }
    }
}

impl<T: Scalar> From<T> for Bound<T> {
    fn from(v: T) -> Self {
        if v == T::infinity() {
            Bound::PosInf
        } else if v == T::neg_infinity() {
            Bound::NegInf
        } else {
            Bound::Finite(v)
        }
    }
}

/// Weighted sum of exactly two normal densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture2<T> {
    components: [GaussianComponent<T>; 2],
}

impl<T: Scalar> GaussianMixture2<T> {
    pub fn new(first: GaussianComponent<T>, second: GaussianComponent<T>) -> Result<Self> {
        // Revalidate: the fields are public and may have been built by hand.
        let first = GaussianComponent::new(first.weight, first.mean, first.stdev)?;
        let second = GaussianComponent::new(second.weight, second.mean, second.stdev)?;
        let sum = first.weight + second.weight;
        if (sum - T::one()).abs() > T::structural_tol() {
            return Err(Error::InvalidMixture(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            components: [first, second],
        })
    }

    /// Builds a mixture from `(w1, mu1, s1, mu2, s2)` with `w2 = 1 - w1`.
    pub fn from_params(w1: T, mu1: T, s1: T, mu2: T, s2: T) -> Result<Self> {
        Self::new(
            GaussianComponent::new(w1, mu1, s1)?,
            GaussianComponent::new(T::one() - w1, mu2, s2)?,
        )
    }

    /// A single normal `N(mean, stdev²)` written as a two-component mixture.
    pub fn normal(mean: T, stdev: T) -> Result<Self> {
        Self::from_params(T::one(), mean, stdev, mean, stdev)
    }

    pub fn components(&self) -> &[GaussianComponent<T>; 2] {
        &self.components
    }

    #[inline]
    fn active(&self) -> impl Iterator<Item = &GaussianComponent<T>> {
        self.components.iter().filter(|c| c.weight > T::zero())
    }

    pub fn pdf(&self, z: T) -> T {
        self.active()
            .map(|c| c.weight * std_pdf(c.standardize(z)) / c.stdev)
            .fold(T::zero(), |a, b| a + b)
    }

    pub fn cdf(&self, z: T) -> T {
        self.active()
            .map(|c| c.weight * std_cdf(c.standardize(z)))
            .fold(T::zero(), |a, b| a + b)
    }

    /// Survival function `1 - F(z)` without cancellation in the upper tail.
    pub fn sf(&self, z: T) -> T {
        self.active()
            .map(|c| c.weight * std_sf(c.standardize(z)))
            .fold(T::zero(), |a, b| a + b)
    }

    pub fn mean(&self) -> T {
        self.active()
            .map(|c| c.weight * c.mean)
            .fold(T::zero(), |a, b| a + b)
    }

    /// Largest component standard deviation among components with weight.
    pub fn max_stdev(&self) -> T {
        self.active().map(|c| c.stdev).fold(T::zero(), T::max)
    }

    /// Inverse cdf by bracketed, bisection-safeguarded Newton iteration.
    pub fn quantile(&self, p: T) -> Result<T> {
        if !(p > T::zero() && p < T::one()) {
            return Err(Error::Domain(format!(
                "quantile probability must lie in (0,1), got {p}"
            )));
        }
        let (lo_mean, hi_mean, spread) = self.active().fold(
            (T::infinity(), T::neg_infinity(), T::zero()),
            |(lo, hi, s), c| (lo.min(c.mean), hi.max(c.mean), s.max(c.stdev)),
        );
        let mut reach = T::lit(8.0);
        let mut lo = lo_mean - reach * spread;
        let mut hi = hi_mean + reach * spread;
        for _ in 0..64 {
            let ok_lo = self.cdf(lo) <= p;
            let ok_hi = self.sf(hi) <= T::one() - p;
            if ok_lo && ok_hi {
                break;
            }
            reach = reach * T::lit(2.0);
            if !ok_lo {
                lo = lo_mean - reach * spread;
            }
            if !ok_hi {
                hi = hi_mean + reach * spread;
            }
        }
        Ok(self.solve_quantile(p, lo, hi, T::lit(0.5) * (lo + hi)))
    }

    /// Safeguarded Newton on `F(x) = p` inside a bracket `[lo, hi]`.
    pub(crate) fn solve_quantile(&self, p: T, mut lo: T, mut hi: T, start: T) -> T {
        let upper_half = p > T::lit(0.5);
        let q = T::one() - p;
        let mut x = start.max(lo).min(hi);
        for _ in 0..200 {
            // Residual measured on the tail where it keeps relative precision.
            let resid = if upper_half {
                q - self.sf(x)
            } else {
                self.cdf(x) - p
            };
            if resid == T::zero() {
                return x;
            }
            if resid > T::zero() {
                hi = x;
            } else {
                lo = x;
            }
            let dens = self.pdf(x);
            let mut next = x - resid / dens;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = T::lit(0.5) * (lo + hi);
            }
            let tol = T::epsilon() * T::lit(4.0) * (T::one() + x.abs());
            if (next - x).abs() <= tol || (hi - lo) <= tol {
                return next;
            }
            x = next;
        }
        x
    }

    /// `∫_a^b z f(z + shift) dz` in closed form.
    pub fn partial_expectation(&self, a: Bound<T>, b: Bound<T>, shift: T) -> Result<T> {
        check_order(a, b)?;
        Ok(self.partial_expectation_unchecked(a, b, shift))
    }

    /// `∫_a^b f(z + shift) dz`.
    pub fn mass(&self, a: Bound<T>, b: Bound<T>, shift: T) -> Result<T> {
        check_order(a, b)?;
        Ok(self.mass_unchecked(a, b, shift))
    }

    /// Signed integral: a reversed interval gives the negated value, which keeps
    /// the result smooth in the endpoints when they cross.
    pub(crate) fn partial_expectation_unchecked(&self, a: Bound<T>, b: Bound<T>, shift: T) -> T {
        let mut total = T::zero();
        for c in self.active() {
            let alpha = a.standardized(c, shift);
            let beta = b.standardized(c, shift);
            let (lo, hi, sign) = if alpha <= beta {
                (alpha, beta, T::one())
            } else {
                (beta, alpha, -T::one())
            };
            if lo == hi {
                continue;
            }
            let prob = std_interval(lo, hi);
            let dens = std_pdf(hi) - std_pdf(lo);
            total = total + sign * c.weight * ((c.mean - shift) * prob - c.stdev * dens);
        }
        total
    }

    /// Signed like [`Self::partial_expectation_unchecked`].
    pub(crate) fn mass_unchecked(&self, a: Bound<T>, b: Bound<T>, shift: T) -> T {
        let mut total = T::zero();
        for c in self.active() {
            let alpha = a.standardized(c, shift);
            let beta = b.standardized(c, shift);
            if alpha < beta {
                total = total + c.weight * std_interval(alpha, beta);
            } else if beta < alpha {
                total = total - c.weight * std_interval(beta, alpha);
            }
        }
        total
    }

    /// Returns a copy with every mean and standard deviation multiplied by `s > 0`.
    pub fn scaled(&self, s: T) -> Result<Self> {
        let [a, b] = self.components;
        Self::new(
            GaussianComponent::new(a.weight, a.mean * s, a.stdev * s)?,
            GaussianComponent::new(b.weight, b.mean * s, b.stdev * s)?,
        )
    }
}

fn check_order<T: Scalar>(a: Bound<T>, b: Bound<T>) -> Result<()> {
    let ordered = match (a, b) {
        (Bound::PosInf, Bound::PosInf) | (Bound::NegInf, Bound::NegInf) => true,
        (Bound::PosInf, _) | (_, Bound::NegInf) => false,
        _ => a.value() <= b.value(),
    };
    if ordered && !a.value().is_nan() && !b.value().is_nan() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "interval lower end {} exceeds upper end {}",
            a.value(),
            b.value()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    type M = GaussianMixture2<f64>;

    fn std_normal() -> M {
        M::from_params(1.0, 0.0, 1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(M::from_params(0.5, 0.0, 0.0, 1.0, 1.0).is_err());
        assert!(M::from_params(1.2, 0.0, 1.0, 1.0, 1.0).is_err());
        let c = GaussianComponent {
            weight: 0.6,
            mean: 0.0,
            stdev: 1.0,
        };
        assert!(M::new(c, c).is_err());
    }

    #[test]
    fn pdf_examples() {
        let m = M::from_params(1.0, 0.0, 1.0, 5.0, 1.0).unwrap();
        assert_abs_diff_eq!(m.pdf(0.0), 0.398_942_280_4, epsilon = 1e-10);
        let sym = M::from_params(0.5, -1.0, 1.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(sym.pdf(0.0), 0.241_970_724_5, epsilon = 1e-10);
    }

    #[test]
    fn pdf_matches_direct_formula() {
        let m = M::from_params(0.6, 0.8, 0.4, 2.1, 0.9).unwrap();
        let direct = |z: f64, mu: f64, s: f64| {
            (-(z - mu).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
        };
        let expected = 0.6 * direct(1.2, 0.8, 0.4) + 0.4 * direct(1.2, 2.1, 0.9);
        assert_abs_diff_eq!(m.pdf(1.2), expected, epsilon = 1e-14);
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(std_normal().cdf(0.0), 0.5);
        let m = M::from_params(0.3, -2.0, 0.5, 4.0, 3.0).unwrap();
        assert_abs_diff_eq!(m.cdf(4.0 + 12.0 * 3.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn quantile_examples() {
        assert_abs_diff_eq!(std_normal().quantile(0.5).unwrap(), 0.0, epsilon = 1e-12);
        let m = M::from_params(1.0, 3.0, 2.0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(
            m.quantile(0.975).unwrap(),
            3.0 + 1.959_963_984_540_054 * 2.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn quantile_rejects_closed_endpoints() {
        assert!(std_normal().quantile(0.0).is_err());
        assert!(std_normal().quantile(1.0).is_err());
        assert!(std_normal().quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_in_far_tails() {
        let m = M::from_params(0.4, -1.0, 0.2, 3.0, 0.5).unwrap();
        for p in [1e-12, 1e-6, 0.5, 1.0 - 1e-6, 1.0 - 1e-12] {
            let x = m.quantile(p).unwrap();
            let back = if p > 0.5 { 1.0 - m.sf(x) } else { m.cdf(x) };
            assert!((back - p).abs() < 1e-13, "p={p} back={back}");
        }
    }

    #[test]
    fn partial_expectation_examples() {
        let m = std_normal();
        let full = m
            .partial_expectation(Bound::NegInf, Bound::PosInf, 0.0)
            .unwrap();
        assert_abs_diff_eq!(full, 0.0, epsilon = 1e-15);
        let half = m
            .partial_expectation(Bound::Finite(0.0), Bound::PosInf, 0.0)
            .unwrap();
        assert_abs_diff_eq!(half, 0.398_942_280_4, epsilon = 1e-10);
    }

    #[test]
    fn reversed_interval_is_domain_error() {
        let m = std_normal();
        assert!(matches!(
            m.partial_expectation(Bound::Finite(1.0), Bound::Finite(0.0), 0.0),
            Err(Error::Domain(_))
        ));
        assert!(m.mass(Bound::PosInf, Bound::Finite(0.0), 0.0).is_err());
        assert!(m.mass(Bound::Finite(0.0), Bound::Finite(0.0), 0.0).is_ok());
    }

    #[test]
    fn mass_examples() {
        let m = M::from_params(0.2, 7.0, 0.1, -3.0, 2.0).unwrap();
        assert_eq!(m.mass(Bound::NegInf, Bound::PosInf, 1.7).unwrap(), 1.0);
        assert_eq!(
            std_normal()
                .mass(Bound::Finite(0.0), Bound::PosInf, 0.0)
                .unwrap(),
            0.5
        );
    }

    #[test]
    fn mean_examples() {
        assert_eq!(
            M::from_params(0.5, -1.0, 1.0, 1.0, 1.0).unwrap().mean(),
            0.0
        );
        assert_eq!(M::from_params(1.0, 2.5, 0.4, 0.0, 1.0).unwrap().mean(), 2.5);
        assert_abs_diff_eq!(
            M::from_params(0.6, 1.0, 0.2, -0.5, 0.7).unwrap().mean(),
            0.4,
            epsilon = 1e-15
        );
    }

    #[test]
    fn zero_weight_component_is_ignored() {
        let m = M::from_params(1.0, 0.0, 1.0, 1e6, 1e-9).unwrap();
        assert_abs_diff_eq!(
            m.quantile(0.9).unwrap(),
            1.281_551_565_544_600_5,
            epsilon = 1e-9
        );
    }

    #[test]
    fn works_in_single_precision() {
        let m = GaussianMixture2::<f32>::from_params(0.5, -1.0, 0.5, 1.0, 0.5).unwrap();
        assert!((m.cdf(0.0) - 0.5).abs() < 1e-6);
        let pe = m
            .partial_expectation(Bound::NegInf, Bound::PosInf, 0.25)
            .unwrap();
        assert!((pe + 0.25).abs() < 1e-6);
    }
}
