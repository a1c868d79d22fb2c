//! Scalar abstraction for the distribution and battery math.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar usable by the closed-form distribution calculus.
///
/// Everything the mixture and battery code needs beyond `Float` is the
/// complementary error function, which `num_traits` does not provide.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Complementary error function `erfc(x) = 1 - erf(x)`.
    fn erfc(self) -> Self;

    /// Converts an `f64` literal. Panics only for types that cannot hold it.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    /// Tolerance used for structural checks (weight sums and the like).
    #[inline]
    fn structural_tol() -> Self {
        Self::lit(1e-12).max(Self::epsilon() * Self::lit(16.0))
    }
}

impl Scalar for f64 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Scalar for f32 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

/// Standard normal density.
#[inline]
pub fn std_pdf<T: Scalar>(x: T) -> T {
    if x.is_infinite() {
        return T::zero();
    }
    let inv_sqrt_2pi = T::FRAC_1_SQRT_2() * T::FRAC_2_SQRT_PI() * T::lit(0.5);
    inv_sqrt_2pi * (-(x * x) * T::lit(0.5)).exp()
}

/// Standard normal cumulative distribution `Φ(x)`.
#[inline]
pub fn std_cdf<T: Scalar>(x: T) -> T {
    if x.is_infinite() {
        return if x > T::zero() { T::one() } else { T::zero() };
    }
    T::lit(0.5) * (-x * T::FRAC_1_SQRT_2()).erfc()
}

/// Standard normal survival function `1 - Φ(x)`, accurate in the upper tail.
#[inline]
pub fn std_sf<T: Scalar>(x: T) -> T {
    std_cdf(-x)
}

/// `Φ(b) - Φ(a)` for `a <= b`, evaluated on whichever tail avoids cancellation.
#[inline]
pub fn std_interval<T: Scalar>(a: T, b: T) -> T {
    if a >= T::zero() {
        std_sf(a) - std_sf(b)
    } else if b <= T::zero() {
        std_cdf(b) - std_cdf(a)
    } else {
        T::one() - std_cdf(a) - std_sf(b)
    }
}
