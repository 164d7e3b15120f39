//! Scalar abstraction used by the geodesic integrator and the double-root
//! solver, with a double-double implementation for runs where f64 round-off
//! is amplified by an unstable equilibrium.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn sin_cos(self) -> (Self, Self);

    fn abs(self) -> Self {
        if self < Self::from_f64(0.0) {
            -self
        } else {
            self
        }
    }

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn frac_pi_2() -> Self;

    /// Unit round-off of the representation.
    fn epsilon() -> f64;
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin_cos(self) -> (Self, Self) {
        f64::sin_cos(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn frac_pi_2() -> Self {
        std::f64::consts::FRAC_PI_2
    }
    fn epsilon() -> f64 {
        f64::EPSILON
    }
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`, roughly 32 significant digits.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const FRAC_PI_2: DoubleDouble = DoubleDouble {
        hi: 1.570_796_326_794_896_6,
        lo: 6.123_233_995_736_766e-17,
    };

    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }

    fn round_to_integer(self) -> f64 {
        let r = self.hi.round();
        if r == self.hi {
            // hi is integral; lo decides
            r + self.lo.round()
        } else {
            r
        }
    }

    fn sin_taylor(y: Self) -> Self {
        let y2 = y * y;
        let mut term = y;
        let mut sum = y;
        let mut k = 1.0;
        loop {
            term = -(term * y2) / Self::from_f64((k + 1.0) * (k + 2.0));
            k += 2.0;
            sum = sum + term;
            if term.hi.abs() < 1e-34 * sum.hi.abs().max(1e-300) || k > 60.0 {
                break;
            }
        }
        sum
    }

    fn cos_taylor(y: Self) -> Self {
        let y2 = y * y;
        let mut term = Self::one();
        let mut sum = Self::one();
        let mut k = 0.0;
        loop {
            term = -(term * y2) / Self::from_f64((k + 1.0) * (k + 2.0));
            k += 2.0;
            sum = sum + term;
            if term.hi.abs() < 1e-34 || k > 60.0 {
                break;
            }
        }
        sum
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, b: Self) -> Self {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Self { hi, lo }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, b: Self) -> Self {
        self + (-b)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, b: Self) -> Self {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, b: Self) -> Self {
        let q1 = self.hi / b.hi;
        let r = self - b * Self::from_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Self::from_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo } + Self::from_f64(q3)
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(std::cmp::Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            ord => ord,
        }
    }
}

impl Scalar for DoubleDouble {
    fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Self::from_f64(self.hi.sqrt());
        }
        let mut y = Self::from_f64(self.hi.sqrt());
        for _ in 0..2 {
            y = y + (self - y * y) / (Self::from_f64(2.0) * y);
        }
        y
    }

    fn sin_cos(self) -> (Self, Self) {
        let k = (self / Self::FRAC_PI_2).round_to_integer();
        let y = self - Self::FRAC_PI_2 * Self::from_f64(k);
        let (s, c) = (Self::sin_taylor(y), Self::cos_taylor(y));
        match (k as i64).rem_euclid(4) {
            0 => (s, c),
            1 => (c, -s),
            2 => (-s, -c),
            _ => (-c, s),
        }
    }

    fn frac_pi_2() -> Self {
        Self::FRAC_PI_2
    }

    fn epsilon() -> f64 {
        4.93e-32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Dd = DoubleDouble;

    #[test]
    fn arithmetic_carries_extra_digits() {
        let third = Dd::one() / Dd::from_f64(3.0);
        let back = third * Dd::from_f64(3.0) - Dd::one();
        assert!(back.to_f64().abs() < 1e-31);
        let tiny = Dd::one() + Dd::from_f64(1e-20);
        assert_eq!((tiny - Dd::one()).to_f64(), 1e-20);
    }

    #[test]
    fn sqrt_squares_back() {
        for x in [2.0, 27.0, 0.91, 1e-6, 1234.5] {
            let r = Dd::from_f64(x).sqrt();
            let err = (r * r - Dd::from_f64(x)).to_f64().abs();
            assert!(err < 1e-30 * x, "x={x} err={err}");
        }
    }

    #[test]
    fn trig_identities() {
        for x in [0.1, 0.3, 1.0, 1.5, 2.9, 3.7, -2.2, 6.0] {
            let (s, c) = Dd::from_f64(x).sin_cos();
            let one = s * s + c * c - Dd::one();
            assert!(one.to_f64().abs() < 1e-30, "x={x}");
            assert!((s.to_f64() - x.sin()).abs() < 1e-15);
            assert!((c.to_f64() - x.cos()).abs() < 1e-15);
        }
        let (s, c) = Dd::FRAC_PI_2.sin_cos();
        assert!((s - Dd::one()).to_f64().abs() < 1e-32);
        assert!(c.to_f64().abs() < 1e-32);
        let (s6, _) = (Dd::FRAC_PI_2 / Dd::from_f64(3.0)).sin_cos();
        assert!((s6 - Dd::from_f64(0.5)).to_f64().abs() < 1e-31);
    }
}
