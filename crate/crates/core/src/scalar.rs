//! Scalar abstraction shared by plain evaluation (`f64`) and forward-mode
//! differentiation ([`Dual`]).
//!
//! Every geometric routine that feeds the energy is written once against
//! [`Real`]. Branches (min/max, abs, SAT axis selection) are decided on the
//! primal value; the derivative of whichever branch was taken propagates.
//! Ties resolve to the first argument, and `abs` has zero slope at zero.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Real:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn atan(self) -> Self;
    fn atan2(self, x: Self) -> Self;
    fn asin(self) -> Self;
    fn sqrt(self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn abs(self) -> Self {
        if self.value() < 0.0 {
            -self
        } else if self.value() > 0.0 {
            self
        } else {
            Self::zero()
        }
    }

    fn max(self, other: Self) -> Self {
        if other.value() > self.value() {
            other
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if other.value() < self.value() {
            other
        } else {
            self
        }
    }

    /// `max(self, 0)`, with zero slope when `self == 0`.
    fn pos(self) -> Self {
        if self.value() > 0.0 {
            self
        } else {
            Self::zero()
        }
    }

    fn powi2(self) -> Self {
        self * self
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn atan(self) -> Self {
        f64::atan(self)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    #[inline]
    fn asin(self) -> Self {
        f64::asin(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// Forward-mode dual number carrying `N` tangent directions.
#[derive(Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub re: f64,
    pub eps: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(re: f64) -> Self {
        Self { re, eps: [0.0; N] }
    }

    /// Independent variable number `index`.
    pub fn variable(re: f64, index: usize) -> Self {
        let mut eps = [0.0; N];
        eps[index] = 1.0;
        Self { re, eps }
    }

    #[inline]
    fn chain(self, re: f64, slope: f64) -> Self {
        let mut eps = self.eps;
        for e in &mut eps {
            *e *= slope;
        }
        Self { re, eps }
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.eps.iter().all(|e| e.is_finite())
    }
}

impl<const N: usize> fmt::Debug for Dual<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {:?}ε", self.re, self.eps)
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.re += rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps) {
            *a += b;
        }
        self
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.re -= rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps) {
            *a -= b;
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [0.0; N];
        for (k, e) in eps.iter_mut().enumerate() {
            *e = self.eps[k] * rhs.re + self.re * rhs.eps[k];
        }
        Self { re: self.re * rhs.re, eps }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        // primal must match plain f64 division bit for bit
        let re = self.re / rhs.re;
        let mut eps = [0.0; N];
        for (k, e) in eps.iter_mut().enumerate() {
            *e = (self.eps[k] - re * rhs.eps[k]) * inv;
        }
        Self { re, eps }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.re, -1.0)
    }
}

impl<const N: usize> AddAssign for Dual<N> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<const N: usize> SubAssign for Dual<N> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<const N: usize> MulAssign for Dual<N> {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: f64) -> Self {
        self.re += rhs;
        self
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: f64) -> Self {
        self.re -= rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.chain(self.re * rhs, rhs)
    }
}

impl<const N: usize> Div<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self.chain(self.re / rhs, 1.0 / rhs)
    }
}

impl<const N: usize> Real for Dual<N> {
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    fn value(self) -> f64 {
        self.re
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn atan(self) -> Self {
        self.chain(self.re.atan(), 1.0 / (1.0 + self.re * self.re))
    }
    fn atan2(self, x: Self) -> Self {
        let (y0, x0) = (self.re, x.re);
        let r2 = x0 * x0 + y0 * y0;
        let mut eps = [0.0; N];
        for (k, e) in eps.iter_mut().enumerate() {
            *e = (x0 * self.eps[k] - y0 * x.eps[k]) / r2;
        }
        Self { re: y0.atan2(x0), eps }
    }
    fn asin(self) -> Self {
        self.chain(self.re.asin(), 1.0 / (1.0 - self.re * self.re).sqrt())
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, 0.5 / s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d1(x: f64) -> Dual<1> {
        Dual::variable(x, 0)
    }

    #[test]
    fn elementary_derivatives() {
        let x = 0.7;
        assert!((d1(x).sin().eps[0] - x.cos()).abs() < 1e-15);
        assert!((d1(x).cos().eps[0] + x.sin()).abs() < 1e-15);
        assert!((d1(x).atan().eps[0] - 1.0 / (1.0 + x * x)).abs() < 1e-15);
        assert!((d1(x).asin().eps[0] - 1.0 / (1.0 - x * x).sqrt()).abs() < 1e-15);
        assert!((d1(x).sqrt().eps[0] - 0.5 / x.sqrt()).abs() < 1e-15);
        let q = d1(x) / (d1(x) * d1(x) + 1.0);
        let expect = (1.0 - x * x) / (1.0 + x * x).powi(2);
        assert!((q.eps[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn atan2_matches_finite_difference() {
        let f = |t: f64| (2.0 * t).atan2(1.0 - t);
        let t = 0.3;
        let d = (Dual::<1>::variable(t, 0) * 2.0).atan2(Dual::constant(1.0) - Dual::variable(t, 0));
        let fd = (f(t + 1e-6) - f(t - 1e-6)) / 2e-6;
        assert!((d.eps[0] - fd).abs() < 1e-8);
        assert_eq!(d.re, f(t));
    }

    #[test]
    fn kinks_take_documented_branch() {
        assert_eq!(d1(0.0).abs().eps[0], 0.0);
        assert_eq!(d1(-2.0).abs().eps[0], -1.0);
        assert_eq!(d1(0.0).pos().eps[0], 0.0);
        assert_eq!(d1(1e-12).pos().eps[0], 1.0);
        // ties keep the first argument
        let a = d1(1.0);
        let b = Dual::<1>::constant(1.0);
        assert_eq!(a.max(b).eps[0], 1.0);
        assert_eq!(b.min(a).eps[0], 0.0);
    }
}
