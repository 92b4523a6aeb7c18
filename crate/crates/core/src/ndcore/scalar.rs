use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Numeric type a [`Tape`](super::Tape) can be recorded in.
///
/// `f64` gives plain reverse mode. [`Dual`] runs the same reverse sweep with
/// a tangent attached to every value, which turns the gradient into a
/// Hessian-vector product.
pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn constant(x: f64) -> Self;
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;

    fn scale(self, c: f64) -> Self {
        self * Self::constant(c)
    }

    fn zero() -> Self {
        Self::constant(0.0)
    }

    fn one() -> Self {
        Self::constant(1.0)
    }

    /// Logistic sigmoid, evaluated without overflow for large |x|.
    fn sigmoid(self) -> Self {
        if self.value() >= 0.0 {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }

    /// `ln(1 + e^x)`, evaluated without overflow for large |x|.
    fn softplus(self) -> Self {
        let x = self.value();
        if x > 0.0 {
            self + (Self::one() + (-self).exp()).ln()
        } else {
            (Self::one() + self.exp()).ln()
        }
    }
}

impl Scalar for f64 {
    #[inline]
    fn constant(x: f64) -> Self {
        x
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn softplus(self) -> Self {
        if self > 0.0 {
            self + (-self).exp().ln_1p()
        } else {
            self.exp().ln_1p()
        }
    }
}

/// First-order dual number `re + eps·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    #[inline]
    pub const fn new(re: f64, eps: f64) -> Self {
        Self { re, eps }
    }
}

impl Add for Dual {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Dual::new(self.re + rhs.re, self.eps + rhs.eps)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        self.re += rhs.re;
        self.eps += rhs.eps;
    }
}

impl Sub for Dual {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Dual::new(self.re - rhs.re, self.eps - rhs.eps)
    }
}

impl Mul for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Dual::new(self.re * rhs.re, self.re * rhs.eps + self.eps * rhs.re)
    }
}

impl Div for Dual {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        let re = self.re * inv;
        Dual::new(re, (self.eps - re * rhs.eps) * inv)
    }
}

impl Neg for Dual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}

impl Scalar for Dual {
    #[inline]
    fn constant(x: f64) -> Self {
        Dual::new(x, 0.0)
    }
    #[inline]
    fn value(self) -> f64 {
        self.re
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        Dual::new(self.re * c, self.eps * c)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, e * self.eps)
    }
    #[inline]
    fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.eps / self.re)
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        Dual::new(t, (1.0 - t * t) * self.eps)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s, 0.5 * self.eps / s)
    }
    #[inline]
    fn sigmoid(self) -> Self {
        let s = if self.re >= 0.0 {
            1.0 / (1.0 + (-self.re).exp())
        } else {
            let e = self.re.exp();
            e / (1.0 + e)
        };
        Dual::new(s, s * (1.0 - s) * self.eps)
    }
    #[inline]
    fn softplus(self) -> Self {
        let re = self.re.softplus();
        let slope = Dual::constant(self.re).sigmoid().re;
        Dual::new(re, slope * self.eps)
    }
}
