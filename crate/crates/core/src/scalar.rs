//! Real-or-complex scalar field used by every model evaluation.
//!
//! Dynamics, integration and the deterministic controller are written once,
//! generic over [`Scalar`], and instantiated either with `f64` for ordinary
//! simulation or with [`Complex`] for complex-step sensitivity runs.

use std::fmt::{self, Debug, Display};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

/// Numeric field that the models are evaluated over.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + AddAssign
    + SubAssign
{
    fn from_real(x: f64) -> Self;
    fn re(self) -> f64;
    fn im(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    /// `ln(1 + e^x)`. The complex version carries the imaginary part to first
    /// order, which is all a complex-step evaluation reads.
    fn softplus(self) -> Self;

    fn zero() -> Self {
        Self::from_real(0.0)
    }

    fn is_finite(self) -> bool {
        self.re().is_finite() && self.im().is_finite()
    }

    fn abs_re(self) -> f64 {
        self.re().abs()
    }
}

pub(crate) fn softplus_f64(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_real(x: f64) -> Self {
        x
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn im(self) -> f64 {
        0.0
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
    fn softplus(self) -> Self {
        softplus_f64(self)
    }
}

/// Complex number for complex-step evaluation.
///
/// Thin wrapper over [`Complex64`]. Division by a divisor with zero imaginary
/// part divides component-wise, so that a computation whose imaginary parts
/// are all zero reproduces the `f64` computation bit for bit.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct Complex(pub Complex64);

impl Complex {
    pub const fn new(re: f64, im: f64) -> Self {
        Complex(Complex64::new(re, im))
    }
}

impl Debug for Complex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{:+?}i", self.0.re, self.0.im)
    }
}

impl Display for Complex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Display::fmt(&self.0, f)
    }
}

impl Add for Complex {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Complex(self.0 + rhs.0)
    }
}

impl Sub for Complex {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Complex(self.0 - rhs.0)
    }
}

impl Mul for Complex {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Complex(self.0 * rhs.0)
    }
}

impl Mul<f64> for Complex {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        Complex(self.0 * rhs)
    }
}

impl Div for Complex {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let (a, b) = (self.0.re, self.0.im);
        let (c, d) = (rhs.0.re, rhs.0.im);
        if d == 0.0 {
            return Complex::new(a / c, b / c);
        }
        // Smith's algorithm
        if c.abs() >= d.abs() {
            let r = d / c;
            let den = c + d * r;
            Complex::new((a + b * r) / den, (b - a * r) / den)
        } else {
            let r = c / d;
            let den = c * r + d;
            Complex::new((a * r + b) / den, (b * r - a) / den)
        }
    }
}

impl Neg for Complex {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Complex(-self.0)
    }
}

impl AddAssign for Complex {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Complex {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        self.0 -= rhs.0;
    }
}

impl Scalar for Complex {
    #[inline]
    fn from_real(x: f64) -> Self {
        Complex::new(x, 0.0)
    }
    #[inline]
    fn re(self) -> f64 {
        self.0.re
    }
    #[inline]
    fn im(self) -> f64 {
        self.0.im
    }
    #[inline]
    fn sin(self) -> Self {
        Complex(self.0.sin())
    }
    #[inline]
    fn cos(self) -> Self {
        Complex(self.0.cos())
    }
    fn softplus(self) -> Self {
        Complex::new(softplus_f64(self.0.re), self.0.im * sigmoid_f64(self.0.re))
    }
}

/// Evaluates `Im f(x + ih) / h`, the complex-step derivative of `f` at `x`.
pub fn complex_step_derivative(f: impl Fn(Complex) -> Complex, x: f64, h: f64) -> f64 {
    f(Complex::new(x, h)).im() / h
}
