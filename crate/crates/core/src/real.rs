//! Scalar abstraction shared by the value path (`f64`) and the gradient path
//! (forward-mode [`Dual`] numbers).
//!
//! The per-plane kernels in [`crate::geometry`] and [`crate::cone_model`] are
//! written once against [`Real`]. Each plane term depends on six scalars
//! (head xy, tail xy, raw scale, raw angle), so a `Dual<6>` evaluation yields
//! the complete local gradient of that term in one pass. The loss then
//! back-propagates through the (cheap) score/softmax layer by hand.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;

    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn atanh(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    /// `asin` with the argument clamped to `[-1, 1]`.
    fn asin_clamped(self) -> Self;
    /// Four-quadrant `atan(y / x)`; 0 at the origin.
    fn atan2(y: Self, x: Self) -> Self;
    fn abs(self) -> Self {
        if self.value() < 0.0 {
            -self
        } else {
            self
        }
    }
    fn ln(self) -> Self;
    fn ln_1p(self) -> Self;
    fn exp(self) -> Self;

    fn scale(self, c: f64) -> Self {
        self * Self::cst(c)
    }

    /// `1 − a² − b²`, accurate near the unit circle for `f64` values.
    fn one_minus_sq_sum(a: Self, b: Self) -> Self {
        Self::cst(1.0) - a * a - b * b
    }
}

pub(crate) fn two_sum(x: f64, y: f64) -> (f64, f64) {
    let s = x + y;
    let yv = s - x;
    (s, (x - (s - yv)) + (y - yv))
}

/// Compensated `1 − a² − b²`: products are split exactly with fused
/// multiply-add, so the only rounding is in the final sum.
pub fn one_minus_sq_sum_f64(a: f64, b: f64) -> f64 {
    let p1 = a * a;
    let e1 = a.mul_add(a, -p1);
    let p2 = b * b;
    let e2 = b.mul_add(b, -p2);
    let (s1, t1) = two_sum(1.0, -p1);
    let (s2, t2) = two_sum(s1, -p2);
    s2 + ((t1 + t2) - (e1 + e2))
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
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn atanh(self) -> Self {
        f64::atanh(self)
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
    fn asin_clamped(self) -> Self {
        self.clamp(-1.0, 1.0).asin()
    }
    #[inline]
    fn atan2(y: Self, x: Self) -> Self {
        y.atan2(x)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn one_minus_sq_sum(a: Self, b: Self) -> Self {
        one_minus_sq_sum_f64(a, b)
    }
}

/// Forward-mode dual number carrying `N` partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; N] }
    }

    /// Independent variable number `slot`.
    pub fn var(v: f64, slot: usize) -> Self {
        let mut d = [0.0; N];
        d[slot] = 1.0;
        Self { v, d }
    }

    /// Chain rule for a unary function with value `f` and derivative `df`.
    #[inline]
    fn chain(self, f: f64, df: f64) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x *= df;
        }
        Self { v: f, d }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for (a, b) in self.d.iter_mut().zip(o.d) {
            *a += b;
        }
        self
    }
}

impl<const N: usize> AddAssign for Dual<N> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self.v -= o.v;
        for (a, b) in self.d.iter_mut().zip(o.d) {
            *a -= b;
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.d[i] * o.v + self.v * o.d[i];
        }
        Self { v: self.v * o.v, d }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.v / o.v;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (self.d[i] - q * o.d[i]) / o.v;
        }
        Self { v: q, d }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.v, -1.0)
    }
}

impl<const N: usize> Real for Dual<N> {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    fn one_minus_sq_sum(a: Self, b: Self) -> Self {
        let mut out = Self::constant(one_minus_sq_sum_f64(a.v, b.v));
        for i in 0..N {
            out.d[i] = -2.0 * (a.v * a.d[i] + b.v * b.d[i]);
        }
        out
    }
    #[inline]
    fn value(self) -> f64 {
        self.v
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        // sqrt is only taken of squared norms; at zero the norm is treated as
        // locally constant.
        let ds = if s > 0.0 { 0.5 / s } else { 0.0 };
        self.chain(s, ds)
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        self.chain(t, 1.0 - t * t)
    }
    #[inline]
    fn atanh(self) -> Self {
        self.chain(self.v.atanh(), 1.0 / (1.0 - self.v * self.v))
    }
    #[inline]
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    #[inline]
    fn asin_clamped(self) -> Self {
        if self.v >= 1.0 || self.v <= -1.0 {
            Self::constant(self.v.clamp(-1.0, 1.0).asin())
        } else {
            self.chain(self.v.asin(), 1.0 / (1.0 - self.v * self.v).sqrt())
        }
    }
    #[inline]
    fn atan2(y: Self, x: Self) -> Self {
        let r2 = x.v * x.v + y.v * y.v;
        let mut d = [0.0; N];
        if r2 > 0.0 {
            for (k, dk) in d.iter_mut().enumerate() {
                *dk = (x.v * y.d[k] - y.v * x.d[k]) / r2;
            }
        }
        Self { v: y.v.atan2(x.v), d }
    }
    #[inline]
    fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }
    #[inline]
    fn ln_1p(self) -> Self {
        self.chain(self.v.ln_1p(), 1.0 / (1.0 + self.v))
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
}
