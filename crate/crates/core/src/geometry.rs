//! Poincaré-disk kernel (curvature −1): Möbius addition, exponential and
//! logarithmic maps, geodesic distance, entailment-cone angles and apertures,
//! and plane rotations.
//!
//! Every entity lives in a product of 2D disks, so all kernels here are
//! two-dimensional. The generic functions in [`kernel`] are shared by the
//! `f64` value path and the dual-number gradient path; the free functions at
//! module level are the checked `f64` API. [`exp_map`] there is a compensated
//! variant that stays within a few ulps close to the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Margin kept between optimizer iterates and both the origin and the
/// boundary of the disk.
pub const BALL_EPS: f64 = 1e-5;

/// A point of one Poincaré disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint<T = f64> {
    pub x: T,
    pub y: T,
}

/// A tangent vector at an implicit base point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentVector<T = f64> {
    pub x: T,
    pub y: T,
}

impl<T: Real> PlanePoint<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn norm_sq(self) -> T {
        self.x * self.x + self.y * self.y
    }

    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    pub fn scale(self, c: T) -> Self {
        Self::new(self.x * c, self.y * c)
    }

    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }

    pub fn origin() -> Self {
        Self::new(T::cst(0.0), T::cst(0.0))
    }

    pub fn as_tangent(self) -> TangentVector<T> {
        TangentVector { x: self.x, y: self.y }
    }

    pub fn value(self) -> PlanePoint<f64> {
        PlanePoint::new(self.x.value(), self.y.value())
    }
}

impl<T: Real> TangentVector<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> T {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    pub fn scale(self, c: T) -> Self {
        Self::new(self.x * c, self.y * c)
    }

    pub fn as_point(self) -> PlanePoint<T> {
        PlanePoint { x: self.x, y: self.y }
    }
}

/// Aperture constant of the entailment cones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeParams {
    pub k: f64,
}

impl Default for ConeParams {
    fn default() -> Self {
        Self { k: 0.1 }
    }
}

impl ConeParams {
    pub fn new(k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Config(format!("aperture constant must be positive, got {k}")));
        }
        Ok(Self { k })
    }

    /// Apex norm below which the half aperture saturates at π/2.
    pub fn saturation_radius(&self) -> f64 {
        // k(1 - r²)/r = 1  =>  k r² + r - k = 0
        (-1.0 + (1.0 + 4.0 * self.k * self.k).sqrt()) / (2.0 * self.k)
    }
}

/// Unchecked generic kernels. Callers guarantee the preconditions.
pub mod kernel {
    use super::{PlanePoint, TangentVector};
    use crate::real::Real;

    pub fn mobius_add<T: Real>(x: PlanePoint<T>, y: PlanePoint<T>) -> PlanePoint<T> {
        let xy = x.dot(y);
        let xx = x.norm_sq();
        let yy = y.norm_sq();
        let one = T::cst(1.0);
        let two_xy = xy + xy;
        let a = one + two_xy + yy;
        let b = one - xx;
        let den = one + two_xy + xx * yy;
        PlanePoint::new((a * x.x + b * y.x) / den, (a * x.y + b * y.y) / den)
    }

    pub fn exp_map<T: Real>(base: PlanePoint<T>, v: TangentVector<T>) -> PlanePoint<T> {
        let n = v.norm();
        if n.value() == 0.0 {
            return base;
        }
        let conformal = T::one_minus_sq_sum(base.x, base.y);
        let step = (n / conformal).tanh() / n;
        mobius_add(base, v.scale(step).as_point())
    }

    pub fn log_map<T: Real>(base: PlanePoint<T>, y: PlanePoint<T>) -> TangentVector<T> {
        let (w, n, at) = gyro_atanh(base, y);
        if n.value() == 0.0 {
            return TangentVector::new(T::cst(0.0), T::cst(0.0));
        }
        let conformal = T::one_minus_sq_sum(base.x, base.y);
        let c = conformal * at / n;
        TangentVector::new(w.x * c, w.y * c)
    }

    /// Exponential map at the origin: `tanh(|v|) v / |v|`.
    pub fn exp0<T: Real>(v: TangentVector<T>) -> PlanePoint<T> {
        let n = v.norm();
        if n.value() == 0.0 {
            return PlanePoint::origin();
        }
        v.scale(n.tanh() / n).as_point()
    }

    /// Logarithmic map at the origin: `atanh(|y|) y / |y|`.
    pub fn log0<T: Real>(y: PlanePoint<T>) -> TangentVector<T> {
        let n = y.norm();
        if n.value() == 0.0 {
            return TangentVector::new(T::cst(0.0), T::cst(0.0));
        }
        y.as_tangent().scale(n.atanh() / n)
    }

    /// Smallest `1 − |−x ⊕ y|²` fed to the logarithm; keeps distances
    /// finite when rounding puts a point on the boundary.
    const MIN_CONFORMAL: f64 = 1e-300;

    /// `−x ⊕ y` and `atanh|−x ⊕ y|`. The complement `1 − |w|²` comes from
    /// `(1 − |x|²)(1 − |y|²) / (1 − 2⟨x,y⟩ + |x|²|y|²)`, which avoids the
    /// cancellation of `1 − |w|` near the boundary.
    fn gyro_atanh<T: Real>(x: PlanePoint<T>, y: PlanePoint<T>) -> (PlanePoint<T>, T, T) {
        let w = mobius_add(x.neg(), y);
        let n = w.norm();
        if n.value() < 0.5 {
            return (w, n, n.atanh());
        }
        let xy = x.dot(y);
        let den = T::cst(1.0) - xy - xy + x.norm_sq() * y.norm_sq();
        let comp = T::one_minus_sq_sum(x.x, x.y) * T::one_minus_sq_sum(y.x, y.y) / den;
        let comp = if comp.value() < MIN_CONFORMAL { T::cst(MIN_CONFORMAL) } else { comp };
        // atanh(n) = ln(1 + n) − ½ ln(1 − n²)
        let at = n.ln_1p() - comp.ln().scale(0.5);
        (w, n, at)
    }

    pub fn distance<T: Real>(x: PlanePoint<T>, y: PlanePoint<T>) -> T {
        gyro_atanh(x, y).2.scale(2.0)
    }

    /// Angle at `x` between the outward ray `ox` and the geodesic `xy`.
    /// The geodesic leaves `x` along `−x ⊕ y`, whose numerator is
    /// `(1 − |x|²) y − (1 − 2⟨x,y⟩ + |y|²) x`; `atan2` of its cross and dot
    /// products with `x` stays accurate near 0 and π. Returns 0 when `y == x`.
    pub fn angle_at<T: Real>(x: PlanePoint<T>, y: PlanePoint<T>) -> T {
        let xy = x.dot(y);
        let xx = x.norm_sq();
        let one = T::cst(1.0);
        let cross = T::one_minus_sq_sum(x.x, x.y) * (x.x * y.y - x.y * y.x);
        let dot = xy * (one + xx) - xx * (one + y.norm_sq());
        T::atan2(cross.abs(), dot)
    }

    /// Half aperture of the cone at `x`; the `asin` argument is clamped to 1.
    pub fn half_aperture<T: Real>(x: PlanePoint<T>, k: f64) -> T {
        let n_sq = x.norm_sq();
        let arg = (T::cst(1.0) - n_sq).scale(k) / n_sq.sqrt();
        arg.asin_clamped()
    }

    pub fn givens_rotate<T: Real>(theta: T, v: TangentVector<T>) -> TangentVector<T> {
        let (s, c) = (theta.sin(), theta.cos());
        TangentVector::new(c * v.x - s * v.y, s * v.x + c * v.y)
    }
}

fn check_inside(p: PlanePoint, what: &str) -> Result<()> {
    let n = p.norm();
    if !(n < 1.0) {
        return Err(Error::domain(format!("{what} {p:?} has norm {n} >= 1")));
    }
    Ok(())
}

fn check_not_origin(p: PlanePoint, what: &str) -> Result<()> {
    if p.x == 0.0 && p.y == 0.0 {
        return Err(Error::domain(format!("{what} is the origin")));
    }
    Ok(())
}

/// Möbius addition `x ⊕ y`.
pub fn mobius_add(x: PlanePoint, y: PlanePoint) -> Result<PlanePoint> {
    check_inside(x, "left operand")?;
    check_inside(y, "right operand")?;
    Ok(kernel::mobius_add(x, y))
}

/// Exponential map at `base`; returns `base` for the zero vector.
pub fn exp_map(base: PlanePoint, v: TangentVector) -> Result<PlanePoint> {
    check_inside(base, "base point")?;
    if !(v.x.is_finite() && v.y.is_finite()) {
        return Err(Error::domain(format!("tangent vector {v:?} is not finite")));
    }
    Ok(compensated_exp_map(base, v))
}

/// `a·b + c·d` as an unevaluated sum `hi + lo`.
fn dot2(a: f64, b: f64, c: f64, d: f64) -> (f64, f64) {
    let p = a * b;
    let ep = a.mul_add(b, -p);
    let q = c * d;
    let eq = c.mul_add(d, -q);
    let (s, es) = crate::real::two_sum(p, q);
    (s, es + ep + eq)
}

/// `b ⊕ t·e` in complex form `(b + u) / (1 + b̄u)` with `t = 1 − δ`.
/// `δ` is computed without forming `t` and the sums that cancel near the
/// boundary are carried in double-double, so the result is within a few
/// ulps even when `1 − |y|²` is tiny.
fn compensated_exp_map(base: PlanePoint, v: TangentVector) -> PlanePoint {
    let n = v.x.hypot(v.y);
    if n == 0.0 {
        return base;
    }
    let s = n / crate::real::one_minus_sq_sum_f64(base.x, base.y);
    let delta = if s > 0.5 {
        let q = (-2.0 * s).exp();
        2.0 * q / (1.0 + q)
    } else {
        1.0 - s.tanh()
    };
    let (ex, ey) = (v.x / n, v.y / n);
    let (bx, by) = (base.x, base.y);

    // b̄e = p + iq
    let (p, p_lo) = dot2(bx, ex, by, ey);
    let (q, q_lo) = dot2(bx, ey, -by, ex);
    let (m_re, m_re_lo) = crate::real::two_sum(1.0, p);
    let m_re = m_re + (m_re_lo + p_lo - delta * p);
    let m_im = (q + q_lo) * (1.0 - delta);

    let (n_re, n_re_lo) = crate::real::two_sum(bx, ex);
    let n_re = n_re + (n_re_lo - delta * ex);
    let (n_im, n_im_lo) = crate::real::two_sum(by, ey);
    let n_im = n_im + (n_im_lo - delta * ey);

    let den = m_re * m_re + m_im * m_im;
    PlanePoint::new((n_re * m_re + n_im * m_im) / den, (n_im * m_re - n_re * m_im) / den)
}

/// Logarithmic map at `base`; the exact inverse of [`exp_map`].
pub fn log_map(base: PlanePoint, y: PlanePoint) -> Result<TangentVector> {
    check_inside(base, "base point")?;
    check_inside(y, "target point")?;
    Ok(kernel::log_map(base, y))
}

/// Error that one unit of rounding in the coordinates of `y` can cause in
/// `log_map(base, y)`: `(1 − |b|²) ε |y|² / (1 − |y|²)`. Near the boundary
/// this exceeds any fixed tolerance, whatever the evaluation order.
pub fn log_map_rounding_floor(base: PlanePoint, y: PlanePoint) -> f64 {
    let comp = crate::real::one_minus_sq_sum_f64(y.x, y.y);
    crate::real::one_minus_sq_sum_f64(base.x, base.y) * f64::EPSILON * y.norm_sq() / comp
}

pub fn distance(x: PlanePoint, y: PlanePoint) -> Result<f64> {
    check_inside(x, "first point")?;
    check_inside(y, "second point")?;
    Ok(kernel::distance(x, y))
}

/// Angle of `y` at `x`, in `[0, π]`.
pub fn angle_at(x: PlanePoint, y: PlanePoint) -> Result<f64> {
    check_inside(x, "apex")?;
    check_inside(y, "target point")?;
    check_not_origin(x, "apex")?;
    Ok(kernel::angle_at(x, y))
}

/// Half aperture of the entailment cone at `x`, in `(0, π/2]`.
pub fn half_aperture(x: PlanePoint, params: ConeParams) -> Result<f64> {
    check_inside(x, "apex")?;
    check_not_origin(x, "apex")?;
    Ok(kernel::half_aperture(x, params.k))
}

pub fn givens_rotate(theta: f64, v: TangentVector) -> TangentVector {
    kernel::givens_rotate(theta, v)
}

/// Radially clamps `x` into the annulus `eps <= |x| <= 1 - eps`. The origin
/// maps to `(eps, 0)`.
pub fn project_to_ball(x: PlanePoint, eps: f64) -> PlanePoint {
    let n = x.norm();
    if n == 0.0 {
        PlanePoint::new(eps, 0.0)
    } else if n < eps {
        x.scale(eps / n)
    } else if n > 1.0 - eps {
        x.scale((1.0 - eps) / n)
    } else {
        x
    }
}
