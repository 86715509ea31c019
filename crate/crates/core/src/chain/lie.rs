//! Exponential and logarithm maps on SO(3) and SE(3).
//!
//! Twists are stored as 6-vectors `(linear; angular)`.

use nalgebra::{Isometry3, Matrix3, Quaternion, Translation3, UnitQuaternion, Vector3, Vector6};

use crate::Real;

/// Below this rotation angle the exponential switches to its Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;

pub fn hat<T: Real>(w: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(
        T::zero(),
        -w.z,
        w.y,
        w.z,
        T::zero(),
        -w.x,
        -w.y,
        w.x,
        T::zero(),
    )
}

pub fn linear<T: Real>(twist: &Vector6<T>) -> Vector3<T> {
    twist.fixed_rows::<3>(0).into_owned()
}

pub fn angular<T: Real>(twist: &Vector6<T>) -> Vector3<T> {
    twist.fixed_rows::<3>(3).into_owned()
}

pub fn twist<T: Real>(linear: &Vector3<T>, angular: &Vector3<T>) -> Vector6<T> {
    Vector6::new(
        linear.x, linear.y, linear.z, angular.x, angular.y, angular.z,
    )
}

/// Rotation vector to unit quaternion.
pub fn so3_exp<T: Real>(w: &Vector3<T>) -> UnitQuaternion<T> {
    let theta = w.norm();
    let (c, s) = if theta < T::lit(SMALL_ANGLE) {
        let t2 = theta * theta;
        (T::one() - t2 / T::lit(8.0), T::lit(0.5) - t2 / T::lit(48.0))
    } else {
        let half = theta * T::lit(0.5);
        (half.cos(), half.sin() / theta)
    };
    UnitQuaternion::new_unchecked(Quaternion::new(c, w.x * s, w.y * s, w.z * s))
}

/// Unit quaternion to rotation vector with angle in `[0, π]`.
pub fn so3_log<T: Real>(q: &UnitQuaternion<T>) -> Vector3<T> {
    let (w, v) = if q.w < T::zero() {
        (-q.w, -q.imag())
    } else {
        (q.w, q.imag())
    };
    let s = v.norm();
    if s < T::lit(SMALL_ANGLE) {
        // θ/s → 2/w as s → 0.
        v * (T::lit(2.0) / w)
    } else {
        let theta = T::lit(2.0) * s.atan2(w);
        v * (theta / s)
    }
}

/// Left Jacobian of SO(3), the matrix mapping body linear velocity to the
/// translation increment of the SE(3) exponential.
pub fn so3_left_jacobian<T: Real>(w: &Vector3<T>) -> Matrix3<T> {
    let theta = w.norm();
    let k = hat(w);
    let k2 = k * k;
    if theta < T::lit(SMALL_ANGLE) {
        return Matrix3::identity() + k * T::lit(0.5) + k2 / T::lit(6.0);
    }
    let t2 = theta * theta;
    let half_sin = (theta * T::lit(0.5)).sin();
    let a = T::lit(2.0) * half_sin * half_sin / t2;
    let b = if theta < T::lit(1e-3) {
        T::lit(1.0 / 6.0) - t2 / T::lit(120.0) + t2 * t2 / T::lit(5040.0)
    } else {
        (theta - theta.sin()) / (t2 * theta)
    };
    Matrix3::identity() + k * a + k2 * b
}

/// SE(3) exponential of a body twist `(v; ω)`.
pub fn se3_exp<T: Real>(xi: &Vector6<T>) -> Isometry3<T> {
    let v = linear(xi);
    let w = angular(xi);
    let rotation = so3_exp(&w);
    let translation = so3_left_jacobian(&w) * v;
    Isometry3::from_parts(Translation3::from(translation), rotation)
}

/// Lie bracket on se(3).
pub fn bracket<T: Real>(a: &Vector6<T>, b: &Vector6<T>) -> Vector6<T> {
    let (va, wa) = (linear(a), angular(a));
    let (vb, wb) = (linear(b), angular(b));
    twist(&(wa.cross(&vb) - wb.cross(&va)), &wa.cross(&wb))
}

/// Inverse derivative of the exponential, truncated after the second
/// commutator (enough for a fourth-order Munthe-Kaas scheme).
pub fn dexpinv<T: Real>(u: &Vector6<T>, v: &Vector6<T>) -> Vector6<T> {
    let uv = bracket(u, v);
    let uuv = bracket(u, &uv);
    v - uv * T::lit(0.5) + uuv / T::lit(12.0)
}

/// World-frame orientation error `log(R_d · Rᵀ)`.
pub fn rotation_error<T: Real>(
    desired: &UnitQuaternion<T>,
    actual: &UnitQuaternion<T>,
) -> Vector3<T> {
    so3_log(&(desired * actual.inverse()))
}
