//! Scalar abstraction shared by every numerical module.

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Real scalar the kinematic and control math is generic over.
///
/// Implemented for `f32` and `f64`. Scenario files, traces and the live
/// protocol are always `f64`.
pub trait Real: RealField + Copy + ToPrimitive {
    /// Converts an `f64` literal (tolerances, gains) into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Lossy conversion used for diagnostics and error payloads.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
