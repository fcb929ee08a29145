//! Scalar abstraction shared by the numerical modules.

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating-point scalar the solvers are generic over (`f32` or `f64`).
pub trait Real: RealField + Copy + ToPrimitive {
    /// Rescale a tolerance written for `f64` arithmetic to this type's machine precision.
    fn tol(f64_tol: f64) -> Self {
        let ratio = Self::default_epsilon().to_f64().unwrap_or(f64::EPSILON) / f64::EPSILON;
        lit(f64_tol * ratio)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Convert an `f64` constant into `T`.
#[inline]
pub fn lit<T: RealField>(x: f64) -> T {
    nalgebra::convert(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerances_scale_with_precision() {
        assert_eq!(f64::tol(1e-12), 1e-12);
        let t32 = f32::tol(1e-12);
        assert!(t32 > 1e-5 && t32 < 1e-3, "{t32}");
    }
}
