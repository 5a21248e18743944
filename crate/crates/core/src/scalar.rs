use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar used by the metric and attention-map math.
///
/// Implemented for `f32` and `f64`; the crate root exposes `f64` aliases
/// for the common case.
pub trait Scalar:
    'static + Float + FromPrimitive + NumAssign + Default + Debug + Display + Send + Sync
{
    /// Lossless for the small counts and weights the metrics deal in.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("scalar conversion from f64")
    }

    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("scalar conversion from usize")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
