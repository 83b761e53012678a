//! Scalar abstraction: the numeric kernels in this crate are generic over the
//! floating-point type, so every simulation and model runs in either `f32` or
//! `f64` precision. Concrete aliases for the default `f64` instantiation live
//! at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable throughout the simulation and model kernels.
///
/// Random draws are produced in `f64` and narrowed with [`Real::of`], so an
/// `f32` run sees the same underlying random sequence as an `f64` run.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum<Self>
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts from `f64`, the type all random draws and tabulated constants
    /// are produced in.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 must convert to a Real scalar")
    }

    /// Widens to `f64` for reporting and serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real scalar must convert to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
