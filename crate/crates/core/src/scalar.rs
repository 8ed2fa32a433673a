//! Scalar abstraction shared by the numeric routines.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the numeric code is generic over (`f32` or `f64`).
///
/// `Display`/`FromStr` are required so values can be persisted as text
/// without loss: Rust prints the shortest representation that parses back
/// to the same bits.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + FromStr + Default + Send + Sync + 'static
{
    /// Lossless-or-nearest conversion from `f64`.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any float")
    }

    /// Conversion to `f64` (exact for `f32` and `f64`).
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }

    /// Conversion from a count.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count fits in float")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Kelvin offset of the Celsius scale.
pub const KELVIN_OFFSET: f64 = 273.15;

/// Stefan-Boltzmann constant in W/(m^2 K^4).
pub const STEFAN_BOLTZMANN: f64 = 5.67e-8;
