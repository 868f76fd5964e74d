//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand_core::RngCore;
use serde::Serialize;

/// Floating point type the estimation machinery is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Serialize
    + Send
    + Sync
    + 'static
{
    /// Uniform draw on the open interval (0, 1), built from the high bits of one `u64`.
    fn unit_open<R: RngCore + ?Sized>(rng: &mut R) -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    #[inline]
    fn unit_open<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        // 52 bits, shifted half a step off zero so both ends stay representable
        ((rng.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
    }
}

impl Scalar for f32 {
    #[inline]
    fn unit_open<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        ((rng.next_u64() >> 41) as f32 + 0.5) * (1.0 / (1u32 << 23) as f32)
    }
}
