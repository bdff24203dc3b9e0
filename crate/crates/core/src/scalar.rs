//! Floating-point scalar abstraction for the signal and quantizer paths.
//!
//! Everything numeric in this crate is generic over [`Scalar`] so the same
//! pipeline runs in f32 or f64. File formats always store f32 little-endian;
//! the conversions live at the serialization boundary, not here.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar usable throughout the pipeline.
///
/// The bound set is what the DSP code actually needs: `Float` for arithmetic,
/// `FloatConst` for pi, `FftNum` so transforms run without re-dispatching,
/// and the usual thread/debug plumbing.
pub trait Scalar:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + Sum<Self>
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
    + rustfft::FftNum
{
    /// Converts from f64, rounding when `Self` is narrower.
    fn of_f64(v: f64) -> Self;

    /// Widens to f64 without loss.
    fn into_f64(self) -> f64;

    /// Converts a count or index; exact for every value this crate handles.
    fn of_usize(v: usize) -> Self {
        Self::of_f64(v as f64)
    }
}

impl Scalar for f32 {
    fn of_f64(v: f64) -> Self {
        v as f32
    }

    fn into_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    fn of_f64(v: f64) -> Self {
        v
    }

    fn into_f64(self) -> f64 {
        self
    }
}
