//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumCast};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar usable by the log-domain and scaling-law code: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumCast
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossless widening used for formatting and parsing.
    fn to_f64_lossless(self) -> f64;

    /// Nearest representable value.
    fn from_f64_nearest(v: f64) -> Self;

    fn lit(v: f64) -> Self {
        Self::from_f64_nearest(v)
    }
}

impl Scalar for f32 {
    fn to_f64_lossless(self) -> f64 {
        self as f64
    }
    fn from_f64_nearest(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    fn to_f64_lossless(self) -> f64 {
        self
    }
    fn from_f64_nearest(v: f64) -> Self {
        v
    }
}
