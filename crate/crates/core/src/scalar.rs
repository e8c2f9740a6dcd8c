//! Scalar abstraction: every numeric routine in this crate is generic over a
//! floating-point type implementing [`Scalar`] (in practice `f32` or `f64`).

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the crate.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Converts an `f64` constant into the working scalar type.
#[inline]
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("constant not representable in scalar type")
}

/// Tolerance for membership decisions such as "x lies in F^{-1}(y)".
pub fn membership_tol<T: Scalar>() -> T {
    cast(1e-9)
}

/// Tolerance for "this pair lies on the graph" decisions.
pub fn graph_tol<T: Scalar>() -> T {
    cast(1e-8)
}

/// Exclusion band around exact solutions used by the modulus estimators.
pub fn exclusion_band<T: Scalar>() -> T {
    cast(1e-6)
}

/// Value reported by estimators in place of an infinite modulus.
pub fn cap_value<T: Scalar>() -> T {
    cast(1e6)
}
