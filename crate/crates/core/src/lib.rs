//! A finite-dimensional laboratory for Hölder metric regularity of set-valued
//! mappings: grid-based estimators for regularity and Hölder-continuity
//! moduli, slope and coderivative condition checkers, a perturbation engine
//! around the Lyusternik-Graves estimate, and a Josephy-Newton solver for
//! generalized equations with quadratic-rate diagnostics.
//!
//! Everything numeric is generic over the scalar type through
//! [`scalar::Scalar`]; the aliases below fix `f64` for everyday use.

pub mod conditions;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod mappings;
pub mod moduli;
pub mod newton;
pub mod perturbation;
pub mod scalar;

pub use geometry::{Error, ExtReal, ParametricGamma, Polyhedron, Vector};
pub use linalg::Matrix;
pub use mappings::{EvalRegion, JacobianFn, SetValuedMap, VectorFn};
pub use scalar::Scalar;

/// `f64` vector.
pub type Vector64 = geometry::Vector<f64>;
/// `f64` matrix.
pub type Matrix64 = linalg::Matrix<f64>;
/// `f64` extended real.
pub type ExtReal64 = geometry::ExtReal<f64>;
/// `f64` set-valued mapping.
pub type SetValuedMap64 = mappings::SetValuedMap<f64>;
/// `f64` modulus query.
pub type ModulusQuery64 = moduli::ModulusQuery<f64>;

/// `f32` vector.
pub type Vector32 = geometry::Vector<f32>;
/// `f32` matrix.
pub type Matrix32 = linalg::Matrix<f32>;
/// `f32` extended real.
pub type ExtReal32 = geometry::ExtReal<f32>;
/// `f32` set-valued mapping.
pub type SetValuedMap32 = mappings::SetValuedMap<f32>;
