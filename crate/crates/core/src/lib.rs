//! A numerical laboratory for a transient price-impact model of a large trader.
//!
//! The crate is organised bottom-up:
//!
//! * [`cadlag`] stores right-continuous paths with explicit jumps, their
//!   completed graphs and parametric representations.
//! * [`metrics`] computes uniform, J1 (upper bound), M1 and Lévy–Prokhorov
//!   distances between such paths.
//! * [`market`] simulates the unaffected price and its clock.
//! * [`impact`] solves for the market-impact process.
//! * [`proceeds`] evaluates the proceeds functional in all its equivalent forms
//!   together with the liquidation value.
//! * [`approx`] contains the strategy approximators.
//! * [`liquidation`] holds the optimal liquidation solvers.
//! * [`experiments`] drives batch studies for the `impactlab` binary.
//!
//! Path geometry and the distance computations are generic over [`Scalar`]
//! (`f32` or `f64`); the stochastic layers work in `f64`. The aliases at the
//! crate root fix the scalar to `f64`.

pub mod approx;
pub mod cadlag;
pub mod error;
pub mod experiments;
pub mod impact;
pub mod liquidation;
pub mod market;
pub mod metrics;
pub mod numerics;
pub mod proceeds;

pub use error::{Error, Result};

use num_traits::{Float, FloatConst, NumCast};
use std::fmt::{Debug, Display};

/// Floating point type usable for path storage and distance computations.
pub trait Scalar:
    Float + FloatConst + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn lit(v: f64) -> Self;

    /// Lossless widening used for error reporting and serialization.
    fn to_f64_lossy(self) -> f64;

    /// Tolerance used when comparing values that were produced by the same
    /// arithmetic on two routes.
    fn slack() -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn lit(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
    #[inline]
    fn slack() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    #[inline]
    fn lit(v: f64) -> Self {
        <f32 as NumCast>::from(v).unwrap_or(f32::NAN)
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
    #[inline]
    fn slack() -> Self {
        1e-5
    }
}

pub type Path = cadlag::CadlagPath<f64>;
pub type Graph = cadlag::CompletedGraph<f64>;
pub type Representation = cadlag::ParametricRepresentation<f64>;
pub type Breakpoint = cadlag::Breakpoint<f64>;
