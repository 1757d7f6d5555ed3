//! Simulation lab for the `decaf` data-distribution decomposition attack on
//! federated learning.
//!
//! The library simulates FedAvg training over dense networks and implements a
//! passive server-side attack that recovers each user's per-class data
//! proportions from a recorded local model update. The pipeline has four
//! stages:
//!
//! 1. extract the target-layer gradient change `(θ_local − θ_global) / α`,
//! 2. identify null classes from the sign structure of that change,
//! 3. build per-class and unified gradient bases from a small auxiliary set,
//! 4. solve a nonnegative least-squares decomposition for the remaining
//!    class proportions.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the type
//! aliases at the crate root pin the `f64` instantiations used by the CLI
//! and the test suites.

pub mod attack;
pub mod data;
pub mod defense;
pub mod error;
pub mod fl;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod rng;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use error::{Error, Result};

/// Floating-point scalar the whole crate is generic over.
///
/// Implemented for `f32` and `f64`. The bound set is what the numerics
/// actually need: ordering and transcendentals from [`Float`], lossless
/// construction from literals via [`FromPrimitive`], and serde support so
/// models and round histories can be snapshotted.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Shorthand for converting an `f64` constant; panics only if the value
    /// does not fit, which cannot happen for finite constants in f32 range.
    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 constant representable in scalar type")
    }

    /// Shorthand for `usize` conversion (sample counts, dimensions).
    fn from_usize_lossy(value: usize) -> Self {
        Self::from_usize(value).expect("usize count representable in scalar type")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssignOps
        + Sum
        + Debug
        + Display
        + Default
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}

/// `f64` model, the default precision for experiments.
pub type Model64 = nn::Model<f64>;
/// `f32` model, for callers trading precision for memory.
pub type Model32 = nn::Model<f32>;
/// `f64` dataset.
pub type Dataset64 = data::Dataset<f64>;
/// `f64` composition (per-class proportion vector).
pub type Composition64 = data::Composition<f64>;
/// `f64` FedAvg round record.
pub type RoundRecord64 = fl::RoundRecord<f64>;
/// `f64` attack report entry.
pub type AttackEntry64 = attack::AttackEntry<f64>;
