//! Deterministic dense-matrix arithmetic and seeded randomness.
//!
//! Every operation here is bit-reproducible: accumulation orders are fixed,
//! the generator algorithm is pinned, and no thread-dependent reductions are
//! used. All stored values are finite; an operation whose result would
//! contain NaN or infinity reports [`crate::Error::NonFinite`] instead.

mod matrix;
mod rng;

pub use matrix::Matrix;
pub use rng::SplitMix64;
