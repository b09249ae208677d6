//! Streaming attention-memory primitives.
//!
//! Two interchangeable memories answer per-pixel queries against everything
//! seen so far in a frame stream:
//!
//! * [`gc`], a global context: every frame is summarized into a fixed
//!   `C_N x C_M` matrix and folded into a running mean, so state and read
//!   cost stay constant however long the stream runs.
//! * [`stm`], a space-time memory: per-location keys and values of every
//!   frame are concatenated, and reads compute a dense affinity against all
//!   stored locations, so state and read cost grow linearly with time.
//!
//! With no normalization the two are numerically equivalent
//! (`(q K^T) V / t == q (K^T V / t)` by associativity); [`equivalence`]
//! drives both on identical inputs and measures the difference. [`cost`]
//! carries the closed-form multiplication and byte models plus instrumented
//! cross-checks, and [`pipeline`] runs a toy mask-propagation loop on
//! [`video`]-generated synthetic clips.
//!
//! The crate is `no_std` (alloc required); IO, file formats, and the CLI
//! live in the companion `gc-cli` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod cost;
pub mod counters;
pub mod equivalence;
pub mod error;
pub mod gc;
pub mod matrix;
pub mod pipeline;
pub mod projection;
pub mod seeded;
pub mod stm;
pub mod tolerances;
pub mod video;

pub use counters::OpCounters;
pub use error::{Error, Result};
pub use matrix::{Dtype, Matrix, Real};
pub use projection::{FeatureMap, NormalizationMode, ProjectionMode, ProjectionSet, ShapeConfig};
