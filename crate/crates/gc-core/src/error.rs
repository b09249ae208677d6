//! Error type shared by all modules.

use alloc::string::String;
use core::fmt;

/// Errors emitted by matrix, projection, memory, and pipeline operations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Error {
    /// Two operands have incompatible shapes. Carries both shapes and the
    /// operation that rejected them.
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// A constructor received a buffer whose length does not match the
    /// declared shape.
    DataLength { expected: usize, got: usize },
    /// A feature map's channel count does not match the projection weights
    /// it was paired with.
    ChannelMismatch {
        role: &'static str,
        expected: usize,
        got: usize,
    },
    /// A read was issued against a memory that has absorbed no frames yet.
    EmptyMemory { op: &'static str },
    /// A configuration is internally inconsistent (illegal normalization
    /// mode, degenerate video spec, zero dimension, ...).
    InvalidConfig(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, left, right } => write!(
                f,
                "{op}: incompatible shapes {}x{} and {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::DataLength { expected, got } => {
                write!(f, "data length {got} does not match shape (expected {expected})")
            }
            Error::ChannelMismatch { role, expected, got } => write!(
                f,
                "{role} projection expects {expected} input channels, feature map has {got}"
            ),
            Error::EmptyMemory { op } => {
                write!(f, "{op}: memory holds no frames; absorb a reference frame first")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
