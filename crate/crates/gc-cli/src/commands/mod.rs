//! Subcommand implementations. Each returns `Ok(pass)`, which the binary
//! maps to the exit code; `Err` is reserved for malformed configuration.

pub mod cost;
pub mod equiv;
pub mod segment;
pub mod stream;

use clap::ValueEnum;
use gc_core::matrix::Dtype;
use gc_core::pipeline::Backend;
use gc_core::projection::{NormalizationMode, ProjectionMode};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DtypeArg {
    F32,
    F64,
}

impl From<DtypeArg> for Dtype {
    fn from(d: DtypeArg) -> Dtype {
        match d {
            DtypeArg::F32 => Dtype::F32,
            DtypeArg::F64 => Dtype::F64,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Linear,
    Conv3x3,
}

impl From<ModeArg> for ProjectionMode {
    fn from(m: ModeArg) -> ProjectionMode {
        match m {
            ModeArg::Linear => ProjectionMode::Linear,
            ModeArg::Conv3x3 => ProjectionMode::Conv3x3,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NormArg {
    None,
    DoubleSoftmax,
    AffinitySoftmax,
}

impl From<NormArg> for NormalizationMode {
    fn from(n: NormArg) -> NormalizationMode {
        match n {
            NormArg::None => NormalizationMode::None,
            NormArg::DoubleSoftmax => NormalizationMode::GcDoubleSoftmax,
            NormArg::AffinitySoftmax => NormalizationMode::StmAffinitySoftmax,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BackendArg {
    Gc,
    Stm,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Backend {
        match b {
            BackendArg::Gc => Backend::Gc,
            BackendArg::Stm => Backend::Stm,
        }
    }
}
