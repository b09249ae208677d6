//! Closed-form read-cost and memory models with instrumented cross-checks.
//!
//! Multiplication count is the FLOP unit: the per-read formulas are
//! `C_N * C_M * H*W` for a global-context read and
//! `H*W * C_N * (T*H*W) + H*W * (T*H*W) * C_M` for a memory read against
//! `T` stored frames. Measured counts from instrumented runs must equal the
//! formulas exactly: [`measure_gc_read`] and [`measure_stm_read`] assert
//! cheap configurations, and the formulas then extrapolate (the memory-read
//! cost is exactly linear in `T`).
//!
//! The byte model uses the read's working set: for the global context the
//! persistent `C_N * C_M` state plus query and output transients; for the
//! memory backend the stored keys/values plus the materialized affinity and
//! the output.

use crate::counters::OpCounters;
use crate::error::Result;
use crate::gc::{self, GlobalContext};
use crate::matrix::{Dtype, Real};
use crate::projection::{FeatureMap, NormalizationMode, ProjectionMode, ProjectionSet, ShapeConfig};
use crate::seeded;
use crate::stm::{self, StmMemory};
use alloc::vec::Vec;

/// Which memory backend a report row describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ModuleKind {
    Gc,
    Stm,
}

impl core::fmt::Display for ModuleKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModuleKind::Gc => write!(f, "gc"),
            ModuleKind::Stm => write!(f, "stm"),
        }
    }
}

/// Dimensions of one cost sweep point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostConfig {
    pub height: usize,
    pub width: usize,
    pub key_channels: usize,
    pub value_channels: usize,
    pub dtype: Dtype,
}

impl CostConfig {
    pub fn locations(&self) -> u64 {
        (self.height * self.width) as u64
    }
}

/// How a report row's measured count was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MeasurementMode {
    /// Counters from an instrumented read at the full configuration.
    Direct,
    /// `T` times a directly measured single-frame read; exact because the
    /// read cost is linear in `T`.
    ExtrapolatedFromT1,
}

/// Analytic and measured costs for one read configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CostReport {
    pub module: ModuleKind,
    pub frames: u64,
    pub analytic_mults: u64,
    pub measured_mults: u64,
    pub measurement: MeasurementMode,
    pub persistent_bytes: u64,
    pub transient_bytes: u64,
    pub config: CostConfig,
}

/// Multiplications of one global-context read: `C_N * C_M * H*W`.
/// Independent of how many frames were absorbed.
pub fn gc_read_mults(locations: u64, key_channels: u64, value_channels: u64) -> u64 {
    key_channels * value_channels * locations
}

/// Multiplications of one memory read against `frames` stored frames:
/// affinity `H*W * C_N * (T*H*W)` plus aggregation `H*W * (T*H*W) * C_M`.
pub fn stm_read_mults(locations: u64, key_channels: u64, value_channels: u64, frames: u64) -> u64 {
    let stored = frames * locations;
    locations * key_channels * stored + locations * stored * value_channels
}

/// Persistent and transient floats of one read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MemoryFootprint {
    pub persistent_floats: u64,
    pub transient_floats: u64,
}

impl MemoryFootprint {
    pub fn persistent_bytes(&self, dtype: Dtype) -> u64 {
        self.persistent_floats * dtype.width_bytes()
    }

    pub fn transient_bytes(&self, dtype: Dtype) -> u64 {
        self.transient_floats * dtype.width_bytes()
    }

    pub fn total_bytes(&self, dtype: Dtype) -> u64 {
        self.persistent_bytes(dtype) + self.transient_bytes(dtype)
    }
}

/// Byte model of one read. Global context: persistent `C_N * C_M`,
/// transient queries plus output. Memory backend: persistent
/// `T * H*W * (C_N + C_M)`, transient affinity plus output.
pub fn memory_model(module: ModuleKind, config: &CostConfig, frames: u64) -> MemoryFootprint {
    let hw = config.locations();
    let c_n = config.key_channels as u64;
    let c_m = config.value_channels as u64;
    match module {
        ModuleKind::Gc => MemoryFootprint {
            persistent_floats: c_n * c_m,
            transient_floats: hw * c_n + hw * c_m,
        },
        ModuleKind::Stm => MemoryFootprint {
            persistent_floats: frames * hw * (c_n + c_m),
            transient_floats: hw * frames * hw + hw * c_m,
        },
    }
}

fn projections_for<T: Real>(config: &CostConfig, seed: u64) -> (ShapeConfig, ProjectionSet<T>) {
    // Read cost does not depend on encoder input widths; use small ones.
    let shape = ShapeConfig {
        height: config.height,
        width: config.width,
        context_channels: 3,
        query_channels: 2,
        key_channels: config.key_channels,
        value_channels: config.value_channels,
    };
    let p = ProjectionSet::seeded(&shape, ProjectionMode::Linear, seed);
    (shape, p)
}

fn random_frame<T: Real>(shape: &ShapeConfig, channels: usize, seed: u64) -> FeatureMap<T> {
    let m = seeded::uniform_matrix::<T>(shape.locations(), channels, -1.0, 1.0, &mut seeded::rng(seed));
    FeatureMap::new(shape.height, shape.width, m).expect("valid shape")
}

/// Run one instrumented global-context read at `config` and return its
/// multiplication count.
pub fn measure_gc_read<T: Real>(config: &CostConfig, seed: u64) -> Result<u64> {
    let (shape, p) = projections_for::<T>(config, seed);
    let ctx = random_frame::<T>(&shape, shape.context_channels, seed ^ 0x9e37);
    let qry = random_frame::<T>(&shape, shape.query_channels, seed ^ 0x79b9);
    let mut scratch = OpCounters::new();
    let c = gc::extract(&ctx, &p, NormalizationMode::None, &mut scratch)?;
    let g = gc::update(&GlobalContext::empty(config.key_channels, config.value_channels), &c)?;
    let mut counters = OpCounters::new();
    gc::distribute(&qry, &g, &p, NormalizationMode::None, &mut counters)?;
    Ok(counters.multiplications())
}

/// Run one instrumented memory read at `config` with `frames` stored
/// frames and return its multiplication count.
pub fn measure_stm_read<T: Real>(config: &CostConfig, frames: u64, seed: u64) -> Result<u64> {
    let (shape, p) = projections_for::<T>(config, seed);
    let mut m = StmMemory::<T>::empty(config.key_channels, config.value_channels);
    let mut scratch = OpCounters::new();
    for f in 0..frames {
        let ctx = random_frame::<T>(&shape, shape.context_channels, seed ^ (0x1000 + f));
        let (k, v) = stm::produce(&ctx, &p, &mut scratch)?;
        m.push(k, v)?;
    }
    let qry = random_frame::<T>(&shape, shape.query_channels, seed ^ 0x2000);
    let mut counters = OpCounters::new();
    stm::read(&qry, &m, &p, NormalizationMode::None, &mut counters)?;
    Ok(counters.multiplications())
}

/// Build a [`CostReport`] for one sweep point. `measure_direct` selects
/// whether the measurement runs at the full configuration or extrapolates
/// a directly measured single-frame read by `frames`.
pub fn report_for(
    module: ModuleKind,
    config: &CostConfig,
    frames: u64,
    measure_direct: bool,
    seed: u64,
) -> Result<CostReport> {
    let hw = config.locations();
    let c_n = config.key_channels as u64;
    let c_m = config.value_channels as u64;
    let (analytic, measured, mode) = match module {
        ModuleKind::Gc => {
            let analytic = gc_read_mults(hw, c_n, c_m);
            let measured = match config.dtype {
                Dtype::F32 => measure_gc_read::<f32>(config, seed)?,
                Dtype::F64 => measure_gc_read::<f64>(config, seed)?,
            };
            (analytic, measured, MeasurementMode::Direct)
        }
        ModuleKind::Stm => {
            let analytic = stm_read_mults(hw, c_n, c_m, frames);
            if measure_direct {
                let measured = match config.dtype {
                    Dtype::F32 => measure_stm_read::<f32>(config, frames, seed)?,
                    Dtype::F64 => measure_stm_read::<f64>(config, frames, seed)?,
                };
                (analytic, measured, MeasurementMode::Direct)
            } else {
                let one = match config.dtype {
                    Dtype::F32 => measure_stm_read::<f32>(config, 1, seed)?,
                    Dtype::F64 => measure_stm_read::<f64>(config, 1, seed)?,
                };
                (analytic, frames * one, MeasurementMode::ExtrapolatedFromT1)
            }
        }
    };
    let footprint = memory_model(module, config, frames);
    Ok(CostReport {
        module,
        frames,
        analytic_mults: analytic,
        measured_mults: measured,
        measurement: mode,
        persistent_bytes: footprint.persistent_bytes(config.dtype),
        transient_bytes: footprint.transient_bytes(config.dtype),
        config: *config,
    })
}

/// The benchmark configuration the headline numbers are quoted at:
/// 24x24 feature grid (384px input at stride 16), 128 key channels,
/// 512 value channels, f32 bytes.
pub fn bench_config() -> CostConfig {
    CostConfig {
        height: 24,
        width: 24,
        key_channels: 128,
        value_channels: 512,
        dtype: Dtype::F32,
    }
}

/// State-size and per-frame read-cost trajectories of a streaming run.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct StreamTrajectory {
    pub module: ModuleKind,
    pub per_frame_persistent_floats: Vec<u64>,
    /// Read cost at each frame (zero for the first frame, where there is
    /// nothing to read against). Only populated when reads are run.
    pub per_frame_read_mults: Vec<u64>,
}

impl StreamTrajectory {
    /// True when every recorded state size equals the first.
    pub fn persistent_is_flat(&self) -> bool {
        self.per_frame_persistent_floats
            .windows(2)
            .all(|w| w[0] == w[1])
    }

    /// True when state grows by the same amount every frame.
    pub fn persistent_is_linear(&self) -> bool {
        let diffs: Vec<i128> = self
            .per_frame_persistent_floats
            .windows(2)
            .map(|w| w[1] as i128 - w[0] as i128)
            .collect();
        diffs.windows(2).all(|w| w[0] == w[1]) && diffs.first().is_none_or(|&d| d > 0)
    }
}

/// Stream `frames` random frames through the global context, reading before
/// every absorb (from frame 2 on). Records state size and read cost per
/// frame; both must be constant, which the caller asserts. Also returns the
/// final state so long runs can be checkpointed.
pub fn gc_stream_trajectory<T: Real>(
    shape: &ShapeConfig,
    frames: usize,
    seed: u64,
) -> Result<(StreamTrajectory, GlobalContext<T>)> {
    let p = ProjectionSet::<T>::seeded(shape, ProjectionMode::Linear, seed);
    let mut rng = seeded::rng(seed ^ 0x5eed);
    let hw = shape.locations();
    let mut g = GlobalContext::<T>::empty(shape.key_channels, shape.value_channels);
    let mut persistent = Vec::with_capacity(frames);
    let mut mults = Vec::with_capacity(frames);
    for idx in 0..frames {
        let mut counters = OpCounters::new();
        if idx > 0 {
            let qry = seeded::uniform_matrix::<T>(hw, shape.query_channels, -1.0, 1.0, &mut rng);
            let qry = FeatureMap::new(shape.height, shape.width, qry)?;
            gc::distribute(&qry, &g, &p, NormalizationMode::None, &mut counters)?;
        }
        mults.push(counters.multiplications());
        let ctx = seeded::uniform_matrix::<T>(hw, shape.context_channels, -1.0, 1.0, &mut rng);
        let ctx = FeatureMap::new(shape.height, shape.width, ctx)?;
        let c = gc::extract(&ctx, &p, NormalizationMode::None, &mut OpCounters::new())?;
        g = gc::update(&g, &c)?;
        persistent.push(g.persistent_floats());
    }
    Ok((
        StreamTrajectory {
            module: ModuleKind::Gc,
            per_frame_persistent_floats: persistent,
            per_frame_read_mults: mults,
        },
        g,
    ))
}

/// Stream `frames` random frames into the memory backend, recording state
/// size per frame. Reads are skipped (their cost grows linearly and a long
/// run would be dominated by them); state growth is the measured quantity.
/// Also returns the final memory for checkpointing.
pub fn stm_stream_trajectory<T: Real>(
    shape: &ShapeConfig,
    frames: usize,
    seed: u64,
) -> Result<(StreamTrajectory, StmMemory<T>)> {
    let p = ProjectionSet::<T>::seeded(shape, ProjectionMode::Linear, seed);
    let mut rng = seeded::rng(seed ^ 0x5eed);
    let hw = shape.locations();
    let mut m = StmMemory::<T>::empty(shape.key_channels, shape.value_channels);
    let mut persistent = Vec::with_capacity(frames);
    for _ in 0..frames {
        let ctx = seeded::uniform_matrix::<T>(hw, shape.context_channels, -1.0, 1.0, &mut rng);
        let ctx = FeatureMap::new(shape.height, shape.width, ctx)?;
        let (k, v) = stm::produce(&ctx, &p, &mut OpCounters::new())?;
        m.push(k, v)?;
        persistent.push(m.persistent_floats());
    }
    Ok((
        StreamTrajectory {
            module: ModuleKind::Stm,
            per_frame_persistent_floats: persistent,
            per_frame_read_mults: Vec::new(),
        },
        m,
    ))
}
