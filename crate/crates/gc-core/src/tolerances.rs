//! Frozen verification tolerances.
//!
//! Float-error bounds here were calibrated, not invented: the equivalence
//! bounds come from running the protocol in [`crate::equivalence`] over at
//! least 100 seeds at the shapes named below, taking the worst observed
//! difference, and freezing roughly an order of magnitude above it. The
//! observed maxima are recorded per constant so a regression is visible as
//! a margin collapse, not just a red test.

/// Max absolute difference between the two backends' reads, f64, no
/// normalization, linear projections.
///
/// Calibration (see `tests/calibration.rs`): 200 seeds, 16-frame
/// sequences, 8x8 grid, 6/5 input channels, C_N=4, C_M=5. Worst observed
/// max-abs diff 2.9e-14 (conv3x3 sweep: 1.3e-13), so the frozen bound
/// carries more than two orders of margin.
pub const EQUIV_MAX_ABS_F64: f64 = 1e-10;

/// Max relative difference (normalized by the memory read's largest output
/// magnitude per frame) between the two backends' reads, f32.
///
/// Same protocol as [`EQUIV_MAX_ABS_F64`]; worst observed relative diff
/// 1.4e-6 over 200 seeds.
pub const EQUIV_MAX_REL_F32: f64 = 1e-4;

/// Deviation from 1 allowed for row sums of row-stochastic attention:
/// double-softmax implied attention and softmaxed affinities.
pub const ROW_STOCHASTIC_DEV: f64 = 1e-5;

/// Deviation allowed when a running mean is compared against the direct
/// arithmetic mean of its inputs, f32 state.
pub const RUNNING_MEAN_ABS_F32: f64 = 1e-6;

/// Deviation allowed between mean states accumulated in different frame
/// orders.
pub const MEAN_PERMUTATION_ABS: f64 = 1e-5;

/// Analytic multiplication counts must reproduce the published read FLOPs
/// within this relative band.
pub const BENCH_FLOPS_REL: f64 = 0.10;

/// Modeled read memory must land within this factor of the published
/// figures (the publication does not say which transients it counts, so
/// the band is deliberately wide).
pub const BENCH_MEMORY_FACTOR: f64 = 2.0;

/// Max soft-mask difference between the two pipeline backends under no
/// normalization, f32, 30-frame runs (float error compounds through the
/// mask feedback loop; equivalence keeps it at rounding scale).
pub const PIPELINE_BACKEND_AGREEMENT_F32: f64 = 1e-4;

/// Mean IoU slack allowed between the streaming pipeline and the
/// brute-force nearest-neighbor attention classifier run on the same
/// features.
pub const PIPELINE_VS_ORACLE_IOU: f64 = 0.02;
