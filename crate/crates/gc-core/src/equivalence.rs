//! Numerical equivalence driver for the two memory backends.
//!
//! With no normalization the global-context read and the space-time-memory
//! read compute the same quantity two ways:
//! `q * (sum_f k_f^T v_f) / t` versus `(q * [k_1..k_t]^T) * [v_1..v_t] / t`,
//! equal by associativity and distributivity. [`run_equivalence`] drives
//! both backends over a shared frame sequence and records the per-frame
//! differences; the frozen bounds in [`crate::tolerances`] were calibrated
//! from these reports.
//!
//! With normalization on, equality no longer holds exactly;
//! [`run_softmax_approx_check`] instead verifies the property both schemes
//! share (row-stochastic attention) and measures the divergence without
//! judging it.

use alloc::vec::Vec;

use crate::counters::OpCounters;
use crate::error::{Error, Result};
use crate::gc::{self, GlobalContext};
use crate::matrix::{Dtype, Real};
use crate::projection::{
    make_keys, make_queries, FeatureMap, NormalizationMode, ProjectionSet, ShapeConfig,
};
use crate::seeded;
use crate::stm::{self, StmMemory};

/// One stream step: the frame as the context encoder sees it (mask channel
/// included) and as the query encoder sees it.
#[derive(Clone, Debug)]
pub struct FramePair<T> {
    pub context: FeatureMap<T>,
    pub query: FeatureMap<T>,
}

/// Per-frame differences between the two backends on one sequence.
/// Comparison starts at the second frame (both memories are empty before
/// that), so the lists hold `sequence_length - 1` entries.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EquivalenceReport {
    pub sequence_length: usize,
    pub shape: ShapeConfig,
    pub dtype: Dtype,
    pub per_frame_max_abs_diff: Vec<f64>,
    pub per_frame_rel_diff: Vec<f64>,
}

impl EquivalenceReport {
    pub fn max_abs_diff(&self) -> f64 {
        self.per_frame_max_abs_diff.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_rel_diff(&self) -> f64 {
        self.per_frame_rel_diff.iter().copied().fold(0.0, f64::max)
    }
}

/// Row-stochasticity check and divergence measurement for the normalized
/// modes. `per_frame_row_sum_dev` holds, per comparison frame, the largest
/// deviation from 1 of any implied-attention row sum; `per_frame_divergence`
/// records how far apart the two backends drift (a measurement, not an
/// assertion; the normalized modes are approximations of each other).
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SoftmaxApproxReport {
    pub sequence_length: usize,
    pub shape: ShapeConfig,
    pub dtype: Dtype,
    pub per_frame_row_sum_dev: Vec<f64>,
    pub per_frame_divergence: Vec<f64>,
}

impl SoftmaxApproxReport {
    pub fn max_row_sum_dev(&self) -> f64 {
        self.per_frame_row_sum_dev.iter().copied().fold(0.0, f64::max)
    }
}

/// Random feature sequence for a shape: entries uniform in `[-1, 1]`,
/// deterministic in the seed.
pub fn random_sequence<T: Real>(shape: &ShapeConfig, frames: usize, seed: u64) -> Vec<FramePair<T>> {
    let mut rng = seeded::rng(seed);
    let hw = shape.locations();
    (0..frames)
        .map(|_| {
            let context = seeded::uniform_matrix::<T>(hw, shape.context_channels, -1.0, 1.0, &mut rng);
            let query = seeded::uniform_matrix::<T>(hw, shape.query_channels, -1.0, 1.0, &mut rng);
            FramePair {
                context: FeatureMap::new(shape.height, shape.width, context)
                    .expect("generated shape is valid"),
                query: FeatureMap::new(shape.height, shape.width, query)
                    .expect("generated shape is valid"),
            }
        })
        .collect()
}

fn shape_of<T: Real>(seq: &[FramePair<T>], p: &ProjectionSet<T>) -> ShapeConfig {
    let first = &seq[0];
    ShapeConfig {
        height: first.context.height(),
        width: first.context.width(),
        context_channels: first.context.channels(),
        query_channels: first.query.channels(),
        key_channels: p.key_channels(),
        value_channels: p.value_channels(),
    }
}

/// Drive both backends over `seq` with identical projections and no
/// normalization, recording per-frame max-absolute and relative differences
/// between the global-context read and the memory read.
///
/// At each frame `t >= 2` the comparison reads against the first `t-1`
/// stored frames, then both backends absorb frame `t`. Relative difference
/// is the max-absolute difference normalized by the largest magnitude in
/// the memory read's output for that frame.
///
/// Only [`NormalizationMode::None`] is accepted: with softmax in play the
/// two backends are deliberately different computations. Use
/// [`run_softmax_approx_check`] for that regime.
pub fn run_equivalence<T: Real>(
    seq: &[FramePair<T>],
    p: &ProjectionSet<T>,
    norm: NormalizationMode,
) -> Result<EquivalenceReport> {
    if !matches!(norm, NormalizationMode::None) {
        return Err(Error::InvalidConfig(
            "equivalence holds only without normalization; the softmax regime has its own check"
                .into(),
        ));
    }
    if seq.is_empty() {
        return Err(Error::InvalidConfig("equivalence needs at least one frame".into()));
    }
    let shape = shape_of(seq, p);
    let mut g = GlobalContext::<T>::empty(p.key_channels(), p.value_channels());
    let mut m = StmMemory::<T>::empty(p.key_channels(), p.value_channels());
    let mut scratch = OpCounters::new();

    let mut abs_diffs = Vec::with_capacity(seq.len().saturating_sub(1));
    let mut rel_diffs = Vec::with_capacity(seq.len().saturating_sub(1));

    for (idx, pair) in seq.iter().enumerate() {
        if idx > 0 {
            let d = gc::distribute(&pair.query, &g, p, NormalizationMode::None, &mut scratch)?;
            let e = stm::read(&pair.query, &m, p, NormalizationMode::None, &mut scratch)?;
            let abs = d.max_abs_diff(&e);
            let denom = e.max_abs();
            abs_diffs.push(abs);
            rel_diffs.push(if denom > 0.0 { abs / denom } else { 0.0 });
        }
        let c = gc::extract(&pair.context, p, NormalizationMode::None, &mut scratch)?;
        g = gc::update(&g, &c)?;
        let (keys, values) = stm::produce(&pair.context, p, &mut scratch)?;
        m.push(keys, values)?;
    }

    Ok(EquivalenceReport {
        sequence_length: seq.len(),
        shape,
        dtype: T::DTYPE,
        per_frame_max_abs_diff: abs_diffs,
        per_frame_rel_diff: rel_diffs,
    })
}

/// Drive the normalized modes side by side: the global-context arm with
/// double softmax, the memory arm with affinity softmax.
///
/// Verifies the shared row-stochasticity property, that every row of the
/// global-context arm's implied attention (row-softmaxed queries times
/// column-softmaxed keys, per stored frame) sums to 1, and records the
/// output divergence between the arms without asserting on it.
pub fn run_softmax_approx_check<T: Real>(
    seq: &[FramePair<T>],
    p: &ProjectionSet<T>,
) -> Result<SoftmaxApproxReport> {
    if seq.is_empty() {
        return Err(Error::InvalidConfig("softmax check needs at least one frame".into()));
    }
    let shape = shape_of(seq, p);
    let mut g = GlobalContext::<T>::empty(p.key_channels(), p.value_channels());
    let mut m = StmMemory::<T>::empty(p.key_channels(), p.value_channels());
    let mut scratch = OpCounters::new();
    // Normalized keys of every stored frame, for the implied-attention check.
    let mut stored_keys = Vec::new();

    let mut row_sum_devs = Vec::with_capacity(seq.len().saturating_sub(1));
    let mut divergences = Vec::with_capacity(seq.len().saturating_sub(1));

    for (idx, pair) in seq.iter().enumerate() {
        if idx > 0 {
            let queries = make_queries(&pair.query, p, NormalizationMode::GcDoubleSoftmax)?;
            let mut dev = 0.0f64;
            for keys in &stored_keys {
                let attn = queries.matmul_nt(keys, &mut scratch)?;
                for i in 0..attn.rows() {
                    let sum: f64 = attn.row(i).iter().map(|v| v.to_f64_lossy()).sum();
                    dev = dev.max((sum - 1.0).abs());
                }
            }
            row_sum_devs.push(dev);

            let d = gc::distribute(&pair.query, &g, p, NormalizationMode::GcDoubleSoftmax, &mut scratch)?;
            let e = stm::read(&pair.query, &m, p, NormalizationMode::StmAffinitySoftmax, &mut scratch)?;
            divergences.push(d.max_abs_diff(&e));
        }
        let c = gc::extract(&pair.context, p, NormalizationMode::GcDoubleSoftmax, &mut scratch)?;
        g = gc::update(&g, &c)?;
        stored_keys.push(make_keys(&pair.context, p, NormalizationMode::GcDoubleSoftmax)?);
        let (keys, values) = stm::produce(&pair.context, p, &mut scratch)?;
        m.push(keys, values)?;
    }

    Ok(SoftmaxApproxReport {
        sequence_length: seq.len(),
        shape,
        dtype: T::DTYPE,
        per_frame_row_sum_dev: row_sum_devs,
        per_frame_divergence: divergences,
    })
}
