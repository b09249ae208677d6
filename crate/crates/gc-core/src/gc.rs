//! Global context memory: fixed-size summary of all absorbed frames.
//!
//! Three steps per frame: extraction compresses a context frame's keys and
//! values into a `C_N x C_M` matrix, update folds it into a running mean
//! over frames, and distribution answers the current frame's queries with a
//! single `(H*W) x C_N` by `C_N x C_M` product. State size and read cost do
//! not depend on how many frames were absorbed.

use crate::counters::OpCounters;
use crate::error::{Error, Result};
use crate::matrix::{Matrix, Real};
use crate::projection::{make_keys, make_queries, make_values, FeatureMap, NormalizationMode, ProjectionSet};

/// One frame's compressed context: keys-transposed times values.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextMatrix<T>(Matrix<T>);

impl<T: Real> ContextMatrix<T> {
    pub fn from_matrix(m: Matrix<T>) -> Self {
        ContextMatrix(m)
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }
}

/// Running-mean context state. The matrix shape is `C_N x C_M` from the
/// moment of construction and never changes; it is the zero matrix exactly
/// until the first frame is absorbed.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalContext<T> {
    g: Matrix<T>,
    frames_absorbed: u64,
}

impl<T: Real> GlobalContext<T> {
    pub fn empty(key_channels: usize, value_channels: usize) -> Self {
        GlobalContext {
            g: Matrix::zeros(key_channels, value_channels),
            frames_absorbed: 0,
        }
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.g
    }

    pub fn frames_absorbed(&self) -> u64 {
        self.frames_absorbed
    }

    pub fn is_empty(&self) -> bool {
        self.frames_absorbed == 0
    }

    /// Floats held as long-lived state: always `C_N * C_M`.
    pub fn persistent_floats(&self) -> u64 {
        self.g.len() as u64
    }

    /// Rebuild a checkpointed state from its matrix and frame counter.
    pub fn from_parts(g: Matrix<T>, frames_absorbed: u64) -> Result<Self> {
        if frames_absorbed == 0 && g.max_abs() != 0.0 {
            return Err(Error::InvalidConfig(
                "a context with zero absorbed frames must be the zero matrix".into(),
            ));
        }
        Ok(GlobalContext { g, frames_absorbed })
    }
}

/// Compress one context frame into a `C_N x C_M` context matrix:
/// keys-transposed times values, equivalently the sum over locations of
/// per-location key/value outer products.
///
/// `counters` receives exactly `H*W * C_N * C_M` multiplications for the
/// product; key/value generation is not attributed (the cost model
/// instruments memory reads, which both backends pay projections for
/// identically).
pub fn extract<T: Real>(
    x: &FeatureMap<T>,
    p: &ProjectionSet<T>,
    norm: NormalizationMode,
    counters: &mut OpCounters,
) -> Result<ContextMatrix<T>> {
    if matches!(norm, NormalizationMode::StmAffinitySoftmax) {
        return Err(Error::InvalidConfig(
            "affinity softmax is a space-time-memory mode; context extraction accepts \
             none or double-softmax"
                .into(),
        ));
    }
    let keys = make_keys(x, p, norm)?;
    let values = make_values(x, p)?;
    counters.record_transient_alloc((keys.len() + values.len()) as u64);
    let context = keys.matmul_tn(&values, counters)?;
    Ok(ContextMatrix(context))
}

/// Fold one frame's context into the running mean:
/// `g_new = ((t-1)/t) * g_old + (1/t) * c` with `t` the new frame count.
/// Pure: returns the successor state, the input state is untouched.
pub fn update<T: Real>(g: &GlobalContext<T>, c: &ContextMatrix<T>) -> Result<GlobalContext<T>> {
    let t = g.frames_absorbed + 1;
    let keep = T::from_f64((t - 1) as f64 / t as f64);
    let blend = T::from_f64(1.0 / t as f64);
    let next = g.g.scale_add(keep, c.matrix(), blend)?;
    Ok(GlobalContext {
        g: next,
        frames_absorbed: t,
    })
}

/// Answer the current frame's queries from the stored context:
/// queries times context, `(H*W) x C_M`.
///
/// `counters` receives exactly `C_N * C_M * H*W` multiplications for the
/// product plus the `H*W * C_N` query floats and `H*W * C_M` output floats
/// as transient allocations, the full footprint of a global-context read.
pub fn distribute<T: Real>(
    x: &FeatureMap<T>,
    g: &GlobalContext<T>,
    p: &ProjectionSet<T>,
    norm: NormalizationMode,
    counters: &mut OpCounters,
) -> Result<Matrix<T>> {
    if g.is_empty() {
        return Err(Error::EmptyMemory { op: "distribute" });
    }
    if matches!(norm, NormalizationMode::StmAffinitySoftmax) {
        return Err(Error::InvalidConfig(
            "affinity softmax is a space-time-memory mode; context distribution accepts \
             none or double-softmax"
                .into(),
        ));
    }
    let queries = make_queries(x, p, norm)?;
    counters.record_transient_alloc(queries.len() as u64);
    counters.record_persistent(g.persistent_floats());
    queries.matmul(&g.g, counters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::{Projection, ProjectionMode, ShapeConfig};
    use crate::seeded;
    use alloc::vec;
    use alloc::vec::Vec;

    fn shape() -> ShapeConfig {
        ShapeConfig {
            height: 2,
            width: 2,
            context_channels: 3,
            query_channels: 2,
            key_channels: 2,
            value_channels: 2,
        }
    }

    fn random_map<T: Real>(h: usize, w: usize, c: usize, seed: u64) -> FeatureMap<T> {
        let m = seeded::uniform_matrix::<T>(h * w, c, -1.0, 1.0, &mut seeded::rng(seed));
        FeatureMap::new(h, w, m).unwrap()
    }

    fn random_context(seed: u64) -> ContextMatrix<f64> {
        ContextMatrix(seeded::uniform_matrix::<f64>(
            2,
            2,
            -1.0,
            1.0,
            &mut seeded::rng(seed),
        ))
    }

    #[test]
    fn extract_zero_features_gives_zero_context() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 1);
        let x = FeatureMap::new(2, 2, Matrix::zeros(4, 3)).unwrap();
        let c = extract(&x, &p, NormalizationMode::None, &mut OpCounters::new()).unwrap();
        assert_eq!(c.matrix(), &Matrix::zeros(2, 2));
    }

    #[test]
    fn extract_single_location_is_outer_product() {
        let p = ProjectionSet::<f64>::seeded(
            &ShapeConfig {
                height: 1,
                width: 1,
                ..shape()
            },
            ProjectionMode::Linear,
            2,
        );
        let x = random_map::<f64>(1, 1, 3, 10);
        let keys = make_keys(&x, &p, NormalizationMode::None).unwrap();
        let values = make_values(&x, &p).unwrap();
        let c = extract(&x, &p, NormalizationMode::None, &mut OpCounters::new()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = keys[(0, i)] * values[(0, j)];
                assert!((c.matrix()[(i, j)] - want).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn extract_matches_outer_product_sum_oracle() {
        // Independent oracle: sum over locations of key^T value outer
        // products, computed without any matmul.
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 3);
        let x = random_map::<f64>(2, 2, 3, 11);
        let keys = make_keys(&x, &p, NormalizationMode::None).unwrap();
        let values = make_values(&x, &p).unwrap();
        let mut oracle = vec![vec![0.0f64; 2]; 2];
        for loc in 0..4 {
            for i in 0..2 {
                for j in 0..2 {
                    oracle[i][j] += keys[(loc, i)] * values[(loc, j)];
                }
            }
        }
        let c = extract(&x, &p, NormalizationMode::None, &mut OpCounters::new()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((c.matrix()[(i, j)] - oracle[i][j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn extract_counts_only_the_context_product() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 4);
        let x = random_map::<f64>(2, 2, 3, 12);
        let mut counters = OpCounters::new();
        extract(&x, &p, NormalizationMode::None, &mut counters).unwrap();
        // H*W=4, C_N=2, C_M=2.
        assert_eq!(counters.multiplications(), 4 * 2 * 2);
    }

    #[test]
    fn first_update_equals_the_context_exactly() {
        let g0 = GlobalContext::<f64>::empty(2, 2);
        let c1 = random_context(20);
        let g1 = update(&g0, &c1).unwrap();
        assert_eq!(g1.matrix(), c1.matrix());
        assert_eq!(g1.frames_absorbed(), 1);
        assert!(g0.is_empty(), "input state is untouched");
    }

    #[test]
    fn constant_sequence_is_a_fixed_point() {
        let c = random_context(21);
        let g1 = update(&GlobalContext::empty(2, 2), &c).unwrap();
        let g2 = update(&g1, &c).unwrap();
        assert!(g2.matrix().max_abs_diff(c.matrix()) <= 1e-15);
    }

    #[test]
    fn five_updates_equal_the_direct_mean() {
        let contexts: Vec<_> = (0..5).map(|i| random_context(30 + i)).collect();
        let mut g = GlobalContext::<f64>::empty(2, 2);
        for c in &contexts {
            g = update(&g, c).unwrap();
        }
        let mut mean = Matrix::zeros(2, 2);
        for c in &contexts {
            mean = mean.scale_add(1.0, c.matrix(), 1.0).unwrap();
        }
        let mean = mean.scaled(1.0 / 5.0);
        assert!(g.matrix().max_abs_diff(&mean) <= 1e-6);
        assert_eq!(g.frames_absorbed(), 5);
    }

    #[test]
    fn state_shape_is_constant_and_counted() {
        let mut g = GlobalContext::<f64>::empty(2, 2);
        for i in 0..50 {
            g = update(&g, &random_context(100 + i)).unwrap();
            assert_eq!(g.matrix().shape(), (2, 2));
            assert_eq!(g.persistent_floats(), 4);
        }
    }

    #[test]
    fn distribute_before_any_frame_is_an_error() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 5);
        let g = GlobalContext::<f64>::empty(2, 2);
        let q = random_map::<f64>(2, 2, 2, 13);
        let err = distribute(&q, &g, &p, NormalizationMode::None, &mut OpCounters::new())
            .unwrap_err();
        assert_eq!(err, Error::EmptyMemory { op: "distribute" });
    }

    #[test]
    fn one_hot_queries_select_context_rows() {
        // Identity query weights and one-hot query features: each output
        // row is the selected row of the stored context.
        let p = ProjectionSet::new(
            ProjectionMode::Linear,
            Projection::linear(seeded::uniform_matrix::<f64>(3, 2, -1.0, 1.0, &mut seeded::rng(6))),
            Projection::linear(Matrix::identity(2)),
            Projection::linear(seeded::uniform_matrix::<f64>(3, 2, -1.0, 1.0, &mut seeded::rng(7))),
        )
        .unwrap();
        let g = GlobalContext::from_parts(
            Matrix::from_rows(&[&[1.0f64, 2.0], &[3.0, 4.0]]).unwrap(),
            1,
        )
        .unwrap();
        let q = FeatureMap::new(
            2,
            2,
            Matrix::from_rows(&[
                &[1.0f64, 0.0],
                &[0.0, 1.0],
                &[1.0, 0.0],
                &[0.0, 1.0],
            ])
            .unwrap(),
        )
        .unwrap();
        let out = distribute(&q, &g, &p, NormalizationMode::None, &mut OpCounters::new()).unwrap();
        assert_eq!(out.row(0), &[1.0, 2.0]);
        assert_eq!(out.row(1), &[3.0, 4.0]);
        assert_eq!(out.row(2), &[1.0, 2.0]);
        assert_eq!(out.row(3), &[3.0, 4.0]);
    }

    #[test]
    fn distribute_counts_only_the_read_product() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 8);
        let ctx = random_map::<f64>(2, 2, 3, 14);
        let qry = random_map::<f64>(2, 2, 2, 15);
        let c = extract(&ctx, &p, NormalizationMode::None, &mut OpCounters::new()).unwrap();
        let g = update(&GlobalContext::empty(2, 2), &c).unwrap();
        let mut counters = OpCounters::new();
        distribute(&qry, &g, &p, NormalizationMode::None, &mut counters).unwrap();
        // C_N * C_M * H*W
        assert_eq!(counters.multiplications(), 2 * 2 * 4);
        // queries H*W*C_N + output H*W*C_M
        assert_eq!(counters.peak_transient_floats(), (4 * 2 + 4 * 2) as u64);
        assert_eq!(counters.persistent_floats(), 4);
    }

    #[test]
    fn mean_is_permutation_invariant() {
        let contexts: Vec<_> = (0..6).map(|i| random_context(200 + i)).collect();
        let run = |order: &[usize]| {
            let mut g = GlobalContext::<f64>::empty(2, 2);
            for &i in order {
                g = update(&g, &contexts[i]).unwrap();
            }
            g
        };
        let forward = run(&[0, 1, 2, 3, 4, 5]);
        let shuffled = run(&[3, 5, 0, 4, 2, 1]);
        assert!(forward.matrix().max_abs_diff(shuffled.matrix()) <= 1e-5);
    }

    #[test]
    fn extract_is_quadratic_in_input_scale() {
        // Linear projections, no bias, no normalization: scaling the input
        // by a scales the context by a^2.
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 9);
        let x = random_map::<f64>(2, 2, 3, 16);
        let scaled = FeatureMap::new(2, 2, x.values().clone().scaled(3.0)).unwrap();
        let c1 = extract(&x, &p, NormalizationMode::None, &mut OpCounters::new()).unwrap();
        let c2 = extract(&scaled, &p, NormalizationMode::None, &mut OpCounters::new()).unwrap();
        let want = c1.matrix().clone().scaled(9.0);
        assert!(c2.matrix().max_abs_diff(&want) <= 1e-10);
    }
}
