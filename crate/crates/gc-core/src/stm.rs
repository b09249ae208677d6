//! Space-time memory: concatenated per-location keys and values.
//!
//! The baseline the global context is measured against. Every frame's keys
//! and values are appended as rows; a read computes the dense affinity of
//! the current frame's queries against every stored location, then
//! aggregates stored values. Both state and read cost grow linearly with
//! the number of stored frames; that growth is the point of keeping this
//! backend around.

use crate::counters::OpCounters;
use crate::error::{Error, Result};
use crate::matrix::{Matrix, Real};
use crate::projection::{make_keys, make_queries, make_values, FeatureMap, NormalizationMode, ProjectionSet};

/// Concatenated memory: `frames_stored` frames of `H*W` locations each,
/// rows in frame order and flattening order within a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct StmMemory<T> {
    keys: Matrix<T>,
    values: Matrix<T>,
    frames_stored: u64,
}

impl<T: Real> StmMemory<T> {
    pub fn empty(key_channels: usize, value_channels: usize) -> Self {
        StmMemory {
            keys: Matrix::zeros(0, key_channels),
            values: Matrix::zeros(0, value_channels),
            frames_stored: 0,
        }
    }

    pub fn keys(&self) -> &Matrix<T> {
        &self.keys
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn frames_stored(&self) -> u64 {
        self.frames_stored
    }

    pub fn stored_locations(&self) -> usize {
        self.keys.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames_stored == 0
    }

    /// Floats held as long-lived state: `T * H*W * (C_N + C_M)`.
    pub fn persistent_floats(&self) -> u64 {
        (self.keys.len() + self.values.len()) as u64
    }

    /// Rebuild a checkpointed memory from its matrices and frame counter.
    pub fn from_parts(keys: Matrix<T>, values: Matrix<T>, frames_stored: u64) -> Result<Self> {
        if keys.rows() != values.rows() {
            return Err(Error::ShapeMismatch {
                op: "stm_from_parts",
                left: keys.shape(),
                right: values.shape(),
            });
        }
        Ok(StmMemory {
            keys,
            values,
            frames_stored,
        })
    }

    /// Append one frame's keys and values, consuming the memory and
    /// returning the successor (value semantics without a full copy).
    pub fn write(mut self, keys: Matrix<T>, values: Matrix<T>) -> Result<Self> {
        self.push(keys, values)?;
        Ok(self)
    }

    /// In-place variant of [`StmMemory::write`] for streaming loops.
    pub fn push(&mut self, keys: Matrix<T>, values: Matrix<T>) -> Result<()> {
        if keys.cols() != self.keys.cols() {
            return Err(Error::ShapeMismatch {
                op: "stm_write_keys",
                left: self.keys.shape(),
                right: keys.shape(),
            });
        }
        if values.cols() != self.values.cols() {
            return Err(Error::ShapeMismatch {
                op: "stm_write_values",
                left: self.values.shape(),
                right: values.shape(),
            });
        }
        if keys.rows() != values.rows() {
            return Err(Error::ShapeMismatch {
                op: "stm_write",
                left: keys.shape(),
                right: values.shape(),
            });
        }
        append_rows(&mut self.keys, keys);
        append_rows(&mut self.values, values);
        self.frames_stored += 1;
        Ok(())
    }
}

fn append_rows<T: Real>(dst: &mut Matrix<T>, src: Matrix<T>) {
    let cols = dst.cols();
    let rows = dst.rows() + src.rows();
    let mut data = core::mem::replace(dst, Matrix::zeros(0, cols)).into_vec();
    data.extend(src.into_vec());
    *dst = Matrix::from_vec(rows, cols, data).expect("row append preserves layout");
}

/// One frame's keys and values, exactly as the shared projections emit them
/// (never normalized on the write path). `counters` records the produced
/// floats as a transient allocation; projection multiplications are not
/// attributed, mirroring the global-context write path.
pub fn produce<T: Real>(
    x: &FeatureMap<T>,
    p: &ProjectionSet<T>,
    counters: &mut OpCounters,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let keys = make_keys(x, p, NormalizationMode::None)?;
    let values = make_values(x, p)?;
    counters.record_transient_alloc((keys.len() + values.len()) as u64);
    Ok((keys, values))
}

/// Answer the current frame's queries against every stored location.
///
/// The affinity `queries * keys^T` is materialized as an
/// `(H*W) x (T*H*W)` matrix. With [`NormalizationMode::None`] the affinity
/// is scaled by `1 / frames_stored` (each stored frame contributes its
/// mean-weighted share, the regime equivalent to the global context); with
/// [`NormalizationMode::StmAffinitySoftmax`] each affinity row is softmaxed
/// over all stored locations and no scale factor is applied.
///
/// `counters` receives `H*W * C_N * (T*H*W)` multiplications for the
/// affinity plus `H*W * (T*H*W) * C_M` for the aggregation, and the query,
/// affinity, and output floats as transient allocations.
pub fn read<T: Real>(
    x: &FeatureMap<T>,
    m: &StmMemory<T>,
    p: &ProjectionSet<T>,
    norm: NormalizationMode,
    counters: &mut OpCounters,
) -> Result<Matrix<T>> {
    if m.is_empty() {
        return Err(Error::EmptyMemory { op: "stm_read" });
    }
    if matches!(norm, NormalizationMode::GcDoubleSoftmax) {
        return Err(Error::InvalidConfig(
            "double softmax is a global-context mode; memory read accepts none or \
             affinity softmax"
                .into(),
        ));
    }
    let queries = make_queries(x, p, NormalizationMode::None)?;
    counters.record_transient_alloc(queries.len() as u64);
    counters.record_persistent(m.persistent_floats());

    let affinity = queries.matmul_nt(&m.keys, counters)?;
    let affinity = match norm {
        NormalizationMode::StmAffinitySoftmax => {
            let mut a = affinity;
            a.softmax_rows_in_place();
            a
        }
        _ => affinity.scaled(T::from_f64(1.0 / m.frames_stored as f64)),
    };
    affinity.matmul(&m.values, counters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::{ProjectionMode, ShapeConfig};
    use crate::seeded;

    fn shape() -> ShapeConfig {
        ShapeConfig {
            height: 2,
            width: 3,
            context_channels: 4,
            query_channels: 3,
            key_channels: 2,
            value_channels: 3,
        }
    }

    fn random_map<T: Real>(h: usize, w: usize, c: usize, seed: u64) -> FeatureMap<T> {
        let m = seeded::uniform_matrix::<T>(h * w, c, -1.0, 1.0, &mut seeded::rng(seed));
        FeatureMap::new(h, w, m).unwrap()
    }

    #[test]
    fn produce_delegates_to_shared_projections() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 1);
        let x = random_map::<f64>(2, 3, 4, 10);
        let (keys, values) = produce(&x, &p, &mut OpCounters::new()).unwrap();
        assert_eq!(keys, make_keys(&x, &p, NormalizationMode::None).unwrap());
        assert_eq!(values, make_values(&x, &p).unwrap());
    }

    #[test]
    fn produce_zero_input_gives_zeros() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 2);
        let x = FeatureMap::new(2, 3, Matrix::zeros(6, 4)).unwrap();
        let (keys, values) = produce(&x, &p, &mut OpCounters::new()).unwrap();
        assert_eq!(keys, Matrix::zeros(6, 2));
        assert_eq!(values, Matrix::zeros(6, 3));
    }

    #[test]
    fn write_to_empty_memory_stores_the_produced_matrices() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 3);
        let x = random_map::<f64>(2, 3, 4, 11);
        let (keys, values) = produce(&x, &p, &mut OpCounters::new()).unwrap();
        let m = StmMemory::empty(2, 3)
            .write(keys.clone(), values.clone())
            .unwrap();
        assert_eq!(m.keys(), &keys);
        assert_eq!(m.values(), &values);
        assert_eq!(m.frames_stored(), 1);
    }

    #[test]
    fn writes_append_in_frame_order() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 4);
        let x1 = random_map::<f64>(2, 3, 4, 12);
        let x2 = random_map::<f64>(2, 3, 4, 13);
        let (k1, v1) = produce(&x1, &p, &mut OpCounters::new()).unwrap();
        let (k2, v2) = produce(&x2, &p, &mut OpCounters::new()).unwrap();
        let m = StmMemory::empty(2, 3)
            .write(k1.clone(), v1.clone())
            .unwrap()
            .write(k2.clone(), v2.clone())
            .unwrap();
        assert_eq!(m.frames_stored(), 2);
        for loc in 0..6 {
            assert_eq!(m.keys().row(loc), k1.row(loc));
            assert_eq!(m.keys().row(6 + loc), k2.row(loc));
            assert_eq!(m.values().row(loc), v1.row(loc));
            assert_eq!(m.values().row(6 + loc), v2.row(loc));
        }
    }

    #[test]
    fn push_matches_write() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 5);
        let x1 = random_map::<f64>(2, 3, 4, 14);
        let x2 = random_map::<f64>(2, 3, 4, 15);
        let (k1, v1) = produce(&x1, &p, &mut OpCounters::new()).unwrap();
        let (k2, v2) = produce(&x2, &p, &mut OpCounters::new()).unwrap();
        let by_write = StmMemory::empty(2, 3)
            .write(k1.clone(), v1.clone())
            .unwrap()
            .write(k2.clone(), v2.clone())
            .unwrap();
        let mut by_push = StmMemory::empty(2, 3);
        by_push.push(k1, v1).unwrap();
        by_push.push(k2, v2).unwrap();
        assert_eq!(by_write, by_push);
    }

    #[test]
    fn persistent_floats_grow_linearly() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 6);
        let mut m = StmMemory::<f64>::empty(2, 3);
        let hw = 6u64;
        let per_frame = hw * (2 + 3);
        for t in 1..=7u64 {
            let x = random_map::<f64>(2, 3, 4, 20 + t);
            let (k, v) = produce(&x, &p, &mut OpCounters::new()).unwrap();
            m.push(k, v).unwrap();
            assert_eq!(m.persistent_floats(), t * per_frame);
        }
    }

    #[test]
    fn write_rejects_column_mismatch() {
        let m = StmMemory::<f64>::empty(2, 3);
        let err = m
            .write(Matrix::zeros(6, 5), Matrix::zeros(6, 3))
            .unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { op: "stm_write_keys", .. }));
    }

    #[test]
    fn read_empty_memory_is_an_error() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 7);
        let q = random_map::<f64>(2, 3, 3, 16);
        let err = read(
            &q,
            &StmMemory::empty(2, 3),
            &p,
            NormalizationMode::None,
            &mut OpCounters::new(),
        )
        .unwrap_err();
        assert_eq!(err, Error::EmptyMemory { op: "stm_read" });
    }

    #[test]
    fn single_frame_read_matches_double_loop_attention_oracle() {
        // Independent oracle: per query pixel, loop over every memory
        // location, accumulate affinity-weighted values, divide by the
        // frame count. No matrix code involved.
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 8);
        let ctx = random_map::<f64>(2, 3, 4, 17);
        let qry = random_map::<f64>(2, 3, 3, 18);
        let (k, v) = produce(&ctx, &p, &mut OpCounters::new()).unwrap();
        let m = StmMemory::empty(2, 3).write(k.clone(), v.clone()).unwrap();
        let out = read(&qry, &m, &p, NormalizationMode::None, &mut OpCounters::new()).unwrap();

        let queries = make_queries(&qry, &p, NormalizationMode::None).unwrap();
        for q_loc in 0..6 {
            for ch in 0..3 {
                let mut acc = 0.0;
                for m_loc in 0..6 {
                    let mut aff = 0.0;
                    for n in 0..2 {
                        aff += queries[(q_loc, n)] * k[(m_loc, n)];
                    }
                    acc += aff * v[(m_loc, ch)];
                }
                assert!((out[(q_loc, ch)] - acc / 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn affinity_softmax_rows_sum_to_one() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 9);
        let mut m = StmMemory::<f64>::empty(2, 3);
        for t in 0..3 {
            let x = random_map::<f64>(2, 3, 4, 30 + t);
            let (k, v) = produce(&x, &p, &mut OpCounters::new()).unwrap();
            m.push(k, v).unwrap();
        }
        let qry = random_map::<f64>(2, 3, 3, 19);
        let queries = make_queries(&qry, &p, NormalizationMode::None).unwrap();
        let affinity = queries.matmul_nt(m.keys(), &mut OpCounters::new()).unwrap();
        let softmaxed = affinity.softmax_rows();
        for i in 0..softmaxed.rows() {
            let sum: f64 = softmaxed.row(i).iter().sum();
            assert!((sum - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn read_counts_affinity_and_aggregation_products() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 10);
        let mut m = StmMemory::<f64>::empty(2, 3);
        for t in 0..4 {
            let x = random_map::<f64>(2, 3, 4, 40 + t);
            let (k, v) = produce(&x, &p, &mut OpCounters::new()).unwrap();
            m.push(k, v).unwrap();
        }
        let qry = random_map::<f64>(2, 3, 3, 41);
        let mut counters = OpCounters::new();
        read(&qry, &m, &p, NormalizationMode::None, &mut counters).unwrap();
        let (hw, t, c_n, c_m) = (6u64, 4u64, 2u64, 3u64);
        assert_eq!(
            counters.multiplications(),
            hw * c_n * (t * hw) + hw * (t * hw) * c_m
        );
        // Affinity transient is at least HW * T*HW.
        assert!(counters.peak_transient_floats() >= hw * t * hw);
        assert_eq!(counters.persistent_floats(), t * hw * (c_n + c_m));
    }

    #[test]
    fn unnormalized_read_is_invariant_to_frame_permutation() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 11);
        let frames: alloc::vec::Vec<_> = (0..4)
            .map(|t| {
                let x = random_map::<f64>(2, 3, 4, 50 + t);
                produce(&x, &p, &mut OpCounters::new()).unwrap()
            })
            .collect();
        let qry = random_map::<f64>(2, 3, 3, 54);

        let build = |order: &[usize]| {
            let mut m = StmMemory::<f64>::empty(2, 3);
            for &i in order {
                m.push(frames[i].0.clone(), frames[i].1.clone()).unwrap();
            }
            m
        };
        let a = read(
            &qry,
            &build(&[0, 1, 2, 3]),
            &p,
            NormalizationMode::None,
            &mut OpCounters::new(),
        )
        .unwrap();
        let b = read(
            &qry,
            &build(&[2, 0, 3, 1]),
            &p,
            NormalizationMode::None,
            &mut OpCounters::new(),
        )
        .unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-5);
    }

    #[test]
    fn unnormalized_read_is_linear_in_stored_values() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 12);
        let x = random_map::<f64>(2, 3, 4, 60);
        let (k, v) = produce(&x, &p, &mut OpCounters::new()).unwrap();
        let qry = random_map::<f64>(2, 3, 3, 61);

        let m1 = StmMemory::empty(2, 3).write(k.clone(), v.clone()).unwrap();
        let m2 = StmMemory::empty(2, 3)
            .write(k, v.scaled(2.0))
            .unwrap();
        let r1 = read(&qry, &m1, &p, NormalizationMode::None, &mut OpCounters::new()).unwrap();
        let r2 = read(&qry, &m2, &p, NormalizationMode::None, &mut OpCounters::new()).unwrap();
        assert!(r2.max_abs_diff(&r1.scaled(2.0)) <= 1e-12);
    }
}
