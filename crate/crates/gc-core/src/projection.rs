//! Key/query/value generation shared by both memory backends.
//!
//! Keys and values are generated from context frames (mask channel
//! included, `C` input channels); queries come from the current frame
//! (no mask, `C_q` input channels). Key and query outputs share the same
//! channel count `C_N`, values use `C_M`. Both backends consume the exact
//! same projection outputs, which is the precondition for comparing them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Inherent float math (sqrt, powi) is std-only; no_std builds need the trait.
#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::ChaCha8Rng;

use crate::counters::OpCounters;
use crate::error::{Error, Result};
use crate::matrix::{Matrix, Real};
use crate::seeded;

/// Per-frame dense feature grid flattened to `(H*W) x channels`,
/// location-major with index `y * width + x`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    height: usize,
    width: usize,
    channels: usize,
    values: Matrix<T>,
}

impl<T: Real> FeatureMap<T> {
    pub fn new(height: usize, width: usize, values: Matrix<T>) -> Result<Self> {
        if height == 0 || width == 0 || values.cols() == 0 {
            return Err(Error::InvalidConfig(format!(
                "feature map dimensions must be positive, got {height}x{width}x{}",
                values.cols()
            )));
        }
        if values.rows() != height * width {
            return Err(Error::DataLength {
                expected: height * width,
                got: values.rows(),
            });
        }
        Ok(FeatureMap {
            height,
            width,
            channels: values.cols(),
            values,
        })
    }

    /// Per-location constructor: `f(y, x)` returns the channel vector.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize) -> Vec<T>,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                let v = f(y, x);
                if v.len() != channels {
                    return Err(Error::DataLength {
                        expected: channels,
                        got: v.len(),
                    });
                }
                data.extend(v);
            }
        }
        Self::new(height, width, Matrix::from_vec(height * width, channels, data)?)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn locations(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }
}

/// How k/q/v map input channels to output channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ProjectionMode {
    /// Per-location affine map (1x1). Exact for permutation and
    /// equivalence reasoning; the default.
    Linear,
    /// 3x3 convolution with zero padding; nine taps per input channel.
    Conv3x3,
}

/// Where softmax normalization is applied, if anywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NormalizationMode {
    /// No normalization anywhere; the regime in which the two backends are
    /// exactly equivalent.
    None,
    /// Global-context scheme: softmax along each row of the queries and
    /// along each column of the keys.
    GcDoubleSoftmax,
    /// Space-time-memory scheme: softmax along each row of the
    /// query-key affinity matrix.
    StmAffinitySoftmax,
}

/// One of k, q, v: tap matrices (one for linear, nine for conv3x3, taps in
/// row-major (dy, dx) order over the 3x3 neighborhood) plus optional bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection<T> {
    taps: Vec<Matrix<T>>,
    bias: Option<Vec<T>>,
}

impl<T: Real> Projection<T> {
    pub fn linear(weights: Matrix<T>) -> Self {
        Projection {
            taps: vec![weights],
            bias: None,
        }
    }

    pub fn conv3x3(taps: Vec<Matrix<T>>) -> Result<Self> {
        if taps.len() != 9 {
            return Err(Error::InvalidConfig(format!(
                "conv3x3 projection needs 9 tap matrices, got {}",
                taps.len()
            )));
        }
        let shape = taps[0].shape();
        if taps.iter().any(|t| t.shape() != shape) {
            return Err(Error::InvalidConfig(
                "conv3x3 tap matrices must share one shape".into(),
            ));
        }
        Ok(Projection { taps, bias: None })
    }

    pub fn with_bias(mut self, bias: Vec<T>) -> Result<Self> {
        if bias.len() != self.out_channels() {
            return Err(Error::DataLength {
                expected: self.out_channels(),
                got: bias.len(),
            });
        }
        self.bias = Some(bias);
        Ok(self)
    }

    pub fn in_channels(&self) -> usize {
        self.taps[0].rows()
    }

    pub fn out_channels(&self) -> usize {
        self.taps[0].cols()
    }

    pub fn is_conv(&self) -> bool {
        self.taps.len() == 9
    }

    pub fn taps(&self) -> &[Matrix<T>] {
        &self.taps
    }

    pub fn bias(&self) -> Option<&[T]> {
        self.bias.as_deref()
    }

    /// Apply to a feature map, producing `(H*W) x out_channels`.
    /// Projection cost is not attributed to any caller-visible counter;
    /// the cost model instruments memory reads only.
    fn apply(&self, x: &FeatureMap<T>, role: &'static str) -> Result<Matrix<T>> {
        if x.channels() != self.in_channels() {
            return Err(Error::ChannelMismatch {
                role,
                expected: self.in_channels(),
                got: x.channels(),
            });
        }
        let mut scratch = OpCounters::new();
        let mut out = if self.is_conv() {
            self.apply_conv(x, &mut scratch)?
        } else {
            x.values().matmul(&self.taps[0], &mut scratch)?
        };
        if let Some(bias) = &self.bias {
            out = add_row_bias(out, bias);
        }
        Ok(out)
    }

    fn apply_conv(&self, x: &FeatureMap<T>, scratch: &mut OpCounters) -> Result<Matrix<T>> {
        let (h, w) = (x.height(), x.width());
        let mut out = Matrix::zeros(h * w, self.out_channels());
        // Tap index runs row-major over offsets dy, dx in {-1, 0, 1}.
        for (tap_idx, tap) in self.taps.iter().enumerate() {
            let dy = (tap_idx / 3) as isize - 1;
            let dx = (tap_idx % 3) as isize - 1;
            let shifted = shift_with_zero_pad(x, dy, dx);
            let contrib = shifted.matmul(tap, scratch)?;
            out = out.scale_add(T::one(), &contrib, T::one())?;
        }
        Ok(out)
    }
}

/// Feature rows shifted by (dy, dx) with zero padding: output row for
/// location (y, x) holds the input features at (y + dy, x + dx).
fn shift_with_zero_pad<T: Real>(x: &FeatureMap<T>, dy: isize, dx: isize) -> Matrix<T> {
    let (h, w, c) = (x.height() as isize, x.width() as isize, x.channels());
    Matrix::from_fn(x.locations(), c, |loc, ch| {
        let y = (loc / x.width()) as isize + dy;
        let xx = (loc % x.width()) as isize + dx;
        if y >= 0 && y < h && xx >= 0 && xx < w {
            x.values()[((y * w + xx) as usize, ch)]
        } else {
            T::zero()
        }
    })
}

fn add_row_bias<T: Real>(m: Matrix<T>, bias: &[T]) -> Matrix<T> {
    let cols = m.cols();
    let rows = m.rows();
    let mut data = m.into_vec();
    for r in 0..rows {
        for (c, &b) in bias.iter().enumerate() {
            data[r * cols + c] = data[r * cols + c] + b;
        }
    }
    Matrix::from_vec(rows, cols, data).expect("shape preserved")
}

/// Problem dimensions shared across modules: spatial extent, encoder input
/// widths, and the key/value channel counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShapeConfig {
    pub height: usize,
    pub width: usize,
    /// Input channels of context frames (mask channel included).
    pub context_channels: usize,
    /// Input channels of query frames (no mask).
    pub query_channels: usize,
    /// Key and query output channels (C_N).
    pub key_channels: usize,
    /// Value output channels (C_M).
    pub value_channels: usize,
}

impl ShapeConfig {
    pub fn locations(&self) -> usize {
        self.height * self.width
    }
}

/// The k, q, v generators used by both memory backends. Keys and values
/// read context frames; queries read query frames. Immutable after
/// construction and shareable across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionSet<T> {
    mode: ProjectionMode,
    key: Projection<T>,
    query: Projection<T>,
    value: Projection<T>,
}

impl<T: Real> ProjectionSet<T> {
    pub fn new(
        mode: ProjectionMode,
        key: Projection<T>,
        query: Projection<T>,
        value: Projection<T>,
    ) -> Result<Self> {
        let conv = matches!(mode, ProjectionMode::Conv3x3);
        if key.is_conv() != conv || query.is_conv() != conv || value.is_conv() != conv {
            return Err(Error::InvalidConfig(
                "projection tap counts do not match the declared mode".into(),
            ));
        }
        if key.out_channels() != query.out_channels() {
            return Err(Error::InvalidConfig(format!(
                "key and query output widths must match, got {} and {}",
                key.out_channels(),
                query.out_channels()
            )));
        }
        if key.in_channels() != value.in_channels() {
            return Err(Error::InvalidConfig(format!(
                "key and value input widths must match, got {} and {}",
                key.in_channels(),
                value.in_channels()
            )));
        }
        Ok(ProjectionSet { mode, key, query, value })
    }

    /// Pseudo-random initialization: weights uniform in `[-1/sqrt(C), 1/sqrt(C)]`
    /// of each projection's input width, no biases.
    pub fn seeded(shape: &ShapeConfig, mode: ProjectionMode, seed: u64) -> Self {
        let mut rng = seeded::rng(seed);
        let taps = |c_in: usize, c_out: usize, rng: &mut ChaCha8Rng| {
            let bound = 1.0 / (c_in as f64).sqrt();
            let n = match mode {
                ProjectionMode::Linear => 1,
                ProjectionMode::Conv3x3 => 9,
            };
            (0..n)
                .map(|_| seeded::uniform_matrix::<T>(c_in, c_out, -bound, bound, rng))
                .collect::<Vec<_>>()
        };
        let build = |taps: Vec<Matrix<T>>| {
            if taps.len() == 1 {
                Projection::linear(taps.into_iter().next().expect("one tap"))
            } else {
                Projection::conv3x3(taps).expect("nine taps")
            }
        };
        let key = build(taps(shape.context_channels, shape.key_channels, &mut rng));
        let query = build(taps(shape.query_channels, shape.key_channels, &mut rng));
        let value = build(taps(shape.context_channels, shape.value_channels, &mut rng));
        ProjectionSet {
            mode,
            key,
            query,
            value,
        }
    }

    pub fn mode(&self) -> ProjectionMode {
        self.mode
    }

    pub fn key(&self) -> &Projection<T> {
        &self.key
    }

    pub fn query(&self) -> &Projection<T> {
        &self.query
    }

    pub fn value(&self) -> &Projection<T> {
        &self.value
    }

    pub fn key_channels(&self) -> usize {
        self.key.out_channels()
    }

    pub fn value_channels(&self) -> usize {
        self.value.out_channels()
    }
}

/// Keys from a context frame: `(H*W) x C_N`. Under
/// [`NormalizationMode::GcDoubleSoftmax`] each column is softmaxed over
/// locations, making every column a distribution over the frame.
pub fn make_keys<T: Real>(
    x: &FeatureMap<T>,
    p: &ProjectionSet<T>,
    norm: NormalizationMode,
) -> Result<Matrix<T>> {
    let mut keys = p.key.apply(x, "key")?;
    match norm {
        NormalizationMode::None => {}
        NormalizationMode::GcDoubleSoftmax => keys.softmax_cols_in_place(),
        NormalizationMode::StmAffinitySoftmax => {
            return Err(Error::InvalidConfig(
                "affinity softmax applies to the query-key affinity, not to stored keys".into(),
            ))
        }
    }
    Ok(keys)
}

/// Queries from the current frame: `(H*W) x C_N`. Under
/// [`NormalizationMode::GcDoubleSoftmax`] each row is softmaxed, making
/// every location's query a distribution over key channels.
pub fn make_queries<T: Real>(
    x: &FeatureMap<T>,
    p: &ProjectionSet<T>,
    norm: NormalizationMode,
) -> Result<Matrix<T>> {
    let mut queries = p.query.apply(x, "query")?;
    match norm {
        NormalizationMode::None => {}
        NormalizationMode::GcDoubleSoftmax => queries.softmax_rows_in_place(),
        NormalizationMode::StmAffinitySoftmax => {
            return Err(Error::InvalidConfig(
                "affinity softmax applies to the query-key affinity, not to queries".into(),
            ))
        }
    }
    Ok(queries)
}

/// Values from a context frame: `(H*W) x C_M`. Never normalized.
pub fn make_values<T: Real>(x: &FeatureMap<T>, p: &ProjectionSet<T>) -> Result<Matrix<T>> {
    p.value.apply(x, "value")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded;

    fn shape() -> ShapeConfig {
        ShapeConfig {
            height: 3,
            width: 4,
            context_channels: 6,
            query_channels: 5,
            key_channels: 4,
            value_channels: 5,
        }
    }

    fn random_map<T: Real>(h: usize, w: usize, c: usize, seed: u64) -> FeatureMap<T> {
        let m = seeded::uniform_matrix::<T>(h * w, c, -1.0, 1.0, &mut seeded::rng(seed));
        FeatureMap::new(h, w, m).unwrap()
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_keys_queries_values() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 1);
        let ctx = FeatureMap::new(3, 4, Matrix::zeros(12, 6)).unwrap();
        let qry = FeatureMap::new(3, 4, Matrix::zeros(12, 5)).unwrap();
        assert_eq!(
            make_keys(&ctx, &p, NormalizationMode::None).unwrap(),
            Matrix::zeros(12, 4)
        );
        assert_eq!(
            make_queries(&qry, &p, NormalizationMode::None).unwrap(),
            Matrix::zeros(12, 4)
        );
        assert_eq!(make_values(&ctx, &p).unwrap(), Matrix::zeros(12, 5));
    }

    #[test]
    fn identity_weights_pass_single_location_through() {
        let key = Projection::linear(Matrix::<f64>::identity(3));
        let query = Projection::linear(Matrix::identity(3));
        let value = Projection::linear(Matrix::identity(3));
        let p = ProjectionSet::new(ProjectionMode::Linear, key, query, value).unwrap();
        let x = FeatureMap::new(
            1,
            1,
            Matrix::from_rows(&[&[0.5f64, -0.25, 2.0]]).unwrap(),
        )
        .unwrap();
        let keys = make_keys(&x, &p, NormalizationMode::None).unwrap();
        assert_eq!(keys, x.values().clone());
    }

    #[test]
    fn double_softmax_normalizes_key_columns_and_query_rows() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 2);
        let ctx = random_map::<f64>(3, 4, 6, 10);
        let qry = random_map::<f64>(3, 4, 5, 11);

        let keys = make_keys(&ctx, &p, NormalizationMode::GcDoubleSoftmax).unwrap();
        for j in 0..keys.cols() {
            let sum: f64 = (0..keys.rows()).map(|i| keys[(i, j)]).sum();
            assert!((sum - 1.0).abs() <= 1e-6);
        }

        let queries = make_queries(&qry, &p, NormalizationMode::GcDoubleSoftmax).unwrap();
        for i in 0..queries.rows() {
            let sum: f64 = queries.row(i).iter().sum();
            assert!((sum - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn implied_attention_rows_sum_to_one_under_double_softmax() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 3);
        let ctx = random_map::<f64>(3, 4, 6, 12);
        let qry = random_map::<f64>(3, 4, 5, 13);
        let keys = make_keys(&ctx, &p, NormalizationMode::GcDoubleSoftmax).unwrap();
        let queries = make_queries(&qry, &p, NormalizationMode::GcDoubleSoftmax).unwrap();
        let attn = queries.matmul_nt(&keys, &mut OpCounters::new()).unwrap();
        for i in 0..attn.rows() {
            let sum: f64 = attn.row(i).iter().sum();
            assert!((sum - 1.0).abs() <= 1e-5);
        }
    }

    #[test]
    fn queries_equal_keys_on_shared_weights() {
        // Same weights and inputs, norm off: the two paths must agree.
        let w = seeded::uniform_matrix::<f64>(5, 4, -0.5, 0.5, &mut seeded::rng(7));
        let p = ProjectionSet::new(
            ProjectionMode::Linear,
            Projection::linear(w.clone()),
            Projection::linear(w.clone()),
            Projection::linear(seeded::uniform_matrix::<f64>(5, 3, -0.5, 0.5, &mut seeded::rng(8))),
        )
        .unwrap();
        let x = random_map::<f64>(2, 3, 5, 14);
        assert_eq!(
            make_keys(&x, &p, NormalizationMode::None).unwrap(),
            make_queries(&x, &p, NormalizationMode::None).unwrap()
        );
    }

    #[test]
    fn hand_computed_values_on_2x2_map() {
        // One input channel pair, hand-set weights, verified by hand.
        let value_w = Matrix::from_rows(&[&[1.0f64, 0.0], &[0.0, 2.0]]).unwrap();
        let p = ProjectionSet::new(
            ProjectionMode::Linear,
            Projection::linear(Matrix::identity(2)),
            Projection::linear(Matrix::identity(2)),
            Projection::linear(value_w),
        )
        .unwrap();
        let x = FeatureMap::new(
            2,
            2,
            Matrix::from_rows(&[
                &[1.0f64, 1.0],
                &[2.0, 0.5],
                &[0.0, -1.0],
                &[3.0, 0.25],
            ])
            .unwrap(),
        )
        .unwrap();
        let values = make_values(&x, &p).unwrap();
        let want = Matrix::from_rows(&[
            &[1.0f64, 2.0],
            &[2.0, 1.0],
            &[0.0, -2.0],
            &[3.0, 0.5],
        ])
        .unwrap();
        assert!(values.max_abs_diff(&want) <= 1e-12);
    }

    #[test]
    fn channel_mismatch_is_reported_with_role() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 4);
        let bad = random_map::<f64>(3, 4, 5, 15); // 5 channels where keys need 6
        let err = make_keys(&bad, &p, NormalizationMode::None).unwrap_err();
        assert_eq!(
            err,
            Error::ChannelMismatch {
                role: "key",
                expected: 6,
                got: 5
            }
        );
    }

    #[test]
    fn affinity_softmax_is_rejected_for_projections() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 5);
        let ctx = random_map::<f64>(3, 4, 6, 16);
        assert!(matches!(
            make_keys(&ctx, &p, NormalizationMode::StmAffinitySoftmax),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn linear_projections_commute_with_location_permutation() {
        let p = ProjectionSet::<f64>::seeded(&shape(), ProjectionMode::Linear, 6);
        let x = random_map::<f64>(3, 4, 6, 17);
        let keys = make_keys(&x, &p, NormalizationMode::None).unwrap();

        // Reverse the locations and re-project.
        let n = x.locations();
        let permuted = Matrix::from_fn(n, x.channels(), |i, j| x.values()[(n - 1 - i, j)]);
        let px = FeatureMap::new(3, 4, permuted).unwrap();
        let pkeys = make_keys(&px, &p, NormalizationMode::None).unwrap();
        for i in 0..n {
            assert_eq!(pkeys.row(i), keys.row(n - 1 - i));
        }
    }

    #[test]
    fn conv3x3_on_constant_map_matches_linear_interior() {
        // Nine equal taps summing to W: interior outputs equal the linear
        // projection with weights W on a constant map; borders differ from
        // zero padding.
        let shape = ShapeConfig {
            height: 4,
            width: 5,
            context_channels: 3,
            query_channels: 3,
            key_channels: 2,
            value_channels: 2,
        };
        let w = seeded::uniform_matrix::<f64>(3, 2, -1.0, 1.0, &mut seeded::rng(20));
        let ninth = w.clone().scaled(1.0 / 9.0);
        let conv_value = Projection::conv3x3(vec![ninth; 9]).unwrap();
        let conv = ProjectionSet::new(
            ProjectionMode::Conv3x3,
            Projection::conv3x3(vec![Matrix::zeros(3, 2); 9]).unwrap(),
            Projection::conv3x3(vec![Matrix::zeros(3, 2); 9]).unwrap(),
            conv_value,
        )
        .unwrap();
        let linear = ProjectionSet::new(
            ProjectionMode::Linear,
            Projection::linear(Matrix::zeros(3, 2)),
            Projection::linear(Matrix::zeros(3, 2)),
            Projection::linear(w),
        )
        .unwrap();

        let constant = FeatureMap::from_fn(shape.height, shape.width, 3, |_, _| {
            vec![0.3f64, -0.7, 1.1]
        })
        .unwrap();
        let conv_out = make_values(&constant, &conv).unwrap();
        let lin_out = make_values(&constant, &linear).unwrap();
        for y in 1..shape.height - 1 {
            for x in 1..shape.width - 1 {
                let loc = y * shape.width + x;
                for ch in 0..2 {
                    assert!((conv_out[(loc, ch)] - lin_out[(loc, ch)]).abs() <= 1e-12);
                }
            }
        }
        // A corner sees only 4 of 9 taps.
        for ch in 0..2 {
            assert!((conv_out[(0, ch)] - lin_out[(0, ch)] * 4.0 / 9.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn bias_is_added_per_output_channel() {
        let w = Matrix::<f64>::zeros(3, 2);
        let proj = Projection::linear(w).with_bias(vec![0.5, -1.0]).unwrap();
        let p = ProjectionSet::new(
            ProjectionMode::Linear,
            proj,
            Projection::linear(Matrix::zeros(3, 2)),
            Projection::linear(Matrix::zeros(3, 2)),
        )
        .unwrap();
        let x = random_map::<f64>(2, 2, 3, 18);
        let keys = make_keys(&x, &p, NormalizationMode::None).unwrap();
        for i in 0..4 {
            assert_eq!(keys.row(i), &[0.5, -1.0]);
        }
    }
}
