//! Streaming mask propagation on synthetic clips.
//!
//! The loop mirrors inference: the first frame's ground-truth mask seeds
//! the memory; every later frame is answered from memory, decoded to a soft
//! mask, scored against ground truth, and fed back (unthresholded) into the
//! context encoding of that frame. Either memory backend can sit behind the
//! loop.
//!
//! There is no learned decoder. The value projection is constructed so
//! value channel 0 carries the mask indicator; under double-softmax
//! normalization the distributed channel 0 is a convex combination of
//! stored mask values, i.e. an attention-weighted foreground probability.

use alloc::vec::Vec;

use crate::counters::OpCounters;
use crate::error::{Error, Result};
use crate::gc::{self, GlobalContext};
use crate::matrix::{Matrix, Real};
use crate::projection::{FeatureMap, NormalizationMode, Projection, ProjectionMode, ProjectionSet};
use crate::stm::{self, StmMemory};
use crate::video::{Frame, Mask, SyntheticVideo};

/// Which memory answers the queries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Backend {
    Gc,
    Stm,
}

impl core::fmt::Display for Backend {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Backend::Gc => write!(f, "gc"),
            Backend::Stm => write!(f, "stm"),
        }
    }
}

/// Per-pixel features: `[r, g, b, x/W, y/H]` plus the mask value when a
/// mask is supplied. Context frames therefore encode 6 channels, query
/// frames 5.
pub fn encode_frame<T: Real>(frame: &Frame<T>, mask: Option<&Mask<T>>) -> Result<FeatureMap<T>> {
    if let Some(m) = mask {
        if m.height != frame.height || m.width != frame.width {
            return Err(Error::ShapeMismatch {
                op: "encode_frame",
                left: (frame.height, frame.width),
                right: (m.height, m.width),
            });
        }
    }
    let channels = if mask.is_some() { 6 } else { 5 };
    let w = T::from_f64(frame.width as f64);
    let h = T::from_f64(frame.height as f64);
    let mut data = Vec::with_capacity(frame.height * frame.width * channels);
    for y in 0..frame.height {
        for x in 0..frame.width {
            let [r, g, b] = frame.pixel(y, x);
            data.push(r);
            data.push(g);
            data.push(b);
            data.push(T::from_f64(x as f64) / w);
            data.push(T::from_f64(y as f64) / h);
            if let Some(m) = mask {
                data.push(m.value(y, x));
            }
        }
    }
    FeatureMap::new(
        frame.height,
        frame.width,
        Matrix::from_vec(frame.height * frame.width, channels, data)?,
    )
}

/// Number of key/query channels the designed projection emits.
pub const DESIGNED_KEY_CHANNELS: usize = 10;
/// Number of value channels: mask indicator plus appearance passthrough.
pub const DESIGNED_VALUE_CHANNELS: usize = 6;

/// Sharpness the pipeline defaults were validated at.
pub const DESIGNED_SHARPNESS: f64 = 24.0;
/// Position-channel damping the pipeline defaults were validated at.
pub const DESIGNED_POSITION_WEIGHT: f64 = 0.25;

/// Hand-constructed projections for the analytic decoder.
///
/// Keys and queries project each appearance channel `f` to a complement
/// pair: `sharpness * f` and `sharpness * (1 - f)` (position channels
/// additionally damped by `position_weight`), and ignore the mask channel,
/// so context keys and query keys live in the same space. Under double
/// softmax a query pixel concentrates on the channels where its own
/// features are extreme (the complement makes a dim feature just as
/// extreme as a bright one, which keeps background queries sharp instead of
/// diffuse), and each key column concentrates on the locations extreme in
/// the same sense, which is what makes attention follow appearance. The
/// soft-mask feedback loop tolerates only a small attention leak from
/// background queries onto object-voting channels (any constant leak
/// compounds frame over frame), and the leak falls off exponentially in
/// `sharpness`.
///
/// The value projection passes the mask indicator to channel 0 and the
/// appearance channels behind it.
pub fn designed_projection<T: Real>(sharpness: f64, position_weight: f64) -> ProjectionSet<T> {
    let gain = |ch: usize| {
        if ch < 3 {
            sharpness
        } else {
            sharpness * position_weight
        }
    };
    // Channel ch: +gain * f; channel 5+ch: gain * (1 - f) via negative
    // weight and a bias of +gain.
    let mut bias = alloc::vec![T::zero(); DESIGNED_KEY_CHANNELS];
    for ch in 0..5 {
        bias[5 + ch] = T::from_f64(gain(ch));
    }
    let fill = |rows: usize| {
        let mut w = Matrix::zeros(rows, DESIGNED_KEY_CHANNELS).into_vec();
        for ch in 0..5 {
            w[ch * DESIGNED_KEY_CHANNELS + ch] = T::from_f64(gain(ch));
            w[ch * DESIGNED_KEY_CHANNELS + 5 + ch] = T::from_f64(-gain(ch));
        }
        Matrix::from_vec(rows, DESIGNED_KEY_CHANNELS, w).expect("sized above")
    };
    let query_w = fill(5);
    // Keys see the 6-channel context encoding; the mask row stays zero.
    let key_w = fill(6);

    let mut value_w = Matrix::zeros(6, DESIGNED_VALUE_CHANNELS).into_vec();
    value_w[5 * DESIGNED_VALUE_CHANNELS] = T::one(); // mask -> channel 0
    for ch in 0..5 {
        value_w[ch * DESIGNED_VALUE_CHANNELS + 1 + ch] = T::one();
    }
    let value_w = Matrix::from_vec(6, DESIGNED_VALUE_CHANNELS, value_w).expect("sized above");

    ProjectionSet::new(
        ProjectionMode::Linear,
        Projection::linear(key_w).with_bias(bias.clone()).expect("channel count matches"),
        Projection::linear(query_w).with_bias(bias).expect("channel count matches"),
        Projection::linear(value_w),
    )
    .expect("designed dimensions are consistent")
}

/// Predicted masks and scores for one clip. `predicted_masks[0]` is the
/// supervision mask passed through; `per_frame_iou[i]` scores
/// `predicted_masks[i + 1]`, and `mean_iou` averages those predicted
/// frames.
#[derive(Clone, Debug)]
pub struct SegmentationResult<T> {
    pub predicted_masks: Vec<Mask<T>>,
    pub per_frame_iou: Vec<f64>,
    pub mean_iou: f64,
}

/// Intersection-over-union of two masks thresholded at 0.5. Two empty
/// masks score 1.
pub fn compute_iou<T: Real>(pred: &Mask<T>, gt: &Mask<T>) -> Result<f64> {
    if pred.height != gt.height || pred.width != gt.width {
        return Err(Error::ShapeMismatch {
            op: "compute_iou",
            left: (pred.height, pred.width),
            right: (gt.height, gt.width),
        });
    }
    let half = T::from_f64(0.5);
    let mut intersection = 0u64;
    let mut union = 0u64;
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        let p = p > half;
        let g = g > half;
        if p && g {
            intersection += 1;
        }
        if p || g {
            union += 1;
        }
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(intersection as f64 / union as f64)
    }
}

fn mask_from_read<T: Real>(out: &Matrix<T>, height: usize, width: usize) -> Mask<T> {
    let zero = T::zero();
    let one = T::one();
    let data = (0..out.rows())
        .map(|loc| {
            let v = out[(loc, 0)];
            if v < zero {
                zero
            } else if v > one {
                one
            } else {
                v
            }
        })
        .collect();
    Mask {
        height,
        width,
        data,
    }
}

/// Run the streaming loop over a clip: seed the memory with the first
/// frame and its ground-truth mask, then for every later frame read from
/// memory, decode the soft mask, score it, and absorb the frame with the
/// soft (unthresholded) mask fed back into the context encoding.
pub fn run_sequence<T: Real>(
    video: &SyntheticVideo<T>,
    backend: Backend,
    p: &ProjectionSet<T>,
    norm: NormalizationMode,
) -> Result<SegmentationResult<T>> {
    if video.frames.is_empty() {
        return Err(Error::InvalidConfig("video has no frames".into()));
    }
    if video.frames.len() != video.masks.len() {
        return Err(Error::InvalidConfig(
            "video frames and ground-truth masks differ in length".into(),
        ));
    }
    let (height, width) = (video.frames[0].height, video.frames[0].width);
    let mut scratch = OpCounters::new();

    enum Memory<T> {
        Gc(GlobalContext<T>),
        Stm(StmMemory<T>),
    }
    let mut memory = match backend {
        Backend::Gc => Memory::Gc(GlobalContext::empty(p.key_channels(), p.value_channels())),
        Backend::Stm => Memory::Stm(StmMemory::empty(p.key_channels(), p.value_channels())),
    };
    // Extraction under double softmax normalizes stored keys per frame;
    // the memory backend's affinity softmax instead normalizes at read
    // time, so its write path is always unnormalized.
    let extract_norm = match norm {
        NormalizationMode::GcDoubleSoftmax => NormalizationMode::GcDoubleSoftmax,
        _ => NormalizationMode::None,
    };

    let absorb = |memory: &mut Memory<T>, ctx: &FeatureMap<T>| -> Result<()> {
        match memory {
            Memory::Gc(g) => {
                let c = gc::extract(ctx, p, extract_norm, &mut OpCounters::new())?;
                *g = gc::update(g, &c)?;
            }
            Memory::Stm(m) => {
                let (k, v) = stm::produce(ctx, p, &mut OpCounters::new())?;
                m.push(k, v)?;
            }
        }
        Ok(())
    };

    let first_ctx = encode_frame(&video.frames[0], Some(&video.masks[0]))?;
    absorb(&mut memory, &first_ctx)?;

    let mut predicted = Vec::with_capacity(video.frames.len());
    predicted.push(video.masks[0].clone());
    let mut per_frame_iou = Vec::with_capacity(video.frames.len() - 1);

    for t in 1..video.frames.len() {
        let query = encode_frame(&video.frames[t], None)?;
        let out = match &memory {
            Memory::Gc(g) => gc::distribute(&query, g, p, norm, &mut scratch)?,
            Memory::Stm(m) => stm::read(&query, m, p, norm, &mut scratch)?,
        };
        let soft = mask_from_read(&out, height, width);
        per_frame_iou.push(compute_iou(&soft, &video.masks[t])?);

        let ctx = encode_frame(&video.frames[t], Some(&soft))?;
        absorb(&mut memory, &ctx)?;
        predicted.push(soft);
    }

    let mean_iou = per_frame_iou.iter().sum::<f64>() / per_frame_iou.len().max(1) as f64;
    Ok(SegmentationResult {
        predicted_masks: predicted,
        per_frame_iou,
        mean_iou,
    })
}
