//! Synthetic video generation for the streaming segmentation pipeline.
//!
//! One colored object moves over a background, optionally changing size and
//! passing behind an occluder strip. Ground-truth masks cover the visible
//! object pixels, so occlusion genuinely removes mask area. Everything is
//! deterministic in the spec's seed.

use alloc::format;
use alloc::vec::Vec;

// Inherent float math (sqrt, powi) is std-only; no_std builds need the trait.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Real;
use crate::seeded;

/// RGB color with components in `[0, 1]`.
pub type Color = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "kind"))]
pub enum ObjectShape {
    /// Axis-aligned square; `half_extent` is half the side length in
    /// pixels at scale 1.
    Square { half_extent: f64 },
    /// Disc of `radius` pixels at scale 1.
    Disc { radius: f64 },
}

impl ObjectShape {
    fn covers(&self, dx: f64, dy: f64, scale: f64) -> bool {
        match *self {
            ObjectShape::Square { half_extent } => {
                dx.abs() <= half_extent * scale && dy.abs() <= half_extent * scale
            }
            ObjectShape::Disc { radius } => dx * dx + dy * dy <= (radius * scale).powi(2),
        }
    }

    fn max_radius(&self, scale: f64) -> f64 {
        match *self {
            ObjectShape::Square { half_extent } => half_extent * scale * core::f64::consts::SQRT_2,
            ObjectShape::Disc { radius } => radius * scale,
        }
    }
}

/// Vertical strip drawn over the scene for a range of frames, hiding
/// whatever it covers.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Occluder {
    /// First frame (0-based) the strip is present.
    pub from_frame: usize,
    /// Last frame (inclusive) the strip is present.
    pub to_frame: usize,
    /// Strip spans columns `x0 <= x < x1`.
    pub x0: usize,
    pub x1: usize,
    pub color: Color,
}

/// Generator parameters for one clip.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VideoSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub shape: ObjectShape,
    /// Object center on the first frame, in pixels.
    pub start: (f64, f64),
    /// Center displacement per frame, in pixels.
    pub velocity: (f64, f64),
    /// Object scale on the first and last frame; interpolated linearly
    /// in between.
    pub scale_start: f64,
    pub scale_end: f64,
    pub object_color: Color,
    pub background_color: Color,
    /// Uniform per-pixel, per-channel color noise amplitude.
    pub noise_amplitude: f64,
    pub occluder: Option<Occluder>,
    pub seed: u64,
}

impl VideoSpec {
    /// Static square centered in the frame; the easiest tracking target.
    pub fn static_square(size: usize, frames: usize, seed: u64) -> Self {
        VideoSpec {
            width: size,
            height: size,
            frames,
            shape: ObjectShape::Square {
                half_extent: size as f64 / 5.0,
            },
            start: (size as f64 / 2.0, size as f64 / 2.0),
            velocity: (0.0, 0.0),
            scale_start: 1.0,
            scale_end: 1.0,
            object_color: [0.9, 0.15, 0.1],
            background_color: [0.1, 0.25, 0.85],
            noise_amplitude: 0.02,
            occluder: None,
            seed,
        }
    }

    /// Disc drifting across the frame while growing; exercises motion and
    /// size change.
    pub fn moving_disc(size: usize, frames: usize, seed: u64) -> Self {
        let travel = size as f64 * 0.35;
        VideoSpec {
            width: size,
            height: size,
            frames,
            shape: ObjectShape::Disc {
                radius: size as f64 / 6.0,
            },
            start: (size as f64 * 0.33, size as f64 * 0.38),
            velocity: (
                travel / frames.max(2) as f64,
                travel * 0.6 / frames.max(2) as f64,
            ),
            scale_start: 0.8,
            scale_end: 1.3,
            object_color: [0.85, 0.8, 0.1],
            background_color: [0.2, 0.1, 0.3],
            noise_amplitude: 0.02,
            occluder: None,
            seed,
        }
    }
}

/// One rendered frame: H*W RGB triples in location-major order, values
/// clamped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame<T> {
    pub height: usize,
    pub width: usize,
    /// `height * width * 3` values, channel-fastest.
    pub rgb: Vec<T>,
}

impl<T: Real> Frame<T> {
    pub fn pixel(&self, y: usize, x: usize) -> [T; 3] {
        let base = (y * self.width + x) * 3;
        [self.rgb[base], self.rgb[base + 1], self.rgb[base + 2]]
    }
}

/// Soft mask: H*W values in `[0, 1]`, location-major. Ground-truth masks
/// hold exact zeros and ones.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> Mask<T> {
    pub fn value(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    /// Pixel count after thresholding at 0.5.
    pub fn area(&self) -> usize {
        let half = T::from_f64(0.5);
        self.data.iter().filter(|&&v| v > half).count()
    }

    /// Centroid of the thresholded mask, or `None` when empty.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let half = T::from_f64(0.5);
        let mut n = 0usize;
        let (mut sx, mut sy) = (0.0f64, 0.0f64);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.value(y, x) > half {
                    n += 1;
                    sx += x as f64;
                    sy += y as f64;
                }
            }
        }
        if n == 0 {
            None
        } else {
            Some((sx / n as f64, sy / n as f64))
        }
    }
}

/// Frames plus ground-truth visibility masks; the first mask is the
/// pipeline's supervision input.
#[derive(Clone, Debug)]
pub struct SyntheticVideo<T> {
    pub frames: Vec<Frame<T>>,
    pub masks: Vec<Mask<T>>,
    pub spec: VideoSpec,
}

/// Render the clip described by `spec`. Fails when the object cannot keep
/// at least half of its extent inside the frame on every frame.
pub fn generate_video<T: Real>(spec: &VideoSpec) -> Result<SyntheticVideo<T>> {
    if spec.width == 0 || spec.height == 0 || spec.frames == 0 {
        return Err(Error::InvalidConfig(
            "video needs positive dimensions and at least one frame".into(),
        ));
    }
    if let Some(occ) = &spec.occluder {
        if occ.x1 <= occ.x0 || occ.x1 > spec.width {
            return Err(Error::InvalidConfig(format!(
                "occluder strip [{}, {}) does not fit a width-{} frame",
                occ.x0, occ.x1, spec.width
            )));
        }
    }

    let mut rng = seeded::rng(spec.seed);
    let mut frames = Vec::with_capacity(spec.frames);
    let mut masks = Vec::with_capacity(spec.frames);

    for f in 0..spec.frames {
        let progress = if spec.frames <= 1 {
            0.0
        } else {
            f as f64 / (spec.frames - 1) as f64
        };
        let scale = spec.scale_start + (spec.scale_end - spec.scale_start) * progress;
        let cx = spec.start.0 + spec.velocity.0 * f as f64;
        let cy = spec.start.1 + spec.velocity.1 * f as f64;

        let radius = spec.shape.max_radius(scale);
        if radius * 2.0 >= spec.width.min(spec.height) as f64 {
            return Err(Error::InvalidConfig(format!(
                "object extent {:.1}px does not fit a {}x{} frame",
                radius * 2.0,
                spec.width,
                spec.height
            )));
        }
        if cx < 0.0 || cx >= spec.width as f64 || cy < 0.0 || cy >= spec.height as f64 {
            return Err(Error::InvalidConfig(format!(
                "object center ({cx:.1}, {cy:.1}) leaves the frame at frame {f}"
            )));
        }

        let occluded = |x: usize| {
            spec.occluder.as_ref().is_some_and(|o| {
                f >= o.from_frame && f <= o.to_frame && x >= o.x0 && x < o.x1
            })
        };

        let mut rgb = Vec::with_capacity(spec.height * spec.width * 3);
        let mut mask = Vec::with_capacity(spec.height * spec.width);
        for y in 0..spec.height {
            for x in 0..spec.width {
                let on_object =
                    spec.shape.covers(x as f64 - cx, y as f64 - cy, scale) && !occluded(x);
                let base = if occluded(x) {
                    spec.occluder.as_ref().expect("checked").color
                } else if on_object {
                    spec.object_color
                } else {
                    spec.background_color
                };
                for ch in base {
                    let noise = if spec.noise_amplitude > 0.0 {
                        rng.gen_range(-spec.noise_amplitude..spec.noise_amplitude)
                    } else {
                        0.0
                    };
                    rgb.push(T::from_f64((ch + noise).clamp(0.0, 1.0)));
                }
                mask.push(if on_object { T::one() } else { T::zero() });
            }
        }
        frames.push(Frame {
            height: spec.height,
            width: spec.width,
            rgb,
        });
        masks.push(Mask {
            height: spec.height,
            width: spec.width,
            data: mask,
        });
    }

    Ok(SyntheticVideo {
        frames,
        masks,
        spec: spec.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_square_masks_are_identical() {
        let spec = VideoSpec::static_square(16, 10, 1);
        let video = generate_video::<f32>(&spec).unwrap();
        assert_eq!(video.frames.len(), 10);
        for m in &video.masks[1..] {
            assert_eq!(m, &video.masks[0]);
        }
        assert!(video.masks[0].area() > 0);
    }

    #[test]
    fn linear_trajectory_moves_the_centroid_by_the_velocity() {
        let mut spec = VideoSpec::static_square(32, 6, 2);
        spec.shape = ObjectShape::Square { half_extent: 4.5 };
        spec.start = (10.0, 12.0);
        spec.velocity = (2.0, 1.0);
        let video = generate_video::<f64>(&spec).unwrap();
        let mut prev = video.masks[0].centroid().unwrap();
        for m in &video.masks[1..] {
            let cur = m.centroid().unwrap();
            assert!((cur.0 - prev.0 - 2.0).abs() <= 1e-9);
            assert!((cur.1 - prev.1 - 1.0).abs() <= 1e-9);
            prev = cur;
        }
    }

    #[test]
    fn occlusion_drops_mask_area_and_recovers() {
        let mut spec = VideoSpec::static_square(20, 10, 3);
        spec.occluder = Some(Occluder {
            from_frame: 5,
            to_frame: 7,
            x0: 6,
            x1: 14,
            color: [0.0, 0.0, 0.0],
        });
        let video = generate_video::<f32>(&spec).unwrap();
        let base = video.masks[0].area();
        for f in 5..=7 {
            assert!(video.masks[f].area() < base, "frame {f} should lose area");
        }
        assert_eq!(video.masks[9].area(), base);
    }

    #[test]
    fn oversized_object_is_rejected() {
        let mut spec = VideoSpec::static_square(10, 3, 4);
        spec.shape = ObjectShape::Square { half_extent: 9.0 };
        assert!(matches!(
            generate_video::<f32>(&spec),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let spec = VideoSpec::moving_disc(16, 8, 9);
        let a = generate_video::<f32>(&spec).unwrap();
        let b = generate_video::<f32>(&spec).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.masks, b.masks);
    }

    #[test]
    fn size_change_grows_the_mask() {
        let spec = VideoSpec::moving_disc(24, 12, 5);
        let video = generate_video::<f64>(&spec).unwrap();
        let first = video.masks[0].area();
        let last = video.masks[11].area();
        assert!(last > first, "disc should grow: {first} -> {last}");
    }
}
