//! `gcvos segment`: streaming mask propagation on a synthetic clip,
//! first-frame mask in, per-frame soft masks and IoU out.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use gc_core::matrix::{Dtype, Real};
use gc_core::pipeline::{
    designed_projection, run_sequence, DESIGNED_POSITION_WEIGHT, DESIGNED_SHARPNESS,
};
use gc_core::video::{generate_video, VideoSpec};

use crate::commands::{BackendArg, DtypeArg, NormArg};
use crate::report::{self, SegmentJsonReport};
use crate::{pgm, resolve_out};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ClipPreset {
    /// Static square on a contrasting background.
    StaticSquare,
    /// Disc that drifts and grows.
    MovingDisc,
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    /// Video spec JSON; omit to use a preset clip.
    #[arg(long)]
    pub video: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ClipPreset::StaticSquare)]
    pub clip: ClipPreset,
    /// Preset frame edge length in pixels.
    #[arg(long, default_value_t = 16)]
    pub size: usize,
    /// Preset frame count.
    #[arg(long, default_value_t = 30)]
    pub frames: usize,
    /// Preset generator seed.
    #[arg(long, default_value_t = 11)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = BackendArg::Gc)]
    pub backend: BackendArg,
    #[arg(long, value_enum, default_value_t = NormArg::DoubleSoftmax)]
    pub norm: NormArg,
    #[arg(long, value_enum, default_value_t = DtypeArg::F32)]
    pub dtype: DtypeArg,
    #[arg(long, default_value_t = DESIGNED_SHARPNESS)]
    pub sharpness: f64,
    #[arg(long, default_value_t = DESIGNED_POSITION_WEIGHT)]
    pub position_weight: f64,
    /// Mean IoU the run must reach to pass.
    #[arg(long, default_value_t = 0.8)]
    pub iou_threshold: f64,
    #[arg(long, default_value = "segment_report.json")]
    pub out: PathBuf,
    /// Directory for per-frame PGM mask dumps.
    #[arg(long)]
    pub dump_masks: Option<PathBuf>,
}

pub fn run(args: &SegmentArgs) -> Result<bool> {
    match Dtype::from(args.dtype) {
        Dtype::F32 => run_typed::<f32>(args),
        Dtype::F64 => run_typed::<f64>(args),
    }
}

fn run_typed<T: Real>(args: &SegmentArgs) -> Result<bool> {
    let spec: VideoSpec = match &args.video {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("opening {}", path.display()))?;
            serde_json::from_str(&text).context("parsing video spec")?
        }
        None => match args.clip {
            ClipPreset::StaticSquare => VideoSpec::static_square(args.size, args.frames, args.seed),
            ClipPreset::MovingDisc => VideoSpec::moving_disc(args.size, args.frames, args.seed),
        },
    };

    let video = generate_video::<T>(&spec)?;
    let p = designed_projection::<T>(args.sharpness, args.position_weight);
    let result = run_sequence(&video, args.backend.into(), &p, args.norm.into())?;

    let masks_dir = match &args.dump_masks {
        Some(dir) => {
            let dir = resolve_out(dir);
            for (i, mask) in result.predicted_masks.iter().enumerate() {
                pgm::write_mask(&dir.join(format!("mask_{i:04}.pgm")), mask)?;
            }
            Some(dir.display().to_string())
        }
        None => None,
    };

    let pass = result.mean_iou >= args.iou_threshold;
    let json = SegmentJsonReport {
        backend: args.backend.into(),
        norm: args.norm.into(),
        video: spec,
        sharpness: args.sharpness,
        position_weight: args.position_weight,
        iou_threshold: args.iou_threshold,
        per_frame_iou: result.per_frame_iou.clone(),
        mean_iou: result.mean_iou,
        pass,
        masks_dir,
    };
    report::write_json(&resolve_out(&args.out), &json)?;

    println!(
        "segment: {}: {} frames, backend {}, mean IoU {:.3} (threshold {:.2})",
        if pass { "PASS" } else { "FAIL" },
        result.predicted_masks.len(),
        json.backend,
        result.mean_iou,
        args.iou_threshold,
    );
    Ok(pass)
}
