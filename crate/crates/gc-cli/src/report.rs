//! Report emission: JSON for machines, CSV summaries, and the rendered
//! cost table. Schemas are frozen by golden files under `tests/golden/`.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use gc_core::cost::{CostReport, MeasurementMode};
use gc_core::equivalence::EquivalenceReport;
use gc_core::matrix::Dtype;
use gc_core::projection::{ProjectionMode, ShapeConfig};
use serde::Serialize;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

// ---------------------------------------------------------------- equiv --

pub const EQUIV_CSV_HEADER: &str = "seed,dtype,frames,max_abs_diff,max_rel_diff";

#[derive(Serialize)]
pub struct EquivSeedEntry {
    pub seed: u64,
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
    pub per_frame_max_abs_diff: Vec<f64>,
    pub per_frame_rel_diff: Vec<f64>,
}

impl EquivSeedEntry {
    pub fn new(seed: u64, report: &EquivalenceReport) -> Self {
        EquivSeedEntry {
            seed,
            max_abs_diff: report.max_abs_diff(),
            max_rel_diff: report.max_rel_diff(),
            per_frame_max_abs_diff: report.per_frame_max_abs_diff.clone(),
            per_frame_rel_diff: report.per_frame_rel_diff.clone(),
        }
    }
}

#[derive(Serialize)]
pub struct EquivJsonReport {
    pub dtype: Dtype,
    pub mode: ProjectionMode,
    pub shape: ShapeConfig,
    pub frames: usize,
    pub seeds: u64,
    pub seed_start: u64,
    /// Frozen bound applied for this dtype, when one applies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_abs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_rel: Option<f64>,
    pub worst_abs_diff: f64,
    pub worst_rel_diff: f64,
    pub pass: bool,
    pub per_seed: Vec<EquivSeedEntry>,
}

pub fn equiv_csv(dtype: Dtype, frames: usize, per_seed: &[EquivSeedEntry]) -> String {
    let mut out = String::from(EQUIV_CSV_HEADER);
    out.push('\n');
    for entry in per_seed {
        out.push_str(&format!(
            "{},{dtype},{frames},{:e},{:e}\n",
            entry.seed, entry.max_abs_diff, entry.max_rel_diff
        ));
    }
    out
}

// ----------------------------------------------------------------- cost --

pub const COST_CSV_HEADER: &str =
    "module,t,analytic_mults,measured_mults,persistent_bytes,transient_bytes";

pub fn cost_csv(rows: &[CostReport]) -> String {
    let mut out = String::from(COST_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.module, r.frames, r.analytic_mults, r.measured_mults, r.persistent_bytes,
            r.transient_bytes
        ));
    }
    out
}

/// Rendered comparison table: one line per configuration, FLOPs in G and
/// memory in decimal MB, global-context rows printed with `t = any` since
/// neither quantity depends on the frame count.
pub fn cost_table(rows: &[CostReport]) -> String {
    let mut out = String::new();
    out.push_str("module       t       read FLOPs    read memory\n");
    let mut extrapolated = false;
    for r in rows {
        let t = match r.module {
            gc_core::cost::ModuleKind::Gc => "any".to_string(),
            gc_core::cost::ModuleKind::Stm => r.frames.to_string(),
        };
        let mark = if r.measurement == MeasurementMode::ExtrapolatedFromT1 {
            extrapolated = true;
            "*"
        } else {
            ""
        };
        out.push_str(&format!(
            "{:<10}   {:<5}   {:>8.3} G    {:>8.2} MB{}\n",
            r.module.to_string(),
            t,
            r.analytic_mults as f64 / 1e9,
            (r.persistent_bytes + r.transient_bytes) as f64 / 1e6,
            mark,
        ));
    }
    if extrapolated {
        out.push_str("* measured count extrapolated from a single-frame run (read cost is exactly linear in t)\n");
    }
    out
}

#[derive(Serialize)]
pub struct CostJsonReport {
    pub seed: u64,
    pub rows: Vec<CostReport>,
    pub all_measured_equal_analytic: bool,
    pub pass: bool,
}

// --------------------------------------------------------------- stream --

pub const STREAM_CSV_HEADER: &str = "frame,module,persistent_floats,read_mults";

#[derive(Serialize)]
pub struct StreamJsonReport {
    pub frames: usize,
    pub shape: ShapeConfig,
    pub seed: u64,
    pub gc_persistent_flat: bool,
    pub gc_read_mults_constant: bool,
    pub gc_persistent_floats: u64,
    pub stm_persistent_linear: bool,
    pub stm_growth_per_frame: u64,
    pub pass: bool,
}

// -------------------------------------------------------------- segment --

#[derive(Serialize)]
pub struct SegmentJsonReport {
    pub backend: gc_core::pipeline::Backend,
    pub norm: gc_core::projection::NormalizationMode,
    pub video: gc_core::video::VideoSpec,
    pub sharpness: f64,
    pub position_weight: f64,
    pub iou_threshold: f64,
    pub per_frame_iou: Vec<f64>,
    pub mean_iou: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub masks_dir: Option<String>,
}
