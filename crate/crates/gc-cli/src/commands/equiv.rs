//! `gcvos equiv`: drive both backends over seeded random sequences and
//! verify their reads agree under the frozen tolerance for the dtype.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use gc_core::equivalence::{random_sequence, run_equivalence};
use gc_core::matrix::{Dtype, Real};
use gc_core::projection::{NormalizationMode, ProjectionSet, ShapeConfig};
use gc_core::tolerances;

use crate::commands::{DtypeArg, ModeArg};
use crate::manifest;
use crate::report::{self, EquivJsonReport, EquivSeedEntry};
use crate::resolve_out;

#[derive(Args, Debug)]
pub struct EquivArgs {
    /// Number of seeds to sweep.
    #[arg(long, default_value_t = 100)]
    pub seeds: u64,
    /// First seed of the sweep.
    #[arg(long, default_value_t = 0)]
    pub seed_start: u64,
    /// Frames per sequence.
    #[arg(long, default_value_t = 16)]
    pub frames: usize,
    #[arg(long, default_value_t = 8)]
    pub height: usize,
    #[arg(long, default_value_t = 8)]
    pub width: usize,
    /// Context-frame input channels (mask channel included).
    #[arg(long, default_value_t = 6)]
    pub context_channels: usize,
    /// Query-frame input channels.
    #[arg(long, default_value_t = 5)]
    pub query_channels: usize,
    /// Key/query output channels.
    #[arg(long, default_value_t = 4)]
    pub key_channels: usize,
    /// Value output channels.
    #[arg(long, default_value_t = 5)]
    pub value_channels: usize,
    #[arg(long, value_enum, default_value_t = DtypeArg::F64)]
    pub dtype: DtypeArg,
    /// Projection kind for seeded weights.
    #[arg(long, value_enum, default_value_t = ModeArg::Linear)]
    pub mode: ModeArg,
    /// Projection manifest to load fixed weights from (channel counts then
    /// come from the manifest; height and width still from flags).
    #[arg(long)]
    pub projection: Option<PathBuf>,
    /// JSON report path.
    #[arg(long, default_value = "equiv_report.json")]
    pub out: PathBuf,
    /// CSV summary path.
    #[arg(long, default_value = "equiv_summary.csv")]
    pub csv: PathBuf,
}

pub fn run(args: &EquivArgs) -> Result<bool> {
    match Dtype::from(args.dtype) {
        Dtype::F32 => run_typed::<f32>(args),
        Dtype::F64 => run_typed::<f64>(args),
    }
}

fn run_typed<T: Real>(args: &EquivArgs) -> Result<bool> {
    let mut shape = ShapeConfig {
        height: args.height,
        width: args.width,
        context_channels: args.context_channels,
        query_channels: args.query_channels,
        key_channels: args.key_channels,
        value_channels: args.value_channels,
    };

    let fixed = match &args.projection {
        Some(path) => {
            let p = manifest::load_projection_set::<T>(path)?;
            let m: manifest::ProjectionManifest =
                serde_json::from_str(&std::fs::read_to_string(path)?)?;
            shape.context_channels = m.context_channels;
            shape.query_channels = m.query_channels;
            shape.key_channels = m.key_channels;
            shape.value_channels = m.value_channels;
            Some(p)
        }
        None => None,
    };

    let mut per_seed = Vec::with_capacity(args.seeds as usize);
    let mut worst_abs = 0.0f64;
    let mut worst_rel = 0.0f64;
    for seed in args.seed_start..args.seed_start + args.seeds {
        let p = match &fixed {
            Some(p) => p.clone(),
            None => ProjectionSet::<T>::seeded(&shape, args.mode.into(), seed),
        };
        let seq = random_sequence::<T>(&shape, args.frames, seed ^ 0xabcd);
        let r = run_equivalence(&seq, &p, NormalizationMode::None)?;
        worst_abs = worst_abs.max(r.max_abs_diff());
        worst_rel = worst_rel.max(r.max_rel_diff());
        per_seed.push(EquivSeedEntry::new(seed, &r));
    }

    let (bound_abs, bound_rel) = match T::DTYPE {
        Dtype::F64 => (Some(tolerances::EQUIV_MAX_ABS_F64), None),
        Dtype::F32 => (None, Some(tolerances::EQUIV_MAX_REL_F32)),
    };
    let pass = bound_abs.is_none_or(|b| worst_abs <= b)
        && bound_rel.is_none_or(|b| worst_rel <= b);

    let json = EquivJsonReport {
        dtype: T::DTYPE,
        mode: args.mode.into(),
        shape,
        frames: args.frames,
        seeds: args.seeds,
        seed_start: args.seed_start,
        bound_abs,
        bound_rel,
        worst_abs_diff: worst_abs,
        worst_rel_diff: worst_rel,
        pass,
        per_seed,
    };
    report::write_json(&resolve_out(&args.out), &json)?;
    report::write_text(
        &resolve_out(&args.csv),
        &report::equiv_csv(T::DTYPE, args.frames, &json.per_seed),
    )?;

    println!(
        "equiv: {}: {} seeds x {} frames ({}), max abs diff {:.3e}, max rel diff {:.3e}",
        if pass { "PASS" } else { "FAIL" },
        args.seeds,
        args.frames,
        T::DTYPE,
        worst_abs,
        worst_rel,
    );
    Ok(pass)
}
