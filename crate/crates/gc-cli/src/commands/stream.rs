//! `gcvos bench-stream`: long-run state-size trajectories. The global
//! context must stay flat while the space-time memory grows linearly.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use gc_core::cost;
use gc_core::matrix::{Dtype, Real};
use gc_core::projection::ShapeConfig;

use crate::commands::DtypeArg;
use crate::report::{self, StreamJsonReport, STREAM_CSV_HEADER};
use crate::{resolve_out, tensor_io};

#[derive(Args, Debug)]
pub struct StreamArgs {
    #[arg(long, default_value_t = 10_000)]
    pub frames: usize,
    #[arg(long, default_value_t = 4)]
    pub height: usize,
    #[arg(long, default_value_t = 4)]
    pub width: usize,
    #[arg(long, default_value_t = 6)]
    pub context_channels: usize,
    #[arg(long, default_value_t = 5)]
    pub query_channels: usize,
    #[arg(long, default_value_t = 4)]
    pub key_channels: usize,
    #[arg(long, default_value_t = 5)]
    pub value_channels: usize,
    #[arg(long, value_enum, default_value_t = DtypeArg::F32)]
    pub dtype: DtypeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-frame trajectory CSV.
    #[arg(long, default_value = "stream_trajectory.csv")]
    pub out: PathBuf,
    /// Summary JSON.
    #[arg(long, default_value = "stream_report.json")]
    pub json: PathBuf,
    /// Checkpoint the final states under this base path
    /// (`<base>.gc.*` and `<base>.stm.*`).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

pub fn run(args: &StreamArgs) -> Result<bool> {
    match Dtype::from(args.dtype) {
        Dtype::F32 => run_typed::<f32>(args),
        Dtype::F64 => run_typed::<f64>(args),
    }
}

fn run_typed<T: Real>(args: &StreamArgs) -> Result<bool> {
    let shape = ShapeConfig {
        height: args.height,
        width: args.width,
        context_channels: args.context_channels,
        query_channels: args.query_channels,
        key_channels: args.key_channels,
        value_channels: args.value_channels,
    };

    let (gc_traj, gc_state) = cost::gc_stream_trajectory::<T>(&shape, args.frames, args.seed)?;
    let (stm_traj, stm_state) = cost::stm_stream_trajectory::<T>(&shape, args.frames, args.seed)?;

    let mut csv = String::from(STREAM_CSV_HEADER);
    csv.push('\n');
    for (frame, (&floats, &mults)) in gc_traj
        .per_frame_persistent_floats
        .iter()
        .zip(&gc_traj.per_frame_read_mults)
        .enumerate()
    {
        writeln!(csv, "{frame},gc,{floats},{mults}")?;
    }
    for (frame, &floats) in stm_traj.per_frame_persistent_floats.iter().enumerate() {
        writeln!(csv, "{frame},stm,{floats},")?;
    }
    report::write_text(&resolve_out(&args.out), &csv)?;

    let gc_flat = gc_traj.persistent_is_flat();
    let gc_mults_constant = gc_traj.per_frame_read_mults[1..]
        .windows(2)
        .all(|w| w[0] == w[1]);
    let stm_linear = stm_traj.persistent_is_linear();
    let pass = gc_flat;

    let json = StreamJsonReport {
        frames: args.frames,
        shape,
        seed: args.seed,
        gc_persistent_flat: gc_flat,
        gc_read_mults_constant: gc_mults_constant,
        gc_persistent_floats: gc_traj.per_frame_persistent_floats.first().copied().unwrap_or(0),
        stm_persistent_linear: stm_linear,
        stm_growth_per_frame: stm_traj
            .per_frame_persistent_floats
            .first()
            .copied()
            .unwrap_or(0),
        pass,
    };
    report::write_json(&resolve_out(&args.json), &json)?;

    if let Some(base) = &args.checkpoint {
        let base = resolve_out(base);
        let mut gc_base = base.as_os_str().to_owned();
        gc_base.push(".gc");
        tensor_io::save_global_context(std::path::Path::new(&gc_base), &gc_state)?;
        let mut stm_base = base.as_os_str().to_owned();
        stm_base.push(".stm");
        tensor_io::save_stm_memory(std::path::Path::new(&stm_base), &stm_state)?;
    }

    println!(
        "bench-stream: {}: {} frames: gc state flat {gc_flat} ({} floats), gc read cost \
         constant {gc_mults_constant}, stm growth linear {stm_linear} ({} floats/frame)",
        if pass { "PASS" } else { "FAIL" },
        args.frames,
        json.gc_persistent_floats,
        json.stm_growth_per_frame,
    );
    Ok(pass)
}
