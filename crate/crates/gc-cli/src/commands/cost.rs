//! `gcvos bench-cost`: the read-cost comparison. Analytic formulas,
//! instrumented counter cross-checks, byte model, CSV plus rendered table.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use gc_core::cost::{self, CostConfig, ModuleKind};
use gc_core::matrix::Dtype;

use crate::commands::DtypeArg;
use crate::report::{self, CostJsonReport};
use crate::resolve_out;

/// Largest configuration measured directly by default; beyond it the
/// single-frame measurement extrapolates (read cost is exactly linear in
/// the frame count).
const DIRECT_MULTS_BUDGET: u64 = 2_500_000_000;

#[derive(Args, Debug)]
pub struct CostArgs {
    /// Defaults reproduce the published comparison: 24x24 grid at stride
    /// 16 from a 384px input, 128 key channels, 512 value channels, f32.
    #[arg(long, default_value_t = 24)]
    pub height: usize,
    #[arg(long, default_value_t = 24)]
    pub width: usize,
    #[arg(long, default_value_t = 128)]
    pub key_channels: usize,
    #[arg(long, default_value_t = 512)]
    pub value_channels: usize,
    #[arg(long, value_enum, default_value_t = DtypeArg::F32)]
    pub dtype: DtypeArg,
    /// Frame counts for the memory-backend rows.
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 10, 100])]
    pub t: Vec<u64>,
    /// Measure every row at its full configuration, however large.
    #[arg(long)]
    pub measure_direct: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output path.
    #[arg(long, default_value = "costs.csv")]
    pub out: PathBuf,
    /// JSON output path.
    #[arg(long, default_value = "costs.json")]
    pub json: PathBuf,
}

pub fn run(args: &CostArgs) -> Result<bool> {
    let config = CostConfig {
        height: args.height,
        width: args.width,
        key_channels: args.key_channels,
        value_channels: args.value_channels,
        dtype: Dtype::from(args.dtype),
    };
    let hw = config.locations();

    let mut rows = Vec::new();
    for &t in &args.t {
        let analytic = cost::stm_read_mults(
            hw,
            config.key_channels as u64,
            config.value_channels as u64,
            t,
        );
        let direct = args.measure_direct || analytic <= DIRECT_MULTS_BUDGET;
        rows.push(cost::report_for(ModuleKind::Stm, &config, t, direct, args.seed)?);
    }
    rows.push(cost::report_for(ModuleKind::Gc, &config, 1, true, args.seed)?);

    let all_equal = rows.iter().all(|r| r.measured_mults == r.analytic_mults);
    let json = CostJsonReport {
        seed: args.seed,
        all_measured_equal_analytic: all_equal,
        pass: all_equal,
        rows,
    };
    report::write_text(&resolve_out(&args.out), &report::cost_csv(&json.rows))?;
    report::write_json(&resolve_out(&args.json), &json)?;

    print!("{}", report::cost_table(&json.rows));
    println!(
        "bench-cost: {}: measured == analytic on every row: {all_equal}",
        if all_equal { "PASS" } else { "FAIL" }
    );
    Ok(all_equal)
}
