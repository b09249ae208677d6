//! Tolerance calibration runs.
//!
//! Ignored by default: these print the observed error maxima that back the
//! frozen constants in `gc_core::tolerances`, instead of asserting them.
//! Run with
//!
//! ```text
//! cargo test -p gc-core --test calibration -- --ignored --nocapture
//! ```
//!
//! after any change to the matrix kernels or the memory backends, and
//! compare the printed maxima against the constants' recorded values.

use gc_core::equivalence::{random_sequence, run_equivalence};
use gc_core::projection::{NormalizationMode, ProjectionMode, ProjectionSet, ShapeConfig};

fn calibration_shape() -> ShapeConfig {
    ShapeConfig {
        height: 8,
        width: 8,
        context_channels: 6,
        query_channels: 5,
        key_channels: 4,
        value_channels: 5,
    }
}

#[test]
#[ignore = "calibration run; prints maxima instead of asserting"]
fn equivalence_error_maxima_over_200_seeds() {
    let shape = calibration_shape();
    let frames = 16;
    let mut max_abs_f64 = 0.0f64;
    let mut max_rel_f64 = 0.0f64;
    let mut max_abs_f32 = 0.0f64;
    let mut max_rel_f32 = 0.0f64;

    for seed in 0..200u64 {
        let p64 = ProjectionSet::<f64>::seeded(&shape, ProjectionMode::Linear, seed);
        let seq64 = random_sequence::<f64>(&shape, frames, seed ^ 0xabcd);
        let r64 = run_equivalence(&seq64, &p64, NormalizationMode::None).unwrap();
        max_abs_f64 = max_abs_f64.max(r64.max_abs_diff());
        max_rel_f64 = max_rel_f64.max(r64.max_rel_diff());

        let p32 = ProjectionSet::<f32>::seeded(&shape, ProjectionMode::Linear, seed);
        let seq32 = random_sequence::<f32>(&shape, frames, seed ^ 0xabcd);
        let r32 = run_equivalence(&seq32, &p32, NormalizationMode::None).unwrap();
        max_abs_f32 = max_abs_f32.max(r32.max_abs_diff());
        max_rel_f32 = max_rel_f32.max(r32.max_rel_diff());
    }

    println!("f64: max abs {max_abs_f64:.3e}, max rel {max_rel_f64:.3e}");
    println!("f32: max abs {max_abs_f32:.3e}, max rel {max_rel_f32:.3e}");
    println!(
        "frozen bounds: abs f64 {:.1e}, rel f32 {:.1e}",
        gc_core::tolerances::EQUIV_MAX_ABS_F64,
        gc_core::tolerances::EQUIV_MAX_REL_F32
    );
}

#[test]
#[ignore = "calibration run; prints maxima instead of asserting"]
fn conv3x3_equivalence_error_maxima() {
    let shape = calibration_shape();
    let mut max_abs_f64 = 0.0f64;
    for seed in 0..50u64 {
        let p = ProjectionSet::<f64>::seeded(&shape, ProjectionMode::Conv3x3, seed);
        let seq = random_sequence::<f64>(&shape, 8, seed ^ 0x1234);
        let r = run_equivalence(&seq, &p, NormalizationMode::None).unwrap();
        max_abs_f64 = max_abs_f64.max(r.max_abs_diff());
    }
    println!("conv3x3 f64: max abs {max_abs_f64:.3e}");
}
