//! PGM (P5) mask dumps: one 8-bit grayscale image per mask.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use gc_core::matrix::Real;
use gc_core::video::Mask;

/// Write a soft mask as binary PGM, values scaled to 0..=255.
pub fn write_mask<T: Real>(path: &Path, mask: &Mask<T>) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut out = Vec::with_capacity(32 + mask.data.len());
    write!(out, "P5\n{} {}\n255\n", mask.width, mask.height)?;
    for &v in &mask.data {
        let scaled = (v.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8;
        out.push(scaled);
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}
