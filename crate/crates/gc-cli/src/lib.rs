//! File formats, reports, and command implementations behind the `gcvos`
//! binary. Kept as a library so the formats are testable directly.

pub mod commands;
pub mod manifest;
pub mod pgm;
pub mod report;
pub mod tensor_io;

use std::path::{Path, PathBuf};

/// Environment variable that redirects relative output paths.
pub const OUT_DIR_ENV: &str = "GCVOS_OUT_DIR";

/// Resolve an output path: absolute paths pass through; relative paths are
/// joined onto `$GCVOS_OUT_DIR` when it is set.
pub fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}
