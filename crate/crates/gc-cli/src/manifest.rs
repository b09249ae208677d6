//! Projection fixture manifests.
//!
//! A manifest is a JSON file binding tensor files to the key/query/value
//! roles and declaring the dimensions they must satisfy. Conv3x3 weights
//! store their nine taps stacked row-wise in one tensor file
//! (`9 * C_in` rows); biases are optional `1 x C_out` tensor files.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use gc_core::matrix::{Matrix, Real};
use gc_core::projection::{Projection, ProjectionMode, ProjectionSet};
use serde::{Deserialize, Serialize};

use crate::tensor_io;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoleFiles {
    pub key: String,
    pub query: String,
    pub value: String,
}

/// Bias files, each role independently optional.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BiasFiles {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProjectionManifest {
    pub context_channels: usize,
    pub query_channels: usize,
    pub key_channels: usize,
    pub value_channels: usize,
    pub mode: ProjectionMode,
    /// Seed the weights were generated from, when they came from the
    /// seeded initializer; recorded for provenance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub files: RoleFiles,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub biases: Option<BiasFiles>,
}

fn load_projection<T: Real>(
    dir: &Path,
    file: &str,
    bias_file: Option<&str>,
    mode: ProjectionMode,
    in_channels: usize,
    out_channels: usize,
    role: &str,
) -> Result<Projection<T>> {
    let m = tensor_io::read_matrix_file::<T>(&dir.join(file))
        .with_context(|| format!("{role} weights"))?;
    let taps = match mode {
        ProjectionMode::Linear => 1,
        ProjectionMode::Conv3x3 => 9,
    };
    if m.shape() != (taps * in_channels, out_channels) {
        bail!(
            "{role} weights are {}x{}, manifest declares {}x{} ({} tap{})",
            m.rows(),
            m.cols(),
            taps * in_channels,
            out_channels,
            taps,
            if taps == 1 { "" } else { "s" },
        );
    }
    let mut projection = match mode {
        ProjectionMode::Linear => Projection::linear(m),
        ProjectionMode::Conv3x3 => {
            let data = m.into_vec();
            let per_tap = in_channels * out_channels;
            let taps = (0..9)
                .map(|t| {
                    Matrix::from_vec(
                        in_channels,
                        out_channels,
                        data[t * per_tap..(t + 1) * per_tap].to_vec(),
                    )
                    .expect("tap slice has the declared shape")
                })
                .collect();
            Projection::conv3x3(taps)?
        }
    };
    if let Some(bias_file) = bias_file {
        let b = tensor_io::read_matrix_file::<T>(&dir.join(bias_file))
            .with_context(|| format!("{role} bias"))?;
        if b.shape() != (1, out_channels) {
            bail!(
                "{role} bias is {}x{}, expected 1x{out_channels}",
                b.rows(),
                b.cols()
            );
        }
        projection = projection.with_bias(b.into_vec())?;
    }
    Ok(projection)
}

/// Load the projection set a manifest describes; tensor files are resolved
/// relative to the manifest's directory.
pub fn load_projection_set<T: Real>(manifest_path: &Path) -> Result<ProjectionSet<T>> {
    let text = fs::read_to_string(manifest_path)
        .with_context(|| format!("opening {}", manifest_path.display()))?;
    let manifest: ProjectionManifest =
        serde_json::from_str(&text).context("parsing projection manifest")?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));

    let bias = |f: fn(&BiasFiles) -> Option<&String>| {
        manifest.biases.as_ref().and_then(f).map(String::as_str)
    };
    let key = load_projection::<T>(
        dir,
        &manifest.files.key,
        bias(|b| b.key.as_ref()),
        manifest.mode,
        manifest.context_channels,
        manifest.key_channels,
        "key",
    )?;
    let query = load_projection::<T>(
        dir,
        &manifest.files.query,
        bias(|b| b.query.as_ref()),
        manifest.mode,
        manifest.query_channels,
        manifest.key_channels,
        "query",
    )?;
    let value = load_projection::<T>(
        dir,
        &manifest.files.value,
        bias(|b| b.value.as_ref()),
        manifest.mode,
        manifest.context_channels,
        manifest.value_channels,
        "value",
    )?;
    Ok(ProjectionSet::new(manifest.mode, key, query, value)?)
}

/// Write a projection set as tensor files plus a manifest named
/// `<name>.json` in `dir`. The inverse of [`load_projection_set`].
pub fn save_projection_set<T: Real>(
    dir: &Path,
    name: &str,
    p: &ProjectionSet<T>,
    context_channels: usize,
    query_channels: usize,
    seed: Option<u64>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let stacked = |proj: &Projection<T>| -> Matrix<T> {
        let taps = proj.taps();
        let out = proj.out_channels();
        let mut data = Vec::new();
        for tap in taps {
            data.extend_from_slice(tap.as_slice());
        }
        Matrix::from_vec(taps.len() * proj.in_channels(), out, data).expect("stacked taps")
    };
    let files = RoleFiles {
        key: format!("{name}.key.gct"),
        query: format!("{name}.query.gct"),
        value: format!("{name}.value.gct"),
    };
    tensor_io::write_matrix_file(&dir.join(&files.key), &stacked(p.key()))?;
    tensor_io::write_matrix_file(&dir.join(&files.query), &stacked(p.query()))?;
    tensor_io::write_matrix_file(&dir.join(&files.value), &stacked(p.value()))?;

    let mut bias_files = BiasFiles::default();
    for (proj, slot, suffix) in [
        (p.key(), &mut bias_files.key, "key_bias"),
        (p.query(), &mut bias_files.query, "query_bias"),
        (p.value(), &mut bias_files.value, "value_bias"),
    ] {
        if let Some(bias) = proj.bias() {
            let file = format!("{name}.{suffix}.gct");
            let m = Matrix::from_vec(1, bias.len(), bias.to_vec()).expect("bias row");
            tensor_io::write_matrix_file(&dir.join(&file), &m)?;
            *slot = Some(file);
        }
    }
    let biases = if bias_files.key.is_some() || bias_files.query.is_some() || bias_files.value.is_some() {
        Some(bias_files)
    } else {
        None
    };

    let manifest = ProjectionManifest {
        context_channels,
        query_channels,
        key_channels: p.key_channels(),
        value_channels: p.value_channels(),
        mode: p.mode(),
        seed,
        files,
        biases,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join(format!("{name}.json")), json + "\n")?;
    Ok(())
}
