//! Binary tensor file format and memory-state checkpoints.
//!
//! Layout: magic `GCT1`, `u32` little-endian row count, `u32` column
//! count, one dtype byte (0 = f32, 1 = f64), then the values row-major in
//! little-endian. Round-trips are bit-exact.
//!
//! Memory states checkpoint as tensor files plus a one-line `.frames`
//! sidecar holding the frame counter: a global context as `<base>.gct`,
//! a space-time memory as `<base>.keys.gct` and `<base>.values.gct`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gc_core::gc::GlobalContext;
use gc_core::matrix::{Dtype, Matrix, Real};
use gc_core::stm::StmMemory;

pub const MAGIC: [u8; 4] = *b"GCT1";

/// A tensor file's payload, tagged by the stored width.
#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Matrix<f32>),
    F64(Matrix<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> Dtype {
        match self {
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            TensorData::F32(m) => m.shape(),
            TensorData::F64(m) => m.shape(),
        }
    }
}

pub fn write_matrix<T: Real, W: Write>(mut w: W, m: &Matrix<T>) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&u32::try_from(m.rows()).context("row count exceeds u32")?.to_le_bytes())?;
    w.write_all(&u32::try_from(m.cols()).context("column count exceeds u32")?.to_le_bytes())?;
    w.write_all(&[T::DTYPE.tag()])?;
    match T::DTYPE {
        Dtype::F32 => {
            for &v in m.as_slice() {
                w.write_all(&(v.to_f64_lossy() as f32).to_le_bytes())?;
            }
        }
        Dtype::F64 => {
            for &v in m.as_slice() {
                w.write_all(&v.to_f64_lossy().to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<TensorData> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).context("tensor file is truncated")?;
    if magic != MAGIC {
        bail!("not a tensor file: bad magic {magic:?}");
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let rows = u32::from_le_bytes(buf4) as usize;
    r.read_exact(&mut buf4)?;
    let cols = u32::from_le_bytes(buf4) as usize;
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let dtype = Dtype::from_tag(tag[0]).with_context(|| format!("unknown dtype tag {}", tag[0]))?;

    let count = rows
        .checked_mul(cols)
        .context("tensor dimensions overflow")?;
    match dtype {
        Dtype::F32 => {
            let mut data = Vec::with_capacity(count);
            let mut b = [0u8; 4];
            for _ in 0..count {
                r.read_exact(&mut b).context("tensor payload is truncated")?;
                data.push(f32::from_le_bytes(b));
            }
            Ok(TensorData::F32(Matrix::from_vec(rows, cols, data)?))
        }
        Dtype::F64 => {
            let mut data = Vec::with_capacity(count);
            let mut b = [0u8; 8];
            for _ in 0..count {
                r.read_exact(&mut b).context("tensor payload is truncated")?;
                data.push(f64::from_le_bytes(b));
            }
            Ok(TensorData::F64(Matrix::from_vec(rows, cols, data)?))
        }
    }
}

pub fn write_matrix_file<T: Real>(path: &Path, m: &Matrix<T>) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_matrix(std::io::BufWriter::new(file), m)
}

pub fn read_tensor_file(path: &Path) -> Result<TensorData> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_tensor(std::io::BufReader::new(file))
}

/// Read a tensor file that must hold `T`-typed values.
pub fn read_matrix_file<T: Real>(path: &Path) -> Result<Matrix<T>> {
    let data = read_tensor_file(path)?;
    let dtype = data.dtype();
    matrix_as::<T>(data)
        .with_context(|| format!("{}: holds {dtype}, expected {}", path.display(), T::DTYPE))
}

fn matrix_as<T: Real>(data: TensorData) -> Result<Matrix<T>> {
    // Monomorphized per T; only the matching arm can succeed.
    match (T::DTYPE, data) {
        (Dtype::F32, TensorData::F32(m)) => {
            let (rows, cols) = m.shape();
            Ok(Matrix::from_vec(
                rows,
                cols,
                m.into_vec().into_iter().map(|v| T::from_f64(f64::from(v))).collect(),
            )?)
        }
        (Dtype::F64, TensorData::F64(m)) => {
            let (rows, cols) = m.shape();
            Ok(Matrix::from_vec(
                rows,
                cols,
                m.into_vec().into_iter().map(T::from_f64).collect(),
            )?)
        }
        _ => bail!("dtype mismatch"),
    }
}

fn frames_sidecar(base: &Path) -> PathBuf {
    let mut p = base.as_os_str().to_owned();
    p.push(".frames");
    PathBuf::from(p)
}

fn tensor_path(base: &Path, suffix: &str) -> PathBuf {
    let mut p = base.as_os_str().to_owned();
    p.push(suffix);
    PathBuf::from(p)
}

fn read_frames(base: &Path) -> Result<u64> {
    let path = frames_sidecar(base);
    let text = fs::read_to_string(&path).with_context(|| format!("opening {}", path.display()))?;
    text.trim()
        .parse::<u64>()
        .with_context(|| format!("{}: frame counter is not an integer", path.display()))
}

/// Checkpoint a global context as `<base>.gct` plus `<base>.frames`.
pub fn save_global_context<T: Real>(base: &Path, g: &GlobalContext<T>) -> Result<()> {
    write_matrix_file(&tensor_path(base, ".gct"), g.matrix())?;
    fs::write(frames_sidecar(base), format!("{}\n", g.frames_absorbed()))?;
    Ok(())
}

pub fn load_global_context<T: Real>(base: &Path) -> Result<GlobalContext<T>> {
    let matrix = read_matrix_file::<T>(&tensor_path(base, ".gct"))?;
    let frames = read_frames(base)?;
    Ok(GlobalContext::from_parts(matrix, frames)?)
}

/// Checkpoint a space-time memory as `<base>.keys.gct`,
/// `<base>.values.gct`, and `<base>.frames`.
pub fn save_stm_memory<T: Real>(base: &Path, m: &StmMemory<T>) -> Result<()> {
    write_matrix_file(&tensor_path(base, ".keys.gct"), m.keys())?;
    write_matrix_file(&tensor_path(base, ".values.gct"), m.values())?;
    fs::write(frames_sidecar(base), format!("{}\n", m.frames_stored()))?;
    Ok(())
}

pub fn load_stm_memory<T: Real>(base: &Path) -> Result<StmMemory<T>> {
    let keys = read_matrix_file::<T>(&tensor_path(base, ".keys.gct"))?;
    let values = read_matrix_file::<T>(&tensor_path(base, ".values.gct"))?;
    let frames = read_frames(base)?;
    Ok(StmMemory::from_parts(keys, values, frames)?)
}
