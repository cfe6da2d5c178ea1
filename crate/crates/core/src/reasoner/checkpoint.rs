use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::matrix::Matrix;
use super::model::{Mode, ModelConfig, ReasonerModel};
use super::ReasonerError;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"EGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialize the model: header (magic, version, mode, sizes, slope, λ, step)
/// then named tensors as `name, rows, cols, f64 LE data`.
pub fn write_checkpoint<W: Write>(model: &ReasonerModel, step: u64, mut out: W) -> Result<(), ReasonerError> {
    let c = &model.config;
    out.write_all(&CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&[match c.mode {
        Mode::Stl => 0,
        Mode::Mtl => 1,
    }])?;
    for dim in [c.input_dim, c.hidden, c.gat_layers, c.head_hidden, c.evidence_hidden] {
        out.write_all(&(dim as u32).to_le_bytes())?;
    }
    out.write_all(&c.slope.to_le_bytes())?;
    out.write_all(&c.lambda.to_le_bytes())?;
    out.write_all(&step.to_le_bytes())?;
    let tensors = model.tensors();
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, m) in tensors {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(m.rows() as u32).to_le_bytes())?;
        out.write_all(&(m.cols() as u32).to_le_bytes())?;
        for x in m.data() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_checkpoint(model: &ReasonerModel, step: u64, path: &Path) -> Result<(), ReasonerError> {
    write_checkpoint(model, step, BufWriter::new(File::create(path)?))
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N], ReasonerError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32, ReasonerError> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_f64(r: &mut impl Read) -> Result<f64, ReasonerError> {
    Ok(f64::from_le_bytes(read_array(r)?))
}

/// Inverse of [`write_checkpoint`]; returns the model and its step.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ReasonerModel, u64), ReasonerError> {
    let bad = |msg: String| ReasonerError::Checkpoint(msg);
    if read_array::<4>(&mut r)? != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let mode = match read_array::<1>(&mut r)?[0] {
        0 => Mode::Stl,
        1 => Mode::Mtl,
        other => return Err(bad(format!("unknown mode tag {other}"))),
    };
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = read_u32(&mut r)? as usize;
    }
    let config = ModelConfig {
        mode,
        input_dim: dims[0],
        hidden: dims[1],
        gat_layers: dims[2],
        head_hidden: dims[3],
        evidence_hidden: dims[4],
        slope: read_f64(&mut r)?,
        lambda: read_f64(&mut r)?,
    };
    let step = u64::from_le_bytes(read_array(&mut r)?);
    let mut model = ReasonerModel::new(config, 0);
    let names: Vec<(String, (usize, usize))> = model
        .tensors()
        .into_iter()
        .map(|(n, m)| (n, m.shape()))
        .collect();
    let count = read_u32(&mut r)? as usize;
    if count != names.len() {
        return Err(bad(format!("expected {} tensors, found {count}", names.len())));
    }
    let mut loaded = Vec::with_capacity(count);
    for (expected, shape) in &names {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8".into()))?;
        if &name != expected {
            return Err(bad(format!("expected tensor {expected}, found {name}")));
        }
        let found = (read_u32(&mut r)? as usize, read_u32(&mut r)? as usize);
        if found != *shape {
            return Err(bad(format!("tensor {name} has shape {found:?}, expected {shape:?}")));
        }
        let data = (0..found.0 * found.1)
            .map(|_| read_f64(&mut r))
            .collect::<Result<Vec<_>, _>>()?;
        loaded.push(Matrix::from_vec(found.0, found.1, data));
    }
    for (dst, src) in model.tensors_mut().into_iter().zip(loaded) {
        *dst = src;
    }
    Ok((model, step))
}

pub fn load_checkpoint(path: &Path) -> Result<(ReasonerModel, u64), ReasonerError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
