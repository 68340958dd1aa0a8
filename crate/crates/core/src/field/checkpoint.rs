//! Binary checkpoint of field parameters and, optionally, optimizer state.
//!
//! Layout, all little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `ISFP` |
//! | 2     | version (u16, currently 1) |
//! | 4     | n_levels (u32) |
//! | 8     | base_resolution (f64) |
//! | 8     | growth_factor (f64) |
//! | 4     | features_per_level (u32) |
//! | 4     | table_size_log2 (u32) |
//! | 4     | hidden_width (u32) |
//! | 8     | extent (f64) |
//! | 8     | parameter count N (u64) |
//! | 8 N   | parameters (f64) in declaration order |
//! | 1     | optimizer flag (0 or 1) |
//! | 8     | Adam step counter (u64), if flag = 1 |
//! | 16 N  | first then second moments (f64), if flag = 1 |

use std::io::{Read, Write};

use super::{FieldConfig, FieldParams, HashEncodingConfig};
use crate::error::{IsarError, Result};
use crate::recon::AdamState;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ISFP";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: FieldParams,
    pub optimizer: Option<AdamState>,
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &FieldParams, optimizer: Option<&AdamState>) -> Result<()> {
    let cfg = params.config();
    let enc = &cfg.encoding;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(enc.n_levels as u32).to_le_bytes())?;
    w.write_all(&enc.base_resolution.to_le_bytes())?;
    w.write_all(&enc.growth_factor.to_le_bytes())?;
    w.write_all(&(enc.features_per_level as u32).to_le_bytes())?;
    w.write_all(&enc.table_size_log2.to_le_bytes())?;
    w.write_all(&(cfg.hidden_width as u32).to_le_bytes())?;
    w.write_all(&cfg.extent.to_le_bytes())?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    write_f64s(&mut w, params.as_slice())?;
    match optimizer {
        None => w.write_all(&[0u8])?,
        Some(state) => {
            if state.first_moment.len() != params.len() || state.second_moment.len() != params.len() {
                return Err(IsarError::ShapeMismatch("optimizer state does not match parameters".into()));
            }
            w.write_all(&[1u8])?;
            w.write_all(&state.step.to_le_bytes())?;
            write_f64s(&mut w, &state.first_moment)?;
            write_f64s(&mut w, &state.second_moment)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(IsarError::Format("not a field checkpoint (bad magic)".into()));
    }
    let version = u16::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(IsarError::Format(format!("unsupported checkpoint version {version}")));
    }
    let n_levels = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let base_resolution = f64::from_le_bytes(read_array(&mut r)?);
    let growth_factor = f64::from_le_bytes(read_array(&mut r)?);
    let features_per_level = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let table_size_log2 = u32::from_le_bytes(read_array(&mut r)?);
    let hidden_width = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let extent = f64::from_le_bytes(read_array(&mut r)?);
    let config = FieldConfig {
        encoding: HashEncodingConfig { n_levels, base_resolution, growth_factor, features_per_level, table_size_log2 },
        hidden_width,
        extent,
    };
    config.validate().map_err(|e| IsarError::Format(format!("bad checkpoint config: {e}")))?;
    let count = u64::from_le_bytes(read_array(&mut r)?) as usize;
    if count != config.parameter_count() {
        return Err(IsarError::Format(format!(
            "checkpoint stores {count} parameters, config implies {}",
            config.parameter_count()
        )));
    }
    let data = read_f64s(&mut r, count)?;
    let params = FieldParams::from_vec(config, data).map_err(|e| IsarError::Format(e.to_string()))?;
    let [flag] = read_array::<1, _>(&mut r)?;
    let optimizer = match flag {
        0 => None,
        1 => {
            let step = u64::from_le_bytes(read_array(&mut r)?);
            let first_moment = read_f64s(&mut r, count)?;
            let second_moment = read_f64s(&mut r, count)?;
            Some(AdamState { first_moment, second_moment, step })
        }
        other => return Err(IsarError::Format(format!("bad optimizer flag {other}"))),
    };
    Ok(Checkpoint { params, optimizer })
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(|_| IsarError::Format("checkpoint truncated".into()))?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|_| IsarError::Format("checkpoint truncated".into()))?;
    Ok(buf)
}
