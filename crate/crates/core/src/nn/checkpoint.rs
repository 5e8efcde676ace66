//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `TGM1`, format version byte, the model
//! config (seven u32 sizes, then dropout, l2, bn momentum, bn epsilon as
//! f64), a u32 tensor count, then per tensor a rank byte, u32 dims and the
//! values as f32. A CRC-32 of all preceding bytes closes the file.
//!
//! Values are narrowed to f32 on save, so `load(save(p))` equals `p`
//! rounded to f32, and saving a loaded model reproduces the file exactly.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{build_model, ModelConfig, ModelParams};
use crate::codec::Cursor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TGM1";
pub const FORMAT_VERSION: u8 = 1;

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let c = &params.config;
    let mut buf = Vec::with_capacity(64 + params.stored_value_count() * 4);
    buf.extend_from_slice(MAGIC);
    buf.push(FORMAT_VERSION);
    for v in [
        c.window_points,
        c.kernel_len,
        c.filters[0],
        c.filters[1],
        c.filters[2],
        c.dense_units,
        c.classes,
    ] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in [c.dropout_rate, c.l2_coeff, c.bn_momentum, c.bn_epsilon] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let tensors = params.all_tensors();
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        buf.push(t.shape().len() as u8);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    let corrupt = Error::CorruptCheckpoint;
    if bytes.len() < MAGIC.len() {
        return Err(corrupt(format!("{} bytes is too short", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::VersionMismatch(format!("bad magic {:?}", &bytes[..4])));
    }
    if bytes.len() < 9 {
        return Err(corrupt("truncated header".into()));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(Error::VersionMismatch(format!("checkpoint format version {}", bytes[4])));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(corrupt("checksum mismatch".into()));
    }

    let mut cur = Cursor::new(&body[5..]);
    let mut sizes = [0usize; 7];
    for s in sizes.iter_mut() {
        *s = cur.u32().map_err(corrupt)? as usize;
    }
    let mut reals = [0f64; 4];
    for r in reals.iter_mut() {
        *r = cur.f64().map_err(corrupt)?;
    }
    let config = ModelConfig {
        window_points: sizes[0],
        kernel_len: sizes[1],
        filters: [sizes[2], sizes[3], sizes[4]],
        dense_units: sizes[5],
        classes: sizes[6],
        dropout_rate: reals[0],
        l2_coeff: reals[1],
        bn_momentum: reals[2],
        bn_epsilon: reals[3],
    };
    config
        .validate()
        .map_err(|e| corrupt(format!("stored config is invalid: {e}")))?;
    // Guard the allocation below against absurd but checksummed sizes.
    if config.parameter_count() > body.len() {
        return Err(corrupt("config describes more values than the file holds".into()));
    }

    let mut params = build_model(&config, &mut ChaCha8Rng::seed_from_u64(0))?;
    let count = cur.u32().map_err(corrupt)? as usize;
    let mut slots = params.all_tensors_mut();
    if count != slots.len() {
        return Err(corrupt(format!("expected {} tensors, found {count}", slots.len())));
    }
    for (i, slot) in slots.iter_mut().enumerate() {
        let rank = cur.u8().map_err(corrupt)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32().map_err(corrupt)? as usize);
        }
        if shape != slot.shape() {
            return Err(corrupt(format!(
                "tensor {i} has shape {shape:?}, config implies {:?}",
                slot.shape()
            )));
        }
        for v in slot.data_mut() {
            *v = cur.f32().map_err(corrupt)? as f64;
        }
    }
    drop(slots);
    if !cur.is_empty() {
        return Err(corrupt("trailing bytes".into()));
    }
    Ok(params)
}

/// Text mirror of the config written next to every checkpoint.
pub fn config_sidecar(config: &ModelConfig) -> String {
    format!(
        "format=TGM1\nversion={FORMAT_VERSION}\nwindow_points={}\nkernel_len={}\nkernel_width={}\nfilters={},{},{}\n\
         dense_units={}\nclasses={}\ndropout_rate={}\nl2_coeff={}\nbn_momentum={}\nbn_epsilon={}\nparameters={}\n",
        config.window_points,
        config.kernel_len,
        super::model::KERNEL_WIDTH,
        config.filters[0],
        config.filters[1],
        config.filters[2],
        config.dense_units,
        config.classes,
        config.dropout_rate,
        config.l2_coeff,
        config.bn_momentum,
        config.bn_epsilon,
        config.parameter_count(),
    )
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

/// Writes the checkpoint and its `.txt` config sidecar.
pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(params))?;
    fs::write(sidecar_path(path), config_sidecar(&params.config))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    decode_checkpoint(&fs::read(path)?)
}
