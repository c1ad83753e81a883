//! Checkpoint files: one line of JSON header, then every tensor as
//! little-endian f32 in directory order. Offsets count bytes from the end
//! of the header line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_SCHEMA: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: [usize; 2],
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    config: ModelConfig,
    tensors: Vec<Entry>,
}

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut out: W) -> Result<()> {
    let mut offset = 0;
    let tensors = params
        .tensors
        .names
        .iter()
        .zip(&params.tensors.values)
        .map(|(name, v)| {
            let e = Entry {
                name: name.clone(),
                shape: [v.nrows(), v.ncols()],
                offset,
            };
            offset += 4 * v.len();
            e
        })
        .collect();
    let header = Header {
        schema_version: CHECKPOINT_SCHEMA,
        config: params.config.clone(),
        tensors,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for v in &params.tensors.values {
        for x in v.iter() {
            out.write_all(&(*x as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(mut input: R) -> Result<ModelParams> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end())?;
    if header.schema_version != CHECKPOINT_SCHEMA {
        return Err(Error::SchemaMismatch(format!(
            "checkpoint schema {} (expected {CHECKPOINT_SCHEMA})",
            header.schema_version
        )));
    }
    let mut params = ModelParams::zeros(&header.config)?;
    if header.tensors.len() != params.tensors.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} tensors in checkpoint, {} in model",
            header.tensors.len(),
            params.tensors.len()
        )));
    }
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    for (k, e) in header.tensors.iter().enumerate() {
        let slot = &mut params.tensors.values[k];
        if e.name != params.tensors.names[k] || e.shape != [slot.nrows(), slot.ncols()] {
            return Err(Error::SchemaMismatch(format!(
                "tensor {k}: checkpoint has {} {:?}, model expects {} {:?}",
                e.name,
                e.shape,
                params.tensors.names[k],
                slot.shape()
            )));
        }
        let n = slot.len();
        let bytes = data
            .get(e.offset..e.offset + 4 * n)
            .ok_or_else(|| Error::SchemaMismatch(format!("tensor {} extends past end of file", e.name)))?;
        let values = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        *slot = Array2::from_shape_vec((e.shape[0], e.shape[1]), values).expect("shape checked");
    }
    params.tensors.check_finite()?;
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(params, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
