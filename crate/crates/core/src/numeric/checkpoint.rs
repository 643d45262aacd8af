//! `TORL1` parameter checkpoints.
//!
//! Layout: the 5-byte magic `TORL1`, a little-endian `u64` header length, a
//! UTF-8 JSON header, then every entry's values as little-endian `f32` in
//! row-major order. Header entries carry `name`, `shape` and `offset`, the
//! byte offset of the entry inside the data section.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::ParameterStore;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"TORL1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    entries: Vec<HeaderEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

pub fn write_checkpoint<W: Write>(
    mut out: W,
    store: &ParameterStore<f32>,
    meta: &serde_json::Value,
) -> std::io::Result<()> {
    let mut offset = 0;
    let entries = store
        .ids()
        .map(|id| {
            let v = store.value(id);
            let e = HeaderEntry {
                name: store.name(id).to_string(),
                shape: v.shape().to_vec(),
                offset,
            };
            offset += v.len() * 4;
            e
        })
        .collect();
    let header = serde_json::to_vec(&Header {
        entries,
        meta: meta.clone(),
    })?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for v in store.values() {
        for x in v.iter() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    out.flush()
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(ParameterStore<f32>, serde_json::Value)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    let mut magic = [0u8; 5];
    input
        .read_exact(&mut magic)
        .map_err(|_| bad("truncated magic"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("bad magic, expected TORL1"));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(|_| bad("truncated header length"))?;
    let len = u64::from_le_bytes(len) as usize;
    let mut header = vec![0u8; len];
    input.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&header)?;
    let mut data = Vec::new();
    input
        .read_to_end(&mut data)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;

    let mut store = ParameterStore::new();
    for e in header.entries {
        let (rows, cols) = match e.shape.as_slice() {
            [r, c] => (*r, *c),
            [n] => (1, *n),
            _ => return Err(bad("only 1-d and 2-d entries are supported")),
        };
        let end = e.offset + rows * cols * 4;
        let bytes = data
            .get(e.offset..end)
            .ok_or_else(|| Error::Checkpoint(format!("entry {} out of range", e.name)))?;
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let arr = Array2::from_shape_vec((rows, cols), values).expect("length checked");
        store.register(e.name, arr)?;
    }
    Ok((store, header.meta))
}

pub fn save_checkpoint(
    path: &Path,
    store: &ParameterStore<f32>,
    meta: &serde_json::Value,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(std::io::BufWriter::new(file), store, meta).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ParameterStore<f32>, serde_json::Value)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}
