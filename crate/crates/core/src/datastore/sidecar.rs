//! Compact binary tensor blocks: a 16-byte header (`MMFB`, `T`, `D`,
//! reserved, all little-endian `u32` after the magic) followed by `T * D`
//! little-endian `f32` values.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const SIDECAR_MAGIC: [u8; 4] = *b"MMFB";

pub fn write_block<W: Write>(w: &mut W, t: &Tensor<f64>) -> std::io::Result<()> {
    let (rows, cols) = (t.rows() as u32, t.cols() as u32);
    w.write_all(&SIDECAR_MAGIC)?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    for &v in t.data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_block<R: Read>(r: &mut R) -> Result<Tensor<f64>> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|e| Error::Schema(format!("truncated sidecar header: {e}")))?;
    if header[..4] != SIDECAR_MAGIC {
        return Err(Error::Schema("bad sidecar magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap()) as usize;
    let (rows, cols) = (word(4), word(8));
    let mut buf = vec![0u8; rows * cols * 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Schema(format!("truncated sidecar block: {e}")))?;
    let data = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Tensor::matrix(rows, cols, data)
}

/// Writes every sample's modalities, in sample then manifest order.
pub fn write_sidecar(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in dataset.samples() {
        for m in dataset.manifest().modality_names() {
            write_block(&mut w, &s.modalities[m]).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
