//! Named-tensor archive.
//!
//! Binary layout, all little-endian:
//! `MMCK` magic, `u32` version, `u32` tensor count, then per tensor
//! `u32` name length, UTF-8 name, `u32` rank, `u64` per dimension and
//! `f64` per value. The JSON form is a `{"tensors": [{name, shape, values}]}`
//! document with the same content.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamSet, Tensor};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct JsonTensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct JsonArchive {
    tensors: Vec<JsonTensor>,
}

pub fn write_checkpoint<T: Scalar, W: Write>(w: &mut W, params: &ParamSet<T>) -> std::io::Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.ndim() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
    }
    Ok(())
}

fn truncated(e: std::io::Error) -> Error {
    Error::Schema(format!("truncated checkpoint: {e}"))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint<T: Scalar, R: Read>(r: &mut R) -> Result<ParamSet<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Schema("not a checkpoint (bad magic)".into()));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Schema(format!("unsupported checkpoint version {version}")));
    }
    let count = read_u32(r)?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = read_u32(r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| Error::Schema("tensor name is not UTF-8".into()))?;
        let rank = read_u32(r)? as usize;
        let shape = (0..rank).map(|_| read_u64(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut buf = vec![0u8; n * 8];
        r.read_exact(&mut buf).map_err(truncated)?;
        let data = buf
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        if params.contains(&name) {
            return Err(Error::Schema(format!("duplicate tensor `{name}` in checkpoint")));
        }
        params.insert(name, Tensor::new(shape, data)?);
    }
    Ok(params)
}

pub fn checkpoint_to_json<T: Scalar>(params: &ParamSet<T>) -> String {
    let archive = JsonArchive {
        tensors: params
            .iter()
            .map(|(name, t)| JsonTensor {
                name: name.clone(),
                shape: t.shape().to_vec(),
                values: t.data().iter().map(|v| v.as_f64()).collect(),
            })
            .collect(),
    };
    serde_json::to_string(&archive).expect("checkpoint serializes")
}

pub fn checkpoint_from_json<T: Scalar>(text: &str) -> Result<ParamSet<T>> {
    let archive: JsonArchive = serde_json::from_str(text).map_err(|e| Error::Schema(format!("checkpoint: {e}")))?;
    let mut params = ParamSet::new();
    for jt in archive.tensors {
        let data = jt.values.into_iter().map(T::lit).collect();
        params.insert(jt.name, Tensor::new(jt.shape, data)?);
    }
    Ok(params)
}

/// Writes the binary form, or JSON when the path ends in `.json`.
pub fn save_checkpoint<T: Scalar>(params: &ParamSet<T>, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "json") {
        return std::fs::write(path, checkpoint_to_json(params)).map_err(|e| Error::io(path, e));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, params).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ParamSet<T>> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return checkpoint_from_json(&text);
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("a.w", Tensor::matrix(2, 3, vec![1.0, -2.5, 1e-300, f64::MAX, 0.1, -0.0]).unwrap());
        p.insert("a.b", Tensor::vector(vec![std::f64::consts::PI]));
        p
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let p = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        let q: ParamSet<f64> = read_checkpoint(&mut buf.as_slice()).unwrap();
        let bits = |s: &ParamSet<f64>| s.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p), bits(&q));
        assert_eq!(p.names().collect::<Vec<_>>(), q.names().collect::<Vec<_>>());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let p = sample();
        let q: ParamSet<f64> = checkpoint_from_json(&checkpoint_to_json(&p)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_checkpoint::<f64, _>(&mut &b"NOPE"[..]).is_err());
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &sample()).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_checkpoint::<f64, _>(&mut buf.as_slice()).is_err());
    }
}
