//! Binary containers.
//!
//! * `MCEB`: one `f32` matrix: magic, `u32` version, `u32` rows, `u32` cols,
//!   little-endian payload.
//! * `MCPT`: named tensors: magic, `u32` version, `u32` count, then per
//!   tensor a `u32` name length, UTF-8 name, `u32` rank, `u32` dims and the
//!   little-endian `f32` payload.
//!
//! Decoding parses the whole buffer before returning, so a truncated file is
//! an error and never a partial result.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MCEB_MAGIC: &[u8; 4] = b"MCEB";
pub const MCEB_VERSION: u32 = 1;
pub const MCPT_MAGIC: &[u8; 4] = b"MCPT";
pub const MCPT_VERSION: u32 = 1;

fn read_u32(r: &mut &[u8]) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s(r: &mut &[u8], n: usize) -> io::Result<Vec<f32>> {
    let bytes = n
        .checked_mul(4)
        .filter(|&b| b <= r.len())
        .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "payload truncated"))?;
    let (payload, rest) = r.split_at(bytes);
    *r = rest;
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn check_magic(r: &mut &[u8], magic: &[u8; 4], what: &'static str) -> Result<()> {
    if r.len() < 4 || &r[..4] != magic {
        return Err(Error::BadMagic { what });
    }
    *r = &r[4..];
    Ok(())
}

fn check_version(r: &mut &[u8], expected: u32, what: &'static str) -> Result<()> {
    let found = read_u32(r).map_err(|e| Error::io(what, e))?;
    if found != expected {
        return Err(Error::VersionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let ctx = || path.display().to_string();
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::io(ctx(), io::Error::new(io::ErrorKind::InvalidInput, "no file name")))?;
    let tmp = path.with_file_name(format!(".{}.partial", file_name.to_string_lossy()));
    let result = (|| -> io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(ctx(), e));
    }
    Ok(())
}

pub fn encode_matrix(m: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + m.len() * 4);
    out.extend_from_slice(MCEB_MAGIC);
    out.extend_from_slice(&MCEB_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut r = bytes;
    check_magic(&mut r, MCEB_MAGIC, "embedding file")?;
    check_version(&mut r, MCEB_VERSION, "embedding file")?;
    let rows = read_u32(&mut r).map_err(|e| Error::io("embedding file", e))? as usize;
    let cols = read_u32(&mut r).map_err(|e| Error::io("embedding file", e))? as usize;
    let data = read_f32s(&mut r, rows * cols).map_err(|e| Error::io("embedding file", e))?;
    if !r.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "embedding file has {} trailing bytes after {rows}x{cols} payload",
            r.len()
        )));
    }
    Tensor::from_vec(&[rows, cols], data)
}

pub fn write_matrix(path: &Path, m: &Tensor<f32>) -> Result<()> {
    write_atomic(path, &encode_matrix(m))
}

pub fn read_matrix(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_matrix(&bytes)
}

/// Packs `u32` words into an `f32` tensor bit-for-bit (used for integer state).
pub fn words_tensor(words: &[u32]) -> Tensor<f32> {
    Tensor::from_vec(&[words.len()], words.iter().map(|&w| f32::from_bits(w)).collect())
        .expect("rank-1 shape matches")
}

pub fn tensor_words(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

pub fn encode_tensors(tensors: &[(String, Tensor<f32>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MCPT_MAGIC);
    out.extend_from_slice(&MCPT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
    const WHAT: &str = "checkpoint";
    let io_err = |e| Error::io(WHAT, e);
    let mut r = bytes;
    check_magic(&mut r, MCPT_MAGIC, WHAT)?;
    check_version(&mut r, MCPT_VERSION, WHAT)?;
    let count = read_u32(&mut r).map_err(io_err)? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = read_u32(&mut r).map_err(io_err)? as usize;
        if name_len > r.len() {
            return Err(io_err(io::Error::new(io::ErrorKind::UnexpectedEof, "name truncated")));
        }
        let (name, rest) = r.split_at(name_len);
        r = rest;
        let name = std::str::from_utf8(name)
            .map_err(|_| Error::SchemaError("tensor name is not UTF-8".into()))?
            .to_owned();
        let rank = read_u32(&mut r).map_err(io_err)? as usize;
        if rank > 8 {
            return Err(Error::SchemaError(format!("tensor {name} has rank {rank}")));
        }
        let dims = (0..rank)
            .map(|_| read_u32(&mut r).map(|d| d as usize))
            .collect::<io::Result<Vec<_>>>()
            .map_err(io_err)?;
        let data = read_f32s(&mut r, dims.iter().product()).map_err(io_err)?;
        out.push((name, Tensor::from_vec(&dims, data)?));
    }
    if !r.is_empty() {
        return Err(Error::SchemaError(format!("{} trailing bytes", r.len())));
    }
    Ok(out)
}
