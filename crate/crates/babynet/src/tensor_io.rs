//! `BNT1` tensor files: the magic `BNT1`, a dtype byte (0 = `f32`), a rank
//! byte, `rank` little-endian `u32` dimensions, then the little-endian
//! payload.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use babynet_core::Tensor;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BNT1";
pub const DTYPE_F32: u8 = 0;

pub fn write_tensor<W: Write>(mut w: W, tensor: &Tensor) -> io::Result<()> {
    let shape = tensor.shape();
    let rank = u8::try_from(shape.len()).map_err(|_| io::Error::other("tensor rank exceeds 255"))?;
    let mut buf = Vec::with_capacity(6 + 4 * shape.len() + 4 * tensor.numel());
    buf.extend_from_slice(MAGIC);
    buf.push(DTYPE_F32);
    buf.push(rank);
    for &d in shape {
        let d = u32::try_from(d).map_err(|_| io::Error::other("dimension exceeds u32"))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for v in tensor.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

/// Decodes a whole `BNT1` buffer; trailing bytes are an error.
pub fn decode_tensor(bytes: &[u8]) -> std::result::Result<Tensor, String> {
    let mut r = bytes;
    let mut take = |n: usize, what: &str| -> std::result::Result<&[u8], String> {
        if r.len() < n {
            return Err(format!("truncated {what}: need {n} bytes, {} left", r.len()));
        }
        let (head, tail) = r.split_at(n);
        r = tail;
        Ok(head)
    };
    let magic = take(4, "header")?;
    if magic != MAGIC {
        return Err(format!("bad magic {magic:?}, expected \"BNT1\""));
    }
    let dtype = take(1, "header")?[0];
    if dtype != DTYPE_F32 {
        return Err(format!("unsupported dtype code {dtype}"));
    }
    let rank = take(1, "header")?[0] as usize;
    let dims: Vec<usize> = take(4 * rank, "shape")?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let numel = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("invalid shape {dims:?}"))?;
    let payload_len = numel.checked_mul(4).ok_or_else(|| format!("shape {dims:?} too large"))?;
    let data: Vec<f32> = take(payload_len, "payload")?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if !r.is_empty() {
        return Err(format!("{} trailing bytes after payload", r.len()));
    }
    Tensor::new(&dims, data).map_err(|e| e.to_string())
}

pub fn read_tensor<R: Read>(mut r: R) -> io::Result<std::result::Result<Tensor, String>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    Ok(decode_tensor(&bytes))
}

pub fn save_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    let mut bytes = Vec::new();
    write_tensor(&mut bytes, tensor).map_err(|e| Error::io(path, e))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes).map_err(|msg| Error::parse(path, msg))
}
