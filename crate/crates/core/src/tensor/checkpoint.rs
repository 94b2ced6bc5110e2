//! Binary checkpoint format.
//!
//! ```text
//! "NAST" | version: u32
//! repeated until end of file:
//!     name_len: u32 | name: utf-8 | rank: u32 | dims: rank x u32 | data: numel x f32
//! ```
//! All integers and floats little-endian.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Result, Tensor, TensorError};

pub const MAGIC: &[u8; 4] = b"NAST";
pub const FORMAT_VERSION: u32 = 1;

fn io_err(e: io::Error) -> TensorError {
    TensorError::Checkpoint(e.to_string())
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v)
        .map_err(|_| TensorError::Checkpoint(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

pub fn write_checkpoint<'a>(
    mut w: impl Write,
    tensors: impl IntoIterator<Item = (&'a str, &'a Tensor<f32>)>,
) -> Result<()> {
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io_err)?;
    for (name, t) in tensors {
        put_u32(&mut w, name.len())?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        put_u32(&mut w, t.shape().len())?;
        for &d in t.shape() {
            put_u32(&mut w, d)?;
        }
        let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        w.write_all(&bytes).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads a `u32`, or `None` at a clean end of input.
fn get_u32(r: &mut impl Read, allow_eof: bool) -> Result<Option<u32>> {
    let mut buf = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match r.read(&mut buf[filled..]).map_err(io_err)? {
            0 if filled == 0 && allow_eof => return Ok(None),
            0 => return Err(TensorError::Checkpoint("unexpected end of file".into())),
            n => filled += n,
        }
    }
    Ok(Some(u32::from_le_bytes(buf)))
}

fn need_u32(r: &mut impl Read) -> Result<usize> {
    Ok(get_u32(r, false)?.expect("eof not allowed") as usize)
}

pub fn read_checkpoint(mut r: impl Read) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(TensorError::Checkpoint("bad magic bytes".into()));
    }
    let version = need_u32(&mut r)? as u32;
    if version != FORMAT_VERSION {
        return Err(TensorError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let mut out = Vec::new();
    while let Some(name_len) = get_u32(&mut r, true)? {
        let mut name = vec![0u8; name_len as usize];
        r.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        let rank = need_u32(&mut r)?;
        let dims = (0..rank)
            .map(|_| need_u32(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = dims.iter().product();
        let mut bytes = vec![0u8; numel * 4];
        r.read_exact(&mut bytes).map_err(io_err)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((name, Tensor::parameter(&dims, data)?));
    }
    Ok(out)
}

pub fn save_checkpoint<'a>(
    path: impl AsRef<Path>,
    tensors: impl IntoIterator<Item = (&'a str, &'a Tensor<f32>)>,
) -> Result<()> {
    let f = File::create(path).map_err(io_err)?;
    write_checkpoint(BufWriter::new(f), tensors)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor<f32>)>> {
    let f = File::open(path).map_err(io_err)?;
    read_checkpoint(BufReader::new(f))
}
