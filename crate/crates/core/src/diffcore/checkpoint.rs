//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "ACDCKPT\0"
//! version    u32      1
//! desc_len   u32      length of the UTF-8 architecture descriptor
//! desc       bytes
//! count      u32      number of parameters
//! repeated count times:
//!   path_len u32, path bytes (UTF-8)
//!   ndim     u32, dims u64 * ndim
//!   data     f32 * product(dims)
//! ```
//!
//! Floats are stored by bit pattern, so a round trip is exact.

use std::io::{Read, Write};

use crate::diffcore::params::ParamStore;
use crate::diffcore::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ACDCKPT\0";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Serialized architecture descriptor; empty when not applicable.
    pub descriptor: String,
    pub params: ParamStore,
}

fn io_err(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

pub fn save_checkpoint(mut w: impl Write, descriptor: &str, params: &ParamStore) -> Result<()> {
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(descriptor.len() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(descriptor.as_bytes()).map_err(io_err)?;
    w.write_all(&(params.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (path, p) in params.iter() {
        w.write_all(&(path.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(path.as_bytes()).map_err(io_err)?;
        let shape = p.value().shape();
        w.write_all(&(shape.len() as u32).to_le_bytes()).map_err(io_err)?;
        for &d in shape {
            w.write_all(&(d as u64).to_le_bytes()).map_err(io_err)?;
        }
        let mut buf = Vec::with_capacity(p.value().len() * 4);
        for v in p.value().data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io_err)?;
    }
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(b)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<4>(r)?))
}

fn read_string(r: &mut impl Read, len: usize) -> Result<String> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(io_err)?;
    String::from_utf8(buf).map_err(|e| Error::Checkpoint(format!("invalid UTF-8: {e}")))
}

pub fn load_checkpoint(mut r: impl Read) -> Result<Checkpoint> {
    let magic = read_exact::<8>(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let desc_len = read_u32(&mut r)? as usize;
    let descriptor = read_string(&mut r, desc_len)?;
    let count = read_u32(&mut r)?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let path_len = read_u32(&mut r)? as usize;
        let path = read_string(&mut r, path_len)?;
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u64::from_le_bytes(read_exact::<8>(&mut r)?) as usize);
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw).map_err(io_err)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params.insert(path, Tensor::new(shape, data)?)?;
    }
    Ok(Checkpoint { descriptor, params })
}
