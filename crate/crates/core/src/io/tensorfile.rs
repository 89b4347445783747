//! Binary container for named f32 tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    4 bytes  "PLNT"
//! version  u32      1
//! count    u32      number of tensors
//! repeated count times:
//!   name_len u32, name (UTF-8)
//!   ndim     u32, dims (u64 each)
//!   dtype    u8     0 = f32
//!   data     prod(dims) x f32
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PLNT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        NamedTensor { name: name.into(), shape, data }
    }
}

fn bad(detail: impl Into<String>) -> Error {
    Error::Format { what: "tensor file", detail: detail.into() }
}

pub fn write_tensors(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        if t.shape.iter().product::<usize>() != t.data.len() {
            return Err(bad(format!("tensor {} has inconsistent shape", t.name)));
        }
        out.write_all(&(t.name.len() as u32).to_le_bytes())?;
        out.write_all(t.name.as_bytes())?;
        out.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        out.write_all(&[0u8])?;
        for v in &t.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_tensors(path: &Path) -> Result<Vec<NamedTensor>> {
    let mut rd = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    rd.read_exact(&mut magic).map_err(|_| bad("missing header"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(&mut rd)?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut rd)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut rd)? as usize;
        let mut name = vec![0u8; name_len];
        rd.read_exact(&mut name).map_err(|_| bad("truncated name"))?;
        let name = String::from_utf8(name).map_err(|_| bad("name is not UTF-8"))?;
        let ndim = read_u32(&mut rd)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut b = [0u8; 8];
            rd.read_exact(&mut b).map_err(|_| bad("truncated shape"))?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let mut dtype = [0u8; 1];
        rd.read_exact(&mut dtype).map_err(|_| bad("truncated dtype"))?;
        if dtype[0] != 0 {
            return Err(bad(format!("unsupported dtype {}", dtype[0])));
        }
        let n: usize = shape.iter().product();
        let mut buf = vec![0u8; n * 4];
        rd.read_exact(&mut buf).map_err(|_| bad(format!("truncated data for {name}")))?;
        let data = buf.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        out.push(NamedTensor { name, shape, data });
    }
    Ok(out)
}

fn read_u32<R: Read>(rd: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    rd.read_exact(&mut b).map_err(|_| bad("truncated integer"))?;
    Ok(u32::from_le_bytes(b))
}
