//! The `CAMT` tensor interchange format.
//!
//! ```text
//! offset  size      field
//! 0       4         magic "CAMT"
//! 4       1         version (1)
//! 5       1         dtype (1 = f32 little-endian)
//! 6       1         ndim (1..=4)
//! 7       1         reserved, always 0
//! 8       4*ndim    dims, u32 little-endian
//! ...     4*len     payload, row-major, last dim fastest
//! ```

use std::path::Path;

use super::{Tensor, TensorError, MAX_DIMS};

pub const MAGIC: [u8; 4] = *b"CAMT";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;
pub const FIXED_HEADER_LEN: usize = 8;

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(FIXED_HEADER_LEN + 4 * t.dims().len() + 4 * t.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(DTYPE_F32);
    out.push(t.dims().len() as u8);
    out.push(0);
    for &d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor, TensorError> {
    if bytes.len() < FIXED_HEADER_LEN {
        return Err(TensorError::TruncatedHeader);
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("slice of 4");
    if magic != MAGIC {
        return Err(TensorError::BadMagic { found: magic });
    }
    if bytes[4] != VERSION {
        return Err(TensorError::UnsupportedVersion(bytes[4]));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(TensorError::UnsupportedDtype(bytes[5]));
    }
    let ndim = bytes[6] as usize;
    if bytes[7] != 0 {
        return Err(TensorError::BadReserved(bytes[7]));
    }
    if ndim == 0 || ndim > MAX_DIMS {
        return Err(TensorError::InvalidDims(vec![0; ndim]));
    }
    let dims_end = FIXED_HEADER_LEN + 4 * ndim;
    if bytes.len() < dims_end {
        return Err(TensorError::TruncatedHeader);
    }
    let dims: Vec<usize> = bytes[FIXED_HEADER_LEN..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("chunk of 4")) as usize)
        .collect();
    if dims.contains(&0) {
        return Err(TensorError::InvalidDims(dims));
    }
    let expected: usize = dims.iter().product();
    let payload = &bytes[dims_end..];
    if payload.len() != 4 * expected {
        return Err(TensorError::LengthMismatch {
            expected,
            // Count whole floats; a ragged tail still reports as a mismatch.
            found: payload.len() / 4,
        });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    Tensor::new(dims, data)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor, TensorError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| TensorError::io(path, e))?;
    decode_tensor(&bytes).map_err(|e| e.in_file(path))
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<(), TensorError> {
    let path = path.as_ref();
    std::fs::write(path, encode_tensor(t)).map_err(|e| TensorError::io(path, e))
}
