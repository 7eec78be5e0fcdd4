//! Dense array types and the on-disk formats shared by every other module.
//!
//! * [`Tensor`]: up to four dimensions of `f32`, stored in the `CAMT` binary
//!   format (see [`camt`]).
//! * [`ActivationMap`]: an `H x W` map with every value in `[0, 1]`.
//! * [`BinaryMask`]: an `H x W` boolean mask, read from binary PGM.

pub mod camt;
mod map;
pub mod pgm;
mod resize;

pub use camt::{decode_tensor, encode_tensor, read_tensor, write_tensor};
pub use map::{min_max_normalize, ActivationMap, BinaryMask};
pub use pgm::{read_mask_pgm, write_map_pgm, write_mask_pgm};
pub use resize::resize_bilinear;

use std::path::PathBuf;

use thiserror::Error;

/// Largest number of dimensions a [`Tensor`] may carry.
pub const MAX_DIMS: usize = 4;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("bad magic: expected \"CAMT\", found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported CAMT version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported CAMT dtype {0}")]
    UnsupportedDtype(u8),
    #[error("reserved header byte must be zero, found {0}")]
    BadReserved(u8),
    #[error("invalid dims {0:?}: need 1-4 positive extents")]
    InvalidDims(Vec<usize>),
    #[error("payload length mismatch: dims imply {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("truncated header")]
    TruncatedHeader,
    #[error("value {value} at flat index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("dimension mismatch: {left_h}x{left_w} vs {right_h}x{right_w}")]
    DimensionMismatch {
        left_h: usize,
        left_w: usize,
        right_h: usize,
        right_w: usize,
    },
    #[error("malformed PGM header: {0}")]
    MalformedPgm(String),
    #[error("truncated PGM payload: expected {expected} bytes, found {found}")]
    TruncatedPgm { expected: usize, found: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<TensorError>,
    },
}

impl TensorError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TensorError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ (TensorError::Io { .. } | TensorError::InFile { .. }) => e,
            e => TensorError::InFile {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }

    /// The underlying error with any file context stripped.
    pub fn root(&self) -> &TensorError {
        match self {
            TensorError::InFile { source, .. } => source.root(),
            e => e,
        }
    }
}

/// A dense row-major `f32` array of one to four dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        if dims.is_empty() || dims.len() > MAX_DIMS || dims.contains(&0) {
            return Err(TensorError::InvalidDims(dims));
        }
        let expected = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| TensorError::InvalidDims(dims.clone()))?;
        if expected != data.len() {
            return Err(TensorError::LengthMismatch {
                expected,
                found: data.len(),
            });
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(idx));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self, TensorError> {
        let len = dims.iter().product();
        Tensor::new(dims, vec![0.0; len])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}
