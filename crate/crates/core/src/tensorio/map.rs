use super::{Tensor, TensorError};

/// An `H x W` activation map with every value in `[0, 1]`.
///
/// The all-zero map is the canonical "no activation" element.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ActivationMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self, TensorError> {
        if height == 0 || width == 0 {
            return Err(TensorError::InvalidDims(vec![height, width]));
        }
        if values.len() != height * width {
            return Err(TensorError::LengthMismatch {
                expected: height * width,
                found: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(TensorError::NonFinite(index));
            }
            if !(0.0..=1.0).contains(&value) {
                return Err(TensorError::OutOfRange { index, value });
            }
        }
        Ok(ActivationMap {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "map extents must be positive");
        ActivationMap {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    /// Min-max normalizes an arbitrary finite raw map into `[0, 1]`.
    pub fn from_raw(height: usize, width: usize, raw: &[f64]) -> Result<Self, TensorError> {
        if let Some(idx) = raw.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(idx));
        }
        ActivationMap::new(height, width, min_max_normalize(raw))
    }

    /// Interprets a `[H, W]` (or `[1, H, W]`) tensor as a map.
    pub fn from_tensor(t: &Tensor) -> Result<Self, TensorError> {
        let (h, w) = match t.dims() {
            [h, w] | [1, h, w] => (*h, *w),
            other => return Err(TensorError::InvalidDims(other.to_vec())),
        };
        ActivationMap::new(h, w, t.data().iter().map(|&v| v as f64).collect())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.height, self.width],
            self.values.iter().map(|&v| v as f32).collect(),
        )
        .expect("map dims are valid tensor dims")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Maps `min..=max` onto `0..=1`. A constant input (including all-zero)
/// becomes all zeros.
pub fn min_max_normalize(raw: &[f64]) -> Vec<f64> {
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if raw.is_empty() || hi <= lo {
        return vec![0.0; raw.len()];
    }
    let span = hi - lo;
    raw.iter()
        .map(|&v| ((v - lo) / span).clamp(0.0, 1.0))
        .collect()
}

/// An `H x W` foreground mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self, TensorError> {
        if height == 0 || width == 0 {
            return Err(TensorError::InvalidDims(vec![height, width]));
        }
        if bits.len() != height * width {
            return Err(TensorError::LengthMismatch {
                expected: height * width,
                found: bits.len(),
            });
        }
        Ok(BinaryMask {
            height,
            width,
            bits,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        BinaryMask::new(height, width, vec![false; height * width]).expect("positive extents")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, on: bool) {
        self.bits[y * self.width + x] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// `true` when every foreground pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn to_map(&self) -> ActivationMap {
        ActivationMap::new(
            self.height,
            self.width,
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .expect("0/1 values are in range")
    }
}
