//! Grad-CAM per layer, multi-layer fusion and fusion across representative
//! classes.
//!
//! Every stage ends with min-max normalization, so each output is an
//! [`ActivationMap`] in `[0, 1]` and a constant (or all-zero) intermediate
//! collapses to the all-zero map.

mod dump;

pub use dump::{
    list_pair_dumps, pair_dir, read_pair_dump, write_pair_dump, DumpKey, FEATURES_SUFFIX,
    GRADIENTS_SUFFIX,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensorio::{resize_bilinear, ActivationMap, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum CamError {
    #[error("layer {layer}: features {features:?} and gradients {gradients:?} differ")]
    DimsMismatch {
        layer: usize,
        features: Vec<usize>,
        gradients: Vec<usize>,
    },
    #[error("layer {layer}: expected a [C, H, W] tensor, got {dims:?}")]
    NotChw { layer: usize, dims: Vec<usize> },
    #[error("layer ids must be strictly increasing, found {prev} then {next}")]
    LayerOrder { prev: usize, next: usize },
    #[error("no layers")]
    NoLayers,
    #[error("no maps to fuse")]
    NoMaps,
    #[error("map {index} is {found_h}x{found_w}, expected {expected_h}x{expected_w}")]
    MapDims {
        index: usize,
        expected_h: usize,
        expected_w: usize,
        found_h: usize,
        found_w: usize,
    },
    #[error("layer {0}: non-finite Grad-CAM response")]
    NonFinite(usize),
    #[error("invalid dump path {0}")]
    BadDumpPath(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Feature and gradient tensors tapped at one layer, both `[C, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDump {
    pub layer_id: usize,
    features: Tensor,
    gradients: Tensor,
}

impl LayerDump {
    pub fn new(layer_id: usize, features: Tensor, gradients: Tensor) -> Result<Self, CamError> {
        if features.dims().len() != 3 {
            return Err(CamError::NotChw {
                layer: layer_id,
                dims: features.dims().to_vec(),
            });
        }
        if features.dims() != gradients.dims() {
            return Err(CamError::DimsMismatch {
                layer: layer_id,
                features: features.dims().to_vec(),
                gradients: gradients.dims().to_vec(),
            });
        }
        Ok(LayerDump {
            layer_id,
            features,
            gradients,
        })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn gradients(&self) -> &Tensor {
        &self.gradients
    }

    /// `(channels, height, width)`
    pub fn shape(&self) -> (usize, usize, usize) {
        let d = self.features.dims();
        (d[0], d[1], d[2])
    }
}

/// All tapped layers of the binary classifier for one (target, comparison)
/// pair on one image, earliest layer first.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDump {
    pub image_id: String,
    pub target: usize,
    pub comparison: usize,
    layers: Vec<LayerDump>,
}

impl PairDump {
    pub fn new(
        image_id: impl Into<String>,
        target: usize,
        comparison: usize,
        layers: Vec<LayerDump>,
    ) -> Result<Self, CamError> {
        if layers.is_empty() {
            return Err(CamError::NoLayers);
        }
        for w in layers.windows(2) {
            if w[1].layer_id <= w[0].layer_id {
                return Err(CamError::LayerOrder {
                    prev: w[0].layer_id,
                    next: w[1].layer_id,
                });
            }
        }
        Ok(PairDump {
            image_id: image_id.into(),
            target,
            comparison,
            layers,
        })
    }

    pub fn layers(&self) -> &[LayerDump] {
        &self.layers
    }

    /// The largest layer resolution by pixel count, earliest layer on ties.
    pub fn fusion_size(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for l in &self.layers {
            let (_, h, w) = l.shape();
            if h * w > best.0 * best.1 {
                best = (h, w);
            }
        }
        best
    }
}

/// Whether a pair map uses every tapped layer or only the final one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerMode {
    #[default]
    Multi,
    Final,
}

impl std::str::FromStr for LayerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "multi" => Ok(LayerMode::Multi),
            "final" | "final-only" => Ok(LayerMode::Final),
            other => Err(format!("unknown layer mode {other:?} (multi | final)")),
        }
    }
}

/// Grad-CAM for one layer.
///
/// Channel weights are the spatial mean of the gradients; the map is the
/// rectified weighted channel sum, min-max normalized.
///
/// ```
/// use camsel::cam::{grad_cam_layer, LayerDump};
/// use camsel::tensorio::Tensor;
///
/// let features = Tensor::new(vec![2, 2, 2], vec![1., 0., 0., 0., 0., 0., 0., 2.]).unwrap();
/// let gradients = Tensor::new(vec![2, 2, 2], vec![0.5; 8]).unwrap();
/// let map = grad_cam_layer(&LayerDump::new(1, features, gradients).unwrap()).unwrap();
/// assert_eq!(map.values(), &[0.5, 0.0, 0.0, 1.0]);
/// ```
pub fn grad_cam_layer(d: &LayerDump) -> Result<ActivationMap, CamError> {
    let (channels, h, w) = d.shape();
    let plane = h * w;
    let feats = d.features.data();
    let grads = d.gradients.data();
    let mut raw = vec![0.0f64; plane];
    for c in 0..channels {
        let g = &grads[c * plane..(c + 1) * plane];
        let alpha = g.iter().map(|&v| v as f64).sum::<f64>() / plane as f64;
        if alpha == 0.0 {
            continue;
        }
        let f = &feats[c * plane..(c + 1) * plane];
        for (r, &v) in raw.iter_mut().zip(f) {
            *r += alpha * v as f64;
        }
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(CamError::NonFinite(d.layer_id));
    }
    for r in raw.iter_mut() {
        *r = r.max(0.0);
    }
    Ok(ActivationMap::from_raw(h, w, &raw)?)
}

/// Sums the layer maps at `height x width`, multiplies the sum by the final
/// (last) layer's map and normalizes.
pub fn fuse_layers(
    maps: &[ActivationMap],
    height: usize,
    width: usize,
) -> Result<ActivationMap, CamError> {
    let last = maps.last().ok_or(CamError::NoMaps)?;
    let mut sum = vec![0.0f64; height * width];
    for m in maps {
        let r = resize_bilinear(m, height, width);
        for (s, &v) in sum.iter_mut().zip(r.values()) {
            *s += v;
        }
    }
    let final_map = resize_bilinear(last, height, width);
    let fused: Vec<f64> = sum
        .iter()
        .zip(final_map.values())
        .map(|(&s, &f)| s * f)
        .collect();
    Ok(ActivationMap::from_raw(height, width, &fused)?)
}

/// Averages same-sized maps and normalizes the mean.
///
/// ```
/// use camsel::cam::fuse_classes;
/// use camsel::tensorio::ActivationMap;
///
/// let a = ActivationMap::new(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
/// let b = ActivationMap::new(1, 3, vec![0.0, 1.0, 0.0]).unwrap();
/// assert_eq!(fuse_classes(&[a, b]).unwrap().values(), &[1.0, 1.0, 0.0]);
/// ```
pub fn fuse_classes(maps: &[ActivationMap]) -> Result<ActivationMap, CamError> {
    let first = maps.first().ok_or(CamError::NoMaps)?;
    let (h, w) = first.dims();
    let mut sum = vec![0.0f64; h * w];
    for (index, m) in maps.iter().enumerate() {
        if m.dims() != (h, w) {
            return Err(CamError::MapDims {
                index,
                expected_h: h,
                expected_w: w,
                found_h: m.height(),
                found_w: m.width(),
            });
        }
        for (s, &v) in sum.iter_mut().zip(m.values()) {
            *s += v;
        }
    }
    let k = maps.len() as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / k).collect();
    Ok(ActivationMap::from_raw(h, w, &mean)?)
}

/// The activation map of one (target, comparison) pair.
///
/// `size` defaults to [`PairDump::fusion_size`]. In [`LayerMode::Final`] only
/// the last layer's Grad-CAM is used, resized to `size`.
pub fn generate_pair_map(
    p: &PairDump,
    mode: LayerMode,
    size: Option<(usize, usize)>,
) -> Result<ActivationMap, CamError> {
    let (h, w) = size.unwrap_or_else(|| p.fusion_size());
    match mode {
        LayerMode::Multi => {
            let maps = p
                .layers
                .iter()
                .map(grad_cam_layer)
                .collect::<Result<Vec<_>, _>>()?;
            fuse_layers(&maps, h, w)
        }
        LayerMode::Final => {
            let last = p.layers.last().ok_or(CamError::NoLayers)?;
            Ok(resize_bilinear(&grad_cam_layer(last)?, h, w))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(h: usize, w: usize, v: &[f64]) -> ActivationMap {
        ActivationMap::new(h, w, v.to_vec()).unwrap()
    }

    fn layer(id: usize, c: usize, h: usize, w: usize, f: Vec<f32>, g: Vec<f32>) -> LayerDump {
        LayerDump::new(
            id,
            Tensor::new(vec![c, h, w], f).unwrap(),
            Tensor::new(vec![c, h, w], g).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_gradients_give_zero_map() {
        let l = layer(1, 2, 2, 2, vec![0.3; 8], vec![0.0; 8]);
        assert!(grad_cam_layer(&l).unwrap().is_zero());
    }

    #[test]
    fn single_channel_is_normalized_features() {
        let f = vec![1.0, 3.0, 2.0, 5.0];
        let l = layer(1, 1, 2, 2, f, vec![1.0; 4]);
        assert_eq!(grad_cam_layer(&l).unwrap().values(), &[0.0, 0.5, 0.25, 1.0]);
    }

    #[test]
    fn two_channel_manual_case() {
        let l = layer(
            1,
            2,
            2,
            2,
            vec![1., 0., 0., 0., 0., 0., 0., 2.],
            vec![0.5; 8],
        );
        assert_eq!(grad_cam_layer(&l).unwrap().values(), &[0.5, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn negative_response_is_rectified() {
        // raw = [-1, 1] -> [0, 1]
        let l = layer(1, 1, 1, 2, vec![-1.0, 1.0], vec![1.0, 1.0]);
        assert_eq!(grad_cam_layer(&l).unwrap().values(), &[0.0, 1.0]);
        // all negative -> all zero after rectification
        let l = layer(1, 1, 1, 2, vec![-1.0, -2.0], vec![1.0, 1.0]);
        assert!(grad_cam_layer(&l).unwrap().is_zero());
    }

    #[test]
    fn dump_validation() {
        let f = Tensor::zeros(vec![1, 2, 2]).unwrap();
        let g = Tensor::zeros(vec![1, 2, 3]).unwrap();
        assert!(matches!(
            LayerDump::new(1, f.clone(), g),
            Err(CamError::DimsMismatch { .. })
        ));
        let flat = Tensor::zeros(vec![4]).unwrap();
        assert!(matches!(
            LayerDump::new(1, flat.clone(), flat),
            Err(CamError::NotChw { .. })
        ));
        let a = LayerDump::new(2, f.clone(), f.clone()).unwrap();
        let b = LayerDump::new(2, f.clone(), f).unwrap();
        assert!(matches!(
            PairDump::new("x", 0, 1, vec![a, b]),
            Err(CamError::LayerOrder { prev: 2, next: 2 })
        ));
        assert!(matches!(PairDump::new("x", 0, 1, vec![]), Err(CamError::NoLayers)));
    }

    #[test]
    fn single_layer_fusion_squares() {
        let m = map(1, 3, &[0.0, 0.5, 1.0]);
        let fused = fuse_layers(std::slice::from_ref(&m), 1, 3).unwrap();
        assert_eq!(fused.values(), &[0.0, 0.25, 1.0]);
        let fused = fuse_layers(&[m.clone(), m.clone(), m], 1, 3).unwrap();
        assert_eq!(fused.values(), &[0.0, 0.25, 1.0]);
    }

    #[test]
    fn fusion_errors() {
        assert!(matches!(fuse_layers(&[], 2, 2), Err(CamError::NoMaps)));
        assert!(matches!(fuse_classes(&[]), Err(CamError::NoMaps)));
        let a = map(1, 2, &[0.0, 1.0]);
        let b = map(2, 1, &[0.0, 1.0]);
        assert!(matches!(
            fuse_classes(&[a, b]),
            Err(CamError::MapDims { index: 1, .. })
        ));
    }

    #[test]
    fn disjoint_pair_without_background_is_degenerate() {
        let a = map(1, 2, &[1.0, 0.0]);
        let b = map(1, 2, &[0.0, 1.0]);
        assert!(fuse_classes(&[a, b]).unwrap().is_zero());
    }

    #[test]
    fn identical_maps_fuse_to_normalized() {
        let m = map(1, 3, &[0.2, 0.4, 0.6]);
        let out = fuse_classes(&[m.clone(), m.clone(), m]).unwrap();
        for (o, e) in out.values().iter().zip([0.0, 0.5, 1.0]) {
            assert!((o - e).abs() < 1e-12);
        }
    }

    #[test]
    fn fusion_size_prefers_largest_then_earliest() {
        let big = layer(1, 1, 4, 4, vec![0.0; 16], vec![0.0; 16]);
        let small = layer(2, 1, 2, 2, vec![0.0; 4], vec![0.0; 4]);
        let p = PairDump::new("x", 0, 1, vec![big, small]).unwrap();
        assert_eq!(p.fusion_size(), (4, 4));
    }

    #[test]
    fn final_mode_uses_last_layer_only() {
        let l1 = layer(1, 1, 2, 2, vec![1.0, 0.0, 0.0, 0.0], vec![1.0; 4]);
        let l2 = layer(2, 1, 1, 2, vec![0.0, 1.0], vec![1.0; 2]);
        let p = PairDump::new("x", 0, 1, vec![l1, l2.clone()]).unwrap();
        let got = generate_pair_map(&p, LayerMode::Final, None).unwrap();
        let want = resize_bilinear(&grad_cam_layer(&l2).unwrap(), 2, 2);
        assert_eq!(got, want);
        assert_eq!(got.values(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn layer_mode_parses() {
        assert_eq!("multi".parse::<LayerMode>().unwrap(), LayerMode::Multi);
        assert_eq!("final".parse::<LayerMode>().unwrap(), LayerMode::Final);
        assert!("both".parse::<LayerMode>().is_err());
    }
}
