//! Independent reference implementations shared by the integration tests.
//! They are written for clarity rather than speed and share no code with the
//! library routes they check.
#![allow(dead_code)]

use std::collections::BTreeSet;

use camsel::cam::LayerDump;
use camsel::tensorio::{ActivationMap, BinaryMask, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ActivationMap {
    let v: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.0..=1.0)).collect();
    ActivationMap::new(h, w, v).unwrap()
}

/// Features in [0, 2), gradients in [-1, 1).
pub fn random_dump(rng: &mut ChaCha8Rng, layer_id: usize, c: usize, h: usize, w: usize) -> LayerDump {
    let f: Vec<f32> = (0..c * h * w).map(|_| rng.gen_range(0.0..2.0)).collect();
    let g: Vec<f32> = (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
    LayerDump::new(
        layer_id,
        Tensor::new(vec![c, h, w], f).unwrap(),
        Tensor::new(vec![c, h, w], g).unwrap(),
    )
    .unwrap()
}

/// Min-max normalization with the constant -> zeros convention.
pub fn normalize(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// Grad-CAM evaluated pixel by pixel from the raw tensors.
pub fn brute_grad_cam(d: &LayerDump) -> Vec<f64> {
    let (c, h, w) = d.shape();
    let f = d.features().data();
    let g = d.gradients().data();
    let at = |t: &[f32], ch: usize, y: usize, x: usize| t[ch * h * w + y * w + x] as f64;
    let mut alpha = vec![0.0; c];
    for (ch, a) in alpha.iter_mut().enumerate() {
        let mut s = 0.0;
        for y in 0..h {
            for x in 0..w {
                s += at(g, ch, y, x);
            }
        }
        *a = s / (h * w) as f64;
    }
    let mut raw = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut v = 0.0;
            for (ch, a) in alpha.iter().enumerate() {
                v += a * at(f, ch, y, x);
            }
            raw.push(if v > 0.0 { v } else { 0.0 });
        }
    }
    normalize(&raw)
}

/// Align-corners bilinear sampling, textbook form.
pub fn brute_resize(src: &[f64], sh: usize, sw: usize, h: usize, w: usize) -> Vec<f64> {
    let coord = |i: usize, out: usize, inp: usize| -> f64 {
        if out <= 1 {
            0.0
        } else {
            i as f64 * (inp - 1) as f64 / (out - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let sy = coord(i, h, sh);
            let sx = coord(j, w, sw);
            let y0 = sy.floor() as usize;
            let x0 = sx.floor() as usize;
            let y1 = (y0 + 1).min(sh - 1);
            let x1 = (x0 + 1).min(sw - 1);
            let ty = sy - y0 as f64;
            let tx = sx - x0 as f64;
            let p = |y: usize, x: usize| src[y * sw + x];
            let v = p(y0, x0) * (1.0 - ty) * (1.0 - tx)
                + p(y0, x1) * (1.0 - ty) * tx
                + p(y1, x0) * ty * (1.0 - tx)
                + p(y1, x1) * ty * tx;
            out.push(v);
        }
    }
    out
}

pub fn pixel_set(m: &BinaryMask) -> BTreeSet<(usize, usize)> {
    let mut s = BTreeSet::new();
    for y in 0..m.height() {
        for x in 0..m.width() {
            if m.get(y, x) {
                s.insert((y, x));
            }
        }
    }
    s
}

/// IoU from set intersection and union; `None` when both are empty.
pub fn set_iou(p: &BinaryMask, g: &BinaryMask) -> Option<f64> {
    let (a, b) = (pixel_set(p), pixel_set(g));
    let union = a.union(&b).count();
    if union == 0 {
        return None;
    }
    Some(a.intersection(&b).count() as f64 / union as f64)
}

pub fn mask_from_bits(h: usize, w: usize, bits: u32) -> BinaryMask {
    BinaryMask::new(h, w, (0..h * w).map(|i| bits >> i & 1 == 1).collect()).unwrap()
}

/// Block-diagonal similarity: 1.0 inside a block, 0.0 across blocks.
pub fn planted_blocks(blocks: &[usize]) -> (Vec<usize>, camsel::similarity::SimilarityMatrix) {
    let labels: Vec<usize> = blocks
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    let n = labels.len();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j && labels[i] == labels[j] {
                v[i * n + j] = 1.0;
            }
        }
    }
    let sim = camsel::similarity::SimilarityMatrix::new(camsel::similarity::default_class_names(n), v).unwrap();
    (labels, sim)
}

/// Same partition up to relabeling, checked through co-membership.
pub fn co_membership_equal(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len()
        && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
    }
}
