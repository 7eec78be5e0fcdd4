use super::ActivationMap;

/// Source coordinate of output index `i` under the align-corners convention.
fn source_coord(i: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    if dst == 1 || src == 1 {
        return (0, 0, 0.0);
    }
    // exact on both corners: i = 0 -> 0, i = dst-1 -> src-1
    let pos = (i * (src - 1)) as f64 / (dst - 1) as f64;
    let lo = (pos.floor() as usize).min(src - 1);
    let hi = (lo + 1).min(src - 1);
    (lo, hi, pos - lo as f64)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    // a + (b - a) * t keeps equal endpoints exact
    a + (b - a) * t
}

/// Bilinear resampling with aligned corners.
///
/// Corner pixels map exactly onto corner pixels, constants stay constant,
/// and resizing to the current size returns the map unchanged.
///
/// ```
/// use camsel::tensorio::{resize_bilinear, ActivationMap};
///
/// let m = ActivationMap::new(1, 2, vec![0.0, 1.0]).unwrap();
/// let r = resize_bilinear(&m, 1, 3);
/// assert_eq!(r.values(), &[0.0, 0.5, 1.0]);
/// ```
pub fn resize_bilinear(m: &ActivationMap, height: usize, width: usize) -> ActivationMap {
    assert!(height >= 1 && width >= 1, "target extents must be positive");
    if (height, width) == m.dims() {
        return m.clone();
    }
    let cols: Vec<_> = (0..width)
        .map(|x| source_coord(x, m.width(), width))
        .collect();
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        let (y0, y1, ty) = source_coord(y, m.height(), height);
        for &(x0, x1, tx) in &cols {
            let top = lerp(m.get(y0, x0), m.get(y0, x1), tx);
            let bottom = lerp(m.get(y1, x0), m.get(y1, x1), tx);
            out.push(lerp(top, bottom, ty).clamp(0.0, 1.0));
        }
    }
    ActivationMap::new(height, width, out).expect("interpolated values stay in [0, 1]")
}
