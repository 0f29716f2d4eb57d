//! 31-channel HOG in the Felzenszwalb layout: 18 contrast-sensitive orientation
//! channels, 9 contrast-insensitive channels and 4 texture (block-energy) channels.

use std::f64::consts::PI;

use image::RgbImage;

use super::{FeatureKind, FeatureTensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const HOG_CHANNELS: usize = 31;

const SENSITIVE_BINS: usize = 18;
const INSENSITIVE_BINS: usize = 9;
const TRUNCATION: f64 = 0.2;
const TEXTURE_SCALE: f64 = 0.2357;
const NORM_EPS: f64 = 1e-4;

/// Dominant-channel gradient at `(x, y)` with clamped central differences.
fn gradient(patch: &RgbImage, x: u32, y: u32) -> (f64, f64) {
    let (w, h) = patch.dimensions();
    let xl = x.saturating_sub(1);
    let xr = (x + 1).min(w - 1);
    let yu = y.saturating_sub(1);
    let yd = (y + 1).min(h - 1);
    let mut best = (0.0, 0.0, -1.0);
    for k in 0..3 {
        let dx = patch.get_pixel(xr, y)[k] as f64 - patch.get_pixel(xl, y)[k] as f64;
        let dy = patch.get_pixel(x, yd)[k] as f64 - patch.get_pixel(x, yu)[k] as f64;
        let m = dx * dx + dy * dy;
        if m > best.2 {
            best = (dx, dy, m);
        }
    }
    (best.0, best.1)
}

/// Contrast-sensitive bin whose center direction (multiples of 20 degrees) is nearest
/// to the gradient. Exactly vertical gradients sit on a bin boundary and go to the upper bin.
fn orientation_bin(dx: f64, dy: f64, dirs: &[(f64, f64); INSENSITIVE_BINS]) -> usize {
    if dx == 0.0 {
        return if dy >= 0.0 { 5 } else { 14 };
    }
    let mut best_dot = 0.0;
    let mut best = 0;
    for (o, (u, v)) in dirs.iter().enumerate() {
        let dot = u * dx + v * dy;
        if dot > best_dot {
            best_dot = dot;
            best = o;
        } else if -dot > best_dot {
            best_dot = -dot;
            best = o + INSENSITIVE_BINS;
        }
    }
    best
}

/// Extracts a `floor(H/cell) x floor(W/cell) x 31` HOG tensor.
pub fn extract_hog<T: Scalar>(patch: &RgbImage, cell_size: usize) -> Result<FeatureTensor<T>> {
    if cell_size == 0 {
        return Err(Error::param("HOG cell size must be at least 1"));
    }
    let (w, h) = patch.dimensions();
    if (w as usize) < 2 * cell_size || (h as usize) < 2 * cell_size {
        return Err(Error::input(format!(
            "patch {w}x{h} too small for HOG with {cell_size}px cells"
        )));
    }
    let cells_x = w as usize / cell_size;
    let cells_y = h as usize / cell_size;
    let n_cells = cells_x * cells_y;
    let dirs: [(f64, f64); INSENSITIVE_BINS] = std::array::from_fn(|o| {
        let a = o as f64 * PI / INSENSITIVE_BINS as f64;
        (a.cos(), a.sin())
    });

    // Orientation histograms with bilinear spatial voting.
    let mut hist = vec![0.0f64; n_cells * SENSITIVE_BINS];
    let s = cell_size as f64;
    for y in 0..(cells_y * cell_size) as u32 {
        let yp = (y as f64 + 0.5) / s - 0.5;
        let iy = yp.floor();
        let vy0 = yp - iy;
        let iy = iy as isize;
        for x in 0..(cells_x * cell_size) as u32 {
            let (dx, dy) = gradient(patch, x, y);
            let mag = (dx * dx + dy * dy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let bin = orientation_bin(dx, dy, &dirs);
            let xp = (x as f64 + 0.5) / s - 0.5;
            let ix = xp.floor();
            let vx0 = xp - ix;
            let ix = ix as isize;
            for (cy, wy) in [(iy, 1.0 - vy0), (iy + 1, vy0)] {
                if cy < 0 || cy >= cells_y as isize {
                    continue;
                }
                for (cx, wx) in [(ix, 1.0 - vx0), (ix + 1, vx0)] {
                    if cx < 0 || cx >= cells_x as isize {
                        continue;
                    }
                    let cell = cy as usize * cells_x + cx as usize;
                    hist[cell * SENSITIVE_BINS + bin] += wx * wy * mag;
                }
            }
        }
    }

    // Energy of the contrast-insensitive histogram per cell.
    let norm: Vec<f64> = (0..n_cells)
        .map(|cell| {
            let hc = &hist[cell * SENSITIVE_BINS..(cell + 1) * SENSITIVE_BINS];
            (0..INSENSITIVE_BINS)
                .map(|o| {
                    let v = hc[o] + hc[o + INSENSITIVE_BINS];
                    v * v
                })
                .sum()
        })
        .collect();
    let norm_at = |r: isize, c: isize| -> f64 {
        let r = r.clamp(0, cells_y as isize - 1) as usize;
        let c = c.clamp(0, cells_x as isize - 1) as usize;
        norm[r * cells_x + c]
    };
    let block = |r0: isize, c0: isize| -> f64 {
        1.0 / (norm_at(r0, c0) + norm_at(r0, c0 + 1) + norm_at(r0 + 1, c0) + norm_at(r0 + 1, c0 + 1)
            + NORM_EPS)
            .sqrt()
    };

    let mut out = vec![0.0f64; n_cells * HOG_CHANNELS];
    let plane = n_cells;
    for r in 0..cells_y {
        for c in 0..cells_x {
            let (ri, ci) = (r as isize, c as isize);
            // blocks: down-right, up-right, down-left, up-left
            let n = [
                block(ri, ci),
                block(ri - 1, ci),
                block(ri, ci - 1),
                block(ri - 1, ci - 1),
            ];
            let cell = r * cells_x + c;
            let hc = &hist[cell * SENSITIVE_BINS..(cell + 1) * SENSITIVE_BINS];
            let mut texture = [0.0; 4];
            for (o, &v) in hc.iter().enumerate() {
                let mut sum = 0.0;
                for (t, ni) in texture.iter_mut().zip(n) {
                    let hv = (v * ni).min(TRUNCATION);
                    sum += hv;
                    *t += hv;
                }
                out[o * plane + cell] = 0.5 * sum;
            }
            for o in 0..INSENSITIVE_BINS {
                let v = hc[o] + hc[o + INSENSITIVE_BINS];
                let sum: f64 = n.iter().map(|ni| (v * ni).min(TRUNCATION)).sum();
                out[(SENSITIVE_BINS + o) * plane + cell] = 0.5 * sum;
            }
            for (t, v) in texture.iter().enumerate() {
                out[(SENSITIVE_BINS + INSENSITIVE_BINS + t) * plane + cell] = TEXTURE_SCALE * v;
            }
        }
    }

    FeatureTensor::new(
        cells_y,
        cells_x,
        HOG_CHANNELS,
        cell_size,
        FeatureKind::Hog,
        out.into_iter().map(T::of).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn constant_patch_has_no_orientation_energy() {
        let p = RgbImage::from_pixel(16, 12, Rgb([90, 120, 30]));
        let f = extract_hog::<f64>(&p, 4).unwrap();
        assert_eq!((f.height(), f.width(), f.channels()), (3, 4, 31));
        assert!(f.values().iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn vertical_edge_votes_for_horizontal_gradient_bins() {
        let p = RgbImage::from_fn(16, 16, |x, _| if x < 8 { Rgb([0, 0, 0]) } else { Rgb([200, 200, 200]) });
        let f = extract_hog::<f64>(&p, 4).unwrap();
        for r in 0..f.height() {
            for c in 0..f.width() {
                let total: f64 = (0..18).map(|o| f.get(r, c, o)).sum();
                if total == 0.0 {
                    continue;
                }
                assert!(f.get(r, c, 0) > 0.99 * total, "cell ({r},{c})");
                let ins: f64 = (18..27).map(|o| f.get(r, c, o)).sum();
                assert!(f.get(r, c, 18) > 0.99 * ins);
            }
        }
    }

    #[test]
    fn too_small_patch_is_rejected() {
        let p = RgbImage::new(7, 16);
        assert!(extract_hog::<f64>(&p, 4).is_err());
    }

    #[test]
    fn output_dims_floor_partial_cells() {
        let p = RgbImage::from_fn(18, 13, |x, y| Rgb([(x * 13) as u8, (y * 17) as u8, 5]));
        let f = extract_hog::<f32>(&p, 4).unwrap();
        assert_eq!((f.height(), f.width()), (3, 4));
    }
}
