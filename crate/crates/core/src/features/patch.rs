use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

/// Context region around a target: pixel center (0-based, pixel centers on integers),
/// target size in pixels and the search-area multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchSpec {
    pub center: (f64, f64),
    pub size: (f64, f64),
    pub padding_factor: f64,
}

impl PatchSpec {
    pub fn new(center: (f64, f64), size: (f64, f64), padding_factor: f64) -> Result<Self> {
        if !(size.0 > 0.0 && size.1 > 0.0) {
            return Err(Error::param(format!("patch size must be positive, got {size:?}")));
        }
        if !(padding_factor >= 1.0) {
            return Err(Error::param(format!(
                "padding factor must be at least 1, got {padding_factor}"
            )));
        }
        Ok(Self {
            center,
            size,
            padding_factor,
        })
    }

    /// Output patch dimensions `(width, height)` in pixels.
    pub fn output_size(&self) -> (u32, u32) {
        let w = (self.size.0 * self.padding_factor).round().max(1.0) as u32;
        let h = (self.size.1 * self.padding_factor).round().max(1.0) as u32;
        (w, h)
    }
}

fn check_frame(frame: &RgbImage) -> Result<()> {
    if frame.width() == 0 || frame.height() == 0 {
        return Err(Error::input("frame has zero area"));
    }
    Ok(())
}

/// Integer crop of the padded context region; out-of-frame pixels replicate the nearest edge.
pub fn extract_patch(frame: &RgbImage, spec: &PatchSpec) -> Result<RgbImage> {
    check_frame(frame)?;
    let (w, h) = spec.output_size();
    let x0 = (spec.center.0 - (w as f64 - 1.0) / 2.0).round() as i64;
    let y0 = (spec.center.1 - (h as f64 - 1.0) / 2.0).round() as i64;
    let max_x = frame.width() as i64 - 1;
    let max_y = frame.height() as i64 - 1;
    Ok(RgbImage::from_fn(w, h, |x, y| {
        let sx = (x0 + x as i64).clamp(0, max_x) as u32;
        let sy = (y0 + y as i64).clamp(0, max_y) as u32;
        *frame.get_pixel(sx, sy)
    }))
}

/// Bilinear resampling of the `region` (width, height in pixels) centered at `center`
/// onto an `out` (width, height) pixel grid, replicating edges outside the frame.
pub fn resample_region(
    frame: &RgbImage,
    center: (f64, f64),
    region: (f64, f64),
    out: (u32, u32),
) -> Result<RgbImage> {
    check_frame(frame)?;
    if !(region.0 > 0.0 && region.1 > 0.0) || out.0 == 0 || out.1 == 0 {
        return Err(Error::param("resample region and output must be non-empty"));
    }
    let max_x = (frame.width() - 1) as f64;
    let max_y = (frame.height() - 1) as f64;
    let step_x = region.0 / out.0 as f64;
    let step_y = region.1 / out.1 as f64;
    let left = center.0 - region.0 / 2.0;
    let top = center.1 - region.1 / 2.0;
    let xs: Vec<(u32, u32, f64)> = (0..out.0)
        .map(|j| {
            let x = (left + (j as f64 + 0.5) * step_x).clamp(0.0, max_x);
            let x0 = x.floor();
            (x0 as u32, (x0 as u32 + 1).min(max_x as u32), x - x0)
        })
        .collect();
    let mut img = RgbImage::new(out.0, out.1);
    for i in 0..out.1 {
        let y = (top + (i as f64 + 0.5) * step_y).clamp(0.0, max_y);
        let y0 = y.floor();
        let (r0, r1, fy) = (y0 as u32, (y0 as u32 + 1).min(max_y as u32), y - y0);
        for (j, &(c0, c1, fx)) in xs.iter().enumerate() {
            let a = frame.get_pixel(c0, r0);
            let b = frame.get_pixel(c1, r0);
            let c = frame.get_pixel(c0, r1);
            let d = frame.get_pixel(c1, r1);
            let mut px = [0u8; 3];
            for k in 0..3 {
                let top = a[k] as f64 + (b[k] as f64 - a[k] as f64) * fx;
                let bottom = c[k] as f64 + (d[k] as f64 - c[k] as f64) * fx;
                px[k] = (top + (bottom - top) * fy).round().clamp(0.0, 255.0) as u8;
            }
            img.put_pixel(j as u32, i, Rgb(px));
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_frame(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x * 7 % 256) as u8, (y * 5 % 256) as u8, ((x + y) % 256) as u8]))
    }

    #[test]
    fn inside_frame_is_exact_copy() {
        let f = gradient_frame(40, 30);
        let spec = PatchSpec::new((19.5, 14.5), (10.0, 8.0), 2.0).unwrap();
        let p = extract_patch(&f, &spec).unwrap();
        assert_eq!(p.dimensions(), (20, 16));
        for y in 0..16 {
            for x in 0..20 {
                assert_eq!(p.get_pixel(x, y), f.get_pixel(x + 10, y + 7));
            }
        }
    }

    #[test]
    fn origin_center_replicates_edges() {
        let f = gradient_frame(40, 30);
        let spec = PatchSpec::new((0.0, 0.0), (10.0, 10.0), 1.0).unwrap();
        let p = extract_patch(&f, &spec).unwrap();
        for y in 0..10u32 {
            for x in 0..10u32 {
                let sx = (x as i64 - 5).max(0) as u32;
                let sy = (y as i64 - 5).max(0) as u32;
                assert_eq!(p.get_pixel(x, y), f.get_pixel(sx, sy));
            }
        }
        assert_eq!(p.get_pixel(0, 0), f.get_pixel(0, 0));
    }

    #[test]
    fn unit_padding_gives_target_sized_crop() {
        let f = gradient_frame(40, 30);
        let spec = PatchSpec::new((20.0, 15.0), (7.0, 5.0), 1.0).unwrap();
        assert_eq!(extract_patch(&f, &spec).unwrap().dimensions(), (7, 5));
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let spec = PatchSpec::new((0.0, 0.0), (4.0, 4.0), 1.0).unwrap();
        assert!(extract_patch(&RgbImage::new(0, 5), &spec).is_err());
        assert!(PatchSpec::new((0.0, 0.0), (0.0, 4.0), 1.0).is_err());
        assert!(PatchSpec::new((0.0, 0.0), (4.0, 4.0), 0.5).is_err());
    }

    #[test]
    fn resample_at_unit_scale_on_pixel_grid_is_a_copy() {
        let f = gradient_frame(40, 30);
        // odd region centered on a pixel: samples land on pixel centers
        let p = resample_region(&f, (20.0, 15.0), (9.0, 7.0), (9, 7)).unwrap();
        for y in 0..7 {
            for x in 0..9 {
                assert_eq!(p.get_pixel(x, y), f.get_pixel(x + 16, y + 12));
            }
        }
    }
}
