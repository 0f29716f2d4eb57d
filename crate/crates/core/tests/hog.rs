use std::f64::consts::PI;

use adaptive_bacf::features::{extract_hog, HOG_CHANNELS};
use image::{imageops, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straightforward per-cell HOG: every cell gathers bilinear votes from every pixel.
fn naive_hog(patch: &RgbImage, cell: usize) -> Vec<Vec<[f64; HOG_CHANNELS]>> {
    let (w, h) = (patch.width() as i64, patch.height() as i64);
    let (cx, cy) = (w as usize / cell, h as usize / cell);
    let px = |x: i64, y: i64, k: usize| patch.get_pixel(x.clamp(0, w - 1) as u32, y.clamp(0, h - 1) as u32)[k] as f64;

    let mut hist = vec![vec![[0.0f64; 18]; cx]; cy];
    for y in 0..(cy * cell) as i64 {
        for x in 0..(cx * cell) as i64 {
            let (mut gx, mut gy, mut best) = (0.0, 0.0, -1.0);
            for k in 0..3 {
                let dx = px(x + 1, y, k) - px(x - 1, y, k);
                let dy = px(x, y + 1, k) - px(x, y - 1, k);
                if dx * dx + dy * dy > best {
                    (gx, gy, best) = (dx, dy, dx * dx + dy * dy);
                }
            }
            if best == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(2.0 * PI);
            let bin = (angle / (PI / 9.0)).round() as usize % 18;
            let xp = (x as f64 + 0.5) / cell as f64 - 0.5;
            let yp = (y as f64 + 0.5) / cell as f64 - 0.5;
            for (r, row) in hist.iter_mut().enumerate() {
                for (c, bins) in row.iter_mut().enumerate() {
                    let wx = (1.0 - (xp - c as f64).abs()).max(0.0);
                    let wy = (1.0 - (yp - r as f64).abs()).max(0.0);
                    bins[bin] += wx * wy * best.sqrt();
                }
            }
        }
    }

    let energy = |r: i64, c: i64| -> f64 {
        let b = &hist[r.clamp(0, cy as i64 - 1) as usize][c.clamp(0, cx as i64 - 1) as usize];
        (0..9).map(|o| (b[o] + b[o + 9]).powi(2)).sum()
    };
    let mut out = vec![vec![[0.0; HOG_CHANNELS]; cx]; cy];
    for r in 0..cy as i64 {
        for c in 0..cx as i64 {
            let mut norms = Vec::new();
            for (dr, dc) in [(0, 0), (-1, 0), (0, -1), (-1, -1)] {
                let (r0, c0) = (r + dr, c + dc);
                let e = energy(r0, c0) + energy(r0, c0 + 1) + energy(r0 + 1, c0) + energy(r0 + 1, c0 + 1);
                norms.push(1.0 / (e + 1e-4).sqrt());
            }
            let b = &hist[r as usize][c as usize];
            let o = &mut out[r as usize][c as usize];
            for bin in 0..18 {
                o[bin] = 0.5 * norms.iter().map(|n| (b[bin] * n).min(0.2)).sum::<f64>();
            }
            for bin in 0..9 {
                o[18 + bin] = 0.5 * norms.iter().map(|n| ((b[bin] + b[bin + 9]) * n).min(0.2)).sum::<f64>();
            }
            for (t, n) in norms.iter().enumerate() {
                o[27 + t] = 0.2357 * (0..18).map(|bin| (b[bin] * n).min(0.2)).sum::<f64>();
            }
        }
    }
    out
}

fn random_patch(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
}

#[test]
fn matches_naive_oracle_on_random_patches() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for i in 0..200 {
        let patch = random_patch(&mut rng, 8, 8);
        for cell in [1, 2, 4] {
            let f = extract_hog::<f64>(&patch, cell).unwrap();
            let oracle = naive_hog(&patch, cell);
            for (r, row) in oracle.iter().enumerate() {
                for (c, want) in row.iter().enumerate() {
                    for (k, w) in want.iter().enumerate() {
                        let got = f.get(r, c, k);
                        // identical bin assignment means identical zero pattern
                        assert_eq!(got == 0.0, *w == 0.0, "patch {i} cell {cell} ({r},{c},{k})");
                        assert!((got - w).abs() <= 1e-9, "patch {i} cell {cell} ({r},{c},{k}): {got} vs {w}");
                    }
                }
            }
        }
    }
}

#[test]
fn half_turn_shifts_oriented_bins_by_half_the_circle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let patch = random_patch(&mut rng, 24, 16);
        let turned = imageops::rotate180(&patch);
        let a = extract_hog::<f64>(&patch, 4).unwrap();
        let b = extract_hog::<f64>(&turned, 4).unwrap();
        let (h, w) = a.spatial_shape();
        for r in 0..h {
            for c in 0..w {
                let (rr, cc) = (h - 1 - r, w - 1 - c);
                for o in 0..18 {
                    assert!((a.get(r, c, o) - b.get(rr, cc, (o + 9) % 18)).abs() < 1e-12);
                }
                for o in 18..27 {
                    assert!((a.get(r, c, o) - b.get(rr, cc, o)).abs() < 1e-12);
                }
                // block-energy channels follow the mirrored block layout
                for (t, tt) in [(27, 30), (28, 29), (29, 28), (30, 27)] {
                    assert!((a.get(r, c, t) - b.get(rr, cc, tt)).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn identical_inputs_give_identical_tensors() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let patch = random_patch(&mut rng, 40, 32);
    let a = extract_hog::<f32>(&patch, 4).unwrap();
    let b = extract_hog::<f32>(&patch.clone(), 4).unwrap();
    assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
}
