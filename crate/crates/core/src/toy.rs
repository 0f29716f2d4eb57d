//! Synthetic test sequences: a textured square moving over a smooth background.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::format_trajectory;
use crate::tracker::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyKind {
    /// 60 frames; the target moves along a smooth path and grows by a quarter.
    Moving,
    /// 60 frames of slow motion; the target is invisible on frames 20 to 30.
    Occlusion,
}

impl ToyKind {
    pub const FRAMES: usize = 60;
    /// 1-based inclusive frame range during which the occlusion target is hidden.
    pub const HIDDEN: (usize, usize) = (20, 30);

    pub fn name(self) -> &'static str {
        match self {
            ToyKind::Moving => "moving",
            ToyKind::Occlusion => "occlusion",
        }
    }
}

impl std::str::FromStr for ToyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moving" => Ok(Self::Moving),
            "occlusion" => Ok(Self::Occlusion),
            other => Err(Error::param(format!(
                "unknown toy sequence `{other}` (expected moving or occlusion)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToySequence {
    pub frames: Vec<RgbImage>,
    pub ground_truth: Vec<BoundingBox>,
}

const WIDTH: u32 = 200;
const HEIGHT: u32 = 160;
const BLOCKS: usize = 6;

struct Background {
    waves: Vec<(f64, f64, f64, f64, [f64; 3])>,
}

impl Background {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let waves = (0..6)
            .map(|_| {
                let a = rng.random_range(0.0..PI);
                let f = rng.random_range(0.03..0.12);
                let phase = rng.random_range(0.0..2.0 * PI);
                let amp = rng.random_range(10.0..22.0);
                let tint = [
                    rng.random_range(0.85..1.0),
                    rng.random_range(0.85..1.0),
                    rng.random_range(0.85..1.0),
                ];
                (a, f, phase, amp, tint)
            })
            .collect();
        Self { waves }
    }

    fn pixel(&self, x: f64, y: f64) -> [f64; 3] {
        let mut v = [118.0; 3];
        for (a, f, phase, amp, tint) in &self.waves {
            let s = amp * (f * (x * a.cos() + y * a.sin()) + phase).sin();
            for k in 0..3 {
                v[k] += s * tint[k];
            }
        }
        v
    }
}

fn target_texture(rng: &mut ChaCha8Rng) -> Vec<[u8; 3]> {
    (0..BLOCKS * BLOCKS)
        .map(|_| {
            let hi = rng.random_range(170..=255u8);
            let lo = rng.random_range(0..=60u8);
            let mid = rng.random_range(0..=255u8);
            match rng.random_range(0..6) {
                0 => [hi, lo, mid],
                1 => [hi, mid, lo],
                2 => [lo, hi, mid],
                3 => [mid, hi, lo],
                4 => [lo, mid, hi],
                _ => [mid, lo, hi],
            }
        })
        .collect()
}

fn render(bg: &Background, texture: &[[u8; 3]], target: Option<BoundingBox>) -> RgbImage {
    RgbImage::from_fn(WIDTH, HEIGHT, |x, y| {
        if let Some(b) = target {
            let (cx, cy) = b.pixel_center();
            let (u, v) = (
                (x as f64 - cx) / b.size.0 + 0.5,
                (y as f64 - cy) / b.size.1 + 0.5,
            );
            if (0.0..1.0).contains(&u) && (0.0..1.0).contains(&v) {
                let i = (v * BLOCKS as f64) as usize * BLOCKS + (u * BLOCKS as f64) as usize;
                return Rgb(texture[i]);
            }
        }
        let p = bg.pixel(x as f64, y as f64);
        Rgb(p.map(|c| c.round().clamp(0.0, 255.0) as u8))
    })
}

/// Generates a toy sequence; the same `(kind, seed)` always gives the same frames.
pub fn make_toy(kind: ToyKind, seed: u64) -> ToySequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg = Background::new(&mut rng);
    let texture = target_texture(&mut rng);
    let n = ToyKind::FRAMES;
    let mut frames = Vec::with_capacity(n);
    let mut ground_truth = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        let (center, side) = match kind {
            ToyKind::Moving => (
                (
                    100.0 + 45.0 * (2.0 * PI * t).sin(),
                    80.0 + 25.0 * (3.0 * PI * t).sin(),
                ),
                24.0 * (1.0 + 0.25 * t),
            ),
            ToyKind::Occlusion => ((80.0 + 0.6 * i as f64, 78.0 + 0.2 * i as f64), 24.0),
        };
        let b = BoundingBox::from_pixel_center(center, (side, side)).expect("positive size");
        let frame_no = i + 1;
        let hidden = kind == ToyKind::Occlusion
            && (ToyKind::HIDDEN.0..=ToyKind::HIDDEN.1).contains(&frame_no);
        frames.push(render(&bg, &texture, (!hidden).then_some(b)));
        ground_truth.push(b);
    }
    ToySequence {
        frames,
        ground_truth,
    }
}

/// Writes `dir/img/0001.png ...` and `dir/groundtruth_rect.txt`.
pub fn write_toy(dir: &Path, kind: ToyKind, seed: u64) -> Result<()> {
    let seq = make_toy(kind, seed);
    let img_dir = dir.join("img");
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    for (i, frame) in seq.frames.iter().enumerate() {
        let path = img_dir.join(format!("{:04}.png", i + 1));
        frame.save(&path).map_err(|source| Error::Image { path, source })?;
    }
    let gt = dir.join("groundtruth_rect.txt");
    fs::write(&gt, format_trajectory(&seq.ground_truth)).map_err(|e| Error::io(gt, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let a = make_toy(ToyKind::Moving, 7);
        let b = make_toy(ToyKind::Moving, 7);
        assert_eq!(a.frames.len(), 60);
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.ground_truth, b.ground_truth);
        assert_ne!(make_toy(ToyKind::Moving, 8).frames[0], a.frames[0]);
    }

    #[test]
    fn occlusion_hides_target() {
        let s = make_toy(ToyKind::Occlusion, 7);
        let (cx, cy) = s.ground_truth[24].pixel_center();
        let px = s.frames[24].get_pixel(cx as u32, cy as u32);
        let spread = px.0.iter().max().unwrap() - px.0.iter().min().unwrap();
        assert!(spread < 60, "background is low-saturation: {px:?}");
    }
}
