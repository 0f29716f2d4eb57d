//! Deterministic stand-in for pretrained deep features: a seeded stack of three
//! convolution + rectification + pooling stages. The spatial tensor fuses all three
//! stages; the descriptor is a seeded projection of globally pooled activations.

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{fuse_conv_layers, DescriptorVector, FeatureKind, FeatureTensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const STAGE_CHANNELS: [usize; 3] = [16, 32, 48];
pub const SYNTH_CHANNELS: usize = 96;
pub const SYNTH_DESCRIPTOR_DIM: usize = 256;
/// Pixels per output cell of the fused tensor (2x stem pooling, 2x first-stage pooling).
pub const SYNTH_CELL_SIZE: usize = 4;
const MIN_PATCH: u32 = 16;
// 16 + 32 global means plus a 2x2 grid over the last stage.
const POOLED_DIM: usize = 16 + 32 + 48 * 4;

#[derive(Debug, Clone)]
struct ConvStage<T> {
    cin: usize,
    cout: usize,
    // [cout][cin][3][3]
    weights: Vec<T>,
    bias: Vec<T>,
}

/// Planar activation map: `channels x height x width`.
#[derive(Debug, Clone)]
struct Planes<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Planes<T> {
    fn plane(&self, k: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[k * n..(k + 1) * n]
    }

    fn avg_pool2(&self) -> Self {
        let (h, w) = ((self.height / 2).max(1), (self.width / 2).max(1));
        let quarter = T::of(0.25);
        let mut data = Vec::with_capacity(self.channels * h * w);
        for k in 0..self.channels {
            let p = self.plane(k);
            for r in 0..h {
                let r0 = (2 * r).min(self.height - 1);
                let r1 = (2 * r + 1).min(self.height - 1);
                for c in 0..w {
                    let c0 = (2 * c).min(self.width - 1);
                    let c1 = (2 * c + 1).min(self.width - 1);
                    data.push(
                        (p[r0 * self.width + c0]
                            + p[r0 * self.width + c1]
                            + p[r1 * self.width + c0]
                            + p[r1 * self.width + c1])
                            * quarter,
                    );
                }
            }
        }
        Self {
            channels: self.channels,
            height: h,
            width: w,
            data,
        }
    }

    fn channel_means(&self, rows: (usize, usize), cols: (usize, usize)) -> Vec<T> {
        let count = T::of(((rows.1 - rows.0) * (cols.1 - cols.0)) as f64);
        (0..self.channels)
            .map(|k| {
                let p = self.plane(k);
                let mut s = T::zero();
                for r in rows.0..rows.1 {
                    for c in cols.0..cols.1 {
                        s = s + p[r * self.width + c];
                    }
                }
                s / count
            })
            .collect()
    }

    fn into_tensor(self) -> Result<FeatureTensor<T>> {
        FeatureTensor::new(
            self.height,
            self.width,
            self.channels,
            SYNTH_CELL_SIZE,
            FeatureKind::DeepSynth,
            self.data,
        )
    }
}

impl<T: Scalar> ConvStage<T> {
    /// 3x3 convolution with replicated borders, then ReLU.
    fn apply(&self, input: &Planes<T>) -> Planes<T> {
        debug_assert_eq!(input.channels, self.cin);
        let (h, w) = (input.height, input.width);
        let n = h * w;
        let mut out = vec![T::zero(); self.cout * n];
        for (co, b) in self.bias.iter().enumerate() {
            out[co * n..(co + 1) * n].iter_mut().for_each(|v| *v = *b);
        }
        let mut shifted = vec![T::zero(); n];
        for ci in 0..self.cin {
            let src = input.plane(ci);
            for dy in 0..3usize {
                for dx in 0..3usize {
                    for r in 0..h {
                        let sr = (r + dy).saturating_sub(1).min(h - 1);
                        for c in 0..w {
                            let sc = (c + dx).saturating_sub(1).min(w - 1);
                            shifted[r * w + c] = src[sr * w + sc];
                        }
                    }
                    for co in 0..self.cout {
                        let wt = self.weights[((co * self.cin + ci) * 3 + dy) * 3 + dx];
                        for (o, s) in out[co * n..(co + 1) * n].iter_mut().zip(&shifted) {
                            *o = *o + wt * *s;
                        }
                    }
                }
            }
        }
        for v in &mut out {
            *v = v.max(T::zero());
        }
        Planes {
            channels: self.cout,
            height: h,
            width: w,
            data: out,
        }
    }
}

/// Seeded synthetic network. Weights depend only on the seed.
#[derive(Debug, Clone)]
pub struct SynthNet<T> {
    seed: u64,
    stages: Vec<ConvStage<T>>,
    // [SYNTH_DESCRIPTOR_DIM][POOLED_DIM]
    projection: Vec<T>,
    null_pooled: Vec<T>,
}

impl<T: Scalar> SynthNet<T> {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |scale: f64| -> T {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::of(z * scale)
        };
        let mut stages = Vec::with_capacity(3);
        let mut cin = 3;
        for &cout in &STAGE_CHANNELS {
            let scale = 1.0 / ((9 * cin) as f64).sqrt();
            let weights = (0..cout * cin * 9).map(|_| normal(scale)).collect();
            let bias = (0..cout).map(|_| normal(0.1)).collect();
            stages.push(ConvStage {
                cin,
                cout,
                weights,
                bias,
            });
            cin = cout;
        }
        let scale = 1.0 / (POOLED_DIM as f64).sqrt();
        let projection = (0..SYNTH_DESCRIPTOR_DIM * POOLED_DIM)
            .map(|_| normal(scale))
            .collect();
        let mut net = Self {
            seed,
            stages,
            projection,
            null_pooled: Vec::new(),
        };
        // Activations of a featureless (zero) input: the reference the descriptor is centered on.
        let zero = Planes {
            channels: 3,
            height: MIN_PATCH as usize,
            width: MIN_PATCH as usize,
            data: vec![T::zero(); 3 * (MIN_PATCH * MIN_PATCH) as usize],
        };
        net.null_pooled = net.pooled(&net.run_stages(zero));
        net
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn input_planes(patch: &RgbImage) -> Result<Planes<T>> {
        let (w, h) = patch.dimensions();
        if w < MIN_PATCH || h < MIN_PATCH {
            return Err(Error::input(format!(
                "patch {w}x{h} smaller than {MIN_PATCH}x{MIN_PATCH} for synthetic features"
            )));
        }
        let (w, h) = (w as usize, h as usize);
        let mut data = vec![T::zero(); 3 * w * h];
        // per-patch colour mean removal
        let mut mean = [0.0f64; 3];
        for px in patch.pixels() {
            for k in 0..3 {
                mean[k] += px[k] as f64;
            }
        }
        let mean = mean.map(|m| m / (w * h) as f64);
        let inv = 1.0 / 255.0;
        for (x, y, px) in patch.enumerate_pixels() {
            for k in 0..3 {
                data[(k * h + y as usize) * w + x as usize] = T::of((px[k] as f64 - mean[k]) * inv);
            }
        }
        Ok(Planes {
            channels: 3,
            height: h,
            width: w,
            data,
        }
        .avg_pool2())
    }

    fn run_stages(&self, input: Planes<T>) -> Vec<Planes<T>> {
        let mut outputs = Vec::with_capacity(self.stages.len());
        let mut x = input;
        for stage in &self.stages {
            x = stage.apply(&x).avg_pool2();
            outputs.push(x.clone());
        }
        outputs
    }

    fn pooled(&self, stages: &[Planes<T>]) -> Vec<T> {
        let mut v = Vec::with_capacity(POOLED_DIM);
        for s in &stages[..2] {
            v.extend(s.channel_means((0, s.height), (0, s.width)));
        }
        let last = &stages[2];
        let split = |n: usize, i: usize| {
            let lo = (i * n / 2).min(n - 1);
            let hi = ((i + 1) * n / 2).max(lo + 1).min(n);
            (lo, hi)
        };
        for i in 0..2 {
            for j in 0..2 {
                v.extend(last.channel_means(split(last.height, i), split(last.width, j)));
            }
        }
        v
    }

    fn descriptor_from(&self, stages: &[Planes<T>]) -> Result<DescriptorVector<T>> {
        let mut v = self.pooled(stages);
        for (a, b) in v.iter_mut().zip(&self.null_pooled) {
            *a = *a - *b;
        }
        let mean = v.iter().copied().sum::<T>() / T::of(v.len() as f64);
        v.iter_mut().for_each(|a| *a = *a - mean);
        let out = self
            .projection
            .chunks_exact(POOLED_DIM)
            .map(|row| row.iter().zip(&v).map(|(p, x)| *p * *x).sum())
            .collect();
        DescriptorVector::new(out)
    }

    /// Fused 96-channel tensor at 1/4 of the patch resolution.
    pub fn conv_tensor(&self, patch: &RgbImage) -> Result<FeatureTensor<T>> {
        let stages = self.run_stages(Self::input_planes(patch)?);
        let layers = stages
            .into_iter()
            .map(Planes::into_tensor)
            .collect::<Result<Vec<_>>>()?;
        fuse_conv_layers(&layers)
    }

    pub fn descriptor(&self, patch: &RgbImage) -> Result<DescriptorVector<T>> {
        let stages = self.run_stages(Self::input_planes(patch)?);
        self.descriptor_from(&stages)
    }

    pub fn forward(&self, patch: &RgbImage) -> Result<(FeatureTensor<T>, DescriptorVector<T>)> {
        let stages = self.run_stages(Self::input_planes(patch)?);
        let descriptor = self.descriptor_from(&stages)?;
        let layers = stages
            .into_iter()
            .map(Planes::into_tensor)
            .collect::<Result<Vec<_>>>()?;
        Ok((fuse_conv_layers(&layers)?, descriptor))
    }
}

/// One-shot synthetic extraction; builds the seeded network on every call.
pub fn synth_deep_features<T: Scalar>(
    patch: &RgbImage,
    seed: u64,
) -> Result<(FeatureTensor<T>, DescriptorVector<T>)> {
    SynthNet::new(seed).forward(patch)
}
