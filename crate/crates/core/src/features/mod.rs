//! Feature tensors for the two context models and the providers that produce them.

mod hog;
mod patch;
mod provider;
mod synth;
pub mod wire;

pub use hog::{extract_hog, HOG_CHANNELS};
pub use patch::{extract_patch, resample_region, PatchSpec};
pub use provider::{DeepFeatureProvider, FallbackProvider, RemoteProvider, SyntheticProvider};
pub use synth::{synth_deep_features, SynthNet, SYNTH_CHANNELS, SYNTH_DESCRIPTOR_DIM};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::RealGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Hog,
    DeepSynth,
    DeepRemote,
}

/// Spatial grid of multi-channel features, stored channel-major
/// (`values[(channel * height + row) * width + col]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor<T> {
    height: usize,
    width: usize,
    channels: usize,
    cell_size: usize,
    kind: FeatureKind,
    values: Vec<T>,
}

impl<T: Scalar> FeatureTensor<T> {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        cell_size: usize,
        kind: FeatureKind,
        values: Vec<T>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::shape(format!(
                "degenerate feature tensor {height}x{width}x{channels}"
            )));
        }
        if values.len() != height * width * channels {
            return Err(Error::shape(format!(
                "{height}x{width}x{channels} tensor needs {} values, got {}",
                height * width * channels,
                values.len()
            )));
        }
        if cell_size == 0 {
            return Err(Error::param("cell size must be at least 1"));
        }
        if kind == FeatureKind::Hog && channels != HOG_CHANNELS {
            return Err(Error::shape(format!(
                "HOG tensors carry {HOG_CHANNELS} channels, got {channels}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("feature tensor contains non-finite values"));
        }
        Ok(Self {
            height,
            width,
            channels,
            cell_size,
            kind,
            values,
        })
    }

    pub fn zeros(
        height: usize,
        width: usize,
        channels: usize,
        cell_size: usize,
        kind: FeatureKind,
    ) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            cell_size,
            kind,
            vec![T::zero(); height * width * channels],
        )
    }

    /// Builds from row-major, channel-minor values (the wire layout).
    pub fn from_interleaved(
        height: usize,
        width: usize,
        channels: usize,
        cell_size: usize,
        kind: FeatureKind,
        interleaved: &[T],
    ) -> Result<Self> {
        if interleaved.len() != height * width * channels {
            return Err(Error::shape("interleaved length does not match shape"));
        }
        let mut values = vec![T::zero(); interleaved.len()];
        for r in 0..height {
            for c in 0..width {
                for k in 0..channels {
                    values[(k * height + r) * width + c] = interleaved[(r * width + c) * channels + k];
                }
            }
        }
        Self::new(height, width, channels, cell_size, kind, values)
    }

    /// Row-major, channel-minor copy of the values.
    pub fn to_interleaved(&self) -> Vec<T> {
        let (h, w, n) = (self.height, self.width, self.channels);
        let mut out = vec![T::zero(); h * w * n];
        for k in 0..n {
            for r in 0..h {
                for c in 0..w {
                    out[(r * w + c) * n + k] = self.values[(k * h + r) * w + c];
                }
            }
        }
        out
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn cell_size(&self) -> usize {
        self.cell_size
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn spatial_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> T {
        self.values[(channel * self.height + row) * self.width + col]
    }

    pub fn channel(&self, k: usize) -> &[T] {
        let n = self.height * self.width;
        &self.values[k * n..(k + 1) * n]
    }

    pub fn channel_grid(&self, k: usize) -> RealGrid<T> {
        RealGrid::from_vec(self.height, self.width, self.channel(k).to_vec())
            .expect("channel plane matches tensor shape")
    }

    pub fn with_kind(mut self, kind: FeatureKind) -> Self {
        self.kind = kind;
        self
    }

    /// Circular spatial shift of every channel by `(dr, dc)`.
    pub fn shifted(&self, dr: isize, dc: isize) -> Self {
        let (h, w) = (self.height as isize, self.width as isize);
        let mut values = vec![T::zero(); self.values.len()];
        for k in 0..self.channels {
            for r in 0..h {
                for c in 0..w {
                    let sr = (r - dr).rem_euclid(h) as usize;
                    let sc = (c - dc).rem_euclid(w) as usize;
                    values[(k * self.height + r as usize) * self.width + c as usize] =
                        self.get(sr, sc, k);
                }
            }
        }
        Self {
            values,
            ..self.clone()
        }
    }

    /// Bilinear resize of every channel to `height x width` (pixel-center aligned,
    /// edge-clamped).
    pub fn resized(&self, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape("cannot resize to a degenerate grid"));
        }
        if (height, width) == (self.height, self.width) {
            return Ok(self.clone());
        }
        let rows = resample_axis(self.height, height);
        let cols = resample_axis(self.width, width);
        let mut values = Vec::with_capacity(height * width * self.channels);
        for k in 0..self.channels {
            let plane = self.channel(k);
            for &(r0, r1, fr) in &rows {
                for &(c0, c1, fc) in &cols {
                    let a = plane[r0 * self.width + c0];
                    let b = plane[r0 * self.width + c1];
                    let c = plane[r1 * self.width + c0];
                    let d = plane[r1 * self.width + c1];
                    let (fr, fc) = (T::of(fr), T::of(fc));
                    let top = a + (b - a) * fc;
                    let bottom = c + (d - c) * fc;
                    values.push(top + (bottom - top) * fr);
                }
            }
        }
        let cell_size = (self.cell_size * self.width + width / 2) / width;
        Self::new(
            height,
            width,
            self.channels,
            cell_size.max(1),
            self.kind,
            values,
        )
    }
}

/// For each output index: the two source indices and the interpolation weight of the second.
pub(crate) fn resample_axis(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let x = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, (src - 1) as f64);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(src - 1);
            (x0, x1, x - x0 as f64)
        })
        .collect()
}

/// Resizes every layer to the first layer's spatial shape and concatenates channels in order.
pub fn fuse_conv_layers<T: Scalar>(layers: &[FeatureTensor<T>]) -> Result<FeatureTensor<T>> {
    let first = layers
        .first()
        .ok_or_else(|| Error::input("cannot fuse an empty layer list"))?;
    if layers.len() == 1 {
        return Ok(first.clone());
    }
    let (h, w) = first.spatial_shape();
    let mut values = Vec::with_capacity(h * w * layers.iter().map(|l| l.channels).sum::<usize>());
    let mut channels = 0;
    for layer in layers {
        let resized = layer.resized(h, w)?;
        values.extend_from_slice(&resized.values);
        channels += layer.channels;
    }
    FeatureTensor::new(h, w, channels, first.cell_size, first.kind, values)
}

/// Multiplies every channel cell-wise by `window`.
pub fn apply_window<T: Scalar>(
    features: &FeatureTensor<T>,
    window: &RealGrid<T>,
) -> Result<FeatureTensor<T>> {
    if window.shape() != features.spatial_shape() {
        return Err(Error::shape(format!(
            "window {:?} does not match features {:?}",
            window.shape(),
            features.spatial_shape()
        )));
    }
    let win = window.values();
    let n = win.len();
    let values = features
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| *v * win[i % n])
        .collect();
    Ok(FeatureTensor {
        values,
        ..features.clone()
    })
}

/// Semantic descriptor of an image region (an FC7 row, or its synthetic stand-in).
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorVector<T>(Vec<T>);

impl<T: Scalar> DescriptorVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::shape("descriptor must have at least one dimension"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("descriptor contains non-finite values"));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn into_values(self) -> Vec<T> {
        self.0
    }
}
