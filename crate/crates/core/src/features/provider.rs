use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use image::RgbImage;
use log::warn;

use super::wire::{self, FeatureRequest, FeatureResponse, Kinds, TransportError};
use super::{DescriptorVector, FeatureKind, FeatureTensor, SynthNet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Source of deep conv tensors and semantic descriptors.
pub trait DeepFeatureProvider<T: Scalar>: Send {
    fn name(&self) -> &str;

    fn conv_features(&mut self, patch: &RgbImage) -> Result<FeatureTensor<T>>;

    fn descriptor(&mut self, patch: &RgbImage) -> Result<DescriptorVector<T>>;

    /// Pixel size `(width, height)` regions are resized to before descriptor extraction.
    fn descriptor_input(&self) -> (u32, u32);
}

#[derive(Debug, Clone)]
pub struct SyntheticProvider<T> {
    net: SynthNet<T>,
}

impl<T: Scalar> SyntheticProvider<T> {
    pub const DESCRIPTOR_INPUT: (u32, u32) = (64, 64);

    pub fn new(seed: u64) -> Self {
        Self {
            net: SynthNet::new(seed),
        }
    }
}

impl<T: Scalar> DeepFeatureProvider<T> for SyntheticProvider<T> {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn conv_features(&mut self, patch: &RgbImage) -> Result<FeatureTensor<T>> {
        self.net.conv_tensor(patch)
    }

    fn descriptor(&mut self, patch: &RgbImage) -> Result<DescriptorVector<T>> {
        self.net.descriptor(patch)
    }

    fn descriptor_input(&self) -> (u32, u32) {
        Self::DESCRIPTOR_INPUT
    }
}

/// Client of the feature server. One connection, one request in flight.
#[derive(Debug)]
pub struct RemoteProvider {
    stream: TcpStream,
    endpoint: String,
    expected_fc7_dim: Option<usize>,
}

impl RemoteProvider {
    pub const DESCRIPTOR_INPUT: (u32, u32) = (224, 224);
    pub const FC7_DIM: usize = 4096;

    pub fn connect(endpoint: &str) -> Result<Self, TransportError> {
        let addr = endpoint
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| TransportError::Io(std::io::Error::other("endpoint did not resolve")))?;
        let stream = TcpStream::connect_timeout(&addr, Duration::from_secs(10))?;
        stream.set_read_timeout(Some(Duration::from_secs(60)))?;
        stream.set_nodelay(true)?;
        Ok(Self {
            stream,
            endpoint: endpoint.to_string(),
            expected_fc7_dim: Some(Self::FC7_DIM),
        })
    }

    /// Accept descriptors of any dimension (or require `dim`).
    pub fn with_expected_fc7_dim(mut self, dim: Option<usize>) -> Self {
        self.expected_fc7_dim = dim;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Requests exactly `kinds` for `patch`.
    pub fn request<T: Scalar>(
        &mut self,
        patch: &RgbImage,
        kinds: Kinds,
    ) -> Result<(Option<FeatureTensor<T>>, Option<DescriptorVector<T>>)> {
        let (width, height) = patch.dimensions();
        let request = FeatureRequest {
            kinds,
            height,
            width,
            pixels: patch.as_raw().clone(),
        };
        let (conv, fc7) = match wire::round_trip(&mut self.stream, &request)? {
            FeatureResponse::Error => return Err(TransportError::ServerError.into()),
            FeatureResponse::Ok { conv, fc7 } => (conv, fc7),
        };
        let tensor = match conv {
            Some(t) => {
                let cell = (width as usize / t.width.max(1) as usize).max(1);
                let values: Vec<T> = t.values.iter().map(|v| T::of(*v as f64)).collect();
                Some(
                    FeatureTensor::from_interleaved(
                        t.height as usize,
                        t.width as usize,
                        t.channels as usize,
                        cell,
                        FeatureKind::DeepRemote,
                        &values,
                    )
                    .map_err(|e| TransportError::Dimension(e.to_string()))?,
                )
            }
            None => None,
        };
        let descriptor = match fc7 {
            Some(v) => {
                if let Some(dim) = self.expected_fc7_dim {
                    if v.len() != dim {
                        return Err(TransportError::Dimension(format!(
                            "fc7 has {} values, expected {dim}",
                            v.len()
                        ))
                        .into());
                    }
                }
                Some(
                    DescriptorVector::new(v.iter().map(|x| T::of(*x as f64)).collect())
                        .map_err(|e| TransportError::Dimension(e.to_string()))?,
                )
            }
            None => None,
        };
        Ok((tensor, descriptor))
    }
}

impl<T: Scalar> DeepFeatureProvider<T> for RemoteProvider {
    fn name(&self) -> &str {
        "remote"
    }

    fn conv_features(&mut self, patch: &RgbImage) -> Result<FeatureTensor<T>> {
        let (t, _) = self.request::<T>(patch, Kinds::CONV)?;
        t.ok_or_else(|| Error::State("server omitted requested conv tensor".into()))
    }

    fn descriptor(&mut self, patch: &RgbImage) -> Result<DescriptorVector<T>> {
        let (_, d) = self.request::<T>(patch, Kinds::FC7)?;
        d.ok_or_else(|| Error::State("server omitted requested fc7 vector".into()))
    }

    fn descriptor_input(&self) -> (u32, u32) {
        Self::DESCRIPTOR_INPUT
    }
}

/// Remote provider that degrades permanently to the synthetic one on the first
/// transport failure.
pub struct FallbackProvider<T> {
    remote: Option<RemoteProvider>,
    synthetic: SyntheticProvider<T>,
}

impl<T: Scalar> FallbackProvider<T> {
    pub fn new(remote: Option<RemoteProvider>, seed: u64) -> Self {
        if remote.is_none() {
            warn!("feature server unavailable; using synthetic deep features");
        }
        Self {
            remote,
            synthetic: SyntheticProvider::new(seed),
        }
    }

    pub fn degraded(&self) -> bool {
        self.remote.is_none()
    }

    fn attempt<R>(
        &mut self,
        remote_op: impl FnOnce(&mut RemoteProvider) -> Result<R>,
        synth_op: impl FnOnce(&mut SyntheticProvider<T>) -> Result<R>,
    ) -> Result<R> {
        if let Some(remote) = self.remote.as_mut() {
            match remote_op(remote) {
                Err(Error::Transport(e)) => {
                    warn!(
                        "feature server {} failed ({e}); degrading to synthetic deep features",
                        remote.endpoint()
                    );
                    self.remote = None;
                }
                other => return other,
            }
        }
        synth_op(&mut self.synthetic)
    }
}

impl<T: Scalar> DeepFeatureProvider<T> for FallbackProvider<T> {
    fn name(&self) -> &str {
        if self.degraded() {
            "synthetic"
        } else {
            "remote"
        }
    }

    fn conv_features(&mut self, patch: &RgbImage) -> Result<FeatureTensor<T>> {
        self.attempt(|r| r.conv_features(patch), |s| s.conv_features(patch))
    }

    fn descriptor(&mut self, patch: &RgbImage) -> Result<DescriptorVector<T>> {
        self.attempt(|r| r.descriptor(patch), |s| s.descriptor(patch))
    }

    fn descriptor_input(&self) -> (u32, u32) {
        match &self.remote {
            Some(r) => DeepFeatureProvider::<T>::descriptor_input(r),
            None => self.synthetic.descriptor_input(),
        }
    }
}
