//! Per-frame tracking: HOG detection with a reliability check, a deep context model
//! built only for challenging frames, semantic selection between the two estimates,
//! flag updates and model updates.

mod bbox;
mod newton;

pub use bbox::BoundingBox;
pub use newton::{newton_refine, sample_bilinear, Refinement};

use image::RgbImage;
use log::{debug, warn};

use crate::error::{Error, Result};
use crate::features::{
    apply_window, extract_hog, resample_region, DeepFeatureProvider, DescriptorVector,
    FallbackProvider, FeatureTensor, RemoteProvider, SyntheticProvider,
};
use crate::gate::{
    append_valid, blend_features, select_estimate, semantic_score, update_flags, Estimate,
    EstimateSource, GateConfig, GateFlags, SemanticMemory,
};
use crate::nms::{assess_reliability, fast_nms_3x3, Reliability};
use crate::scalar::Scalar;
use crate::solver::{response_from_spectra, train, FilterBank, ResponseMap, SolverConfig};
use crate::spectral::{gaussian_label, gaussian_window, RealGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    Synthetic,
    Remote,
}

impl std::str::FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(Self::Synthetic),
            "remote" => Ok(Self::Remote),
            other => Err(Error::Config(format!(
                "unknown provider `{other}` (expected synthetic or remote)"
            ))),
        }
    }
}

impl std::fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Synthetic => "synthetic",
            Self::Remote => "remote",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub hog_solver: SolverConfig,
    pub cnn_solver: SolverConfig,
    pub gate: GateConfig,
    pub scale_count: usize,
    pub scale_step: f64,
    pub padding_factor: f64,
    pub cell_size: usize,
    pub newton_tolerance: f64,
    pub newton_max_iters: usize,
    pub learning_rate_hog: f64,
    pub deep_provider: ProviderKind,
    /// Degrade to synthetic deep features when the feature server fails.
    pub remote_fallback: bool,
    pub window_sigma_fraction: f64,
    /// Label sigma as a fraction of the geometric mean of the target size in cells.
    pub label_sigma_factor: f64,
    /// Bounds on the side of the resampled search patch, in pixels.
    pub template_min: usize,
    pub template_max: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            hog_solver: SolverConfig::hog(),
            cnn_solver: SolverConfig::cnn(),
            gate: GateConfig::default(),
            scale_count: 5,
            scale_step: 1.02,
            padding_factor: 5.0,
            cell_size: 4,
            newton_tolerance: 1e-7,
            newton_max_iters: 5,
            learning_rate_hog: 0.0125,
            deep_provider: ProviderKind::Synthetic,
            remote_fallback: true,
            window_sigma_fraction: 0.25,
            label_sigma_factor: 0.1,
            template_min: 96,
            template_max: 200,
            scale_min: 0.2,
            scale_max: 5.0,
            seed: 7,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.hog_solver.validate()?;
        self.cnn_solver.validate()?;
        self.gate.validate()?;
        if self.scale_count == 0 || self.scale_count.is_multiple_of(2) {
            return Err(Error::param(format!(
                "scale_count must be odd and >= 1, got {}",
                self.scale_count
            )));
        }
        if !(self.scale_step > 1.0) {
            return Err(Error::param(format!("scale_step must be > 1, got {}", self.scale_step)));
        }
        if !(self.padding_factor >= 1.0) {
            return Err(Error::param(format!(
                "padding_factor must be >= 1, got {}",
                self.padding_factor
            )));
        }
        if self.cell_size == 0 {
            return Err(Error::param("cell_size must be >= 1"));
        }
        if !(self.newton_tolerance > 0.0) {
            return Err(Error::param("newton_tolerance must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.learning_rate_hog) {
            return Err(Error::param("learning_rate_hog must be in [0, 1]"));
        }
        if !(self.window_sigma_fraction > 0.0) || !(self.label_sigma_factor > 0.0) {
            return Err(Error::param("window and label sigmas must be positive"));
        }
        if self.template_min < 3 * self.cell_size || self.template_max < self.template_min {
            return Err(Error::param(format!(
                "template bounds [{}, {}] invalid for {}px cells",
                self.template_min, self.template_max, self.cell_size
            )));
        }
        if !(0.0 < self.scale_min && self.scale_min <= 1.0 && self.scale_max >= 1.0) {
            return Err(Error::param("scale clamp must satisfy 0 < scale_min <= 1 <= scale_max"));
        }
        Ok(())
    }
}

/// Builds the deep-feature provider selected by `config`.
///
/// With the remote provider and fallback enabled, an unreachable server degrades
/// to synthetic features with a warning; without fallback it is an error.
pub fn make_provider<T: Scalar>(
    config: &TrackerConfig,
    server: Option<&str>,
) -> Result<Box<dyn DeepFeatureProvider<T>>> {
    match config.deep_provider {
        ProviderKind::Synthetic => Ok(Box::new(SyntheticProvider::new(config.seed))),
        ProviderKind::Remote => {
            let endpoint =
                server.ok_or_else(|| Error::Config("remote provider needs a server endpoint".into()))?;
            match RemoteProvider::connect(endpoint) {
                Ok(remote) if config.remote_fallback => {
                    Ok(Box::new(FallbackProvider::new(Some(remote), config.seed)))
                }
                Ok(remote) => Ok(Box::new(remote)),
                Err(e) if config.remote_fallback => {
                    warn!("cannot reach feature server {endpoint}: {e}");
                    Ok(Box::new(FallbackProvider::<T>::new(None, config.seed)))
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

/// What happened on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// 1-based frame number.
    pub frame: usize,
    pub bbox: BoundingBox,
    pub scale: f64,
    pub source: EstimateSource,
    pub hog_peak: f64,
    pub reliability: Reliability,
    pub local_peaks: usize,
    /// The deep model was consulted on this frame.
    pub challenging: bool,
    /// The deep filter was (re)trained on this frame.
    pub cnn_trained: bool,
    pub hog_score: Option<f64>,
    pub cnn_score: Option<f64>,
    pub score: f64,
    pub flags: GateFlags,
    pub memory_len: usize,
    pub memory_appended: bool,
    /// The search region for the next frame stays at the last confident location.
    pub search_held: bool,
    pub provider: String,
}

/// Fixed geometry of one tracking run.
#[derive(Debug, Clone)]
struct Geometry {
    /// Cells per side of the square feature grid.
    grid: usize,
    /// Side of the resampled search patch in pixels (`grid * cell_size`).
    template_px: u32,
    /// Side of the search region in frame pixels at scale 1.
    search_side: f64,
    support: (usize, usize),
    label_center: (usize, usize),
}

impl Geometry {
    fn new(size: (f64, f64), config: &TrackerConfig) -> Self {
        let cell = config.cell_size;
        let search_side = config.padding_factor * (size.0 * size.1).sqrt();
        let px = search_side.clamp(config.template_min as f64, config.template_max as f64);
        let grid = ((px / cell as f64).round() as usize).max(3);
        let template_px = (grid * cell) as u32;
        let ws = search_side / template_px as f64;
        let cells = |v: f64| ((v / ws / cell as f64).round() as usize).clamp(1, grid);
        Self {
            grid,
            template_px,
            search_side,
            support: (cells(size.1), cells(size.0)),
            label_center: (grid / 2, grid / 2),
        }
    }

    /// Frame pixels per feature cell at `scale`.
    fn cell_pixels(&self, scale: f64, cell: usize) -> f64 {
        self.search_side * scale / self.template_px as f64 * cell as f64
    }
}

/// Signed circular offset in `(-n/2, n/2]`.
fn wrap_offset(x: f64, n: usize) -> f64 {
    let n = n as f64;
    let mut d = x.rem_euclid(n);
    if d > n / 2.0 {
        d -= n;
    }
    d
}

struct ScaleResult<T> {
    estimate: Estimate,
    response: ResponseMap<T>,
}

pub struct Tracker<T: Scalar> {
    config: TrackerConfig,
    provider: Box<dyn DeepFeatureProvider<T>>,
    geometry: Geometry,
    window: RealGrid<T>,
    label: RealGrid<T>,
    base_size: (f64, f64),
    bbox: BoundingBox,
    /// Cumulative scale of the current estimate.
    scale: f64,
    /// 0-based center and scale the next search is run at.
    search_center: (f64, f64),
    search_scale: f64,
    flags: GateFlags,
    hog_model: FilterBank<T>,
    hog_features: FeatureTensor<T>,
    cnn_model: Option<FilterBank<T>>,
    cnn_features: FeatureTensor<T>,
    memory: SemanticMemory<T>,
    frame_index: usize,
    in_challenge: bool,
    reports: Vec<StepReport>,
}

impl<T: Scalar> std::fmt::Debug for Tracker<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tracker")
            .field("frame_index", &self.frame_index)
            .field("bbox", &self.bbox)
            .field("scale", &self.scale)
            .field("flags", &self.flags)
            .field("memory_len", &self.memory.len())
            .field("provider", &self.provider.name())
            .finish()
    }
}

impl<T: Scalar> Tracker<T> {
    /// Initializes on the first frame with the synthetic provider seeded from the config.
    pub fn new(frame: &RgbImage, bbox: BoundingBox, config: TrackerConfig) -> Result<Self> {
        let provider = Box::new(SyntheticProvider::new(config.seed));
        Self::init(frame, bbox, config, provider)
    }

    pub fn init(
        frame: &RgbImage,
        bbox: BoundingBox,
        config: TrackerConfig,
        mut provider: Box<dyn DeepFeatureProvider<T>>,
    ) -> Result<Self> {
        config.validate()?;
        let (fw, fh) = frame.dimensions();
        if fw == 0 || fh == 0 {
            return Err(Error::input("first frame is empty"));
        }
        let (cx, cy) = bbox.pixel_center();
        if !(cx >= -0.5 && cy >= -0.5 && cx < fw as f64 - 0.5 && cy < fh as f64 - 0.5) {
            return Err(Error::input(format!(
                "initial box centered at {:?} lies outside the {fw}x{fh} frame",
                bbox.center
            )));
        }
        let geometry = Geometry::new(bbox.size, &config);
        let g = geometry.grid;
        let window = gaussian_window(g, g, config.window_sigma_fraction)?;
        let sigma = config.label_sigma_factor
            * ((geometry.support.0 * geometry.support.1) as f64).sqrt();
        let label = gaussian_label(g, g, sigma, geometry.label_center)?;

        let center = (cx, cy);
        let patch = Self::search_patch(&geometry, frame, center, 1.0)?;
        let hog_features = extract_hog::<T>(&patch, config.cell_size)?;
        let hog_model = train(
            &apply_window(&hog_features, &window)?,
            &label,
            geometry.support,
            &config.hog_solver,
            None,
        )?;
        let cnn_features = Self::deep_features(&geometry, provider.as_mut(), &patch)?;
        let first = Self::region_descriptor(provider.as_mut(), frame, center, bbox.size)?;
        let memory = SemanticMemory::new(first, config.gate.capacity)?;

        Ok(Self {
            base_size: bbox.size,
            bbox,
            scale: 1.0,
            search_center: center,
            search_scale: 1.0,
            flags: GateFlags::default(),
            hog_model,
            hog_features,
            cnn_model: None,
            cnn_features,
            memory,
            frame_index: 1,
            in_challenge: false,
            reports: Vec::new(),
            window,
            label,
            geometry,
            provider,
            config,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn flags(&self) -> GateFlags {
        self.flags
    }

    pub fn memory(&self) -> &SemanticMemory<T> {
        &self.memory
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn hog_model(&self) -> &FilterBank<T> {
        &self.hog_model
    }

    pub fn cnn_model(&self) -> Option<&FilterBank<T>> {
        self.cnn_model.as_ref()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Per-frame reports since initialization.
    pub fn reports(&self) -> &[StepReport] {
        &self.reports
    }

    /// Cells per side of the feature grid.
    pub fn grid_size(&self) -> usize {
        self.geometry.grid
    }

    pub fn label_center(&self) -> (usize, usize) {
        self.geometry.label_center
    }

    pub fn filter_support(&self) -> (usize, usize) {
        self.geometry.support
    }

    fn search_patch(geometry: &Geometry, frame: &RgbImage, center: (f64, f64), scale: f64) -> Result<RgbImage> {
        let side = geometry.search_side * scale;
        let t = geometry.template_px;
        resample_region(frame, center, (side, side), (t, t))
    }

    fn deep_features(
        geometry: &Geometry,
        provider: &mut dyn DeepFeatureProvider<T>,
        patch: &RgbImage,
    ) -> Result<FeatureTensor<T>> {
        let f = provider.conv_features(patch)?;
        let g = geometry.grid;
        if f.spatial_shape() == (g, g) {
            Ok(f)
        } else {
            f.resized(g, g)
        }
    }

    fn region_descriptor(
        provider: &mut dyn DeepFeatureProvider<T>,
        frame: &RgbImage,
        center: (f64, f64),
        size: (f64, f64),
    ) -> Result<DescriptorVector<T>> {
        let input = provider.descriptor_input();
        let region = resample_region(frame, center, size, input)?;
        provider.descriptor(&region)
    }

    /// Windowed HOG features of the search region at `center` (0-based pixels) and `scale`.
    pub fn hog_search_features(&self, frame: &RgbImage, center: (f64, f64), scale: f64) -> Result<FeatureTensor<T>> {
        let patch = Self::search_patch(&self.geometry, frame, center, scale)?;
        apply_window(&extract_hog(&patch, self.config.cell_size)?, &self.window)
    }

    /// Windowed deep features of the search region at `center` (0-based pixels) and `scale`.
    pub fn deep_search_features(&mut self, frame: &RgbImage, center: (f64, f64), scale: f64) -> Result<FeatureTensor<T>> {
        let patch = Self::search_patch(&self.geometry, frame, center, scale)?;
        let f = Self::deep_features(&self.geometry, self.provider.as_mut(), &patch)?;
        apply_window(&f, &self.window)
    }

    fn scale_factors(&self) -> Vec<f64> {
        let half = (self.config.scale_count / 2) as i32;
        // center first so that it wins ties
        let mut ks = vec![0];
        for k in 1..=half {
            ks.push(-k);
            ks.push(k);
        }
        ks.into_iter().map(|k| self.config.scale_step.powi(k)).collect()
    }

    /// Multi-scale detection with one model around the current search center.
    pub fn scale_search(&mut self, frame: &RgbImage, source: EstimateSource) -> Result<(Estimate, ResponseMap<T>)> {
        let r = self.scale_search_inner(frame, source)?;
        Ok((r.estimate, r.response))
    }

    fn scale_search_inner(&mut self, frame: &RgbImage, source: EstimateSource) -> Result<ScaleResult<T>> {
        let mut best: Option<ScaleResult<T>> = None;
        let (lr, lc) = self.geometry.label_center;
        let g = self.geometry.grid;
        for factor in self.scale_factors() {
            let scale = self.search_scale * factor;
            let (features, model) = match source {
                EstimateSource::Hog => (
                    self.hog_search_features(frame, self.search_center, scale)?,
                    &self.hog_model,
                ),
                EstimateSource::Cnn => {
                    let f = self.deep_search_features(frame, self.search_center, scale)?;
                    let model = self
                        .cnn_model
                        .as_ref()
                        .ok_or_else(|| Error::State("deep model has not been trained".into()))?;
                    (f, model)
                }
            };
            let spectra = model.spectra(&features)?;
            let response = response_from_spectra(model, &spectra)?;
            let refined = newton_refine(
                &response,
                response.peak_location,
                self.config.newton_tolerance,
                self.config.newton_max_iters,
            );
            if let Some(b) = &best {
                if !(refined.value > b.estimate.response) {
                    continue;
                }
            }
            let px = self.geometry.cell_pixels(scale, self.config.cell_size);
            let dy = wrap_offset(refined.row - lr as f64, g) * px;
            let dx = wrap_offset(refined.col - lc as f64, g) * px;
            best = Some(ScaleResult {
                estimate: Estimate {
                    location: (self.search_center.0 + dx, self.search_center.1 + dy),
                    scale: scale.clamp(self.config.scale_min, self.config.scale_max),
                    source,
                    score: 0.0,
                    response: refined.value,
                },
                response,
            });
        }
        best.ok_or_else(|| Error::State("empty scale pyramid".into()))
    }

    fn target_size(&self, scale: f64) -> (f64, f64) {
        (self.base_size.0 * scale, self.base_size.1 * scale)
    }

    fn descriptor_at(&mut self, frame: &RgbImage, est: &Estimate) -> Result<DescriptorVector<T>> {
        let size = self.target_size(est.scale);
        Self::region_descriptor(self.provider.as_mut(), frame, est.location, size)
    }

    /// Re-seeds the deep state when the provider changed its output dimensions.
    fn reseed_deep_state(&mut self, frame: &RgbImage, center: (f64, f64), scale: f64, descriptor: &DescriptorVector<T>) -> Result<()> {
        warn!(
            "deep feature dimensions changed (provider now {}); re-seeding semantic memory and deep model",
            self.provider.name()
        );
        self.memory = SemanticMemory::new(descriptor.clone(), self.config.gate.capacity)?;
        let patch = Self::search_patch(&self.geometry, frame, center, scale)?;
        self.cnn_features = Self::deep_features(&self.geometry, self.provider.as_mut(), &patch)?;
        self.cnn_model = None;
        Ok(())
    }

    fn score(&mut self, frame: &RgbImage, est: &Estimate) -> Result<(f64, DescriptorVector<T>)> {
        let d = self.descriptor_at(frame, est)?;
        if d.dim() != self.memory.dim() {
            self.reseed_deep_state(frame, est.location, est.scale, &d)?;
        }
        let reference = self.memory.fcm()?;
        Ok((semantic_score(&reference, &d)?, d))
    }

    fn train_cnn(&mut self) -> Result<()> {
        let features = apply_window(&self.cnn_features, &self.window)?;
        let mut warm = self.cnn_model.take();
        if let Some(bank) = warm.as_mut() {
            if bank.shape() != (features.height(), features.width(), features.channels()) {
                warm = None;
            } else {
                bank.reset_dual(self.config.cnn_solver.mu0);
            }
        }
        self.cnn_model = Some(train(
            &features,
            &self.label,
            self.geometry.support,
            &self.config.cnn_solver,
            warm.as_ref(),
        )?);
        Ok(())
    }

    /// Processes the next frame and returns its report.
    pub fn step(&mut self, frame: &RgbImage) -> Result<StepReport> {
        if frame.width() == 0 || frame.height() == 0 {
            return Err(Error::input("empty frame"));
        }
        self.frame_index += 1;

        // HOG detection and reliability
        let hog = self.scale_search_inner(frame, EstimateSource::Hog)?;
        let peaks = fast_nms_3x3(&hog.response.grid)?;
        let reliability = assess_reliability(&peaks, self.config.gate.t_nms)?;
        let challenging = reliability == Reliability::Unreliable || self.flags.rejection;

        let mut cnn_trained = false;
        let mut hog_score = None;
        let mut cnn_score = None;
        let (final_est, final_score, final_desc) = if challenging {
            if !self.in_challenge || self.cnn_model.is_none() {
                self.train_cnn()?;
                cnn_trained = true;
            }
            self.in_challenge = true;
            let mut hog_est = hog.estimate;
            let (hs, hd) = self.score(frame, &hog_est)?;
            hog_est.score = hs;
            hog_score = Some(hs);
            if self.cnn_model.is_none() {
                // a provider change just reset the deep state
                self.train_cnn()?;
                cnn_trained = true;
            }
            let mut cnn_est = self.scale_search_inner(frame, EstimateSource::Cnn)?.estimate;
            let (cs, cd) = self.score(frame, &cnn_est)?;
            cnn_est.score = cs;
            cnn_score = Some(cs);
            let chosen = select_estimate(hog_est, cnn_est);
            match chosen.source {
                EstimateSource::Cnn => (chosen, cs, cd),
                EstimateSource::Hog => (chosen, hs, hd),
            }
        } else {
            self.in_challenge = false;
            let (s, d) = self.score(frame, &hog.estimate)?;
            (Estimate { score: s, ..hog.estimate }, s, d)
        };

        self.flags = update_flags(final_score, &self.config.gate);
        self.scale = final_est.scale;
        self.bbox = BoundingBox::from_pixel_center(final_est.location, self.target_size(self.scale))?;

        let final_patch = Self::search_patch(&self.geometry, frame, final_est.location, final_est.scale)?;
        let mut memory_appended = false;
        if self.flags.valid() {
            if final_desc.dim() == self.memory.dim() {
                self.memory = append_valid(self.memory.clone(), final_desc)?;
                memory_appended = true;
            }
            let fresh = Self::deep_features(&self.geometry, self.provider.as_mut(), &final_patch)?;
            self.cnn_features = if fresh.channels() == self.cnn_features.channels() {
                blend_features(&self.cnn_features, &fresh, self.config.gate.eta)?
            } else {
                self.cnn_model = None;
                fresh
            };
        }

        // HOG model update on every frame
        let fresh = extract_hog::<T>(&final_patch, self.config.cell_size)?;
        self.hog_features = blend_features(&self.hog_features, &fresh, self.config.learning_rate_hog)?;
        let mut warm = self.hog_model.clone();
        warm.reset_dual(self.config.hog_solver.mu0);
        self.hog_model = train(
            &apply_window(&self.hog_features, &self.window)?,
            &self.label,
            self.geometry.support,
            &self.config.hog_solver,
            Some(&warm),
        )?;

        let search_held = self.flags.rejection;
        if !search_held {
            self.search_center = final_est.location;
            self.search_scale = final_est.scale;
        }

        let report = StepReport {
            frame: self.frame_index,
            bbox: self.bbox,
            scale: self.scale,
            source: final_est.source,
            hog_peak: peaks.global_peak.value.as_f64(),
            reliability,
            local_peaks: peaks.count(),
            challenging,
            cnn_trained,
            hog_score,
            cnn_score,
            score: final_score,
            flags: self.flags,
            memory_len: self.memory.len(),
            memory_appended,
            search_held,
            provider: self.provider.name().to_string(),
        };
        debug!("{report:?}");
        self.reports.push(report.clone());
        Ok(report)
    }
}
