//! Semantic memory of valid target descriptors, similarity scoring, flag logic,
//! deep-model blending and candidate selection.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::features::{DescriptorVector, FeatureTensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateConfig {
    pub t_high: f64,
    pub t_low: f64,
    pub t_nms: f64,
    pub eta: f64,
    pub capacity: usize,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            t_high: 0.7,
            t_low: 0.4,
            t_nms: 0.7,
            eta: 0.0125,
            capacity: 50,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.t_low && self.t_low < self.t_high && self.t_high <= 1.0) {
            return Err(Error::param(format!(
                "need 0 < t_low < t_high <= 1, got t_low={} t_high={}",
                self.t_low, self.t_high
            )));
        }
        if !(self.t_nms > 0.0 && self.t_nms <= 1.0) {
            return Err(Error::param(format!("t_nms must be in (0, 1], got {}", self.t_nms)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::param(format!("eta must be in [0, 1], got {}", self.eta)));
        }
        if self.capacity == 0 {
            return Err(Error::param("memory capacity must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateFlags {
    pub fc7: bool,
    pub rejection: bool,
}

impl Default for GateFlags {
    fn default() -> Self {
        Self {
            fc7: true,
            rejection: false,
        }
    }
}

impl GateFlags {
    /// Whether the current region may enter the memory and update the deep model.
    pub fn valid(&self) -> bool {
        self.fc7 && !self.rejection
    }
}

/// Rows of valid descriptors. The first row is never evicted.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMemory<T> {
    rows: VecDeque<DescriptorVector<T>>,
    capacity: usize,
    fcm_cache: Option<DescriptorVector<T>>,
}

impl<T: Scalar> SemanticMemory<T> {
    pub fn new(first: DescriptorVector<T>, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::param("memory capacity must be at least 1"));
        }
        Ok(Self {
            rows: VecDeque::from([first]),
            capacity,
            fcm_cache: None,
        })
    }

    /// Row count `V`.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.rows.front().map_or(0, |r| r.dim())
    }

    pub fn rows(&self) -> impl Iterator<Item = &DescriptorVector<T>> {
        self.rows.iter()
    }

    pub fn cached_fcm(&self) -> Option<&DescriptorVector<T>> {
        self.fcm_cache.as_ref()
    }

    /// Mean of all rows, cached until the next append.
    pub fn fcm(&mut self) -> Result<DescriptorVector<T>> {
        if let Some(f) = &self.fcm_cache {
            return Ok(f.clone());
        }
        let f = fcm(self)?;
        self.fcm_cache = Some(f.clone());
        Ok(f)
    }
}

/// Element-wise mean of the memory rows.
pub fn fcm<T: Scalar>(memory: &SemanticMemory<T>) -> Result<DescriptorVector<T>> {
    let first = memory
        .rows
        .front()
        .ok_or_else(|| Error::State("semantic memory is empty".into()))?;
    let mut acc = vec![0.0f64; first.dim()];
    for row in &memory.rows {
        for (a, v) in acc.iter_mut().zip(row.values()) {
            *a += v.as_f64();
        }
    }
    let v = memory.rows.len() as f64;
    DescriptorVector::new(acc.into_iter().map(|a| T::of(a / v)).collect())
}

/// Appends `vec`; beyond capacity the oldest row after the first is evicted.
pub fn append_valid<T: Scalar>(
    mut memory: SemanticMemory<T>,
    vec: DescriptorVector<T>,
) -> Result<SemanticMemory<T>> {
    if vec.dim() != memory.dim() {
        return Err(Error::shape(format!(
            "descriptor dim {} does not match memory dim {}",
            vec.dim(),
            memory.dim()
        )));
    }
    memory.rows.push_back(vec);
    if memory.rows.len() > memory.capacity {
        if memory.capacity == 1 {
            memory.rows.pop_back();
        } else {
            memory.rows.remove(1);
        }
    }
    memory.fcm_cache = None;
    Ok(memory)
}

/// Cosine similarity; two zero vectors score 0.
pub fn semantic_score<T: Scalar>(
    reference: &DescriptorVector<T>,
    candidate: &DescriptorVector<T>,
) -> Result<f64> {
    if reference.dim() != candidate.dim() {
        return Err(Error::shape(format!(
            "descriptor dims differ: {} vs {}",
            reference.dim(),
            candidate.dim()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (a, b) in reference.values().iter().zip(candidate.values()) {
        let (a, b) = (a.as_f64(), b.as_f64());
        dot += a * b;
        na += a * a;
        nb += b * b;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub fn update_flags(score: f64, config: &GateConfig) -> GateFlags {
    GateFlags {
        fc7: score >= config.t_high,
        rejection: score < config.t_low,
    }
}

/// `(1 - eta) old + eta new`, cell-wise.
pub fn blend_features<T: Scalar>(
    old: &FeatureTensor<T>,
    new: &FeatureTensor<T>,
    eta: f64,
) -> Result<FeatureTensor<T>> {
    if (old.height(), old.width(), old.channels()) != (new.height(), new.width(), new.channels()) {
        return Err(Error::shape(format!(
            "cannot blend {}x{}x{} with {}x{}x{}",
            old.height(),
            old.width(),
            old.channels(),
            new.height(),
            new.width(),
            new.channels()
        )));
    }
    let values = if eta == 0.0 {
        old.values().to_vec()
    } else if eta == 1.0 {
        new.values().to_vec()
    } else {
        let (a, b) = (T::of(1.0 - eta), T::of(eta));
        old.values().iter().zip(new.values()).map(|(o, n)| a * *o + b * *n).collect()
    };
    FeatureTensor::new(
        old.height(),
        old.width(),
        old.channels(),
        old.cell_size(),
        old.kind(),
        values,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateSource {
    Hog,
    Cnn,
}

/// Candidate target state from one context model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    /// Target center in 0-based pixel coordinates.
    pub location: (f64, f64),
    pub scale: f64,
    pub source: EstimateSource,
    pub score: f64,
    pub response: f64,
}

/// The deep estimate wins only with a strictly higher score.
pub fn select_estimate(hog: Estimate, cnn: Estimate) -> Estimate {
    if cnn.score > hog.score {
        cnn
    } else {
        hog
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: &[f64]) -> DescriptorVector<f64> {
        DescriptorVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn capacity_one_keeps_first_row() {
        let m = SemanticMemory::new(d(&[1.0]), 1).unwrap();
        let m = append_valid(m, d(&[3.0])).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.rows().next().unwrap().values(), &[1.0]);
    }

    #[test]
    fn fcm_cache_tracks_appends() {
        let mut m = SemanticMemory::new(d(&[1.0, 0.0]), 4).unwrap();
        assert_eq!(m.fcm().unwrap().values(), &[1.0, 0.0]);
        assert!(m.cached_fcm().is_some());
        let mut m = append_valid(m, d(&[0.0, 1.0])).unwrap();
        assert!(m.cached_fcm().is_none());
        assert_eq!(m.fcm().unwrap().values(), &[0.5, 0.5]);
    }

    #[test]
    fn dim_mismatch_is_rejected() {
        let m = SemanticMemory::new(d(&[1.0, 0.0]), 4).unwrap();
        assert!(matches!(append_valid(m, d(&[1.0])), Err(Error::Shape(_))));
        assert!(semantic_score(&d(&[1.0]), &d(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(GateConfig::default().validate().is_ok());
        assert!(GateConfig { t_low: 0.8, ..Default::default() }.validate().is_err());
        assert!(GateConfig { eta: 1.5, ..Default::default() }.validate().is_err());
        assert!(GateConfig { capacity: 0, ..Default::default() }.validate().is_err());
    }
}
