//! Flat TOML configuration. Every key is optional and overrides the default;
//! unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tracker::TrackerConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub hog_lambda: Option<f64>,
    pub hog_mu0: Option<f64>,
    pub hog_beta: Option<f64>,
    pub hog_mu_max: Option<f64>,
    pub hog_iterations: Option<usize>,
    pub cnn_lambda: Option<f64>,
    pub cnn_mu0: Option<f64>,
    pub cnn_beta: Option<f64>,
    pub cnn_mu_max: Option<f64>,
    pub cnn_iterations: Option<usize>,
    pub t_high: Option<f64>,
    pub t_low: Option<f64>,
    pub t_nms: Option<f64>,
    pub eta: Option<f64>,
    pub capacity: Option<usize>,
    pub scale_count: Option<usize>,
    pub scale_step: Option<f64>,
    pub padding_factor: Option<f64>,
    pub cell_size: Option<usize>,
    pub newton_tolerance: Option<f64>,
    pub newton_max_iters: Option<usize>,
    pub learning_rate_hog: Option<f64>,
    pub deep_provider: Option<String>,
    pub remote_fallback: Option<bool>,
    pub window_sigma_fraction: Option<f64>,
    pub label_sigma_factor: Option<f64>,
    pub template_min: Option<usize>,
    pub template_max: Option<usize>,
    pub scale_min: Option<f64>,
    pub scale_max: Option<f64>,
    pub seed: Option<u64>,
}

macro_rules! overlay {
    ($src:expr, $dst:expr; $($key:ident => $($path:ident).+),* $(,)?) => {
        $(if let Some(v) = $src.$key.clone() { $dst.$($path).+ = v; })*
    };
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Overrides the fields of `config` that are set here, then validates.
    pub fn apply(&self, config: &mut TrackerConfig) -> Result<()> {
        overlay!(self, config;
            hog_lambda => hog_solver.lambda,
            hog_mu0 => hog_solver.mu0,
            hog_beta => hog_solver.beta,
            hog_mu_max => hog_solver.mu_max,
            hog_iterations => hog_solver.iterations,
            cnn_lambda => cnn_solver.lambda,
            cnn_mu0 => cnn_solver.mu0,
            cnn_beta => cnn_solver.beta,
            cnn_mu_max => cnn_solver.mu_max,
            cnn_iterations => cnn_solver.iterations,
            t_high => gate.t_high,
            t_low => gate.t_low,
            t_nms => gate.t_nms,
            eta => gate.eta,
            capacity => gate.capacity,
            scale_count => scale_count,
            scale_step => scale_step,
            padding_factor => padding_factor,
            cell_size => cell_size,
            newton_tolerance => newton_tolerance,
            newton_max_iters => newton_max_iters,
            learning_rate_hog => learning_rate_hog,
            remote_fallback => remote_fallback,
            window_sigma_fraction => window_sigma_fraction,
            label_sigma_factor => label_sigma_factor,
            template_min => template_min,
            template_max => template_max,
            scale_min => scale_min,
            scale_max => scale_max,
            seed => seed,
        );
        if let Some(p) = &self.deep_provider {
            config.deep_provider = p.parse()?;
        }
        config.validate()
    }

    /// Every field of `config`, for echoing the effective configuration.
    pub fn from_config(config: &TrackerConfig) -> Self {
        Self {
            hog_lambda: Some(config.hog_solver.lambda),
            hog_mu0: Some(config.hog_solver.mu0),
            hog_beta: Some(config.hog_solver.beta),
            hog_mu_max: Some(config.hog_solver.mu_max),
            hog_iterations: Some(config.hog_solver.iterations),
            cnn_lambda: Some(config.cnn_solver.lambda),
            cnn_mu0: Some(config.cnn_solver.mu0),
            cnn_beta: Some(config.cnn_solver.beta),
            cnn_mu_max: Some(config.cnn_solver.mu_max),
            cnn_iterations: Some(config.cnn_solver.iterations),
            t_high: Some(config.gate.t_high),
            t_low: Some(config.gate.t_low),
            t_nms: Some(config.gate.t_nms),
            eta: Some(config.gate.eta),
            capacity: Some(config.gate.capacity),
            scale_count: Some(config.scale_count),
            scale_step: Some(config.scale_step),
            padding_factor: Some(config.padding_factor),
            cell_size: Some(config.cell_size),
            newton_tolerance: Some(config.newton_tolerance),
            newton_max_iters: Some(config.newton_max_iters),
            learning_rate_hog: Some(config.learning_rate_hog),
            deep_provider: Some(config.deep_provider.to_string()),
            remote_fallback: Some(config.remote_fallback),
            window_sigma_fraction: Some(config.window_sigma_fraction),
            label_sigma_factor: Some(config.label_sigma_factor),
            template_min: Some(config.template_min),
            template_max: Some(config.template_max),
            scale_min: Some(config.scale_min),
            scale_max: Some(config.scale_max),
            seed: Some(config.seed),
        }
    }

    pub fn to_table(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))
    }
}

impl TrackerConfig {
    /// Defaults overlaid with the keys set in `file`.
    pub fn from_file(file: &ConfigFile) -> Result<Self> {
        let mut c = Self::default();
        file.apply(&mut c)?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::ProviderKind;

    #[test]
    fn overrides_and_unknown_keys() {
        let f = ConfigFile::parse("hog_iterations = 3\nt_low = 0.3\ndeep_provider = \"remote\"\n").unwrap();
        let c = TrackerConfig::from_file(&f).unwrap();
        assert_eq!(c.hog_solver.iterations, 3);
        assert_eq!(c.gate.t_low, 0.3);
        assert_eq!(c.deep_provider, ProviderKind::Remote);
        assert_eq!(c.cnn_solver.iterations, 20);
        assert!(ConfigFile::parse("hog_lamda = 1.0\n").is_err());
        assert!(ConfigFile::parse("[hog]\nlambda = 1.0\n").is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let f = ConfigFile::parse("scale_count = 4\n").unwrap();
        assert!(TrackerConfig::from_file(&f).is_err());
        let f = ConfigFile::parse("deep_provider = \"vgg\"\n").unwrap();
        assert!(TrackerConfig::from_file(&f).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let c = TrackerConfig {
            seed: 42,
            scale_step: 1.05,
            ..Default::default()
        };
        let text = toml::to_string(&ConfigFile::from_config(&c)).unwrap();
        let back = TrackerConfig::from_file(&ConfigFile::parse(&text).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
