//! Pipeline configuration.
//!
//! All tunables live in [`PipelineConfig`], which serializes to a single
//! JSON document (unknown keys are rejected so stale config files fail
//! loudly). Parameters are plain `f64`; the signal path converts them to
//! its scalar type at the point of use.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Taper applied before the spectral transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Taper {
    /// No taper (rectangular window).
    None,
    /// Periodic Hann window; the default, suppresses leakage.
    Hann,
}

/// How the off-band noise statistic `q` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePeakMode {
    /// Maximum normalized power over bins outside the fundamental and
    /// first-harmonic bands. The default.
    OffBandMax,
    /// One minus the normalized power inside the fundamental band
    /// (a constant-form alternative kept for fidelity experiments).
    FundamentalComplement,
}

/// Autocorrelation peak selection rule for heart-rate estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakRule {
    /// Global maximum within the physiological lag window. The default.
    GlobalMax,
    /// First local maximum within the physiological lag window.
    FirstLocalMax,
}

/// Smoothness-prior detrending weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetrendConfig {
    /// Regularization weight λ of the smoothness prior; larger values move
    /// the trend cutoff towards lower frequencies.
    pub lambda: f64,
}

impl Default for DetrendConfig {
    fn default() -> Self {
        Self { lambda: 300.0 }
    }
}

impl DetrendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "detrend lambda must be positive and finite, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Spectral analysis and spectral-prior parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    /// Spectral band half-width Δf in Hz around the fundamental and its
    /// first harmonic.
    pub delta_f: f64,
    /// Lower physiological heart-rate bound in Hz.
    pub hr_min: f64,
    /// Upper physiological heart-rate bound in Hz.
    pub hr_max: f64,
    /// Harmonic-prior tuning parameter α_h.
    pub alpha_h: f64,
    /// Noise-prior tuning parameter α_q.
    pub alpha_q: f64,
    pub taper: Taper,
    pub noise_peak_mode: NoisePeakMode,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            delta_f: 0.2,
            hr_min: 40.0 / 60.0,
            hr_max: 200.0 / 60.0,
            alpha_h: 0.5,
            alpha_q: 0.01,
            taper: Taper::Hann,
            noise_peak_mode: NoisePeakMode::OffBandMax,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_f > 0.0 && self.delta_f.is_finite()) {
            return Err(Error::InvalidConfig("delta_f must be positive".into()));
        }
        if !(self.hr_min > 0.0 && self.hr_max > self.hr_min && self.hr_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "heart-rate bounds must satisfy 0 < hr_min < hr_max, got [{}, {}]",
                self.hr_min, self.hr_max
            )));
        }
        if !(self.alpha_h > 0.0 && self.alpha_q > 0.0) {
            return Err(Error::InvalidConfig(
                "alpha_h and alpha_q must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Spatial-prior parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpatialConfig {
    /// Spatial tuning parameter α_l, in units of squared absorbance
    /// gradient.
    pub alpha_l: f64,
    /// Chebyshev radius of the neighbourhood used for the combined-prior
    /// infimum; 0 disables the neighbourhood statistic.
    pub neighborhood_radius: usize,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        Self {
            alpha_l: 1.0,
            neighborhood_radius: 1,
        }
    }
}

impl SpatialConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_l > 0.0 && self.alpha_l.is_finite()) {
            return Err(Error::InvalidConfig("alpha_l must be positive".into()));
        }
        Ok(())
    }
}

/// Fusion-stage parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    /// Regions whose harmonic energy falls below this value get zero
    /// combined weight; if no region passes, extraction reports a
    /// no-pulsatile-region failure instead of fusing noise.
    pub min_harmonic_energy: f64,
    /// Fraction of the maximum combined weight below which a region is not
    /// counted in `n_regions_used`. Accounting only: tiny weights still
    /// contribute, so normalization stays exact.
    pub min_weight_rel: f64,
    /// Optional fixed analysis-window length in seconds; weights are
    /// recomputed per window. `None` fuses the full recording with one set
    /// of weights.
    pub window_seconds: Option<f64>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            min_harmonic_energy: 0.3,
            min_weight_rel: 1e-4,
            window_seconds: None,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_harmonic_energy) {
            return Err(Error::InvalidConfig(
                "min_harmonic_energy must lie in [0, 1]".into(),
            ));
        }
        if !(self.min_weight_rel >= 0.0 && self.min_weight_rel.is_finite()) {
            return Err(Error::InvalidConfig(
                "min_weight_rel must be non-negative".into(),
            ));
        }
        if let Some(w) = self.window_seconds {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig(
                    "window_seconds must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Heart-rate estimation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CardiacConfig {
    /// Resampling rate in Hz before autocorrelation.
    pub resample_fs: f64,
    /// Lower physiological heart-rate bound in Hz.
    pub hr_min: f64,
    /// Upper physiological heart-rate bound in Hz.
    pub hr_max: f64,
    pub peak_rule: PeakRule,
    /// Normalized autocorrelation below which no estimate is returned.
    pub min_confidence: f64,
}

impl Default for CardiacConfig {
    fn default() -> Self {
        Self {
            resample_fs: 200.0,
            hr_min: 40.0 / 60.0,
            hr_max: 200.0 / 60.0,
            peak_rule: PeakRule::GlobalMax,
            min_confidence: 0.3,
        }
    }
}

impl CardiacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.resample_fs > 0.0 && self.resample_fs.is_finite()) {
            return Err(Error::InvalidConfig("resample_fs must be positive".into()));
        }
        if !(self.hr_min > 0.0 && self.hr_max > self.hr_min && self.hr_max.is_finite()) {
            return Err(Error::InvalidConfig(
                "cardiac heart-rate bounds must satisfy 0 < hr_min < hr_max".into(),
            ));
        }
        if !(-1.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::InvalidConfig(
                "min_confidence must lie in [-1, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Complete pipeline configuration; one serializable document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Blockwise downsampling block height in pixels.
    pub block_rows: usize,
    /// Blockwise downsampling block width in pixels.
    pub block_cols: usize,
    /// Non-positive intensities are clamped to this fraction of the maximum
    /// intensity before the log transform; clamp events are counted in the
    /// diagnostics.
    pub clamp_epsilon_rel: f64,
    pub detrend: DetrendConfig,
    pub spectral: SpectralConfig,
    pub spatial: SpatialConfig,
    pub fusion: FusionConfig,
    pub cardiac: CardiacConfig,
    /// Maximum forward lag in seconds searched by the lag-compensated
    /// correlation metric.
    pub max_lag_s: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            block_rows: 6,
            block_cols: 6,
            clamp_epsilon_rel: 1e-6,
            detrend: DetrendConfig::default(),
            spectral: SpectralConfig::default(),
            spatial: SpatialConfig::default(),
            fusion: FusionConfig::default(),
            cardiac: CardiacConfig::default(),
            max_lag_s: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_rows == 0 || self.block_cols == 0 {
            return Err(Error::InvalidConfig("block dims must be positive".into()));
        }
        if !(self.clamp_epsilon_rel > 0.0 && self.clamp_epsilon_rel < 1.0) {
            return Err(Error::InvalidConfig(
                "clamp_epsilon_rel must lie in (0, 1)".into(),
            ));
        }
        if !(self.max_lag_s >= 0.0 && self.max_lag_s.is_finite()) {
            return Err(Error::InvalidConfig(
                "max_lag_s must be non-negative".into(),
            ));
        }
        self.detrend.validate()?;
        self.spectral.validate()?;
        self.spatial.validate()?;
        self.fusion.validate()?;
        self.cardiac.validate()
    }
}
