//! Fidelity metrics, agreement statistics, and the hyperparameter grid
//! search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, SpectralConfig};
use crate::error::{Error, Result};
use crate::frame::FrameSequence;
use crate::fusion::extract_pulse;
use crate::region::RegionSignal;
use crate::scalar::Scalar;
use crate::spectral::summarize;

/// Per-recording fidelity report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Spectral entropy in nats.
    pub spectral_entropy: f64,
    /// Entropy divided by `ln(n_bins)`.
    pub spectral_entropy_normalized: f64,
    /// Lag-compensated absolute Pearson correlation against ground truth.
    pub pearson_rho: f64,
    /// Forward lag (seconds) at the correlation maximum.
    pub best_lag_s: f64,
    pub hr_pred_bpm: Option<f64>,
    pub hr_true_bpm: Option<f64>,
}

/// Bland-Altman agreement statistics over (true, predicted) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    /// Mean error μ (predicted minus true).
    pub mean_error: f64,
    /// Sample standard deviation σ of the errors.
    pub sd_error: f64,
    /// μ ± 1.96σ.
    pub limits: (f64, f64),
    pub pairs: Vec<(f64, f64)>,
}

/// Shannon entropy `-Σ p ln p` of a discrete distribution; zero bins
/// contribute nothing.
pub fn entropy<T: Scalar>(dist: &[T]) -> T {
    dist.iter()
        .filter(|p| **p > T::zero())
        .map(|&p| -p * p.ln())
        .sum()
}

/// Spectral entropy of a waveform: the entropy of its normalized 0-DC
/// power distribution. Returns `(H, H / ln(n_bins))`.
pub fn spectral_entropy<T: Scalar>(
    samples: &[T],
    fps: f64,
    cfg: &SpectralConfig,
) -> Result<(T, T)> {
    let signal = RegionSignal {
        region_id: 0,
        samples: samples.to_vec(),
        fps,
    };
    let summary = crate::spectral::spectral_power(&signal, cfg)?;
    if summary.degenerate {
        return Err(Error::InvalidInput(
            "spectral entropy undefined for a zero-variance waveform".into(),
        ));
    }
    let h = entropy(&summary.gamma);
    let n_bins = summary.gamma.len();
    let normalized = if n_bins > 1 {
        h / T::from_config((n_bins as f64).ln())
    } else {
        T::zero()
    };
    Ok((h, normalized))
}

/// Absolute Pearson correlation of two equal-length slices, clamped by the
/// Cauchy-Schwarz bound so that a series against itself is exactly 1.
pub fn pearson_abs<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidInput(
            "correlation needs two equal-length series of at least 2 samples".into(),
        ));
    }
    let n = T::from_config(a.len() as f64);
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let mut cov = T::zero();
    let mut va = T::zero();
    let mut vb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if !(va > T::zero()) || !(vb > T::zero()) {
        return Err(Error::InvalidInput(
            "correlation undefined for a zero-variance series".into(),
        ));
    }
    if cov * cov >= va * vb {
        return Ok(T::one());
    }
    Ok((cov / (va * vb).sqrt()).abs())
}

/// Maximum absolute correlation over forward lags of `truth` relative to
/// `pred`, up to `max_lag_s`. Forward-only: the reference site physically
/// lags the scene. Returns `(rho, best_lag_seconds)`; ties prefer the
/// smaller lag.
pub fn lag_correlation<T: Scalar>(
    pred: &[T],
    truth: &[T],
    fps: f64,
    max_lag_s: f64,
) -> Result<(T, f64)> {
    if !(fps > 0.0 && fps.is_finite()) || !(max_lag_s >= 0.0 && max_lag_s.is_finite()) {
        return Err(Error::InvalidConfig(
            "fps must be positive and max_lag_s non-negative".into(),
        ));
    }
    let max_lag = (max_lag_s * fps).floor() as usize;
    let min_needed = (2.0 * fps).ceil() as usize;
    let overlap_at_max = pred.len().min(truth.len().saturating_sub(max_lag));
    if overlap_at_max < min_needed.max(2) {
        return Err(Error::InvalidInput(format!(
            "need at least 2 s of overlap after the maximal lag; have {} samples",
            overlap_at_max
        )));
    }
    let mut best = (T::neg_infinity(), 0usize);
    for lag in 0..=max_lag {
        let len = pred.len().min(truth.len() - lag);
        let rho = pearson_abs(&pred[..len], &truth[lag..lag + len])?;
        if rho > best.0 {
            best = (rho, lag);
        }
    }
    Ok((best.0, best.1 as f64 / fps))
}

/// Bland-Altman statistics over `(true, predicted)` pairs.
pub fn bland_altman(pairs: &[(f64, f64)]) -> Result<BlandAltman> {
    if pairs.len() < 2 {
        return Err(Error::InvalidInput(
            "Bland-Altman needs at least 2 pairs".into(),
        ));
    }
    let errors: Vec<f64> = pairs.iter().map(|(t, p)| p - t).collect();
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    Ok(BlandAltman {
        mean_error: mean,
        sd_error: sd,
        limits: (mean - 1.96 * sd, mean + 1.96 * sd),
        pairs: pairs.to_vec(),
    })
}

/// Grid-search objective: `m / (1 - m)` with `m` the waveform's own
/// normalized spectral mass in the fundamental and first-harmonic bands.
/// Waveforms whose fundamental lies outside the physiological heart-rate
/// range are excluded and score negative infinity; `m` is clamped just
/// below one so a spectrally pure waveform scores finite and huge.
pub fn tuning_objective<T: Scalar>(samples: &[T], fps: f64, cfg: &SpectralConfig) -> T {
    let signal = RegionSignal {
        region_id: 0,
        samples: samples.to_vec(),
        fps,
    };
    let Ok(summary) = summarize(&signal, cfg) else {
        return T::neg_infinity();
    };
    if summary.degenerate {
        return T::neg_infinity();
    }
    let hr_min = T::from_config(cfg.hr_min);
    let hr_max = T::from_config(cfg.hr_max);
    if summary.f_star < hr_min || summary.f_star > hr_max {
        return T::neg_infinity();
    }
    let cap = T::one() - T::from_config(1e-9);
    let m = summary.h.min(cap);
    m / (T::one() - m)
}

/// One grid-search coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha_h: f64,
    pub alpha_q: f64,
    pub alpha_l: f64,
    pub radius: usize,
}

/// Candidate values per hyperparameter; the search enumerates the cross
/// product in declaration order (`alpha_h` outermost, `radius` innermost).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub alpha_h: Vec<f64>,
    pub alpha_q: Vec<f64>,
    pub alpha_l: Vec<f64>,
    pub radius: Vec<usize>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self {
            alpha_h: vec![0.1, 0.25, 0.5, 1.0],
            alpha_q: vec![0.001, 0.01, 0.1],
            alpha_l: vec![0.1, 1.0, 10.0],
            radius: vec![0, 1, 2],
        }
    }
}

impl ParamGrid {
    pub fn is_empty(&self) -> bool {
        self.alpha_h.is_empty()
            || self.alpha_q.is_empty()
            || self.alpha_l.is_empty()
            || self.radius.is_empty()
    }

    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &alpha_h in &self.alpha_h {
            for &alpha_q in &self.alpha_q {
                for &alpha_l in &self.alpha_l {
                    for &radius in &self.radius {
                        out.push(GridPoint {
                            alpha_h,
                            alpha_q,
                            alpha_l,
                            radius,
                        });
                    }
                }
            }
        }
        out
    }
}

/// One evaluated grid point. `score` is negative infinity when excluded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridEntry {
    pub point: GridPoint,
    pub score: f64,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearchResult {
    pub best: GridPoint,
    pub objective: f64,
    pub table: Vec<GridEntry>,
}

fn apply_point(base: &PipelineConfig, point: &GridPoint) -> PipelineConfig {
    let mut cfg = base.clone();
    cfg.spectral.alpha_h = point.alpha_h;
    cfg.spectral.alpha_q = point.alpha_q;
    cfg.spatial.alpha_l = point.alpha_l;
    cfg.spatial.neighborhood_radius = point.radius;
    cfg
}

/// Scores one grid point on one scene; extraction failures from missing
/// pulsatility count as exclusion, any other error propagates.
fn score_point<T: Scalar>(
    scene: &FrameSequence<T>,
    cfg: &PipelineConfig,
) -> Result<Option<f64>> {
    match extract_pulse(scene, cfg) {
        Ok(waveform) => {
            let s = tuning_objective(&waveform.samples, waveform.fps, &cfg.spectral);
            let s = s.to_f64().unwrap_or(f64::NEG_INFINITY);
            Ok(if s.is_finite() { Some(s) } else { None })
        }
        Err(e) if e.is_no_signal() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Exhaustive grid search over the given scenes. Each point's objective is
/// the mean score over the scenes where it was not excluded; a point with
/// no surviving scene is excluded. Ties resolve to the first point in
/// enumeration order, so the result does not depend on evaluation
/// parallelism.
pub fn grid_search<T: Scalar>(
    scenes: &[FrameSequence<T>],
    grid: &ParamGrid,
    base: &PipelineConfig,
) -> Result<GridSearchResult> {
    if scenes.is_empty() {
        return Err(Error::InvalidInput("grid search needs at least one scene".into()));
    }
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty hyperparameter grid".into()));
    }
    let points = grid.points();
    let table: Vec<GridEntry> = points
        .par_iter()
        .map(|point| {
            let cfg = apply_point(base, point);
            let mut scores = Vec::with_capacity(scenes.len());
            for scene in scenes {
                if let Some(s) = score_point(scene, &cfg)? {
                    scores.push(s);
                }
            }
            let (score, excluded) = if scores.is_empty() {
                (f64::NEG_INFINITY, true)
            } else {
                (scores.iter().sum::<f64>() / scores.len() as f64, false)
            };
            Ok(GridEntry {
                point: *point,
                score,
                excluded,
            })
        })
        .collect::<Result<_>>()?;

    let mut best: Option<&GridEntry> = None;
    for entry in table.iter().filter(|e| !e.excluded) {
        let better = match best {
            None => true,
            Some(b) => entry.score > b.score,
        };
        if better {
            best = Some(entry);
        }
    }
    let best = best.ok_or_else(|| {
        Error::NoEstimate("every grid point was excluded".into())
    })?;
    Ok(GridSearchResult {
        best: best.point,
        objective: best.score,
        table,
    })
}
