//! Bayesian least-squares fusion.
//!
//! The posterior over candidate waveforms is a discrete weighted histogram
//! supported on the observed region signals, with the combined
//! spectral-spatial priors as masses. The posterior mean then collapses to
//! a weighted sum of the region signals; [`fuse`] implements that reduced
//! form, and the test suite holds it equal to the explicit
//! histogram-integral evaluation to 1e-12.

use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::frame::{downsample_blockwise, to_absorbance, FrameSequence, RegionGrid};
use crate::region::{signals_from_absorbance, RegionSignal};
use crate::scalar::Scalar;
use crate::spatial::{combine_priors, scene_gradient, spatial_prior, PriorMap, RegionMap};
use crate::spectral::{harmonic_prior, noise_prior, summarize, SpectralSummary};

/// Per-window fusion accounting.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct WindowDiagnostics {
    pub start_sample: usize,
    pub len: usize,
    pub total_weight: f64,
    pub n_regions_used: usize,
    pub degenerate_regions: usize,
}

/// Stack-level counters plus per-window accounting.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct FusionDiagnostics {
    /// Samples clamped during the absorbance conversion.
    pub clamped_samples: usize,
    pub windows: Vec<WindowDiagnostics>,
}

/// The fused blood pulse waveform estimate.
///
/// `total_weight` and `n_regions_used` describe the first analysis window,
/// which is the whole recording unless windowed fusion is configured;
/// per-window values live in `diagnostics`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedWaveform<T> {
    pub samples: Vec<T>,
    pub fps: f64,
    pub total_weight: T,
    pub n_regions_used: usize,
    pub diagnostics: FusionDiagnostics,
}

/// Normalizes combined prior weights into posterior masses summing to one.
pub fn posterior_weights<T: Scalar>(priors: &PriorMap<T>) -> Result<Vec<T>> {
    normalize_weights(priors.w_combined.data())
}

fn normalize_weights<T: Scalar>(weights: &[T]) -> Result<Vec<T>> {
    if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
        return Err(Error::InvalidInput(
            "prior weights must be finite and non-negative".into(),
        ));
    }
    let total = weights.iter().copied().sum::<T>();
    if !(total > T::zero()) {
        return Err(Error::NoPulsatileRegion(
            "every region weight is zero; the posterior normalizer is undefined".into(),
        ));
    }
    Ok(weights.iter().map(|&w| w / total).collect())
}

/// Weighted sum over regions in fixed pairwise-tree order (split at the
/// midpoint of the region-index range), so the reduction is bit-identical
/// at any parallelism degree.
fn weighted_tree_sum<T: Scalar>(signals: &[RegionSignal<T>], weights: &[T]) -> Vec<T> {
    fn go<T: Scalar>(signals: &[RegionSignal<T>], weights: &[T], lo: usize, hi: usize) -> Vec<T> {
        if hi - lo == 1 {
            let w = weights[lo];
            return signals[lo].samples.iter().map(|&v| v * w).collect();
        }
        let mid = lo + (hi - lo) / 2;
        let mut left = go(signals, weights, lo, mid);
        let right = go(signals, weights, mid, hi);
        for (a, b) in left.iter_mut().zip(right) {
            *a += b;
        }
        left
    }
    go(signals, weights, 0, signals.len())
}

/// Fuses region signals under normalized posterior weights.
pub fn fuse<T: Scalar>(signals: &[RegionSignal<T>], weights: &[T]) -> Result<FusedWaveform<T>> {
    if signals.is_empty() {
        return Err(Error::InvalidInput("no signals to fuse".into()));
    }
    if signals.len() != weights.len() {
        return Err(Error::InvalidInput(format!(
            "{} signals but {} weights",
            signals.len(),
            weights.len()
        )));
    }
    let len = signals[0].samples.len();
    if let Some(bad) = signals.iter().find(|s| s.samples.len() != len) {
        return Err(Error::InvalidInput(format!(
            "region {} has {} samples, expected {len}",
            bad.region_id,
            bad.samples.len()
        )));
    }
    let samples = weighted_tree_sum(signals, weights);
    let total_weight = weights.iter().copied().sum::<T>();
    let n_regions_used = weights.iter().filter(|w| **w > T::zero()).count();
    Ok(FusedWaveform {
        samples,
        fps: signals[0].fps,
        total_weight,
        n_regions_used,
        diagnostics: FusionDiagnostics::default(),
    })
}

/// Everything the pipeline computed for the first analysis window, for
/// diagnostics export.
#[derive(Debug, Clone)]
pub struct PulseDetail<T> {
    pub summaries: Vec<SpectralSummary<T>>,
    pub priors: PriorMap<T>,
    pub weights: Vec<T>,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

/// End-to-end extraction: downsample, absorbance, detrend, priors, fusion.
pub fn extract_pulse<T: Scalar>(
    frames: &FrameSequence<T>,
    cfg: &PipelineConfig,
) -> Result<FusedWaveform<T>> {
    extract_pulse_detailed(frames, cfg).map(|(w, _)| w)
}

/// [`extract_pulse`] plus the first window's spectral summaries, prior
/// maps, and posterior weights.
pub fn extract_pulse_detailed<T: Scalar>(
    frames: &FrameSequence<T>,
    cfg: &PipelineConfig,
) -> Result<(FusedWaveform<T>, PulseDetail<T>)> {
    cfg.validate()?;
    frames.validate_nonnegative()?;
    let grid = RegionGrid::new(cfg.block_rows, cfg.block_cols)?;
    let down = downsample_blockwise(frames, &grid)?;
    let (abs, clamped_samples) = to_absorbance(&down, cfg.clamp_epsilon_rel)?;
    let signals = signals_from_absorbance(&abs, &cfg.detrend)?;
    let rows = abs.rows();
    let cols = abs.cols();
    let n = abs.n_frames();

    // The spatial prior comes from the whole recording's temporal-mean
    // absorbance frame: the anatomy does not change across windows.
    let w_spat = spatial_prior(&scene_gradient(&abs), &cfg.spatial)?;

    let windows = window_bounds(n, abs.fps(), cfg.fusion.window_seconds);
    let mut samples = Vec::with_capacity(n);
    let mut diag_windows = Vec::with_capacity(windows.len());
    let mut first: Option<PulseDetail<T>> = None;

    for &(start, end) in &windows {
        let segment: Vec<RegionSignal<T>> = signals
            .iter()
            .map(|s| RegionSignal {
                region_id: s.region_id,
                samples: s.samples[start..end].to_vec(),
                fps: s.fps,
            })
            .collect();
        let summaries: Vec<SpectralSummary<T>> = segment
            .par_iter()
            .map(|s| summarize(s, &cfg.spectral))
            .collect::<Result<_>>()?;
        let degenerate_regions = summaries.iter().filter(|s| s.degenerate).count();
        let w_harm = RegionMap::new(
            rows,
            cols,
            summaries
                .iter()
                .map(|s| harmonic_prior(s.h, &cfg.spectral))
                .collect(),
        )?;
        let w_nmag = RegionMap::new(
            rows,
            cols,
            summaries
                .iter()
                .map(|s| noise_prior(s.q, &cfg.spectral))
                .collect(),
        )?;
        let mut priors = combine_priors(&w_harm, &w_nmag, &w_spat, &cfg.spatial)?;

        // Pulsatility gate: regions without meaningful harmonic energy get
        // zero mass, so an all-noise scene fails loudly instead of fusing
        // noise into a fake waveform.
        let min_h = T::from_config(cfg.fusion.min_harmonic_energy);
        let gated: Vec<T> = priors
            .w_combined
            .data()
            .iter()
            .zip(&summaries)
            .map(|(&w, s)| if s.h < min_h { T::zero() } else { w })
            .collect();
        priors.w_combined = RegionMap::new(rows, cols, gated)?;

        let weights = posterior_weights(&priors)?;
        let fused = fuse(&segment, &weights)?;
        samples.extend_from_slice(&fused.samples);

        let raw_total = priors.w_combined.data().iter().copied().sum::<T>();
        let max_w = priors
            .w_combined
            .data()
            .iter()
            .fold(T::zero(), |a, &b| a.max(b));
        let threshold = max_w * T::from_config(cfg.fusion.min_weight_rel);
        let n_regions_used = priors
            .w_combined
            .data()
            .iter()
            .filter(|w| **w > threshold)
            .count();
        diag_windows.push(WindowDiagnostics {
            start_sample: start,
            len: end - start,
            total_weight: raw_total.to_f64().unwrap_or(f64::NAN),
            n_regions_used,
            degenerate_regions,
        });
        if first.is_none() {
            first = Some(PulseDetail {
                summaries,
                priors,
                weights,
                grid_rows: rows,
                grid_cols: cols,
            });
        }
    }

    let detail = first.expect("at least one analysis window");
    let first_diag = &diag_windows[0];
    let waveform = FusedWaveform {
        samples,
        fps: abs.fps(),
        total_weight: T::from_config(first_diag.total_weight),
        n_regions_used: first_diag.n_regions_used,
        diagnostics: FusionDiagnostics {
            clamped_samples,
            windows: diag_windows,
        },
    };
    Ok((waveform, detail))
}

/// Splits `n` samples into analysis windows. `None` means one window over
/// the whole recording; otherwise windows are `window_seconds` long and a
/// trailing remainder shorter than a full window is merged into the last
/// one, so the output always covers every sample.
fn window_bounds(n: usize, fps: f64, window_seconds: Option<f64>) -> Vec<(usize, usize)> {
    let Some(secs) = window_seconds else {
        return vec![(0, n)];
    };
    let win = ((secs * fps).round() as usize).max(8);
    if win >= n {
        return vec![(0, n)];
    }
    let mut bounds = Vec::new();
    let mut start = 0;
    while start + win <= n {
        bounds.push((start, start + win));
        start += win;
    }
    if start < n {
        let last = bounds.len() - 1;
        bounds[last].1 = n;
    }
    bounds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SpatialConfig;

    fn sig(id: usize, samples: Vec<f64>) -> RegionSignal<f64> {
        RegionSignal {
            region_id: id,
            samples,
            fps: 60.0,
        }
    }

    #[test]
    fn single_nonzero_weight_takes_all() {
        let priors = PriorMap {
            w_harm: RegionMap::new(1, 3, vec![1.0; 3]).unwrap(),
            w_nmag: RegionMap::new(1, 3, vec![1.0; 3]).unwrap(),
            w_spat: RegionMap::new(1, 3, vec![1.0; 3]).unwrap(),
            w_combined: RegionMap::new(1, 3, vec![0.0, 0.7, 0.0]).unwrap(),
            neighborhood_radius: 0,
        };
        let w = posterior_weights(&priors).unwrap();
        assert_eq!(w, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn normalization_of_mixed_weights() {
        let w = normalize_weights(&[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(w, vec![0.25, 0.25, 0.5]);
        let sum: f64 = w.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_weights_is_no_pulsatile_region() {
        let err = normalize_weights(&[0.0f64, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NoPulsatileRegion(_)));
    }

    #[test]
    fn identity_and_symmetry_fusions() {
        let a = sig(0, vec![1.0, -2.0, 3.0]);
        let fused = fuse(std::slice::from_ref(&a), &[1.0]).unwrap();
        assert_eq!(fused.samples, a.samples);

        let b = sig(1, a.samples.iter().map(|v| -v).collect());
        let fused = fuse(&[a, b], &[0.5, 0.5]).unwrap();
        assert!(fused.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_histogram_integral_oracle() {
        // The oracle evaluates the discrete posterior integral literally:
        // sum over the histogram support of (state sample) x (mass).
        let signals = vec![
            sig(0, vec![1.0, 2.0, 3.0, 4.0]),
            sig(1, vec![-1.0, 0.5, 2.0, 8.0]),
            sig(2, vec![10.0, -3.0, 0.0, 1.0]),
        ];
        let weights = [0.25, 0.25, 0.5];
        let fused = fuse(&signals, &weights).unwrap();
        for t in 0..4 {
            let mut oracle = 0.0;
            for (s, w) in signals.iter().zip(weights) {
                oracle += s.samples[t] * w;
            }
            let denom = oracle.abs().max(1.0);
            assert!((fused.samples[t] - oracle).abs() <= 1e-12 * denom);
        }
    }

    #[test]
    fn fusion_is_order_invariant_up_to_permutation() {
        let signals = vec![
            sig(0, vec![1.0, 2.0]),
            sig(1, vec![3.0, 5.0]),
            sig(2, vec![-2.0, 0.5]),
            sig(3, vec![0.25, 8.0]),
        ];
        let weights = [0.1, 0.2, 0.3, 0.4];
        let fused = fuse(&signals, &weights).unwrap();
        let perm = [2usize, 0, 3, 1];
        let p_signals: Vec<_> = perm.iter().map(|&i| signals[i].clone()).collect();
        let p_weights: Vec<_> = perm.iter().map(|&i| weights[i]).collect();
        let fused_p = fuse(&p_signals, &p_weights).unwrap();
        for (a, b) in fused.samples.iter().zip(&fused_p.samples) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let signals = vec![sig(0, vec![1.0, 2.0]), sig(1, vec![1.0, 2.0, 3.0])];
        assert!(fuse(&signals, &[0.5, 0.5]).is_err());
        let signals = vec![sig(0, vec![1.0, 2.0])];
        assert!(fuse(&signals, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn window_bounds_cover_everything() {
        assert_eq!(window_bounds(100, 60.0, None), vec![(0, 100)]);
        let b = window_bounds(150, 10.0, Some(5.0));
        assert_eq!(b, vec![(0, 50), (50, 100), (100, 150)]);
        // Remainder merges into the last window.
        let b = window_bounds(170, 10.0, Some(5.0));
        assert_eq!(b, vec![(0, 50), (50, 100), (100, 170)]);
        // Window longer than the recording collapses to one window.
        let b = window_bounds(30, 10.0, Some(5.0));
        assert_eq!(b, vec![(0, 30)]);
    }

    #[test]
    fn combine_then_normalize_with_radius() {
        // End-to-end: radius-1 infimum then normalization stays a proper
        // distribution.
        let cfg = SpatialConfig {
            alpha_l: 1.0,
            neighborhood_radius: 1,
        };
        let wh = RegionMap::from_fn(2, 2, |r, c| 0.2 + 0.2 * (r * 2 + c) as f64);
        let ones = RegionMap::from_fn(2, 2, |_, _| 1.0);
        let pm = combine_priors(&wh, &ones, &ones, &cfg).unwrap();
        let w = posterior_weights(&pm).unwrap();
        let sum: f64 = w.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
