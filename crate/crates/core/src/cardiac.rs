//! Heart-rate estimation: cubic-spline resampling to a fine grid, then
//! autocorrelation peak detection with sub-sample refinement.

use crate::config::{CardiacConfig, PeakRule};
use crate::error::{Error, Result};
use crate::fusion::FusedWaveform;
use crate::scalar::Scalar;

/// Heart-rate estimate from one waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct HeartRateEstimate<T> {
    pub bpm: T,
    /// Refined (fractional) lag in samples at the autocorrelation peak.
    pub delta_t_samples: T,
    pub resample_fs: f64,
    /// Normalized autocorrelation value at the selected peak.
    pub confidence: T,
}

/// Natural cubic spline through uniformly spaced samples, evaluated on the
/// uniform `target_fs` grid covering the original time span.
pub fn resample_cubic<T: Scalar>(samples: &[T], fps: f64, target_fs: f64) -> Result<Vec<T>> {
    let n = samples.len();
    if n < 4 {
        return Err(Error::InvalidInput(format!(
            "cubic resampling needs at least 4 samples, got {n}"
        )));
    }
    if !(fps > 0.0 && fps.is_finite()) || !(target_fs > 0.0 && target_fs.is_finite()) {
        return Err(Error::InvalidConfig(
            "sampling rates must be positive and finite".into(),
        ));
    }
    let second = natural_spline_second_derivatives(samples, fps);
    let h = T::from_config(1.0 / fps);
    let six = T::from_config(6.0);
    let span = (n - 1) as f64 / fps;
    let m = (span * target_fs + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let t = (j as f64 / target_fs).min(span);
        let i = ((t * fps) as usize).min(n - 2);
        let t_lo = T::from_config(i as f64 / fps);
        let t = T::from_config(t);
        let a = t_lo + h - t; // distance to the right knot
        let b = t - t_lo; // distance from the left knot
        let value = second[i] * a * a * a / (six * h)
            + second[i + 1] * b * b * b / (six * h)
            + (samples[i] / h - second[i] * h / six) * a
            + (samples[i + 1] / h - second[i + 1] * h / six) * b;
        out.push(value);
    }
    Ok(out)
}

/// Second derivatives of the natural cubic spline (zero at both ends),
/// from the standard tridiagonal system solved by the Thomas algorithm.
fn natural_spline_second_derivatives<T: Scalar>(samples: &[T], fps: f64) -> Vec<T> {
    let n = samples.len();
    let h = T::from_config(1.0 / fps);
    let mut m = vec![T::zero(); n];
    if n < 3 {
        return m;
    }
    let k = n - 2; // interior unknowns
    let diag_val = T::from_config(2.0 / 3.0) * h;
    let off_val = h / T::from_config(6.0);
    let mut diag = vec![diag_val; k];
    let mut rhs: Vec<T> = (1..n - 1)
        .map(|i| (samples[i + 1] - samples[i] - (samples[i] - samples[i - 1])) / h)
        .collect();
    for i in 1..k {
        let factor = off_val / diag[i - 1];
        let prev = rhs[i - 1];
        diag[i] -= factor * off_val;
        rhs[i] -= factor * prev;
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for i in (0..k - 1).rev() {
        m[i + 1] = (rhs[i] - off_val * m[i + 2]) / diag[i];
    }
    m
}

/// Biased normalized autocorrelation `r[l] = Σ x[t]x[t+l] / Σ x[t]²` of the
/// mean-subtracted series, for lags `0..=max_lag`. The biased form damps
/// larger lags, which keeps period multiples from outranking the true
/// period.
fn autocorrelation<T: Scalar>(samples: &[T], max_lag: usize) -> Vec<T> {
    let n = samples.len();
    let mean = samples.iter().copied().sum::<T>() / T::from_config(n as f64);
    let x: Vec<T> = samples.iter().map(|&v| v - mean).collect();
    let r0 = x.iter().map(|&v| v * v).sum::<T>();
    let mut r = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag.min(n - 1) {
        let mut acc = T::zero();
        for t in 0..n - lag {
            acc += x[t] * x[t + lag];
        }
        r.push(acc / r0);
    }
    r
}

/// Estimates heart rate from a waveform via the resample-and-autocorrelate
/// scheme. The peak lag is refined with a parabolic fit over the three
/// points around the peak; the estimate is rejected when the peak value
/// falls below `cfg.min_confidence`.
pub fn estimate_hr<T: Scalar>(
    waveform: &FusedWaveform<T>,
    cfg: &CardiacConfig,
) -> Result<HeartRateEstimate<T>> {
    estimate_hr_series(&waveform.samples, waveform.fps, cfg)
}

/// [`estimate_hr`] on a bare sample series.
pub fn estimate_hr_series<T: Scalar>(
    samples: &[T],
    fps: f64,
    cfg: &CardiacConfig,
) -> Result<HeartRateEstimate<T>> {
    cfg.validate()?;
    if samples.len() < 4 {
        return Err(Error::InvalidInput(
            "waveform too short for heart-rate estimation".into(),
        ));
    }
    let duration = (samples.len() - 1) as f64 / fps;
    if duration < 2.0 / cfg.hr_min {
        return Err(Error::InvalidInput(format!(
            "waveform spans {duration:.2} s; need at least two periods at the \
             lower heart-rate bound ({:.2} s)",
            2.0 / cfg.hr_min
        )));
    }

    let fs = cfg.resample_fs;
    let y = resample_cubic(samples, fps, fs)?;
    let m = y.len();
    let ss = {
        let mean = y.iter().copied().sum::<T>() / T::from_config(m as f64);
        y.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>()
    };
    if !(ss > T::zero()) {
        return Err(Error::NoEstimate("zero-variance waveform".into()));
    }

    let lag_min = ((fs / cfg.hr_max).ceil() as usize).max(1);
    let lag_max = ((fs / cfg.hr_min).floor() as usize).min(m.saturating_sub(2));
    if lag_min > lag_max {
        return Err(Error::NoEstimate(
            "physiological lag window is empty at this length".into(),
        ));
    }
    let r = autocorrelation(&y, lag_max + 1);

    let peak_lag = match cfg.peak_rule {
        PeakRule::GlobalMax => (lag_min..=lag_max)
            .max_by(|&a, &b| r[a].partial_cmp(&r[b]).unwrap().then(b.cmp(&a)))
            .unwrap(),
        PeakRule::FirstLocalMax => {
            let found = (lag_min..=lag_max)
                .find(|&l| l >= 1 && l + 1 < r.len() && r[l] >= r[l - 1] && r[l] >= r[l + 1]);
            match found {
                Some(l) => l,
                None => {
                    return Err(Error::NoEstimate(
                        "no local autocorrelation peak in the physiological lag range".into(),
                    ))
                }
            }
        }
    };

    // Parabolic sub-sample refinement across the three points around the
    // peak; skipped when the peak sits at the edge of the computed range.
    let (refined_lag, refined_value) = if peak_lag >= 1 && peak_lag + 1 < r.len() {
        let (rm, r0, rp) = (r[peak_lag - 1], r[peak_lag], r[peak_lag + 1]);
        let denom = rm - T::from_config(2.0) * r0 + rp;
        if denom < T::zero() {
            let half = T::from_config(0.5);
            let delta = (half * (rm - rp) / denom)
                .max(-half)
                .min(half);
            let value = r0 - T::from_config(0.25) * (rm - rp) * delta;
            (T::from_config(peak_lag as f64) + delta, value)
        } else {
            (T::from_config(peak_lag as f64), r0)
        }
    } else {
        (T::from_config(peak_lag as f64), r[peak_lag])
    };

    let confidence = refined_value.max(-T::one()).min(T::one());
    if confidence < T::from_config(cfg.min_confidence) {
        return Err(Error::NoEstimate(format!(
            "autocorrelation peak {confidence:.3} below confidence threshold {}",
            cfg.min_confidence
        )));
    }
    let bpm = T::from_config(60.0 * fs) / refined_lag;
    Ok(HeartRateEstimate {
        bpm,
        delta_t_samples: refined_lag,
        resample_fs: fs,
        confidence,
    })
}
