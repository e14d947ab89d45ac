//! Normalized spectral power and the two spectral priors (harmonic
//! strength, off-band noise peak).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::config::{NoisePeakMode, SpectralConfig, Taper};
use crate::error::{Error, Result};
use crate::region::RegionSignal;
use crate::scalar::Scalar;

/// Per-region spectral summary.
///
/// `gamma` is the normalized 0-DC power distribution over the
/// positive-frequency bins in `freqs` (DC excluded, Nyquist included for
/// even lengths). `energy` is the full-spectrum power sum divided by the
/// transform length; it equals the time-domain energy of the transformed
/// (mean-subtracted, tapered) signal, which the tests check against an
/// independent time-domain sum.
///
/// A zero-variance input produces a degenerate summary: empty `gamma`,
/// `h = 0`, `q = 1` (maximally untrusted), `degenerate = true`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary<T> {
    pub region_id: usize,
    pub gamma: Vec<T>,
    pub freqs: Vec<T>,
    pub f_star: T,
    pub h: T,
    pub q: T,
    pub energy: T,
    pub degenerate: bool,
}

/// In-range bins whose power falls below this fraction of the global peak
/// are treated as empty when locating the fundamental, so rounding-level
/// leakage from a strong out-of-band component cannot masquerade as
/// heart-rate mass.
const F_STAR_MASS_REL: f64 = 1e-6;

fn hann<T: Scalar>(n: usize) -> Vec<T> {
    let half = T::from_config(0.5);
    let step = T::from_config(2.0) * T::PI() / T::from_config(n as f64);
    (0..n)
        .map(|i| half * (T::one() - (step * T::from_config(i as f64)).cos()))
        .collect()
}

fn degenerate_summary<T: Scalar>(region_id: usize) -> SpectralSummary<T> {
    SpectralSummary {
        region_id,
        gamma: Vec::new(),
        freqs: Vec::new(),
        f_star: T::zero(),
        h: T::zero(),
        q: T::one(),
        energy: T::zero(),
        degenerate: true,
    }
}

/// Bin membership in a half-open band `[low, high)`.
fn in_band<T: Scalar>(f: T, low: T, high: T) -> bool {
    f >= low && f < high
}

/// True when bin `f` lies in the fundamental or first-harmonic band around
/// `f_star`. Overlapping bands count membership once.
fn in_harmonic_bands<T: Scalar>(f: T, f_star: T, delta_f: T) -> bool {
    let two = T::from_config(2.0);
    in_band(f, f_star - delta_f, f_star + delta_f)
        || in_band(f, two * f_star - delta_f, two * f_star + delta_f)
}

/// Computes the normalized 0-DC spectral power distribution of a region
/// signal, plus the peak frequency `f_star`.
///
/// `f_star` is the strongest bin inside the physiological heart-rate range
/// when that range holds any mass, otherwise the global argmax; this keeps a
/// strong out-of-band interferer from silently becoming the fundamental.
/// `h` and `q` are left at their degenerate defaults; see [`summarize`].
pub fn spectral_power<T: Scalar>(
    signal: &RegionSignal<T>,
    cfg: &SpectralConfig,
) -> Result<SpectralSummary<T>> {
    cfg.validate()?;
    let n = signal.samples.len();
    if n < 8 {
        return Err(Error::InvalidInput(format!(
            "spectral analysis needs at least 8 samples, got {n}"
        ))
        .for_region(signal.region_id));
    }
    let mean = signal.samples.iter().copied().sum::<T>() / T::from_config(n as f64);
    let mut centered: Vec<T> = signal.samples.iter().map(|&v| v - mean).collect();
    let sum_sq = centered.iter().map(|&v| v * v).sum::<T>();
    if !(sum_sq > T::zero()) {
        return Ok(degenerate_summary(signal.region_id));
    }
    if cfg.taper == Taper::Hann {
        for (v, w) in centered.iter_mut().zip(hann::<T>(n)) {
            *v *= w;
        }
    }

    let mut buf: Vec<Complex<T>> = centered
        .iter()
        .map(|&v| Complex::new(v, T::zero()))
        .collect();
    FftPlanner::<T>::new().plan_fft_forward(n).process(&mut buf);

    let full_power = buf.iter().map(|c| c.norm_sqr()).sum::<T>();
    let energy = full_power / T::from_config(n as f64);

    let n_bins = n / 2;
    let bin_width = T::from_config(signal.fps / n as f64);
    let mut power = Vec::with_capacity(n_bins);
    let mut freqs = Vec::with_capacity(n_bins);
    for (k, c) in buf.iter().enumerate().skip(1).take(n_bins) {
        power.push(c.norm_sqr());
        freqs.push(bin_width * T::from_config(k as f64));
    }
    let total = power.iter().copied().sum::<T>();
    if !(total > T::zero()) {
        return Ok(degenerate_summary(signal.region_id));
    }
    let gamma: Vec<T> = power.into_iter().map(|p| p / total).collect();

    let hr_min = T::from_config(cfg.hr_min);
    let hr_max = T::from_config(cfg.hr_max);
    let global_peak = gamma.iter().copied().fold(T::zero(), T::max);
    let mass_floor = global_peak * T::from_config(F_STAR_MASS_REL);
    let in_range_argmax = gamma
        .iter()
        .zip(&freqs)
        .enumerate()
        .filter(|(_, (g, f))| **f >= hr_min && **f <= hr_max && **g > mass_floor)
        .max_by(|(_, (a, _)), (_, (b, _))| a.partial_cmp(b).unwrap())
        .map(|(k, _)| k);
    let argmax = in_range_argmax.unwrap_or_else(|| {
        gamma
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .map(|(k, _)| k)
            .unwrap()
    });
    let f_star = freqs[argmax];

    Ok(SpectralSummary {
        region_id: signal.region_id,
        gamma,
        freqs,
        f_star,
        h: T::zero(),
        q: T::one(),
        energy,
        degenerate: false,
    })
}

/// Normalized power in the fundamental and first-harmonic bands, zero when
/// the fundamental lies outside the physiological heart-rate range.
pub fn harmonic_energy<T: Scalar>(summary: &SpectralSummary<T>, cfg: &SpectralConfig) -> T {
    if summary.degenerate {
        return T::zero();
    }
    let hr_min = T::from_config(cfg.hr_min);
    let hr_max = T::from_config(cfg.hr_max);
    if summary.f_star < hr_min || summary.f_star > hr_max {
        return T::zero();
    }
    let delta = T::from_config(cfg.delta_f);
    summary
        .gamma
        .iter()
        .zip(&summary.freqs)
        .filter(|(_, f)| in_harmonic_bands(**f, summary.f_star, delta))
        .map(|(g, _)| *g)
        .sum()
}

/// Off-band noise statistic.
///
/// The default is the maximum normalized power over bins outside the
/// fundamental and first-harmonic bands (a strong harmonic is evidence for
/// pulsatility, so the harmonic band is excluded from the noise search).
/// The constant-form alternative, one minus the fundamental-band mass, is
/// selectable via [`NoisePeakMode::FundamentalComplement`].
pub fn noise_peak<T: Scalar>(summary: &SpectralSummary<T>, cfg: &SpectralConfig) -> T {
    if summary.degenerate {
        return T::one();
    }
    let delta = T::from_config(cfg.delta_f);
    match cfg.noise_peak_mode {
        NoisePeakMode::OffBandMax => summary
            .gamma
            .iter()
            .zip(&summary.freqs)
            .filter(|(_, f)| !in_harmonic_bands(**f, summary.f_star, delta))
            .map(|(g, _)| *g)
            .fold(T::zero(), T::max),
        NoisePeakMode::FundamentalComplement => {
            let fundamental: T = summary
                .gamma
                .iter()
                .zip(&summary.freqs)
                .filter(|(_, f)| {
                    in_band(**f, summary.f_star - delta, summary.f_star + delta)
                })
                .map(|(g, _)| *g)
                .sum();
            (T::one() - fundamental).max(T::zero()).min(T::one())
        }
    }
}

/// Harmonic prior `exp(-(1-h)²/α_h)`, clamped away from underflow so the
/// prior stays strictly positive even at extreme tuning values.
pub fn harmonic_prior<T: Scalar>(h: T, cfg: &SpectralConfig) -> T {
    let d = T::one() - h;
    (-(d * d) / T::from_config(cfg.alpha_h))
        .exp()
        .max(T::min_positive_value())
}

/// Noise prior `exp(-q²/α_q)`, clamped away from underflow.
pub fn noise_prior<T: Scalar>(q: T, cfg: &SpectralConfig) -> T {
    (-(q * q) / T::from_config(cfg.alpha_q))
        .exp()
        .max(T::min_positive_value())
}

/// Full spectral summary with `h` and `q` filled in.
pub fn summarize<T: Scalar>(
    signal: &RegionSignal<T>,
    cfg: &SpectralConfig,
) -> Result<SpectralSummary<T>> {
    let mut summary = spectral_power(signal, cfg)?;
    if !summary.degenerate {
        summary.h = harmonic_energy(&summary, cfg);
        summary.q = noise_peak(&summary, cfg);
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone_signal(freqs_amps: &[(f64, f64)], fps: f64, n: usize) -> RegionSignal<f64> {
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / fps;
                freqs_amps
                    .iter()
                    .map(|(f, a)| a * (2.0 * std::f64::consts::PI * f * t).sin())
                    .sum()
            })
            .collect();
        RegionSignal {
            region_id: 0,
            samples,
            fps,
        }
    }

    fn rect_cfg() -> SpectralConfig {
        SpectralConfig {
            taper: Taper::None,
            ..SpectralConfig::default()
        }
    }

    /// Naive O(n²) DFT of the mean-subtracted signal, normalized over
    /// positive bins: the independent oracle for gamma.
    fn gamma_oracle(samples: &[f64], _fps: f64) -> Vec<f64> {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let x: Vec<f64> = samples.iter().map(|v| v - mean).collect();
        let mut power = Vec::new();
        for k in 1..=n / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            power.push(re * re + im * im);
        }
        let total: f64 = power.iter().sum();
        power.iter().map(|p| p / total).collect()
    }

    #[test]
    fn pure_tone_concentrates_in_one_bin() {
        // 1.2 Hz at 60 fps, 600 samples: exactly on bin 12.
        let sig = tone_signal(&[(1.2, 1.0)], 60.0, 600);
        let s = spectral_power(&sig, &rect_cfg()).unwrap();
        let bin_width = 60.0 / 600.0;
        let k = s
            .gamma
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .unwrap()
            .0;
        assert!((s.f_star - 1.2).abs() <= bin_width + 1e-12);
        let near: f64 = s
            .gamma
            .iter()
            .enumerate()
            .filter(|(i, _)| i.abs_diff(k) <= 1)
            .map(|(_, g)| g)
            .sum();
        assert!(near >= 0.99, "mass near peak = {near}");
    }

    #[test]
    fn hann_taper_keeps_mass_near_peak() {
        let sig = tone_signal(&[(1.2, 1.0)], 60.0, 600);
        let s = spectral_power(&sig, &SpectralConfig::default()).unwrap();
        let k = s
            .gamma
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .unwrap()
            .0;
        let near: f64 = s
            .gamma
            .iter()
            .enumerate()
            .filter(|(i, _)| i.abs_diff(k) <= 1)
            .map(|(_, g)| g)
            .sum();
        assert!(near >= 0.99, "mass near peak = {near}");
        assert!((s.f_star - 1.2).abs() <= 0.1 + 1e-12);
    }

    #[test]
    fn constant_signal_is_degenerate() {
        let sig = RegionSignal {
            region_id: 3,
            samples: vec![2.0; 64],
            fps: 60.0,
        };
        let s = summarize(&sig, &rect_cfg()).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.h, 0.0);
        assert_eq!(s.q, 1.0);
    }

    #[test]
    fn equal_tones_split_mass_evenly() {
        // 1.0 and 2.0 Hz on exact bins, rectangular taper; the oracle is a
        // direct DFT of the closed-form signal.
        let sig = tone_signal(&[(1.0, 1.0), (2.0, 1.0)], 60.0, 600);
        let s = spectral_power(&sig, &rect_cfg()).unwrap();
        let oracle = gamma_oracle(&sig.samples, 60.0);
        for (a, b) in s.gamma.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "gamma {a} vs oracle {b}");
        }
        let k1 = (1.0f64 / (60.0 / 600.0)).round() as usize - 1;
        let k2 = (2.0f64 / (60.0 / 600.0)).round() as usize - 1;
        assert!((s.gamma[k1] - 0.5).abs() < 1e-6);
        assert!((s.gamma[k2] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn gamma_sums_to_one_and_parseval_holds() {
        let sig = tone_signal(&[(1.3, 1.0), (2.9, 0.4), (7.1, 0.2)], 60.0, 512);
        let s = spectral_power(&sig, &rect_cfg()).unwrap();
        let sum: f64 = s.gamma.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        let mean = sig.samples.iter().sum::<f64>() / sig.samples.len() as f64;
        let time_energy: f64 = sig.samples.iter().map(|v| (v - mean) * (v - mean)).sum();
        assert!(
            (s.energy - time_energy).abs() < 1e-6 * time_energy,
            "spectral {} vs time {}",
            s.energy,
            time_energy
        );
    }

    #[test]
    fn amplitude_invariance() {
        let sig = tone_signal(&[(1.1, 1.0), (3.7, 0.5)], 60.0, 480);
        let scaled = RegionSignal {
            region_id: 0,
            samples: sig.samples.iter().map(|v| v * 37.5).collect(),
            fps: sig.fps,
        };
        let a = spectral_power(&sig, &rect_cfg()).unwrap();
        let b = spectral_power(&scaled, &rect_cfg()).unwrap();
        for (x, y) in a.gamma.iter().zip(&b.gamma) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_energy_of_pure_tone_is_high() {
        let sig = tone_signal(&[(1.2, 1.0)], 60.0, 600);
        let s = summarize(&sig, &rect_cfg()).unwrap();
        assert!(s.h >= 0.99, "h = {}", s.h);
        assert!(s.q <= 0.01, "q = {}", s.q);
    }

    #[test]
    fn out_of_range_fundamental_zeroes_h() {
        // All mass at 10 Hz: nothing in the heart-rate range, so the
        // fallback global argmax lands out of range and h collapses to 0.
        let sig = tone_signal(&[(10.0, 1.0)], 60.0, 600);
        let s = summarize(&sig, &rect_cfg()).unwrap();
        assert!((s.f_star - 10.0).abs() < 0.1 + 1e-12);
        assert_eq!(s.h, 0.0);
    }

    #[test]
    fn dicrotic_pulse_matches_band_sum_oracle() {
        // Fundamental plus first harmonic at 0.3 relative power plus weak
        // broadband noise; the oracle is a direct band sum over the
        // oracle-computed spectrum.
        let fps = 60.0;
        let n = 600;
        let mut sig = tone_signal(&[(1.2, 1.0), (2.4, 0.3f64.sqrt())], fps, n);
        let mut state = 0x12345678u64;
        for v in &mut sig.samples {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            *v += 0.1 * u; // roughly -20 dB
        }
        let cfg = rect_cfg();
        let s = summarize(&sig, &cfg).unwrap();
        let oracle_gamma = gamma_oracle(&sig.samples, fps);
        let bin_width = fps / n as f64;
        let f_star_oracle = {
            let (k, _) = oracle_gamma
                .iter()
                .enumerate()
                .filter(|(i, _)| {
                    let f = (i + 1) as f64 * bin_width;
                    f >= cfg.hr_min && f <= cfg.hr_max
                })
                .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                .unwrap();
            (k + 1) as f64 * bin_width
        };
        let oracle_h: f64 = oracle_gamma
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let f = (i + 1) as f64 * bin_width;
                (f >= f_star_oracle - 0.2 && f < f_star_oracle + 0.2)
                    || (f >= 2.0 * f_star_oracle - 0.2 && f < 2.0 * f_star_oracle + 0.2)
            })
            .map(|(_, g)| g)
            .sum();
        assert!((s.h - oracle_h).abs() <= 0.02, "h {} oracle {}", s.h, oracle_h);
    }

    #[test]
    fn noise_peak_sees_off_band_tone() {
        let sig = tone_signal(&[(1.2, 1.0), (4.0, 1.0)], 60.0, 600);
        let s = summarize(&sig, &rect_cfg()).unwrap();
        assert!((s.q - 0.5).abs() < 0.01, "q = {}", s.q);
    }

    #[test]
    fn literal_complement_mode() {
        let cfg = SpectralConfig {
            noise_peak_mode: NoisePeakMode::FundamentalComplement,
            ..rect_cfg()
        };
        let sig = tone_signal(&[(1.2, 1.0), (4.0, 1.0)], 60.0, 600);
        let s = summarize(&sig, &cfg).unwrap();
        // Half the mass sits at 4 Hz outside the fundamental band.
        assert!((s.q - 0.5).abs() < 0.01, "q = {}", s.q);
        let pure = tone_signal(&[(1.2, 1.0)], 60.0, 600);
        let sp = summarize(&pure, &cfg).unwrap();
        assert!(sp.q < 0.01);
    }

    #[test]
    fn prior_known_values_and_monotonicity() {
        let cfg = SpectralConfig {
            alpha_h: 1.0,
            alpha_q: 1.0,
            ..SpectralConfig::default()
        };
        assert_eq!(harmonic_prior(1.0, &cfg), 1.0);
        assert!((harmonic_prior(0.0, &cfg) - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(noise_prior(0.0, &cfg), 1.0);
        assert!((noise_prior(1.0, &cfg) - (-1.0f64).exp()).abs() < 1e-12);
        for alpha in [0.1, 0.5, 2.0] {
            let cfg = SpectralConfig {
                alpha_h: alpha,
                alpha_q: alpha,
                ..SpectralConfig::default()
            };
            assert!(harmonic_prior(0.9, &cfg) > harmonic_prior(0.5, &cfg));
            assert!(noise_prior(0.2, &cfg) > noise_prior(0.7, &cfg));
        }
    }

    #[test]
    fn h_plus_off_band_mass_bounded_by_one() {
        let sig = tone_signal(&[(1.2, 1.0), (3.1, 0.7), (5.5, 0.2)], 60.0, 512);
        let cfg = rect_cfg();
        let s = summarize(&sig, &cfg).unwrap();
        let off: f64 = s
            .gamma
            .iter()
            .zip(&s.freqs)
            .filter(|(_, f)| !in_harmonic_bands(**f, s.f_star, cfg.delta_f))
            .map(|(g, _)| g)
            .sum();
        assert!(s.h + off <= 1.0 + 1e-9);
    }

    #[test]
    fn short_signal_rejected() {
        let sig = RegionSignal {
            region_id: 0,
            samples: vec![1.0, 2.0, 1.0],
            fps: 60.0,
        };
        assert!(spectral_power(&sig, &rect_cfg()).is_err());
    }

    #[test]
    fn f32_instantiation_works() {
        let samples: Vec<f32> = (0..256)
            .map(|i| (2.0 * std::f32::consts::PI * 1.2 * i as f32 / 60.0).sin())
            .collect();
        let sig = RegionSignal {
            region_id: 0,
            samples,
            fps: 60.0,
        };
        let s = summarize(&sig, &SpectralConfig::default()).unwrap();
        let sum: f32 = s.gamma.iter().sum();
        assert!((sum - 1.0).abs() < 1e-5);
    }
}
