//! End-to-end pipeline behavior on synthetic scenes.

use pulsefusion::{
    arrhythmia_scene_spec, clean_scene_spec, cohort_specs, downsample_blockwise, estimate_hr,
    extract_pulse, extract_pulse_detailed, generate_scene, grid_search, lag_correlation, mean_ppg,
    noise_scene_spec, signals_from_absorbance, summarize, to_absorbance, tuning_objective, Error,
    FrameSequence, MeanMode, ParamGrid, PatchSpec, PipelineConfig, PixelRect, PulseParams,
    RegionGrid, RegionSignal, RoiSpec, SceneSpec,
};

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va.sqrt() * vb.sqrt())
}

#[test]
fn clean_scene_extraction_tracks_truth() {
    let spec = clean_scene_spec("clean", 11);
    let (frames, truth) = generate_scene(&spec).unwrap();
    let cfg = PipelineConfig::default();
    let fused = extract_pulse(&frames, &cfg).unwrap();
    assert_eq!(fused.samples.len(), frames.n_frames());
    let c = corr(&fused.samples, &truth.patches[0].waveform);
    assert!(c > 0.995, "corr = {c}");
    assert!(fused.total_weight > 0.0);
}

#[test]
fn noise_only_scene_fails_as_no_pulsatile_region() {
    let (frames, _) = generate_scene(&noise_scene_spec("noise", 5)).unwrap();
    let err = extract_pulse(&frames, &PipelineConfig::default()).unwrap_err();
    assert!(
        matches!(err, Error::NoPulsatileRegion(_)),
        "expected no-pulsatile-region, got {err:?}"
    );
}

#[test]
fn stronger_patch_receives_strictly_larger_weight() {
    // Two pulsatile patches whose amplitudes differ 10:1 at the same noise
    // floor; the combined posterior mass of the stronger patch must win.
    let mut spec = clean_scene_spec("two", 21);
    spec.noise_sd_rel = 0.002;
    spec.patches = vec![
        PatchSpec {
            mask: PixelRect {
                row0: 0,
                col0: 0,
                rows: 18,
                cols: 18,
            },
            pulse: PulseParams {
                hr_bpm: 66.0,
                ..PulseParams::default()
            },
            amplitude_rel: 0.01,
        },
        PatchSpec {
            mask: PixelRect {
                row0: 18,
                col0: 18,
                rows: 18,
                cols: 18,
            },
            pulse: PulseParams {
                hr_bpm: 90.0,
                ..PulseParams::default()
            },
            amplitude_rel: 0.001,
        },
    ];
    let (frames, _) = generate_scene(&spec).unwrap();
    let cfg = PipelineConfig::default();
    let (_, detail) = extract_pulse_detailed(&frames, &cfg).unwrap();
    let weight_of = |mask: &PixelRect| -> f64 {
        let mut acc = 0.0;
        for r in 0..detail.grid_rows {
            for c in 0..detail.grid_cols {
                // Region (r, c) covers pixels [6r, 6r+6) x [6c, 6c+6).
                if mask.contains(6 * r, 6 * c) {
                    acc += detail.weights[r * detail.grid_cols + c];
                }
            }
        }
        acc
    };
    let strong = weight_of(&spec.patches[0].mask);
    let weak = weight_of(&spec.patches[1].mask);
    assert!(
        strong > weak,
        "strong patch weight {strong} should exceed weak patch weight {weak}"
    );
}

#[test]
fn windowed_mode_covers_every_sample_and_recomputes_weights() {
    let spec = clean_scene_spec("windowed", 3);
    let (frames, truth) = generate_scene(&spec).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.fusion.window_seconds = Some(5.0);
    let fused = extract_pulse(&frames, &cfg).unwrap();
    assert_eq!(fused.samples.len(), frames.n_frames());
    // 16 s at 5 s windows: 3 windows, the last one holding the remainder.
    assert_eq!(fused.diagnostics.windows.len(), 3);
    let covered: usize = fused.diagnostics.windows.iter().map(|w| w.len).sum();
    assert_eq!(covered, frames.n_frames());
    for w in &fused.diagnostics.windows {
        assert!(w.total_weight > 0.0);
    }
    let c = corr(&fused.samples, &truth.patches[0].waveform);
    assert!(c > 0.99, "corr = {c}");
}

#[test]
fn fusion_beats_full_frame_baseline_on_a_noisy_scene() {
    let mut specs = cohort_specs(1, 72.0, 72.0, 400);
    specs[0].duration_s = 12.0;
    let (frames, truth) = generate_scene(&specs[0]).unwrap();
    let cfg = PipelineConfig::default();
    let fused = extract_pulse(&frames, &cfg).unwrap();
    let baseline = mean_ppg(&frames, &RoiSpec::FullFrame, &cfg, MeanMode::Absorbance).unwrap();
    let w = &truth.patches[0].waveform;
    let (rho_f, _) = lag_correlation(&fused.samples, w, 60.0, cfg.max_lag_s).unwrap();
    let (rho_b, _) = lag_correlation(&baseline.samples, w, 60.0, cfg.max_lag_s).unwrap();
    assert!(
        rho_f > rho_b,
        "fusion rho {rho_f} should beat baseline rho {rho_b}"
    );
}

#[test]
fn arrhythmia_scene_shows_delay_in_time_not_in_rate() {
    let spec = arrhythmia_scene_spec("arr", 19);
    let (frames, truth) = generate_scene(&spec).unwrap();
    let cfg = PipelineConfig::default();
    let fused = extract_pulse(&frames, &cfg).unwrap();
    let c = corr(&fused.samples, &truth.patches[0].waveform);
    assert!(c > 0.99, "corr = {c}");
    // The global autocorrelation rate stays near 72 bpm.
    let est = estimate_hr(&fused, &cfg.cardiac).unwrap();
    assert!((est.bpm - 72.0).abs() < 3.0, "bpm = {}", est.bpm);
}

#[test]
fn noise_null_harmonic_energy_sanity() {
    // With zero pulsatile amplitude, the regions' in-band harmonic mass
    // must be statistically indistinguishable from the no-signal null at
    // the 99% family level. All 36 regions are simultaneous null draws, so
    // the per-region quantile carries a Sidak correction: 0.99^(1/36).
    use rand::{Rng, SeedableRng};
    let (frames, _) = generate_scene(&noise_scene_spec("null", 77)).unwrap();
    let cfg = PipelineConfig::default();
    let grid = RegionGrid::new(6, 6).unwrap();
    let down = downsample_blockwise(&frames, &grid).unwrap();
    let (abs, _) = to_absorbance(&down, cfg.clamp_epsilon_rel).unwrap();
    let signals = signals_from_absorbance(&abs, &cfg.detrend).unwrap();
    let n = frames.n_frames();

    let trials = 4000;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xFEED);
    let mut null_h = Vec::with_capacity(trials);
    for _ in 0..trials {
        let noise: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let detrended = pulsefusion::detrend(&noise, &cfg.detrend).unwrap();
        let sig = RegionSignal {
            region_id: 0,
            samples: detrended,
            fps: 60.0,
        };
        null_h.push(summarize(&sig, &cfg.spectral).unwrap().h);
    }
    null_h.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = 0.99f64.powf(1.0 / signals.len() as f64);
    let idx = ((trials as f64 * q).ceil() as usize).min(trials - 1);
    let threshold = null_h[idx];

    for sig in &signals {
        let h = summarize(sig, &cfg.spectral).unwrap().h;
        assert!(
            h < threshold,
            "region {} h = {h} not below the noise-null family threshold {threshold}",
            sig.region_id
        );
    }
}

#[test]
fn grid_search_matches_exhaustive_reevaluation() {
    // Small scene, 3x3 grid over (alpha_h, alpha_q); the oracle re-runs the
    // extraction and scoring independently and takes the argmax itself.
    let spec = SceneSpec {
        name: "grid".into(),
        rows: 12,
        cols: 12,
        fps: 60.0,
        duration_s: 8.0,
        baseline_intensity: 500.0,
        patches: vec![PatchSpec {
            mask: PixelRect {
                row0: 2,
                col0: 2,
                rows: 6,
                cols: 6,
            },
            pulse: PulseParams::default(),
            amplitude_rel: 0.01,
        }],
        noise_sd_rel: 0.01,
        drift_amp_rel: 0.0,
        drift_freq_hz: 0.05,
        edges: vec![],
        seed: 31,
    };
    let (frames, _) = generate_scene(&spec).unwrap();
    let base = PipelineConfig {
        block_rows: 2,
        block_cols: 2,
        ..PipelineConfig::default()
    };
    let grid = ParamGrid {
        alpha_h: vec![0.1, 0.25, 1.0],
        alpha_q: vec![0.005, 0.01, 0.1],
        alpha_l: vec![1.0],
        radius: vec![1],
    };
    let result = grid_search(std::slice::from_ref(&frames), &grid, &base).unwrap();
    assert_eq!(result.table.len(), 9);

    let mut best_score = f64::NEG_INFINITY;
    let mut best_point = None;
    for &alpha_h in &grid.alpha_h {
        for &alpha_q in &grid.alpha_q {
            let mut cfg = base.clone();
            cfg.spectral.alpha_h = alpha_h;
            cfg.spectral.alpha_q = alpha_q;
            let waveform = extract_pulse(&frames, &cfg).unwrap();
            let score = tuning_objective(&waveform.samples, waveform.fps, &cfg.spectral);
            if score > best_score {
                best_score = score;
                best_point = Some((alpha_h, alpha_q));
            }
        }
    }
    let (bh, bq) = best_point.unwrap();
    assert_eq!(result.best.alpha_h, bh);
    assert_eq!(result.best.alpha_q, bq);
    assert!((result.objective - best_score).abs() <= 1e-9 * best_score.abs().max(1.0));

    // Enumeration order only matters for tie-breaking: reversing the value
    // lists leaves the winning point unchanged.
    let reversed = ParamGrid {
        alpha_h: grid.alpha_h.iter().rev().copied().collect(),
        alpha_q: grid.alpha_q.iter().rev().copied().collect(),
        alpha_l: grid.alpha_l.clone(),
        radius: grid.radius.clone(),
    };
    let result_rev = grid_search(std::slice::from_ref(&frames), &reversed, &base).unwrap();
    assert_eq!(result_rev.best.alpha_h, result.best.alpha_h);
    assert_eq!(result_rev.best.alpha_q, result.best.alpha_q);
}

#[test]
fn grid_search_singleton_and_all_excluded() {
    let spec = clean_scene_spec("single", 8);
    let (frames, _) = generate_scene(&spec).unwrap();
    let base = PipelineConfig::default();
    let singleton = ParamGrid {
        alpha_h: vec![0.5],
        alpha_q: vec![0.01],
        alpha_l: vec![1.0],
        radius: vec![1],
    };
    let result = grid_search(std::slice::from_ref(&frames), &singleton, &base).unwrap();
    assert_eq!(result.best.alpha_h, 0.5);
    assert_eq!(result.table.len(), 1);

    // Every point is excluded on a pulse-free scene.
    let (noise, _) = generate_scene(&noise_scene_spec("nopulse", 6)).unwrap();
    let err = grid_search(std::slice::from_ref(&noise), &singleton, &base).unwrap_err();
    assert!(err.is_no_signal(), "got {err:?}");
}

#[test]
fn baseline_equals_uniform_fusion_within_tolerance() {
    let mut specs = cohort_specs(1, 72.0, 72.0, 50);
    specs[0].duration_s = 8.0;
    let (frames, _) = generate_scene(&specs[0]).unwrap();
    let cfg = PipelineConfig::default();
    let wave = mean_ppg(&frames, &RoiSpec::FullFrame, &cfg, MeanMode::Absorbance).unwrap();

    let grid = RegionGrid::new(6, 6).unwrap();
    let down = downsample_blockwise(&frames, &grid).unwrap();
    let (abs, _) = to_absorbance(&down, cfg.clamp_epsilon_rel).unwrap();
    let signals = signals_from_absorbance(&abs, &cfg.detrend).unwrap();
    let uniform = vec![1.0 / signals.len() as f64; signals.len()];
    let fused = pulsefusion::fuse(&signals, &uniform).unwrap();
    let scale = fused
        .samples
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(1e-30);
    for (a, b) in wave.samples.iter().zip(&fused.samples) {
        assert!((a - b).abs() < 1e-9 * scale);
    }
}

#[test]
fn amplitude_stress_sweep() {
    // Pulsatile amplitude swept over a 25x range at a low noise floor; the
    // extraction must track the truth across the whole sweep.
    for (i, amp) in [0.002, 0.01, 0.05].into_iter().enumerate() {
        let mut spec = clean_scene_spec(&format!("amp_{i}"), 90 + i as u64);
        spec.duration_s = 10.0;
        spec.noise_sd_rel = 0.001;
        spec.patches[0].amplitude_rel = amp;
        let (frames, truth) = generate_scene(&spec).unwrap();
        let fused = extract_pulse(&frames, &PipelineConfig::default()).unwrap();
        let c = corr(&fused.samples, &truth.patches[0].waveform);
        assert!(c > 0.95, "amplitude {amp}: corr = {c}");
    }
}

#[test]
fn f32_pipeline_smoke() {
    // The whole pipeline is generic; run a small scene at single
    // precision.
    let spec = SceneSpec {
        name: "f32".into(),
        rows: 12,
        cols: 12,
        fps: 60.0,
        duration_s: 6.0,
        baseline_intensity: 100.0,
        patches: vec![PatchSpec {
            mask: PixelRect {
                row0: 0,
                col0: 0,
                rows: 6,
                cols: 6,
            },
            pulse: PulseParams::default(),
            amplitude_rel: 0.02,
        }],
        noise_sd_rel: 0.0,
        drift_amp_rel: 0.0,
        drift_freq_hz: 0.05,
        edges: vec![],
        seed: 1,
    };
    let (frames64, truth) = generate_scene(&spec).unwrap();
    let data32: Vec<f32> = frames64.data().iter().map(|&v| v as f32).collect();
    let frames32 = FrameSequence::<f32>::new(
        data32,
        frames64.n_frames(),
        frames64.rows(),
        frames64.cols(),
        frames64.fps(),
        "",
    )
    .unwrap();
    let cfg = PipelineConfig {
        block_rows: 2,
        block_cols: 2,
        ..PipelineConfig::default()
    };
    let fused = extract_pulse(&frames32, &cfg).unwrap();
    let fused64: Vec<f64> = fused.samples.iter().map(|&v| v as f64).collect();
    let c = corr(&fused64, &truth.patches[0].waveform);
    assert!(c > 0.99, "f32 corr = {c}");
}
