//! Synthetic scene generation with known ground truth: dicrotic pulse
//! trains modulating patch intensities, illumination drift, per-pixel
//! Gaussian noise, and step-edge structures. Generation is seeded and
//! bit-reproducible; scenes stand in for recorded data in the test and
//! acceptance suites.

use std::collections::HashSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FrameSequence;
use crate::io::{write_fseq, write_waveform_csv};

const HR_GEN_MIN_BPM: f64 = 20.0;
const HR_GEN_MAX_BPM: f64 = 300.0;

/// Pixel-space rectangle, `row0/col0` inclusive origin plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PixelRect {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.row0 && r < self.row0 + self.rows && c >= self.col0 && c < self.col0 + self.cols
    }

    fn validate(&self, rows: usize, cols: usize, what: &str) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidInput(format!("{what}: empty rectangle")));
        }
        if self.row0 + self.rows > rows || self.col0 + self.cols > cols {
            return Err(Error::InvalidInput(format!(
                "{what}: rectangle exceeds the {rows}x{cols} scene"
            )));
        }
        Ok(())
    }
}

/// One extra inter-beat delay inserted before the given beat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrhythmiaEvent {
    pub beat_index: usize,
    pub extra_delay_s: f64,
}

/// Dicrotic pulse-train parameters. The waveform is the unit-amplitude
/// normalization of `sin(2πp) + d·sin(4πp + φ)` over beat phase `p`; during
/// an inserted delay the waveform holds the beat-boundary value, which the
/// periodic shape makes continuous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PulseParams {
    pub hr_bpm: f64,
    /// First-harmonic weight `d` (dicrotic relative amplitude).
    pub dicrotic_rel: f64,
    /// First-harmonic phase `φ` in radians.
    pub harmonic_phase: f64,
    pub arrhythmia: Vec<ArrhythmiaEvent>,
}

impl Default for PulseParams {
    fn default() -> Self {
        Self {
            hr_bpm: 72.0,
            dicrotic_rel: 0.3,
            harmonic_phase: std::f64::consts::FRAC_PI_4,
            arrhythmia: Vec::new(),
        }
    }
}

/// One pulsatile patch: a pixel mask, its pulse train, and the pulsatile
/// amplitude as a fraction of the baseline intensity (AC/DC ratio).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub mask: PixelRect,
    pub pulse: PulseParams,
    pub amplitude_rel: f64,
}

/// Step-intensity ridge: baseline multiplied by `intensity_scale` inside
/// the rectangle, creating a high-gradient structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub rect: PixelRect,
    pub intensity_scale: f64,
}

/// Full description of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub fps: f64,
    pub duration_s: f64,
    pub baseline_intensity: f64,
    #[serde(default)]
    pub patches: Vec<PatchSpec>,
    /// Per-pixel Gaussian noise SD as a fraction of the baseline.
    #[serde(default)]
    pub noise_sd_rel: f64,
    /// Multiplicative illumination drift amplitude (fraction of baseline).
    #[serde(default)]
    pub drift_amp_rel: f64,
    #[serde(default = "default_drift_freq")]
    pub drift_freq_hz: f64,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    pub seed: u64,
}

fn default_drift_freq() -> f64 {
    0.05
}

impl SceneSpec {
    fn n_frames(&self) -> usize {
        (self.duration_s * self.fps).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidInput("scene dims must be positive".into()));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::InvalidInput("fps must be positive".into()));
        }
        if self.n_frames() < 2 {
            return Err(Error::InvalidInput(
                "duration must cover at least 2 frames".into(),
            ));
        }
        if !(self.baseline_intensity > 0.0) {
            return Err(Error::InvalidInput("baseline intensity must be positive".into()));
        }
        if !(self.noise_sd_rel >= 0.0 && self.noise_sd_rel.is_finite()) {
            return Err(Error::InvalidInput("noise SD must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.drift_amp_rel) {
            return Err(Error::InvalidInput(
                "drift amplitude must lie in [0, 1)".into(),
            ));
        }
        for (i, patch) in self.patches.iter().enumerate() {
            patch.mask.validate(self.rows, self.cols, &format!("patch {i}"))?;
            if !(patch.amplitude_rel > 0.0 && patch.amplitude_rel < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "patch {i}: pulsatile amplitude must lie in (0, 1)"
                )));
            }
            let hr = patch.pulse.hr_bpm;
            if !(HR_GEN_MIN_BPM..=HR_GEN_MAX_BPM).contains(&hr) {
                return Err(Error::InvalidInput(format!(
                    "patch {i}: heart rate {hr} bpm outside generator bounds \
                     [{HR_GEN_MIN_BPM}, {HR_GEN_MAX_BPM}]"
                )));
            }
            if patch.pulse.dicrotic_rel < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "patch {i}: dicrotic amplitude must be non-negative"
                )));
            }
            if patch.pulse.arrhythmia.iter().any(|e| e.extra_delay_s < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "patch {i}: arrhythmia delays must be non-negative"
                )));
            }
        }
        for (i, edge) in self.edges.iter().enumerate() {
            edge.rect.validate(self.rows, self.cols, &format!("edge {i}"))?;
            if !(edge.intensity_scale > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "edge {i}: intensity scale must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// Ground truth for one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTruth {
    pub waveform: Vec<f64>,
    pub fps: f64,
    pub beat_onsets_s: Vec<f64>,
    pub mask: PixelRect,
    pub hr_bpm: f64,
}

/// Ground truth for a whole scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub patches: Vec<PatchTruth>,
}

/// Unit-amplitude dicrotic shape over beat phase in [0, 1).
struct PulseShape {
    dicrotic: f64,
    phase: f64,
    norm: f64,
}

impl PulseShape {
    fn new(params: &PulseParams) -> Self {
        let raw = |p: f64| {
            (2.0 * std::f64::consts::PI * p).sin()
                + params.dicrotic_rel
                    * (4.0 * std::f64::consts::PI * p + params.harmonic_phase).sin()
        };
        let norm = (0..4096)
            .map(|i| raw(i as f64 / 4096.0).abs())
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        Self {
            dicrotic: params.dicrotic_rel,
            phase: params.harmonic_phase,
            norm,
        }
    }

    fn at(&self, p: f64) -> f64 {
        ((2.0 * std::f64::consts::PI * p).sin()
            + self.dicrotic * (4.0 * std::f64::consts::PI * p + self.phase).sin())
            / self.norm
    }
}

fn build_pulse(params: &PulseParams, mask: PixelRect, n: usize, fps: f64) -> PatchTruth {
    let shape = PulseShape::new(params);
    let t_beat = 60.0 / params.hr_bpm;
    let duration = n as f64 / fps;
    let delay_before = |beat: usize| -> f64 {
        params
            .pulse_delays(beat)
    };
    let mut onsets = Vec::new();
    let mut t = delay_before(0);
    let mut beat = 0usize;
    while t < duration {
        onsets.push(t);
        beat += 1;
        t += t_beat + delay_before(beat);
    }
    let hold = shape.at(0.0);
    let mut waveform = Vec::with_capacity(n);
    let mut bi = 0usize;
    for i in 0..n {
        let t = i as f64 / fps;
        while bi + 1 < onsets.len() && onsets[bi + 1] <= t {
            bi += 1;
        }
        let v = if onsets.is_empty() || t < onsets[0] {
            hold
        } else {
            let p = (t - onsets[bi]) / t_beat;
            if p < 1.0 {
                shape.at(p)
            } else {
                hold
            }
        };
        waveform.push(v);
    }
    PatchTruth {
        waveform,
        fps,
        beat_onsets_s: onsets,
        mask,
        hr_bpm: params.hr_bpm,
    }
}

impl PulseParams {
    fn pulse_delays(&self, beat: usize) -> f64 {
        self.arrhythmia
            .iter()
            .filter(|e| e.beat_index == beat)
            .map(|e| e.extra_delay_s)
            .sum()
    }
}

/// Generates a scene and its ground truth.
///
/// Pixel intensity is
/// `baseline · edge_scale · (1 - Σ a_p·w_p(t)) · (1 + drift(t)) + noise`,
/// matching the reflectance-decreases-with-blood-volume convention. Noise
/// draws happen in a fixed frame-major, row-major order from a ChaCha8
/// stream, so identical specs produce identical bytes.
pub fn generate_scene(spec: &SceneSpec) -> Result<(FrameSequence<f64>, SceneTruth)> {
    spec.validate()?;
    let n = spec.n_frames();
    let rows = spec.rows;
    let cols = spec.cols;

    let truths: Vec<PatchTruth> = spec
        .patches
        .iter()
        .map(|p| build_pulse(&p.pulse, p.mask, n, spec.fps))
        .collect();

    let mut base = vec![spec.baseline_intensity; rows * cols];
    for edge in &spec.edges {
        for r in edge.rect.row0..edge.rect.row0 + edge.rect.rows {
            for c in edge.rect.col0..edge.rect.col0 + edge.rect.cols {
                base[r * cols + c] *= edge.intensity_scale;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0f64, 1.0).expect("unit normal");
    let noise_sd = spec.noise_sd_rel * spec.baseline_intensity;

    let mut data = Vec::with_capacity(n * rows * cols);
    for t in 0..n {
        let drift = 1.0
            + spec.drift_amp_rel
                * (2.0 * std::f64::consts::PI * spec.drift_freq_hz * t as f64 / spec.fps).sin();
        for r in 0..rows {
            for c in 0..cols {
                let mut modulation = 1.0;
                for (patch, truth) in spec.patches.iter().zip(&truths) {
                    if patch.mask.contains(r, c) {
                        modulation -= patch.amplitude_rel * truth.waveform[t];
                    }
                }
                let mut v = base[r * cols + c] * modulation * drift;
                if noise_sd > 0.0 {
                    v += noise_sd * normal.sample(&mut rng);
                }
                data.push(v.max(0.0));
            }
        }
    }
    let frames = FrameSequence::new(data, n, rows, cols, spec.fps, "synthetic")?;
    Ok((frames, SceneTruth { patches: truths }))
}

/// Manifest describing a written cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub scenes: Vec<SceneEntry>,
}

/// Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub name: String,
    pub fseq: String,
    pub fps: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub hr_bpm: Vec<f64>,
    pub truth: Vec<String>,
    pub beats: Vec<String>,
    pub masks: Vec<String>,
}

/// Generates every scene and writes FSEQ files, per-patch ground-truth
/// CSVs, beat-onset CSVs, mask grids, and `manifest.json` into `dir`.
pub fn cohort(specs: &[SceneSpec], dir: &Path) -> Result<CohortManifest> {
    if specs.is_empty() {
        return Err(Error::InvalidInput("cohort needs at least one scene".into()));
    }
    let mut names = HashSet::new();
    for spec in specs {
        if !names.insert(spec.name.as_str()) {
            return Err(Error::InvalidInput(format!(
                "duplicate scene name {:?}",
                spec.name
            )));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut entries = Vec::with_capacity(specs.len());
    for spec in specs {
        let (frames, truth) = generate_scene(spec)?;
        let fseq_name = format!("{}.fseq", spec.name);
        write_fseq(&dir.join(&fseq_name), &frames)?;

        let mut truth_files = Vec::new();
        let mut beat_files = Vec::new();
        let mut mask_files = Vec::new();
        let mut hrs = Vec::new();
        for (i, patch) in truth.patches.iter().enumerate() {
            let truth_name = format!("{}.patch{i}.truth.csv", spec.name);
            write_waveform_csv(&dir.join(&truth_name), &patch.waveform, patch.fps)?;
            let beats_name = format!("{}.patch{i}.beats.csv", spec.name);
            write_beats_csv(&dir.join(&beats_name), &patch.beat_onsets_s)?;
            let mask_name = format!("{}.patch{i}.mask.csv", spec.name);
            write_mask_csv(&dir.join(&mask_name), &patch.mask, spec.rows, spec.cols)?;
            truth_files.push(truth_name);
            beat_files.push(beats_name);
            mask_files.push(mask_name);
            hrs.push(patch.hr_bpm);
        }
        entries.push(SceneEntry {
            name: spec.name.clone(),
            fseq: fseq_name,
            fps: spec.fps,
            duration_s: spec.duration_s,
            seed: spec.seed,
            hr_bpm: hrs,
            truth: truth_files,
            beats: beat_files,
            masks: mask_files,
        });
    }
    let manifest = CohortManifest { scenes: entries };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidInput(format!("manifest serialization: {e}")))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<CohortManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        offset: 0,
        reason: e.to_string(),
    })
}

fn write_beats_csv(path: &Path, onsets: &[f64]) -> Result<()> {
    let mut text = String::from("beat,onset_s\n");
    for (i, t) in onsets.iter().enumerate() {
        text.push_str(&format!("{i},{t}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_mask_csv(path: &Path, mask: &PixelRect, rows: usize, cols: usize) -> Result<()> {
    let mut text = String::new();
    for r in 0..rows {
        let row: Vec<&str> = (0..cols)
            .map(|c| if mask.contains(r, c) { "1" } else { "0" })
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Standard test scene: a 36x36-pixel frame at 60 fps; one 18x18 pulsatile
/// patch spanning a 3x3 block of 6x6 regions, so the patch keeps an
/// interior region whose whole neighbourhood is pulsatile.
fn standard_scene(name: &str, seed: u64) -> SceneSpec {
    SceneSpec {
        name: name.into(),
        rows: 36,
        cols: 36,
        fps: 60.0,
        duration_s: 12.0,
        baseline_intensity: 1000.0,
        patches: vec![PatchSpec {
            mask: PixelRect {
                row0: 6,
                col0: 6,
                rows: 18,
                cols: 18,
            },
            pulse: PulseParams::default(),
            amplitude_rel: 0.01,
        }],
        noise_sd_rel: 0.02,
        drift_amp_rel: 0.01,
        drift_freq_hz: 0.05,
        edges: vec![EdgeSpec {
            rect: PixelRect {
                row0: 0,
                col0: 30,
                rows: 36,
                cols: 6,
            },
            intensity_scale: 1.5,
        }],
        seed,
    }
}

/// Cohort of scenes with heart rates evenly covering `[hr_lo, hr_hi]` bpm.
pub fn cohort_specs(count: usize, hr_lo: f64, hr_hi: f64, seed: u64) -> Vec<SceneSpec> {
    (0..count)
        .map(|k| {
            let frac = if count > 1 {
                k as f64 / (count - 1) as f64
            } else {
                0.0
            };
            let mut spec = standard_scene(&format!("scene_{k:02}"), seed.wrapping_add(k as u64));
            spec.patches[0].pulse.hr_bpm = hr_lo + (hr_hi - hr_lo) * frac;
            spec
        })
        .collect()
}

/// Noiseless, driftless, edge-free single-patch scene at 72 bpm.
pub fn clean_scene_spec(name: &str, seed: u64) -> SceneSpec {
    let mut spec = standard_scene(name, seed);
    spec.duration_s = 16.0;
    spec.noise_sd_rel = 0.0;
    spec.drift_amp_rel = 0.0;
    spec.edges.clear();
    spec
}

/// Scene with no pulsatile content at all: noise, drift, and edges only.
pub fn noise_scene_spec(name: &str, seed: u64) -> SceneSpec {
    let mut spec = standard_scene(name, seed);
    spec.patches.clear();
    spec
}

/// Low-noise 72 bpm scene with one 0.4 s delay inserted before beat 7.
pub fn arrhythmia_scene_spec(name: &str, seed: u64) -> SceneSpec {
    let mut spec = standard_scene(name, seed);
    spec.duration_s = 16.0;
    spec.noise_sd_rel = 0.005;
    spec.drift_amp_rel = 0.0;
    spec.edges.clear();
    spec.patches[0].pulse.arrhythmia = vec![ArrhythmiaEvent {
        beat_index: 7,
        extra_delay_s: 0.4,
    }];
    spec
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_generation_is_bit_identical() {
        let spec = standard_scene("det", 42);
        let (a, _) = generate_scene(&spec).unwrap();
        let (b, _) = generate_scene(&spec).unwrap();
        assert_eq!(a.data(), b.data());
        let mut other = spec;
        other.seed = 43;
        let (c, _) = generate_scene(&other).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn truth_has_unit_amplitude_and_zero_mean_over_whole_beats() {
        let params = PulseParams::default();
        let mask = PixelRect {
            row0: 0,
            col0: 0,
            rows: 1,
            cols: 1,
        };
        // 72 bpm at 60 fps: one beat is exactly 50 samples.
        let truth = build_pulse(&params, mask, 600, 60.0);
        let max = truth.waveform.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((max - 1.0).abs() < 1e-3, "peak = {max}");
        let beats = 12 * 50;
        let mean: f64 = truth.waveform[..beats].iter().sum::<f64>() / beats as f64;
        assert!(mean.abs() < 1e-10, "mean = {mean}");
    }

    #[test]
    fn arrhythmia_shifts_onsets_exactly() {
        let params = PulseParams {
            hr_bpm: 72.0,
            arrhythmia: vec![ArrhythmiaEvent {
                beat_index: 7,
                extra_delay_s: 0.4,
            }],
            ..PulseParams::default()
        };
        let mask = PixelRect {
            row0: 0,
            col0: 0,
            rows: 1,
            cols: 1,
        };
        let truth = build_pulse(&params, mask, 16 * 60, 60.0);
        let t_beat = 60.0 / 72.0;
        let onsets = &truth.beat_onsets_s;
        assert!(onsets.len() > 9);
        for k in 1..onsets.len() {
            let interval = onsets[k] - onsets[k - 1];
            let expected = if k == 7 { t_beat + 0.4 } else { t_beat };
            assert!(
                (interval - expected).abs() < 1e-12,
                "interval {k} = {interval}, expected {expected}"
            );
        }
    }

    #[test]
    fn patch_modulation_appears_in_frames() {
        let mut spec = standard_scene("mod", 1);
        spec.noise_sd_rel = 0.0;
        spec.drift_amp_rel = 0.0;
        spec.edges.clear();
        let (frames, truth) = generate_scene(&spec).unwrap();
        let w = &truth.patches[0].waveform;
        // Inside the patch the intensity is baseline*(1 - a*w); outside it
        // stays at baseline.
        for t in [0usize, 13, 200] {
            let inside = frames.value(t, 10, 10);
            let expect = 1000.0 * (1.0 - 0.01 * w[t]);
            assert!((inside - expect).abs() < 1e-9);
            assert!((frames.value(t, 30, 3) - 1000.0).abs() < 1e-9);
        }
    }

    #[test]
    fn out_of_bounds_mask_rejected() {
        let mut spec = standard_scene("oob", 1);
        spec.patches[0].mask.col0 = 30;
        assert!(generate_scene(&spec).is_err());
    }

    #[test]
    fn cohort_writes_files_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut specs = cohort_specs(3, 48.0, 100.0, 9);
        // Shrink for test speed.
        for s in &mut specs {
            s.duration_s = 4.0;
        }
        let manifest = cohort(&specs, dir.path()).unwrap();
        assert_eq!(manifest.scenes.len(), 3);
        assert!((manifest.scenes[0].hr_bpm[0] - 48.0).abs() < 1e-12);
        assert!((manifest.scenes[2].hr_bpm[0] - 100.0).abs() < 1e-12);
        for entry in &manifest.scenes {
            assert!(dir.path().join(&entry.fseq).exists());
            for f in entry.truth.iter().chain(&entry.beats).chain(&entry.masks) {
                assert!(dir.path().join(f).exists(), "{f} missing");
            }
        }
        let loaded = read_manifest(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(loaded, manifest);
    }

    #[test]
    fn cohort_rejects_empty_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        assert!(cohort(&[], dir.path()).is_err());
        let mut specs = cohort_specs(2, 60.0, 80.0, 3);
        specs[1].name = specs[0].name.clone();
        assert!(cohort(&specs, dir.path()).is_err());
    }
}
