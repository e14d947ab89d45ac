//! Spatial-averaging baseline: the uniform-weight special case of fusion
//! over an explicit region-grid ROI, no anatomy detection involved.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::frame::{downsample_blockwise, to_absorbance, FrameSequence, RegionGrid};
use crate::fusion::{fuse, FusedWaveform, FusionDiagnostics, WindowDiagnostics};
use crate::region::{signals_from_absorbance, RegionSignal};
use crate::scalar::Scalar;

/// Region-grid rectangle over which the baseline averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoiSpec {
    FullFrame,
    Rect {
        row0: usize,
        col0: usize,
        rows: usize,
        cols: usize,
    },
}

impl RoiSpec {
    /// Region indices covered by the ROI on a `rows` x `cols` grid,
    /// row-major.
    fn region_indices(&self, grid_rows: usize, grid_cols: usize) -> Result<Vec<usize>> {
        let (r0, c0, nr, nc) = match *self {
            RoiSpec::FullFrame => (0, 0, grid_rows, grid_cols),
            RoiSpec::Rect {
                row0,
                col0,
                rows,
                cols,
            } => (row0, col0, rows, cols),
        };
        if nr == 0 || nc == 0 {
            return Err(Error::InvalidInput("empty ROI".into()));
        }
        if r0 + nr > grid_rows || c0 + nc > grid_cols {
            return Err(Error::InvalidInput(format!(
                "ROI {r0},{c0} + {nr}x{nc} exceeds the {grid_rows}x{grid_cols} region grid"
            )));
        }
        let mut out = Vec::with_capacity(nr * nc);
        for r in r0..r0 + nr {
            for c in c0..c0 + nc {
                out.push(r * grid_cols + c);
            }
        }
        Ok(out)
    }
}

/// What the per-frame spatial mean is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanMode {
    /// Average the detrended absorbance signals: exactly uniform-weight
    /// fusion, sharing the fusion code path. The default.
    Absorbance,
    /// Average raw intensities first, then convert and detrend; kept for
    /// fidelity against averaging-based pipelines. At small pulsatile
    /// fluctuations the two agree to first order.
    RawIntensity,
}

/// ROI-mean baseline waveform.
pub fn mean_ppg<T: Scalar>(
    frames: &FrameSequence<T>,
    roi: &RoiSpec,
    cfg: &PipelineConfig,
    mode: MeanMode,
) -> Result<FusedWaveform<T>> {
    cfg.validate()?;
    frames.validate_nonnegative()?;
    let grid = RegionGrid::new(cfg.block_rows, cfg.block_cols)?;
    let down = downsample_blockwise(frames, &grid)?;
    let indices = roi.region_indices(down.rows(), down.cols())?;

    match mode {
        MeanMode::Absorbance => {
            let (abs, clamped) = to_absorbance(&down, cfg.clamp_epsilon_rel)?;
            let all = signals_from_absorbance(&abs, &cfg.detrend)?;
            let signals: Vec<RegionSignal<T>> =
                indices.iter().map(|&i| all[i].clone()).collect();
            let uniform = T::one() / T::from_config(signals.len() as f64);
            let weights = vec![uniform; signals.len()];
            let mut fused = fuse(&signals, &weights)?;
            fused.diagnostics = FusionDiagnostics {
                clamped_samples: clamped,
                windows: vec![WindowDiagnostics {
                    start_sample: 0,
                    len: fused.samples.len(),
                    total_weight: 1.0,
                    n_regions_used: signals.len(),
                    degenerate_regions: 0,
                }],
            };
            Ok(fused)
        }
        MeanMode::RawIntensity => {
            let count = T::from_config(indices.len() as f64);
            let cols = down.cols();
            let raw: Vec<T> = (0..down.n_frames())
                .map(|t| {
                    let mut acc = T::zero();
                    for &i in &indices {
                        acc += down.value(t, i / cols, i % cols);
                    }
                    acc / count
                })
                .collect();
            let series = FrameSequence::new(raw, down.n_frames(), 1, 1, down.fps(), "")?;
            let (abs, clamped) = to_absorbance(&series, cfg.clamp_epsilon_rel)?;
            let signal = RegionSignal::from_raw(0, abs.data(), down.fps(), &cfg.detrend)?;
            let len = signal.samples.len();
            Ok(FusedWaveform {
                samples: signal.samples,
                fps: down.fps(),
                total_weight: T::one(),
                n_regions_used: indices.len(),
                diagnostics: FusionDiagnostics {
                    clamped_samples: clamped,
                    windows: vec![WindowDiagnostics {
                        start_sample: 0,
                        len,
                        total_weight: 1.0,
                        n_regions_used: indices.len(),
                        degenerate_regions: 0,
                    }],
                },
            })
        }
    }
}
