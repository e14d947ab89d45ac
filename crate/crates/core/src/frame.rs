//! Frame-sequence container, blockwise downsampling, and the
//! reflectance-to-absorbance transform.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ordered stack of single-channel intensity frames with sampling metadata.
///
/// Storage is time-major, row-major within each frame. The constructor
/// enforces finiteness, matching dimensions, `fps > 0` and at least two
/// frames; non-negativity is a property of *intensity* stacks and is checked
/// separately by [`FrameSequence::validate_nonnegative`], because the same
/// container carries absorbance values (which may be negative) further down
/// the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence<T> {
    data: Vec<T>,
    n_frames: usize,
    rows: usize,
    cols: usize,
    fps: f64,
    exposure_note: String,
}

impl<T: Scalar> FrameSequence<T> {
    pub fn new(
        data: Vec<T>,
        n_frames: usize,
        rows: usize,
        cols: usize,
        fps: f64,
        exposure_note: impl Into<String>,
    ) -> Result<Self> {
        if n_frames < 2 {
            return Err(Error::InvalidInput(format!(
                "a frame sequence needs at least 2 frames, got {n_frames}"
            )));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("frame dimensions must be positive".into()));
        }
        if data.len() != n_frames * rows * cols {
            return Err(Error::InvalidInput(format!(
                "sample count {} does not match {n_frames} frames of {rows}x{cols}",
                data.len()
            )));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::InvalidInput(format!("fps must be positive, got {fps}")));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite sample at flat index {pos}"
            )));
        }
        Ok(Self {
            data,
            n_frames,
            rows,
            cols,
            fps,
            exposure_note: exposure_note.into(),
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn exposure_note(&self) -> &str {
        &self.exposure_note
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// One frame as a row-major slice.
    pub fn frame(&self, t: usize) -> &[T] {
        let size = self.rows * self.cols;
        &self.data[t * size..(t + 1) * size]
    }

    pub fn value(&self, t: usize, r: usize, c: usize) -> T {
        self.data[(t * self.rows + r) * self.cols + c]
    }

    /// Checks the intensity invariant (all samples ≥ 0).
    pub fn validate_nonnegative(&self) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| *v < T::zero()) {
            return Err(Error::InvalidInput(format!(
                "negative intensity at flat index {pos}"
            )));
        }
        Ok(())
    }

    /// Temporal mean frame, accumulated in time order.
    pub fn mean_frame(&self) -> Vec<T> {
        let size = self.rows * self.cols;
        let mut mean = vec![T::zero(); size];
        for t in 0..self.n_frames {
            let frame = self.frame(t);
            for (m, v) in mean.iter_mut().zip(frame) {
                *m += *v;
            }
        }
        let n = T::from_config(self.n_frames as f64);
        for m in &mut mean {
            *m /= n;
        }
        mean
    }
}

/// Blockwise downsampling geometry: maps pixel frames onto a grid of
/// regions, one per full block. Trailing partial blocks are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionGrid {
    block_rows: usize,
    block_cols: usize,
}

impl RegionGrid {
    pub fn new(block_rows: usize, block_cols: usize) -> Result<Self> {
        if block_rows == 0 || block_cols == 0 {
            return Err(Error::InvalidConfig("block dims must be positive".into()));
        }
        Ok(Self {
            block_rows,
            block_cols,
        })
    }

    pub fn block_rows(&self) -> usize {
        self.block_rows
    }

    pub fn block_cols(&self) -> usize {
        self.block_cols
    }

    /// Region-grid dimensions for a frame of the given pixel size.
    pub fn region_dims(&self, frame_rows: usize, frame_cols: usize) -> (usize, usize) {
        (frame_rows / self.block_rows, frame_cols / self.block_cols)
    }

    /// Flat index of region `(r, c)` on a grid with `region_cols` columns.
    pub fn region_index(region_cols: usize, r: usize, c: usize) -> usize {
        r * region_cols + c
    }

    /// Inverse of [`RegionGrid::region_index`].
    pub fn region_coords(region_cols: usize, index: usize) -> (usize, usize) {
        (index / region_cols, index % region_cols)
    }
}

/// Replaces each block of pixels by its arithmetic mean; the time axis is
/// unchanged. Blocks that do not fit entirely inside the frame are dropped.
pub fn downsample_blockwise<T: Scalar>(
    frames: &FrameSequence<T>,
    grid: &RegionGrid,
) -> Result<FrameSequence<T>> {
    let (g_rows, g_cols) = grid.region_dims(frames.rows(), frames.cols());
    if g_rows == 0 || g_cols == 0 {
        return Err(Error::InvalidConfig(format!(
            "block {}x{} exceeds frame {}x{}",
            grid.block_rows(),
            grid.block_cols(),
            frames.rows(),
            frames.cols()
        )));
    }
    let block_count = T::from_config((grid.block_rows() * grid.block_cols()) as f64);
    let downsampled: Vec<Vec<T>> = (0..frames.n_frames())
        .into_par_iter()
        .map(|t| {
            let frame = frames.frame(t);
            let mut out = Vec::with_capacity(g_rows * g_cols);
            for gr in 0..g_rows {
                for gc in 0..g_cols {
                    let mut acc = T::zero();
                    for br in 0..grid.block_rows() {
                        let row = gr * grid.block_rows() + br;
                        let base = row * frames.cols() + gc * grid.block_cols();
                        for bc in 0..grid.block_cols() {
                            acc += frame[base + bc];
                        }
                    }
                    out.push(acc / block_count);
                }
            }
            out
        })
        .collect();

    let mut data = Vec::with_capacity(frames.n_frames() * g_rows * g_cols);
    for frame in downsampled {
        data.extend(frame);
    }
    FrameSequence::new(
        data,
        frames.n_frames(),
        g_rows,
        g_cols,
        frames.fps(),
        frames.exposure_note(),
    )
}

/// Converts intensity to absorbance, `x = -ln(r)`, clamping non-positive
/// samples to `epsilon_rel` times the maximum intensity. Returns the
/// absorbance stack and the number of clamped samples.
pub fn to_absorbance<T: Scalar>(
    frames: &FrameSequence<T>,
    epsilon_rel: f64,
) -> Result<(FrameSequence<T>, usize)> {
    if !(epsilon_rel > 0.0 && epsilon_rel < 1.0) {
        return Err(Error::InvalidConfig(
            "clamp_epsilon_rel must lie in (0, 1)".into(),
        ));
    }
    let max = frames
        .data()
        .iter()
        .fold(T::neg_infinity(), |a, v| a.max(*v));
    if !(max > T::zero()) {
        return Err(Error::InvalidInput(
            "cannot convert to absorbance: no positive intensity in the sequence".into(),
        ));
    }
    for t in 0..frames.n_frames() {
        if !frames.frame(t).iter().any(|v| *v > T::zero()) {
            return Err(Error::InvalidInput(format!(
                "cannot convert to absorbance: frame {t} has no positive intensity"
            )));
        }
    }
    let eps = max * T::from_config(epsilon_rel);
    let mut clamped = 0usize;
    let data: Vec<T> = frames
        .data()
        .iter()
        .map(|&v| {
            let v = if v <= T::zero() {
                clamped += 1;
                eps
            } else {
                v
            };
            -v.ln()
        })
        .collect();
    let out = FrameSequence::new(
        data,
        frames.n_frames(),
        frames.rows(),
        frames.cols(),
        frames.fps(),
        frames.exposure_note(),
    )?;
    Ok((out, clamped))
}
