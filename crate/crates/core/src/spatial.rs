//! Spatial prior from the scene gradient, and the combined prior map with
//! its neighbourhood infimum.

use crate::config::SpatialConfig;
use crate::error::{Error, Result};
use crate::frame::FrameSequence;
use crate::scalar::Scalar;

/// Row-major map of per-region values.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> RegionMap<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "map data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Per-region weight maps and the combined prior `W`.
///
/// The component maps lie in (0, 1]; `w_combined` is the Chebyshev
/// neighbourhood infimum of their product, truncated at grid borders.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMap<T> {
    pub w_harm: RegionMap<T>,
    pub w_nmag: RegionMap<T>,
    pub w_spat: RegionMap<T>,
    pub w_combined: RegionMap<T>,
    pub neighborhood_radius: usize,
}

/// Gradient magnitude of the temporal-mean frame at region resolution.
///
/// Central differences in the interior, one-sided at borders; a map with a
/// single row or column has zero gradient along that axis (no neighbours).
pub fn scene_gradient<T: Scalar>(frames: &FrameSequence<T>) -> RegionMap<T> {
    let rows = frames.rows();
    let cols = frames.cols();
    let mean = frames.mean_frame();
    let at = |r: usize, c: usize| mean[r * cols + c];
    let half = T::from_config(0.5);
    RegionMap::from_fn(rows, cols, |r, c| {
        let gx = if cols == 1 {
            T::zero()
        } else if c == 0 {
            at(r, 1) - at(r, 0)
        } else if c == cols - 1 {
            at(r, cols - 1) - at(r, cols - 2)
        } else {
            (at(r, c + 1) - at(r, c - 1)) * half
        };
        let gy = if rows == 1 {
            T::zero()
        } else if r == 0 {
            at(1, c) - at(0, c)
        } else if r == rows - 1 {
            at(rows - 1, c) - at(rows - 2, c)
        } else {
            (at(r + 1, c) - at(r - 1, c)) * half
        };
        (gx * gx + gy * gy).sqrt()
    })
}

/// Spatial prior `exp(-g²/α_l)` applied elementwise to a gradient map,
/// clamped away from underflow so the prior stays strictly positive even
/// for extreme gradients.
pub fn spatial_prior<T: Scalar>(grad: &RegionMap<T>, cfg: &SpatialConfig) -> Result<RegionMap<T>> {
    cfg.validate()?;
    if grad.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite gradient map".into()));
    }
    let alpha = T::from_config(cfg.alpha_l);
    Ok(grad.map(|g| (-(g * g) / alpha).exp().max(T::min_positive_value())))
}

/// Combines the three priors into the per-region product and imposes the
/// neighbourhood-infimum statistic: `W_i` is the minimum product over the
/// Chebyshev neighbourhood of radius `cfg.neighborhood_radius`, truncated
/// at the grid borders. Radius 0 returns the product map bit-identically.
pub fn combine_priors<T: Scalar>(
    w_harm: &RegionMap<T>,
    w_nmag: &RegionMap<T>,
    w_spat: &RegionMap<T>,
    cfg: &SpatialConfig,
) -> Result<PriorMap<T>> {
    cfg.validate()?;
    if w_harm.dims() != w_nmag.dims() || w_harm.dims() != w_spat.dims() {
        return Err(Error::InvalidInput(format!(
            "prior map dims differ: {:?} vs {:?} vs {:?}",
            w_harm.dims(),
            w_nmag.dims(),
            w_spat.dims()
        )));
    }
    let (rows, cols) = w_harm.dims();
    let product =
        RegionMap::from_fn(rows, cols, |r, c| {
            w_harm.get(r, c) * w_nmag.get(r, c) * w_spat.get(r, c)
        });
    let radius = cfg.neighborhood_radius;
    let combined = if radius == 0 {
        product.clone()
    } else {
        RegionMap::from_fn(rows, cols, |r, c| {
            let r_lo = r.saturating_sub(radius);
            let r_hi = (r + radius).min(rows - 1);
            let c_lo = c.saturating_sub(radius);
            let c_hi = (c + radius).min(cols - 1);
            let mut inf = product.get(r, c);
            for rr in r_lo..=r_hi {
                for cc in c_lo..=c_hi {
                    inf = inf.min(product.get(rr, cc));
                }
            }
            inf
        })
    };
    Ok(PriorMap {
        w_harm: w_harm.clone(),
        w_nmag: w_nmag.clone(),
        w_spat: w_spat.clone(),
        w_combined: combined,
        neighborhood_radius: radius,
    })
}
