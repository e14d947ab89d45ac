//! 8-bit binary PGM heatmap export with linear min-to-max scaling.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spatial::RegionMap;

pub fn write_pgm<T: Scalar>(path: &Path, map: &RegionMap<T>) -> Result<()> {
    let min = map.data().iter().fold(T::infinity(), |a, &b| a.min(b));
    let max = map.data().iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let span = max - min;
    let scale = T::from_config(255.0);
    let bytes: Vec<u8> = map
        .data()
        .iter()
        .map(|&v| {
            if span > T::zero() {
                ((v - min) / span * scale)
                    .round()
                    .to_u8()
                    .unwrap_or(255)
            } else {
                0
            }
        })
        .collect();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", map.cols(), map.rows())?;
        w.write_all(&bytes)?;
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}
