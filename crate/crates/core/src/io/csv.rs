//! CSV formats: waveforms with a `t_seconds,value` header, plain value
//! grids, per-frame grid directories, and per-region prior dumps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::FrameSequence;
use crate::scalar::Scalar;
use crate::spatial::{PriorMap, RegionMap};
use crate::spectral::SpectralSummary;

pub fn write_waveform_csv<T: Scalar>(path: &Path, samples: &[T], fps: f64) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "t_seconds,value")?;
        for (i, v) in samples.iter().enumerate() {
            writeln!(w, "{},{}", i as f64 / fps, v)?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

/// Reads a waveform CSV; returns the samples and the sampling rate implied
/// by the time column.
pub fn read_waveform_csv(path: &Path) -> Result<(Vec<f64>, f64)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l.trim())
        .unwrap_or_default();
    if header != "t_seconds,value" {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("expected header \"t_seconds,value\", got {header:?}"),
        });
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, ',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Format {
                    path: path.to_path_buf(),
                    offset: 0,
                    reason: format!("line {}: cannot parse {line:?}", idx + 1),
                })
        };
        times.push(parse(parts.next())?);
        values.push(parse(parts.next())?);
    }
    if values.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "{}: a waveform needs at least 2 samples",
            path.display()
        )));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(format!(
            "{}: time column must be strictly increasing",
            path.display()
        )));
    }
    let fps = (times.len() - 1) as f64 / (times[times.len() - 1] - times[0]);
    Ok((values, fps))
}

pub fn write_grid_csv<T: Scalar>(path: &Path, map: &RegionMap<T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        for r in 0..map.rows() {
            let row: Vec<String> = (0..map.cols()).map(|c| map.get(r, c).to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

/// Per-region diagnostic dump: peak frequency, band statistics, and all
/// prior components.
pub fn write_region_priors_csv<T: Scalar>(
    path: &Path,
    summaries: &[SpectralSummary<T>],
    priors: &PriorMap<T>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let cols = priors.w_combined.cols();
    let mut emit = || -> std::io::Result<()> {
        writeln!(
            w,
            "region,row,col,f_star,h,q,w_harm,w_nmag,w_spat,w_combined"
        )?;
        for (i, s) in summaries.iter().enumerate() {
            let (r, c) = (i / cols, i % cols);
            writeln!(
                w,
                "{i},{r},{c},{},{},{},{},{},{},{}",
                s.f_star,
                s.h,
                s.q,
                priors.w_harm.get(r, c),
                priors.w_nmag.get(r, c),
                priors.w_spat.get(r, c),
                priors.w_combined.get(r, c)
            )?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

/// Reads a directory of per-frame CSV grids in lexicographic filename
/// order; `fps` comes from the caller because the files carry none.
pub fn read_frame_dir<T: Scalar>(dir: &Path, fps: f64) -> Result<FrameSequence<T>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "csv").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "{}: need at least 2 frame CSVs, found {}",
            dir.display(),
            paths.len()
        )));
    }
    let mut data = Vec::new();
    let mut dims: Option<(usize, usize)> = None;
    for path in &paths {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows = 0usize;
        let mut cols = 0usize;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parsed: Vec<T> = line
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .ok()
                        .and_then(T::from_f64)
                        .ok_or_else(|| Error::Format {
                            path: path.to_path_buf(),
                            offset: 0,
                            reason: format!("line {}: cannot parse {v:?}", idx + 1),
                        })
                })
                .collect::<Result<_>>()?;
            if cols == 0 {
                cols = parsed.len();
            } else if parsed.len() != cols {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    offset: 0,
                    reason: format!("line {}: ragged row", idx + 1),
                });
            }
            rows += 1;
            data.extend(parsed);
        }
        match dims {
            None => dims = Some((rows, cols)),
            Some(d) if d != (rows, cols) => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    offset: 0,
                    reason: format!("frame is {rows}x{cols}, expected {}x{}", d.0, d.1),
                })
            }
            _ => {}
        }
    }
    let (rows, cols) = dims.unwrap();
    FrameSequence::new(data, paths.len(), rows, cols, fps, "")
}
