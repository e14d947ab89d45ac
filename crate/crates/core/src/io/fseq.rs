//! FSEQ v1: little-endian binary frame container.
//!
//! Layout: magic `"FSEQ"`, u32 version, u32 n_frames, u32 rows, u32 cols,
//! f64 fps, then `n_frames * rows * cols` float32 intensities, frame-major,
//! row-major within each frame.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::FrameSequence;
use crate::scalar::Scalar;

const MAGIC: [u8; 4] = *b"FSEQ";
const VERSION: u32 = 1;
/// Refuse to allocate for implausible headers (4 GiB of samples).
const MAX_SAMPLES: u64 = 1 << 30;

pub fn write_fseq<T: Scalar>(path: &Path, frames: &FrameSequence<T>) -> Result<()> {
    for (i, v) in frames.data().iter().enumerate() {
        let f = v.to_f32().unwrap_or(f32::NAN);
        if !f.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sample at flat index {i} does not fit in float32"
            )));
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(&MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(frames.n_frames() as u32).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(&(frames.rows() as u32).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(&(frames.cols() as u32).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(&frames.fps().to_le_bytes()).map_err(io_err)?;
    for v in frames.data() {
        let f = v.to_f32().expect("checked above");
        w.write_all(&f.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

struct Counting<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Counting<R> {
    fn read_exact(&mut self, path: &Path, buf: &mut [u8], what: &str) -> Result<()> {
        let start = self.offset;
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(Error::Format {
                path: path.to_path_buf(),
                offset: start,
                reason: format!("truncated while reading {what} ({} bytes expected)", buf.len()),
            }),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    fn read_u32(&mut self, path: &Path, what: &str) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.read_exact(path, &mut buf, what)?;
        Ok(u32::from_le_bytes(buf))
    }
}

pub fn read_fseq<T: Scalar>(path: &Path) -> Result<FrameSequence<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Counting {
        inner: BufReader::new(file),
        offset: 0,
    };
    let mut magic = [0u8; 4];
    r.read_exact(path, &mut magic, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("bad magic {magic:?}, expected \"FSEQ\""),
        });
    }
    let version = r.read_u32(path, "version")?;
    if version != VERSION {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let n_frames = r.read_u32(path, "frame count")? as u64;
    let rows = r.read_u32(path, "rows")? as u64;
    let cols = r.read_u32(path, "cols")? as u64;
    let mut fps_buf = [0u8; 8];
    r.read_exact(path, &mut fps_buf, "fps")?;
    let fps = f64::from_le_bytes(fps_buf);

    let total = n_frames
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .filter(|&v| v <= MAX_SAMPLES)
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            offset: 8,
            reason: format!("implausible dimensions {n_frames}x{rows}x{cols}"),
        })?;

    let mut data = Vec::with_capacity(total as usize);
    let mut buf = vec![0u8; 4 * 4096];
    let mut remaining = total as usize;
    while remaining > 0 {
        let take = remaining.min(4096);
        let bytes = &mut buf[..4 * take];
        r.read_exact(path, bytes, "sample payload")?;
        for chunk in bytes.chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            let t = T::from_f32(v).ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                offset: r.offset,
                reason: "unrepresentable sample value".into(),
            })?;
            data.push(t);
        }
        remaining -= take;
    }
    let mut probe = [0u8; 1];
    if r.inner.read(&mut probe).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: r.offset,
            reason: "trailing bytes after sample payload".into(),
        });
    }

    FrameSequence::new(data, n_frames as usize, rows as usize, cols as usize, fps, "")
        .map_err(|e| Error::Format {
            path: path.to_path_buf(),
            offset: 8,
            reason: e.to_string(),
        })
}
