//! File formats: the FSEQ v1 frame container, CSV waveforms and grids, and
//! PGM heatmaps.

mod csv;
mod fseq;
mod pgm;

pub use csv::{
    read_frame_dir, read_waveform_csv, write_grid_csv, write_region_priors_csv,
    write_waveform_csv,
};
pub use fseq::{read_fseq, write_fseq};
pub use pgm::write_pgm;
