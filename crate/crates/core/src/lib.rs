//! pulsefusion: blood pulse waveform extraction from single-channel frame
//! sequences.
//!
//! The scene is split into a grid of regions by blockwise downsampling;
//! each region's intensity series becomes a detrended absorbance signal.
//! Physiologically derived spectral priors (harmonic strength, off-band
//! noise) and a gradient-based spatial prior are combined per region with a
//! neighbourhood-infimum statistic, and the posterior over candidate
//! waveforms — a weighted histogram supported on the observed signals —
//! yields the Bayesian least-squares estimate as a weighted sum of region
//! signals. Heart rate comes from cubic-spline resampling plus
//! autocorrelation peak detection.
//!
//! Everything numeric is generic over the scalar type via [`Scalar`]
//! (`f32` or `f64`); the `*64` aliases at the crate root pin the common
//! double-precision instantiation.

pub mod baseline;
pub mod cardiac;
pub mod config;
pub mod detrend;
pub mod error;
pub mod eval;
pub mod frame;
pub mod fusion;
pub mod io;
pub mod region;
pub mod scalar;
pub mod spatial;
pub mod spectral;
pub mod synth;

pub use config::{
    CardiacConfig, DetrendConfig, FusionConfig, NoisePeakMode, PeakRule, PipelineConfig,
    SpatialConfig, SpectralConfig, Taper,
};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub use baseline::{mean_ppg, MeanMode, RoiSpec};
pub use cardiac::{estimate_hr, estimate_hr_series, resample_cubic, HeartRateEstimate};
pub use detrend::detrend;
pub use eval::{
    bland_altman, entropy, grid_search, lag_correlation, pearson_abs, spectral_entropy,
    tuning_objective, BlandAltman, GridEntry, GridPoint, GridSearchResult, MetricsReport,
    ParamGrid,
};
pub use frame::{downsample_blockwise, to_absorbance, FrameSequence, RegionGrid};
pub use fusion::{
    extract_pulse, extract_pulse_detailed, fuse, posterior_weights, FusedWaveform,
    FusionDiagnostics, PulseDetail, WindowDiagnostics,
};
pub use region::{extract_region_signals, signals_from_absorbance, RegionSignal};
pub use spatial::{combine_priors, scene_gradient, spatial_prior, PriorMap, RegionMap};
pub use spectral::{
    harmonic_energy, harmonic_prior, noise_peak, noise_prior, spectral_power, summarize,
    SpectralSummary,
};
pub use synth::{
    arrhythmia_scene_spec, clean_scene_spec, cohort, cohort_specs, generate_scene,
    noise_scene_spec, read_manifest, ArrhythmiaEvent, CohortManifest, EdgeSpec, PatchSpec,
    PatchTruth, PixelRect, PulseParams, SceneEntry, SceneSpec, SceneTruth,
};

/// Double-precision instantiations of the core containers.
pub type FrameSequence64 = frame::FrameSequence<f64>;
pub type RegionSignal64 = region::RegionSignal<f64>;
pub type SpectralSummary64 = spectral::SpectralSummary<f64>;
pub type RegionMap64 = spatial::RegionMap<f64>;
pub type PriorMap64 = spatial::PriorMap<f64>;
pub type FusedWaveform64 = fusion::FusedWaveform<f64>;
pub type HeartRateEstimate64 = cardiac::HeartRateEstimate<f64>;

/// Single-precision instantiations.
pub type FrameSequence32 = frame::FrameSequence<f32>;
pub type RegionSignal32 = region::RegionSignal<f32>;
pub type FusedWaveform32 = fusion::FusedWaveform<f32>;

/// Caps the global data-parallelism degree. Call once at startup; `None`
/// keeps the library default. Results are bit-identical at any degree, so
/// this only affects throughput.
pub fn init_thread_pool(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else {
        return Ok(());
    };
    if n == 0 {
        return Err(Error::InvalidConfig("thread count must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}
