use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pulsefusion::io::{
    read_frame_dir, read_fseq, read_waveform_csv, write_grid_csv, write_pgm,
    write_region_priors_csv, write_waveform_csv,
};
use pulsefusion::{
    bland_altman, estimate_hr_series, extract_pulse, extract_pulse_detailed, grid_search,
    lag_correlation, mean_ppg, pearson_abs, read_manifest, resample_cubic, spectral_entropy,
    arrhythmia_scene_spec, clean_scene_spec, cohort, cohort_specs, noise_scene_spec,
    FrameSequence64, FusedWaveform64, FusionDiagnostics, MeanMode, MetricsReport, NoisePeakMode,
    ParamGrid, PipelineConfig, RoiSpec, SceneSpec,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NO_SIGNAL: u8 = 3;

/// Command-line misuse that clap cannot catch (bad flag values, missing
/// flag combinations); mapped to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

#[derive(Parser)]
#[command(
    name = "pulsefusion",
    version,
    about = "Blood pulse waveform extraction via spectral-spatial fusion"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Extract the fused blood pulse waveform from a scene
    Extract(ExtractArgs),
    /// ROI spatial-mean baseline waveform
    Baseline(BaselineArgs),
    /// Fidelity metrics against ground truth (single pair or cohort)
    Evaluate(EvaluateArgs),
    /// Hyperparameter grid search
    Tune(TuneArgs),
    /// Generate synthetic scenes with ground truth
    Synth(SynthArgs),
}

#[derive(Args)]
struct InputArgs {
    /// FSEQ file, or a directory of per-frame CSV grids (needs --fps)
    #[arg(long)]
    input: PathBuf,
    /// Frame rate for CSV-directory input
    #[arg(long)]
    fps: Option<f64>,
    /// Pipeline configuration JSON (flags override file values)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Waveform CSV output path; a JSON sidecar lands next to it
    #[arg(long)]
    output: PathBuf,
    /// Recompute fusion weights over fixed windows of this many seconds
    #[arg(long, value_name = "SECONDS")]
    windowed: Option<f64>,
    /// Use the complement-of-fundamental-band noise statistic instead of
    /// the off-band maximum
    #[arg(long = "literal-eq12")]
    literal_eq12: bool,
    /// Dump prior maps (CSV + PGM) and per-region diagnostics
    #[arg(long)]
    dump_priors: bool,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Waveform CSV output path; a JSON sidecar lands next to it
    #[arg(long)]
    output: PathBuf,
    /// ROI in region-grid coordinates: "row0,col0,rows,cols" or "full"
    #[arg(long, default_value = "full")]
    roi: String,
    /// Average raw intensities before the log transform instead of
    /// averaging absorbance signals
    #[arg(long)]
    raw_intensity: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted waveform CSV (single-pair mode)
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Ground-truth waveform CSV (single-pair mode)
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Cohort manifest JSON; runs extraction + baseline + metrics per scene
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Pipeline configuration JSON
    #[arg(long)]
    config: Option<PathBuf>,
    /// Metrics JSON (single-pair) or tidy CSV (cohort) output path
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    /// Scene FSEQ path(s); repeat the flag for multiple scenes
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    /// Frame rate for CSV-directory inputs
    #[arg(long)]
    fps: Option<f64>,
    /// Pipeline configuration JSON (the search varies alpha_h, alpha_q,
    /// alpha_l, radius around it)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid spec "alpha_h=0.1,0.5;alpha_q=0.01;alpha_l=1;radius=0,1";
    /// omitted parameters keep the base-config value, omitting the flag
    /// uses the default grid
    #[arg(long)]
    grid: Option<String>,
    /// Grid table CSV output path; best parameters land next to it
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for FSEQ files, ground truth, and manifest.json
    #[arg(long)]
    output: PathBuf,
    /// Built-in scene family: cohort | clean | noise | arrhythmia
    #[arg(long)]
    preset: Option<String>,
    /// Scene spec JSON (one SceneSpec object or an array of them)
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Cohort size (cohort preset)
    #[arg(long, default_value_t = 23)]
    count: usize,
    /// Cohort heart-rate range in bpm (cohort preset)
    #[arg(long, default_value_t = 48.0)]
    hr_min: f64,
    #[arg(long, default_value_t = 100.0)]
    hr_max: f64,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Commands::Extract(args) => cmd_extract(args),
        Commands::Baseline(args) => cmd_baseline(args),
        Commands::Evaluate(args) => cmd_evaluate(args),
        Commands::Tune(args) => cmd_tune(args),
        Commands::Synth(args) => cmd_synth(args),
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg: PipelineConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_frames(input: &Path, fps: Option<f64>) -> anyhow::Result<FrameSequence64> {
    if input.is_dir() {
        let fps = fps.ok_or_else(|| {
            usage("--fps is required when the input is a directory of frame CSVs")
        })?;
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(usage(format!("--fps must be positive, got {fps}")));
        }
        Ok(read_frame_dir(input, fps)?)
    } else {
        Ok(read_fseq(input)?)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct HeartRateJson {
    bpm: f64,
    confidence: f64,
    delta_t_samples: f64,
    resample_fs: f64,
}

#[derive(Serialize)]
struct WaveformSidecar<'a> {
    fps: f64,
    total_weight: f64,
    n_regions_used: usize,
    heart_rate: Option<HeartRateJson>,
    config: &'a PipelineConfig,
    diagnostics: &'a FusionDiagnostics,
}

fn write_waveform_outputs(
    output: &Path,
    waveform: &FusedWaveform64,
    cfg: &PipelineConfig,
) -> anyhow::Result<()> {
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    write_waveform_csv(output, &waveform.samples, waveform.fps)?;
    let heart_rate = pulsefusion::estimate_hr(waveform, &cfg.cardiac)
        .ok()
        .map(|est| HeartRateJson {
            bpm: est.bpm,
            confidence: est.confidence,
            delta_t_samples: est.delta_t_samples,
            resample_fs: est.resample_fs,
        });
    let sidecar = WaveformSidecar {
        fps: waveform.fps,
        total_weight: waveform.total_weight,
        n_regions_used: waveform.n_regions_used,
        heart_rate,
        config: cfg,
        diagnostics: &waveform.diagnostics,
    };
    write_json(&output.with_extension("json"), &sidecar)
}

fn cmd_extract(args: ExtractArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(args.input.config.as_deref())?;
    if let Some(seconds) = args.windowed {
        if !(seconds > 0.0 && seconds.is_finite()) {
            return Err(usage(format!("--windowed must be positive, got {seconds}")));
        }
        cfg.fusion.window_seconds = Some(seconds);
    }
    if args.literal_eq12 {
        cfg.spectral.noise_peak_mode = NoisePeakMode::FundamentalComplement;
    }
    let frames = load_frames(&args.input.input, args.input.fps)?;
    let (waveform, detail) = extract_pulse_detailed(&frames, &cfg)?;
    write_waveform_outputs(&args.output, &waveform, &cfg)?;

    if args.dump_priors {
        let base = args.output.with_extension("");
        let stem = base.to_string_lossy().into_owned();
        let maps = [
            ("w_harm", &detail.priors.w_harm),
            ("w_nmag", &detail.priors.w_nmag),
            ("w_spat", &detail.priors.w_spat),
            ("w_combined", &detail.priors.w_combined),
        ];
        for (name, map) in maps {
            write_grid_csv(Path::new(&format!("{stem}.{name}.csv")), map)?;
            write_pgm(Path::new(&format!("{stem}.{name}.pgm")), map)?;
        }
        write_region_priors_csv(
            Path::new(&format!("{stem}.priors.csv")),
            &detail.summaries,
            &detail.priors,
        )?;
    }
    println!(
        "extracted {} samples at {} fps ({} regions used, total weight {:.6})",
        waveform.samples.len(),
        waveform.fps,
        waveform.n_regions_used,
        waveform.total_weight
    );
    Ok(())
}

fn parse_roi(text: &str) -> anyhow::Result<RoiSpec> {
    let text = text.trim();
    if text.eq_ignore_ascii_case("full") {
        return Ok(RoiSpec::FullFrame);
    }
    let parts: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("invalid --roi {text:?}; expected \"full\" or \"row0,col0,rows,cols\"")))?;
    if parts.len() != 4 {
        return Err(usage(format!(
            "invalid --roi {text:?}; expected 4 comma-separated integers"
        )));
    }
    Ok(RoiSpec::Rect {
        row0: parts[0],
        col0: parts[1],
        rows: parts[2],
        cols: parts[3],
    })
}

fn cmd_baseline(args: BaselineArgs) -> anyhow::Result<()> {
    let cfg = load_config(args.input.config.as_deref())?;
    let roi = parse_roi(&args.roi)?;
    let mode = if args.raw_intensity {
        MeanMode::RawIntensity
    } else {
        MeanMode::Absorbance
    };
    let frames = load_frames(&args.input.input, args.input.fps)?;
    let waveform = mean_ppg(&frames, &roi, &cfg, mode)?;
    write_waveform_outputs(&args.output, &waveform, &cfg)?;
    println!(
        "baseline over {} region(s): {} samples at {} fps",
        waveform.n_regions_used,
        waveform.samples.len(),
        waveform.fps
    );
    Ok(())
}

/// Heart rate in bpm, or None when the series carries no usable estimate.
fn try_hr(samples: &[f64], fps: f64, cfg: &PipelineConfig) -> Option<f64> {
    estimate_hr_series(samples, fps, &cfg.cardiac).ok().map(|e| e.bpm)
}

fn metrics_for_pair(
    pred: &[f64],
    pred_fps: f64,
    truth: &[f64],
    truth_fps: f64,
    cfg: &PipelineConfig,
) -> anyhow::Result<MetricsReport> {
    let truth_aligned: Vec<f64> = if (truth_fps - pred_fps).abs() > 1e-6 * pred_fps {
        resample_cubic(truth, truth_fps, pred_fps)?
    } else {
        truth.to_vec()
    };
    let (rho, lag) = lag_correlation(pred, &truth_aligned, pred_fps, cfg.max_lag_s)?;
    let (h, hn) = spectral_entropy(pred, pred_fps, &cfg.spectral)?;
    Ok(MetricsReport {
        spectral_entropy: h,
        spectral_entropy_normalized: hn,
        pearson_rho: rho,
        best_lag_s: lag,
        hr_pred_bpm: try_hr(pred, pred_fps, cfg),
        hr_true_bpm: try_hr(&truth_aligned, pred_fps, cfg),
    })
}

#[derive(Serialize)]
struct CohortRow {
    name: String,
    hr_true_bpm: f64,
    hr_pred_bpm: Option<f64>,
    rho_fusion: Option<f64>,
    entropy_fusion: Option<f64>,
    lag_s_fusion: Option<f64>,
    rho_baseline: Option<f64>,
    entropy_baseline: Option<f64>,
    failed: bool,
}

#[derive(Serialize)]
struct CohortSummary {
    n_scenes: usize,
    n_failed: usize,
    hr_r_squared: Option<f64>,
    bland_altman: Option<pulsefusion::BlandAltman>,
    fusion_rho_wins: usize,
    fusion_entropy_wins: usize,
}

fn cmd_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    match (&args.manifest, &args.pred, &args.truth) {
        (Some(manifest), None, None) => evaluate_cohort(manifest, &cfg, args.output.as_deref()),
        (None, Some(pred), Some(truth)) => {
            let (pred_samples, pred_fps) = read_waveform_csv(pred)?;
            let (truth_samples, truth_fps) = read_waveform_csv(truth)?;
            let report =
                metrics_for_pair(&pred_samples, pred_fps, &truth_samples, truth_fps, &cfg)?;
            let text = serde_json::to_string_pretty(&report)?;
            println!("{text}");
            if let Some(out) = &args.output {
                write_json(out, &report)?;
            }
            Ok(())
        }
        _ => Err(usage(
            "evaluate needs either --pred and --truth, or --manifest",
        )),
    }
}

fn evaluate_cohort(
    manifest_path: &Path,
    cfg: &PipelineConfig,
    output: Option<&Path>,
) -> anyhow::Result<()> {
    let manifest = read_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut rows = Vec::new();
    for entry in &manifest.scenes {
        let frames: FrameSequence64 = read_fseq(&dir.join(&entry.fseq))?;
        let truth_file = entry
            .truth
            .first()
            .ok_or_else(|| usage(format!("scene {} has no ground truth", entry.name)))?;
        let (truth_samples, truth_fps) = read_waveform_csv(&dir.join(truth_file))?;
        let hr_true = entry.hr_bpm.first().copied().unwrap_or(f64::NAN);

        match extract_pulse(&frames, cfg) {
            Ok(fused) => {
                let baseline = mean_ppg(&frames, &RoiSpec::FullFrame, cfg, MeanMode::Absorbance)?;
                let fusion_metrics =
                    metrics_for_pair(&fused.samples, fused.fps, &truth_samples, truth_fps, cfg)?;
                let baseline_metrics = metrics_for_pair(
                    &baseline.samples,
                    baseline.fps,
                    &truth_samples,
                    truth_fps,
                    cfg,
                )?;
                rows.push(CohortRow {
                    name: entry.name.clone(),
                    hr_true_bpm: hr_true,
                    hr_pred_bpm: fusion_metrics.hr_pred_bpm,
                    rho_fusion: Some(fusion_metrics.pearson_rho),
                    entropy_fusion: Some(fusion_metrics.spectral_entropy),
                    lag_s_fusion: Some(fusion_metrics.best_lag_s),
                    rho_baseline: Some(baseline_metrics.pearson_rho),
                    entropy_baseline: Some(baseline_metrics.spectral_entropy),
                    failed: false,
                });
            }
            Err(e) if e.is_no_signal() => {
                rows.push(CohortRow {
                    name: entry.name.clone(),
                    hr_true_bpm: hr_true,
                    hr_pred_bpm: None,
                    rho_fusion: None,
                    entropy_fusion: None,
                    lag_s_fusion: None,
                    rho_baseline: None,
                    entropy_baseline: None,
                    failed: true,
                });
            }
            Err(e) => return Err(e.into()),
        }
    }

    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.hr_pred_bpm.map(|p| (r.hr_true_bpm, p)))
        .collect();
    let r_squared = if pairs.len() >= 2 {
        let truths: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let preds: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        pearson_abs(&truths, &preds).ok().map(|r| r * r)
    } else {
        None
    };
    let ba = if pairs.len() >= 2 {
        Some(bland_altman(&pairs)?)
    } else {
        None
    };
    let wins = |f: fn(&CohortRow) -> Option<(f64, f64)>, lower_better: bool| {
        rows.iter()
            .filter_map(f)
            .filter(|(a, b)| if lower_better { a < b } else { a > b })
            .count()
    };
    let summary = CohortSummary {
        n_scenes: rows.len(),
        n_failed: rows.iter().filter(|r| r.failed).count(),
        hr_r_squared: r_squared,
        bland_altman: ba,
        fusion_rho_wins: wins(|r| r.rho_fusion.zip(r.rho_baseline), false),
        fusion_entropy_wins: wins(|r| r.entropy_fusion.zip(r.entropy_baseline), true),
    };

    if let Some(output) = output {
        let mut text = String::from(
            "name,hr_true_bpm,hr_pred_bpm,rho_fusion,entropy_fusion,lag_s_fusion,rho_baseline,entropy_baseline,failed\n",
        );
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &rows {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.name,
                r.hr_true_bpm,
                opt(r.hr_pred_bpm),
                opt(r.rho_fusion),
                opt(r.entropy_fusion),
                opt(r.lag_s_fusion),
                opt(r.rho_baseline),
                opt(r.entropy_baseline),
                r.failed
            ));
        }
        std::fs::write(output, text).with_context(|| format!("writing {}", output.display()))?;
        write_json(&output.with_extension("summary.json"), &summary)?;
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn parse_grid(text: &str, base: &PipelineConfig) -> anyhow::Result<ParamGrid> {
    let mut grid = ParamGrid {
        alpha_h: vec![base.spectral.alpha_h],
        alpha_q: vec![base.spectral.alpha_q],
        alpha_l: vec![base.spatial.alpha_l],
        radius: vec![base.spatial.neighborhood_radius],
    };
    if text.trim().is_empty() {
        return Err(usage("--grid must not be empty"));
    }
    for part in text.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, values) = part
            .split_once('=')
            .ok_or_else(|| usage(format!("grid term {part:?} is not key=v1,v2,...")))?;
        let floats = || -> anyhow::Result<Vec<f64>> {
            values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| usage(format!("grid value {v:?} is not a number")))
                })
                .collect()
        };
        match key.trim() {
            "alpha_h" => grid.alpha_h = floats()?,
            "alpha_q" => grid.alpha_q = floats()?,
            "alpha_l" => grid.alpha_l = floats()?,
            "radius" => {
                grid.radius = values
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<usize>()
                            .map_err(|_| usage(format!("grid radius {v:?} is not an integer")))
                    })
                    .collect::<anyhow::Result<_>>()?
            }
            other => return Err(usage(format!("unknown grid parameter {other:?}"))),
        }
    }
    if grid.is_empty() {
        return Err(usage("--grid produced an empty grid"));
    }
    Ok(grid)
}

fn cmd_tune(args: TuneArgs) -> anyhow::Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let grid = match &args.grid {
        Some(text) => parse_grid(text, &cfg)?,
        None => ParamGrid::default(),
    };
    let scenes: Vec<FrameSequence64> = args
        .input
        .iter()
        .map(|p| load_frames(p, args.fps))
        .collect::<anyhow::Result<_>>()?;
    let result = grid_search(&scenes, &grid, &cfg)?;

    let mut table = String::from("alpha_h,alpha_q,alpha_l,radius,score,excluded\n");
    for entry in &result.table {
        table.push_str(&format!(
            "{},{},{},{},{},{}\n",
            entry.point.alpha_h,
            entry.point.alpha_q,
            entry.point.alpha_l,
            entry.point.radius,
            if entry.score.is_finite() {
                entry.score.to_string()
            } else {
                String::new()
            },
            entry.excluded
        ));
    }
    std::fs::write(&args.output, table)
        .with_context(|| format!("writing {}", args.output.display()))?;

    #[derive(Serialize)]
    struct Best<'a> {
        best: &'a pulsefusion::GridPoint,
        objective: f64,
        evaluated: usize,
        excluded: usize,
    }
    let best = Best {
        best: &result.best,
        objective: result.objective,
        evaluated: result.table.len(),
        excluded: result.table.iter().filter(|e| e.excluded).count(),
    };
    write_json(&args.output.with_extension("best.json"), &best)?;
    println!("{}", serde_json::to_string_pretty(&best)?);
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let specs: Vec<SceneSpec> = match (&args.preset, &args.spec) {
        (Some(preset), None) => match preset.as_str() {
            "cohort" => {
                if args.count == 0 {
                    return Err(usage("--count must be positive"));
                }
                if !(args.hr_min > 0.0 && args.hr_max >= args.hr_min) {
                    return Err(usage("--hr-min/--hr-max must satisfy 0 < min <= max"));
                }
                cohort_specs(args.count, args.hr_min, args.hr_max, args.seed)
            }
            "clean" => vec![clean_scene_spec("clean", args.seed)],
            "noise" => vec![noise_scene_spec("noise", args.seed)],
            "arrhythmia" => vec![arrhythmia_scene_spec("arrhythmia", args.seed)],
            other => {
                return Err(usage(format!(
                    "unknown preset {other:?}; expected cohort, clean, noise, or arrhythmia"
                )))
            }
        },
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            match serde_json::from_str::<Vec<SceneSpec>>(&text) {
                Ok(specs) => specs,
                Err(_) => vec![serde_json::from_str::<SceneSpec>(&text)
                    .with_context(|| format!("parsing {}", path.display()))?],
            }
        }
        _ => return Err(usage("synth needs exactly one of --preset or --spec")),
    };
    let manifest = cohort(&specs, &args.output)?;
    println!(
        "wrote {} scene(s) and {}",
        manifest.scenes.len(),
        args.output.join("manifest.json").display()
    );
    Ok(())
}
