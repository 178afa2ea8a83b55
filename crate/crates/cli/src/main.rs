//! `dvsfuse` command-line tool.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data or format errors.
//! Diagnostics go to stderr as one JSON object per line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "dvsfuse", version, about = "DVS event stream + RGB frame fusion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decode an ESF-1 file to CSV.
    Decode(DecodeArgs),
    /// Encode a CSV event list to ESF-1.
    Encode(EncodeArgs),
    /// Print stream header and counts as JSON.
    Info(InputArgs),
    /// Check ordering, bounds and trigger pairing.
    Validate(InputArgs),
    /// Pair triggers into exposures and print the sync windows.
    Sync(SyncArgs),
    /// Render event frames, one per sync window or for an explicit span.
    Accumulate(AccumulateArgs),
    /// Fit a homography to point correspondences with RANSAC.
    Calibrate(CalibrateArgs),
    /// Measure the ZNCC displacement between two gray images.
    Verify(VerifyArgs),
    /// Event-rate and bandwidth report.
    Rate(RateArgs),
    /// Apply event-rate control and write the capped stream.
    Erc(ErcArgs),
    /// Object size on the sensor, field of view and crop factor.
    Optics(OpticsArgs),
    /// Generate a synthetic scene with ground truth.
    Synth(SynthArgs),
    /// Move bounding boxes through a homography.
    LabelTransfer(LabelTransferArgs),
    /// End-to-end labeling run.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    /// ESF-1 file.
    input: PathBuf,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    input: PathBuf,
    /// CSV output (the only format; accepted for symmetry with `encode`).
    #[arg(long)]
    csv: bool,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    /// CSV input; stdin when absent.
    input: Option<PathBuf>,
    #[arg(long)]
    csv: bool,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct ExposureSource {
    /// Exposure table CSV; derived from triggers when absent.
    #[arg(long)]
    exposures: Option<PathBuf>,
    /// Trigger channel carrying the exposure signal.
    #[arg(long, default_value_t = 0)]
    channel: u8,
}

#[derive(Args, Debug)]
struct SyncArgs {
    input: PathBuf,
    /// m1 | m2 | m3 | m4 | custom:<start|mid|end>:<pre_us>:<post_us>
    #[arg(long, default_value = "m3")]
    method: String,
    #[command(flatten)]
    source: ExposureSource,
    /// Also write the paired exposure table here.
    #[arg(long)]
    exposures_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AccumulateArgs {
    input: PathBuf,
    /// count | polarity | binary
    #[arg(long, default_value = "polarity")]
    mode: String,
    #[arg(long, default_value_t = 3)]
    clip: u32,
    #[arg(long, default_value = "m3")]
    method: String,
    #[command(flatten)]
    source: ExposureSource,
    /// Single span start (µs); requires --t1 and writes one image to --output.
    #[arg(long, requires = "t1")]
    t0: Option<u64>,
    #[arg(long, requires = "t0")]
    t1: Option<u64>,
    /// Output directory (frame_<id>.pgm), or image path with --t0/--t1.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// CSV with src_x,src_y,dst_x,dst_y.
    correspondences: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    threshold: f64,
    #[arg(long, default_value_t = 2000)]
    max_iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the homography JSON here.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct VerifyFlags {
    #[arg(long)]
    canny_sigma: Option<f64>,
    #[arg(long)]
    low_frac: Option<f64>,
    #[arg(long)]
    high_frac: Option<f64>,
    #[arg(long)]
    search_radius: Option<usize>,
    #[arg(long)]
    margin: Option<usize>,
    /// Correlate raw intensities instead of smoothed Canny edges.
    #[arg(long)]
    intensity: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Reference image A.
    a: PathBuf,
    /// Image B; the reported offset is B relative to A.
    b: PathBuf,
    #[command(flatten)]
    flags: VerifyFlags,
}

#[derive(Args, Debug)]
struct RateArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 1000)]
    bin_us: u64,
    /// esf1 | fixed8
    #[arg(long, default_value = "esf1")]
    encoding: String,
    /// Saturation threshold, events/s.
    #[arg(long, default_value_t = 115e6)]
    saturation: f64,
    /// Write the per-bin counts as CSV.
    #[arg(long)]
    series: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ErcArgs {
    input: PathBuf,
    /// Cap in events per second.
    #[arg(long, default_value_t = 100_000_000)]
    cap: u64,
    #[arg(long, default_value_t = 1000)]
    period_us: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct OpticsArgs {
    #[arg(long)]
    object_m: Option<f64>,
    #[arg(long)]
    distance_m: Option<f64>,
    #[arg(long)]
    focal_mm: Option<f64>,
    /// Lens preset name; supplies the focal length.
    #[arg(long)]
    lens: Option<String>,
    /// Sensor preset name.
    #[arg(long, default_value = "evk4")]
    sensor: String,
    /// Pixel pitch in µm; overrides the sensor preset.
    #[arg(long)]
    pitch_um: Option<f64>,
    /// Reference sensor for the crop factor.
    #[arg(long)]
    crop_from: Option<String>,
    /// Print the field of view for the focal length.
    #[arg(long)]
    fov: bool,
    /// List bundled presets.
    #[arg(long)]
    list: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scene JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    width: Option<u16>,
    #[arg(long)]
    height: Option<u16>,
    /// disk | rectangle | checker
    #[arg(long)]
    pattern: Option<String>,
    #[arg(long)]
    size: Option<f64>,
    /// vx,vy in px/s.
    #[arg(long, allow_hyphen_values = true)]
    velocity: Option<String>,
    #[arg(long)]
    duration_s: Option<f64>,
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long)]
    exposure_us: Option<u64>,
    #[arg(long)]
    dt_us: Option<u64>,
    #[arg(long)]
    contrast: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also render a second view through this homography JSON.
    #[arg(long, conflicts_with = "translate")]
    homography: Option<PathBuf>,
    /// Second view shifted by dx,dy.
    #[arg(long, allow_hyphen_values = true)]
    translate: Option<String>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct LabelTransferArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    homography: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Pipeline JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    exposures: Option<PathBuf>,
    #[arg(long)]
    frames_dir: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Homography JSON file.
    #[arg(long, conflicts_with = "correspondences")]
    homography: Option<PathBuf>,
    /// Estimate the homography from this correspondence CSV.
    #[arg(long)]
    correspondences: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    channel: Option<u8>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    clip: Option<u32>,
    /// fired | canny
    #[arg(long)]
    event_edges: Option<String>,
    #[arg(long)]
    erc_cap: Option<u64>,
    #[arg(long)]
    erc_period_us: Option<u64>,
    #[command(flatten)]
    verify: VerifyFlags,
    /// Omit the timestamped meta block so reports are reproducible.
    #[arg(long)]
    no_meta: bool,
}

pub enum CliError {
    Usage(String),
    Data(String),
}

pub type CliResult<T> = Result<T, CliError>;

pub fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

pub fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

/// One diagnostic record on stderr.
pub fn diag(level: &str, message: &str) {
    eprintln!("{}", json!({ "level": level, "message": message }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let summary: Vec<&str> = msg
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty())
                .collect();
            diag("error", summary.join(" ").trim_start_matches("error: "));
            eprint!("{}", e.render());
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Decode(a) => commands::decode(a),
        Command::Encode(a) => commands::encode(a),
        Command::Info(a) => commands::info(a),
        Command::Validate(a) => commands::validate(a),
        Command::Sync(a) => commands::sync(a),
        Command::Accumulate(a) => commands::accumulate(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Verify(a) => commands::verify(a),
        Command::Rate(a) => commands::rate(a),
        Command::Erc(a) => commands::erc(a),
        Command::Optics(a) => commands::optics(a),
        Command::Synth(a) => commands::synth(a),
        Command::LabelTransfer(a) => commands::label_transfer(a),
        Command::Pipeline(a) => commands::pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            diag("error", &m);
            ExitCode::from(1)
        }
        Err(CliError::Data(m)) => {
            diag("error", &m);
            ExitCode::from(2)
        }
    }
}
