//! End-to-end labeling flow: triggers → exposures → sync windows → event
//! frames, RGB labels moved into the event view through `H`, and a per-frame
//! alignment check between the rendered events and the warped RGB frame.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::GrayImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accumulate::{accumulate, render_gray, AccumulationMode, CoordinateOutOfBounds, DEFAULT_CLIP};
use crate::event_io::{decode_esf, DecodeError, EventStream};
use crate::geometry::{
    estimate_homography_ransac, parse_correspondences_csv, read_labels, reprojection_stats, transfer_labels,
    warp_image, BoundingBox, CalibrationReport, CorrespondenceCsvError, GeometryError, Homography, LabelFileError,
};
use crate::image_io::{read_gray, write_gray, ImageIoError};
use crate::rate::{erc_filter, rate_report, Encoding, ErcConfig, RateError, RateReport, RateReportParams};
use crate::sync::{
    assign_events, parse_exposures_csv, triggers_to_exposures, windows, ExposureCsvError, ExposureInterval, SyncError,
    SyncMethod,
};
use crate::verify::{canny, match_deviation, verify_alignment, EdgeMap, MatchSource, VerifyParams, ZnccResult};

/// Edge map used for the event view in the alignment check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventEdges {
    /// Pixels that fired at least once. A moving edge leaves a band of
    /// events centred on its mid-window position, so the band itself is
    /// the edge.
    #[default]
    Fired,
    /// Canny on the rendered event frame, like the RGB side.
    Canny,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Decode { path: PathBuf, source: DecodeError },
    #[error(transparent)]
    Exposures(#[from] ExposureCsvError),
    #[error(transparent)]
    Correspondences(#[from] CorrespondenceCsvError),
    #[error("labels: {0}")]
    Labels(#[from] LabelFileError),
    #[error("homography file: {0}")]
    HomographyJson(serde_json::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error(transparent)]
    Accumulate(#[from] CoordinateOutOfBounds),
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error("no exposures found on trigger channel {0}")]
    NoExposures(u8),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Where the RGB → event-view homography comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HomographySource {
    Identity,
    File { path: PathBuf },
    Estimate {
        correspondences: PathBuf,
        #[serde(default = "default_threshold")]
        threshold_px: f64,
        #[serde(default = "default_iterations")]
        max_iterations: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_threshold() -> f64 {
    2.0
}

fn default_iterations() -> usize {
    2000
}

mod method_str {
    use super::SyncMethod;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &SyncMethod, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(m)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SyncMethod, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Processing parameters independent of file locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    #[serde(with = "method_str")]
    pub sync: SyncMethod,
    pub trigger_channel: u8,
    pub mode: AccumulationMode,
    pub clip: u32,
    pub verify: VerifyParams,
    pub event_edges: EventEdges,
    /// Event-rate control applied before windowing.
    pub erc: Option<ErcConfig>,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            sync: SyncMethod::Centered,
            trigger_channel: 0,
            mode: AccumulationMode::Binary,
            clip: DEFAULT_CLIP,
            verify: VerifyParams::default(),
            event_edges: EventEdges::Fired,
            erc: None,
        }
    }
}

/// JSON configuration of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub events: PathBuf,
    /// Exposure table; derived from triggers when absent.
    #[serde(default)]
    pub exposures: Option<PathBuf>,
    /// Directory of `frame_<id>.pgm` RGB-camera frames.
    #[serde(default)]
    pub frames_dir: Option<PathBuf>,
    /// Detector boxes in RGB coordinates.
    #[serde(default)]
    pub labels: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default = "identity_source")]
    pub homography: HomographySource,
    #[serde(default, flatten)]
    pub params: PipelineParams,
}

fn identity_source() -> HomographySource {
    HomographySource::Identity
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpan {
    pub t0: u64,
    pub t1: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame_id: u32,
    pub window: WindowSpan,
    pub n_events: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deviation_px: Option<f64>,
    #[serde(rename = "match", skip_serializing_if = "Option::is_none")]
    pub zncc: Option<ZnccResult>,
    pub labels_out: Vec<BoundingBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationSummary {
    pub frames: usize,
    pub mean_px: f64,
    pub max_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool: String,
    pub version: String,
    pub generated_unix_s: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub frames: Vec<FrameReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deviation: Option<DeviationSummary>,
    pub homography: Homography,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta: Option<ReportMeta>,
}

/// Non-fatal problem met while processing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub level: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame_id: Option<u32>,
    pub message: String,
}

impl Diagnostic {
    fn warn(frame_id: Option<u32>, message: impl Into<String>) -> Self {
        Self { level: "warning", frame_id, message: message.into() }
    }
}

/// In-memory inputs of a run.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub stream: EventStream,
    pub exposures: Option<Vec<ExposureInterval>>,
    pub frames: BTreeMap<u32, GrayImage>,
    pub labels: Vec<BoundingBox>,
    pub homography: Homography,
    pub calibration: Option<CalibrationReport>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: PipelineReport,
    /// Rendered event frames in frame_id order.
    pub event_frames: Vec<(u32, GrayImage)>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn run_pipeline(inputs: &PipelineInputs, params: &PipelineParams) -> Result<PipelineRun, PipelineError> {
    let mut diagnostics = Vec::new();
    let exposures = match &inputs.exposures {
        Some(e) => e.clone(),
        None => {
            let (exp, unpaired) = triggers_to_exposures(inputs.stream.triggers(), params.trigger_channel);
            for u in unpaired {
                diagnostics.push(Diagnostic::warn(None, format!("unpaired {:?} trigger edge at {} us", u.edge, u.t)));
            }
            exp
        }
    };
    if exposures.is_empty() {
        return Err(PipelineError::NoExposures(params.trigger_channel));
    }
    let mut events = inputs.stream.events();
    if let Some(erc) = &params.erc {
        events = erc_filter(&events, erc)?;
    }
    let wins = windows(&exposures, params.sync)?;
    let slices = assign_events(&events, &wins);
    let (w, h) = (inputs.stream.width(), inputs.stream.height());

    let per_frame: Vec<_> = wins
        .par_iter()
        .zip(slices.par_iter())
        .map(|(win, slice)| -> Result<_, PipelineError> {
            let acc = accumulate(slice, w as usize, h as usize, params.mode)?;
            let rendered = render_gray(&acc, params.clip);
            let labels_in: Vec<BoundingBox> =
                inputs.labels.iter().filter(|b| b.frame_id == win.frame_id).cloned().collect();
            let labels_out = transfer_labels(&inputs.homography, &labels_in)?;
            let mut diag = None;
            let zncc = match inputs.frames.get(&win.frame_id) {
                None => {
                    diag = Some(Diagnostic::warn(Some(win.frame_id), "no RGB frame; alignment not checked"));
                    None
                }
                Some(rgb) => {
                    let warped = warp_image(rgb, &inputs.homography, w as u32, h as u32)?;
                    match check_alignment(&warped, &acc.cells, &rendered, params) {
                        Ok(r) => Some(r),
                        Err(e) => {
                            diag = Some(Diagnostic::warn(Some(win.frame_id), format!("alignment check failed: {e}")));
                            None
                        }
                    }
                }
            };
            let report = FrameReport {
                frame_id: win.frame_id,
                window: WindowSpan { t0: win.t0, t1: win.t1 },
                n_events: slice.len(),
                deviation_px: zncc.map(|z| z.deviation),
                zncc,
                labels_out,
            };
            Ok((report, rendered, diag))
        })
        .collect::<Result<_, _>>()?;

    let mut frames = Vec::with_capacity(per_frame.len());
    let mut event_frames = Vec::with_capacity(per_frame.len());
    for (report, img, diag) in per_frame {
        event_frames.push((report.frame_id, img));
        frames.push(report);
        diagnostics.extend(diag);
    }

    let devs: Vec<f64> = frames.iter().filter_map(|f| f.deviation_px).collect();
    let deviation = (!devs.is_empty()).then(|| DeviationSummary {
        frames: devs.len(),
        mean_px: devs.iter().sum::<f64>() / devs.len() as f64,
        max_px: devs.iter().copied().fold(0.0, f64::max),
    });
    let rate = match rate_report(&events, inputs.stream.header, Encoding::Esf1, &RateReportParams::default()) {
        Ok(r) => Some(r),
        Err(e) => {
            diagnostics.push(Diagnostic::warn(None, format!("rate report skipped: {e}")));
            None
        }
    };

    Ok(PipelineRun {
        report: PipelineReport {
            frames,
            deviation,
            homography: inputs.homography,
            calibration: inputs.calibration,
            rate,
            meta: None,
        },
        event_frames,
        diagnostics,
    })
}

fn check_alignment(
    rgb: &GrayImage,
    cells: &[i32],
    rendered: &GrayImage,
    params: &PipelineParams,
) -> Result<ZnccResult, crate::verify::VerifyError> {
    let v = &params.verify;
    match (v.source, params.event_edges) {
        (MatchSource::SmoothedEdges, EventEdges::Fired) => {
            let rgb_edges = canny(rgb, v.canny_sigma, v.low_frac, v.high_frac)?;
            let fired = EdgeMap {
                width: rendered.width() as usize,
                height: rendered.height() as usize,
                data: cells.iter().map(|&c| (c != 0) as u8).collect(),
            };
            match_deviation(&rgb_edges, &fired, v.search_radius, v.margin)
        }
        _ => verify_alignment(rgb, rendered, v),
    }
}

fn frame_path(dir: &Path, frame_id: u32) -> Option<PathBuf> {
    ["pgm", "png"].iter().map(|ext| dir.join(format!("frame_{frame_id}.{ext}"))).find(|p| p.is_file())
}

/// Loads every input named by `cfg`.
pub fn load_inputs(cfg: &PipelineConfig) -> Result<PipelineInputs, PipelineError> {
    let bytes = fs::read(&cfg.events).map_err(io_err(&cfg.events))?;
    let stream = decode_esf(&bytes).map_err(|source| PipelineError::Decode { path: cfg.events.clone(), source })?;
    let exposures = match &cfg.exposures {
        Some(p) => Some(parse_exposures_csv(&fs::read_to_string(p).map_err(io_err(p))?)?),
        None => None,
    };
    let labels = match &cfg.labels {
        Some(p) => read_labels(p)?,
        None => Vec::new(),
    };
    let (homography, calibration) = match &cfg.homography {
        HomographySource::Identity => (Homography::identity(), None),
        HomographySource::File { path } => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            (serde_json::from_str(&text).map_err(PipelineError::HomographyJson)?, None)
        }
        HomographySource::Estimate { correspondences, threshold_px, max_iterations, seed } => {
            let text = fs::read_to_string(correspondences).map_err(io_err(correspondences))?;
            let corrs = parse_correspondences_csv(&text)?;
            let fit = estimate_homography_ransac(&corrs, *threshold_px, *max_iterations, *seed)?;
            let stats = reprojection_stats(&fit.homography, &corrs, Some(&fit.inliers))?;
            (fit.homography, Some(stats))
        }
    };
    let mut frames = BTreeMap::new();
    if let Some(dir) = &cfg.frames_dir {
        let ids: Vec<u32> = match &exposures {
            Some(e) => e.iter().map(|x| x.frame_id).collect(),
            None => triggers_to_exposures(stream.triggers(), cfg.params.trigger_channel)
                .0
                .iter()
                .map(|x| x.frame_id)
                .collect(),
        };
        for id in ids {
            if let Some(p) = frame_path(dir, id) {
                frames.insert(id, read_gray(&p)?);
            }
        }
    }
    Ok(PipelineInputs { stream, exposures, frames, labels, homography, calibration })
}

/// Loads inputs, runs, and writes `report.json`, `labels_out.json` and
/// `event_frames/frame_<id>.pgm` under the output directory.
pub fn run_config(cfg: &PipelineConfig, meta: Option<ReportMeta>) -> Result<PipelineRun, PipelineError> {
    let inputs = load_inputs(cfg)?;
    let mut run = run_pipeline(&inputs, &cfg.params)?;
    run.report.meta = meta;
    let out = &cfg.output_dir;
    let frames_dir = out.join("event_frames");
    fs::create_dir_all(&frames_dir).map_err(io_err(&frames_dir))?;
    for (id, img) in &run.event_frames {
        write_gray(&frames_dir.join(format!("frame_{id}.pgm")), img)?;
    }
    let labels: Vec<&BoundingBox> = run.report.frames.iter().flat_map(|f| &f.labels_out).collect();
    let write_json = |name: &str, value: String| {
        let p = out.join(name);
        fs::write(&p, value + "\n").map_err(io_err(&p))
    };
    write_json("labels_out.json", serde_json::to_string_pretty(&labels).expect("serializable"))?;
    write_json("report.json", serde_json::to_string_pretty(&run.report).expect("serializable"))?;
    Ok(run)
}
