use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use dvsfuse::accumulate::{accumulate as accumulate_events, render_gray, AccumulationMode};
use dvsfuse::event_io::{decode_esf, encode_esf, parse_csv, validate_stream, write_csv, EventStream};
use dvsfuse::geometry::{
    estimate_homography_ransac, parse_correspondences_csv, read_labels, reprojection_stats, transfer_labels,
    Homography,
};
use dvsfuse::image_io::{read_gray, write_gray};
use dvsfuse::optics::{crop_factor, effective_focal, field_of_view, resolution_estimate, Presets};
use dvsfuse::pipeline::{run_config, PipelineConfig, ReportMeta};
use dvsfuse::rate::{erc_filter, rate_report, rate_series, Encoding, ErcConfig, RateReportParams};
use dvsfuse::synth::{gen_scene, warp_view, SceneSpec};
use dvsfuse::sync::{
    assign_events, parse_exposures_csv, triggers_to_exposures, windows, write_exposures_csv, ExposureInterval,
    SyncMethod, SyncWindow,
};
use dvsfuse::verify::{verify_alignment, MatchSource, VerifyParams};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::*;

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn load_stream(path: &Path) -> CliResult<EventStream> {
    decode_esf(&read(path)?).map_err(|e| data(format!("{}: {e}", path.display())))
}

/// Writes a line to stdout; a closed pipe is not an error worth reporting.
fn out_line(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}

fn print_json<T: Serialize>(value: &T) {
    out_line(&serde_json::to_string_pretty(value).expect("serializable"));
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match output {
        Some(p) => write(p, bytes),
        None => match std::io::stdout().lock().write_all(bytes) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(data(e)),
            _ => Ok(()),
        },
    }
}

fn parse_method(s: &str) -> CliResult<SyncMethod> {
    s.parse().map_err(usage)
}

fn parse_pair(s: &str) -> CliResult<[f64; 2]> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [a, b] => Ok([a.trim().parse().map_err(usage)?, b.trim().parse().map_err(usage)?]),
        _ => Err(usage(format!("expected two comma-separated numbers, got {s:?}"))),
    }
}

fn exposures_for(stream: &EventStream, source: &ExposureSource) -> CliResult<Vec<ExposureInterval>> {
    if let Some(p) = &source.exposures {
        return parse_exposures_csv(&read_text(p)?).map_err(data);
    }
    if source.channel > 15 {
        return Err(usage("trigger channel must be 0..=15"));
    }
    let (exposures, unpaired) = triggers_to_exposures(stream.triggers(), source.channel);
    for u in unpaired {
        diag("warning", &format!("unpaired {:?} trigger edge at {} us", u.edge, u.t));
    }
    if exposures.is_empty() {
        return Err(data(format!("no exposures found on trigger channel {}", source.channel)));
    }
    Ok(exposures)
}

/// Reads an optional JSON object and applies `overrides` on top.
fn merge_config<T: DeserializeOwned>(base: Option<&Path>, overrides: Map<String, Value>) -> CliResult<T> {
    let mut obj = match base {
        Some(p) => match serde_json::from_str::<Value>(&read_text(p)?).map_err(data)? {
            Value::Object(m) => m,
            _ => return Err(data(format!("{}: config must be a JSON object", p.display()))),
        },
        None => Map::new(),
    };
    for (k, v) in overrides {
        match (obj.get_mut(&k), v) {
            (Some(Value::Object(dst)), Value::Object(src)) => dst.extend(src),
            (_, v) => {
                obj.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(obj)).map_err(|e| usage(format!("config: {e}")))
}

fn set<T: Serialize>(map: &mut Map<String, Value>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        map.insert(key.to_string(), serde_json::to_value(v).expect("serializable"));
    }
}

pub fn decode(a: DecodeArgs) -> CliResult<()> {
    let stream = load_stream(&a.input)?;
    emit(a.output.as_deref(), write_csv(&stream).as_bytes())
}

pub fn encode(a: EncodeArgs) -> CliResult<()> {
    let text = match &a.input {
        Some(p) => read_text(p)?,
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).map_err(data)?;
            s
        }
    };
    let stream = parse_csv(&text).map_err(data)?;
    let bytes = encode_esf(&stream).map_err(data)?;
    emit(a.output.as_deref(), &bytes)
}

pub fn info(a: InputArgs) -> CliResult<()> {
    let s = load_stream(&a.input)?;
    let first = s.items.first().map(|i| i.t());
    let last = s.items.last().map(|i| i.t());
    let mut channels: Vec<u8> = s.triggers().map(|t| t.channel).collect();
    channels.sort_unstable();
    channels.dedup();
    print_json(&json!({
        "width": s.header.width,
        "height": s.header.height,
        "version": s.header.version,
        "items": s.items.len(),
        "cd_events": s.cd_events().count(),
        "triggers": s.triggers().count(),
        "trigger_channels": channels,
        "t_first_us": first,
        "t_last_us": last,
        "duration_us": first.zip(last).map(|(f, l)| l - f),
    }));
    Ok(())
}

pub fn validate(a: InputArgs) -> CliResult<()> {
    let report = validate_stream(&load_stream(&a.input)?);
    print_json(&report);
    if report.is_clean() {
        Ok(())
    } else {
        Err(data(format!("{} finding(s)", report.findings.len())))
    }
}

#[derive(Serialize)]
struct WindowRow<'a> {
    #[serde(flatten)]
    window: &'a SyncWindow,
    n_events: usize,
}

pub fn sync(a: SyncArgs) -> CliResult<()> {
    let method = parse_method(&a.method)?;
    let stream = load_stream(&a.input)?;
    let exposures = exposures_for(&stream, &a.source)?;
    let wins = windows(&exposures, method).map_err(data)?;
    let events = stream.events();
    let slices = assign_events(&events, &wins);
    let rows: Vec<WindowRow> = wins.iter().zip(&slices).map(|(w, s)| WindowRow { window: w, n_events: s.len() }).collect();
    if let Some(p) = &a.exposures_out {
        write(p, write_exposures_csv(&exposures))?;
    }
    print_json(&json!({ "method": method.to_string(), "exposures": exposures.len(), "windows": rows }));
    Ok(())
}

pub fn accumulate(a: AccumulateArgs) -> CliResult<()> {
    let mode: AccumulationMode = a.mode.parse().map_err(usage)?;
    if a.clip == 0 {
        return Err(usage("--clip must be positive"));
    }
    let stream = load_stream(&a.input)?;
    let (w, h) = (stream.width() as usize, stream.height() as usize);
    let events = stream.events();
    if let (Some(t0), Some(t1)) = (a.t0, a.t1) {
        if t1 <= t0 {
            return Err(usage("--t1 must exceed --t0"));
        }
        let lo = events.partition_point(|e| e.t < t0);
        let hi = events.partition_point(|e| e.t < t1);
        let frame = accumulate_events(&events[lo..hi], w, h, mode).map_err(data)?;
        write_gray(&a.output, &render_gray(&frame, a.clip)).map_err(data)?;
        print_json(&json!({ "t0": t0, "t1": t1, "n_events": hi - lo, "output": a.output }));
        return Ok(());
    }
    let method = parse_method(&a.method)?;
    let exposures = exposures_for(&stream, &a.source)?;
    let wins = windows(&exposures, method).map_err(data)?;
    fs::create_dir_all(&a.output).map_err(|e| data(format!("{}: {e}", a.output.display())))?;
    let mut rows = Vec::new();
    for (win, slice) in wins.iter().zip(assign_events(&events, &wins)) {
        let frame = accumulate_events(slice, w, h, mode).map_err(data)?;
        let path = a.output.join(format!("frame_{}.pgm", win.frame_id));
        write_gray(&path, &render_gray(&frame, a.clip)).map_err(data)?;
        rows.push(WindowRow { window: win, n_events: slice.len() });
    }
    print_json(&json!({ "method": method.to_string(), "frames": rows }));
    Ok(())
}

pub fn calibrate(a: CalibrateArgs) -> CliResult<()> {
    if !(a.threshold > 0.0) || a.max_iterations == 0 {
        return Err(usage("--threshold and --max-iterations must be positive"));
    }
    let corrs = parse_correspondences_csv(&read_text(&a.correspondences)?).map_err(data)?;
    let fit = estimate_homography_ransac(&corrs, a.threshold, a.max_iterations, a.seed).map_err(data)?;
    let stats = reprojection_stats(&fit.homography, &corrs, Some(&fit.inliers)).map_err(data)?;
    if let Some(p) = &a.output {
        write(p, serde_json::to_string_pretty(&fit.homography).expect("serializable") + "\n")?;
    }
    let outliers: Vec<usize> = fit.inliers.iter().enumerate().filter(|(_, &k)| !k).map(|(i, _)| i).collect();
    print_json(&json!({
        "homography": fit.homography,
        "report": stats,
        "iterations": fit.iterations,
        "outliers": outliers,
    }));
    Ok(())
}

fn verify_params(f: &VerifyFlags) -> CliResult<VerifyParams> {
    let d = VerifyParams::default();
    let p = VerifyParams {
        canny_sigma: f.canny_sigma.unwrap_or(d.canny_sigma),
        low_frac: f.low_frac.unwrap_or(d.low_frac),
        high_frac: f.high_frac.unwrap_or(d.high_frac),
        search_radius: f.search_radius.unwrap_or(d.search_radius),
        margin: f.margin.unwrap_or(d.margin),
        source: if f.intensity { MatchSource::Intensity } else { d.source },
    };
    if !(p.canny_sigma > 0.0) || !(0.0 < p.low_frac && p.low_frac <= p.high_frac && p.high_frac <= 1.0) {
        return Err(usage("need canny_sigma > 0 and 0 < low_frac <= high_frac <= 1"));
    }
    Ok(p)
}

pub fn verify(a: VerifyArgs) -> CliResult<()> {
    let params = verify_params(&a.flags)?;
    let img_a = read_gray(&a.a).map_err(data)?;
    let img_b = read_gray(&a.b).map_err(data)?;
    let r = verify_alignment(&img_a, &img_b, &params).map_err(data)?;
    print_json(&r);
    Ok(())
}

pub fn rate(a: RateArgs) -> CliResult<()> {
    let encoding: Encoding = a.encoding.parse().map_err(usage)?;
    if a.bin_us == 0 || !(a.saturation > 0.0) {
        return Err(usage("--bin-us and --saturation must be positive"));
    }
    let stream = load_stream(&a.input)?;
    let events = stream.events();
    let params = RateReportParams { bin_width_us: a.bin_us, saturation_evps: a.saturation };
    let report = rate_report(&events, stream.header, encoding, &params).map_err(data)?;
    if let Some(p) = &a.series {
        write(p, rate_series(&events, a.bin_us).map_err(data)?.to_csv())?;
    }
    for bin in &report.saturated_bins {
        diag("warning", &format!("bin {} at {:.0} ev/s exceeds saturation", bin.index, bin.rate_evps));
    }
    print_json(&report);
    Ok(())
}

pub fn erc(a: ErcArgs) -> CliResult<()> {
    if a.cap == 0 || a.period_us == 0 {
        return Err(usage("--cap and --period-us must be positive"));
    }
    let stream = load_stream(&a.input)?;
    let events = stream.events();
    let cfg = ErcConfig { cap: a.cap, period_us: a.period_us };
    let kept = erc_filter(&events, &cfg).map_err(data)?;
    let triggers: Vec<_> = stream.triggers().copied().collect();
    let out = EventStream::merge(stream.header, &kept, &triggers);
    write(&a.output, encode_esf(&out).map_err(data)?)?;
    print_json(&json!({
        "budget_per_period": cfg.budget(),
        "events_in": events.len(),
        "events_out": kept.len(),
        "dropped": events.len() - kept.len(),
    }));
    Ok(())
}

pub fn optics(a: OpticsArgs) -> CliResult<()> {
    let presets = Presets::bundled();
    if a.list {
        print_json(&presets);
        return Ok(());
    }
    let sensor = presets.sensor(&a.sensor).map_err(usage)?;
    let focal = match (a.focal_mm, &a.lens) {
        (Some(f), _) => Some(f),
        (None, Some(name)) => Some(presets.lens(name).map_err(usage)?.focal_mm),
        (None, None) => None,
    };
    let pitch = a.pitch_um.unwrap_or(sensor.pitch_um);
    let mut out = Map::new();
    let mut lines = Vec::new();

    match (a.object_m, a.distance_m, focal) {
        (Some(o), Some(d), Some(f)) => {
            let est = resolution_estimate(o, d, f, pitch).map_err(usage)?;
            lines.push(format!("{:.2} px", est.extent_px));
            if let Some(w) = &est.warning {
                diag("warning", w);
            }
            out.insert("resolution".into(), serde_json::to_value(&est).expect("serializable"));
        }
        (None, None, _) => {}
        _ => return Err(usage("--object-m and --distance-m need a focal length (--focal-mm or --lens)")),
    }
    if let Some(reference) = &a.crop_from {
        let reference = presets.sensor(reference).map_err(usage)?;
        let ratio = crop_factor(reference, sensor).map_err(usage)?;
        lines.push(format!("crop factor {:.3}", ratio));
        out.insert("crop_factor".into(), json!(ratio));
        if let Some(f) = focal {
            let eff = effective_focal(f, ratio).map_err(usage)?;
            lines.push(format!("effective focal length {:.1} mm", eff));
            out.insert("effective_focal_mm".into(), json!(eff));
        }
    }
    if a.fov {
        let f = focal.ok_or_else(|| usage("--fov needs --focal-mm or --lens"))?;
        let fov = field_of_view(sensor, f).map_err(usage)?;
        lines.push(format!(
            "fov {:.2} x {:.2} deg (diagonal {:.2})",
            fov.horizontal_deg, fov.vertical_deg, fov.diagonal_deg
        ));
        out.insert("fov".into(), serde_json::to_value(fov).expect("serializable"));
    }
    if out.is_empty() {
        return Err(usage("nothing to compute; see --help"));
    }
    if a.json {
        print_json(&out);
    } else {
        for l in lines {
            out_line(&l);
        }
    }
    Ok(())
}

pub fn synth(a: SynthArgs) -> CliResult<()> {
    let mut o = Map::new();
    set(&mut o, "width", a.width);
    set(&mut o, "height", a.height);
    set(&mut o, "pattern", a.pattern.clone());
    set(&mut o, "pattern_size", a.size);
    set(&mut o, "velocity", a.velocity.as_deref().map(parse_pair).transpose()?);
    set(&mut o, "duration_s", a.duration_s);
    set(&mut o, "fps", a.fps);
    set(&mut o, "exposure_us", a.exposure_us);
    set(&mut o, "dt_us", a.dt_us);
    set(&mut o, "contrast_threshold", a.contrast);
    set(&mut o, "seed", a.seed);
    let spec: SceneSpec = merge_config(a.config.as_deref(), o)?;
    spec.validate().map_err(usage)?;
    let second = match (&a.homography, &a.translate) {
        (Some(p), _) => Some(serde_json::from_str::<Homography>(&read_text(p)?).map_err(data)?),
        (None, Some(t)) => {
            let [dx, dy] = parse_pair(t)?;
            Some(Homography::translation(dx, dy))
        }
        (None, None) => None,
    };
    let scene = gen_scene(&spec).map_err(data)?;
    scene.write_to(&a.output).map_err(data)?;
    let mut summary = json!({
        "output": a.output,
        "cd_events": scene.stream.cd_events().count(),
        "frames": scene.frames.len(),
    });
    if let Some(h) = second {
        let view = warp_view(&scene, &h).map_err(data)?;
        let dir = a.output.join("view2");
        view.write_to(&dir).map_err(data)?;
        summary["view2"] = json!({ "output": dir, "cd_events": view.stream.cd_events().count() });
    }
    print_json(&summary);
    Ok(())
}

pub fn label_transfer(a: LabelTransferArgs) -> CliResult<()> {
    let labels = read_labels(&a.labels).map_err(data)?;
    let h: Homography = serde_json::from_str(&read_text(&a.homography)?).map_err(data)?;
    let out = transfer_labels(&h, &labels).map_err(data)?;
    let text = serde_json::to_string_pretty(&out).expect("serializable") + "\n";
    emit(a.output.as_deref(), text.as_bytes())
}

pub fn pipeline(a: PipelineArgs) -> CliResult<()> {
    let mut o = Map::new();
    set(&mut o, "events", a.events.clone());
    set(&mut o, "exposures", a.exposures.clone());
    set(&mut o, "frames_dir", a.frames_dir.clone());
    set(&mut o, "labels", a.labels.clone());
    set(&mut o, "output_dir", a.output_dir.clone());
    if let Some(p) = &a.homography {
        o.insert("homography".into(), json!({ "kind": "file", "path": p }));
    }
    if let Some(p) = &a.correspondences {
        o.insert("homography".into(), json!({ "kind": "estimate", "correspondences": p }));
    }
    if let Some(m) = &a.method {
        o.insert("sync".into(), json!(parse_method(m)?.to_string()));
    }
    set(&mut o, "trigger_channel", a.channel);
    if let Some(m) = &a.mode {
        o.insert("mode".into(), serde_json::to_value(m.parse::<AccumulationMode>().map_err(usage)?).unwrap());
    }
    set(&mut o, "clip", a.clip);
    set(&mut o, "event_edges", a.event_edges.clone());
    let mut verify = Map::new();
    set(&mut verify, "canny_sigma", a.verify.canny_sigma);
    set(&mut verify, "low_frac", a.verify.low_frac);
    set(&mut verify, "high_frac", a.verify.high_frac);
    set(&mut verify, "search_radius", a.verify.search_radius);
    set(&mut verify, "margin", a.verify.margin);
    if a.verify.intensity {
        verify.insert("source".into(), json!("intensity"));
    }
    if !verify.is_empty() {
        o.insert("verify".into(), Value::Object(verify));
    }
    let mut erc = Map::new();
    set(&mut erc, "cap", a.erc_cap);
    set(&mut erc, "period_us", a.erc_period_us);
    if !erc.is_empty() {
        let defaults = ErcConfig::default();
        erc.entry("cap").or_insert(json!(defaults.cap));
        erc.entry("period_us").or_insert(json!(defaults.period_us));
        o.insert("erc".into(), Value::Object(erc));
    }

    let mut cfg: PipelineConfig = merge_config(a.config.as_deref(), o)?;
    if cfg.params.clip == 0 {
        return Err(usage("clip must be positive"));
    }
    cfg.params.verify = verify_params(&VerifyFlags {
        canny_sigma: Some(cfg.params.verify.canny_sigma),
        low_frac: Some(cfg.params.verify.low_frac),
        high_frac: Some(cfg.params.verify.high_frac),
        search_radius: Some(cfg.params.verify.search_radius),
        margin: Some(cfg.params.verify.margin),
        intensity: cfg.params.verify.source == MatchSource::Intensity,
    })?;
    let meta = (!a.no_meta).then(|| ReportMeta {
        tool: "dvsfuse".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        generated_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    });
    let run = run_config(&cfg, meta).map_err(data)?;
    for d in &run.diagnostics {
        eprintln!("{}", serde_json::to_string(d).expect("serializable"));
    }
    out_line(
        &json!({
            "report": cfg.output_dir.join("report.json"),
            "frames": run.report.frames.len(),
            "deviation": run.report.deviation,
        })
        .to_string(),
    );
    Ok(())
}
