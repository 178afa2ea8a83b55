//! Acceptance suite: one line per criterion, nonzero exit on any gating failure.
//!
//! Run with `cargo test -p dvsfuse --test acceptance`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{planted_correspondences, random_events_between, random_schedule, random_stream, sample_homography};
use dvsfuse::accumulate::{accumulate, AccumulationMode};
use dvsfuse::event_io::{decode_esf, encode_esf, Event, EventStream, Polarity, StreamHeader, ESF_HEADER_LEN};
use dvsfuse::geometry::{
    estimate_homography_dlt, iou, reprojection_stats, transfer_labels, BoundingBox, Homography,
};
use dvsfuse::image_io::GrayImage;
use dvsfuse::optics::{object_extent_px, Presets};
use dvsfuse::pipeline::{run_pipeline, PipelineInputs, PipelineParams};
use dvsfuse::rate::{erc_filter, rate_report, Encoding, ErcConfig, RateReportParams};
use dvsfuse::sync::{windows, SyncMethod};
use dvsfuse::synth::{gen_scene, warp_view, Pattern, SceneSpec};
use dvsfuse::verify::{verify_alignment, MatchSource, VerifyParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Object resolution table: (object m, distance m, [8 mm, 35 mm, 100 mm] theory px).
const RESOLUTION_TABLE: [(f64, f64, [f64; 3]); 7] = [
    (0.30, 100.0, [5.0, 22.0, 61.0]),
    (0.30, 300.0, [1.6, 7.0, 20.0]),
    (0.30, 350.0, [1.4, 6.0, 18.0]),
    (0.02, 10.0, [3.0, 14.0, 41.0]),
    (0.02, 30.0, [1.0, 5.0, 14.0]),
    (0.02, 100.0, [0.3, 1.4, 4.0]),
    (0.02, 400.0, [0.08, 0.35, 1.0]),
];

fn resolution_table() -> Outcome {
    let pitch = Presets::bundled().sensor("evk4").map_err(|e| e.to_string())?.pitch_um;
    check((pitch - 4.86).abs() < 1e-9, || format!("evk4 pitch {pitch}"))?;
    let mut worst = 0.0f64;
    for (object, distance, row) in RESOLUTION_TABLE {
        for (focal, expected) in [8.0, 35.0, 100.0].into_iter().zip(row) {
            let px = object_extent_px(object, distance, focal, pitch).map_err(|e| e.to_string())?;
            let diff = (px.round() - expected.round()).abs();
            worst = worst.max(diff);
            check(diff <= 1.0, || format!("{object} m at {distance} m, {focal} mm: {px:.2} px vs {expected}"))?;
        }
    }
    Ok(format!("21 entries, worst rounded difference {worst} px"))
}

fn codec() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let stream = random_stream(&mut rng, 1_000_000, 1280, 720);
    let bytes = encode_esf(&stream).map_err(|e| e.to_string())?;
    let back = decode_esf(&bytes).map_err(|e| e.to_string())?;
    check(back == stream, || "round trip differs".into())?;

    let mut cases = 0usize;
    let mut try_decode = |input: &[u8]| -> Result<(), String> {
        cases += 1;
        match catch_unwind(AssertUnwindSafe(|| decode_esf(input))) {
            Err(_) => Err(format!("decoder panicked on {} bytes", input.len())),
            Ok(Err(e)) if e.offset().is_none() => Err(format!("error without offset: {e:?}")),
            Ok(_) => Ok(()),
        }
    };
    for _ in 0..5000 {
        let n = rng.gen_range(0..256);
        let junk: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
        try_decode(&junk)?;
    }
    let small = encode_esf(&random_stream(&mut rng, 2000, 320, 240)).map_err(|e| e.to_string())?;
    for _ in 0..5000 {
        let mut m = small.clone();
        match rng.gen_range(0..3) {
            0 => m.truncate(rng.gen_range(0..m.len())),
            1 => {
                for _ in 0..rng.gen_range(1..8) {
                    let i = rng.gen_range(ESF_HEADER_LEN..m.len());
                    m[i] = rng.gen();
                }
            }
            _ => {
                let i = rng.gen_range(0..m.len());
                m[i] ^= 1 << rng.gen_range(0..8);
            }
        }
        try_decode(&m)?;
    }
    let n = stream.items.len();
    Ok(format!("{n} items round-tripped, {cases} fuzz inputs handled"))
}

fn sync_partition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0usize;
    for s in 0..1000 {
        let exposures = random_schedule(&mut rng);
        let t_max = exposures.last().unwrap().end + 200_000;
        let events = random_events_between(&mut rng, 400, t_max);
        for method in [SyncMethod::FrameLeading, SyncMethod::MidpointPartition] {
            let wins = windows(&exposures, method).map_err(|e| e.to_string())?;
            let (lo, hi) = (wins.first().unwrap().t0, wins.last().unwrap().t1);
            for e in events.iter().filter(|e| lo <= e.t && e.t < hi) {
                let hits = wins.iter().filter(|w| w.t0 <= e.t && e.t < w.t1).count();
                check(hits == 1, || format!("schedule {s} {method}: t={} in {hits} windows", e.t))?;
                checked += 1;
            }
        }
        let m1 = windows(&exposures, SyncMethod::Exposure).map_err(|e| e.to_string())?;
        let m2 = windows(&exposures, SyncMethod::FrameLeading).map_err(|e| e.to_string())?;
        for (a, b) in m1.iter().zip(&m2) {
            check(a.frame_id == b.frame_id && b.t0 <= a.t0 && a.t1 <= b.t1, || {
                format!("schedule {s}: M1 {a:?} not inside M2 {b:?}")
            })?;
        }
    }
    Ok(format!("1000 schedules, {checked} memberships checked"))
}

fn calibration() -> Outcome {
    let h = sample_homography();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (corrs, planted) = planted_correspondences(&mut rng, &h, 300, 0.3, 0.5);
    let fit = dvsfuse::geometry::estimate_homography_ransac(&corrs, 2.0, 2000, 4).map_err(|e| e.to_string())?;
    let missed = planted.iter().zip(&fit.inliers).filter(|(&p, &f)| p && !f).count();
    let false_in = planted.iter().zip(&fit.inliers).filter(|(&p, &f)| !p && f).count();
    check(missed == 0, || format!("{missed} planted inliers rejected"))?;
    let stats = reprojection_stats(&fit.homography, &corrs, Some(&fit.inliers)).map_err(|e| e.to_string())?;
    let std = stats.component_std_px;
    check((0.40..=0.60).contains(&std), || format!("std {std:.3} px"))?;

    let (clean, _) = planted_correspondences(&mut rng, &h, 100, 0.0, 0.0);
    let exact = estimate_homography_dlt(&clean).map_err(|e| e.to_string())?;
    let max = reprojection_stats(&exact, &clean, None).map_err(|e| e.to_string())?.max_px;
    check(max < 1e-6, || format!("noiseless max residual {max:e}"))?;
    Ok(format!(
        "{}/{} inliers ({false_in} outliers kept), std {std:.3} px, noiseless max {max:.1e} px",
        fit.inlier_count(),
        corrs.len()
    ))
}

const SIZE: u32 = 128;
const PAD: i64 = 40;

fn texture(seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = SIZE as i64 + 2 * PAD;
    let blobs: Vec<(f64, f64, f64, f64)> = (0..60)
        .map(|_| (rng.gen_range(0.0..n as f64), rng.gen_range(0.0..n as f64), rng.gen_range(6.0..16.0), rng.gen_range(-1.0..1.0)))
        .collect();
    GrayImage::from_fn(n as u32, n as u32, |x, y| {
        let v: f64 = blobs
            .iter()
            .map(|&(cx, cy, s, a)| a * (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (2.0 * s * s)).exp())
            .sum();
        image::Luma([(128.0 + 90.0 * v.tanh()).round() as u8])
    })
}

fn crop(base: &GrayImage, dx: i64, dy: i64) -> GrayImage {
    GrayImage::from_fn(SIZE, SIZE, |x, y| *base.get_pixel((x as i64 + PAD - dx) as u32, (y as i64 + PAD - dy) as u32))
}

fn cross_correlation() -> Outcome {
    let base = texture(5);
    let a = crop(&base, 0, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut shifts: Vec<(i64, i64)> = (-16..=16).flat_map(|d| [(d, 0), (0, d), (d, d), (d, -d)]).collect();
    shifts.extend((0..40).map(|_| (rng.gen_range(-16..=16), rng.gen_range(-16..=16))));
    let mut worst = 0.0f64;
    for &(dx, dy) in &shifts {
        let b = crop(&base, dx, dy);
        for source in [MatchSource::SmoothedEdges, MatchSource::Intensity] {
            let r = verify_alignment(&a, &b, &VerifyParams { source, ..Default::default() }).map_err(|e| e.to_string())?;
            check((r.peak_dx as i64, r.peak_dy as i64) == (dx, dy), || format!("({dx},{dy}) {source:?}: peak {r:?}"))?;
            let err = (r.dx - dx as f64).abs().max((r.dy - dy as f64).abs());
            worst = worst.max(err);
            check(err <= 0.25, || format!("({dx},{dy}) {source:?}: refined {r:?}"))?;
        }
    }

    let spec = SceneSpec { width: 128, height: 96, pattern_size: 24.0, duration_s: 0.25, ..Default::default() };
    let rgb = gen_scene(&spec).map_err(|e| e.to_string())?;
    let dvs = warp_view(&rgb, &Homography::translation(5.0, 0.0)).map_err(|e| e.to_string())?;
    let inputs = PipelineInputs {
        stream: dvs.stream,
        exposures: None,
        frames: rgb.exposures.iter().zip(&rgb.frames).map(|(e, f)| (e.frame_id, f.clone())).collect(),
        labels: rgb.labels.clone(),
        homography: Homography::identity(),
        calibration: None,
    };
    let run = run_pipeline(&inputs, &PipelineParams::default()).map_err(|e| e.to_string())?;
    let mut devs = Vec::new();
    for f in &run.report.frames {
        let d = f.deviation_px.ok_or_else(|| format!("frame {} has no deviation", f.frame_id))?;
        check((d - 5.0).abs() <= 0.25, || format!("pipeline frame {}: deviation {d:.3}", f.frame_id))?;
        devs.push(d);
    }
    check(!devs.is_empty(), || "pipeline matched no frames".into())?;
    let mean = devs.iter().sum::<f64>() / devs.len() as f64;
    Ok(format!(
        "{} shifts exact, worst refined error {worst:.3} px; pipeline mean deviation {mean:.3} px over {} frames",
        shifts.len(),
        devs.len()
    ))
}

fn bursty(rng: &mut ChaCha8Rng, n: usize) -> Vec<Event> {
    let mut t = rng.gen_range(0..10_000u64);
    (0..n)
        .map(|_| {
            t += if rng.gen_range(0..50) == 0 { rng.gen_range(0..5000) } else { rng.gen_range(0..3) };
            Event::new(t, rng.gen_range(0..320), rng.gen_range(0..240), Polarity::Positive)
        })
        .collect()
}

fn erc_cap() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..300 {
        let n = rng.gen_range(0..20_000);
        let ev = bursty(&mut rng, n);
        let cfg = ErcConfig { cap: rng.gen_range(1_000..2_000_000), period_us: rng.gen_range(1..5000) };
        let budget = (cfg.cap as u128 * cfg.period_us as u128 / 1_000_000) as usize;
        let out = erc_filter(&ev, &cfg).map_err(|e| e.to_string())?;
        let mut i = 0;
        while i < out.len() {
            let k = out[i].t / cfg.period_us;
            let c = out[i..].iter().take_while(|e| e.t / cfg.period_us == k).count();
            check(c <= budget, || format!("case {case}: period {k} kept {c} > {budget}"))?;
            i += c;
        }
        check(erc_filter(&out, &cfg).map_err(|e| e.to_string())? == out, || format!("case {case}: not idempotent"))?;
        let mut per_period = std::collections::HashMap::new();
        for e in &ev {
            *per_period.entry(e.t / cfg.period_us).or_insert(0u64) += 1;
        }
        let worst = per_period.values().copied().max().unwrap_or(0);
        let loose = ErcConfig { cap: (worst * 1_000_000).div_ceil(cfg.period_us).max(1), ..cfg };
        check(erc_filter(&ev, &loose).map_err(|e| e.to_string())? == ev, || format!("case {case}: under-cap stream modified"))?;
    }
    Ok("300 bursty streams: cap, under-cap identity and idempotence hold".into())
}

fn bandwidth() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..200 {
        let n = rng.gen_range(2..20_000);
        let ev = bursty(&mut rng, n);
        let header = StreamHeader::new(320, 240);
        let duration = (ev.last().unwrap().t - ev[0].t).max(1);
        let p = RateReportParams::default();
        let f8 = rate_report(&ev, header, Encoding::Fixed8, &p).map_err(|e| e.to_string())?;
        let want = (8 * ev.len() as u128 * 1_000_000) as f64 / duration as f64;
        check(f8.mean_bps == want, || format!("case {case}: fixed8 {} vs {want}", f8.mean_bps))?;
        let bytes = encode_esf(&EventStream::merge(header, &ev, &[])).map_err(|e| e.to_string())?.len();
        let es = rate_report(&ev, header, Encoding::Esf1, &p).map_err(|e| e.to_string())?;
        let want = (bytes as u128 * 1_000_000) as f64 / duration as f64;
        check(es.mean_bps == want && es.total_bytes == bytes as u64, || {
            format!("case {case}: esf1 {} vs {want}", es.mean_bps)
        })?;
    }
    Ok("200 streams: fixed8 and esf1 bandwidth identities exact".into())
}

/// Bounding box of pixels brighter than the midpoint of background and foreground.
fn foreground_box(img: &GrayImage, level: u8) -> Option<(f64, f64, f64, f64)> {
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for (x, y, p) in img.enumerate_pixels() {
        if p.0[0] > level {
            (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1));
        }
    }
    (x0 < x1).then(|| (x0 as f64, y0 as f64, (x1 - x0) as f64, (y1 - y0) as f64))
}

fn label_transfer() -> Outcome {
    let spec = SceneSpec {
        width: 200,
        height: 150,
        pattern: Pattern::Rectangle,
        pattern_size: 30.0,
        start: Some([40.0, 50.0]),
        velocity: [150.0, 60.0],
        duration_s: 0.5,
        ..Default::default()
    };
    let h = Homography::from_rows([[1.03, 0.04, 6.0], [-0.03, 0.97, 4.0], [1e-4, -5e-5, 1.0]]).map_err(|e| e.to_string())?;
    let rgb = gen_scene(&spec).map_err(|e| e.to_string())?;
    let view = warp_view(&rgb, &h).map_err(|e| e.to_string())?;
    let moved = transfer_labels(&h, &rgb.labels).map_err(|e| e.to_string())?;
    check(moved.len() == view.labels.len() && !moved.is_empty(), || "label count mismatch".into())?;
    let level = ((spec.background + spec.foreground) / 2.0) as u8;
    let mut worst = 1.0f64;
    for ((m, truth), frame) in moved.iter().zip(&view.labels).zip(&view.frames) {
        let score = iou(m, truth);
        worst = worst.min(score);
        check(score >= 0.8, || format!("frame {}: IoU {score:.3} against ground truth", m.frame_id))?;
        let (x, y, w, hh) = foreground_box(frame, level).ok_or_else(|| format!("frame {}: no foreground", m.frame_id))?;
        let seen = BoundingBox::new(m.frame_id, m.class_name.clone(), x, y, w, hh);
        let score = iou(m, &seen);
        worst = worst.min(score);
        check(score >= 0.8, || format!("frame {}: IoU {score:.3} against rendered foreground", m.frame_id))?;
    }
    Ok(format!("{} frames, worst IoU {worst:.3}", moved.len()))
}

fn throughput() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let stream = random_stream(&mut rng, 2_000_000, 1280, 720);
    let bytes = encode_esf(&stream).map_err(|e| e.to_string())?;
    let n = stream.items.len() as f64;
    let t = Instant::now();
    let back = decode_esf(&bytes).map_err(|e| e.to_string())?;
    let decode = n / t.elapsed().as_secs_f64() / 1e6;
    let events = back.events();
    let t = Instant::now();
    let frame = accumulate(&events, 1280, 720, AccumulationMode::Polarity).map_err(|e| e.to_string())?;
    let acc = events.len() as f64 / t.elapsed().as_secs_f64() / 1e6;
    std::hint::black_box(frame);
    let msg = format!("decode {decode:.1} MEv/s (target 10), accumulate {acc:.1} MEv/s (target 50)");
    if decode >= 10.0 && acc >= 50.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    gating: bool,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { id: 1, name: "object resolution table", budget: secs(1), gating: true, run: resolution_table },
        Criterion { id: 2, name: "codec soundness", budget: secs(10), gating: true, run: codec },
        Criterion { id: 3, name: "sync partition", budget: secs(10), gating: true, run: sync_partition },
        Criterion { id: 4, name: "calibration accuracy", budget: secs(5), gating: true, run: calibration },
        Criterion { id: 5, name: "cross-correlation deviation", budget: secs(30), gating: true, run: cross_correlation },
        Criterion { id: 6, name: "event-rate control cap", budget: secs(5), gating: true, run: erc_cap },
        Criterion { id: 7, name: "bandwidth accounting", budget: secs(5), gating: true, run: bandwidth },
        Criterion { id: 8, name: "label transfer", budget: secs(30), gating: true, run: label_transfer },
        Criterion { id: 9, name: "throughput (reported)", budget: secs(60), gating: false, run: throughput },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(c.run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(m) if elapsed > c.budget => Err(format!("{m}; over the {:?} budget", c.budget)),
            o => o,
        };
        let (tag, msg) = match &outcome {
            Ok(m) => ("PASS", m.as_str()),
            Err(m) if !c.gating => ("INFO", m.as_str()),
            Err(m) => ("FAIL", m.as_str()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("[{tag}] criterion {}: {} ({:.2} s) - {msg}", c.id, c.name, elapsed.as_secs_f64());
    }
    if failed == 0 {
        println!("all gating criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} gating criteria failed");
        ExitCode::FAILURE
    }
}
