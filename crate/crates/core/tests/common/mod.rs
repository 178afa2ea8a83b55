//! Generators shared by the integration tests.
#![allow(dead_code)]

use dvsfuse::event_io::{Edge, Event, EventStream, Polarity, StreamHeader, TriggerEvent};
use dvsfuse::geometry::{Correspondence, Homography};
use dvsfuse::sync::ExposureInterval;
use nalgebra::Point2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Sorted CD events and well-formed trigger pairs, with gaps that sometimes
/// cross one or several 2^24 µs epochs.
pub fn random_stream<R: Rng>(rng: &mut R, n_cd: usize, width: u16, height: u16) -> EventStream {
    let mut t = rng.gen_range(0..1u64 << 26);
    let mut events = Vec::with_capacity(n_cd);
    let mut triggers = Vec::new();
    let mut open: Option<u8> = None;
    for _ in 0..n_cd {
        t += match rng.gen_range(0..1000) {
            0 => rng.gen_range(1u64 << 24..1u64 << 27),
            1..=20 => rng.gen_range(4096..1 << 20),
            21..=400 => 0,
            _ => rng.gen_range(1..64),
        };
        let p = if rng.gen() { Polarity::Positive } else { Polarity::Negative };
        events.push(Event::new(t, rng.gen_range(0..width), rng.gen_range(0..height), p));
        if rng.gen_range(0..500) == 0 {
            match open.take() {
                Some(ch) => triggers.push(TriggerEvent::new(t, Edge::Falling, ch)),
                None => {
                    let ch = rng.gen_range(0..16);
                    triggers.push(TriggerEvent::new(t, Edge::Rising, ch));
                    open = Some(ch);
                }
            }
        }
    }
    if let Some(ch) = open {
        triggers.push(TriggerEvent::new(t + 1, Edge::Falling, ch));
    }
    EventStream::merge(StreamHeader::new(width, height), &events, &triggers)
}

/// Non-overlapping exposures with a nominal period, jitter and dropouts.
pub fn random_schedule<R: Rng>(rng: &mut R) -> Vec<ExposureInterval> {
    let n = rng.gen_range(2..40);
    let period: u64 = rng.gen_range(200..100_000);
    let exposure = rng.gen_range(1..period / 2);
    let jitter = period / 4;
    let mut start = rng.gen_range(0..3 * period);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        out.push(ExposureInterval { frame_id: k as u32, start, end: start + exposure });
        let skip = if rng.gen_range(0..10) == 0 { 2 } else { 1 };
        start += skip * period + rng.gen_range(0..=jitter) - jitter / 2;
        start = start.max(out[k].end + 1);
    }
    out
}

pub fn random_events_between<R: Rng>(rng: &mut R, n: usize, t_max: u64) -> Vec<Event> {
    let mut ts: Vec<u64> = (0..n).map(|_| rng.gen_range(0..t_max)).collect();
    ts.sort_unstable();
    ts.into_iter().map(|t| Event::new(t, 0, 0, Polarity::Positive)).collect()
}

/// A mild, well-conditioned projective map.
pub fn sample_homography() -> Homography {
    Homography::from_rows([[0.98, 0.05, 12.0], [-0.04, 1.03, -7.5], [2e-5, -1.5e-5, 1.0]]).unwrap()
}

/// `n` correspondences on a 1280×720 canvas. A fraction `outlier_frac`
/// is displaced by 10..60 px in a random direction; the rest get isotropic
/// Gaussian noise of `sigma`. Returns the planted-inlier mask too.
pub fn planted_correspondences<R: Rng>(
    rng: &mut R,
    h: &Homography,
    n: usize,
    outlier_frac: f64,
    sigma: f64,
) -> (Vec<Correspondence>, Vec<bool>) {
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    let n_out = (n as f64 * outlier_frac).round() as usize;
    let mut corrs = Vec::with_capacity(n);
    let mut inlier = Vec::with_capacity(n);
    for i in 0..n {
        let src = Point2::new(rng.gen_range(0.0..1280.0), rng.gen_range(0.0..720.0));
        let mut dst = h.project(src).unwrap();
        if i < n_out {
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = rng.gen_range(10.0..60.0);
            dst.x += r * a.cos();
            dst.y += r * a.sin();
        } else if sigma > 0.0 {
            dst.x += noise.sample(rng);
            dst.y += noise.sample(rng);
        }
        corrs.push(Correspondence::new(src, dst));
        inlier.push(i >= n_out);
    }
    (corrs, inlier)
}
