//! Exposure extraction from trigger edges and per-frame event windows.
//!
//! All windows are half-open `[t0, t1)` in microseconds. With `s_k`/`e_k` the
//! start/end of exposure `k`, `m_k` its midpoint and `P` the median spacing of
//! exposure starts:
//!
//! * `Exposure`: `[s_k, e_k)`
//! * `FrameLeading`: `[s_k, s_{k+1})`, last frame `[s_k, s_k + P)`
//! * `Centered`: `[m_k - P/2, m_k + P/2)`
//! * `MidpointPartition`: boundaries halfway between consecutive midpoints,
//!   outer edges at `m_0 - P/2` and `m_last + P/2`
//! * `Custom`: `[anchor_k - pre, anchor_k + post)`
//!
//! Midpoints are kept in doubled units so half-microsecond values round the
//! same way everywhere (floor), and negative lower bounds clamp to zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_io::{Edge, Event, TriggerEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExposureInterval {
    pub frame_id: u32,
    pub start: u64,
    pub end: u64,
}

impl ExposureInterval {
    fn doubled_mid(&self) -> i64 {
        self.start as i64 + self.end as i64
    }

    pub fn duration(&self) -> u64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Start,
    Midpoint,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMethod {
    /// M1: events during the exposure only.
    Exposure,
    /// M2: from one exposure start to the next.
    FrameLeading,
    /// M3: one period centred on the exposure midpoint.
    Centered,
    /// M4: partition at midpoints between consecutive exposure midpoints.
    MidpointPartition,
    Custom { anchor: Anchor, pre: u64, post: u64 },
}

impl SyncMethod {
    fn needs_period(&self) -> bool {
        matches!(self, SyncMethod::FrameLeading | SyncMethod::Centered | SyncMethod::MidpointPartition)
    }
}

impl fmt::Display for SyncMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyncMethod::Exposure => write!(f, "m1"),
            SyncMethod::FrameLeading => write!(f, "m2"),
            SyncMethod::Centered => write!(f, "m3"),
            SyncMethod::MidpointPartition => write!(f, "m4"),
            SyncMethod::Custom { anchor, pre, post } => {
                let a = match anchor {
                    Anchor::Start => "start",
                    Anchor::Midpoint => "mid",
                    Anchor::End => "end",
                };
                write!(f, "custom:{a}:{pre}:{post}")
            }
        }
    }
}

impl FromStr for SyncMethod {
    type Err = String;

    /// Accepts `m1`..`m4` (or their long names) and `custom:<start|mid|end>:<pre>:<post>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "m1" | "exposure" => Ok(SyncMethod::Exposure),
            "m2" | "frame-leading" => Ok(SyncMethod::FrameLeading),
            "m3" | "centered" => Ok(SyncMethod::Centered),
            "m4" | "midpoint-partition" => Ok(SyncMethod::MidpointPartition),
            other => {
                let parts: Vec<&str> = other.split(':').collect();
                let ["custom", anchor, pre, post] = parts.as_slice() else {
                    return Err(format!("unknown sync method {s:?}"));
                };
                let anchor = match *anchor {
                    "start" => Anchor::Start,
                    "mid" | "midpoint" => Anchor::Midpoint,
                    "end" => Anchor::End,
                    a => return Err(format!("unknown anchor {a:?}")),
                };
                let pre = pre.parse().map_err(|_| format!("bad pre {pre:?}"))?;
                let post = post.parse().map_err(|_| format!("bad post {post:?}"))?;
                Ok(SyncMethod::Custom { anchor, pre, post })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncWindow {
    pub frame_id: u32,
    pub t0: u64,
    pub t1: u64,
    pub method: SyncMethod,
}

impl SyncWindow {
    pub fn contains(&self, t: u64) -> bool {
        self.t0 <= t && t < self.t1
    }

    pub fn width(&self) -> u64 {
        self.t1 - self.t0
    }
}

/// A trigger edge that could not be paired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct UnpairedEdge {
    pub t: u64,
    pub edge: Edge,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyncError {
    #[error("method {method} needs at least {needed} exposures, got {got}")]
    TooFewExposures { method: SyncMethod, needed: usize, got: usize },
}

/// Pairs rising/falling edges on `channel` into exposure intervals.
///
/// Anomalies are collected and skipped: a falling edge with no open exposure,
/// a rising edge that replaces an open one, or an exposure still open at the
/// end. Zero-length pairs are dropped as anomalies as well.
pub fn triggers_to_exposures<'a, I>(triggers: I, channel: u8) -> (Vec<ExposureInterval>, Vec<UnpairedEdge>)
where
    I: IntoIterator<Item = &'a TriggerEvent>,
{
    let mut exposures = Vec::new();
    let mut anomalies = Vec::new();
    let mut open: Option<u64> = None;

    for tr in triggers.into_iter().filter(|t| t.channel == channel) {
        match tr.edge {
            Edge::Rising => {
                if let Some(prev) = open.replace(tr.t) {
                    anomalies.push(UnpairedEdge { t: prev, edge: Edge::Rising });
                }
            }
            Edge::Falling => match open.take() {
                Some(start) if start < tr.t => exposures.push(ExposureInterval {
                    frame_id: exposures.len() as u32,
                    start,
                    end: tr.t,
                }),
                Some(start) => {
                    anomalies.push(UnpairedEdge { t: start, edge: Edge::Rising });
                    anomalies.push(UnpairedEdge { t: tr.t, edge: Edge::Falling });
                }
                None => anomalies.push(UnpairedEdge { t: tr.t, edge: Edge::Falling }),
            },
        }
    }
    if let Some(start) = open {
        anomalies.push(UnpairedEdge { t: start, edge: Edge::Rising });
    }
    (exposures, anomalies)
}

/// Median spacing of successive exposure starts. Even counts take the floor
/// of the mean of the two middle values.
pub fn frame_period(exposures: &[ExposureInterval]) -> Option<u64> {
    if exposures.len() < 2 {
        return None;
    }
    let mut diffs: Vec<u64> = exposures.windows(2).map(|w| w[1].start - w[0].start).collect();
    diffs.sort_unstable();
    let n = diffs.len();
    Some(if n % 2 == 1 { diffs[n / 2] } else { (diffs[n / 2 - 1] + diffs[n / 2]) / 2 })
}

fn floor_half(v: i64) -> i64 {
    v.div_euclid(2)
}

/// Computes one integration window per exposure.
pub fn windows(exposures: &[ExposureInterval], method: SyncMethod) -> Result<Vec<SyncWindow>, SyncError> {
    let needed = if method.needs_period() { 2 } else { 1 };
    if exposures.len() < needed {
        return Err(SyncError::TooFewExposures { method, needed, got: exposures.len() });
    }
    let period = frame_period(exposures).unwrap_or(0) as i64;
    let n = exposures.len();

    let bounds: Vec<(i64, i64)> = match method {
        SyncMethod::Exposure => exposures.iter().map(|e| (e.start as i64, e.end as i64)).collect(),
        SyncMethod::FrameLeading => exposures
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let t0 = e.start as i64;
                let t1 = match exposures.get(k + 1) {
                    Some(next) => next.start as i64,
                    // Never cut the last exposure short.
                    None => (t0 + period).max(e.end as i64),
                };
                (t0, t1)
            })
            .collect(),
        SyncMethod::Centered => exposures
            .iter()
            .map(|e| {
                let m2 = e.doubled_mid();
                (floor_half(m2 - period), floor_half(m2 + period))
            })
            .collect(),
        SyncMethod::MidpointPartition => {
            let mids: Vec<i64> = exposures.iter().map(ExposureInterval::doubled_mid).collect();
            let mut cuts = Vec::with_capacity(n + 1);
            cuts.push(floor_half(mids[0] - period));
            for w in mids.windows(2) {
                cuts.push((w[0] + w[1]).div_euclid(4));
            }
            cuts.push(floor_half(mids[n - 1] + period));
            cuts.windows(2).map(|c| (c[0], c[1])).collect()
        }
        SyncMethod::Custom { anchor, pre, post } => exposures
            .iter()
            .map(|e| {
                let a = match anchor {
                    Anchor::Start => e.start as i64,
                    Anchor::Midpoint => floor_half(e.doubled_mid()),
                    Anchor::End => e.end as i64,
                };
                (a - pre as i64, a + post as i64)
            })
            .collect(),
    };

    Ok(exposures
        .iter()
        .zip(bounds)
        .map(|(e, (t0, t1))| {
            let t0 = t0.max(0) as u64;
            let t1 = (t1.max(0) as u64).max(t0);
            SyncWindow { frame_id: e.frame_id, t0, t1, method }
        })
        .collect())
}

/// Index range of `events` falling in `[t0, t1)`.
pub fn window_range(events: &[Event], window: &SyncWindow) -> std::ops::Range<usize> {
    let lo = events.partition_point(|e| e.t < window.t0);
    let hi = lo + events[lo..].partition_point(|e| e.t < window.t1);
    lo..hi
}

/// Slices a time-ordered event list by window.
pub fn assign_events<'a>(events: &'a [Event], windows: &[SyncWindow]) -> Vec<&'a [Event]> {
    windows.iter().map(|w| &events[window_range(events, w)]).collect()
}

/// Writes `frame_id,start_us,end_us` with a header line.
pub fn write_exposures_csv(exposures: &[ExposureInterval]) -> String {
    let mut out = String::from("frame_id,start_us,end_us\n");
    for e in exposures {
        out.push_str(&format!("{},{},{}\n", e.frame_id, e.start, e.end));
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("exposures csv line {line}: {reason}")]
pub struct ExposureCsvError {
    pub line: usize,
    pub reason: String,
}

pub fn parse_exposures_csv(text: &str) -> Result<Vec<ExposureInterval>, ExposureCsvError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("frame_id")) {
            continue;
        }
        let err = |reason: &str| ExposureCsvError { line: idx + 1, reason: reason.to_string() };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [id, start, end] = fields.as_slice() else {
            return Err(err("expected frame_id,start_us,end_us"));
        };
        let e = ExposureInterval {
            frame_id: id.parse().map_err(|_| err("bad frame_id"))?,
            start: start.parse().map_err(|_| err("bad start_us"))?,
            end: end.parse().map_err(|_| err("bad end_us"))?,
        };
        if e.start >= e.end {
            return Err(err("start must precede end"));
        }
        if let Some(prev) = out.last() {
            let prev: &ExposureInterval = prev;
            if e.start < prev.end {
                return Err(err("exposures must be sorted and non-overlapping"));
            }
        }
        out.push(e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_io::Polarity;

    fn trig(t: u64, edge: Edge) -> TriggerEvent {
        TriggerEvent::new(t, edge, 0)
    }

    fn two_exposures() -> Vec<ExposureInterval> {
        vec![
            ExposureInterval { frame_id: 0, start: 1000, end: 1500 },
            ExposureInterval { frame_id: 1, start: 11000, end: 11500 },
        ]
    }

    #[test]
    fn pairs_edges_in_order() {
        let t = [
            trig(1000, Edge::Rising),
            trig(1500, Edge::Falling),
            trig(11000, Edge::Rising),
            trig(11500, Edge::Falling),
        ];
        let (exp, bad) = triggers_to_exposures(&t, 0);
        assert!(bad.is_empty());
        assert_eq!(exp, two_exposures());
    }

    #[test]
    fn leading_falling_edge_is_skipped() {
        let t = [trig(500, Edge::Falling), trig(1000, Edge::Rising), trig(1500, Edge::Falling)];
        let (exp, bad) = triggers_to_exposures(&t, 0);
        assert_eq!(bad, vec![UnpairedEdge { t: 500, edge: Edge::Falling }]);
        assert_eq!(exp, vec![ExposureInterval { frame_id: 0, start: 1000, end: 1500 }]);
    }

    #[test]
    fn trailing_rising_edge_reported_and_other_channels_ignored() {
        let t = [
            trig(0, Edge::Rising),
            TriggerEvent::new(5, Edge::Falling, 3),
            trig(10, Edge::Falling),
            trig(20, Edge::Rising),
        ];
        let (exp, bad) = triggers_to_exposures(&t, 0);
        assert_eq!(exp.len(), 1);
        assert_eq!(bad, vec![UnpairedEdge { t: 20, edge: Edge::Rising }]);
        let (exp, bad) = triggers_to_exposures(&[], 0);
        assert!(exp.is_empty() && bad.is_empty());
    }

    #[test]
    fn reference_windows() {
        let exp = two_exposures();
        let m1 = windows(&exp, SyncMethod::Exposure).unwrap();
        assert_eq!((m1[0].t0, m1[0].t1), (1000, 1500));
        let m2 = windows(&exp, SyncMethod::FrameLeading).unwrap();
        assert_eq!((m2[0].t0, m2[0].t1), (1000, 11000));
        assert_eq!((m2[1].t0, m2[1].t1), (11000, 21000));
        let m3 = windows(&exp, SyncMethod::Centered).unwrap();
        assert_eq!((m3[0].t0, m3[0].t1), (0, 6250));
        assert_eq!((m3[1].t0, m3[1].t1), (6250, 16250));
        let m4 = windows(&exp, SyncMethod::MidpointPartition).unwrap();
        assert_eq!((m4[0].t0, m4[0].t1), (0, 6250));
        assert_eq!((m4[1].t0, m4[1].t1), (6250, 16250));
        let c = windows(&exp, SyncMethod::Custom { anchor: Anchor::End, pre: 200, post: 300 }).unwrap();
        assert_eq!((c[1].t0, c[1].t1), (11300, 11800));
    }

    #[test]
    fn too_few_exposures() {
        let one = &two_exposures()[..1];
        assert!(windows(one, SyncMethod::Exposure).is_ok());
        assert_eq!(
            windows(one, SyncMethod::Centered),
            Err(SyncError::TooFewExposures { method: SyncMethod::Centered, needed: 2, got: 1 })
        );
        assert!(windows(&[], SyncMethod::Exposure).is_err());
    }

    #[test]
    fn period_is_median() {
        let starts = [0u64, 100, 200, 400, 500];
        let exp: Vec<_> = starts
            .iter()
            .enumerate()
            .map(|(i, &s)| ExposureInterval { frame_id: i as u32, start: s, end: s + 10 })
            .collect();
        assert_eq!(frame_period(&exp), Some(100));
    }

    #[test]
    fn half_open_assignment() {
        let events: Vec<Event> =
            [999u64, 1000, 1499, 1500].iter().map(|&t| Event::new(t, 0, 0, Polarity::Positive)).collect();
        let w = SyncWindow { frame_id: 0, t0: 1000, t1: 1500, method: SyncMethod::Exposure };
        let empty = SyncWindow { t0: 1200, t1: 1200, ..w };
        let slices = assign_events(&events, &[w, empty]);
        assert_eq!(slices[0].iter().map(|e| e.t).collect::<Vec<_>>(), vec![1000, 1499]);
        assert!(slices[1].is_empty());
    }

    #[test]
    fn method_names_parse() {
        for m in ["m1", "m2", "m3", "m4", "custom:mid:100:200"] {
            let parsed: SyncMethod = m.parse().unwrap();
            assert_eq!(parsed.to_string(), m);
        }
        assert!("m5".parse::<SyncMethod>().is_err());
    }

    #[test]
    fn exposures_csv_round_trip() {
        let exp = two_exposures();
        assert_eq!(parse_exposures_csv(&write_exposures_csv(&exp)).unwrap(), exp);
        assert!(parse_exposures_csv("0,10,5\n").is_err());
    }
}
