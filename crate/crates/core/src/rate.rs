//! Event-rate time series, event-rate-controller (ERC) simulation and
//! bandwidth accounting.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_io::{EncodeError, EsfEncoder, Event, Item, StreamHeader, ESF_HEADER_LEN};

/// Default ERC cap, events per second.
pub const DEFAULT_ERC_CAP: u64 = 100_000_000;
/// Default ERC control period, µs.
pub const DEFAULT_ERC_PERIOD_US: u64 = 1000;
/// Rate at which a bin is flagged as saturated, events per second.
pub const DEFAULT_SATURATION_EVPS: f64 = 115e6;
pub const DEFAULT_BIN_WIDTH_US: u64 = 1000;
/// Bytes per event of the fixed-width reference encoding.
pub const FIXED8_BYTES_PER_EVENT: u64 = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSeries {
    pub bin_width_us: u64,
    /// Bin `k` covers `[k * bin_width_us, (k + 1) * bin_width_us)`.
    pub counts: Vec<u64>,
}

impl RateSeries {
    pub fn rate_evps(&self, k: usize) -> f64 {
        self.counts[k] as f64 * 1e6 / self.bin_width_us as f64
    }

    pub fn rates_evps(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|k| self.rate_evps(k)).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `bin_start_us,count` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start_us,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{}\n", k as u64 * self.bin_width_us, c));
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RateError {
    #[error("bin width must be positive")]
    ZeroBinWidth,
    #[error("need at least 2 events, got {0}")]
    TooFewEvents(usize),
    #[error("erc cap and period must be positive")]
    InvalidErcConfig,
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

/// Histogram of event timestamps in fixed bins starting at t = 0.
pub fn rate_series(events: &[Event], bin_width_us: u64) -> Result<RateSeries, RateError> {
    if bin_width_us == 0 {
        return Err(RateError::ZeroBinWidth);
    }
    let Some(last) = events.iter().map(|e| e.t).max() else {
        return Ok(RateSeries { bin_width_us, counts: Vec::new() });
    };
    let mut counts = vec![0u64; (last / bin_width_us) as usize + 1];
    for e in events {
        counts[(e.t / bin_width_us) as usize] += 1;
    }
    Ok(RateSeries { bin_width_us, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErcConfig {
    /// Events per second.
    pub cap: u64,
    /// Control period, µs.
    pub period_us: u64,
}

impl Default for ErcConfig {
    fn default() -> Self {
        Self { cap: DEFAULT_ERC_CAP, period_us: DEFAULT_ERC_PERIOD_US }
    }
}

impl ErcConfig {
    /// Events allowed per control period: `floor(cap * period / 1e6)`.
    pub fn budget(&self) -> u64 {
        ((self.cap as u128 * self.period_us as u128) / 1_000_000) as u64
    }
}

/// Caps every control period at [`ErcConfig::budget`] events.
///
/// A period with `n > B` events keeps those at indices `round(i * n / B)`
/// for `i = 0..B`, i.e. evenly spread decimation; periods at or under budget
/// pass untouched.
pub fn erc_filter(events: &[Event], cfg: &ErcConfig) -> Result<Vec<Event>, RateError> {
    if cfg.cap == 0 || cfg.period_us == 0 {
        return Err(RateError::InvalidErcConfig);
    }
    let budget = cfg.budget() as u128;
    let mut out = Vec::with_capacity(events.len());
    let mut start = 0;
    while start < events.len() {
        let period = events[start].t / cfg.period_us;
        let len = events[start..].iter().take_while(|e| e.t / cfg.period_us == period).count();
        let chunk = &events[start..start + len];
        let n = len as u128;
        if n <= budget {
            out.extend_from_slice(chunk);
        } else {
            // round(i*n/B) with halves rounded up, in integers.
            out.extend((0..budget).map(|i| chunk[((2 * i * n + budget) / (2 * budget)) as usize]));
        }
        start += len;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Actual ESF-1 encoder output, header included.
    Esf1,
    /// Fixed 8 bytes per event.
    Fixed8,
}

impl FromStr for Encoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "esf1" => Ok(Encoding::Esf1),
            "fixed8" => Ok(Encoding::Fixed8),
            _ => Err(format!("unknown encoding {s:?} (esf1|fixed8)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaturatedBin {
    pub index: usize,
    pub rate_evps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub mean_evps: f64,
    pub peak_evps: f64,
    #[serde(rename = "mean_Bps")]
    pub mean_bps: f64,
    #[serde(rename = "peak_Bps")]
    pub peak_bps: f64,
    pub saturated_bins: Vec<SaturatedBin>,
    pub encoding: Encoding,
    pub events: u64,
    pub total_bytes: u64,
    pub duration_us: u64,
    pub bin_width_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReportParams {
    pub bin_width_us: u64,
    pub saturation_evps: f64,
}

impl Default for RateReportParams {
    fn default() -> Self {
        Self { bin_width_us: DEFAULT_BIN_WIDTH_US, saturation_evps: DEFAULT_SATURATION_EVPS }
    }
}

/// Mean/peak event rate and bandwidth of a CD event sequence.
///
/// Duration is `last.t - first.t` (at least 1 µs). The mean rate bounds the
/// peak from below, so spans shorter than one bin report `peak == mean`.
/// For `esf1` the byte count is the full encoder output for a stream of
/// these events under `header`, and each bin is charged the words emitted
/// for its events.
pub fn rate_report(
    events: &[Event],
    header: StreamHeader,
    encoding: Encoding,
    params: &RateReportParams,
) -> Result<RateReport, RateError> {
    if events.len() < 2 {
        return Err(RateError::TooFewEvents(events.len()));
    }
    let series = rate_series(events, params.bin_width_us)?;
    let first = events.iter().map(|e| e.t).min().expect("non-empty");
    let last = events.iter().map(|e| e.t).max().expect("non-empty");
    let duration_us = (last - first).max(1);
    let n = events.len() as u64;

    let (total_bytes, bin_bytes): (u64, Vec<u64>) = match encoding {
        Encoding::Fixed8 => {
            (FIXED8_BYTES_PER_EVENT * n, series.counts.iter().map(|c| c * FIXED8_BYTES_PER_EVENT).collect())
        }
        Encoding::Esf1 => {
            let mut enc = EsfEncoder::new(header)?;
            let mut per_bin = vec![0u64; series.counts.len()];
            for e in events {
                let words = enc.push(&Item::Cd(*e))?;
                per_bin[(e.t / params.bin_width_us) as usize] += 2 * words as u64;
            }
            ((ESF_HEADER_LEN + 2 * enc.word_count()) as u64, per_bin)
        }
    };

    let per_second = |count: u64, span_us: u64| (count as u128 * 1_000_000) as f64 / span_us as f64;
    let mean_evps = per_second(n, duration_us);
    let mean_bps = per_second(total_bytes, duration_us);
    let max_count = series.counts.iter().copied().max().unwrap_or(0);
    let max_bytes = bin_bytes.iter().copied().max().unwrap_or(0);
    let peak_evps = per_second(max_count, params.bin_width_us).max(mean_evps);
    let peak_bps = per_second(max_bytes, params.bin_width_us).max(mean_bps);

    let saturated_bins = series
        .rates_evps()
        .into_iter()
        .enumerate()
        .filter(|(_, r)| *r >= params.saturation_evps)
        .map(|(index, rate_evps)| SaturatedBin { index, rate_evps })
        .collect();

    Ok(RateReport {
        mean_evps,
        peak_evps,
        mean_bps,
        peak_bps,
        saturated_bins,
        encoding,
        events: n,
        total_bytes,
        duration_us,
        bin_width_us: params.bin_width_us,
    })
}
