use std::collections::BTreeMap;

use dvsfuse::event_io::{encode_esf, Event, EventStream, Polarity, StreamHeader};
use dvsfuse::rate::{erc_filter, rate_report, Encoding, ErcConfig, RateReportParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Quiet background with occasional dense bursts.
pub fn bursty(seed: u64, n: usize) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = rng.gen_range(0..10_000u64);
    (0..n)
        .map(|_| {
            t += if rng.gen_range(0..50) == 0 { rng.gen_range(0..5000) } else { rng.gen_range(0..3) };
            Event::new(t, rng.gen_range(0..320), rng.gen_range(0..240), Polarity::Positive)
        })
        .collect()
}

fn per_period(events: &[Event], period: u64) -> BTreeMap<u64, usize> {
    let mut m = BTreeMap::new();
    for e in events {
        *m.entry(e.t / period).or_insert(0) += 1;
    }
    m
}

fn config() -> impl Strategy<Value = ErcConfig> {
    (1_000u64..2_000_000, 1u64..5000).prop_map(|(cap, period_us)| ErcConfig { cap, period_us })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cap_holds_every_period(seed in any::<u64>(), n in 0usize..5000, cfg in config()) {
        let ev = bursty(seed, n);
        let out = erc_filter(&ev, &cfg).unwrap();
        let budget = (cfg.cap as u128 * cfg.period_us as u128 / 1_000_000) as usize;
        let before = per_period(&ev, cfg.period_us);
        for (k, c) in per_period(&out, cfg.period_us) {
            prop_assert!(c <= budget, "period {k}: {c} > {budget}");
            prop_assert_eq!(c, before[&k].min(budget));
        }
        prop_assert!(out.windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn under_cap_passes_unchanged(seed in any::<u64>(), n in 0usize..2000, period_us in 1u64..5000) {
        let ev = bursty(seed, n);
        let worst = per_period(&ev, period_us).values().copied().max().unwrap_or(0) as u64;
        let cap = (worst * 1_000_000).div_ceil(period_us).max(1);
        prop_assert_eq!(erc_filter(&ev, &ErcConfig { cap, period_us }).unwrap(), ev);
    }

    #[test]
    fn idempotent(seed in any::<u64>(), n in 0usize..5000, cfg in config()) {
        let once = erc_filter(&bursty(seed, n), &cfg).unwrap();
        prop_assert_eq!(erc_filter(&once, &cfg).unwrap(), once);
    }

    #[test]
    fn larger_cap_never_keeps_fewer(seed in any::<u64>(), n in 0usize..5000, cfg in config(), extra in 1u64..1_000_000) {
        let ev = bursty(seed, n);
        let lo = per_period(&erc_filter(&ev, &cfg).unwrap(), cfg.period_us);
        let hi = per_period(&erc_filter(&ev, &ErcConfig { cap: cfg.cap + extra, ..cfg }).unwrap(), cfg.period_us);
        for (k, c) in lo {
            prop_assert!(hi[&k] >= c);
        }
    }

    #[test]
    fn bandwidth_identities(seed in any::<u64>(), n in 2usize..5000, bin in 1u64..10_000) {
        let ev = bursty(seed, n);
        let header = StreamHeader::new(320, 240);
        let params = RateReportParams { bin_width_us: bin, ..Default::default() };
        let d = (ev.last().unwrap().t - ev[0].t).max(1);

        let f8 = rate_report(&ev, header, Encoding::Fixed8, &params).unwrap();
        let num = 8 * n as u64 * 1_000_000;
        prop_assert!(num < 1 << 53);
        // Both operands are exact in f64, so one correctly rounded division.
        prop_assert_eq!(f8.mean_bps, num as f64 / d as f64);
        prop_assert_eq!(f8.total_bytes, 8 * n as u64);

        let esf = rate_report(&ev, header, Encoding::Esf1, &params).unwrap();
        let bytes = encode_esf(&EventStream::merge(header, &ev, &[])).unwrap().len() as u64;
        prop_assert_eq!(esf.total_bytes, bytes);
        prop_assert_eq!(esf.mean_bps, (bytes * 1_000_000) as f64 / d as f64);
        prop_assert!(esf.peak_bps >= esf.mean_bps && f8.peak_evps >= f8.mean_evps);
    }
}
