mod common;

use common::{random_events_between, random_schedule};
use dvsfuse::event_io::{Edge, TriggerEvent};
use dvsfuse::sync::{assign_events, frame_period, triggers_to_exposures, windows, Anchor, ExposureInterval, SyncMethod};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ALL: [SyncMethod; 5] = [
    SyncMethod::Exposure,
    SyncMethod::FrameLeading,
    SyncMethod::Centered,
    SyncMethod::MidpointPartition,
    SyncMethod::Custom { anchor: Anchor::End, pre: 5000, post: 300 },
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn m2_and_m4_partition_their_span(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exposures = random_schedule(&mut rng);
        let t_max = exposures.last().unwrap().end + 200_000;
        let events = random_events_between(&mut rng, 400, t_max);
        for method in [SyncMethod::FrameLeading, SyncMethod::MidpointPartition] {
            let wins = windows(&exposures, method).unwrap();
            let (lo, hi) = (wins[0].t0, wins.last().unwrap().t1);
            let slices = assign_events(&events, &wins);
            for e in &events {
                let members = wins.iter().filter(|w| w.t0 <= e.t && e.t < w.t1).count();
                prop_assert_eq!(members, usize::from(lo <= e.t && e.t < hi), "{} at t={}", method, e.t);
            }
            let assigned: usize = slices.iter().map(|s| s.len()).sum();
            prop_assert_eq!(assigned, events.iter().filter(|e| lo <= e.t && e.t < hi).count());
        }
    }

    #[test]
    fn exposure_window_inside_frame_leading(seed in any::<u64>()) {
        let exposures = random_schedule(&mut ChaCha8Rng::seed_from_u64(seed));
        let m1 = windows(&exposures, SyncMethod::Exposure).unwrap();
        let m2 = windows(&exposures, SyncMethod::FrameLeading).unwrap();
        for (a, b) in m1.iter().zip(&m2) {
            prop_assert_eq!(a.frame_id, b.frame_id);
            prop_assert!(b.t0 <= a.t0 && a.t1 <= b.t1, "{a:?} not in {b:?}");
        }
    }

    #[test]
    fn windows_never_invert(seed in any::<u64>()) {
        let exposures = random_schedule(&mut ChaCha8Rng::seed_from_u64(seed));
        for method in ALL {
            for w in windows(&exposures, method).unwrap() {
                prop_assert!(w.t0 <= w.t1);
            }
        }
    }

    #[test]
    fn periodic_widths(first in 0u64..100_000, period in 10u64..50_000, exp_frac in 0.01f64..0.9, n in 3usize..30) {
        let exposure = ((period as f64 * exp_frac) as u64).max(1);
        let exposures: Vec<ExposureInterval> = (0..n)
            .map(|k| ExposureInterval { frame_id: k as u32, start: first + k as u64 * period, end: first + k as u64 * period + exposure })
            .collect();
        prop_assert_eq!(frame_period(&exposures), Some(period));
        for method in [SyncMethod::Centered, SyncMethod::MidpointPartition] {
            for w in windows(&exposures, method).unwrap() {
                // Windows clamped at t = 0 are shorter by construction.
                if w.t0 > 0 {
                    prop_assert!(w.t1 - w.t0 + 1 >= period && w.t1 - w.t0 <= period + 1, "{w:?} vs P={period}");
                }
            }
        }
    }

    #[test]
    fn trigger_pairing_inverts_schedule(seed in any::<u64>(), channel in 0u8..16) {
        let exposures = random_schedule(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut triggers = Vec::new();
        for e in &exposures {
            triggers.push(TriggerEvent::new(e.start, Edge::Rising, channel));
            triggers.push(TriggerEvent::new(e.start + 1, Edge::Rising, (channel + 1) % 16));
            triggers.push(TriggerEvent::new(e.end, Edge::Falling, channel));
        }
        let (paired, unpaired) = triggers_to_exposures(&triggers, channel);
        prop_assert!(unpaired.is_empty());
        prop_assert_eq!(paired, exposures);
    }
}
