use serde::Serialize;

use super::{Edge, EventStream, Item};

/// A single problem found by [`validate_stream`]. Indices refer to `items`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    NonMonotonic { prev_index: usize, index: usize, prev_t: u64, t: u64 },
    OutOfBounds { index: usize, x: u16, y: u16 },
    ChannelOutOfRange { index: usize, channel: u8 },
    UnpairedTrigger { index: usize, t: u64, channel: u8, edge: &'static str },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub items: usize,
    pub cd_events: usize,
    pub triggers: usize,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Checks ordering, bounds and trigger pairing without modifying the stream.
///
/// Trigger pairing expects rising/falling alternation per channel starting
/// with a rising edge; a rising edge left open at the end is reported too.
pub fn validate_stream(stream: &EventStream) -> ValidationReport {
    let mut report = ValidationReport { items: stream.items.len(), ..Default::default() };
    let mut open_rising: [Option<(usize, u64)>; 16] = [None; 16];

    for (index, item) in stream.items.iter().enumerate() {
        if index > 0 {
            let prev_t = stream.items[index - 1].t();
            if item.t() < prev_t {
                report.findings.push(Finding::NonMonotonic {
                    prev_index: index - 1,
                    index,
                    prev_t,
                    t: item.t(),
                });
            }
        }
        match item {
            Item::Cd(e) => {
                report.cd_events += 1;
                if !stream.header.contains(e.x, e.y) {
                    report.findings.push(Finding::OutOfBounds { index, x: e.x, y: e.y });
                }
            }
            Item::Trigger(tr) => {
                report.triggers += 1;
                let Some(slot) = open_rising.get_mut(tr.channel as usize) else {
                    report.findings.push(Finding::ChannelOutOfRange { index, channel: tr.channel });
                    continue;
                };
                match (tr.edge, slot.take()) {
                    (Edge::Rising, Some((prev, prev_t))) => {
                        report.findings.push(Finding::UnpairedTrigger {
                            index: prev,
                            t: prev_t,
                            channel: tr.channel,
                            edge: "rising",
                        });
                        *slot = Some((index, tr.t));
                    }
                    (Edge::Rising, None) => *slot = Some((index, tr.t)),
                    (Edge::Falling, Some(_)) => {}
                    (Edge::Falling, None) => report.findings.push(Finding::UnpairedTrigger {
                        index,
                        t: tr.t,
                        channel: tr.channel,
                        edge: "falling",
                    }),
                }
            }
        }
    }
    for (channel, slot) in open_rising.iter().enumerate() {
        if let Some((index, t)) = slot {
            report.findings.push(Finding::UnpairedTrigger {
                index: *index,
                t: *t,
                channel: channel as u8,
                edge: "rising",
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_io::{Event, Polarity, StreamHeader, TriggerEvent};

    fn stream(items: Vec<Item>) -> EventStream {
        EventStream::new(StreamHeader::new(16, 16), items)
    }

    #[test]
    fn clean_stream_has_no_findings() {
        let s = stream(vec![
            TriggerEvent::new(0, Edge::Rising, 0).into(),
            Event::new(1, 2, 3, Polarity::Positive).into(),
            TriggerEvent::new(5, Edge::Falling, 0).into(),
        ]);
        let r = validate_stream(&s);
        assert!(r.is_clean());
        assert_eq!((r.cd_events, r.triggers), (1, 2));
    }

    #[test]
    fn decreasing_time_reported_once_with_both_indices() {
        let s = stream(vec![
            Event::new(10, 0, 0, Polarity::Positive).into(),
            Event::new(9, 0, 0, Polarity::Positive).into(),
            Event::new(11, 0, 0, Polarity::Positive).into(),
        ]);
        assert_eq!(
            validate_stream(&s).findings,
            vec![Finding::NonMonotonic { prev_index: 0, index: 1, prev_t: 10, t: 9 }]
        );
    }

    #[test]
    fn double_rising_edge_is_unpaired() {
        let s = stream(vec![
            TriggerEvent::new(0, Edge::Rising, 2).into(),
            TriggerEvent::new(5, Edge::Rising, 2).into(),
            TriggerEvent::new(9, Edge::Falling, 2).into(),
        ]);
        assert_eq!(
            validate_stream(&s).findings,
            vec![Finding::UnpairedTrigger { index: 0, t: 0, channel: 2, edge: "rising" }]
        );
    }

    #[test]
    fn out_of_bounds_reported() {
        let s = stream(vec![Event::new(0, 16, 0, Polarity::Positive).into()]);
        assert_eq!(validate_stream(&s).findings, vec![Finding::OutOfBounds { index: 0, x: 16, y: 0 }]);
    }
}
