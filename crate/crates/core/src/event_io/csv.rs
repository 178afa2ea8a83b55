//! Line-oriented text form of an event stream.
//!
//! ```text
//! # width=1280 height=720
//! trig,4096,r,1
//! cd,4098,3,5,-1
//! ```
//!
//! The `# width=.. height=..` line is optional; without it the sensor size is
//! taken as one past the largest coordinate seen.

use std::fmt::Write as _;

use super::{CsvError, Edge, Event, EventStream, Item, Polarity, StreamHeader, TriggerEvent};

fn malformed(line: usize, reason: impl Into<String>) -> CsvError {
    CsvError::MalformedLine { line, reason: reason.into() }
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T, CsvError> {
    s.trim().parse().map_err(|_| malformed(line, format!("bad {what} {s:?}")))
}

fn parse_dimensions(rest: &str, line: usize) -> Result<(u16, u16), CsvError> {
    let mut width = None;
    let mut height = None;
    for tok in rest.split_whitespace() {
        match tok.split_once('=') {
            Some(("width", v)) => width = Some(parse_field(v, line, "width")?),
            Some(("height", v)) => height = Some(parse_field(v, line, "height")?),
            _ => return Err(malformed(line, format!("unexpected header token {tok:?}"))),
        }
    }
    match (width, height) {
        (Some(w), Some(h)) => Ok((w, h)),
        _ => Err(malformed(line, "header needs width= and height=")),
    }
}

/// Parses CSV text into a stream. Line numbers in errors are 1-based.
pub fn parse_csv(text: &str) -> Result<EventStream, CsvError> {
    let mut dims = None;
    let mut items = Vec::new();
    let (mut max_x, mut max_y) = (0u16, 0u16);

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if items.is_empty() && dims.is_none() {
                dims = Some(parse_dimensions(rest, line_no)?);
                continue;
            }
            return Err(malformed(line_no, "header must precede records"));
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match fields.as_slice() {
            ["cd", t, x, y, p] => {
                let polarity = match *p {
                    "1" | "+1" => Polarity::Positive,
                    "-1" => Polarity::Negative,
                    other => return Err(malformed(line_no, format!("bad polarity {other:?}"))),
                };
                let ev = Event {
                    t: parse_field(t, line_no, "timestamp")?,
                    x: parse_field(x, line_no, "x")?,
                    y: parse_field(y, line_no, "y")?,
                    polarity,
                };
                max_x = max_x.max(ev.x);
                max_y = max_y.max(ev.y);
                items.push(Item::Cd(ev));
            }
            ["trig", t, e, ch] => {
                let edge = match *e {
                    "r" => Edge::Rising,
                    "f" => Edge::Falling,
                    other => return Err(malformed(line_no, format!("bad edge {other:?}"))),
                };
                let channel: u8 = parse_field(ch, line_no, "channel")?;
                if channel > 15 {
                    return Err(malformed(line_no, format!("channel {channel} exceeds 15")));
                }
                items.push(Item::Trigger(TriggerEvent {
                    t: parse_field(t, line_no, "timestamp")?,
                    edge,
                    channel,
                }));
            }
            _ => return Err(malformed(line_no, "expected cd,t,x,y,p or trig,t,r|f,channel")),
        }
    }

    let (width, height) = dims.unwrap_or((max_x + 1, max_y + 1));
    Ok(EventStream::new(StreamHeader::new(width, height), items))
}

/// Writes the stream as CSV including the dimension header.
pub fn write_csv(stream: &EventStream) -> String {
    let mut out = String::with_capacity(24 * (stream.items.len() + 1));
    let _ = writeln!(out, "# width={} height={}", stream.header.width, stream.header.height);
    for item in &stream.items {
        let _ = match item {
            Item::Cd(e) => {
                let p = if e.polarity == Polarity::Positive { "+1" } else { "-1" };
                writeln!(out, "cd,{},{},{},{}", e.t, e.x, e.y, p)
            }
            Item::Trigger(t) => {
                let edge = if t.edge == Edge::Rising { "r" } else { "f" };
                writeln!(out, "trig,{},{},{}", t.t, edge, t.channel)
            }
        };
    }
    out
}
