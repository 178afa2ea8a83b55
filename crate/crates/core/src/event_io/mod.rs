//! Event stream types and their on-disk formats.
//!
//! Two formats are supported: the ESF-1 binary word stream (see [`esf`]) and a
//! line-oriented CSV used for fixtures and debugging (see [`csv`]).

pub mod csv;
pub mod esf;
pub mod validate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::csv::{parse_csv, write_csv};
pub use self::esf::{decode_esf, encode_esf, encoded_word_count, EsfEncoder, ESF_HEADER_LEN};
pub use self::validate::{validate_stream, Finding, ValidationReport};

/// Largest width/height representable by the 11-bit column payload.
pub const MAX_DIMENSION: u16 = 2048;

/// Sign of a contrast change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> i32 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }
}

/// A single change-detection event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    /// Microseconds since stream start.
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, polarity: Polarity) -> Self {
        Self { t, x, y, polarity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Edge {
    Rising,
    Falling,
}

/// External trigger edge time-stamped by the event sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub t: u64,
    pub edge: Edge,
    /// 4-bit trigger input index.
    pub channel: u8,
}

impl TriggerEvent {
    pub fn new(t: u64, edge: Edge, channel: u8) -> Self {
        Self { t, edge, channel }
    }
}

/// One element of an [`EventStream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Item {
    Cd(Event),
    Trigger(TriggerEvent),
}

impl Item {
    pub fn t(&self) -> u64 {
        match self {
            Item::Cd(e) => e.t,
            Item::Trigger(tr) => tr.t,
        }
    }
}

impl From<Event> for Item {
    fn from(e: Event) -> Self {
        Item::Cd(e)
    }
}

impl From<TriggerEvent> for Item {
    fn from(t: TriggerEvent) -> Self {
        Item::Trigger(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub width: u16,
    pub height: u16,
    pub version: u8,
}

impl StreamHeader {
    pub fn new(width: u16, height: u16) -> Self {
        Self { width, height, version: 1 }
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }
}

/// Header plus a time-ordered sequence of CD and trigger items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub header: StreamHeader,
    pub items: Vec<Item>,
}

impl EventStream {
    pub fn new(header: StreamHeader, items: Vec<Item>) -> Self {
        Self { header, items }
    }

    pub fn empty(width: u16, height: u16) -> Self {
        Self::new(StreamHeader::new(width, height), Vec::new())
    }

    pub fn width(&self) -> u16 {
        self.header.width
    }

    pub fn height(&self) -> u16 {
        self.header.height
    }

    pub fn cd_events(&self) -> impl Iterator<Item = &Event> + '_ {
        self.items.iter().filter_map(|it| match it {
            Item::Cd(e) => Some(e),
            Item::Trigger(_) => None,
        })
    }

    pub fn triggers(&self) -> impl Iterator<Item = &TriggerEvent> + '_ {
        self.items.iter().filter_map(|it| match it {
            Item::Trigger(t) => Some(t),
            Item::Cd(_) => None,
        })
    }

    /// Owned copy of the CD events, in stream order.
    pub fn events(&self) -> Vec<Event> {
        self.cd_events().copied().collect()
    }

    /// Builds a stream from separately ordered event and trigger lists.
    ///
    /// At equal timestamps triggers come first, so an exposure edge precedes
    /// the events recorded at the same microsecond.
    pub fn merge(header: StreamHeader, events: &[Event], triggers: &[TriggerEvent]) -> Self {
        let mut items = Vec::with_capacity(events.len() + triggers.len());
        let (mut i, mut j) = (0, 0);
        while i < events.len() || j < triggers.len() {
            let take_trigger = match (events.get(i), triggers.get(j)) {
                (Some(e), Some(t)) => t.t <= e.t,
                (None, Some(_)) => true,
                _ => false,
            };
            if take_trigger {
                items.push(Item::Trigger(triggers[j]));
                j += 1;
            } else {
                items.push(Item::Cd(events[i]));
                i += 1;
            }
        }
        Self::new(header, items)
    }
}

/// Which coordinate a bounds error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::X => write!(f, "x"),
            Axis::Y => write!(f, "y"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic: expected \"ESF1\"")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("invalid header dimensions {width}x{height}")]
    InvalidHeader { width: u16, height: u16 },
    #[error("unknown word type 0x{nibble:X} at byte offset {offset}")]
    UnknownWordType { nibble: u8, offset: usize },
    #[error("{axis} = {value} out of bounds at byte offset {offset}")]
    CoordinateOutOfBounds { axis: Axis, value: u16, offset: usize },
    #[error("CD_X word before any CD_Y at byte offset {offset}")]
    CdXBeforeCdY { offset: usize },
    #[error("truncated stream at byte offset {offset}")]
    TruncatedStream { offset: usize },
}

impl DecodeError {
    /// Byte offset of the offending input, when the error is positional.
    pub fn offset(&self) -> Option<usize> {
        match self {
            DecodeError::BadMagic => Some(0),
            DecodeError::UnsupportedVersion(_) => Some(4),
            DecodeError::InvalidHeader { .. } => Some(6),
            DecodeError::UnknownWordType { offset, .. }
            | DecodeError::CoordinateOutOfBounds { offset, .. }
            | DecodeError::CdXBeforeCdY { offset }
            | DecodeError::TruncatedStream { offset } => Some(*offset),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("item {index} has t = {t} earlier than its predecessor")]
    UnsortedInput { index: usize, t: u64 },
    #[error("item {index}: {axis} = {value} out of bounds")]
    CoordinateOutOfBounds { index: usize, axis: Axis, value: u16 },
    #[error("item {index}: trigger channel {channel} exceeds 15")]
    ChannelOutOfRange { index: usize, channel: u8 },
    #[error("invalid header dimensions {width}x{height}")]
    InvalidHeader { width: u16, height: u16 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CsvError {
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
}
