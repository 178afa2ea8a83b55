//! ESF-1: a stateful 16-bit little-endian word stream.
//!
//! Layout: a 16 byte header (`"ESF1"`, version, reserved, width u16, height
//! u16, 6 reserved bytes) followed by words whose top nibble is the type:
//!
//! | nibble | word        | payload (bits 11..0)                         |
//! |--------|-------------|----------------------------------------------|
//! | `0x8`  | TIME_HIGH   | bits 23..12 of the timestamp                 |
//! | `0x6`  | TIME_LOW    | bits 11..0 of the timestamp                  |
//! | `0x0`  | CD_Y        | row                                          |
//! | `0x2`  | CD_X        | bit 11 polarity (1 = positive), bits 10..0 x |
//! | `0xA`  | EXT_TRIGGER | bits 11..8 channel, bit 0 edge (1 = rising)  |
//!
//! Timestamps wider than 24 bits are carried by an epoch counter that the
//! decoder bumps whenever a TIME_HIGH value is strictly smaller than the
//! previous one.

use super::{
    Axis, DecodeError, Edge, EncodeError, Event, EventStream, Item, Polarity, StreamHeader,
    TriggerEvent, MAX_DIMENSION,
};

pub const ESF_HEADER_LEN: usize = 16;
const MAGIC: &[u8; 4] = b"ESF1";

const TYPE_CD_Y: u8 = 0x0;
const TYPE_CD_X: u8 = 0x2;
const TYPE_TIME_LOW: u8 = 0x6;
const TYPE_TIME_HIGH: u8 = 0x8;
const TYPE_EXT_TRIGGER: u8 = 0xA;

const PAYLOAD_MASK: u16 = 0x0FFF;
const EPOCH_SHIFT: u32 = 24;

fn word(kind: u8, payload: u16) -> u16 {
    ((kind as u16) << 12) | (payload & PAYLOAD_MASK)
}

fn check_header(width: u16, height: u16) -> bool {
    width > 0 && height > 0 && width <= MAX_DIMENSION && height <= MAX_DIMENSION
}

fn header_bytes(header: &StreamHeader) -> [u8; ESF_HEADER_LEN] {
    let mut out = [0u8; ESF_HEADER_LEN];
    out[..4].copy_from_slice(MAGIC);
    out[4] = 1;
    out[6..8].copy_from_slice(&header.width.to_le_bytes());
    out[8..10].copy_from_slice(&header.height.to_le_bytes());
    out
}

/// Decodes a complete ESF-1 byte buffer.
pub fn decode_esf(bytes: &[u8]) -> Result<EventStream, DecodeError> {
    if bytes.len() < 4 {
        return if MAGIC.starts_with(bytes) {
            Err(DecodeError::TruncatedStream { offset: bytes.len() })
        } else {
            Err(DecodeError::BadMagic)
        };
    }
    if &bytes[..4] != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    if bytes.len() < ESF_HEADER_LEN {
        return Err(DecodeError::TruncatedStream { offset: bytes.len() });
    }
    if bytes[4] != 1 {
        return Err(DecodeError::UnsupportedVersion(bytes[4]));
    }
    let width = u16::from_le_bytes([bytes[6], bytes[7]]);
    let height = u16::from_le_bytes([bytes[8], bytes[9]]);
    if !check_header(width, height) {
        return Err(DecodeError::InvalidHeader { width, height });
    }
    let header = StreamHeader::new(width, height);

    let body = &bytes[ESF_HEADER_LEN..];
    let mut items = Vec::with_capacity(body.len() / 2);
    let mut time_high: u64 = 0;
    let mut time_low: u64 = 0;
    let mut epoch: u64 = 0;
    let mut current_y: Option<u16> = None;

    let mut chunks = body.chunks_exact(2);
    for (i, pair) in chunks.by_ref().enumerate() {
        let offset = ESF_HEADER_LEN + 2 * i;
        let w = u16::from_le_bytes([pair[0], pair[1]]);
        let payload = w & PAYLOAD_MASK;
        match (w >> 12) as u8 {
            TYPE_TIME_HIGH => {
                let th = payload as u64;
                if th < time_high {
                    epoch += 1;
                }
                time_high = th;
            }
            TYPE_TIME_LOW => time_low = payload as u64,
            TYPE_CD_Y => {
                if payload >= height {
                    return Err(DecodeError::CoordinateOutOfBounds {
                        axis: Axis::Y,
                        value: payload,
                        offset,
                    });
                }
                current_y = Some(payload);
            }
            TYPE_CD_X => {
                let y = current_y.ok_or(DecodeError::CdXBeforeCdY { offset })?;
                let x = payload & 0x07FF;
                if x >= width {
                    return Err(DecodeError::CoordinateOutOfBounds { axis: Axis::X, value: x, offset });
                }
                let polarity =
                    if payload & 0x0800 != 0 { Polarity::Positive } else { Polarity::Negative };
                let t = (epoch << EPOCH_SHIFT) | (time_high << 12) | time_low;
                items.push(Item::Cd(Event { t, x, y, polarity }));
            }
            TYPE_EXT_TRIGGER => {
                let edge = if payload & 1 != 0 { Edge::Rising } else { Edge::Falling };
                let channel = (payload >> 8) as u8;
                let t = (epoch << EPOCH_SHIFT) | (time_high << 12) | time_low;
                items.push(Item::Trigger(TriggerEvent { t, edge, channel }));
            }
            nibble => return Err(DecodeError::UnknownWordType { nibble, offset }),
        }
    }
    if !chunks.remainder().is_empty() {
        return Err(DecodeError::TruncatedStream { offset: bytes.len() - 1 });
    }
    Ok(EventStream { header, items })
}

/// Incremental encoder holding the word-stream state.
///
/// Words are appended to an internal buffer; [`EsfEncoder::push`] returns how
/// many words the item cost, which the rate module uses for bandwidth
/// accounting.
#[derive(Debug)]
pub struct EsfEncoder {
    header: StreamHeader,
    words: Vec<u16>,
    // `None` until the first item forces a full prefix.
    epoch: Option<u64>,
    time_high: u16,
    time_low: Option<u16>,
    current_y: Option<u16>,
    last_t: Option<u64>,
    index: usize,
}

impl EsfEncoder {
    pub fn new(header: StreamHeader) -> Result<Self, EncodeError> {
        if !check_header(header.width, header.height) {
            return Err(EncodeError::InvalidHeader { width: header.width, height: header.height });
        }
        Ok(Self {
            header,
            words: Vec::new(),
            epoch: None,
            time_high: 0,
            time_low: None,
            current_y: None,
            last_t: None,
            index: 0,
        })
    }

    fn set_time(&mut self, t: u64) {
        let target_epoch = t >> EPOCH_SHIFT;
        let target_high = ((t >> 12) & 0xFFF) as u16;
        let target_low = (t & 0xFFF) as u16;

        match self.epoch {
            None => {
                // Decoder starts at epoch 0, time_high 0.
                self.epoch = Some(0);
                self.time_high = 0;
                self.advance_epoch(target_epoch, target_high);
                self.words.push(word(TYPE_TIME_HIGH, target_high));
                self.time_high = target_high;
            }
            Some(_) => {
                self.advance_epoch(target_epoch, target_high);
                if self.time_high != target_high {
                    self.words.push(word(TYPE_TIME_HIGH, target_high));
                    self.time_high = target_high;
                }
            }
        }
        if self.time_low != Some(target_low) {
            self.words.push(word(TYPE_TIME_LOW, target_low));
            self.time_low = Some(target_low);
        }
    }

    /// Emits TIME_HIGH words until the decoder epoch reaches `target_epoch`.
    /// Leaves `time_high` such that emitting `target_high` next is correct.
    fn advance_epoch(&mut self, target_epoch: u64, target_high: u16) {
        let mut epoch = self.epoch.unwrap_or(0);
        while epoch < target_epoch {
            if epoch + 1 == target_epoch && target_high < self.time_high {
                self.words.push(word(TYPE_TIME_HIGH, target_high));
                self.time_high = target_high;
                epoch += 1;
                break;
            }
            if self.time_high == 0 {
                self.words.push(word(TYPE_TIME_HIGH, 1));
            }
            self.words.push(word(TYPE_TIME_HIGH, 0));
            self.time_high = 0;
            epoch += 1;
        }
        self.epoch = Some(epoch);
    }

    /// Appends one item; returns the number of words written for it.
    pub fn push(&mut self, item: &Item) -> Result<usize, EncodeError> {
        let index = self.index;
        let t = item.t();
        if let Some(prev) = self.last_t {
            if t < prev {
                return Err(EncodeError::UnsortedInput { index, t });
            }
        }
        match item {
            Item::Cd(e) => {
                if e.x >= self.header.width {
                    return Err(EncodeError::CoordinateOutOfBounds { index, axis: Axis::X, value: e.x });
                }
                if e.y >= self.header.height {
                    return Err(EncodeError::CoordinateOutOfBounds { index, axis: Axis::Y, value: e.y });
                }
            }
            Item::Trigger(tr) => {
                if tr.channel > 15 {
                    return Err(EncodeError::ChannelOutOfRange { index, channel: tr.channel });
                }
            }
        }

        let before = self.words.len();
        self.set_time(t);
        match item {
            Item::Cd(e) => {
                if self.current_y != Some(e.y) {
                    self.words.push(word(TYPE_CD_Y, e.y));
                    self.current_y = Some(e.y);
                }
                let pol = if e.polarity == Polarity::Positive { 0x0800 } else { 0 };
                self.words.push(word(TYPE_CD_X, pol | e.x));
            }
            Item::Trigger(tr) => {
                let edge = if tr.edge == Edge::Rising { 1 } else { 0 };
                self.words.push(word(TYPE_EXT_TRIGGER, ((tr.channel as u16) << 8) | edge));
            }
        }
        self.last_t = Some(t);
        self.index += 1;
        Ok(self.words.len() - before)
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn finish(self) -> Vec<u8> {
        let mut out = Vec::with_capacity(ESF_HEADER_LEN + 2 * self.words.len());
        out.extend_from_slice(&header_bytes(&self.header));
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }
}

/// Encodes a stream with minimal state-word emission.
pub fn encode_esf(stream: &EventStream) -> Result<Vec<u8>, EncodeError> {
    let mut enc = EsfEncoder::new(stream.header)?;
    for item in &stream.items {
        enc.push(item)?;
    }
    Ok(enc.finish())
}

/// Number of words [`encode_esf`] would emit, without building the buffer.
pub fn encoded_word_count(stream: &EventStream) -> Result<usize, EncodeError> {
    let mut enc = EsfEncoder::new(stream.header)?;
    for item in &stream.items {
        enc.push(item)?;
    }
    Ok(enc.word_count())
}
