//! Byte-at-a-time NMEA 0183 decoder for GGA and RMC sentences.
//!
//! Feed bytes with [`NmeaDecoder::encode`]; it returns `true` on the byte
//! that completes a checksum-valid sentence carrying a position. A sentence
//! is complete at its line feed: `$<body>*<hh>\r\n` (the carriage return is
//! optional). Sentences without a checksum are rejected, as are sentences
//! longer than 82 bytes.
//!
//! Query methods never expose "no data" markers: missing angles read as
//! `0.0` and missing counts as `0`.

use serde::{Deserialize, Serialize};

use crate::Millis;

/// Longest legal sentence, `$` through `\n` inclusive.
pub const MAX_SENTENCE_LEN: usize = 82;
// '$' + body + '*' + two hex digits + CR LF
const MAX_BODY_LEN: usize = MAX_SENTENCE_LEN - 6;

/// XOR of every byte strictly between `$` and `*`.
pub fn checksum_byte(body: &[u8]) -> u8 {
    body.iter().fold(0, |acc, b| acc ^ b)
}

/// Two uppercase hex digits.
pub fn checksum(body: &[u8]) -> String {
    format!("{:02X}", checksum_byte(body))
}

/// Wraps a sentence body into a framed sentence with checksum and CRLF.
pub fn frame_sentence(body: &str) -> String {
    format!("${}*{}\r\n", body, checksum(body.as_bytes()))
}

/// Position report as the firmware sees it after invalid-value substitution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub latitude: f64,
    pub longitude: f64,
    pub satellites: u32,
    pub hdop_hundredths: u32,
    pub age_ms: Millis,
    pub valid: bool,
}

impl GpsFix {
    /// What the firmware reports when nothing has been decoded.
    pub const fn zero() -> Self {
        Self {
            latitude: 0.0,
            longitude: 0.0,
            satellites: 0,
            hdop_hundredths: 0,
            age_ms: 0,
            valid: false,
        }
    }

    pub fn new(latitude: f64, longitude: f64, satellites: u32, hdop_hundredths: u32) -> Self {
        Self {
            latitude,
            longitude,
            satellites,
            hdop_hundredths,
            age_ms: 0,
            valid: true,
        }
    }
}

impl Default for GpsFix {
    fn default() -> Self {
        Self::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    InBody,
    InChecksum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Position {
    latitude: f64,
    longitude: f64,
    decoded_at: Millis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Sentence {
    Gga {
        latitude: f64,
        longitude: f64,
        satellites: Option<u32>,
        hdop_hundredths: Option<u32>,
    },
    Rmc {
        latitude: f64,
        longitude: f64,
    },
}

#[derive(Debug, Clone)]
pub struct NmeaDecoder {
    accumulator: Vec<u8>,
    running_checksum: u8,
    phase: Phase,
    received_checksum: Vec<u8>,
    carriage_return: bool,
    position: Option<Position>,
    satellites: Option<u32>,
    hdop_hundredths: Option<u32>,
}

impl Default for NmeaDecoder {
    fn default() -> Self {
        Self::new()
    }
}

impl NmeaDecoder {
    pub fn new() -> Self {
        Self {
            accumulator: Vec::with_capacity(MAX_SENTENCE_LEN),
            running_checksum: 0,
            phase: Phase::Idle,
            received_checksum: Vec::with_capacity(2),
            carriage_return: false,
            position: None,
            satellites: None,
            hdop_hundredths: None,
        }
    }

    fn reset(&mut self) {
        self.accumulator.clear();
        self.running_checksum = 0;
        self.received_checksum.clear();
        self.carriage_return = false;
        self.phase = Phase::Idle;
    }

    /// Consumes one byte. `now` stamps any fix completed by this byte.
    pub fn encode(&mut self, byte: u8, now: Millis) -> bool {
        if byte == b'$' {
            self.reset();
            self.phase = Phase::InBody;
            return false;
        }
        match self.phase {
            Phase::Idle => false,
            Phase::InBody => {
                match byte {
                    b'*' => self.phase = Phase::InChecksum,
                    b'\r' | b'\n' => self.reset(),
                    _ if self.accumulator.len() >= MAX_BODY_LEN => self.reset(),
                    _ => {
                        self.accumulator.push(byte);
                        self.running_checksum ^= byte;
                    }
                }
                false
            }
            Phase::InChecksum => {
                let complete = self.received_checksum.len() == 2;
                match byte {
                    b'0'..=b'9' | b'A'..=b'F' if !complete => {
                        self.received_checksum.push(byte);
                        false
                    }
                    b'\r' if complete && !self.carriage_return => {
                        self.carriage_return = true;
                        false
                    }
                    b'\n' if complete => {
                        let ok = self.finish(now);
                        self.reset();
                        ok
                    }
                    _ => {
                        self.reset();
                        false
                    }
                }
            }
        }
    }

    /// Feeds a chunk and returns every fix completed inside it.
    pub fn feed(&mut self, bytes: &[u8], now: Millis) -> Vec<GpsFix> {
        let mut fixes = Vec::new();
        for &b in bytes {
            if self.encode(b, now) {
                fixes.push(self.fix(now));
            }
        }
        fixes
    }

    fn finish(&mut self, now: Millis) -> bool {
        let expected = format!("{:02X}", self.running_checksum);
        if expected.as_bytes() != self.received_checksum.as_slice() {
            return false;
        }
        match parse_sentence(&self.accumulator) {
            Some(Sentence::Gga {
                latitude,
                longitude,
                satellites,
                hdop_hundredths,
            }) => {
                self.position = Some(Position {
                    latitude,
                    longitude,
                    decoded_at: now,
                });
                self.satellites = satellites;
                self.hdop_hundredths = hdop_hundredths;
                true
            }
            Some(Sentence::Rmc { latitude, longitude }) => {
                self.position = Some(Position {
                    latitude,
                    longitude,
                    decoded_at: now,
                });
                true
            }
            None => false,
        }
    }

    /// `(latitude, longitude, age)`; `(0.0, 0.0, 0)` before the first fix.
    pub fn get_position(&self, now: Millis) -> (f64, f64, Millis) {
        match self.position {
            Some(p) => (p.latitude, p.longitude, now.saturating_sub(p.decoded_at)),
            None => (0.0, 0.0, 0),
        }
    }

    pub fn satellites(&self) -> u32 {
        self.satellites.unwrap_or(0)
    }

    pub fn hdop(&self) -> u32 {
        self.hdop_hundredths.unwrap_or(0)
    }

    pub fn has_fix(&self) -> bool {
        self.position.is_some()
    }

    pub fn fix(&self, now: Millis) -> GpsFix {
        let (latitude, longitude, age_ms) = self.get_position(now);
        GpsFix {
            latitude,
            longitude,
            satellites: self.satellites(),
            hdop_hundredths: self.hdop(),
            age_ms,
            valid: self.position.is_some(),
        }
    }
}

fn parse_sentence(body: &[u8]) -> Option<Sentence> {
    let text = std::str::from_utf8(body).ok()?;
    let fields: Vec<&str> = text.split(',').collect();
    let id = fields[0].as_bytes();
    if id.len() != 5 || !id[..2].iter().all(u8::is_ascii_uppercase) {
        return None;
    }
    match &id[2..] {
        b"GGA" => {
            if fields.len() < 9 {
                return None;
            }
            let quality: u8 = fields[6].parse().ok()?;
            if quality == 0 {
                return None;
            }
            let latitude = parse_coordinate(fields[2], fields[3], 2)?;
            let longitude = parse_coordinate(fields[4], fields[5], 3)?;
            let satellites = parse_optional(fields[7], |s| s.parse::<u32>().ok())?;
            let hdop_hundredths = parse_optional(fields[8], parse_hundredths)?;
            Some(Sentence::Gga {
                latitude,
                longitude,
                satellites,
                hdop_hundredths,
            })
        }
        b"RMC" => {
            if fields.len() < 7 || fields[2] != "A" {
                return None;
            }
            let latitude = parse_coordinate(fields[3], fields[4], 2)?;
            let longitude = parse_coordinate(fields[5], fields[6], 3)?;
            Some(Sentence::Rmc { latitude, longitude })
        }
        _ => None,
    }
}

/// Empty field → `Some(None)`, malformed → `None`.
fn parse_optional<T>(field: &str, parse: impl Fn(&str) -> Option<T>) -> Option<Option<T>> {
    if field.is_empty() {
        Some(None)
    } else {
        parse(field).map(Some)
    }
}

/// "0.9" → 90, "1.035" → 104.
fn parse_hundredths(field: &str) -> Option<u32> {
    let (int, frac) = field.split_once('.').unwrap_or((field, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let whole: u32 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let digit = |i: usize| frac.as_bytes().get(i).map_or(0, |b| (b - b'0') as u32);
    let mut value = whole.checked_mul(100)? + digit(0) * 10 + digit(1);
    if digit(2) >= 5 {
        value += 1;
    }
    Some(value)
}

/// Parses `ddmm.mmmm` / `dddmm.mmmm` plus hemisphere into signed degrees.
pub fn parse_coordinate(field: &str, hemisphere: &str, degree_digits: usize) -> Option<f64> {
    let (int, frac) = field.split_once('.').unwrap_or((field, ""));
    if int.len() != degree_digits + 2 || !int.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let degrees: f64 = int[..degree_digits].parse().ok()?;
    let minutes: f64 = format!("{}.{}", &int[degree_digits..], if frac.is_empty() { "0" } else { frac })
        .parse()
        .ok()?;
    if minutes >= 60.0 {
        return None;
    }
    let magnitude = degrees + minutes / 60.0;
    let (limit, positive, negative) = if degree_digits == 2 {
        (90.0, "N", "S")
    } else {
        (180.0, "E", "W")
    };
    if magnitude > limit {
        return None;
    }
    match hemisphere {
        h if h == positive => Some(magnitude),
        h if h == negative => Some(-magnitude),
        _ => None,
    }
}

/// Ten-thousandths of a minute, so rounding carries into the degrees.
fn encode_coordinate(value: f64, degree_digits: usize, positive: char, negative: char) -> (String, char) {
    let hemisphere = if value < 0.0 { negative } else { positive };
    let total = (value.abs() * 60.0 * 10_000.0).round() as u64;
    let degrees = total / 600_000;
    let minutes = total % 600_000;
    (
        format!(
            "{:0width$}{:02}.{:04}",
            degrees,
            minutes / 10_000,
            minutes % 10_000,
            width = degree_digits
        ),
        hemisphere,
    )
}

/// Signed degrees to `(ddmm.mmmm, 'N'|'S')`.
pub fn encode_latitude(degrees: f64) -> (String, char) {
    encode_coordinate(degrees, 2, 'N', 'S')
}

/// Signed degrees to `(dddmm.mmmm, 'E'|'W')`.
pub fn encode_longitude(degrees: f64) -> (String, char) {
    encode_coordinate(degrees, 3, 'E', 'W')
}
