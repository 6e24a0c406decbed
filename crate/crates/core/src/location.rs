//! Fix acquisition over a bounded listening window and the two outbound
//! report formats: the serial `LAT= LON= SAT= PREC=` line and the maps link.

use std::fmt;

use crate::nmea::{GpsFix, NmeaDecoder};
use crate::Millis;

/// Listening window used when a location is requested.
pub const ACQUIRE_WINDOW_MS: Millis = 1_000;

pub const MAPS_PREFIX: &str = "https://www.google.ro/maps/place/";
pub const MAPS_ZOOM_SUFFIX: &str = ",17z/";

/// Time-stamped bytes from the GPS receiver's serial line.
pub trait GpsPort {
    /// Bytes that arrived in `[from, until)`, oldest first. Anything that
    /// arrived before `from` is discarded unread.
    fn read_window(&mut self, from: Millis, until: Millis) -> Vec<(Millis, Vec<u8>)>;
}

/// An in-progress listening window, polled from the firmware loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixAcquisition {
    started_at: Millis,
    window_ms: Millis,
    read_until: Millis,
    got_new_data: bool,
}

impl FixAcquisition {
    pub fn start(now: Millis, window_ms: Millis) -> Self {
        Self {
            started_at: now,
            window_ms,
            read_until: now,
            got_new_data: false,
        }
    }

    pub fn ends_at(&self) -> Millis {
        self.started_at + self.window_ms
    }

    /// Feeds whatever arrived since the last poll. Returns the outcome once
    /// the window has elapsed.
    pub fn poll(&mut self, decoder: &mut NmeaDecoder, port: &mut impl GpsPort, now: Millis) -> Option<GpsFix> {
        let until = now.min(self.ends_at());
        if until > self.read_until {
            for (at, chunk) in port.read_window(self.read_until, until) {
                for b in chunk {
                    if decoder.encode(b, at) {
                        self.got_new_data = true;
                    }
                }
            }
            self.read_until = until;
        }
        if now < self.ends_at() {
            return None;
        }
        Some(if self.got_new_data {
            decoder.fix(self.ends_at())
        } else {
            GpsFix::zero()
        })
    }
}

/// Listens for `window_ms` starting at `now` and returns the last fix
/// decoded in that window, or the zero fix.
pub fn acquire_fix(decoder: &mut NmeaDecoder, port: &mut impl GpsPort, now: Millis, window_ms: Millis) -> GpsFix {
    let mut acq = FixAcquisition::start(now, window_ms);
    acq.poll(decoder, port, now + window_ms).expect("window has elapsed")
}

/// First eight bytes of a six-decimal rendering, as placed into the link.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CoordText(String);

impl CoordText {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CoordText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Six fractional digits, minimum width six (always reached).
pub fn format_coord_full(value: f64) -> String {
    format!("{value:6.6}")
}

pub fn format_coord(value: f64) -> CoordText {
    let mut text = format_coord_full(value);
    text.truncate(8);
    CoordText(text)
}

pub fn compose_location_text(fix: &GpsFix) -> String {
    format!(
        "LAT={:.6} LON={:.6} SAT={} PREC={}",
        fix.latitude, fix.longitude, fix.satellites, fix.hdop_hundredths
    )
}

/// Builds the maps link. With `full_precision` the coordinates keep all six
/// decimals instead of being cut to eight bytes.
pub fn compose_maps_link(fix: &GpsFix, full_precision: bool) -> String {
    let render = |v: f64| {
        if full_precision {
            format_coord_full(v)
        } else {
            format_coord(v).0
        }
    };
    let lat = render(fix.latitude);
    let lon = render(fix.longitude);
    format!("{MAPS_PREFIX}{lat}+{lon}/@{lat},{lon}{MAPS_ZOOM_SUFFIX}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nmea::frame_sentence;

    struct ScriptedPort(Vec<(Millis, Vec<u8>)>);

    impl GpsPort for ScriptedPort {
        fn read_window(&mut self, from: Millis, until: Millis) -> Vec<(Millis, Vec<u8>)> {
            let out = self
                .0
                .iter()
                .filter(|(t, _)| *t >= from && *t < until)
                .cloned()
                .collect();
            self.0.retain(|(t, _)| *t >= until);
            out
        }
    }

    fn gga(lat: &str, lon: &str) -> Vec<u8> {
        frame_sentence(&format!("GPGGA,000000,{lat},N,{lon},E,1,07,1.20,,,,,,")).into_bytes()
    }

    #[test]
    fn single_sentence_in_window() {
        let mut port = ScriptedPort(vec![(500, gga("4426.5272", "02602.9628"))]);
        let mut dec = NmeaDecoder::new();
        let fix = acquire_fix(&mut dec, &mut port, 0, ACQUIRE_WINDOW_MS);
        assert!(fix.valid);
        assert!((fix.latitude - 44.44212).abs() < 1e-9);
        assert_eq!(fix.satellites, 7);
        assert_eq!(fix.hdop_hundredths, 120);
        assert_eq!(fix.age_ms, 500);
    }

    #[test]
    fn empty_window_gives_zero_fix() {
        let mut port = ScriptedPort(vec![]);
        let mut dec = NmeaDecoder::new();
        let fix = acquire_fix(&mut dec, &mut port, 0, ACQUIRE_WINDOW_MS);
        assert_eq!(fix, GpsFix::zero());
        assert_eq!(compose_location_text(&fix), "LAT=0.000000 LON=0.000000 SAT=0 PREC=0");
    }

    #[test]
    fn later_sentence_wins() {
        let mut port = ScriptedPort(vec![
            (100, gga("4426.5272", "02602.9628")),
            (900, gga("4500.0000", "02700.0000")),
        ]);
        let mut dec = NmeaDecoder::new();
        let fix = acquire_fix(&mut dec, &mut port, 0, ACQUIRE_WINDOW_MS);
        // last-writer-wins oracle: the later sentence is 45N 27E
        assert_eq!((fix.latitude, fix.longitude), (45.0, 27.0));
    }

    #[test]
    fn window_is_half_open() {
        let mut port = ScriptedPort(vec![
            (0, gga("4426.5272", "02602.9628")),
            (1_000, gga("4500.0000", "02700.0000")),
        ]);
        let mut dec = NmeaDecoder::new();
        let fix = acquire_fix(&mut dec, &mut port, 0, ACQUIRE_WINDOW_MS);
        assert!((fix.latitude - 44.44212).abs() < 1e-9);
    }

    #[test]
    fn stale_bytes_before_window_are_not_used() {
        let mut port = ScriptedPort(vec![(10, gga("4426.5272", "02602.9628"))]);
        let mut dec = NmeaDecoder::new();
        assert_eq!(
            acquire_fix(&mut dec, &mut port, 2_000, ACQUIRE_WINDOW_MS),
            GpsFix::zero()
        );
    }

    #[test]
    fn incremental_polling_matches_one_shot() {
        let data = vec![
            (0, gga("4426.5272", "02602.9628")),
            (700, gga("4500.0000", "02700.0000")),
        ];
        let mut dec = NmeaDecoder::new();
        let mut acq = FixAcquisition::start(0, ACQUIRE_WINDOW_MS);
        let mut port = ScriptedPort(data.clone());
        let mut out = None;
        for now in (0..=1_000).step_by(100) {
            out = acq.poll(&mut dec, &mut port, now);
            if now < 1_000 {
                assert!(out.is_none());
            }
        }
        let mut dec2 = NmeaDecoder::new();
        assert_eq!(
            out.unwrap(),
            acquire_fix(&mut dec2, &mut ScriptedPort(data), 0, ACQUIRE_WINDOW_MS)
        );
    }

    #[test]
    fn coord_formatting() {
        assert_eq!(format_coord(44.44212).as_str(), "44.44212");
        assert_eq!(format_coord(26.04938).as_str(), "26.04938");
        assert_eq!(format_coord(0.0).as_str(), "0.000000");
        assert_eq!(format_coord(-3.5).as_str(), "-3.50000");
        assert_eq!(format_coord(-123.456789).as_str(), "-123.456");
        assert_eq!(format_coord_full(-3.5), "-3.500000");
    }

    #[test]
    fn location_text() {
        let fix = GpsFix::new(44.44212, 26.04938, 7, 120);
        assert_eq!(
            compose_location_text(&fix),
            "LAT=44.442120 LON=26.049380 SAT=7 PREC=120"
        );
        let west = GpsFix::new(51.5, -0.1276, 9, 80);
        assert_eq!(
            compose_location_text(&west),
            "LAT=51.500000 LON=-0.127600 SAT=9 PREC=80"
        );
    }

    #[test]
    fn maps_link() {
        let fix = GpsFix::new(44.44212, 26.04938, 7, 120);
        assert_eq!(
            compose_maps_link(&fix, false),
            "https://www.google.ro/maps/place/44.44212+26.04938/@44.44212,26.04938,17z/"
        );
        assert_eq!(
            compose_maps_link(&GpsFix::zero(), false),
            "https://www.google.ro/maps/place/0.000000+0.000000/@0.000000,0.000000,17z/"
        );
        assert_eq!(
            compose_maps_link(&fix, true),
            "https://www.google.ro/maps/place/44.442120+26.049380/@44.442120,26.049380,17z/"
        );
    }
}
