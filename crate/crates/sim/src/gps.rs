//! Synthetic GPS receiver: turns scenario waypoints into GGA sentences.

use smstrack_core::location::GpsPort;
use smstrack_core::nmea::{encode_latitude, encode_longitude, frame_sentence};
use smstrack_core::Millis;

use crate::scenario::Waypoint;

/// `hhmmss.ss` UTC field for a virtual timestamp (wraps every 24 h).
fn utc_field(at: Millis) -> String {
    let day_ms = at % 86_400_000;
    let h = day_ms / 3_600_000;
    let m = day_ms / 60_000 % 60;
    let s = day_ms / 1_000 % 60;
    let cs = day_ms % 1_000 / 10;
    format!("{h:02}{m:02}{s:02}.{cs:02}")
}

/// One framed GGA sentence for a waypoint observed at `at`.
pub fn gga_sentence(waypoint: &Waypoint, at: Millis) -> String {
    let (lat, ns) = encode_latitude(waypoint.latitude);
    let (lon, ew) = encode_longitude(waypoint.longitude);
    frame_sentence(&format!(
        "GPGGA,{},{lat},{ns},{lon},{ew},1,{:02},{}.{:02},0.0,M,0.0,M,,",
        utc_field(at),
        waypoint.satellites,
        waypoint.hdop_hundredths / 100,
        waypoint.hdop_hundredths % 100
    ))
}

/// GGA a receiver emits while it has no fix.
pub fn no_fix_sentence(at: Millis) -> String {
    frame_sentence(&format!("GPGGA,{},,,,,0,00,99.99,,,,,,", utc_field(at)))
}

/// One GGA per waypoint, emitted at the waypoint's own timestamp.
pub fn waypoints_to_nmea(waypoints: &[(Millis, Waypoint)]) -> Vec<(Millis, Vec<u8>)> {
    waypoints
        .iter()
        .map(|(at, w)| (*at, gga_sentence(w, *at).into_bytes()))
        .collect()
}

/// Receiver that reports the latest waypoint once per `period_ms`, at whole
/// multiples of the period. Before the first waypoint it reports "no fix".
#[derive(Debug, Clone)]
pub struct GpsReceiver {
    period_ms: Millis,
    track: Vec<(Millis, Waypoint)>,
}

impl GpsReceiver {
    pub fn new(period_ms: Millis) -> Self {
        assert!(period_ms > 0, "GPS output period must be positive");
        Self {
            period_ms,
            track: Vec::new(),
        }
    }

    /// Waypoints must arrive in time order.
    pub fn set_position(&mut self, at: Millis, waypoint: Waypoint) {
        debug_assert!(self.track.last().is_none_or(|(t, _)| *t <= at));
        self.track.push((at, waypoint));
    }

    pub fn position_at(&self, at: Millis) -> Option<&Waypoint> {
        self.track.iter().rev().find(|(t, _)| *t <= at).map(|(_, w)| w)
    }

    pub fn sentence_at(&self, at: Millis) -> String {
        match self.position_at(at) {
            Some(w) => gga_sentence(w, at),
            None => no_fix_sentence(at),
        }
    }
}

impl GpsPort for GpsReceiver {
    fn read_window(&mut self, from: Millis, until: Millis) -> Vec<(Millis, Vec<u8>)> {
        let first = from.div_ceil(self.period_ms) * self.period_ms;
        (first..until)
            .step_by(self.period_ms as usize)
            .map(|t| (t, self.sentence_at(t).into_bytes()))
            .collect()
    }
}
