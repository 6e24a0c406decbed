//! Discrete-event simulation of the SMS-controlled vehicle: phones, a
//! cellular network, the vehicle's modem, GPS receiver and power supply,
//! all driving the firmware from `smstrack-core`.

pub mod engine;
pub mod gateway;
pub mod gps;
pub mod power;
pub mod scenario;
pub mod transcript;

pub use engine::{SimError, Simulation};
pub use scenario::{EventKind, PowerSource, Scenario, ScenarioError, ScenarioEvent, SimConfig, Waypoint};
pub use transcript::{Event, Record, SimEvent, Source, Transcript};

use smstrack_core::{compose_location_text, NmeaDecoder};

/// Decodes a raw NMEA byte stream and renders each fix the way the firmware
/// prints it on its debug console.
pub fn decode_nmea_report(bytes: &[u8]) -> Vec<String> {
    NmeaDecoder::new()
        .feed(bytes, 0)
        .iter()
        .map(compose_location_text)
        .collect()
}
