#![allow(dead_code)]

use smstrack_core::{FirmwareEvent, Millis, VehicleState};
use smstrack_sim::{Event, Scenario, SimEvent, Simulation, Source, Transcript};

pub const OWNER: &str = "+40712345678";
pub const SIM: &str = "+40700000000";
pub const GOLDEN_LINK: &str = "https://www.google.ro/maps/place/44.44212+26.04938/@44.44212,26.04938,17z/";

pub fn scenario(text: &str) -> Scenario {
    Scenario::parse(text).unwrap_or_else(|e| panic!("bad test scenario: {e}\n{text}"))
}

pub fn run(text: &str) -> Transcript {
    Simulation::run(&scenario(text)).expect("scenario runs")
}

pub fn demo_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/paper_demo.scn")
}

pub fn snapshots(t: &Transcript) -> Vec<(Millis, VehicleState)> {
    t.firmware_events()
        .filter_map(|(at, e)| match e {
            FirmwareEvent::StateSnapshot(s) => Some((at, s.state)),
            _ => None,
        })
        .collect()
}

/// Bodies the vehicle handed to the network, with their submission times.
pub fn outbound(t: &Transcript) -> Vec<(Millis, String)> {
    t.iter()
        .filter(|r| r.source == Source::Modem)
        .filter_map(|r| match &r.event {
            Event::Sim(SimEvent::SmsSubmitted { body, .. }) => Some((r.t, body.clone())),
            _ => None,
        })
        .collect()
}

pub fn count_type(t: &Transcript, name: &str) -> usize {
    t.iter().filter(|r| r.event.type_name() == name).count()
}

pub fn times_of(t: &Transcript, name: &str) -> Vec<Millis> {
    t.iter().filter(|r| r.event.type_name() == name).map(|r| r.t).collect()
}
