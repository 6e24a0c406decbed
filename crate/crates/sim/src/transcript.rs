//! Transcript records, serialized one JSON object per line with a fixed key
//! order: `t`, `source`, `type`, then the payload fields.

use serde::Serialize;
use smstrack_core::{FirmwareEvent, Millis};

/// Which part of the simulated world produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Scenario stimuli and run bookkeeping.
    Harness,
    /// A phone handing a message to the network.
    Phone,
    Network,
    Modem,
    Firmware,
}

impl Source {
    /// Sources that live on the vehicle and need its power supply.
    pub fn is_vehicle(&self) -> bool {
        matches!(self, Source::Modem | Source::Firmware)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SimEvent {
    Power {
        source: &'static str,
        on: bool,
        powered: bool,
    },
    Restart,
    Waypoint {
        lat: f64,
        lon: f64,
        sats: u32,
        hdop: u32,
    },
    SmsSubmitted {
        id: u64,
        from: String,
        to: String,
        body: String,
        due: Millis,
    },
    SmsDelivered {
        id: u64,
        from: String,
        to: String,
        body: String,
        submitted_at: Millis,
        latency_ms: Millis,
    },
    SmsDropped {
        id: u64,
        from: String,
        to: String,
        reason: &'static str,
    },
    SmsHeld {
        id: u64,
        to: String,
    },
    SimEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Event {
    Sim(SimEvent),
    Firmware(FirmwareEvent),
}

impl Event {
    pub fn type_name(&self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.get("type").and_then(|t| t.as_str()).map(str::to_owned))
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub t: Millis,
    pub source: Source,
    #[serde(flatten)]
    pub event: Event,
}

impl Record {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub records: Vec<Record>,
}

impl Transcript {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_json());
            out.push('\n');
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = &Record> {
        self.records.iter()
    }

    pub fn firmware_events(&self) -> impl Iterator<Item = (Millis, &FirmwareEvent)> {
        self.records.iter().filter_map(|r| match &r.event {
            Event::Firmware(e) => Some((r.t, e)),
            _ => None,
        })
    }

    pub fn sim_events(&self) -> impl Iterator<Item = (Millis, &SimEvent)> {
        self.records.iter().filter_map(|r| match &r.event {
            Event::Sim(e) => Some((r.t, e)),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use smstrack_core::{initial_state, Snapshot};

    #[test]
    fn key_order_is_stable() {
        let r = Record {
            t: 5,
            source: Source::Network,
            event: Event::Sim(SimEvent::SmsDropped {
                id: 3,
                from: "+1".into(),
                to: "+2".into(),
                reason: "unpowered",
            }),
        };
        assert_eq!(
            r.to_json(),
            r#"{"t":5,"source":"network","type":"sms_dropped","id":3,"from":"+1","to":"+2","reason":"unpowered"}"#
        );
    }

    #[test]
    fn snapshot_is_flat() {
        let r = Record {
            t: 0,
            source: Source::Firmware,
            event: Event::Firmware(FirmwareEvent::StateSnapshot(Snapshot::from(initial_state()))),
        };
        assert_eq!(
            r.to_json(),
            concat!(
                r#"{"t":0,"source":"firmware","type":"state_snapshot","position_lights":false,"head_lights":false,"#,
                r#""brake_lights":false,"warning_lights":false,"doors_locked":false,"gsm_ready":false,"#,
                r#""location_mode":false,"white":0,"red":2,"yellow":0,"green":0}"#
            )
        );
        assert_eq!(r.event.type_name(), "state_snapshot");
    }
}
