//! Discrete-event scheduler that wires the firmware to the simulated modem,
//! network, GPS receiver and power supply.
//!
//! Actions sharing a timestamp run in a fixed order: scenario stimuli (in
//! file or injection order), then network deliveries (in submission order),
//! then the firmware loop tick. All time is integer milliseconds.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use smstrack_core::firmware::{Firmware, FirmwareConfig, FirmwareEvent, Phase};
use smstrack_core::modem::Modem;
use smstrack_core::network::{InFlight, MessageId, NetworkError, NetworkModel};
use smstrack_core::{AuthRegistry, Millis, SmsMessage, VehicleState};
use thiserror::Error;

use crate::gps::GpsReceiver;
use crate::power::PowerModel;
use crate::scenario::{EventKind, Scenario, ScenarioEvent, SimConfig};
use crate::transcript::{Event, Record, SimEvent, Source, Transcript};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("cannot schedule an event at {at} ms, the clock is already at {now} ms")]
    InThePast { at: Millis, now: Millis },
}

#[derive(Debug, Clone)]
enum Action {
    Stimulus(EventKind),
    Deliver(MessageId),
    Tick { epoch: u64 },
}

impl Action {
    fn class(&self) -> u8 {
        match self {
            Action::Stimulus(_) => 0,
            Action::Deliver(_) => 1,
            Action::Tick { .. } => 2,
        }
    }
}

#[derive(Debug, Clone)]
struct Scheduled {
    at: Millis,
    seq: u64,
    action: Action,
}

impl Scheduled {
    fn key(&self) -> (Millis, u8, u64) {
        (self.at, self.action.class(), self.seq)
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

pub struct Simulation {
    config: SimConfig,
    /// Every action strictly before this time has run.
    clock: Millis,
    queue: BinaryHeap<Reverse<Scheduled>>,
    next_seq: u64,
    power: PowerModel,
    modem: Modem,
    network: NetworkModel,
    gps: GpsReceiver,
    firmware: Option<Firmware>,
    /// Bumped on every boot and shutdown so stale loop ticks are skipped.
    epoch: u64,
    held: Vec<InFlight>,
    records: Vec<Record>,
    /// Every stimulus in scheduling order, for [`Simulation::recording`].
    stimuli: Vec<ScenarioEvent>,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        let network = NetworkModel::new(config.seed, config.latency_min_ms, config.latency_max_ms)?;
        let mut sim = Self {
            modem: Modem::new(config.sim_number.clone(), config.attach_delay),
            gps: GpsReceiver::new(config.gps_period_ms),
            power: PowerModel::new(config.main_power, config.backup_power),
            network,
            config,
            clock: 0,
            queue: BinaryHeap::new(),
            next_seq: 0,
            firmware: None,
            epoch: 0,
            held: Vec::new(),
            records: Vec::new(),
            stimuli: Vec::new(),
        };
        if sim.power.powered() {
            sim.boot(0, true);
        }
        Ok(sim)
    }

    /// Loads every scenario event into the queue.
    pub fn from_scenario(scenario: &Scenario) -> Result<Self, SimError> {
        let mut sim = Self::new(scenario.config.clone())?;
        for e in &scenario.events {
            sim.schedule(e.at_ms, e.kind.clone())?;
        }
        Ok(sim)
    }

    /// Runs a scenario to its last event plus the drain window.
    pub fn run(scenario: &Scenario) -> Result<Transcript, SimError> {
        let mut sim = Self::from_scenario(scenario)?;
        let end = scenario.last_event_at() + scenario.config.drain_ms;
        sim.advance_to(end + 1);
        sim.push(end, Source::Harness, Event::Sim(SimEvent::SimEnd));
        Ok(sim.into_transcript())
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn clock(&self) -> Millis {
        self.clock
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn into_transcript(self) -> Transcript {
        Transcript { records: self.records }
    }

    pub fn vehicle_state(&self) -> Option<&VehicleState> {
        self.firmware.as_ref().map(Firmware::state)
    }

    pub fn firmware_phase(&self) -> Option<Phase> {
        self.firmware.as_ref().map(Firmware::phase)
    }

    pub fn power(&self) -> PowerModel {
        self.power
    }

    pub fn schedule(&mut self, at: Millis, kind: EventKind) -> Result<(), SimError> {
        if at < self.clock {
            return Err(SimError::InThePast { at, now: self.clock });
        }
        self.stimuli.push(ScenarioEvent {
            at_ms: at,
            kind: kind.clone(),
        });
        self.enqueue(at, Action::Stimulus(kind));
        Ok(())
    }

    /// Applies a live stimulus at the current clock and logs it so the
    /// session can be replayed as a batch scenario.
    pub fn inject(&mut self, kind: EventKind) {
        self.schedule(self.clock, kind)
            .expect("the clock never runs ahead of itself");
    }

    pub fn stimulus_count(&self) -> usize {
        self.stimuli.len()
    }

    /// Every stimulus scheduled or injected so far, as a batch scenario with
    /// this run's settings. Replaying it reproduces the same run.
    pub fn recording(&self) -> Scenario {
        let mut events = self.stimuli.clone();
        events.sort_by_key(|e| e.at_ms);
        Scenario {
            config: self.config.clone(),
            events,
        }
    }

    /// Runs every action scheduled strictly before `until`.
    pub fn advance_to(&mut self, until: Millis) {
        while let Some(Reverse(next)) = self.queue.peek() {
            if next.at >= until {
                break;
            }
            let Reverse(next) = self.queue.pop().expect("peeked");
            self.clock = next.at;
            self.handle(next.at, next.action);
        }
        self.clock = self.clock.max(until);
    }

    fn enqueue(&mut self, at: Millis, action: Action) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Scheduled { at, seq, action }));
    }

    fn push(&mut self, t: Millis, source: Source, event: Event) {
        debug_assert!(
            self.records.last().is_none_or(|r| r.t <= t),
            "transcript time went backwards"
        );
        self.records.push(Record { t, source, event });
    }

    fn push_firmware(&mut self, t: Millis, events: Vec<FirmwareEvent>) {
        for e in events {
            self.push(t, Source::Firmware, Event::Firmware(e));
        }
    }

    fn firmware_config(&self) -> FirmwareConfig {
        let registry =
            AuthRegistry::new(self.config.owner.clone()).with_additional(self.config.authorized.iter().cloned());
        let mut cfg = FirmwareConfig::new(registry);
        cfg.ack_mode = self.config.ack_mode;
        cfg.location_period_ms = Some(self.config.location_period_ms).filter(|p| *p > 0);
        cfg.full_precision = self.config.full_precision;
        cfg.attach_timeout_ms = self.config.attach_timeout_ms;
        cfg
    }

    fn boot(&mut self, now: Millis, power_on: bool) {
        if power_on {
            self.modem.power_on(now);
        }
        self.epoch += 1;
        let (fw, events) = Firmware::setup(self.firmware_config(), now);
        self.firmware = Some(fw);
        self.push_firmware(now, events);
        if power_on {
            for mut flight in std::mem::take(&mut self.held) {
                flight
                    .message
                    .mark_delivered(now)
                    .expect("held messages were submitted earlier");
                self.accept_at_vehicle(now, flight);
            }
        }
        self.enqueue(now, Action::Tick { epoch: self.epoch });
    }

    fn shutdown(&mut self) {
        self.firmware = None;
        self.modem.power_off();
        self.epoch += 1;
    }

    fn handle(&mut self, now: Millis, action: Action) {
        match action {
            Action::Stimulus(kind) => self.stimulus(now, kind),
            Action::Deliver(id) => self.deliver(now, id),
            Action::Tick { epoch } => self.tick(now, epoch),
        }
    }

    fn stimulus(&mut self, now: Millis, kind: EventKind) {
        match kind {
            EventKind::InboundSms { sender, body } => {
                let msg = SmsMessage::new(sender, self.config.sim_number.clone(), body, now);
                self.submit(now, Source::Phone, msg);
            }
            EventKind::Waypoint(w) => {
                self.gps.set_position(now, w);
                self.push(
                    now,
                    Source::Harness,
                    Event::Sim(SimEvent::Waypoint {
                        lat: w.latitude,
                        lon: w.longitude,
                        sats: w.satellites,
                        hdop: w.hdop_hundredths,
                    }),
                );
            }
            EventKind::Power { source, on } => {
                let (was, is) = self.power.set(source, on);
                self.push(
                    now,
                    Source::Harness,
                    Event::Sim(SimEvent::Power {
                        source: source.as_str(),
                        on,
                        powered: is,
                    }),
                );
                match (was, is) {
                    (true, false) => self.shutdown(),
                    (false, true) => self.boot(now, true),
                    _ => {}
                }
            }
            EventKind::Restart => {
                if self.power.powered() {
                    self.push(now, Source::Harness, Event::Sim(SimEvent::Restart));
                    self.boot(now, false);
                }
            }
        }
    }

    fn submit(&mut self, now: Millis, source: Source, msg: SmsMessage) {
        let from = msg.sender.to_string();
        let to = msg.recipient.to_string();
        let body = msg.body.to_string();
        let (id, due) = self
            .network
            .submit(msg, now)
            .expect("messages are handed over at their submission time");
        self.push(
            now,
            source,
            Event::Sim(SimEvent::SmsSubmitted {
                id,
                from,
                to,
                body,
                due,
            }),
        );
        self.enqueue(due, Action::Deliver(id));
    }

    fn deliver(&mut self, now: Millis, id: MessageId) {
        let Some(flight) = self.network.take(id, now) else {
            return;
        };
        if flight.message.recipient != self.config.sim_number {
            self.push_delivered(now, &flight);
            return;
        }
        if self.power.powered() {
            self.accept_at_vehicle(now, flight);
        } else if self.config.store_and_forward {
            let to = flight.message.recipient.to_string();
            self.push(now, Source::Network, Event::Sim(SimEvent::SmsHeld { id, to }));
            self.held.push(flight);
        } else {
            let m = &flight.message;
            let event = SimEvent::SmsDropped {
                id,
                from: m.sender.to_string(),
                to: m.recipient.to_string(),
                reason: "vehicle_unpowered",
            };
            self.push(now, Source::Network, Event::Sim(event));
        }
    }

    fn accept_at_vehicle(&mut self, now: Millis, flight: InFlight) {
        self.push_delivered(now, &flight);
        self.modem
            .deliver(flight.message)
            .expect("vehicle modem is powered whenever the system is");
    }

    fn push_delivered(&mut self, now: Millis, flight: &InFlight) {
        let m = &flight.message;
        let event = SimEvent::SmsDelivered {
            id: flight.id,
            from: m.sender.to_string(),
            to: m.recipient.to_string(),
            body: m.body.to_string(),
            submitted_at: m.submitted_at,
            latency_ms: now - m.submitted_at,
        };
        self.push(now, Source::Network, Event::Sim(event));
    }

    fn tick(&mut self, now: Millis, epoch: u64) {
        if epoch != self.epoch {
            return;
        }
        let Some(fw) = self.firmware.as_mut() else {
            return;
        };
        let events = fw.loop_iteration(now, &mut self.modem, &mut self.gps);
        self.push_firmware(now, events);
        for msg in self.modem.take_outbox() {
            self.submit(now, Source::Modem, msg);
        }
        self.enqueue(now + self.config.loop_tick_ms, Action::Tick { epoch });
    }
}
