//! The vehicle controller program: start-up, GSM registration wait, and the
//! receive → authenticate → decode → act → reply loop.
//!
//! The firmware never blocks. [`Firmware::loop_iteration`] is called once
//! per loop tick by whoever owns the clock; waiting for registration and
//! listening to the GPS are spread over successive iterations.

use serde::Serialize;
use thiserror::Error;

use crate::command::{authenticate, parse_command, AuthRegistry, Command, PhoneNumber};
use crate::location::{compose_location_text, compose_maps_link, FixAcquisition, GpsPort, ACQUIRE_WINDOW_MS};
use crate::modem::{Modem, BODY_PROMPT, CTRL_Z};
use crate::nmea::NmeaDecoder;
use crate::vehicle::{apply, initial_state, Effect, LedPanel, VehicleState};
use crate::Millis;

pub const DEFAULT_LOOP_TICK_MS: Millis = 100;
pub const DEFAULT_ATTACH_TIMEOUT_MS: Millis = 120_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirmwareConfig {
    pub registry: AuthRegistry,
    /// Echo the command text back after lighting and door commands.
    pub ack_mode: bool,
    /// When set, a location request also arms a repeating report.
    pub location_period_ms: Option<Millis>,
    /// Keep all six decimals in the maps link.
    pub full_precision: bool,
    /// Give up on network registration after this long.
    pub attach_timeout_ms: Millis,
    pub acquire_window_ms: Millis,
}

impl FirmwareConfig {
    pub fn new(registry: AuthRegistry) -> Self {
        Self {
            registry,
            ack_mode: false,
            location_period_ms: None,
            full_precision: false,
            attach_timeout_ms: DEFAULT_ATTACH_TIMEOUT_MS,
            acquire_window_ms: ACQUIRE_WINDOW_MS,
        }
    }
}

/// Serial connection to the modem.
pub trait SerialLink {
    fn exchange(&mut self, now: Millis, bytes: &[u8]) -> Vec<u8>;
}

impl SerialLink for Modem {
    fn exchange(&mut self, now: Millis, bytes: &[u8]) -> Vec<u8> {
        self.serial_write(now, bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AtError {
    #[error("modem answered ERROR")]
    Error,
    #[error("no response from modem")]
    NoResponse,
    #[error("unexpected response {0:?}")]
    Unexpected(String),
}

/// Splits `\r\n<line>\r\n` framed output into lines, keeping empty ones.
fn split_response(raw: &[u8]) -> Result<Vec<String>, AtError> {
    let text = String::from_utf8_lossy(raw);
    let mut rest: &str = &text;
    let mut lines = Vec::new();
    while !rest.is_empty() {
        rest = rest
            .strip_prefix("\r\n")
            .ok_or_else(|| AtError::Unexpected(text.to_string()))?;
        if rest == BODY_PROMPT {
            lines.push(BODY_PROMPT.to_string());
            break;
        }
        let end = rest.find("\r\n").ok_or_else(|| AtError::Unexpected(text.to_string()))?;
        lines.push(rest[..end].to_string());
        rest = &rest[end + 2..];
    }
    Ok(lines)
}

/// Sends one command and returns the information lines before `OK`.
pub fn at_command(link: &mut impl SerialLink, now: Millis, command: &str) -> Result<Vec<String>, AtError> {
    let mut bytes = command.as_bytes().to_vec();
    bytes.push(b'\r');
    let mut lines = split_response(&link.exchange(now, &bytes))?;
    match lines.last().map(String::as_str) {
        Some("OK") => {
            lines.pop();
            Ok(lines)
        }
        Some("ERROR") => Err(AtError::Error),
        None => Err(AtError::NoResponse),
        Some(other) => Err(AtError::Unexpected(other.to_string())),
    }
}

/// `AT+CMGS` exchange. Returns the message reference.
pub fn send_sms(link: &mut impl SerialLink, now: Millis, to: &PhoneNumber, body: &str) -> Result<u32, AtError> {
    let prompt = split_response(&link.exchange(now, format!("AT+CMGS=\"{to}\"\r").as_bytes()))?;
    match prompt.first().map(String::as_str) {
        Some(BODY_PROMPT) => {}
        Some("ERROR") => return Err(AtError::Error),
        None => return Err(AtError::NoResponse),
        Some(other) => return Err(AtError::Unexpected(other.to_string())),
    }
    let mut bytes = body.as_bytes().to_vec();
    bytes.push(CTRL_Z);
    let lines = split_response(&link.exchange(now, &bytes))?;
    match lines.as_slice() {
        [info, ok] if ok == "OK" => info
            .strip_prefix("+CMGS: ")
            .and_then(|r| r.parse().ok())
            .ok_or_else(|| AtError::Unexpected(info.clone())),
        [e] if e == "ERROR" => Err(AtError::Error),
        [] => Err(AtError::NoResponse),
        other => Err(AtError::Unexpected(other.join("|"))),
    }
}

/// A message read from storage slot 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceivedSms {
    pub sender: String,
    pub body: String,
}

fn parse_cmgr(lines: &[String]) -> Result<Option<ReceivedSms>, AtError> {
    match lines {
        [] => Ok(None),
        [header, body] => {
            let fields: Vec<&str> = header
                .strip_prefix("+CMGR: ")
                .ok_or_else(|| AtError::Unexpected(header.clone()))?
                .split('"')
                .skip(1)
                .step_by(2)
                .collect();
            let sender = fields.get(1).ok_or_else(|| AtError::Unexpected(header.clone()))?;
            Ok(Some(ReceivedSms {
                sender: sender.to_string(),
                body: body.clone(),
            }))
        }
        other => Err(AtError::Unexpected(other.join("|"))),
    }
}

/// Flat view of the vehicle and its lamp panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Snapshot {
    #[serde(flatten)]
    pub state: VehicleState,
    #[serde(flatten)]
    pub panel: LedPanel,
}

impl From<VehicleState> for Snapshot {
    fn from(state: VehicleState) -> Self {
        Self {
            state,
            panel: state.panel(),
        }
    }
}

/// Observable firmware activity.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FirmwareEvent {
    Boot,
    /// Red GSM lamp lit, waiting for registration.
    GsmWaiting,
    GsmReady,
    GsmAttachFailed,
    SmsReceived {
        from: String,
        body: String,
    },
    AuthRejected {
        from: String,
    },
    CmdIgnored {
        from: String,
        body: String,
    },
    CmdApplied {
        from: String,
        command: Command,
        effects: Vec<Effect>,
    },
    /// The serial `LAT= LON= SAT= PREC=` line printed after a listening window.
    LocationReport {
        line: String,
        valid: bool,
    },
    ModemError {
        command: String,
        error: String,
    },
    StateSnapshot(Snapshot),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Attaching,
    Ready,
    /// Registration never happened; terminal until restart.
    Error,
}

#[derive(Debug, Clone)]
struct Periodic {
    recipient: PhoneNumber,
    next_at: Millis,
}

#[derive(Debug, Clone)]
pub struct Firmware {
    config: FirmwareConfig,
    state: VehicleState,
    phase: Phase,
    booted_at: Millis,
    decoder: NmeaDecoder,
    acquisition: Option<(FixAcquisition, PhoneNumber)>,
    periodic: Option<Periodic>,
}

impl Firmware {
    /// Start-up: everything off, GSM lamp red, registration pending.
    pub fn setup(config: FirmwareConfig, now: Millis) -> (Self, Vec<FirmwareEvent>) {
        let fw = Self {
            config,
            state: initial_state(),
            phase: Phase::Attaching,
            booted_at: now,
            decoder: NmeaDecoder::new(),
            acquisition: None,
            periodic: None,
        };
        let events = vec![
            FirmwareEvent::Boot,
            FirmwareEvent::GsmWaiting,
            FirmwareEvent::StateSnapshot(fw.state.into()),
        ];
        (fw, events)
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> &FirmwareConfig {
        &self.config
    }

    pub fn is_listening_to_gps(&self) -> bool {
        self.acquisition.is_some()
    }

    pub fn loop_iteration(
        &mut self,
        now: Millis,
        modem: &mut impl SerialLink,
        gps: &mut impl GpsPort,
    ) -> Vec<FirmwareEvent> {
        let mut events = Vec::new();
        match self.phase {
            Phase::Error => {}
            Phase::Attaching => self.poll_registration(now, modem, &mut events),
            Phase::Ready => {
                if self.acquisition.is_some() {
                    self.continue_acquisition(now, modem, gps, &mut events);
                } else if !self.poll_inbox(now, modem, &mut events) {
                    self.maybe_start_periodic(now);
                }
            }
        }
        events
    }

    fn poll_registration(&mut self, now: Millis, modem: &mut impl SerialLink, events: &mut Vec<FirmwareEvent>) {
        let registered = match at_command(modem, now, "AT+CREG?") {
            Ok(lines) => lines.iter().any(|l| l == "+CREG: 0,1" || l == "+CREG: 0,5"),
            Err(e) => {
                events.push(modem_error("AT+CREG?", e));
                false
            }
        };
        if registered {
            match at_command(modem, now, "AT+CMGF=1") {
                Ok(_) => {
                    self.phase = Phase::Ready;
                    self.state = self.state.with_gsm_ready(true);
                    events.push(FirmwareEvent::GsmReady);
                    events.push(FirmwareEvent::StateSnapshot(self.state.into()));
                    return;
                }
                Err(e) => events.push(modem_error("AT+CMGF=1", e)),
            }
        }
        if now.saturating_sub(self.booted_at) >= self.config.attach_timeout_ms {
            self.phase = Phase::Error;
            events.push(FirmwareEvent::GsmAttachFailed);
        }
    }

    /// Returns true if a stored message was consumed.
    fn poll_inbox(&mut self, now: Millis, modem: &mut impl SerialLink, events: &mut Vec<FirmwareEvent>) -> bool {
        let received = match at_command(modem, now, "AT+CMGR=1").and_then(|l| parse_cmgr(&l)) {
            Ok(Some(sms)) => sms,
            Ok(None) => return false,
            Err(e) => {
                events.push(modem_error("AT+CMGR=1", e));
                return false;
            }
        };
        if let Err(e) = at_command(modem, now, "AT+CMGD=1") {
            events.push(modem_error("AT+CMGD=1", e));
            return false;
        }
        events.push(FirmwareEvent::SmsReceived {
            from: received.sender.clone(),
            body: received.body.clone(),
        });
        let sender = match PhoneNumber::parse(&received.sender) {
            Ok(n) if authenticate(&n, &self.config.registry) => n,
            _ => {
                events.push(FirmwareEvent::AuthRejected { from: received.sender });
                return true;
            }
        };
        let Some(command) = parse_command(received.body.as_bytes()) else {
            events.push(FirmwareEvent::CmdIgnored {
                from: received.sender,
                body: received.body,
            });
            return true;
        };
        self.dispatch(now, command, sender, modem, events);
        true
    }

    fn dispatch(
        &mut self,
        now: Millis,
        command: Command,
        sender: PhoneNumber,
        modem: &mut impl SerialLink,
        events: &mut Vec<FirmwareEvent>,
    ) {
        let (next, effects) = apply(self.state, command);
        self.state = next;
        events.push(FirmwareEvent::CmdApplied {
            from: sender.to_string(),
            command,
            effects,
        });
        events.push(FirmwareEvent::StateSnapshot(self.state.into()));
        match command {
            Command::LocationOn => {
                if let Some(period) = self.config.location_period_ms.filter(|p| *p > 0) {
                    self.periodic = Some(Periodic {
                        recipient: sender.clone(),
                        next_at: now + period,
                    });
                }
                self.acquisition = Some((FixAcquisition::start(now, self.config.acquire_window_ms), sender));
            }
            Command::LocationOff => self.periodic = None,
            _ if self.config.ack_mode => {
                if let Err(e) = send_sms(modem, now, &sender, command.canonical_text()) {
                    events.push(modem_error("AT+CMGS", e));
                }
            }
            _ => {}
        }
    }

    fn maybe_start_periodic(&mut self, now: Millis) {
        let Some(periodic) = self.periodic.as_mut() else {
            return;
        };
        if now < periodic.next_at {
            return;
        }
        let period = self.config.location_period_ms.unwrap_or(0).max(1);
        periodic.next_at = now + period;
        self.acquisition = Some((
            FixAcquisition::start(now, self.config.acquire_window_ms),
            periodic.recipient.clone(),
        ));
    }

    fn continue_acquisition(
        &mut self,
        now: Millis,
        modem: &mut impl SerialLink,
        gps: &mut impl GpsPort,
        events: &mut Vec<FirmwareEvent>,
    ) {
        let Some((acq, _)) = self.acquisition.as_mut() else {
            return;
        };
        let Some(fix) = acq.poll(&mut self.decoder, gps, now) else {
            return;
        };
        let (_, recipient) = self.acquisition.take().expect("acquisition in progress");
        events.push(FirmwareEvent::LocationReport {
            line: compose_location_text(&fix),
            valid: fix.valid,
        });
        let link = compose_maps_link(&fix, self.config.full_precision);
        if let Err(e) = send_sms(modem, now, &recipient, &link) {
            events.push(modem_error("AT+CMGS", e));
        }
    }
}

fn modem_error(command: &str, e: AtError) -> FirmwareEvent {
    FirmwareEvent::ModemError {
        command: command.to_string(),
        error: e.to_string(),
    }
}
