//! Line-oriented scenario files.
//!
//! ```text
//! # comment
//! set seed 42
//! set attach_delay 60000        # or `never`
//! set owner +40712345678
//! 0      waypoint 44.44212 26.04938 7 120
//! 61000  sms +40712345678 "0lights: ON"
//! 90000  power main off
//! 95000  restart
//! ```
//!
//! Grammar:
//!
//! ```text
//! file     := (line "\n")*
//! line     := blank | comment | setting | event
//! setting  := "set" key value
//! event    := at_ms kind
//! kind     := "sms" number quoted
//!           | "waypoint" lat lon [sats [hdop_hundredths]]
//!           | "power" ("main" | "backup") ("on" | "off")
//!           | "restart"
//! quoted   := '"' (char | '\"' | '\\')* '"'
//! ```
//!
//! Events must appear in non-decreasing time order; equal times keep file
//! order.

use std::fmt::Write as _;
use std::path::Path;

use smstrack_core::firmware::{DEFAULT_ATTACH_TIMEOUT_MS, DEFAULT_LOOP_TICK_MS};
use smstrack_core::modem::{AttachDelay, DEFAULT_ATTACH_DELAY_MS};
use smstrack_core::network::{DEFAULT_LATENCY_MAX_MS, DEFAULT_LATENCY_MIN_MS};
use smstrack_core::{Millis, PhoneNumber, SmsBody};
use thiserror::Error;

pub const DEFAULT_OWNER: &str = "+40712345678";
pub const DEFAULT_SIM_NUMBER: &str = "+40700000000";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: event at {at} ms is earlier than the previous event at {previous} ms")]
    Unsorted { line: usize, at: Millis, previous: Millis },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerSource {
    Main,
    Backup,
}

impl PowerSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            PowerSource::Main => "main",
            PowerSource::Backup => "backup",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub latitude: f64,
    pub longitude: f64,
    pub satellites: u32,
    pub hdop_hundredths: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    InboundSms { sender: PhoneNumber, body: SmsBody },
    Waypoint(Waypoint),
    Power { source: PowerSource, on: bool },
    Restart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvent {
    pub at_ms: Millis,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub attach_delay: AttachDelay,
    pub attach_timeout_ms: Millis,
    pub ack_mode: bool,
    pub loop_tick_ms: Millis,
    pub latency_min_ms: Millis,
    pub latency_max_ms: Millis,
    pub owner: PhoneNumber,
    pub authorized: Vec<PhoneNumber>,
    pub sim_number: PhoneNumber,
    /// 0 disables periodic location reports.
    pub location_period_ms: Millis,
    pub full_precision: bool,
    /// Virtual time simulated after the last event.
    pub drain_ms: Millis,
    /// Hold messages for an unpowered vehicle instead of dropping them.
    pub store_and_forward: bool,
    pub gps_period_ms: Millis,
    pub main_power: bool,
    pub backup_power: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            attach_delay: AttachDelay::After(DEFAULT_ATTACH_DELAY_MS),
            attach_timeout_ms: DEFAULT_ATTACH_TIMEOUT_MS,
            ack_mode: false,
            loop_tick_ms: DEFAULT_LOOP_TICK_MS,
            latency_min_ms: DEFAULT_LATENCY_MIN_MS,
            latency_max_ms: DEFAULT_LATENCY_MAX_MS,
            owner: PhoneNumber::parse(DEFAULT_OWNER).expect("valid default"),
            authorized: Vec::new(),
            sim_number: PhoneNumber::parse(DEFAULT_SIM_NUMBER).expect("valid default"),
            location_period_ms: 0,
            full_precision: false,
            drain_ms: 20_000,
            store_and_forward: false,
            gps_period_ms: 1_000,
            main_power: true,
            backup_power: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub config: SimConfig,
    pub events: Vec<ScenarioEvent>,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut scenario = Scenario::default();
        let mut previous: Option<Millis> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let tokens = tokenize(raw, line)?;
            let Some(first) = tokens.first() else {
                continue;
            };
            if first.text == "set" {
                apply_setting(&mut scenario.config, &tokens, line)?;
                continue;
            }
            let at_ms: Millis = first
                .text
                .parse()
                .map_err(|_| parse_err(line, first, "expected `set` or an event time in milliseconds"))?;
            if let Some(prev) = previous {
                if at_ms < prev {
                    return Err(ScenarioError::Unsorted {
                        line,
                        at: at_ms,
                        previous: prev,
                    });
                }
            }
            previous = Some(at_ms);
            let kind = parse_event(&tokens, line)?;
            scenario.events.push(ScenarioEvent { at_ms, kind });
        }
        if scenario.config.latency_min_ms > scenario.config.latency_max_ms {
            return Err(ScenarioError::Invalid {
                line: 0,
                message: "latency_min exceeds latency_max".into(),
            });
        }
        Ok(scenario)
    }

    pub fn last_event_at(&self) -> Millis {
        self.events.last().map_or(0, |e| e.at_ms)
    }

    /// Renders back into the file format; `parse(to_text())` is identity.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let d = SimConfig::default();
        let mut out = String::new();
        let mut set = |key: &str, value: String| {
            let _ = writeln!(out, "set {key} {value}");
        };
        set("seed", c.seed.to_string());
        set(
            "attach_delay",
            c.attach_delay
                .as_millis()
                .map_or_else(|| "never".to_string(), |ms| ms.to_string()),
        );
        set("attach_timeout", c.attach_timeout_ms.to_string());
        set("ack_mode", c.ack_mode.to_string());
        set("loop_tick", c.loop_tick_ms.to_string());
        set("latency_min", c.latency_min_ms.to_string());
        set("latency_max", c.latency_max_ms.to_string());
        set("owner", c.owner.to_string());
        for a in &c.authorized {
            set("authorized", a.to_string());
        }
        if c.sim_number != d.sim_number {
            set("sim_number", c.sim_number.to_string());
        }
        set("location_period", c.location_period_ms.to_string());
        set("full_precision", c.full_precision.to_string());
        set("drain", c.drain_ms.to_string());
        set("store_and_forward", c.store_and_forward.to_string());
        set("gps_period", c.gps_period_ms.to_string());
        set("main_power", on_off(c.main_power).to_string());
        set("backup_power", on_off(c.backup_power).to_string());
        for e in &self.events {
            let _ = write!(out, "{} ", e.at_ms);
            let _ = match &e.kind {
                EventKind::InboundSms { sender, body } => writeln!(out, "sms {sender} {}", quote(body.as_str())),
                EventKind::Waypoint(w) => writeln!(
                    out,
                    "waypoint {} {} {} {}",
                    w.latitude, w.longitude, w.satellites, w.hdop_hundredths
                ),
                EventKind::Power { source, on } => writeln!(out, "power {} {}", source.as_str(), on_off(*on)),
                EventKind::Restart => writeln!(out, "restart"),
            };
        }
        out
    }
}

fn on_off(on: bool) -> &'static str {
    if on {
        "on"
    } else {
        "off"
    }
}

fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            q.push('\\');
        }
        q.push(c);
    }
    q.push('"');
    q
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    text: String,
    column: usize,
    quoted: bool,
}

fn parse_err(line: usize, token: &Token, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        column: token.column,
        message: message.into(),
    }
}

fn tokenize(raw: &str, line: usize) -> Result<Vec<Token>, ScenarioError> {
    let mut tokens = Vec::new();
    let mut chars = raw.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c == '#' {
            break;
        }
        if c == '"' {
            chars.next();
            let mut text = String::new();
            let mut closed = false;
            while let Some((_, c)) = chars.next() {
                match c {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' => match chars.next() {
                        Some((_, e @ ('"' | '\\'))) => text.push(e),
                        Some((pos, _)) => {
                            return Err(ScenarioError::Parse {
                                line,
                                column: pos + 1,
                                message: "unknown escape (only \\\" and \\\\ are allowed)".into(),
                            })
                        }
                        None => break,
                    },
                    c => text.push(c),
                }
            }
            if !closed {
                return Err(ScenarioError::Parse {
                    line,
                    column: start + 1,
                    message: "unterminated string".into(),
                });
            }
            tokens.push(Token {
                text,
                column: start + 1,
                quoted: true,
            });
            continue;
        }
        let mut text = String::new();
        while let Some(&(_, c)) = chars.peek() {
            if c.is_whitespace() || c == '#' {
                break;
            }
            text.push(c);
            chars.next();
        }
        tokens.push(Token {
            text,
            column: start + 1,
            quoted: false,
        });
    }
    Ok(tokens)
}

fn expect_len(
    tokens: &[Token],
    range: std::ops::RangeInclusive<usize>,
    line: usize,
    what: &str,
) -> Result<(), ScenarioError> {
    if range.contains(&tokens.len()) {
        return Ok(());
    }
    let token = tokens.get(*range.end()).or(tokens.last()).expect("non-empty");
    Err(parse_err(line, token, format!("wrong number of arguments for {what}")))
}

fn number<T: std::str::FromStr>(token: &Token, line: usize, what: &str) -> Result<T, ScenarioError> {
    token
        .text
        .parse()
        .map_err(|_| parse_err(line, token, format!("invalid {what} {:?}", token.text)))
}

fn boolean(token: &Token, line: usize) -> Result<bool, ScenarioError> {
    match token.text.as_str() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(parse_err(line, token, format!("expected on/off, got {:?}", token.text))),
    }
}

fn phone(token: &Token, line: usize) -> Result<PhoneNumber, ScenarioError> {
    PhoneNumber::parse(&token.text).map_err(|e| parse_err(line, token, e.to_string()))
}

fn apply_setting(config: &mut SimConfig, tokens: &[Token], line: usize) -> Result<(), ScenarioError> {
    expect_len(tokens, 3..=3, line, "set")?;
    let key = &tokens[1];
    let value = &tokens[2];
    match key.text.as_str() {
        "seed" => config.seed = number(value, line, "seed")?,
        "attach_delay" => {
            config.attach_delay = if value.text == "never" {
                AttachDelay::Never
            } else {
                AttachDelay::After(number(value, line, "attach_delay")?)
            }
        }
        "attach_timeout" => config.attach_timeout_ms = number(value, line, "attach_timeout")?,
        "ack_mode" => config.ack_mode = boolean(value, line)?,
        "loop_tick" => {
            config.loop_tick_ms = number(value, line, "loop_tick")?;
            if config.loop_tick_ms == 0 {
                return Err(parse_err(line, value, "loop_tick must be positive"));
            }
        }
        "latency_min" => config.latency_min_ms = number(value, line, "latency_min")?,
        "latency_max" => config.latency_max_ms = number(value, line, "latency_max")?,
        "owner" => config.owner = phone(value, line)?,
        "authorized" => config.authorized.push(phone(value, line)?),
        "sim_number" => config.sim_number = phone(value, line)?,
        "location_period" => config.location_period_ms = number(value, line, "location_period")?,
        "full_precision" => config.full_precision = boolean(value, line)?,
        "drain" => config.drain_ms = number(value, line, "drain")?,
        "store_and_forward" => config.store_and_forward = boolean(value, line)?,
        "gps_period" => {
            config.gps_period_ms = number(value, line, "gps_period")?;
            if config.gps_period_ms == 0 {
                return Err(parse_err(line, value, "gps_period must be positive"));
            }
        }
        "main_power" => config.main_power = boolean(value, line)?,
        "backup_power" => config.backup_power = boolean(value, line)?,
        _ => return Err(parse_err(line, key, format!("unknown setting {:?}", key.text))),
    }
    Ok(())
}

fn parse_event(tokens: &[Token], line: usize) -> Result<EventKind, ScenarioError> {
    let Some(kind) = tokens.get(1) else {
        return Err(parse_err(line, &tokens[0], "missing event kind"));
    };
    match kind.text.as_str() {
        "sms" => {
            expect_len(tokens, 4..=4, line, "sms")?;
            let sender = phone(&tokens[2], line)?;
            let body_token = &tokens[3];
            if !body_token.quoted {
                return Err(parse_err(line, body_token, "SMS body must be a quoted string"));
            }
            let body = SmsBody::new(body_token.text.clone()).map_err(|e| parse_err(line, body_token, e.to_string()))?;
            Ok(EventKind::InboundSms { sender, body })
        }
        "waypoint" => {
            expect_len(tokens, 4..=6, line, "waypoint")?;
            let latitude: f64 = number(&tokens[2], line, "latitude")?;
            let longitude: f64 = number(&tokens[3], line, "longitude")?;
            if !(-90.0..=90.0).contains(&latitude) {
                return Err(parse_err(line, &tokens[2], "latitude out of range"));
            }
            if !(-180.0..=180.0).contains(&longitude) {
                return Err(parse_err(line, &tokens[3], "longitude out of range"));
            }
            let satellites = tokens
                .get(4)
                .map(|t| number(t, line, "satellite count"))
                .transpose()?
                .unwrap_or(8);
            let hdop_hundredths = tokens
                .get(5)
                .map(|t| number(t, line, "hdop"))
                .transpose()?
                .unwrap_or(90);
            Ok(EventKind::Waypoint(Waypoint {
                latitude,
                longitude,
                satellites,
                hdop_hundredths,
            }))
        }
        "power" => {
            expect_len(tokens, 4..=4, line, "power")?;
            let source = match tokens[2].text.as_str() {
                "main" => PowerSource::Main,
                "backup" => PowerSource::Backup,
                _ => return Err(parse_err(line, &tokens[2], "power source must be main or backup")),
            };
            let on = boolean(&tokens[3], line)?;
            Ok(EventKind::Power { source, on })
        }
        "restart" => {
            expect_len(tokens, 2..=2, line, "restart")?;
            Ok(EventKind::Restart)
        }
        other => Err(parse_err(line, kind, format!("unknown event kind {other:?}"))),
    }
}
