//! SMS command protocol: phone numbers, message bodies, the fixed command
//! table and sender authentication.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Millis;

/// Maximum SMS body length in text mode.
pub const MAX_BODY_LEN: usize = 160;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("invalid phone number {0:?}: expected '+' (or '00') followed by 7-15 digits")]
    InvalidPhoneNumber(String),
    #[error("SMS body is {0} bytes, limit is {MAX_BODY_LEN}")]
    BodyTooLong(usize),
    #[error("SMS body contains non-printable byte 0x{0:02x}")]
    NonPrintable(u8),
    #[error("delivery time {delivered} precedes submission time {submitted}")]
    DeliveredBeforeSubmitted { submitted: Millis, delivered: Millis },
}

/// An E.164-style subscriber number, always stored as `+` followed by digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PhoneNumber(String);

impl PhoneNumber {
    /// Normalizes separators (spaces, dashes, dots, parentheses) away and
    /// rewrites an international `00` prefix to `+`.
    pub fn parse(raw: &str) -> Result<Self, ProtocolError> {
        let compact: String = raw
            .chars()
            .filter(|c| !matches!(c, ' ' | '-' | '.' | '(' | ')'))
            .collect();
        let digits = if let Some(rest) = compact.strip_prefix('+') {
            rest
        } else if let Some(rest) = compact.strip_prefix("00") {
            rest
        } else {
            return Err(ProtocolError::InvalidPhoneNumber(raw.to_string()));
        };
        if !(7..=15).contains(&digits.len()) || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ProtocolError::InvalidPhoneNumber(raw.to_string()));
        }
        Ok(Self(format!("+{digits}")))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PhoneNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for PhoneNumber {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl TryFrom<String> for PhoneNumber {
    type Error = ProtocolError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::parse(&value)
    }
}

impl From<PhoneNumber> for String {
    fn from(value: PhoneNumber) -> Self {
        value.0
    }
}

/// Text-mode SMS body: printable ASCII, at most 160 bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SmsBody(String);

impl SmsBody {
    pub fn new(text: impl Into<String>) -> Result<Self, ProtocolError> {
        let text = text.into();
        if text.len() > MAX_BODY_LEN {
            return Err(ProtocolError::BodyTooLong(text.len()));
        }
        if let Some(bad) = text.bytes().find(|b| !(0x20..=0x7e).contains(b)) {
            return Err(ProtocolError::NonPrintable(bad));
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }
}

impl fmt::Display for SmsBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for SmsBody {
    type Error = ProtocolError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<SmsBody> for String {
    fn from(value: SmsBody) -> Self {
        value.0
    }
}

/// A short message in flight or delivered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmsMessage {
    pub sender: PhoneNumber,
    pub recipient: PhoneNumber,
    pub body: SmsBody,
    pub submitted_at: Millis,
    /// `None` while the message is still in the network.
    pub delivered_at: Option<Millis>,
}

impl SmsMessage {
    pub fn new(sender: PhoneNumber, recipient: PhoneNumber, body: SmsBody, submitted_at: Millis) -> Self {
        Self {
            sender,
            recipient,
            body,
            submitted_at,
            delivered_at: None,
        }
    }

    pub fn mark_delivered(&mut self, at: Millis) -> Result<(), ProtocolError> {
        if at < self.submitted_at {
            return Err(ProtocolError::DeliveredBeforeSubmitted {
                submitted: self.submitted_at,
                delivered: at,
            });
        }
        self.delivered_at = Some(at);
        Ok(())
    }

    pub fn latency(&self) -> Option<Millis> {
        self.delivered_at.map(|d| d - self.submitted_at)
    }
}

/// The twelve vehicle actions an owner can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Command {
    PositionLightsOn,
    PositionLightsOff,
    HeadLightsOn,
    HeadLightsOff,
    BrakeLightsOn,
    BrakeLightsOff,
    WarningOn,
    WarningOff,
    LocationOn,
    LocationOff,
    DoorsLock,
    DoorsUnlock,
}

impl Command {
    pub const ALL: [Command; 12] = [
        Command::PositionLightsOn,
        Command::PositionLightsOff,
        Command::HeadLightsOn,
        Command::HeadLightsOff,
        Command::BrakeLightsOn,
        Command::BrakeLightsOff,
        Command::WarningOn,
        Command::WarningOff,
        Command::LocationOn,
        Command::LocationOff,
        Command::DoorsLock,
        Command::DoorsUnlock,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Command::PositionLightsOn => "PositionLightsOn",
            Command::PositionLightsOff => "PositionLightsOff",
            Command::HeadLightsOn => "HeadLightsOn",
            Command::HeadLightsOff => "HeadLightsOff",
            Command::BrakeLightsOn => "BrakeLightsOn",
            Command::BrakeLightsOff => "BrakeLightsOff",
            Command::WarningOn => "WarningOn",
            Command::WarningOff => "WarningOff",
            Command::LocationOn => "LocationOn",
            Command::LocationOff => "LocationOff",
            Command::DoorsLock => "DoorsLock",
            Command::DoorsUnlock => "DoorsUnlock",
        }
    }

    pub fn is_lighting(self) -> bool {
        matches!(
            self,
            Command::PositionLightsOn
                | Command::PositionLightsOff
                | Command::HeadLightsOn
                | Command::HeadLightsOff
                | Command::BrakeLightsOn
                | Command::BrakeLightsOff
                | Command::WarningOn
                | Command::WarningOff
        )
    }

    /// The exact SMS text that triggers this command.
    pub fn canonical_text(self) -> &'static str {
        canonical_command_table()
            .entries()
            .iter()
            .find(|e| e.command == self)
            .map(|e| e.text)
            .expect("every command has a table entry")
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommandEntry {
    pub text: &'static str,
    /// Byte length of `text`.
    pub length: usize,
    pub command: Command,
}

impl CommandEntry {
    const fn new(text: &'static str, command: Command) -> Self {
        Self {
            text,
            length: text.len(),
            command,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandTable {
    entries: Vec<CommandEntry>,
}

impl CommandTable {
    pub fn entries(&self) -> &[CommandEntry] {
        &self.entries
    }

    /// Full-body, case- and whitespace-sensitive lookup.
    pub fn lookup(&self, body: &[u8]) -> Option<Command> {
        self.entries
            .iter()
            .find(|e| e.length == body.len() && e.text.as_bytes() == body)
            .map(|e| e.command)
    }

    /// One `<text>\t<tag>` line per entry, in table order.
    pub fn dump(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\n", e.text, e.command.tag()))
            .collect()
    }
}

const CANONICAL_ENTRIES: [CommandEntry; 12] = [
    CommandEntry::new("0lights: ON", Command::PositionLightsOn),
    CommandEntry::new("1lights: OFF", Command::PositionLightsOff),
    CommandEntry::new("2head: ON", Command::HeadLightsOn),
    CommandEntry::new("3head: OFF", Command::HeadLightsOff),
    CommandEntry::new("4brake: ON", Command::BrakeLightsOn),
    CommandEntry::new("5brake: OFF", Command::BrakeLightsOff),
    CommandEntry::new("6warning: ON", Command::WarningOn),
    CommandEntry::new("7warning: OFF", Command::WarningOff),
    CommandEntry::new("8location: ON", Command::LocationOn),
    CommandEntry::new("9location: OFF", Command::LocationOff),
    CommandEntry::new("adoors: ON", Command::DoorsLock),
    CommandEntry::new("bdoors: OFF", Command::DoorsUnlock),
];

/// The immutable command table, built once per process.
pub fn canonical_command_table() -> &'static CommandTable {
    static TABLE: OnceLock<CommandTable> = OnceLock::new();
    TABLE.get_or_init(|| CommandTable {
        entries: CANONICAL_ENTRIES.to_vec(),
    })
}

/// Decodes an SMS body. `None` means the body is not a command and must be
/// ignored without any visible reaction.
pub fn parse_command(body: &[u8]) -> Option<Command> {
    canonical_command_table().lookup(body)
}

/// The set of numbers allowed to control the vehicle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthRegistry {
    owner: PhoneNumber,
    additional: BTreeSet<PhoneNumber>,
}

impl AuthRegistry {
    pub fn new(owner: PhoneNumber) -> Self {
        Self {
            owner,
            additional: BTreeSet::new(),
        }
    }

    pub fn with_additional(mut self, numbers: impl IntoIterator<Item = PhoneNumber>) -> Self {
        self.additional.extend(numbers);
        self
    }

    pub fn owner(&self) -> &PhoneNumber {
        &self.owner
    }

    pub fn additional(&self) -> &BTreeSet<PhoneNumber> {
        &self.additional
    }

    pub fn is_authorized(&self, sender: &PhoneNumber) -> bool {
        *sender == self.owner || self.additional.contains(sender)
    }

    /// Replaces the owner. The previous owner keeps access only if it is
    /// also listed in the additional set. A malformed number leaves the
    /// registry untouched.
    pub fn set_owner(&self, new_owner: &str) -> Result<AuthRegistry, ProtocolError> {
        let owner = PhoneNumber::parse(new_owner)?;
        Ok(AuthRegistry {
            owner,
            additional: self.additional.clone(),
        })
    }
}

pub fn authenticate(sender: &PhoneNumber, registry: &AuthRegistry) -> bool {
    registry.is_authorized(sender)
}
