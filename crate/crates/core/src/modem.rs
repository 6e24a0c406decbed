//! Simulated GSM modem with a text-mode AT command surface.
//!
//! Supported commands (anything else answers `ERROR`):
//!
//! ```text
//! AT                    OK
//! AT+CREG?              +CREG: 0,1 once registered, +CREG: 0,2 while searching
//! AT+CMGF=1             text mode (AT+CMGF=0, PDU mode, is refused)
//! AT+CMGS="<number>"    prompt "> ", then body bytes terminated by 0x1A
//! AT+CMGR=<i>           +CMGR: "REC UNREAD","<sender>",,"<timestamp>" / body / OK
//! AT+CMGD=<i>           delete slot i
//! ```
//!
//! Until the modem has registered only `AT` and `AT+CREG?` are accepted.
//! Storage slots are numbered from 1 in delivery order; deleting a slot
//! moves the later messages down, so slot 1 is always the oldest message.
//! Stored messages survive a power cycle (they live on the SIM).
//!
//! On the wire every response line is framed as `\r\n<line>\r\n`, except the
//! body prompt which is `\r\n> `. Commands end with `\r`; a stray `\n` is
//! ignored. Echo is off.

use std::collections::VecDeque;

use chrono::{NaiveDate, TimeDelta};
use thiserror::Error;

use crate::command::{PhoneNumber, SmsBody, SmsMessage};
use crate::Millis;

pub const CTRL_Z: u8 = 0x1a;
pub const ESC: u8 = 0x1b;
pub const DEFAULT_ATTACH_DELAY_MS: Millis = 60_000;
pub const BODY_PROMPT: &str = "> ";

/// Time from power-on until network registration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttachDelay {
    After(Millis),
    /// No network coverage: the modem never registers.
    Never,
}

impl Default for AttachDelay {
    fn default() -> Self {
        AttachDelay::After(DEFAULT_ATTACH_DELAY_MS)
    }
}

impl AttachDelay {
    pub fn as_millis(&self) -> Option<Millis> {
        match self {
            AttachDelay::After(ms) => Some(*ms),
            AttachDelay::Never => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("modem is powered off")]
pub struct Unpowered;

#[derive(Debug, Clone)]
struct StoredSms {
    message: SmsMessage,
    read: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum SerialMode {
    Command,
    Body { recipient: PhoneNumber },
}

#[derive(Debug, Clone)]
pub struct Modem {
    sim_number: PhoneNumber,
    attach_delay: AttachDelay,
    powered_at: Option<Millis>,
    text_mode: bool,
    inbox: VecDeque<StoredSms>,
    outbox: Vec<SmsMessage>,
    next_reference: u8,
    rx: Vec<u8>,
    mode: SerialMode,
}

impl Modem {
    /// A modem that is still unpowered.
    pub fn new(sim_number: PhoneNumber, attach_delay: AttachDelay) -> Self {
        Self {
            sim_number,
            attach_delay,
            powered_at: None,
            text_mode: false,
            inbox: VecDeque::new(),
            outbox: Vec::new(),
            next_reference: 1,
            rx: Vec::new(),
            mode: SerialMode::Command,
        }
    }

    pub fn sim_number(&self) -> &PhoneNumber {
        &self.sim_number
    }

    pub fn attach_delay(&self) -> AttachDelay {
        self.attach_delay
    }

    pub fn power_on(&mut self, now: Millis) {
        self.powered_at = Some(now);
        self.text_mode = false;
        self.rx.clear();
        self.mode = SerialMode::Command;
    }

    pub fn power_off(&mut self) {
        self.powered_at = None;
        self.rx.clear();
        self.mode = SerialMode::Command;
    }

    pub fn is_powered(&self) -> bool {
        self.powered_at.is_some()
    }

    pub fn ready_at(&self) -> Option<Millis> {
        Some(self.powered_at? + self.attach_delay.as_millis()?)
    }

    pub fn is_registered(&self, now: Millis) -> bool {
        self.ready_at().is_some_and(|t| now >= t)
    }

    /// Stores an inbound message delivered by the network.
    pub fn deliver(&mut self, message: SmsMessage) -> Result<(), Unpowered> {
        if !self.is_powered() {
            return Err(Unpowered);
        }
        self.inbox.push_back(StoredSms { message, read: false });
        Ok(())
    }

    pub fn inbox_len(&self) -> usize {
        self.inbox.len()
    }

    /// Messages submitted with `AT+CMGS` since the last call.
    pub fn take_outbox(&mut self) -> Vec<SmsMessage> {
        std::mem::take(&mut self.outbox)
    }

    /// Executes one command line (no terminator) and returns the response
    /// lines. In body mode the line is treated as the message text.
    pub fn execute(&mut self, now: Millis, line: &str) -> Vec<String> {
        if !self.is_powered() {
            return Vec::new();
        }
        if let SerialMode::Body { recipient } = &self.mode {
            let recipient = recipient.clone();
            self.mode = SerialMode::Command;
            return self.submit_body(now, recipient, line.as_bytes());
        }
        let registered = self.is_registered(now);
        match line {
            "AT" => ok(),
            "AT+CREG?" => {
                let stat = if registered { 1 } else { 2 };
                vec![format!("+CREG: 0,{stat}"), "OK".into()]
            }
            _ if !registered => error(),
            "AT+CMGF=1" => {
                self.text_mode = true;
                ok()
            }
            _ if !self.text_mode => error(),
            _ => {
                if let Some(arg) = line.strip_prefix("AT+CMGS=") {
                    self.begin_send(arg)
                } else if let Some(arg) = line.strip_prefix("AT+CMGR=") {
                    self.read_slot(arg)
                } else if let Some(arg) = line.strip_prefix("AT+CMGD=") {
                    self.delete_slot(arg)
                } else {
                    error()
                }
            }
        }
    }

    fn begin_send(&mut self, arg: &str) -> Vec<String> {
        let number = arg
            .strip_prefix('"')
            .and_then(|s| s.strip_suffix('"'))
            .and_then(|s| PhoneNumber::parse(s).ok());
        match number {
            Some(recipient) => {
                self.mode = SerialMode::Body { recipient };
                vec![BODY_PROMPT.into()]
            }
            None => error(),
        }
    }

    fn submit_body(&mut self, now: Millis, recipient: PhoneNumber, body: &[u8]) -> Vec<String> {
        let body = match std::str::from_utf8(body).ok().and_then(|s| SmsBody::new(s).ok()) {
            Some(b) => b,
            None => return error(),
        };
        self.outbox
            .push(SmsMessage::new(self.sim_number.clone(), recipient, body, now));
        let reference = self.next_reference;
        self.next_reference = self.next_reference.wrapping_add(1).max(1);
        vec![format!("+CMGS: {reference}"), "OK".into()]
    }

    fn slot(arg: &str) -> Option<usize> {
        if arg.is_empty() || !arg.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        arg.parse::<usize>().ok().filter(|i| *i >= 1)
    }

    fn read_slot(&mut self, arg: &str) -> Vec<String> {
        let Some(index) = Self::slot(arg) else {
            return error();
        };
        let Some(stored) = self.inbox.get_mut(index - 1) else {
            return ok();
        };
        let status = if stored.read { "REC READ" } else { "REC UNREAD" };
        stored.read = true;
        let delivered = stored.message.delivered_at.unwrap_or(stored.message.submitted_at);
        vec![
            format!(
                "+CMGR: \"{status}\",\"{}\",,\"{}\"",
                stored.message.sender,
                scts_timestamp(delivered)
            ),
            stored.message.body.to_string(),
            "OK".into(),
        ]
    }

    fn delete_slot(&mut self, arg: &str) -> Vec<String> {
        let Some(index) = Self::slot(arg) else {
            return error();
        };
        if index <= self.inbox.len() {
            self.inbox.remove(index - 1);
        }
        ok()
    }

    /// Byte-level serial interface. Returns everything the modem writes
    /// back in response to `bytes`.
    pub fn serial_write(&mut self, now: Millis, bytes: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        if !self.is_powered() {
            return out;
        }
        for &b in bytes {
            match (&self.mode, b) {
                (SerialMode::Command, b'\r') => {
                    let line = String::from_utf8_lossy(&self.rx).into_owned();
                    self.rx.clear();
                    if !line.is_empty() {
                        write_lines(&mut out, &self.execute(now, &line));
                    }
                }
                (SerialMode::Command, b'\n') => {}
                (SerialMode::Body { .. }, CTRL_Z) => {
                    let body = String::from_utf8_lossy(&self.rx).into_owned();
                    self.rx.clear();
                    write_lines(&mut out, &self.execute(now, &body));
                }
                (SerialMode::Body { .. }, ESC) => {
                    self.rx.clear();
                    self.mode = SerialMode::Command;
                    write_lines(&mut out, &ok());
                }
                _ => self.rx.push(b),
            }
        }
        out
    }
}

fn ok() -> Vec<String> {
    vec!["OK".into()]
}

fn error() -> Vec<String> {
    vec!["ERROR".into()]
}

fn write_lines(out: &mut Vec<u8>, lines: &[String]) {
    for line in lines {
        out.extend_from_slice(b"\r\n");
        out.extend_from_slice(line.as_bytes());
        if line != BODY_PROMPT {
            out.extend_from_slice(b"\r\n");
        }
    }
}

/// Service-centre timestamp `yy/MM/dd,hh:mm:ss+00`, counting virtual time
/// from 2020-01-01 00:00:00 UTC.
pub fn scts_timestamp(at: Millis) -> String {
    let epoch = NaiveDate::from_ymd_opt(2020, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid epoch");
    let t = epoch + TimeDelta::milliseconds(at as i64);
    format!("{}+00", t.format("%y/%m/%d,%H:%M:%S"))
}
