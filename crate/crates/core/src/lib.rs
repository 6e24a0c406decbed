//! Firmware logic for an SMS-controlled vehicle tracker.
//!
//! The controller accepts a fixed set of text commands from authorized phone
//! numbers, drives the vehicle's lamp groups and door lock, and answers
//! location requests with a maps link built from the GPS receiver's NMEA
//! output. All peripherals are reached through narrow serial-style traits so
//! the same code runs against the simulated modem and GPS in `smstrack-sim`.

pub mod command;
pub mod firmware;
pub mod location;
pub mod modem;
pub mod network;
pub mod nmea;
pub mod vehicle;

/// Virtual time in milliseconds.
pub type Millis = u64;

pub use command::{
    authenticate, canonical_command_table, parse_command, AuthRegistry, Command, CommandTable, PhoneNumber,
    ProtocolError, SmsBody, SmsMessage,
};
pub use firmware::{Firmware, FirmwareConfig, FirmwareEvent, Phase, Snapshot};
pub use location::{compose_location_text, compose_maps_link, format_coord, GpsPort};
pub use modem::{AttachDelay, Modem};
pub use network::NetworkModel;
pub use nmea::{checksum, GpsFix, NmeaDecoder};
pub use vehicle::{apply, initial_state, multiplex_code_for, LedPanel, MultiplexCode, VehicleState};
