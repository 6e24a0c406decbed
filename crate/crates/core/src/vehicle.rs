//! Vehicle feature state, the multiplexer codes that strobe the LED board,
//! and the LED indicator panel.
//!
//! The panel is a pure function of [`VehicleState`]: every lamp group is
//! derived from the booleans, so replaying commands and rendering the final
//! state always agrees with composing the per-command deltas.
//!
//! Lamp groups:
//!
//! | group            | lit when                         | lamps       |
//! |------------------|----------------------------------|-------------|
//! | front            | position or head lights          | 2 white     |
//! | rear             | position or brake lights         | 2 red       |
//! | flashers         | warning lights                   | 4 yellow    |
//! | door indicator   | locked / open                    | 1 green / 1 red |
//! | GSM indicator    | registered / waiting             | 1 green / 1 red |

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::Command;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VehicleState {
    pub position_lights: bool,
    pub head_lights: bool,
    pub brake_lights: bool,
    pub warning_lights: bool,
    pub doors_locked: bool,
    pub gsm_ready: bool,
    pub location_mode: bool,
}

/// Everything off. Used at power-on and after every restart.
pub fn initial_state() -> VehicleState {
    VehicleState::default()
}

impl VehicleState {
    pub fn panel(&self) -> LedPanel {
        render(self)
    }

    pub fn with_gsm_ready(self, ready: bool) -> Self {
        Self {
            gsm_ready: ready,
            ..self
        }
    }
}

/// Select lines of the 3-to-8 multiplexer on the LED board.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiplexCode {
    pub s0: u8,
    pub s1: u8,
    pub s2: u8,
}

impl MultiplexCode {
    /// Bits are given in the order they are written in the message table,
    /// first digit on S0.
    pub const fn new(s0: bool, s1: bool, s2: bool) -> Self {
        Self {
            s0: s0 as u8,
            s1: s1 as u8,
            s2: s2 as u8,
        }
    }

    pub fn channel(&self) -> u8 {
        self.s2 * 4 + self.s1 * 2 + self.s0
    }

    pub fn bits(&self) -> [u8; 3] {
        [self.s0, self.s1, self.s2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{0} does not route through the multiplexer")]
pub struct NotMultiplexed(pub Command);

/// The strobe the firmware issues for a lighting command. All OFF commands
/// share channel 5.
pub fn multiplex_code_for(command: Command) -> Result<MultiplexCode, NotMultiplexed> {
    use Command::*;
    let code = match command {
        PositionLightsOn => MultiplexCode::new(true, false, false),
        PositionLightsOff => MultiplexCode::new(true, false, true),
        HeadLightsOn => MultiplexCode::new(false, false, true),
        HeadLightsOff => MultiplexCode::new(true, false, true),
        BrakeLightsOn => MultiplexCode::new(false, true, false),
        BrakeLightsOff => MultiplexCode::new(true, false, true),
        WarningOn => MultiplexCode::new(true, true, true),
        WarningOff => MultiplexCode::new(true, false, true),
        LocationOn | LocationOff | DoorsLock | DoorsUnlock => return Err(NotMultiplexed(command)),
    };
    Ok(code)
}

/// Number of lit lamps per color.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LedPanel {
    pub white: u8,
    pub red: u8,
    pub yellow: u8,
    pub green: u8,
}

impl LedPanel {
    /// Physical lamp count per color on the board.
    pub const CAPACITY: LedPanel = LedPanel {
        white: 2,
        red: 4,
        yellow: 4,
        green: 2,
    };

    pub fn within(&self, limit: &LedPanel) -> bool {
        self.white <= limit.white && self.red <= limit.red && self.yellow <= limit.yellow && self.green <= limit.green
    }

    fn add(self, other: LedPanel) -> LedPanel {
        LedPanel {
            white: self.white + other.white,
            red: self.red + other.red,
            yellow: self.yellow + other.yellow,
            green: self.green + other.green,
        }
    }

    pub fn delta_to(&self, next: &LedPanel) -> LedDelta {
        LedDelta {
            white: next.white as i8 - self.white as i8,
            red: next.red as i8 - self.red as i8,
            yellow: next.yellow as i8 - self.yellow as i8,
            green: next.green as i8 - self.green as i8,
        }
    }

    pub fn apply_delta(&self, d: &LedDelta) -> LedPanel {
        LedPanel {
            white: (self.white as i8 + d.white) as u8,
            red: (self.red as i8 + d.red) as u8,
            yellow: (self.yellow as i8 + d.yellow) as u8,
            green: (self.green as i8 + d.green) as u8,
        }
    }
}

/// Signed change in lit lamps per color.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LedDelta {
    pub white: i8,
    pub red: i8,
    pub yellow: i8,
    pub green: i8,
}

impl LedDelta {
    pub fn is_zero(&self) -> bool {
        *self == LedDelta::default()
    }
}

/// Lamps owned by the GSM status indicator.
pub fn gsm_status_leds(ready: bool) -> LedPanel {
    if ready {
        LedPanel {
            green: 1,
            ..LedPanel::default()
        }
    } else {
        LedPanel {
            red: 1,
            ..LedPanel::default()
        }
    }
}

/// Lamps owned by the door indicator: green when locked, red when open.
pub fn door_status_leds(locked: bool) -> LedPanel {
    if locked {
        LedPanel {
            green: 1,
            ..LedPanel::default()
        }
    } else {
        LedPanel {
            red: 1,
            ..LedPanel::default()
        }
    }
}

pub fn render(state: &VehicleState) -> LedPanel {
    let lights = LedPanel {
        white: if state.position_lights || state.head_lights {
            2
        } else {
            0
        },
        red: if state.position_lights || state.brake_lights {
            2
        } else {
            0
        },
        yellow: if state.warning_lights { 4 } else { 0 },
        green: 0,
    };
    lights
        .add(door_status_leds(state.doors_locked))
        .add(gsm_status_leds(state.gsm_ready))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum Effect {
    Strobe { code: MultiplexCode, channel: u8 },
    Panel { delta: LedDelta },
}

pub fn apply(state: VehicleState, command: Command) -> (VehicleState, Vec<Effect>) {
    use Command::*;
    let mut next = state;
    match command {
        PositionLightsOn => next.position_lights = true,
        PositionLightsOff => next.position_lights = false,
        HeadLightsOn => next.head_lights = true,
        HeadLightsOff => next.head_lights = false,
        BrakeLightsOn => next.brake_lights = true,
        BrakeLightsOff => next.brake_lights = false,
        WarningOn => next.warning_lights = true,
        WarningOff => next.warning_lights = false,
        LocationOn => next.location_mode = true,
        LocationOff => next.location_mode = false,
        DoorsLock => next.doors_locked = true,
        DoorsUnlock => next.doors_locked = false,
    }
    let mut effects = Vec::with_capacity(2);
    if let Ok(code) = multiplex_code_for(command) {
        effects.push(Effect::Strobe {
            code,
            channel: code.channel(),
        });
    }
    let delta = render(&state).delta_to(&render(&next));
    if !delta.is_zero() {
        effects.push(Effect::Panel { delta });
    }
    (next, effects)
}
