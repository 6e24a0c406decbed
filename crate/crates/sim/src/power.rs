//! Vehicle battery plus portable backup battery.

use crate::scenario::PowerSource;

/// The system runs while either source is up. The backup takes over with
/// no gap when the main battery fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PowerModel {
    pub main: bool,
    pub backup: bool,
}

impl PowerModel {
    pub fn new(main: bool, backup: bool) -> Self {
        Self { main, backup }
    }

    pub fn powered(&self) -> bool {
        self.main || self.backup
    }

    /// Applies a transition and reports `(was_powered, is_powered)`.
    pub fn set(&mut self, source: PowerSource, on: bool) -> (bool, bool) {
        let before = self.powered();
        match source {
            PowerSource::Main => self.main = on,
            PowerSource::Backup => self.backup = on,
        }
        (before, self.powered())
    }
}
