//! SMS network latency model.
//!
//! Each submission is due after a latency drawn uniformly from
//! `[latency_min_ms, latency_max_ms]` by a seeded generator. Messages
//! between the same pair of numbers never overtake each other: a due time
//! earlier than its predecessor's is raised to match it. Since the
//! predecessor was submitted no later, this never pushes a message past
//! the upper bound.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::command::{PhoneNumber, SmsMessage};
use crate::Millis;

pub const DEFAULT_LATENCY_MIN_MS: Millis = 4_000;
pub const DEFAULT_LATENCY_MAX_MS: Millis = 6_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("latency bounds inverted: min {min} > max {max}")]
    InvertedBounds { min: Millis, max: Millis },
    #[error("message submitted at {submitted} handed to the network at {now}")]
    SubmissionTimeMismatch { submitted: Millis, now: Millis },
}

pub type MessageId = u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InFlight {
    pub id: MessageId,
    pub message: SmsMessage,
    pub due: Millis,
}

#[derive(Debug, Clone)]
pub struct NetworkModel {
    latency_min_ms: Millis,
    latency_max_ms: Millis,
    rng: ChaCha8Rng,
    pending: BTreeMap<MessageId, InFlight>,
    last_due: BTreeMap<(PhoneNumber, PhoneNumber), Millis>,
    next_id: MessageId,
}

impl NetworkModel {
    pub fn new(seed: u64, latency_min_ms: Millis, latency_max_ms: Millis) -> Result<Self, NetworkError> {
        if latency_min_ms > latency_max_ms {
            return Err(NetworkError::InvertedBounds {
                min: latency_min_ms,
                max: latency_max_ms,
            });
        }
        Ok(Self {
            latency_min_ms,
            latency_max_ms,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: BTreeMap::new(),
            last_due: BTreeMap::new(),
            next_id: 1,
        })
    }

    pub fn with_default_latency(seed: u64) -> Self {
        Self::new(seed, DEFAULT_LATENCY_MIN_MS, DEFAULT_LATENCY_MAX_MS).expect("default bounds are ordered")
    }

    pub fn latency_bounds(&self) -> (Millis, Millis) {
        (self.latency_min_ms, self.latency_max_ms)
    }

    /// Schedules `message` and returns its id and due time.
    pub fn submit(&mut self, message: SmsMessage, now: Millis) -> Result<(MessageId, Millis), NetworkError> {
        if message.submitted_at != now {
            return Err(NetworkError::SubmissionTimeMismatch {
                submitted: message.submitted_at,
                now,
            });
        }
        let drawn = now + self.rng.gen_range(self.latency_min_ms..=self.latency_max_ms);
        let pair = (message.sender.clone(), message.recipient.clone());
        let due = match self.last_due.get(&pair) {
            Some(&prev) if prev > drawn => prev,
            _ => drawn,
        };
        self.last_due.insert(pair, due);
        let id = self.next_id;
        self.next_id += 1;
        self.pending.insert(id, InFlight { id, message, due });
        Ok((id, due))
    }

    /// Removes a message from the network, stamping its delivery time.
    pub fn take(&mut self, id: MessageId, now: Millis) -> Option<InFlight> {
        let mut flight = self.pending.remove(&id)?;
        flight
            .message
            .mark_delivered(now)
            .expect("due time is never before submission");
        Some(flight)
    }

    pub fn pending(&self) -> impl Iterator<Item = &InFlight> {
        self.pending.values()
    }
}
