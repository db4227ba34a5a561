//! Simulated time. One tick is a fixed 10 microsecond step.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Ticks in one simulated second (10 µs per tick).
pub const TICKS_PER_SECOND: u64 = 100_000;

/// Count of 10 µs steps since simulation start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tick(pub u64);

impl Tick {
    pub const ZERO: Tick = Tick(0);

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn next(self) -> Tick {
        Tick(self.0 + 1)
    }

    pub fn offset(self, ticks: u64) -> Tick {
        Tick(self.0 + ticks)
    }

    pub fn as_seconds(self) -> f64 {
        self.0 as f64 / TICKS_PER_SECOND as f64
    }
}

impl fmt::Display for Tick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for Tick {
    fn from(v: u64) -> Self {
        Tick(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("duration must be a positive, finite number of seconds (got {0})")]
pub struct InvalidDuration(pub f64);

/// Number of loop iterations covering `seconds` of simulated time.
pub fn ticks_from_duration(seconds: f64) -> Result<u64, InvalidDuration> {
    if !seconds.is_finite() || seconds <= 0.0 {
        return Err(InvalidDuration(seconds));
    }
    Ok((seconds * TICKS_PER_SECOND as f64).round() as u64)
}
