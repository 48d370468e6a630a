//! Process-wide settings read from the environment.

use std::sync::Arc;

use janus_core::clock::{Clock, SimClock, WallClock};

use crate::error::{CliError, CliResult};

pub const SEED_VAR: &str = "JANUS_SEED";
pub const CLOCK_VAR: &str = "JANUS_CLOCK";

/// `JANUS_SEED`, if set.
pub fn seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_VAR) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::validation(format!("{SEED_VAR} must be a u64, got {s:?}"))),
        Err(_) => Ok(None),
    }
}

pub fn seed_or(default: u64) -> CliResult<u64> {
    Ok(seed()?.unwrap_or(default))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockKind {
    Wall,
    /// Virtual time that only moves when advanced; nothing in a tunnel
    /// advances it, so deadlines driven by it never fire.
    Sim,
}

pub fn clock_kind() -> CliResult<ClockKind> {
    match std::env::var(CLOCK_VAR).as_deref() {
        Err(_) | Ok("wall") | Ok("") => Ok(ClockKind::Wall),
        Ok("sim") => Ok(ClockKind::Sim),
        Ok(other) => Err(CliError::validation(format!("{CLOCK_VAR} must be sim or wall, got {other:?}"))),
    }
}

pub fn clock() -> CliResult<Arc<dyn Clock>> {
    Ok(match clock_kind()? {
        ClockKind::Wall => Arc::new(WallClock::new()),
        ClockKind::Sim => SimClock::new(0),
    })
}
