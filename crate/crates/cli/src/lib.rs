//! The `janus` command: node bootstrap, policy tooling, tunnel operation,
//! epoch rollover, adversarial scenarios and the scale model front end.
//!
//! Everything the binary does is reachable from this library so the
//! acceptance suite can drive the same code paths.

pub mod adversary;
pub mod bench;
pub mod commands;
pub mod control;
pub mod deployment;
pub mod env;
pub mod error;
pub mod identity;
pub mod scenario;
pub mod workload;
