//! Adversarial scenarios, each run as separate tunnel processes on
//! loopback with the relay from [`crate::adversary`] where needed.

mod cases;
mod harness;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use harness::{Harness, NodeOptions, NodeProc, ScenarioOptions};

use crate::error::{CliError, CliResult};

pub const SCENARIOS: [&str; 7] = [
    "mitm",
    "replay",
    "epoch-downgrade",
    "unauthorized-binary",
    "digest-mismatch",
    "stalled-lane",
    "partition",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioReport {
    pub scenario: String,
    pub passed: bool,
    pub seed: u64,
    pub elapsed_ms: u64,
    pub assertions: Vec<Assertion>,
}

impl ScenarioReport {
    pub fn failed(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.passed)
    }

    /// Parses and checks a report: `passed` must agree with the
    /// assertions and the scenario must be a known one.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let r: Self = serde_json::from_str(text)?;
        if !SCENARIOS.contains(&r.scenario.as_str()) {
            return Err(CliError::validation(format!("unknown scenario {:?}", r.scenario)));
        }
        if r.assertions.is_empty() || r.passed != r.assertions.iter().all(|a| a.passed) {
            return Err(CliError::validation("report passed flag disagrees with its assertions"));
        }
        Ok(r)
    }
}

#[derive(Default)]
pub(crate) struct Checks(Vec<Assertion>);

impl Checks {
    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) -> bool {
        self.0.push(Assertion { name: name.into(), passed, detail: detail.into() });
        passed
    }
}

pub(crate) fn wait_until(timeout: Duration, mut f: impl FnMut() -> bool) -> bool {
    let t0 = Instant::now();
    loop {
        if f() {
            return true;
        }
        if t0.elapsed() > timeout {
            return false;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}

/// Handshake records at `node` matching `role` whose error or abort
/// reason is `what`.
pub(crate) fn failures(node: &NodeProc, role: &str, what: &str) -> CliResult<Vec<Value>> {
    Ok(node
        .ctl()?
        .handshakes()?
        .into_iter()
        .filter(|r| r["role"] == role && (r["error"] == what || r["reason"] == what))
        .collect())
}

pub fn run(name: &str, opts: ScenarioOptions) -> CliResult<ScenarioReport> {
    let t0 = Instant::now();
    let mut checks = Checks::default();
    let seed = opts.seed;
    let result = match name {
        "mitm" => cases::mitm(opts, &mut checks),
        "replay" => cases::replay(opts, &mut checks),
        "epoch-downgrade" => cases::epoch_downgrade(opts, &mut checks),
        "unauthorized-binary" => cases::unauthorized_binary(opts, &mut checks),
        "digest-mismatch" => cases::digest_mismatch(opts, &mut checks),
        "stalled-lane" => cases::stalled_lane(opts, &mut checks),
        "partition" => cases::partition(opts, &mut checks),
        other => {
            return Err(CliError::validation(format!(
                "unknown scenario {other:?}; expected one of {}",
                SCENARIOS.join(", ")
            )))
        }
    };
    if let Err(e) = result {
        checks.check("scenario ran to completion", false, e.to_string());
    }
    let assertions = checks.0;
    Ok(ScenarioReport {
        scenario: name.to_owned(),
        passed: !assertions.is_empty() && assertions.iter().all(|a| a.passed),
        seed,
        elapsed_ms: t0.elapsed().as_millis() as u64,
        assertions,
    })
}
