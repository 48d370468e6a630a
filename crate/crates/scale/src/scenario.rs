//! Scenario files and tabular results.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::init::{closed_form_for, simulate_dag_init, simulate_init, SimConfig};
use crate::model::{ImpairmentSpec, LatencyModel, Percentiles, Sampling, HANDSHAKE_REFERENCE_MS};
use crate::rekey::{rekey_penalty_mc, RekeySpec};
use crate::replay::{montage_like, replay_dag_transfers, PacketCostModel};
use crate::topology::{Dag, Degree, TopologySpec};
use crate::ScaleError;
use janus_core::ValidationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    ClosedForm,
    Mc,
    Dag,
    Replay,
    Rekey,
}

impl std::str::FromStr for Mode {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| ValidationError::new("mode", format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MontageSpec {
    pub tasks: usize,
    pub total_bytes: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_trials() -> usize {
    100_000
}

fn default_handshake_ms() -> f64 {
    HANDSHAKE_REFERENCE_MS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub nodes: Option<usize>,
    #[serde(default)]
    pub degree: Option<f64>,
    #[serde(default)]
    pub dag: Option<Dag>,
    #[serde(default)]
    pub hosts: Option<usize>,
    #[serde(default)]
    pub placement: Option<Vec<usize>>,
    #[serde(default)]
    pub latency: LatencyModel,
    #[serde(default)]
    pub impairments: ImpairmentSpec,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub stagger_ms: f64,
    #[serde(default = "default_handshake_ms")]
    pub handshake_ms: f64,
    #[serde(default)]
    pub replay: PacketCostModel,
    #[serde(default)]
    pub montage: Option<MontageSpec>,
    #[serde(default)]
    pub rekey: RekeySpec,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScaleError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_reader(r: impl Read) -> Result<Self, ScaleError> {
        Ok(serde_json::from_reader(r)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScaleError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            latency: self.latency,
            impairments: self.impairments,
            sampling: self.sampling,
            stagger_ms: self.stagger_ms,
            trials: self.trials,
            seed: self.seed,
        }
    }

    pub fn topology(&self) -> Result<TopologySpec, ValidationError> {
        let mut topo = match (&self.dag, self.degree) {
            (Some(_), Some(_)) => return Err(ValidationError::new("degree", "give either degree or dag, not both")),
            (Some(dag), None) => {
                let mut t = TopologySpec::dag(dag.clone(), self.hosts);
                if let Some(n) = self.nodes {
                    t.nodes = n;
                }
                t
            }
            (None, Some(e)) => {
                let nodes = self.nodes.ok_or_else(|| ValidationError::new("nodes", "required with a uniform degree"))?;
                let hosts = self.hosts.ok_or_else(|| ValidationError::new("hosts", "required with a uniform degree"))?;
                TopologySpec::uniform(nodes, e, hosts)
            }
            (None, None) => return Err(ValidationError::new("degree", "missing degree or dag")),
        };
        topo.placement = self.placement.clone();
        topo.validate()?;
        Ok(topo)
    }

    fn workload(&self) -> Result<Dag, ValidationError> {
        match (&self.dag, &self.montage) {
            (Some(d), None) => Ok(d.clone()),
            (None, Some(m)) => montage_like(m.tasks, m.total_bytes, m.seed),
            (Some(_), Some(_)) => Err(ValidationError::new("montage", "give either dag or montage, not both")),
            (None, None) => Err(ValidationError::new("dag", "replay needs a dag or a montage workload")),
        }
    }

    pub fn run(&self, mode: Mode) -> Result<Vec<Row>, ValidationError> {
        let cfg = self.sim_config();
        Ok(match mode {
            Mode::ClosedForm => vec![Row::new("t_init_ms", Percentiles::constant(closed_form_for(&self.topology()?, self.handshake_ms)?))],
            Mode::Mc => vec![Row::new("t_init_ms", simulate_init(&self.topology()?, &cfg)?)],
            Mode::Dag => {
                let topo = self.topology()?;
                if !matches!(topo.degree, Degree::Dag(_)) {
                    return Err(ValidationError::new("dag", "dag mode needs an explicit DAG"));
                }
                vec![Row::new("t_init_ms", simulate_dag_init(&topo, &cfg)?)]
            }
            Mode::Replay => {
                let r = replay_dag_transfers(&self.workload()?, &self.replay)?;
                vec![
                    Row::new("baseline_ms", Percentiles::constant(r.baseline_ms)),
                    Row::new("enforced_ms", Percentiles::constant(r.enforced_ms)),
                    Row::new("overhead_pct", Percentiles::constant(r.overhead_pct)),
                    Row::new("packets", Percentiles::constant(r.packets as f64)),
                ]
            }
            Mode::Rekey => vec![Row::new("penalty_pct", rekey_penalty_mc(&self.rekey, &cfg)?)],
        })
    }
}

/// One CSV line: `metric,P5,P50,P95,P99`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub metric: String,
    #[serde(rename = "P5")]
    pub p5: f64,
    #[serde(rename = "P50")]
    pub p50: f64,
    #[serde(rename = "P95")]
    pub p95: f64,
    #[serde(rename = "P99")]
    pub p99: f64,
}

impl Row {
    pub fn new(metric: impl Into<String>, p: Percentiles) -> Self {
        Self {
            metric: metric.into(),
            p5: p.p5,
            p50: p.p50,
            p95: p.p95,
            p99: p.p99,
        }
    }

    pub fn percentiles(&self) -> Percentiles {
        Percentiles { p5: self.p5, p50: self.p50, p95: self.p95, p99: self.p99 }
    }
}

pub fn write_csv(rows: &[Row], w: impl Write) -> Result<(), ScaleError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv(r: impl Read) -> Result<Vec<Row>, ScaleError> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|r| r.map_err(ScaleError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_scenario_round_trip() {
        let s = Scenario::from_json(
            r#"{"nodes": 200, "degree": 16, "hosts": 32, "trials": 10, "seed": 4,
                "latency": {"quote_gen": {"kind": "fixed", "ms": 75.6},
                            "dcap_verify": {"kind": "fixed", "ms": 24.1}}}"#,
        )
        .unwrap();
        let cf = s.run(Mode::ClosedForm).unwrap();
        assert_eq!(cf[0].p50, 10_320.0);
        let mc = s.run(Mode::Mc).unwrap();
        assert!((mc[0].p50 - 10_320.0).abs() < 1e-6);
        let mut buf = Vec::new();
        write_csv(&mc, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("metric,P5,P50,P95,P99\nt_init_ms,"));
        assert_eq!(read_csv(&buf[..]).unwrap(), mc);
        assert!(s.run(Mode::Dag).is_err());
        assert!(s.run(Mode::Replay).is_err());
    }

    #[test]
    fn dag_scenario() {
        let s = Scenario::from_json(
            r#"{"dag": {"edges": [[0, 1, 1000], [0, 2, 1000], [1, 3, 10]]}, "trials": 5,
                "latency": {"quote_gen": {"kind": "fixed", "ms": 75.6},
                            "dcap_verify": {"kind": "fixed", "ms": 24.1}}}"#,
        )
        .unwrap();
        let r = s.run(Mode::Dag).unwrap();
        assert!((r[0].p50 - 206.4).abs() < 1e-9);
        let r = s.run(Mode::Replay).unwrap();
        assert_eq!(r[3].p50, 3.0);
        assert!(r[2].p50 > 0.0);
    }

    #[test]
    fn validation_names_the_field() {
        let s = Scenario::from_json(r#"{"nodes": 4, "degree": 1}"#).unwrap();
        assert_eq!(s.run(Mode::Mc).unwrap_err().field, "hosts");
        let s = Scenario::from_json(r#"{"nodes": 4, "degree": 1, "hosts": 2, "impairments": {"loss_probability": 2}}"#).unwrap();
        assert_eq!(s.run(Mode::Mc).unwrap_err().field, "impairments.loss_probability");
        assert!(Scenario::from_json(r#"{"nodes": 4, "bogus": 1}"#).is_err());
        assert!("mc".parse::<Mode>().is_ok());
        assert_eq!("closed-form".parse::<Mode>().unwrap(), Mode::ClosedForm);
        assert!("nope".parse::<Mode>().is_err());
    }
}
