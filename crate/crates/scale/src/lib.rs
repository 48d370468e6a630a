//! Cluster-scale cost model.
//!
//! Initialization is bounded by the per-host quoting enclave: [`init`] gives
//! the closed form and a Monte Carlo envelope under latency and network
//! impairments, for uniform out-degrees and for explicit DAGs. [`replay`]
//! prices per-packet enforcement on a workflow's transfers and [`rekey`]
//! prices key rotation.

pub mod init;
pub mod mape;
pub mod model;
pub mod plot;
pub mod rekey;
pub mod replay;
pub mod scenario;
pub mod topology;

pub use init::{closed_form_for, closed_form_init, simulate_dag_init, simulate_init, trace_trial, SimConfig, TrialTrace};
pub use model::{ImpairmentSpec, LatencyModel, Percentiles, Sampling, HANDSHAKE_REFERENCE_MS};
pub use rekey::{rekey_penalty_mc, RekeySpec};
pub use replay::{montage_like, replay_dag_transfers, PacketCostModel, ReplayReport};
pub use scenario::{Mode, Row, Scenario};
pub use topology::{Dag, Degree, Edge, TopologySpec};

pub use janus_core::latency::LatencyDist;
pub use janus_core::ValidationError;

#[derive(Debug, thiserror::Error)]
pub enum ScaleError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
