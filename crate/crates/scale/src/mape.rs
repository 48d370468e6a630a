//! Model-versus-measurement comparison.
//!
//! Input is a CSV with columns `nodes,degree,hosts,measured_ms`; each row is
//! predicted with the Monte Carlo P50 and the mean absolute percentage error
//! is reported.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::init::{simulate_init, SimConfig};
use crate::topology::TopologySpec;
use crate::ScaleError;
use janus_core::ValidationError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub nodes: usize,
    pub degree: f64,
    pub hosts: usize,
    pub measured_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    #[serde(flatten)]
    pub measurement: Measurement,
    pub predicted_ms: f64,
    pub ape_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapeReport {
    pub rows: Vec<Comparison>,
    pub mape_pct: f64,
}

pub fn read_measurements(r: impl Read) -> Result<Vec<Measurement>, ScaleError> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|r| r.map_err(ScaleError::from))
        .collect()
}

pub fn compare(measurements: &[Measurement], cfg: &SimConfig) -> Result<MapeReport, ValidationError> {
    if measurements.is_empty() {
        return Err(ValidationError::new("measurements", "no rows"));
    }
    let mut rows = Vec::with_capacity(measurements.len());
    for (i, m) in measurements.iter().enumerate() {
        if !(m.measured_ms.is_finite() && m.measured_ms > 0.0) {
            return Err(ValidationError::new(format!("measurements[{i}].measured_ms"), "must be positive"));
        }
        let predicted_ms = simulate_init(&TopologySpec::uniform(m.nodes, m.degree, m.hosts), cfg)?.p50;
        rows.push(Comparison {
            measurement: *m,
            predicted_ms,
            ape_pct: (predicted_ms - m.measured_ms).abs() / m.measured_ms * 100.0,
        });
    }
    let mape_pct = rows.iter().map(|r| r.ape_pct).sum::<f64>() / rows.len() as f64;
    Ok(MapeReport { rows, mape_pct })
}
