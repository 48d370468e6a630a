//! Cluster initialization time.
//!
//! Each host owns one quoting enclave, and a handshake holds the enclave of
//! its initiating host from quote generation until the session key is
//! installed, so a host's handshakes run back to back. Hosts proceed in
//! parallel and the cluster is ready when the slowest host finishes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::model::{ImpairmentSpec, LatencyModel, Percentiles, Sampling, FLIGHTS_PER_HANDSHAKE};
use crate::topology::{Degree, TopologySpec};
use janus_core::ValidationError;

/// `(N * e / H) * handshake_ms`.
pub fn closed_form_init(nodes: usize, degree: f64, hosts: usize, handshake_ms: f64) -> f64 {
    nodes as f64 * degree / hosts as f64 * handshake_ms
}

pub fn closed_form_for(topo: &TopologySpec, handshake_ms: f64) -> Result<f64, ValidationError> {
    topo.validate()?;
    match topo.degree {
        Degree::Uniform(e) => Ok(closed_form_init(topo.nodes, e, topo.hosts, handshake_ms)),
        Degree::Dag(_) => Err(ValidationError::new("degree", "closed form needs a uniform out-degree")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub latency: LatencyModel,
    pub impairments: ImpairmentSpec,
    pub sampling: Sampling,
    /// Gap between successive arrivals at a host's queue; 0 releases
    /// everything at once.
    pub stagger_ms: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            latency: LatencyModel::default(),
            impairments: ImpairmentSpec::default(),
            sampling: Sampling::PerTrial,
            stagger_ms: 0.0,
            trials: 100_000,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        self.latency.validate()?;
        self.impairments.validate()?;
        if self.trials == 0 {
            return Err(ValidationError::new("trials", "must be at least 1"));
        }
        if !(self.stagger_ms.is_finite() && self.stagger_ms >= 0.0) {
            return Err(ValidationError::new("stagger_ms", "must be >= 0"));
        }
        Ok(())
    }
}

/// Everything one trial produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTrace {
    pub makespan_ms: f64,
    pub host_ms: Vec<f64>,
    /// Sum of the quote generation times drawn for each host's handshakes.
    pub quote_gen_ms: Vec<f64>,
    pub lost_flights: Vec<u64>,
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Replays a single trial. [`simulate_init`] is the percentile summary of
/// `trace_trial` over `0..trials`.
pub fn trace_trial(loads: &[u64], cfg: &SimConfig, trial: u64) -> TrialTrace {
    let mut rng = trial_rng(cfg.seed, trial);
    let lat = &cfg.latency;
    let imp = &cfg.impairments;
    let shared = (lat.quote_gen.sample(&mut rng), lat.dcap_verify.sample(&mut rng), lat.net_crypto.sample(&mut rng));
    // Per-host draws come first and in a fixed order so that runs which
    // differ only in load share them.
    let noise: Vec<(f64, f64)> = loads
        .iter()
        .map(|_| (rng.sample::<f64, _>(StandardNormal), rng.gen::<f64>()))
        .collect();

    let mut trace = TrialTrace {
        makespan_ms: 0.0,
        host_ms: Vec::with_capacity(loads.len()),
        quote_gen_ms: Vec::with_capacity(loads.len()),
        lost_flights: Vec::with_capacity(loads.len()),
    };
    for (&load, &(z, u)) in loads.iter().zip(&noise) {
        let mut quote = 0.0;
        let mut net = 0.0;
        let mut busy_until = 0.0f64;
        for k in 0..load {
            let (q, d, n) = match cfg.sampling {
                Sampling::PerTrial => shared,
                Sampling::PerHandshake => (lat.quote_gen.sample(&mut rng), lat.dcap_verify.sample(&mut rng), lat.net_crypto.sample(&mut rng)),
            };
            quote += q;
            net += d + n;
            let arrival = k as f64 * cfg.stagger_ms;
            busy_until = busy_until.max(arrival) + q + d + n;
        }
        let flights = load * u64::from(FLIGHTS_PER_HANDSHAKE);
        let jitter = z * imp.jitter_sd_ms * (flights as f64).sqrt();
        // Jitter perturbs the network part only and cannot make it negative.
        let jitter = jitter.max(-net);
        let lost = lost_flights(flights, imp.loss_probability, u);
        let t = busy_until + jitter + lost as f64 * imp.min_rto_ms;
        trace.makespan_ms = trace.makespan_ms.max(t);
        trace.host_ms.push(t);
        trace.quote_gen_ms.push(quote);
        trace.lost_flights.push(lost);
    }
    trace
}

/// Binomial(flights, p) by inversion, so a larger `p` or more flights never
/// yields fewer losses for the same `u`.
fn lost_flights(flights: u64, p: f64, u: f64) -> u64 {
    if flights == 0 || p <= 0.0 {
        return 0;
    }
    let b = Binomial::new(p, flights).expect("validated loss probability");
    if u <= b.cdf(0) {
        return 0;
    }
    b.inverse_cdf(u)
}

fn run(loads: &[u64], cfg: &SimConfig) -> Percentiles {
    let mut samples: Vec<f64> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| trace_trial(loads, cfg, t).makespan_ms)
        .collect();
    Percentiles::from_samples(&mut samples)
}

/// Monte Carlo percentiles of the initialization makespan, in ms.
pub fn simulate_init(topo: &TopologySpec, cfg: &SimConfig) -> Result<Percentiles, ValidationError> {
    topo.validate()?;
    cfg.validate()?;
    Ok(run(&topo.host_loads(), cfg))
}

/// As [`simulate_init`], for a topology given as an explicit DAG.
pub fn simulate_dag_init(topo: &TopologySpec, cfg: &SimConfig) -> Result<Percentiles, ValidationError> {
    if !matches!(topo.degree, Degree::Dag(_)) {
        return Err(ValidationError::new("dag", "an explicit DAG is required"));
    }
    simulate_init(topo, cfg)
}
