use janus_core::latency::LatencyDist;
use janus_core::ValidationError;
use serde::{Deserialize, Serialize};

/// Reference end-to-end handshake time: 75.6 + 24.1 + 3.5 ms.
pub const HANDSHAKE_REFERENCE_MS: f64 = 103.2;
pub const NET_CRYPTO_MS: f64 = 3.5;
pub const DEFAULT_MIN_RTO_MS: f64 = 200.0;
/// Flights per handshake (offer, response, finish).
pub const FLIGHTS_PER_HANDSHAKE: u32 = 3;

/// Latency of the three handshake phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyModel {
    pub quote_gen: LatencyDist,
    pub dcap_verify: LatencyDist,
    pub net_crypto: LatencyDist,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            quote_gen: LatencyDist::QUOTE_GEN,
            dcap_verify: LatencyDist::DCAP_VERIFY,
            net_crypto: LatencyDist::fixed(NET_CRYPTO_MS),
        }
    }
}

impl LatencyModel {
    /// Constant phase times.
    pub fn fixed(quote_gen: f64, dcap_verify: f64, net_crypto: f64) -> Self {
        Self {
            quote_gen: LatencyDist::fixed(quote_gen),
            dcap_verify: LatencyDist::fixed(dcap_verify),
            net_crypto: LatencyDist::fixed(net_crypto),
        }
    }

    /// The reference breakdown with every phase pinned at its nominal value.
    pub fn reference_fixed() -> Self {
        Self::fixed(75.6, 24.1, NET_CRYPTO_MS)
    }

    pub fn is_degenerate(&self) -> bool {
        self.quote_gen.is_degenerate() && self.dcap_verify.is_degenerate() && self.net_crypto.is_degenerate()
    }

    pub fn nominal_handshake_ms(&self) -> f64 {
        self.quote_gen.nominal_mean() + self.dcap_verify.nominal_mean() + self.net_crypto.nominal_mean()
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        for (name, d) in [("quote_gen", &self.quote_gen), ("dcap_verify", &self.dcap_verify), ("net_crypto", &self.net_crypto)] {
            d.validate().map_err(|e| ValidationError::new(format!("latency.{name}"), e.reason))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpairmentSpec {
    /// Standard deviation of the zero-mean normal jitter added to each flight.
    pub jitter_sd_ms: f64,
    pub loss_probability: f64,
    pub min_rto_ms: f64,
}

impl Default for ImpairmentSpec {
    fn default() -> Self {
        Self {
            jitter_sd_ms: 0.0,
            loss_probability: 0.0,
            min_rto_ms: DEFAULT_MIN_RTO_MS,
        }
    }
}

impl ImpairmentSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.jitter_sd_ms.is_finite() && self.jitter_sd_ms >= 0.0) {
            return Err(ValidationError::new("impairments.jitter_sd_ms", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.loss_probability) {
            return Err(ValidationError::new("impairments.loss_probability", "must be in [0, 1)"));
        }
        if !(self.min_rto_ms.is_finite() && self.min_rto_ms >= 0.0) {
            return Err(ValidationError::new("impairments.min_rto_ms", "must be >= 0"));
        }
        Ok(())
    }
}

/// How phase latencies are drawn within one trial.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// One draw per phase per trial, shared by every handshake: the
    /// constants are perturbed, the cluster then runs them.
    #[default]
    PerTrial,
    /// An independent draw for every handshake.
    PerHandshake,
}

/// Nearest-rank percentiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
}

impl Percentiles {
    pub fn constant(v: f64) -> Self {
        Self { p5: v, p50: v, p95: v, p99: v }
    }

    /// Sorts `samples` in place. Panics on an empty slice.
    pub fn from_samples(samples: &mut [f64]) -> Self {
        assert!(!samples.is_empty(), "no samples");
        samples.sort_by(f64::total_cmp);
        let rank = |p: f64| {
            let r = (p / 100.0 * samples.len() as f64).ceil() as usize;
            samples[r.clamp(1, samples.len()) - 1]
        };
        Self {
            p5: rank(5.0),
            p50: rank(50.0),
            p95: rank(95.0),
            p99: rank(99.0),
        }
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            p5: f(self.p5),
            p50: f(self.p50),
            p95: f(self.p95),
            p99: f(self.p99),
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.p5, self.p50, self.p95, self.p99]
    }
}
