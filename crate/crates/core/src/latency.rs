//! Latency distributions shared by the quoting-enclave model and the
//! cluster-initialization simulator.

use rand::Rng;
use rand_distr::{Distribution, Normal, Triangular};
use serde::{Deserialize, Serialize};

use crate::ValidationError;

/// A non-negative latency distribution, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatencyDist {
    Fixed { ms: f64 },
    Triangular { min: f64, mode: f64, max: f64 },
    /// Normal distribution; negative draws are rejected and redrawn.
    TruncatedNormal { mean: f64, sd: f64 },
}

impl LatencyDist {
    /// Quote generation on the per-host quoting enclave.
    pub const QUOTE_GEN: LatencyDist = LatencyDist::Triangular {
        min: 70.0,
        mode: 75.6,
        max: 105.0,
    };
    /// Remote quote verification against the collateral service.
    pub const DCAP_VERIFY: LatencyDist = LatencyDist::TruncatedNormal {
        mean: 24.1,
        sd: 12.0,
    };

    pub fn fixed(ms: f64) -> Self {
        LatencyDist::Fixed { ms }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let ok = match *self {
            LatencyDist::Fixed { ms } => ms.is_finite() && ms >= 0.0,
            LatencyDist::Triangular { min, mode, max } => {
                min.is_finite() && max.is_finite() && 0.0 <= min && min <= mode && mode <= max
            }
            LatencyDist::TruncatedNormal { mean, sd } => {
                mean.is_finite() && sd.is_finite() && sd >= 0.0 && (mean > 0.0 || sd == 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(ValidationError::new("latency", format!("bad distribution {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LatencyDist::Fixed { ms } => ms,
            LatencyDist::Triangular { min, mode, max } => {
                if max <= min {
                    return min;
                }
                Triangular::new(min, max, mode)
                    .expect("validated triangular")
                    .sample(rng)
            }
            LatencyDist::TruncatedNormal { mean, sd } => {
                if sd == 0.0 {
                    return mean.max(0.0);
                }
                let n = Normal::new(mean, sd).expect("validated normal");
                loop {
                    let x = n.sample(rng);
                    if x >= 0.0 {
                        return x;
                    }
                }
            }
        }
    }

    /// Mean of the untruncated distribution.
    pub fn nominal_mean(&self) -> f64 {
        match *self {
            LatencyDist::Fixed { ms } => ms,
            LatencyDist::Triangular { min, mode, max } => (min + mode + max) / 3.0,
            LatencyDist::TruncatedNormal { mean, .. } => mean,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        match *self {
            LatencyDist::Fixed { .. } => true,
            LatencyDist::Triangular { min, max, .. } => min == max,
            LatencyDist::TruncatedNormal { sd, .. } => sd == 0.0,
        }
    }
}
