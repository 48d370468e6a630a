//! Throughput cost of in-epoch key rotation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::init::SimConfig;
use crate::model::{LatencyModel, Percentiles, Sampling};
use janus_core::ValidationError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RekeySpec {
    pub epoch_duration_s: f64,
    pub rotations_per_epoch: u32,
}

impl Default for RekeySpec {
    fn default() -> Self {
        Self {
            epoch_duration_s: 5.75,
            rotations_per_epoch: 1,
        }
    }
}

/// Each rotation stalls the flow for one handshake. Returns percentiles of
/// `stalled / epoch` in percent.
pub fn rekey_penalty_mc(spec: &RekeySpec, cfg: &SimConfig) -> Result<Percentiles, ValidationError> {
    cfg.validate()?;
    if !(spec.epoch_duration_s.is_finite() && spec.epoch_duration_s > 0.0) {
        return Err(ValidationError::new("rekey.epoch_duration_s", "must be positive"));
    }
    let epoch_ms = spec.epoch_duration_s * 1e3;
    let mut samples: Vec<f64> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t);
            let stalled = match cfg.sampling {
                Sampling::PerTrial => spec.rotations_per_epoch as f64 * handshake(&cfg.latency, &mut rng),
                Sampling::PerHandshake => (0..spec.rotations_per_epoch).map(|_| handshake(&cfg.latency, &mut rng)).sum(),
            };
            stalled / epoch_ms * 100.0
        })
        .collect();
    Ok(Percentiles::from_samples(&mut samples))
}

fn handshake(lat: &LatencyModel, rng: &mut ChaCha8Rng) -> f64 {
    lat.quote_gen.sample(rng) + lat.dcap_verify.sample(rng) + lat.net_crypto.sample(rng)
}
