use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;

pub const DEFAULT_WARMUP: u64 = 100;
const MAX_SAMPLES: usize = 1 << 20;

pub const COMPONENTS: [&str; 4] = ["framing", "lookup", "crypto", "total"];

#[derive(Debug, Clone, Copy, Default)]
pub struct PacketCost {
    pub framing_ns: u64,
    pub lookup_ns: u64,
    pub crypto_ns: u64,
    pub total_ns: u64,
}

/// Per-packet timing samples, after a warmup.
pub struct CostRecorder {
    warmup: u64,
    seen: AtomicU64,
    samples: Mutex<[Vec<u64>; 4]>,
}

impl Default for CostRecorder {
    fn default() -> Self {
        Self::new(DEFAULT_WARMUP)
    }
}

impl CostRecorder {
    pub fn new(warmup: u64) -> Self {
        Self {
            warmup,
            seen: AtomicU64::new(0),
            samples: Mutex::new(Default::default()),
        }
    }

    pub fn record(&self, c: PacketCost) {
        if self.seen.fetch_add(1, Ordering::Relaxed) < self.warmup {
            return;
        }
        let mut s = self.samples.lock();
        if s[0].len() >= MAX_SAMPLES {
            return;
        }
        for (v, x) in s.iter_mut().zip([c.framing_ns, c.lookup_ns, c.crypto_ns, c.total_ns]) {
            v.push(x);
        }
    }

    pub fn summary(&self) -> CostSummary {
        let s = self.samples.lock();
        CostSummary {
            rows: COMPONENTS
                .iter()
                .zip(s.iter())
                .map(|(name, v)| CostRow::from_samples(name, v))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct CostRow {
    pub component: String,
    pub p50_ns: u64,
    pub p99_ns: u64,
    pub count: u64,
}

fn nearest_rank(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl CostRow {
    fn from_samples(name: &str, v: &[u64]) -> Self {
        let mut sorted = v.to_vec();
        sorted.sort_unstable();
        Self {
            component: name.to_string(),
            p50_ns: nearest_rank(&sorted, 50.0),
            p99_ns: nearest_rank(&sorted, 99.0),
            count: sorted.len() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct CostSummary {
    pub rows: Vec<CostRow>,
}

impl CostSummary {
    pub fn row(&self, component: &str) -> Option<&CostRow> {
        self.rows.iter().find(|r| r.component == component)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,p50_ns,p99_ns,count\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.component, r.p50_ns, r.p99_ns, r.count));
        }
        out
    }
}
