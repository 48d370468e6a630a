use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AttestationQuote, Authority, TdReport};
use crate::latency::LatencyDist;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QeMode {
    /// Latency is accounted on a virtual per-host timeline; nothing sleeps.
    Virtual,
    /// Requests hold the enclave exclusively, in arrival order, for the
    /// sampled latency.
    Live,
}

#[derive(Debug, Clone, Copy)]
pub struct SignedQuote {
    pub quote: AttestationQuote,
    /// Queueing plus service time.
    pub latency_ms: f64,
    pub completed_at_ms: f64,
}

struct Tickets {
    next: u64,
    serving: u64,
}

/// The per-host quoting enclave: one quote at a time, FIFO.
pub struct QuotingEnclave {
    authority: Arc<Authority>,
    sampler: LatencyDist,
    mode: QeMode,
    rng: Mutex<ChaCha8Rng>,
    busy_until: Mutex<f64>,
    tickets: Mutex<Tickets>,
    turn: Condvar,
}

impl QuotingEnclave {
    pub fn new(authority: Arc<Authority>, sampler: LatencyDist, seed: u64) -> Self {
        Self {
            authority,
            sampler,
            mode: QeMode::Virtual,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            busy_until: Mutex::new(0.0),
            tickets: Mutex::new(Tickets { next: 0, serving: 0 }),
            turn: Condvar::new(),
        }
    }

    pub fn live(mut self) -> Self {
        self.mode = QeMode::Live;
        self
    }

    pub fn mode(&self) -> QeMode {
        self.mode
    }

    pub fn authority(&self) -> &Arc<Authority> {
        &self.authority
    }

    fn sample(&self) -> f64 {
        self.sampler.sample(&mut *self.rng.lock())
    }

    /// Signs `report` for a request arriving at `arrival_ms`.
    pub fn sign_quote(&self, report: &TdReport, arrival_ms: f64) -> SignedQuote {
        match self.mode {
            QeMode::Virtual => self.sign_virtual(report, arrival_ms),
            QeMode::Live => self.sign_live(report, arrival_ms),
        }
    }

    fn sign_virtual(&self, report: &TdReport, arrival_ms: f64) -> SignedQuote {
        let service = self.sample();
        let mut busy = self.busy_until.lock();
        let start = arrival_ms.max(*busy);
        let done = start + service;
        *busy = done;
        drop(busy);
        SignedQuote {
            quote: self.authority.sign(report),
            latency_ms: done - arrival_ms,
            completed_at_ms: done,
        }
    }

    fn sign_live(&self, report: &TdReport, arrival_ms: f64) -> SignedQuote {
        let begun = std::time::Instant::now();
        let ticket = {
            let mut t = self.tickets.lock();
            let mine = t.next;
            t.next += 1;
            while t.serving != mine {
                self.turn.wait(&mut t);
            }
            mine
        };
        let service = self.sample();
        std::thread::sleep(Duration::from_secs_f64(service / 1000.0));
        let quote = self.authority.sign(report);
        {
            let mut t = self.tickets.lock();
            debug_assert_eq!(t.serving, ticket);
            t.serving += 1;
        }
        self.turn.notify_all();
        let latency_ms = begun.elapsed().as_secs_f64() * 1000.0;
        SignedQuote {
            quote,
            latency_ms,
            completed_at_ms: arrival_ms + latency_ms,
        }
    }
}
