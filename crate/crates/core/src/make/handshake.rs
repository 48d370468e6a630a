use std::net::{Ipv4Addr, SocketAddrV4};

use p384::SecretKey;
use zeroize::Zeroize;

use super::context::{AttestationContext, HandshakeConfig};
use super::kdf::{confirmation_mac, derive_session, encode_public, parse_public, verify_confirmation_mac, DerivedKeys};
use super::wire::{
    Flight, ABORT_FLIGHT, TAG_CONFIRMATION_MAC, TAG_EPHEMERAL_PUBLIC, TAG_NONCE, TAG_POLICY_DIGEST,
    TAG_QUOTE,
};
use super::{AbortReason, HandshakeError};
use crate::attestation::{bind_report_data, AttestationError, AttestationQuote, QuoteExpectation};
use crate::policy::{FlowDecision, PeerEntry, PolicyIndex};
use crate::Digest48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Initiator,
    Responder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Start,
    SentFlight1,
    VerifiedFlight1,
    SentFlight2,
    VerifiedFlight2,
    Confirmed,
    Aborted(AbortReason),
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Confirmed | Phase::Aborted(_))
    }

    /// The declared transition relation.
    pub fn allows(self, next: Phase) -> bool {
        use Phase::*;
        match (self, next) {
            (from, Aborted(_)) => !from.is_terminal(),
            (Start, SentFlight1) | (Start, VerifiedFlight1) => true,
            (VerifiedFlight1, SentFlight2) => true,
            (SentFlight1, VerifiedFlight2) => true,
            (VerifiedFlight2, Confirmed) | (SentFlight2, Confirmed) => true,
            _ => false,
        }
    }
}

/// Which attested identities a session key is bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SessionBinding {
    pub initiator_measurement: Digest48,
    pub responder_measurement: Digest48,
    pub initiator_policy_digest: Digest48,
    pub responder_policy_digest: Digest48,
}

/// Output of a completed handshake.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionSecret {
    pub role: Role,
    /// The peer's address as pinned in policy.
    pub peer: SocketAddrV4,
    pub keys: DerivedKeys,
    pub binding: SessionBinding,
    pub established_at_ms: u64,
    pub epoch: u64,
}

impl SessionSecret {
    pub fn key(&self) -> &[u8; 32] {
        &self.keys.key
    }

    pub fn confirm_key(&self) -> &[u8; 32] {
        &self.keys.confirm_key
    }

    pub fn key_id(&self) -> u32 {
        self.keys.key_id
    }

    /// Nonce prefix for frames this side seals.
    pub fn send_prefix(&self) -> [u8; 6] {
        match self.role {
            Role::Initiator => self.keys.initiator_prefix,
            Role::Responder => self.keys.responder_prefix,
        }
    }

    pub fn recv_prefix(&self) -> [u8; 6] {
        match self.role {
            Role::Initiator => self.keys.responder_prefix,
            Role::Responder => self.keys.initiator_prefix,
        }
    }
}

fn zero_keys() -> DerivedKeys {
    DerivedKeys {
        key: [0; 32],
        confirm_key: [0; 32],
        key_id: 0,
        initiator_prefix: [0; 6],
        responder_prefix: [0; 6],
    }
}

/// Per-session state machine. Each method consumes one step; any failure
/// moves to `Aborted` and wipes secret material.
pub struct Handshake {
    role: Role,
    phase: Phase,
    cfg: HandshakeConfig,
    epoch: u64,
    secret: [u8; 48],
    local_public: [u8; 97],
    peer_public: [u8; 97],
    local_nonce: [u8; 32],
    peer_nonce: [u8; 32],
    local_policy_digest: Digest48,
    peer: Option<PeerEntry>,
    peer_measurement: Digest48,
    initiator_quote: Vec<u8>,
    responder_quote: Vec<u8>,
    keys: DerivedKeys,
    deadline_ms: Option<u64>,
    quote_latency_ms: f64,
}

impl Drop for Handshake {
    fn drop(&mut self) {
        self.wipe();
    }
}

impl std::fmt::Debug for Handshake {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Handshake")
            .field("role", &self.role)
            .field("phase", &self.phase)
            .field("epoch", &self.epoch)
            .finish_non_exhaustive()
    }
}

impl Handshake {
    fn new(role: Role, cfg: HandshakeConfig) -> Self {
        Self {
            role,
            phase: Phase::Start,
            cfg,
            epoch: 0,
            secret: [0; 48],
            local_public: [0; 97],
            peer_public: [0; 97],
            local_nonce: [0; 32],
            peer_nonce: [0; 32],
            local_policy_digest: Digest48::ZERO,
            peer: None,
            peer_measurement: Digest48::ZERO,
            initiator_quote: Vec::new(),
            responder_quote: Vec::new(),
            keys: zero_keys(),
            deadline_ms: None,
            quote_latency_ms: 0.0,
        }
    }

    pub fn initiator(cfg: HandshakeConfig) -> Self {
        Self::new(Role::Initiator, cfg)
    }

    pub fn responder(cfg: HandshakeConfig) -> Self {
        Self::new(Role::Responder, cfg)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn peer(&self) -> Option<&PeerEntry> {
        self.peer.as_ref()
    }

    /// Time spent obtaining this side's quote, queueing included.
    pub fn quote_latency_ms(&self) -> f64 {
        self.quote_latency_ms
    }

    pub fn local_nonce(&self) -> &[u8; 32] {
        &self.local_nonce
    }

    pub fn local_public(&self) -> &[u8; 97] {
        &self.local_public
    }

    /// Ephemeral scalar followed by any derived keys. All zero once the
    /// handshake has aborted or handed its keys out.
    #[doc(hidden)]
    pub fn inspect_secret_material(&self) -> Vec<u8> {
        let mut out = self.secret.to_vec();
        out.extend_from_slice(&self.keys.key);
        out.extend_from_slice(&self.keys.confirm_key);
        out.extend_from_slice(&self.keys.key_id.to_be_bytes());
        out.extend_from_slice(&self.keys.initiator_prefix);
        out.extend_from_slice(&self.keys.responder_prefix);
        out
    }

    fn wipe(&mut self) {
        self.secret.zeroize();
        self.keys.zeroize();
    }

    fn set_phase(&mut self, next: Phase) {
        debug_assert!(self.phase.allows(next), "{:?} -> {:?}", self.phase, next);
        self.phase = next;
    }

    /// Aborts with `err` unless already terminal, and returns it.
    pub fn abort(&mut self, err: HandshakeError) -> HandshakeError {
        if !self.phase.is_terminal() {
            let reason = match &err {
                HandshakeError::PeerAborted(r) => *r,
                e => e.abort_reason(),
            };
            self.set_phase(Phase::Aborted(reason));
            self.wipe();
        }
        err
    }

    /// An abort flight for the current (aborted) state.
    pub fn abort_flight(&self) -> Vec<u8> {
        let reason = match self.phase {
            Phase::Aborted(r) => r,
            _ => AbortReason::Other,
        };
        Flight::abort(self.epoch, reason as u16).encode()
    }

    /// Times the handshake out if its deadline has passed.
    pub fn expire(&mut self, now_ms: u64) -> Result<(), HandshakeError> {
        match self.deadline_ms {
            Some(d) if now_ms > d && !self.phase.is_terminal() => Err(self.abort(HandshakeError::Timeout)),
            _ => Ok(()),
        }
    }

    fn expect_phase(&mut self, role: Role, phase: Phase) -> Result<(), HandshakeError> {
        if self.phase.is_terminal() {
            return Err(HandshakeError::OutOfOrder(self.phase));
        }
        if self.role != role || self.phase != phase {
            let p = self.phase;
            return Err(self.abort(HandshakeError::OutOfOrder(p)));
        }
        Ok(())
    }

    fn fresh_ephemeral(&mut self, ctx: &AttestationContext) -> SecretKey {
        let sk = ctx.secret_key();
        self.secret.copy_from_slice(&sk.to_bytes());
        self.local_public = encode_public(&sk.public_key());
        ctx.fill_random(&mut self.local_nonce);
        sk
    }

    fn secret_key(&self) -> SecretKey {
        SecretKey::from_bytes((&self.secret).into()).expect("scalar produced by SecretKey::random")
    }

    fn decode(&mut self, bytes: &[u8], flight_no: u8) -> Result<Flight, HandshakeError> {
        let f = Flight::decode(bytes)?;
        if f.flight_no == ABORT_FLIGHT {
            let r = f.abort_reason().map(AbortReason::from_code).unwrap_or(AbortReason::Other);
            return Err(HandshakeError::PeerAborted(r));
        }
        if f.flight_no != flight_no {
            return Err(HandshakeError::OutOfOrder(self.phase));
        }
        Ok(f)
    }

    /// Flight 1. Fails with `Denied` if policy has no entry for `dest`.
    pub fn initiate(
        &mut self,
        ctx: &AttestationContext,
        policy: &PolicyIndex,
        dest: SocketAddrV4,
    ) -> Result<Vec<u8>, HandshakeError> {
        self.expect_phase(Role::Initiator, Phase::Start)?;
        let r = self.initiate_inner(ctx, policy, dest);
        r.map_err(|e| self.abort(e))
    }

    fn initiate_inner(
        &mut self,
        ctx: &AttestationContext,
        policy: &PolicyIndex,
        dest: SocketAddrV4,
    ) -> Result<Vec<u8>, HandshakeError> {
        let peer = match policy.lookup(&dest) {
            FlowDecision::Allow(p) => *p,
            FlowDecision::Deny => return Err(HandshakeError::Denied),
        };
        if !ctx.is_sealed() {
            return Err(AttestationError::NotSealed.into());
        }
        self.peer = Some(peer);
        self.epoch = policy.epoch();
        self.local_policy_digest = policy.digest();
        let _ = self.fresh_ephemeral(ctx);
        let rd = bind_report_data(&[
            &self.local_public,
            self.local_policy_digest.as_bytes(),
            &self.local_nonce,
        ]);
        let (quote, latency) = ctx.quote(&rd)?;
        self.quote_latency_ms += latency;
        self.initiator_quote = quote.to_bytes();
        let flight = Flight::new(1, self.epoch)
            .with(TAG_EPHEMERAL_PUBLIC, &self.local_public)
            .with(TAG_QUOTE, &self.initiator_quote)
            .with(TAG_NONCE, &self.local_nonce);
        self.deadline_ms = Some(ctx.now_ms() + self.cfg.deadline_ms);
        self.set_phase(Phase::SentFlight1);
        Ok(flight.encode())
    }

    /// Verifies flight 1 and produces flight 2. `peer_ip` is the transport
    /// source, used only to choose among policy entries sharing a
    /// measurement.
    pub fn respond(
        &mut self,
        ctx: &AttestationContext,
        policy: &PolicyIndex,
        flight1: &[u8],
        peer_ip: Option<Ipv4Addr>,
    ) -> Result<Vec<u8>, HandshakeError> {
        self.expect_phase(Role::Responder, Phase::Start)?;
        let r = self.respond_inner(ctx, policy, flight1, peer_ip);
        r.map_err(|e| self.abort(e))
    }

    fn respond_inner(
        &mut self,
        ctx: &AttestationContext,
        policy: &PolicyIndex,
        flight1: &[u8],
        peer_ip: Option<Ipv4Addr>,
    ) -> Result<Vec<u8>, HandshakeError> {
        let f = self.decode(flight1, 1)?;
        f.expect_tags(&[TAG_EPHEMERAL_PUBLIC, TAG_NONCE, TAG_QUOTE])?;
        self.epoch = policy.epoch();
        if f.epoch != self.epoch {
            return Err(HandshakeError::EpochMismatch {
                local: self.epoch,
                peer: f.epoch,
            });
        }
        if !ctx.is_sealed() {
            return Err(AttestationError::NotSealed.into());
        }
        let pk_s: [u8; 97] = f.field_array(TAG_EPHEMERAL_PUBLIC)?;
        parse_public(&pk_s)?;
        let n_s: [u8; 32] = f.field_array(TAG_NONCE)?;
        let q_bytes = f.field(TAG_QUOTE)?;
        let q_s = AttestationQuote::from_bytes(q_bytes)
            .map_err(|e| HandshakeError::MalformedFlight(e.to_string()))?;

        let mu_s = q_s.report.measurement;
        let mut candidates: Vec<PeerEntry> = policy.peers_with_measurement(&mu_s).copied().collect();
        if let Some(ip) = peer_ip {
            let (near, far): (Vec<_>, Vec<_>) = candidates.into_iter().partition(|p| *p.address.ip() == ip);
            candidates = near.into_iter().chain(far).collect();
        }
        if candidates.is_empty() {
            q_s.verify_signature(&ctx.verifier().authority_key())?;
            return Err(AttestationError::MeasurementMismatch.into());
        }
        let expect = QuoteExpectation {
            measurement: mu_s,
            rtmr3: ctx.expected_rtmr3(),
        };
        ctx.verifier().verify(&q_s, &expect, ctx.clock())?;
        let peer = candidates
            .into_iter()
            .find(|c| bind_report_data(&[&pk_s, c.policy_digest.as_bytes(), &n_s]) == q_s.report.report_data)
            .ok_or(HandshakeError::BindingMismatch)?;

        self.peer = Some(peer);
        self.peer_measurement = mu_s;
        self.peer_public = pk_s;
        self.peer_nonce = n_s;
        self.initiator_quote = q_bytes.to_vec();
        self.set_phase(Phase::VerifiedFlight1);

        self.local_policy_digest = policy.digest();
        let sk = self.fresh_ephemeral(ctx);
        let rd = bind_report_data(&[
            &self.local_public,
            self.local_policy_digest.as_bytes(),
            &self.local_nonce,
            &self.peer_public,
            &self.peer_nonce,
        ]);
        let (quote, latency) = ctx.quote(&rd)?;
        self.quote_latency_ms += latency;
        self.responder_quote = quote.to_bytes();
        self.keys = derive_session(&sk, &self.peer_public, &self.initiator_quote, &self.responder_quote)?;

        let flight = Flight::new(2, self.epoch)
            .with(TAG_EPHEMERAL_PUBLIC, &self.local_public)
            .with(TAG_POLICY_DIGEST, self.local_policy_digest.as_bytes())
            .with(TAG_QUOTE, &self.responder_quote)
            .with(TAG_NONCE, &self.local_nonce);
        self.deadline_ms = Some(ctx.now_ms() + self.cfg.deadline_ms);
        self.set_phase(Phase::SentFlight2);
        Ok(flight.encode())
    }

    /// Verifies flight 2 and produces the session and flight 3.
    /// `current_epoch` is the node's installed epoch now; a rollover since
    /// flight 1 aborts the handshake.
    pub fn finalize_initiator(
        &mut self,
        ctx: &AttestationContext,
        flight2: &[u8],
        current_epoch: u64,
    ) -> Result<(SessionSecret, Vec<u8>), HandshakeError> {
        self.expect_phase(Role::Initiator, Phase::SentFlight1)?;
        self.expire(ctx.now_ms())?;
        let r = self.finalize_initiator_inner(ctx, flight2, current_epoch);
        r.map_err(|e| self.abort(e))
    }

    fn check_epoch(&self, wire: u64, current: u64) -> Result<(), HandshakeError> {
        if wire != self.epoch {
            return Err(HandshakeError::EpochMismatch {
                local: self.epoch,
                peer: wire,
            });
        }
        if current != self.epoch {
            return Err(HandshakeError::EpochMismatch {
                local: current,
                peer: self.epoch,
            });
        }
        Ok(())
    }

    fn finalize_initiator_inner(
        &mut self,
        ctx: &AttestationContext,
        flight2: &[u8],
        current_epoch: u64,
    ) -> Result<(SessionSecret, Vec<u8>), HandshakeError> {
        let f = self.decode(flight2, 2)?;
        f.expect_tags(&[TAG_EPHEMERAL_PUBLIC, TAG_POLICY_DIGEST, TAG_QUOTE, TAG_NONCE])?;
        self.check_epoch(f.epoch, current_epoch)?;
        let pk_d: [u8; 97] = f.field_array(TAG_EPHEMERAL_PUBLIC)?;
        parse_public(&pk_d)?;
        let pi_d = Digest48(f.field_array(TAG_POLICY_DIGEST)?);
        let n_d: [u8; 32] = f.field_array(TAG_NONCE)?;
        let q_bytes = f.field(TAG_QUOTE)?;
        let q_d = AttestationQuote::from_bytes(q_bytes)
            .map_err(|e| HandshakeError::MalformedFlight(e.to_string()))?;
        let peer = self.peer.expect("set by initiate");
        let expect = QuoteExpectation {
            measurement: peer.measurement,
            rtmr3: ctx.expected_rtmr3(),
        };
        ctx.verifier().verify(&q_d, &expect, ctx.clock())?;
        let rd = bind_report_data(&[&pk_d, pi_d.as_bytes(), &n_d, &self.local_public, &self.local_nonce]);
        if rd != q_d.report.report_data {
            return Err(HandshakeError::BindingMismatch);
        }
        if pi_d != peer.policy_digest {
            return Err(HandshakeError::PolicyDigestMismatch);
        }
        self.peer_public = pk_d;
        self.peer_nonce = n_d;
        self.peer_measurement = q_d.report.measurement;
        self.responder_quote = q_bytes.to_vec();
        self.set_phase(Phase::VerifiedFlight2);

        let sk = self.secret_key();
        self.keys = derive_session(&sk, &self.peer_public, &self.initiator_quote, &self.responder_quote)?;
        let mac = confirmation_mac(&self.keys.confirm_key, &self.responder_quote, &self.initiator_quote);
        let flight3 = Flight::new(3, self.epoch).with(TAG_CONFIRMATION_MAC, &mac).encode();
        let session = SessionSecret {
            role: Role::Initiator,
            peer: peer.address,
            keys: self.keys.clone(),
            binding: SessionBinding {
                initiator_measurement: ctx.measurement(),
                responder_measurement: self.peer_measurement,
                initiator_policy_digest: self.local_policy_digest,
                responder_policy_digest: pi_d,
            },
            established_at_ms: ctx.now_ms(),
            epoch: self.epoch,
        };
        self.set_phase(Phase::Confirmed);
        self.wipe();
        Ok((session, flight3))
    }

    /// Verifies the key-confirmation MAC.
    pub fn finalize_responder(
        &mut self,
        ctx: &AttestationContext,
        flight3: &[u8],
        current_epoch: u64,
    ) -> Result<SessionSecret, HandshakeError> {
        self.expect_phase(Role::Responder, Phase::SentFlight2)?;
        self.expire(ctx.now_ms())?;
        let r = self.finalize_responder_inner(ctx, flight3, current_epoch);
        r.map_err(|e| self.abort(e))
    }

    fn finalize_responder_inner(
        &mut self,
        ctx: &AttestationContext,
        flight3: &[u8],
        current_epoch: u64,
    ) -> Result<SessionSecret, HandshakeError> {
        let f = self.decode(flight3, 3)?;
        f.expect_tags(&[TAG_CONFIRMATION_MAC])?;
        self.check_epoch(f.epoch, current_epoch)?;
        verify_confirmation_mac(
            &self.keys.confirm_key,
            &self.responder_quote,
            &self.initiator_quote,
            f.field(TAG_CONFIRMATION_MAC)?,
        )?;
        let peer = self.peer.expect("set by respond");
        let session = SessionSecret {
            role: Role::Responder,
            peer: peer.address,
            keys: self.keys.clone(),
            binding: SessionBinding {
                initiator_measurement: self.peer_measurement,
                responder_measurement: ctx.measurement(),
                initiator_policy_digest: peer.policy_digest,
                responder_policy_digest: self.local_policy_digest,
            },
            established_at_ms: ctx.now_ms(),
            epoch: self.epoch,
        };
        self.set_phase(Phase::Confirmed);
        self.wipe();
        Ok(session)
    }
}
