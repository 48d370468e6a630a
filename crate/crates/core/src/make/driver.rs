use std::net::SocketAddrV4;
use std::time::Duration;

use super::cache::{SessionCache, LOCK_BUDGET};
use super::context::{AttestationContext, HandshakeConfig};
use super::handshake::{Handshake, SessionSecret};
use super::transport::FlightTransport;
use super::HandshakeError;
use crate::policy::PolicyStore;

fn fail<T: FlightTransport + ?Sized>(hs: &mut Handshake, transport: &mut T, err: HandshakeError) -> HandshakeError {
    let err = hs.abort(err);
    if !matches!(err, HandshakeError::PeerAborted(_) | HandshakeError::Transport(_) | HandshakeError::Denied) {
        let _ = transport.send_flight(&hs.abort_flight());
    }
    err
}

fn cache_insert(cache: Option<&SessionCache>, s: SessionSecret) -> Result<SessionSecret, HandshakeError> {
    if let Some(c) = cache {
        c.insert(s.clone(), LOCK_BUDGET)?;
    }
    Ok(s)
}

/// Runs the initiator side to completion over `transport`.
pub fn run_initiator<T: FlightTransport + ?Sized>(
    ctx: &AttestationContext,
    policy: &PolicyStore,
    dest: SocketAddrV4,
    transport: &mut T,
    cfg: HandshakeConfig,
    cache: Option<&SessionCache>,
) -> Result<SessionSecret, HandshakeError> {
    let mut hs = Handshake::initiator(cfg);
    let index = policy.load();
    let f1 = hs.initiate(ctx, &index, dest)?;
    if let Err(e) = transport.send_flight(&f1) {
        return Err(fail(&mut hs, transport, e));
    }
    let f2 = match transport.recv_flight(Duration::from_millis(cfg.deadline_ms)) {
        Ok(b) => b,
        Err(e) => return Err(fail(&mut hs, transport, e)),
    };
    let (session, f3) = match hs.finalize_initiator(ctx, &f2, policy.epoch()) {
        Ok(v) => v,
        Err(e) => return Err(fail(&mut hs, transport, e)),
    };
    transport.send_flight(&f3)?;
    cache_insert(cache, session)
}

/// Runs the responder side for one incoming handshake.
pub fn run_responder<T: FlightTransport + ?Sized>(
    ctx: &AttestationContext,
    policy: &PolicyStore,
    transport: &mut T,
    cfg: HandshakeConfig,
    cache: Option<&SessionCache>,
) -> Result<SessionSecret, HandshakeError> {
    let mut hs = Handshake::responder(cfg);
    let f1 = match transport.recv_flight(Duration::from_millis(cfg.deadline_ms)) {
        Ok(b) => b,
        Err(e) => return Err(fail(&mut hs, transport, e)),
    };
    let index = policy.load();
    let f2 = match hs.respond(ctx, &index, &f1, transport.peer_ip()) {
        Ok(b) => b,
        Err(e) => return Err(fail(&mut hs, transport, e)),
    };
    if let Err(e) = transport.send_flight(&f2) {
        return Err(fail(&mut hs, transport, e));
    }
    let f3 = match transport.recv_flight(Duration::from_millis(cfg.deadline_ms)) {
        Ok(b) => b,
        Err(e) => return Err(fail(&mut hs, transport, e)),
    };
    match hs.finalize_responder(ctx, &f3, policy.epoch()) {
        Ok(s) => cache_insert(cache, s),
        Err(e) => Err(fail(&mut hs, transport, e)),
    }
}
