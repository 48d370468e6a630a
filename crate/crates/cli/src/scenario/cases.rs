use std::net::SocketAddrV4;
use std::thread::sleep;
use std::time::{Duration, Instant};

use janus_core::dataplane::tunnel::TunnelStats;
use janus_core::dataplane::HEADER_LEN;
use janus_core::make::wire::TAG_QUOTE;
use janus_core::policy::{FlowRule, PeerEntry};
use janus_core::Digest48;

use super::{failures, wait_until, Checks, Harness, NodeOptions, NodeProc, ScenarioOptions};
use crate::adversary::{Direction, FieldEdit, FlightTamper, FrameAction, Relay};
use crate::error::CliResult;
use crate::workload::{drain, PacedFlow};

/// A byte inside the quote signature.
const QUOTE_SIGNATURE_BYTE: usize = 330;
const WARM_UP: Duration = Duration::from_secs(5);
const QUIET: Duration = Duration::from_millis(150);
const BURST_INTERVAL: Duration = Duration::from_millis(8);

fn stats(n: &NodeProc) -> CliResult<TunnelStats> {
    n.ctl()?.stats()
}

/// Two nodes whose traffic crosses a relay.
fn relayed(opts: ScenarioOptions) -> CliResult<(Harness, Relay)> {
    let mut h = Harness::plan(opts, &["a", "b"])?;
    let relay = Relay::start(h.addr(0), h.addr(1))?;
    h.node_opts[0] = NodeOptions { routes: vec![(1, relay.side_a())], ..Default::default() };
    h.node_opts[1] = NodeOptions { routes: vec![(0, relay.side_b())], ..Default::default() };
    Ok((h, relay))
}

/// Sends from `from` to `to` for `span`, so handshakes get retried.
fn poke(from: &NodeProc, to: SocketAddrV4, span: Duration) -> CliResult<()> {
    let t0 = Instant::now();
    while t0.elapsed() < span {
        from.app.send(&to, b"poke")?;
        sleep(Duration::from_millis(25));
    }
    Ok(())
}

fn send_numbered(from: &NodeProc, to: SocketAddrV4, count: u32) -> CliResult<()> {
    for i in 0..count {
        from.app.send(&to, format!("msg-{i}").as_bytes())?;
        sleep(Duration::from_millis(2));
    }
    Ok(())
}

fn no_keys(n: &TunnelStats) -> bool {
    n.live_keys == 0 && n.handshakes_completed == 0
}

pub(super) fn mitm(opts: ScenarioOptions, c: &mut Checks) -> CliResult<()> {
    let (mut h, relay) = relayed(opts)?;
    relay.set_flight_tampers(vec![FlightTamper {
        flight_no: 1,
        tag: TAG_QUOTE,
        edit: FieldEdit::FlipByte(QUOTE_SIGNATURE_BYTE),
    }]);
    h.spawn_all()?;
    let (a, b) = (&h.nodes[0], &h.nodes[1]);

    poke(a, b.net, Duration::from_millis(800))?;
    let rejected = wait_until(Duration::from_secs(3), || {
        failures(b, "responder", "AttestationRejected").is_ok_and(|r| !r.is_empty())
    });
    c.check("tampered quote rejected by responder", rejected, format!("{:?}", relay.counters()));
    let (sa, sb) = (stats(a)?, stats(b)?);
    c.check(
        "no session keys while tampering",
        no_keys(&sa) && no_keys(&sb),
        format!("a live {} done {}, b live {} done {}", sa.live_keys, sa.handshakes_completed, sb.live_keys, sb.handshakes_completed),
    );
    c.check("nothing delivered while tampering", sb.opened == 0, format!("b opened {}", sb.opened));

    relay.clear();
    let up = a.app.warm_up(&b.app, &b.net, WARM_UP);
    c.check("handshake completes once tampering stops", up, String::new());
    drain(&b.app, QUIET);

    let before = stats(b)?;
    let flipped_before = relay.counters().tampered_frames;
    relay.set_frame_rules(Direction::AToB, vec![FrameAction::FlipBit((HEADER_LEN + 2) * 8)]);
    send_numbered(a, b.net, 50)?;
    let leaked = drain(&b.app, Duration::from_millis(300));
    let after = stats(b)?;
    let flipped = relay.counters().tampered_frames - flipped_before;
    c.check(
        "bit-flipped frames fail authentication",
        flipped == 50 && after.auth_failed - before.auth_failed == flipped,
        format!("flipped {flipped}, auth_failed +{}", after.auth_failed - before.auth_failed),
    );
    c.check("no flipped frame delivered", leaked == 0 && after.opened == before.opened, format!("{leaked} delivered"));

    relay.clear();
    send_numbered(a, b.net, 20)?;
    let got = drain(&b.app, Duration::from_millis(300));
    c.check("delivery resumes after tampering", got == 20, format!("{got}/20"));
    Ok(())
}

pub(super) fn replay(opts: ScenarioOptions, c: &mut Checks) -> CliResult<()> {
    let (mut h, relay) = relayed(opts)?;
    h.spawn_all()?;
    let (a, b) = (&h.nodes[0], &h.nodes[1]);
    let up = a.app.warm_up(&b.app, &b.net, WARM_UP);
    c.check("session established", up, String::new());
    drain(&b.app, QUIET);

    relay.capture(Some(Direction::AToB));
    send_numbered(a, b.net, 20)?;
    let got = drain(&b.app, Duration::from_millis(300));
    relay.capture(None);
    let frames = relay.take_captured();
    c.check(
        "original frames delivered",
        got == 20 && frames.len() == 20,
        format!("{got} delivered, {} captured", frames.len()),
    );

    let before = stats(b)?;
    for (dir, f) in &frames {
        relay.inject(*dir, f)?;
    }
    let again = drain(&b.app, Duration::from_millis(300));
    let after = stats(b)?;
    c.check(
        "every replayed frame rejected",
        after.replay - before.replay == frames.len() as u64,
        format!("replay +{} of {}", after.replay - before.replay, frames.len()),
    );
    c.check("no replayed frame delivered", again == 0 && after.opened == before.opened, format!("{again} delivered"));
    Ok(())
}

pub(super) fn epoch_downgrade(opts: ScenarioOptions, c: &mut Checks) -> CliResult<()> {
    let mut h = Harness::plan(opts, &["a", "b"])?;
    h.spawn_all()?;
    let (a, b) = (&h.nodes[0], &h.nodes[1]);
    c.check("session at epoch 1", a.app.warm_up(&b.app, &b.net, WARM_UP), String::new());

    let eb = b.ctl()?.roll(&h.write_policy(1, 2)?)?;
    let ea = a.ctl()?.roll(&h.write_policy(0, 2)?)?;
    c.check("both nodes roll to epoch 2", (ea, eb) == (2, 2), format!("a {ea}, b {eb}"));
    drain(&b.app, QUIET);
    c.check("traffic flows at epoch 2", a.app.warm_up(&b.app, &b.net, WARM_UP), String::new());

    let downgrade = b.ctl()?.roll(&h.write_policy(1, 1)?);
    let sb = stats(b)?;
    c.check(
        "downgrade to epoch 1 rejected",
        downgrade.is_err() && sb.active_epoch == 2,
        format!("{downgrade:?}, active {}", sb.active_epoch),
    );

    let e3 = a.ctl()?.roll(&h.write_policy(0, 3)?)?;
    poke(a, b.net, Duration::from_millis(600))?;
    let mismatch = wait_until(Duration::from_secs(3), || {
        failures(b, "responder", "EpochMismatch").is_ok_and(|r| !r.is_empty())
    });
    let sb = stats(b)?;
    c.check(
        "cross-epoch handshake aborts with EpochMismatch",
        e3 == 3 && mismatch && sb.active_epoch == 2,
        format!("a at {e3}, b at {}", sb.active_epoch),
    );
    Ok(())
}

pub(super) fn unauthorized_binary(opts: ScenarioOptions, c: &mut Checks) -> CliResult<()> {
    let mut h = Harness::plan(opts, &["a", "b", "c"])?;
    // c trusts b, but b's policy never mentions c
    h.edges = vec![vec![1], vec![0], vec![1]];
    h.spawn_all()?;
    let (a, b, x) = (&h.nodes[0], &h.nodes[1], &h.nodes[2]);

    poke(x, b.net, Duration::from_millis(600))?;
    let rejected = wait_until(Duration::from_secs(3), || {
        failures(b, "responder", "MeasurementMismatch")
            .is_ok_and(|r| r.iter().any(|r| r["error"] == "AttestationRejected"))
    });
    c.check("unlisted binary rejected with AttestationRejected", rejected, String::new());
    let (sb, sx) = (stats(b)?, stats(x)?);
    c.check(
        "no session key material on either side",
        no_keys(&sb) && no_keys(&sx),
        format!("b live {}, c live {}", sb.live_keys, sx.live_keys),
    );
    c.check("nothing from the unlisted binary delivered", sb.opened == 0, format!("b opened {}", sb.opened));
    c.check("authorized peers unaffected", a.app.warm_up(&b.app, &b.net, WARM_UP), String::new());
    Ok(())
}

pub(super) fn digest_mismatch(opts: ScenarioOptions, c: &mut Checks) -> CliResult<()> {
    let mut h = Harness::plan(opts, &["a", "b"])?;
    let mut body = h.deployment.bodies(&h.edges, 1).swap_remove(0);
    let src = body.rules[0].src_measurement;
    body.rules.push(FlowRule {
        src_measurement: src,
        dst: PeerEntry {
            address: "127.0.0.1:9".parse().expect("literal"),
            measurement: Digest48::hash(b"extra peer"),
            policy_digest: Digest48::hash(b"extra peer policy"),
        },
    });
    h.overrides[0] = Some(body);
    h.spawn_all()?;
    let (a, b) = (&h.nodes[0], &h.nodes[1]);

    poke(a, b.net, Duration::from_millis(600))?;
    let binding = wait_until(Duration::from_secs(3), || {
        failures(b, "responder", "BindingMismatch").is_ok_and(|r| !r.is_empty())
    });
    c.check("modified policy fails the responder binding check", binding, String::new());

    poke(b, a.net, Duration::from_millis(600))?;
    let digest = wait_until(Duration::from_secs(3), || {
        failures(b, "initiator", "PolicyDigestMismatch").is_ok_and(|r| !r.is_empty())
    });
    c.check("initiator rejects the advertised policy digest", digest, String::new());
    let (sa, sb) = (stats(a)?, stats(b)?);
    c.check(
        "no session keys",
        no_keys(&sa) && no_keys(&sb),
        format!("a live {}, b live {}", sa.live_keys, sb.live_keys),
    );
    Ok(())
}

pub(super) fn stalled_lane(opts: ScenarioOptions, c: &mut Checks) -> CliResult<()> {
    const LANES: u16 = 2;
    let mut h = Harness::plan(opts, &["a", "b", "c"])?;
    h.node_opts[0] = NodeOptions { lanes: Some(LANES), rekey_threshold: Some(64), ..Default::default() };
    h.spawn_all()?;
    let (a, b, x) = (&h.nodes[0], &h.nodes[1], &h.nodes[2]);
    let up = a.app.warm_up(&b.app, &b.net, WARM_UP) && a.app.warm_up(&x.app, &x.net, WARM_UP);
    c.check("sessions established", up, String::new());
    drain(&x.app, QUIET);

    let epoch = stats(a)?.active_epoch;
    // second inbound worker
    a.ctl()?.stall_lane(LANES + 1, true)?;
    let flow = PacedFlow::start(&a.app, &x.app, x.net, 200, Duration::from_millis(5))?;
    let blast = vec![0x5au8; 256];
    let t0 = Instant::now();
    let mut last_poll = t0;
    let mut forced = false;
    // one key's worth per burst, paced so the shared plaintext socket
    // never overflows
    while !forced && t0.elapsed() < Duration::from_secs(45) {
        let burst = Instant::now();
        for _ in 0..64 {
            a.app.send(&b.net, &blast)?;
        }
        if let Some(d) = BURST_INTERVAL.checked_sub(burst.elapsed()) {
            sleep(d);
        }
        if last_poll.elapsed() > Duration::from_millis(50) {
            forced = stats(a)?.epoch.forced_resets > 0;
            last_poll = Instant::now();
        }
    }
    // keep the unaffected flow running across the reset
    sleep(Duration::from_millis(500));
    let (sent, got) = flow.finish()?;
    let s = stats(a)?;
    c.check(
        "deferred queue forced a reset at 1024",
        forced && s.epoch.last_forced_depth == Some(1024) && s.epoch.peak_deferred == 1024,
        format!(
            "forced_resets {}, last depth {:?}, peak {}, rekeys {}",
            s.epoch.forced_resets, s.epoch.last_forced_depth, s.epoch.peak_deferred, s.rekeys_triggered
        ),
    );
    c.check("node survives the reset", a.ctl()?.stats().is_ok(), String::new());
    c.check("active epoch unchanged", s.active_epoch == epoch, format!("{} -> {}", epoch, s.active_epoch));
    let ratio = got as f64 / sent.max(1) as f64;
    c.check(
        "unaffected flow keeps >= 99% delivery",
        sent > 0 && ratio >= 0.99,
        format!("{got}/{sent} = {:.2}%", ratio * 100.0),
    );
    a.ctl()?.stall_lane(LANES + 1, false)?;
    Ok(())
}

pub(super) fn partition(opts: ScenarioOptions, c: &mut Checks) -> CliResult<()> {
    let (mut h, relay) = relayed(opts)?;
    h.spawn_all()?;
    let (a, b) = (&h.nodes[0], &h.nodes[1]);
    c.check("session established", a.app.warm_up(&b.app, &b.net, WARM_UP), String::new());
    drain(&b.app, QUIET);
    let (a0, b0) = (stats(a)?, stats(b)?);

    let flow = PacedFlow::start(&a.app, &b.app, b.net, 200, Duration::from_millis(5))?;
    sleep(Duration::from_millis(400));
    relay.set_frame_rules(Direction::AToB, vec![FrameAction::Drop]);
    relay.set_frame_rules(Direction::BToA, vec![FrameAction::Drop]);
    sleep(Duration::from_millis(1000));
    relay.clear();
    sleep(Duration::from_millis(600));
    let (sent, got) = flow.finish()?;
    let dropped = relay.counters().dropped;
    c.check(
        "frames dropped during the partition",
        dropped > 0 && got < sent,
        format!("{dropped} dropped, {got}/{sent} delivered"),
    );
    send_numbered(a, b.net, 20)?;
    let after = drain(&b.app, Duration::from_millis(300));
    c.check("traffic resumes after healing", after == 20, format!("{after}/20"));
    let (a1, b1) = (stats(a)?, stats(b)?);
    c.check(
        "same session, no rekey",
        a1.handshakes_initiated == a0.handshakes_initiated
            && a1.handshakes_completed == a0.handshakes_completed
            && b1.handshakes_completed == b0.handshakes_completed
            && a1.rekeys_triggered == a0.rekeys_triggered,
        format!(
            "a handshakes {} -> {}, b {} -> {}",
            a0.handshakes_completed, a1.handshakes_completed, b0.handshakes_completed, b1.handshakes_completed
        ),
    );
    Ok(())
}
