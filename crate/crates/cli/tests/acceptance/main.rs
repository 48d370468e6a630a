//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any failed.

mod oracle;
mod tunnels;

use std::collections::{HashMap, HashSet};
use std::net::{Ipv4Addr, SocketAddrV4};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use janus_cli::adversary::{FieldEdit, FlightTamper};
use janus_cli::scenario::ScenarioReport;
use janus_core::attestation::{AttestationError, QUOTE_LEN};
use janus_core::clock::SimClock;
use janus_core::cluster::{Cluster, ClusterBuilder, NodeSpec};
use janus_core::dataplane::{
    DataPlane, DataPlaneConfig, FlowKeyTable, OpenError, SessionKeyEntry, DEFAULT_MTU,
    DEFAULT_REKEY_THRESHOLD,
};
use janus_core::make::wire::{
    Flight, TAG_CONFIRMATION_MAC, TAG_EPHEMERAL_PUBLIC, TAG_NONCE, TAG_POLICY_DIGEST, TAG_QUOTE,
};
use janus_core::make::{Handshake, HandshakeConfig, HandshakeError, SessionSecret};
use janus_scale::{
    closed_form_init, montage_like, replay_dag_transfers, simulate_dag_init, simulate_init, Dag, ImpairmentSpec,
    LatencyModel, PacketCostModel, SimConfig, TopologySpec,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want
}

fn addr(rng: &mut impl Rng, last: u8) -> SocketAddrV4 {
    SocketAddrV4::new(Ipv4Addr::new(10, rng.gen(), rng.gen(), last), rng.gen_range(1024..u16::MAX))
}

/// A fully meshed cluster with random names, addresses, epoch and seed.
fn random_cluster(rng: &mut impl Rng, n: usize) -> Cluster {
    let tag: u32 = rng.gen();
    let specs = (0..n)
        .map(|i| NodeSpec::named(&format!("n{i}-{tag:08x}"), addr(rng, i as u8 + 1)))
        .collect();
    let clock = SimClock::new(rng.gen_range(1_000..1 << 40));
    ClusterBuilder::new(specs, clock).epoch(rng.gen_range(1..1 << 20)).seed(rng.gen()).build()
}

fn distinct_pair(rng: &mut impl Rng, n: usize) -> (usize, usize) {
    let i = rng.gen_range(0..n);
    (i, (i + rng.gen_range(1..n)) % n)
}

fn same_session(a: &SessionSecret, b: &SessionSecret) -> bool {
    a.keys == b.keys && a.binding == b.binding && a.epoch == b.epoch
}

// 1

/// Drives one handshake step by step so the ephemeral scalars can be
/// read out, then recomputes every derived value independently.
fn oracle_sample(curve: &oracle::Curve, cluster: &Cluster, i: usize, j: usize) -> Result<(), String> {
    let (a, b) = (cluster.node(i), cluster.node(j));
    let cfg = HandshakeConfig::default();
    let mut ini = Handshake::initiator(cfg);
    let mut res = Handshake::responder(cfg);
    let f1 = ini.initiate(&a.ctx, &a.store.load(), b.spec.address).map_err(|e| e.to_string())?;
    let s = BigUint::from_bytes_be(&ini.inspect_secret_material()[..48]);
    let f2 = res
        .respond(&b.ctx, &b.store.load(), &f1, Some(*a.spec.address.ip()))
        .map_err(|e| e.to_string())?;
    let d = BigUint::from_bytes_be(&res.inspect_secret_material()[..48]);
    let (sa, f3) = ini.finalize_initiator(&a.ctx, &f2, a.store.epoch()).map_err(|e| e.to_string())?;
    let sb = res.finalize_responder(&b.ctx, &f3, b.store.epoch()).map_err(|e| e.to_string())?;

    let (f1, f2, f3) = (Flight::decode(&f1).unwrap(), Flight::decode(&f2).unwrap(), Flight::decode(&f3).unwrap());
    let field = |f: &Flight, t| f.field(t).map(<[u8]>::to_vec).map_err(|e| e.to_string());
    let (pk_s, q_s) = (field(&f1, TAG_EPHEMERAL_PUBLIC)?, field(&f1, TAG_QUOTE)?);
    let (pk_d, q_d) = (field(&f2, TAG_EPHEMERAL_PUBLIC)?, field(&f2, TAG_QUOTE)?);
    let mac = field(&f3, TAG_CONFIRMATION_MAC)?;

    let (sx, sy) = curve.mul_base(&s);
    let (dx, dy) = curve.mul_base(&d);
    if oracle::encode_point(&sx, &sy) != pk_s || oracle::encode_point(&dx, &dy) != pk_d {
        return Err("public key is not scalar * G".into());
    }
    let (psx, psy) = oracle::decode_point(curve, &pk_s).ok_or("pk_s off curve")?;
    let (pdx, pdy) = oracle::decode_point(curve, &pk_d).ok_or("pk_d off curve")?;
    let z_ini = oracle::be48(&curve.mul_point(&s, &pdx, &pdy).0);
    let z_res = oracle::be48(&curve.mul_point(&d, &psx, &psy).0);
    if z_ini != z_res {
        return Err("ECDH disagrees".into());
    }
    let want = oracle::derive(&z_ini, &q_s, &q_d);
    for (side, secret) in [("initiator", &sa), ("responder", &sb)] {
        let k = &secret.keys;
        let got = oracle::OracleKeys {
            key: k.key.to_vec(),
            confirm_key: k.confirm_key.to_vec(),
            key_id: k.key_id,
            initiator_prefix: k.initiator_prefix.to_vec(),
            responder_prefix: k.responder_prefix.to_vec(),
        };
        if got != want {
            return Err(format!("{side} keys differ from oracle"));
        }
    }
    if oracle::hmac_sha384(&want.confirm_key, &[&q_d, &q_s]) != mac {
        return Err("confirmation MAC differs from oracle".into());
    }
    Ok(())
}

fn protocol_correctness() -> Outcome {
    oracle::self_test()?;
    let mut rng = ChaCha20Rng::seed_from_u64(0x01);
    let t0 = Instant::now();
    let (mut agreed, mut total) = (0u32, 0u32);
    let mut first_failure = None;
    for _ in 0..100 {
        let n = rng.gen_range(2..=5);
        let cluster = random_cluster(&mut rng, n);
        for _ in 0..100 {
            let (i, j) = distinct_pair(&mut rng, n);
            let run = cluster.handshake_threaded(i, j, Box::new(|_, _| {}), HandshakeConfig::default());
            total += 1;
            match (&run.initiator, &run.responder) {
                (Ok(a), Ok(b)) if same_session(a, b) => agreed += 1,
                _ => {
                    first_failure.get_or_insert_with(|| format!("{run:?}"));
                }
            }
        }
    }
    let elapsed = t0.elapsed();

    let curve = oracle::Curve::p384();
    let mut oracle_ok = 0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=4);
        let cluster = random_cluster(&mut rng, n);
        let (i, j) = distinct_pair(&mut rng, n);
        match oracle_sample(&curve, &cluster, i, j) {
            Ok(()) => oracle_ok += 1,
            Err(e) => {
                first_failure.get_or_insert(e);
            }
        }
    }
    check(
        agreed == total && total == 10_000 && elapsed < Duration::from_secs(60) && oracle_ok == 100,
        format!(
            "{agreed}/{total} agreed in {:.1} s, oracle {oracle_ok}/100{}",
            elapsed.as_secs_f64(),
            first_failure.map(|f| format!(", first failure: {f}")).unwrap_or_default()
        ),
    )
}

// 2

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Initiator,
    Responder,
}

fn quote_byte(r: usize) -> usize {
    // everything after the magic
    4 + (r * 37) % (QUOTE_LEN - 4)
}

fn tamper_matrix() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(0x02);
    let cluster = random_cluster(&mut rng, 2);
    // Valid points from unrelated handshakes.
    let donors: Vec<Vec<u8>> = (0..100)
        .map(|_| {
            let mut h = Handshake::initiator(HandshakeConfig::default());
            let (a, b) = (cluster.node(0), cluster.node(1));
            let f1 = h.initiate(&a.ctx, &a.store.load(), b.spec.address).unwrap();
            Flight::decode(&f1).unwrap().field(TAG_EPHEMERAL_PUBLIC).unwrap().to_vec()
        })
        .collect();

    type Make = Box<dyn Fn(usize) -> FlightTamper>;
    let flip = |flight_no: u8, tag: u16, len: usize| -> Make {
        Box::new(move |r| FlightTamper { flight_no, tag, edit: FieldEdit::FlipByte(r % len) })
    };
    let replace = |flight_no: u8, donors: Vec<Vec<u8>>| -> Make {
        Box::new(move |r| FlightTamper {
            flight_no,
            tag: TAG_EPHEMERAL_PUBLIC,
            edit: FieldEdit::Replace(donors[r].clone()),
        })
    };
    let quote = |flight_no: u8| -> Make {
        Box::new(move |r| FlightTamper { flight_no, tag: TAG_QUOTE, edit: FieldEdit::FlipByte(quote_byte(r)) })
    };
    let cases: Vec<(&str, Make, Side, &str)> = vec![
        ("pk_s", replace(1, donors.clone()), Side::Responder, "BindingMismatch"),
        ("n_s", flip(1, TAG_NONCE, 32), Side::Responder, "BindingMismatch"),
        ("Q_s", quote(1), Side::Responder, "AttestationRejected"),
        ("pk_d", replace(2, donors), Side::Initiator, "BindingMismatch"),
        ("pi_d", flip(2, TAG_POLICY_DIGEST, 48), Side::Initiator, "BindingMismatch"),
        ("n_d", flip(2, TAG_NONCE, 32), Side::Initiator, "BindingMismatch"),
        ("Q_d", quote(2), Side::Initiator, "AttestationRejected"),
        ("mac", flip(3, TAG_CONFIRMATION_MAC, 48), Side::Responder, "ConfirmationFailed"),
    ];
    let mut completions = 0;
    let mut summary = Vec::new();
    let mut ok = true;
    for (name, make, side, want) in cases {
        let mut matched = 0;
        let mut other: HashMap<String, u32> = HashMap::new();
        for r in 0..100 {
            let t = make(r);
            let hook = Box::new(move |flight: u8, bytes: &mut Vec<u8>| {
                if flight == t.flight_no {
                    assert!(t.apply(bytes), "field {} missing", t.tag);
                }
            });
            let (i, j) = if r % 2 == 0 { (0, 1) } else { (1, 0) };
            let run = cluster.handshake_threaded(i, j, hook, HandshakeConfig::default());
            if run.completed() {
                completions += 1;
            }
            let err = match side {
                Side::Initiator => run.initiator.as_ref().err(),
                Side::Responder => run.responder.as_ref().err(),
            };
            match err {
                Some(e) if e.kind() == want => matched += 1,
                Some(e) => *other.entry(e.kind().to_owned()).or_default() += 1,
                None => *other.entry("none".into()).or_default() += 1,
            }
        }
        ok &= matched == 100;
        summary.push(if other.is_empty() {
            format!("{name} {matched}/100")
        } else {
            format!("{name} {matched}/100 {other:?}")
        });
    }
    check(ok && completions == 0, format!("{completions} completions; {}", summary.join(", ")))
}

// 3

fn unauthorized_binary() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(0x03);
    let tag: u32 = rng.gen();
    let specs = (0..3).map(|i| NodeSpec::named(&format!("u{i}-{tag:08x}"), addr(&mut rng, i + 1))).collect();
    // Node 2 names node 1, but node 1's policy knows only node 0.
    let cluster = ClusterBuilder::new(specs, SimClock::new(5_000))
        .edges(vec![vec![1], vec![0], vec![1]])
        .seed(rng.gen())
        .build();
    let (a, b) = (cluster.node(2), cluster.node(1));
    let (mut rejected, mut wiped) = (0, 0);
    let mut seen = HashSet::new();
    for _ in 0..100 {
        let cfg = HandshakeConfig::default();
        let mut ini = Handshake::initiator(cfg);
        let mut res = Handshake::responder(cfg);
        let f1 = ini.initiate(&a.ctx, &a.store.load(), b.spec.address).map_err(|e| e.to_string())?;
        let responded = res.respond(&b.ctx, &b.store.load(), &f1, Some(*a.spec.address.ip()));
        let initiator = ini.finalize_initiator(&a.ctx, &res.abort_flight(), a.store.epoch());
        match &responded {
            Err(HandshakeError::AttestationRejected(AttestationError::MeasurementMismatch)) if initiator.is_err() => {
                rejected += 1
            }
            other => {
                seen.insert(format!("{:?}", other.as_ref().err()));
            }
        }
        let zero = |h: &Handshake| h.inspect_secret_material().iter().all(|b| *b == 0);
        if zero(&ini) && zero(&res) {
            wiped += 1;
        }
    }
    check(
        rejected == 100 && wiped == 100,
        format!("{rejected}/100 AttestationRejected(MeasurementMismatch), {wiped}/100 secrets wiped {seen:?}"),
    )
}

// 4

fn epoch_discipline() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(0x04);
    let cluster = random_cluster(&mut rng, 2);

    let mut rejected = 0;
    cluster.rollover(cluster.node(0).store.epoch() + 1_000).map_err(|e| e.to_string())?;
    for _ in 0..100 {
        let i = rng.gen_range(0..2);
        let current = cluster.node(i).store.epoch();
        let stale = rng.gen_range(1..=current);
        if cluster.install(i, stale).is_err() && cluster.node(i).store.epoch() == current {
            rejected += 1;
        }
        // keep moving forward so stale values cover a growing range
        cluster.install(i, current + rng.gen_range(1..50)).map_err(|e| e.to_string())?;
    }

    let cluster = random_cluster(&mut rng, 2);
    let mut mismatched = 0;
    let mut epoch = cluster.node(0).store.epoch();
    for r in 0..100 {
        epoch += 3;
        cluster.rollover(epoch).map_err(|e| e.to_string())?;
        let ahead = r % 2;
        cluster.install(ahead, epoch + 1).map_err(|e| e.to_string())?;
        let (i, j) = if r % 4 < 2 { (0, 1) } else { (1, 0) };
        let run = cluster.handshake_direct(i, j, &mut |_, _| {});
        let reported = [&run.initiator, &run.responder]
            .iter()
            .any(|s| matches!(s, Err(HandshakeError::EpochMismatch { .. })));
        if !run.completed() && reported {
            mismatched += 1;
        }
        epoch += 1;
        cluster.rollover(epoch + 1).map_err(|e| e.to_string())?;
        epoch += 1;
    }

    let rollover = tunnels::rollover_penalty()?;
    check(
        rejected == 100 && mismatched == 100 && rollover.passed,
        format!(
            "(a) {rejected}/100 downgrades rejected; (b) {mismatched}/100 EpochMismatch; (c) {}",
            rollover.detail
        ),
    )
}

// 5

fn counter_of(nonce: &[u8; 12]) -> u32 {
    u32::from_be_bytes(nonce[8..].try_into().unwrap())
}

fn pair_planes(cluster: &Cluster, threshold: u64, clock: &Arc<SimClock>) -> (DataPlane, DataPlane) {
    let run = cluster.handshake_direct(0, 1, &mut |_, _| {});
    assert!(run.keys_agree());
    let plane = |i: usize, s: &SessionSecret| {
        let keys = Arc::new(FlowKeyTable::new());
        keys.install(Arc::new(SessionKeyEntry::from_session(s, threshold)));
        let cfg = DataPlaneConfig { mtu: DEFAULT_MTU, lanes: 4, rekey_threshold: threshold };
        DataPlane::new(cluster.node(i).store.clone(), keys, cfg, clock.clone())
    };
    (plane(0, run.initiator.as_ref().unwrap()), plane(1, run.responder.as_ref().unwrap()))
}

fn nonce_and_rekey() -> Outcome {
    const PACKETS: u32 = 1_000_000;
    let clock = SimClock::new(1_000);
    let cluster = ClusterBuilder::with_nodes(2, clock.clone()).seed(0x05).build();
    let dest = cluster.node(1).spec.address;

    // Four lanes sealing concurrently under the default threshold.
    let (a, _) = pair_planes(&cluster, DEFAULT_REKEY_THRESHOLD, &clock);
    let per_lane: Vec<Vec<(u32, [u8; 12])>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..4u16)
            .map(|lane| {
                let a = &a;
                s.spawn(move || {
                    (0..PACKETS / 4)
                        .map(|k| {
                            let sealed = a.seal(&dest, &k.to_le_bytes(), lane).expect("seal");
                            (sealed.key_id, sealed.nonce)
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut seen = HashSet::with_capacity(PACKETS as usize);
    let dup_a = per_lane.iter().flatten().filter(|x| !seen.insert(**x)).count();

    // Lowered threshold: install a fresh key some packets after each signal.
    const THRESHOLD: u64 = 1 << 16;
    const INSTALL_LAG: u32 = 500;
    let (a, _) = pair_planes(&cluster, THRESHOLD, &clock);
    let mut seen = HashSet::with_capacity(PACKETS as usize);
    let mut signals: HashMap<u32, u32> = HashMap::new();
    let mut peak: HashMap<u32, u32> = HashMap::new();
    let mut pending: Option<u32> = None;
    let mut dup_b = 0;
    let mut installs = 0;
    for k in 0..PACKETS {
        let sealed = a.seal(&dest, b"x", (k % 4) as u16).map_err(|e| e.to_string())?;
        if !seen.insert((sealed.key_id, sealed.nonce)) {
            dup_b += 1;
        }
        let c = counter_of(&sealed.nonce);
        let p = peak.entry(sealed.key_id).or_default();
        *p = (*p).max(c);
        if sealed.rekey {
            *signals.entry(sealed.key_id).or_default() += 1;
            pending.get_or_insert(k + INSTALL_LAG);
        }
        if pending == Some(k) {
            pending = None;
            let run = cluster.handshake_direct(0, 1, &mut |_, _| {});
            let s = run.initiator.map_err(|e| e.to_string())?;
            a.keys().install(Arc::new(SessionKeyEntry::from_session(&s, THRESHOLD)));
            installs += 1;
        }
    }
    let crossings = peak.values().filter(|c| u64::from(**c) + 1 >= THRESHOLD).count();
    let exact = peak
        .iter()
        .all(|(id, c)| signals.get(id).copied().unwrap_or(0) == u32::from(u64::from(*c) + 1 >= THRESHOLD));
    check(
        dup_a == 0 && dup_b == 0 && exact && crossings > 1 && installs >= crossings,
        format!(
            "{dup_a} duplicates over 4 lanes; threshold 2^16: {} keys, {crossings} crossings, {} signals, {installs} installs, {dup_b} duplicates",
            peak.len(),
            signals.values().sum::<u32>()
        ),
    )
}

// 6

fn aead() -> Outcome {
    let clock = SimClock::new(1_000);
    let cluster = ClusterBuilder::with_nodes(2, clock.clone()).seed(0x06).build();
    let (a, b) = pair_planes(&cluster, DEFAULT_REKEY_THRESHOLD, &clock);
    let (src, dest) = (cluster.node(0).spec.address, cluster.node(1).spec.address);
    let mut rng = ChaCha20Rng::seed_from_u64(0x06);

    let (mut flips, mut auth_failed) = (0u64, 0u64);
    let mut other: HashMap<String, u64> = HashMap::new();
    for _ in 0..1_000 {
        let mut payload = vec![0u8; rng.gen_range(1..=64)];
        rng.fill_bytes(&mut payload);
        let frame = a.seal(&dest, &payload, rng.gen_range(0..4)).map_err(|e| e.to_string())?.frame;
        for bit in 0..frame.len() * 8 {
            let mut f = frame.clone();
            f[bit / 8] ^= 1 << (bit % 8);
            flips += 1;
            match b.open(&f, &src) {
                Err(OpenError::AuthFailed) => auth_failed += 1,
                r => *other.entry(format!("{:?}", r.map(|_| "opened"))).or_default() += 1,
            }
        }
    }

    let budget = a.config().inner_budget();
    let mut roundtrips = 0;
    for _ in 0..10_000 {
        let mut payload = vec![0u8; rng.gen_range(1..=budget)];
        rng.fill_bytes(&mut payload);
        let sealed = a.seal(&dest, &payload, rng.gen_range(0..4)).map_err(|e| e.to_string())?;
        if b.open(&sealed.frame, &src).as_deref() == Ok(&payload[..]) {
            roundtrips += 1;
        }
    }
    check(
        flips == auth_failed && roundtrips == 10_000,
        format!("{auth_failed}/{flips} flips AuthFailed {other:?}; {roundtrips}/10000 round trips up to {budget} B"),
    )
}

// 7 to 10

fn closed_form() -> Outcome {
    let big = closed_form_init(200, 16.0, 32, 103.2);
    let small = closed_form_init(100, 3.5, 32, 103.2);
    check(big == 10_320.0 && small < 1_500.0, format!("N=200 e=16: {big} ms; N=100 e=3.5: {small:.1} ms"))
}

fn monte_carlo() -> Outcome {
    let t0 = Instant::now();
    let cfg = SimConfig { trials: 100_000, seed: 1, ..Default::default() };
    let cases = [
        (64, 2.0, 440.0, Some(530.0)),
        (100, 3.0, 1_020.0, None),
        (200, 4.0, 2_730.0, None),
        (128, 127.0, 55_410.0, None),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, e, p50, p95) in cases {
        let p = simulate_init(&TopologySpec::uniform(n, e, 32), &cfg).map_err(|e| e.to_string())?;
        ok &= within(p.p50, p50, 0.15);
        let mut s = format!("N={n} e={e}: P50 {:.0}/{p50}", p.p50);
        if let Some(p95) = p95 {
            ok &= within(p.p95, p95, 0.15);
            s += &format!(" P95 {:.0}/{p95}", p.p95);
        }
        parts.push(s);
    }
    let elapsed = t0.elapsed();
    check(ok && elapsed < Duration::from_secs(120), format!("{} ({:.1} s)", parts.join("; "), elapsed.as_secs_f64()))
}

fn dag_table() -> Outcome {
    let base = SimConfig { latency: LatencyModel::reference_fixed(), trials: 1_000, ..Default::default() };
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, dag, want) in [
        ("1-level/2", Dag::tree(1, 2), 210.0),
        ("2-level/4", Dag::tree(2, 4), 450.0),
        ("mixed-20/8", Dag::mixed_twenty(), 850.0),
    ] {
        let p = simulate_dag_init(&TopologySpec::dag(dag, None), &base).map_err(|e| e.to_string())?;
        ok &= within(p.p50, want, 0.10);
        parts.push(format!("{name} P50 {:.0}/{want}", p.p50));
    }
    let mut lossy = base;
    lossy.trials = 100_000;
    lossy.impairments = ImpairmentSpec { loss_probability: 0.001, jitter_sd_ms: 0.1, ..Default::default() };
    let p = simulate_dag_init(&TopologySpec::dag(Dag::mixed_twenty(), None), &lossy).map_err(|e| e.to_string())?;
    ok &= within(p.p99, 1_050.0, 0.15);
    parts.push(format!("mixed-20 0.1% loss P99 {:.0}/1050", p.p99));
    check(ok, parts.join("; "))
}

fn dag_replay() -> Outcome {
    let dag = montage_like(100, 600_000_000, 0).map_err(|e| e.to_string())?;
    let r = replay_dag_transfers(&dag, &PacketCostModel::default()).map_err(|e| e.to_string())?;
    check((4.0..=9.0).contains(&r.overhead_pct), format!("overhead {:.2}%", r.overhead_pct))
}

// 11, 12

fn confidentiality() -> Outcome {
    let r = tunnels::capture_check()?;
    check(r.passed, r.detail)
}

fn liveness() -> Outcome {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_janus"))
        .args(["scenario", "stalled-lane", "--seed", "12"])
        .env_remove("JANUS_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    let report = ScenarioReport::from_json(&text).map_err(|e| format!("{e}: {text}"))?;
    let lines: Vec<String> = report
        .assertions
        .iter()
        .map(|a| format!("{}{}: {}", if a.passed { "" } else { "FAILED " }, a.name, a.detail))
        .collect();
    check(report.passed && out.status.success(), lines.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("1 protocol correctness", protocol_correctness),
        ("2 tamper matrix", tamper_matrix),
        ("3 unauthorized binary", unauthorized_binary),
        ("4 epoch discipline", epoch_discipline),
        ("5 nonce uniqueness and rekey", nonce_and_rekey),
        ("6 data-plane AEAD", aead),
        ("7 closed-form initialization", closed_form),
        ("8 Monte Carlo initialization", monte_carlo),
        ("9 DAG depth table", dag_table),
        ("10 DAG replay overhead", dag_replay),
        ("11 confidentiality", confidentiality),
        ("12 liveness backstop", liveness),
    ];
    let only: Option<Vec<String>> = std::env::var("JANUS_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').map(|x| x.trim().to_owned()).collect());
    let mut failed = 0;
    for (name, f) in criteria {
        let id = name.split(' ').next().unwrap_or_default();
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == id)) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS  {name} ({secs:.1} s): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.1} s): {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
