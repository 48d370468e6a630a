//! Command-line surface.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::net::SocketAddrV4;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ed25519_dalek::SigningKey;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};

use janus_core::attestation::{Authority, CollateralSnapshot, DEFAULT_MAX_AGE_MS};
use janus_core::cluster::mesh_edges;
use janus_core::dataplane::tunnel::{run_tunnel, TunnelConfig};
use janus_core::dataplane::{DataPlaneConfig, DEFAULT_MTU, DEFAULT_REKEY_THRESHOLD};
use janus_core::epoch::EpochConfig;
use janus_core::make::HandshakeConfig;
use janus_core::policy::PolicyDocument;
use janus_core::Digest48;
use janus_scale::mape::{compare, read_measurements};
use janus_scale::plot::{init_curves, line_chart_svg};
use janus_scale::scenario::write_csv;
use janus_scale::{Mode, Scenario, SimConfig};

use crate::bench::{self, BenchConfig};
use crate::control::ControlClient;
use crate::deployment::{Deployment, NodePlan};
use crate::env;
use crate::error::{CliError, CliResult, EXIT_ASSERTION};
use crate::identity::{bootstrap, load_bundle, parse_hex32, parse_owner, BootstrapConfig, NodeIdentity};
use crate::scenario::{self, ScenarioOptions, SCENARIOS};

#[derive(Debug, Parser)]
#[command(name = "janus", version, about = "Attested confidential interconnect")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Author, sign and inspect flow policies.
    #[command(subcommand)]
    Policy(PolicyCmd),
    /// Attestation authority keys and revocation.
    #[command(subcommand)]
    Attest(AttestCmd),
    /// Node identity bootstrap.
    #[command(subcommand)]
    Node(NodeCmd),
    /// Run or control a tunnel.
    #[command(subcommand)]
    Tunnel(TunnelCmd),
    /// Policy epoch rollover on a running tunnel.
    #[command(subcommand)]
    Epoch(EpochCmd),
    /// Initialization and overhead model.
    #[command(subcommand)]
    Scale(ScaleCmd),
    /// Run adversarial scenarios.
    Scenario(ScenarioArgs),
    /// Handshake and per-packet microbenchmarks.
    Bench(BenchArgs),
}

#[derive(Debug, Subcommand)]
pub enum PolicyCmd {
    /// New owner signing key (hex seed, one line).
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the policy digest of a document.
    Digest { file: PathBuf },
    /// Sign a document's rules and epoch.
    Sign {
        file: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a signed bundle, optionally against an expected owner.
    Verify {
        file: PathBuf,
        #[arg(long)]
        owner: Option<String>,
    },
    /// Identities and fully meshed policies for a local deployment.
    Mesh {
        /// `name=ip:port`, repeatable.
        #[arg(long = "node", required = true, value_parser = parse_named_addr)]
        nodes: Vec<(String, SocketAddrV4)>,
        #[arg(long, default_value_t = 1)]
        epoch: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum AttestCmd {
    /// New authority seed (hex, one line).
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Revoke a measurement in a collateral file and/or identity files.
    Revoke {
        measurement: String,
        #[arg(long)]
        collateral: Option<PathBuf>,
        #[arg(long = "identity")]
        identities: Vec<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum NodeCmd {
    /// Measured boot: load proxy, lock, extend RTMR3, seal.
    Bootstrap(BootstrapArgs),
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    /// Any file; its SHA-384 stands in for the proxy binary digest.
    #[arg(long)]
    pub proxy: PathBuf,
    #[arg(long)]
    pub name: String,
    /// Skip the lock step. Only for testing a misconfigured node.
    #[arg(long)]
    pub skip_lock: bool,
    #[arg(long)]
    pub measurement: Option<String>,
    #[arg(long)]
    pub address: Option<SocketAddrV4>,
    /// Authority seed file.
    #[arg(long)]
    pub authority: PathBuf,
    #[arg(long)]
    pub owner_pub: Option<String>,
    /// RTMR3 to require of peers; defaults to this proxy's reference.
    #[arg(long)]
    pub pin_rtmr3: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum TunnelCmd {
    Run(TunnelArgs),
    /// Send one JSON command to a control socket and print the reply.
    Ctl {
        #[arg(long)]
        control: PathBuf,
        command: String,
    },
}

#[derive(Debug, Args)]
pub struct TunnelArgs {
    #[arg(long)]
    pub identity: PathBuf,
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub bind: SocketAddrV4,
    #[arg(long)]
    pub plain: SocketAddrV4,
    /// Where inbound payloads go; defaults to the last plaintext sender.
    #[arg(long)]
    pub app: Option<SocketAddrV4>,
    #[arg(long, default_value_t = DEFAULT_MTU)]
    pub mtu: usize,
    #[arg(long, default_value_t = 1)]
    pub lanes: u16,
    #[arg(long, default_value_t = DEFAULT_REKEY_THRESHOLD)]
    pub rekey_threshold: u64,
    /// `peer=via`: reach policy address `peer` through `via`.
    #[arg(long = "route", value_parser = parse_route)]
    pub routes: Vec<(SocketAddrV4, SocketAddrV4)>,
    #[arg(long)]
    pub control: Option<PathBuf>,
    #[arg(long)]
    pub grace_cap_ms: Option<u64>,
    #[arg(long)]
    pub queue_capacity: Option<usize>,
    #[arg(long)]
    pub deadline_ms: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum EpochCmd {
    /// Install a newer policy on a running tunnel.
    Roll {
        #[arg(long)]
        control: PathBuf,
        #[arg(long)]
        policy: PathBuf,
    },
    /// Print epoch and grace-period state.
    Stats {
        #[arg(long)]
        control: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    ClosedForm,
    Mc,
    Dag,
    Replay,
    Rekey,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::ClosedForm => Mode::ClosedForm,
            ModeArg::Mc => Mode::Mc,
            ModeArg::Dag => Mode::Dag,
            ModeArg::Replay => Mode::Replay,
            ModeArg::Rekey => Mode::Rekey,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum ScaleCmd {
    #[command(name = "closed-form")]
    ClosedForm(ScaleRun),
    Mc(ScaleRun),
    Dag(ScaleRun),
    Replay(ScaleRun),
    Rekey(ScaleRun),
    /// Compare model predictions with measured initialization times.
    Mape {
        /// CSV with columns nodes,degree,hosts,measured_ms.
        #[arg(long)]
        measurements: PathBuf,
        /// Scenario supplying latency, trials and seed.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// SVG chart of P50 initialization time against node count.
    Plot {
        #[arg(long, value_delimiter = ',', default_value = "16,32,64,128,256")]
        nodes: Vec<usize>,
        #[arg(long, default_value_t = 2.0)]
        degree: f64,
        #[arg(long, value_delimiter = ',', default_value = "8,32")]
        hosts: Vec<usize>,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ScaleRun {
    #[arg(long)]
    pub scenario: PathBuf,
    /// CSV destination; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario name, or `all`.
    pub name: String,
    /// Write the JSON report here as well as to stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Executable for node processes; defaults to this one.
    #[arg(long)]
    pub exe: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 200)]
    pub handshakes: usize,
    #[arg(long, default_value_t = 200_000)]
    pub packets: usize,
    #[arg(long, default_value_t = 1400)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub lanes: u16,
    /// Also write the cost table as CSV.
    #[arg(long)]
    pub costs: Option<PathBuf>,
}

fn parse_named_addr(s: &str) -> Result<(String, SocketAddrV4), String> {
    let (name, addr) = s.split_once('=').ok_or("expected name=ip:port")?;
    Ok((name.to_owned(), addr.parse().map_err(|e| format!("{addr}: {e}"))?))
}

fn parse_route(s: &str) -> Result<(SocketAddrV4, SocketAddrV4), String> {
    let (peer, via) = s.split_once('=').ok_or("expected peer=via")?;
    Ok((
        peer.parse().map_err(|e| format!("{peer}: {e}"))?,
        via.parse().map_err(|e| format!("{via}: {e}"))?,
    ))
}

fn random_seed32() -> CliResult<[u8; 32]> {
    let mut out = [0u8; 32];
    match env::seed()? {
        Some(s) => ChaCha20Rng::seed_from_u64(s).fill_bytes(&mut out),
        None => rand::rngs::OsRng.fill_bytes(&mut out),
    }
    Ok(out)
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn read_seed_file(path: &Path) -> CliResult<[u8; 32]> {
    Ok(parse_hex32(&path.display().to_string(), &read_text(path)?)?)
}

fn write_seed_file(path: &Path, seed: &[u8; 32]) -> CliResult<()> {
    fs::write(path, hex::encode(seed) + "\n")?;
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn print_json(v: &impl serde::Serialize) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Policy(c) => policy(c),
        Command::Attest(c) => attest(c),
        Command::Node(NodeCmd::Bootstrap(a)) => node_bootstrap(a),
        Command::Tunnel(TunnelCmd::Run(a)) => tunnel_run(a),
        Command::Tunnel(TunnelCmd::Ctl { control, command }) => {
            let cmd: Value = serde_json::from_str(&command)?;
            print_json(&ControlClient::connect(&control)?.call(&cmd)?)?;
            Ok(0)
        }
        Command::Epoch(EpochCmd::Roll { control, policy }) => {
            load_bundle(&policy)?;
            let path = fs::canonicalize(&policy)?;
            let epoch = ControlClient::connect(&control)?.roll(&path)?;
            print_json(&json!({"ok": true, "active_epoch": epoch}))?;
            Ok(0)
        }
        Command::Epoch(EpochCmd::Stats { control }) => {
            print_json(&ControlClient::connect(&control)?.stats()?.epoch)?;
            Ok(0)
        }
        Command::Scale(c) => scale(c),
        Command::Scenario(a) => run_scenarios(a),
        Command::Bench(a) => {
            let report = bench::run(BenchConfig {
                handshakes: a.handshakes,
                packets: a.packets,
                size: a.size,
                lanes: a.lanes,
                seed: env::seed_or(0)?,
            })?;
            if let Some(p) = &a.costs {
                fs::write(p, report.costs.to_csv())?;
            }
            print_json(&report)?;
            Ok(0)
        }
    }
}

fn policy(c: PolicyCmd) -> CliResult<i32> {
    match c {
        PolicyCmd::Keygen { out } => {
            let seed = random_seed32()?;
            write_seed_file(&out, &seed)?;
            let key = SigningKey::from_bytes(&seed);
            print_json(&json!({"owner_pubkey": hex::encode(key.verifying_key().as_bytes())}))?;
        }
        PolicyCmd::Digest { file } => {
            let body = PolicyDocument::from_json(&read_text(&file)?)?.body()?;
            println!("{}", body.digest()?.to_hex());
        }
        PolicyCmd::Sign { file, key, out } => {
            let body = PolicyDocument::from_json(&read_text(&file)?)?.body()?;
            let key = SigningKey::from_bytes(&read_seed_file(&key)?);
            let bundle = body.sign(&key)?;
            emit(out.as_deref(), &(PolicyDocument::from_bundle(&bundle).to_json_pretty() + "\n"))?;
        }
        PolicyCmd::Verify { file, owner } => {
            let bundle = load_bundle(&file)?;
            match owner {
                Some(o) => bundle.verify_owner(&parse_owner(&o)?)?,
                None => bundle.verify_signature()?,
            }
            print_json(&json!({"ok": true, "epoch": bundle.epoch(), "digest": bundle.digest()?.to_hex()}))?;
        }
        PolicyCmd::Mesh { nodes, epoch, seed, out_dir } => {
            fs::create_dir_all(&out_dir)?;
            let plans = nodes.iter().map(|(n, a)| NodePlan::new(n, *a)).collect();
            let d = Deployment::new(env::seed_or(seed)?, plans);
            write_seed_file(&out_dir.join("owner.key"), &d.owner.to_bytes())?;
            write_seed_file(&out_dir.join("authority.key"), &d.authority_seed)?;
            let bodies = d.bodies(&mesh_edges(d.nodes.len()), epoch);
            let mut files = Vec::new();
            for (i, body) in bodies.into_iter().enumerate() {
                let identity = d.write_identity(i, &out_dir)?;
                let policy = d.write_bundle(&d.nodes[i].name, &d.sign(body), &out_dir)?;
                files.push(json!({"name": d.nodes[i].name, "identity": identity, "policy": policy}));
            }
            print_json(&json!({"nodes": files}))?;
        }
    }
    Ok(0)
}

fn attest(c: AttestCmd) -> CliResult<i32> {
    match c {
        AttestCmd::Keygen { out } => {
            let seed = random_seed32()?;
            write_seed_file(&out, &seed)?;
            let key = Authority::from_seed(seed).verifying_key();
            print_json(&json!({"authority_pubkey": hex::encode(key.as_bytes())}))?;
        }
        AttestCmd::Revoke { measurement, collateral, identities } => {
            let m = Digest48::from_hex("measurement", &measurement)?;
            if collateral.is_none() && identities.is_empty() {
                return Err(CliError::validation("nothing to update: pass --collateral or --identity"));
            }
            if let Some(path) = collateral {
                let mut snap = match fs::read_to_string(&path) {
                    Ok(t) => CollateralSnapshot::from_json(&t)?,
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => CollateralSnapshot {
                        snapshot_id: 0,
                        issued_at_ms: 0,
                        revoked: Default::default(),
                        max_age_ms: DEFAULT_MAX_AGE_MS,
                    },
                    Err(e) => return Err(e.into()),
                };
                snap.revoked.insert(m);
                snap.snapshot_id += 1;
                fs::write(&path, snap.to_json_pretty() + "\n")?;
            }
            for path in identities {
                let mut id = NodeIdentity::load(&path)?;
                if !id.revoked.contains(&m) {
                    id.revoked.push(m);
                }
                id.save(&path)?;
            }
            print_json(&json!({"ok": true, "revoked": m.to_hex()}))?;
        }
    }
    Ok(0)
}

fn node_bootstrap(a: BootstrapArgs) -> CliResult<i32> {
    let image = fs::read(&a.proxy).map_err(|e| CliError::validation(format!("{}: {e}", a.proxy.display())))?;
    let id = bootstrap(BootstrapConfig {
        name: a.name,
        proxy_image: image,
        skip_lock: a.skip_lock,
        measurement: a.measurement.map(|m| Digest48::from_hex("measurement", &m)).transpose()?,
        address: a.address,
        authority_seed: read_seed_file(&a.authority)?,
        owner_pubkey: a.owner_pub.map(|k| parse_owner(&k)).transpose()?,
        expected_rtmr3: a.pin_rtmr3.map(|r| Digest48::from_hex("pin_rtmr3", &r)).transpose()?,
        seed: env::seed()?,
    });
    id.save(&a.out)?;
    print_json(&json!({
        "measurement": id.measurement,
        "rtmr3": id.rtmr3,
        "expected_rtmr3": id.expected_rtmr3,
        "bpf_lock": id.bpf_lock,
    }))?;
    Ok(0)
}

fn tunnel_run(a: TunnelArgs) -> CliResult<i32> {
    let mut id = NodeIdentity::load(&a.identity)?;
    if let Some(s) = env::seed()? {
        id.seed = Some(s);
    }
    let clock = env::clock()?;
    let bundle = load_bundle(&a.policy)?;
    let store = Arc::new(id.policy_store(&bundle)?);
    let ctx = Arc::new(id.context(clock.clone())?);
    let mut cfg = TunnelConfig::new(a.bind, a.plain);
    cfg.app = a.app.map(Into::into);
    cfg.routes = a.routes.into_iter().collect::<HashMap<_, _>>();
    cfg.dataplane = DataPlaneConfig { mtu: a.mtu, lanes: a.lanes, rekey_threshold: a.rekey_threshold };
    if cfg.dataplane.inner_budget() == 0 {
        return Err(CliError::validation(format!("mtu {} leaves no room for payload", a.mtu)));
    }
    if let Some(d) = a.deadline_ms {
        cfg.handshake = HandshakeConfig { deadline_ms: d, ..cfg.handshake };
    }
    let mut epoch = EpochConfig::default();
    if let Some(g) = a.grace_cap_ms {
        epoch.grace_cap_ms = Some(g);
    }
    if let Some(q) = a.queue_capacity {
        epoch.queue_capacity = q;
    }
    cfg.epoch = epoch;
    cfg.control = a.control;
    let tunnel = run_tunnel(cfg, ctx, store, clock)?;
    println!("{}", json!({"net": tunnel.net_addr(), "plain": tunnel.plain_addr()}));
    std::io::stdout().flush()?;
    tunnel.wait();
    Ok(0)
}

fn scale(c: ScaleCmd) -> CliResult<i32> {
    let (mode, run) = match c {
        ScaleCmd::ClosedForm(r) => (Mode::ClosedForm, r),
        ScaleCmd::Mc(r) => (Mode::Mc, r),
        ScaleCmd::Dag(r) => (Mode::Dag, r),
        ScaleCmd::Replay(r) => (Mode::Replay, r),
        ScaleCmd::Rekey(r) => (Mode::Rekey, r),
        ScaleCmd::Mape { measurements, scenario } => {
            let rows = read_measurements(fs::File::open(&measurements)?)?;
            let cfg = match scenario {
                Some(p) => Scenario::load(&p)?.sim_config(),
                None => SimConfig::default(),
            };
            print_json(&compare(&rows, &cfg)?)?;
            return Ok(0);
        }
        ScaleCmd::Plot { nodes, degree, hosts, scenario, trials, out } => {
            let mut cfg = match scenario {
                Some(p) => Scenario::load(&p)?.sim_config(),
                None => SimConfig::default(),
            };
            cfg.trials = trials;
            let series = init_curves(&nodes, degree, &hosts, &cfg)?;
            fs::write(&out, line_chart_svg(&series, "nodes", "P50 initialization (s)"))?;
            return Ok(0);
        }
    };
    let rows = Scenario::load(&run.scenario)?.run(mode)?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf)?;
    emit(run.out.as_deref(), &String::from_utf8_lossy(&buf))?;
    Ok(0)
}

fn run_scenarios(a: ScenarioArgs) -> CliResult<i32> {
    let names: Vec<&str> = if a.name == "all" {
        SCENARIOS.to_vec()
    } else if SCENARIOS.contains(&a.name.as_str()) {
        vec![a.name.as_str()]
    } else {
        return Err(CliError::validation(format!(
            "unknown scenario {:?}; expected all or one of {}",
            a.name,
            SCENARIOS.join(", ")
        )));
    };
    let exe = match a.exe {
        Some(p) => p,
        None => std::env::current_exe()?,
    };
    let seed = match a.seed {
        Some(s) => s,
        None => env::seed_or(1)?,
    };
    let mut reports = Vec::new();
    for name in names {
        let r = scenario::run(name, ScenarioOptions { exe: exe.clone(), seed })?;
        for f in r.failed() {
            eprintln!("{name}: assertion failed: {} ({})", f.name, f.detail);
        }
        reports.push(r);
    }
    let text = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0])?
    } else {
        serde_json::to_string_pretty(&reports)?
    };
    if let Some(p) = &a.report {
        fs::write(p, text.clone() + "\n")?;
    }
    println!("{text}");
    Ok(if reports.iter().all(|r| r.passed) { 0 } else { EXIT_ASSERTION })
}
