//! Child tunnel processes on loopback.

use std::io::{BufRead, BufReader};
use std::net::SocketAddrV4;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use janus_core::cluster::{free_loopback_addr, mesh_edges};
use janus_core::policy::{PolicyBody, PolicyBundle};

use crate::control::ControlClient;
use crate::deployment::{Deployment, NodePlan};
use crate::error::{CliError, CliResult};
use crate::workload::App;

#[derive(Debug, Clone)]
pub struct ScenarioOptions {
    /// The `janus` executable used for child nodes.
    pub exe: PathBuf,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct NodeOptions {
    pub lanes: Option<u16>,
    pub rekey_threshold: Option<u64>,
    /// `(peer index, next hop)` pairs.
    pub routes: Vec<(usize, SocketAddrV4)>,
}

pub struct NodeProc {
    pub name: String,
    pub net: SocketAddrV4,
    pub plain: SocketAddrV4,
    pub control: PathBuf,
    pub app: App,
    child: Child,
}

impl NodeProc {
    pub fn ctl(&self) -> CliResult<ControlClient> {
        ControlClient::connect(&self.control)
    }
}

impl Drop for NodeProc {
    fn drop(&mut self) {
        if let Ok(mut c) = self.ctl() {
            let _ = c.shutdown();
        }
        for _ in 0..50 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Assets and processes for one scenario run.
pub struct Harness {
    pub opts: ScenarioOptions,
    pub deployment: Deployment,
    pub edges: Vec<Vec<usize>>,
    pub node_opts: Vec<NodeOptions>,
    /// Replaces the generated policy body for a node.
    pub overrides: Vec<Option<PolicyBody>>,
    pub nodes: Vec<NodeProc>,
    dir: tempfile::TempDir,
}

impl Harness {
    /// Picks addresses and keys for `names`, fully meshed, nothing started.
    pub fn plan(opts: ScenarioOptions, names: &[&str]) -> CliResult<Self> {
        let mut plans = Vec::new();
        for name in names {
            plans.push(NodePlan::new(name, free_loopback_addr()?));
        }
        let n = plans.len();
        Ok(Self {
            deployment: Deployment::new(opts.seed, plans),
            opts,
            edges: mesh_edges(n),
            node_opts: vec![NodeOptions::default(); n],
            overrides: vec![None; n],
            nodes: Vec::new(),
            dir: tempfile::tempdir()?,
        })
    }

    pub fn dir(&self) -> &Path {
        self.dir.path()
    }

    pub fn addr(&self, i: usize) -> SocketAddrV4 {
        self.deployment.nodes[i].address
    }

    pub fn bundle(&self, i: usize, epoch: u64) -> PolicyBundle {
        let body = match &self.overrides[i] {
            Some(b) if b.epoch == epoch => b.clone(),
            _ => self.deployment.bodies(&self.edges, epoch).swap_remove(i),
        };
        self.deployment.sign(body)
    }

    pub fn write_policy(&self, i: usize, epoch: u64) -> CliResult<PathBuf> {
        let name = &self.deployment.nodes[i].name;
        self.deployment.write_bundle(name, &self.bundle(i, epoch), self.dir())
    }

    /// Starts every planned node at epoch 1.
    pub fn spawn_all(&mut self) -> CliResult<()> {
        for i in 0..self.deployment.nodes.len() {
            let node = self.spawn(i)?;
            self.nodes.push(node);
        }
        Ok(())
    }

    fn spawn(&self, i: usize) -> CliResult<NodeProc> {
        let plan = &self.deployment.nodes[i];
        let identity = self.deployment.write_identity(i, self.dir())?;
        let policy = self.write_policy(i, 1)?;
        let plain = free_loopback_addr()?;
        let app = App::bind(plain)?;
        let control = self.dir().join(format!("{}.sock", plan.name));
        let mut cmd = Command::new(&self.opts.exe);
        cmd.arg("tunnel")
            .arg("run")
            .arg("--identity")
            .arg(&identity)
            .arg("--policy")
            .arg(&policy)
            .arg("--bind")
            .arg(plan.address.to_string())
            .arg("--plain")
            .arg(plain.to_string())
            .arg("--app")
            .arg(app.local_addr().to_string())
            .arg("--control")
            .arg(&control);
        let o = &self.node_opts[i];
        if let Some(l) = o.lanes {
            cmd.arg("--lanes").arg(l.to_string());
        }
        if let Some(t) = o.rekey_threshold {
            cmd.arg("--rekey-threshold").arg(t.to_string());
        }
        for (peer, via) in &o.routes {
            cmd.arg("--route").arg(format!("{}={via}", self.addr(*peer)));
        }
        let mut child = cmd
            .env_remove("JANUS_SEED")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| CliError::Transport(format!("spawn {}: {e}", self.opts.exe.display())))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut line = String::new();
            let _ = BufReader::new(stdout).read_line(&mut line);
            let _ = tx.send(line);
        });
        let proc = NodeProc {
            name: plan.name.clone(),
            net: plan.address,
            plain,
            control,
            app,
            child,
        };
        match rx.recv_timeout(Duration::from_secs(15)) {
            Ok(line) if line.contains("\"net\"") => Ok(proc),
            Ok(line) => Err(CliError::Transport(format!("{} did not start: {line:?}", plan.name))),
            Err(_) => Err(CliError::Transport(format!("{} did not report ready", plan.name))),
        }
    }
}
