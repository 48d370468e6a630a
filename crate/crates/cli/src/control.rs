//! Client for a tunnel's line-delimited JSON control socket.

use std::io::{BufRead, BufReader, Write};
use std::os::unix::net::UnixStream;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::{json, Value};

use janus_core::dataplane::tunnel::TunnelStats;

use crate::error::{CliError, CliResult};

pub struct ControlClient {
    path: PathBuf,
    reader: BufReader<UnixStream>,
    writer: UnixStream,
}

impl ControlClient {
    pub fn connect(path: &Path) -> CliResult<Self> {
        let stream = UnixStream::connect(path).map_err(|e| CliError::Transport(format!("{}: {e}", path.display())))?;
        stream.set_read_timeout(Some(Duration::from_secs(10)))?;
        Ok(Self {
            path: path.to_owned(),
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
        })
    }

    /// Sends one command and returns the raw reply.
    pub fn call(&mut self, cmd: &Value) -> CliResult<Value> {
        writeln!(self.writer, "{cmd}")?;
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(CliError::Transport(format!("{}: control socket closed", self.path.display())));
        }
        Ok(serde_json::from_str(&line)?)
    }

    /// Like `call`, but turns `{"ok": false}` into an error.
    pub fn ok(&mut self, cmd: &Value) -> CliResult<Value> {
        let reply = self.call(cmd)?;
        if reply.get("ok").and_then(Value::as_bool) == Some(true) {
            Ok(reply)
        } else {
            Err(CliError::Validation(
                reply.get("error").and_then(Value::as_str).unwrap_or("command failed").to_owned(),
            ))
        }
    }

    pub fn roll(&mut self, policy: &Path) -> CliResult<u64> {
        let reply = self.ok(&json!({"cmd": "roll", "policy_path": policy}))?;
        reply
            .get("active_epoch")
            .and_then(Value::as_u64)
            .ok_or_else(|| CliError::Transport("roll reply without active_epoch".into()))
    }

    pub fn stats(&mut self) -> CliResult<TunnelStats> {
        let reply = self.ok(&json!({"cmd": "stats"}))?;
        Ok(serde_json::from_value(reply["stats"].clone())?)
    }

    pub fn handshakes(&mut self) -> CliResult<Vec<Value>> {
        let reply = self.ok(&json!({"cmd": "handshakes"}))?;
        Ok(reply["handshakes"].as_array().cloned().unwrap_or_default())
    }

    pub fn stall_lane(&mut self, slot: u16, stalled: bool) -> CliResult<()> {
        self.ok(&json!({"cmd": "stall_lane", "lane": slot, "stalled": stalled})).map(|_| ())
    }

    pub fn shutdown(&mut self) -> CliResult<()> {
        self.ok(&json!({"cmd": "shutdown"})).map(|_| ())
    }
}
