//! Feedback policies: passive, PD tracking, and the external-policy wire
//! client.
//!
//! External policies speak line-delimited JSON over a local stream socket or
//! a child process's stdio: request `{"obs": [floats]}`, reply
//! `{"act": [floats]}`, one request in flight per connection. Observations
//! are clipped to magnitude 10 before sending; replies are saturated to the
//! configured torque bound. A missed deadline or malformed reply is a
//! protocol error — zero torque is never substituted silently.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::os::unix::net::UnixStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observation entries are clipped to this magnitude before transmission.
pub const OBSERVATION_CLIP: f64 = 10.0;

/// Default torque saturation bound, N·m.
pub const DEFAULT_TORQUE_LIMIT: f64 = 100.0;

/// Default reply deadline for external policies, milliseconds.
pub const DEFAULT_DEADLINE_MS: u64 = 100;

fn default_torque_limit() -> f64 {
    DEFAULT_TORQUE_LIMIT
}

fn default_deadline_ms() -> u64 {
    DEFAULT_DEADLINE_MS
}

/// Where an external policy lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "transport", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Endpoint {
    /// TCP stream socket, e.g. `127.0.0.1:7133`.
    Tcp { addr: String },
    /// Unix domain stream socket.
    Unix { path: String },
    /// Child process speaking the protocol on stdin/stdout.
    Stdio {
        cmd: String,
        #[serde(default)]
        args: Vec<String>,
    },
}

/// Pluggable controller selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicyKind {
    /// No actuation; torques are identically zero.
    Passive,
    /// PD tracking with model-interpreted gains and setpoints.
    PdTracking { params: BTreeMap<String, f64> },
    /// Query an external policy server per control interval.
    External {
        endpoint: Endpoint,
        #[serde(default = "default_deadline_ms")]
        deadline_ms: u64,
    },
}

/// A controller selection plus its provenance id and torque bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: PolicyKind,
    /// Torque outputs saturate at ±this bound (N·m).
    #[serde(default = "default_torque_limit")]
    pub torque_limit: f64,
}

impl PolicySpec {
    pub fn passive(id: &str) -> Self {
        Self {
            id: id.into(),
            kind: PolicyKind::Passive,
            torque_limit: DEFAULT_TORQUE_LIMIT,
        }
    }

    pub fn pd(id: &str, params: BTreeMap<String, f64>) -> Self {
        Self {
            id: id.into(),
            kind: PolicyKind::PdTracking { params },
            torque_limit: DEFAULT_TORQUE_LIMIT,
        }
    }

    /// Validates gains and the torque bound.
    pub fn validate(&self) -> Result<()> {
        if !(self.torque_limit > 0.0) || !self.torque_limit.is_finite() {
            return Err(Error::InvalidInput(format!(
                "torque limit must be positive, got {}",
                self.torque_limit
            )));
        }
        if let PolicyKind::PdTracking { params } = &self.kind {
            for (k, v) in params {
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!("pd parameter {k} not finite")));
                }
                if (k.starts_with("kp") || k.starts_with("kd")) && *v < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "pd gain {k} must be >= 0, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Live controller state for one in-flight simulation.
///
/// Passive and PD controllers are stateless; an external runtime owns one
/// protocol connection for the duration of the simulation.
pub enum PolicyRuntime {
    Passive,
    Pd { params: BTreeMap<String, f64> },
    External(ExternalPolicyClient),
}

impl std::fmt::Debug for PolicyRuntime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Passive => write!(f, "PolicyRuntime::Passive"),
            Self::Pd { params } => write!(f, "PolicyRuntime::Pd({params:?})"),
            Self::External(_) => write!(f, "PolicyRuntime::External"),
        }
    }
}

impl PolicyRuntime {
    /// Instantiates a runtime, connecting to the endpoint for external policies.
    pub fn connect(spec: &PolicySpec) -> Result<Self> {
        spec.validate()?;
        match &spec.kind {
            PolicyKind::Passive => Ok(Self::Passive),
            PolicyKind::PdTracking { params } => Ok(Self::Pd {
                params: params.clone(),
            }),
            PolicyKind::External {
                endpoint,
                deadline_ms,
            } => Ok(Self::External(ExternalPolicyClient::connect(
                endpoint,
                Duration::from_millis(*deadline_ms),
            )?)),
        }
    }
}

/// Saturates every torque to ±limit.
pub fn saturate(torques: &mut [f64], limit: f64) {
    for t in torques.iter_mut() {
        *t = t.clamp(-limit, limit);
    }
}

/// Sends one observation and waits for the action reply.
pub fn external_policy_query(client: &mut ExternalPolicyClient, obs: &[f64]) -> Result<Vec<f64>> {
    client.query(obs)
}

#[derive(Serialize)]
struct ObsMsg<'a> {
    obs: &'a [f64],
}

#[derive(Serialize, Deserialize)]
struct ActMsg {
    act: Vec<f64>,
}

/// A connected external-policy channel. One request in flight at a time.
pub struct ExternalPolicyClient {
    transport: Transport,
    deadline: Duration,
}

enum Transport {
    Tcp {
        writer: TcpStream,
        reader: BufReader<TcpStream>,
    },
    Unix {
        writer: UnixStream,
        reader: BufReader<UnixStream>,
    },
    Child {
        child: Child,
        lines: mpsc::Receiver<std::io::Result<String>>,
    },
}

impl ExternalPolicyClient {
    pub fn connect(endpoint: &Endpoint, deadline: Duration) -> Result<Self> {
        let transport = match endpoint {
            Endpoint::Tcp { addr } => {
                let stream = TcpStream::connect(addr)
                    .map_err(|e| Error::Protocol(format!("connect {addr}: {e}")))?;
                stream.set_nodelay(true).ok();
                stream
                    .set_read_timeout(Some(deadline))
                    .map_err(|e| Error::Protocol(e.to_string()))?;
                let reader = BufReader::new(
                    stream
                        .try_clone()
                        .map_err(|e| Error::Protocol(e.to_string()))?,
                );
                Transport::Tcp {
                    writer: stream,
                    reader,
                }
            }
            Endpoint::Unix { path } => {
                let stream = UnixStream::connect(path)
                    .map_err(|e| Error::Protocol(format!("connect {path}: {e}")))?;
                stream
                    .set_read_timeout(Some(deadline))
                    .map_err(|e| Error::Protocol(e.to_string()))?;
                let reader = BufReader::new(
                    stream
                        .try_clone()
                        .map_err(|e| Error::Protocol(e.to_string()))?,
                );
                Transport::Unix {
                    writer: stream,
                    reader,
                }
            }
            Endpoint::Stdio { cmd, args } => {
                let mut child = Command::new(cmd)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()
                    .map_err(|e| Error::Protocol(format!("spawn {cmd}: {e}")))?;
                let stdout = child
                    .stdout
                    .take()
                    .ok_or_else(|| Error::Protocol("child has no stdout".into()))?;
                // Pipes have no read timeout; a reader thread feeds a channel
                // so the deadline can be enforced with recv_timeout.
                let (tx, rx) = mpsc::channel();
                std::thread::spawn(move || {
                    let reader = BufReader::new(stdout);
                    for line in reader.lines() {
                        if tx.send(line).is_err() {
                            break;
                        }
                    }
                });
                Transport::Child { child, lines: rx }
            }
        };
        Ok(Self {
            transport,
            deadline,
        })
    }

    /// One request/reply round trip. Observation entries are clipped to
    /// ±`OBSERVATION_CLIP` before sending.
    pub fn query(&mut self, obs: &[f64]) -> Result<Vec<f64>> {
        let clipped: Vec<f64> = obs
            .iter()
            .map(|o| o.clamp(-OBSERVATION_CLIP, OBSERVATION_CLIP))
            .collect();
        let mut msg = serde_json::to_string(&ObsMsg { obs: &clipped })
            .map_err(|e| Error::Protocol(e.to_string()))?;
        msg.push('\n');
        let line = match &mut self.transport {
            Transport::Tcp { writer, reader } => {
                writer
                    .write_all(msg.as_bytes())
                    .map_err(|e| Error::Protocol(format!("send: {e}")))?;
                read_line_deadline(reader)?
            }
            Transport::Unix { writer, reader } => {
                writer
                    .write_all(msg.as_bytes())
                    .map_err(|e| Error::Protocol(format!("send: {e}")))?;
                read_line_deadline(reader)?
            }
            Transport::Child { child, lines } => {
                let stdin = child
                    .stdin
                    .as_mut()
                    .ok_or_else(|| Error::Protocol("child stdin closed".into()))?;
                stdin
                    .write_all(msg.as_bytes())
                    .map_err(|e| Error::Protocol(format!("send: {e}")))?;
                stdin.flush().map_err(|e| Error::Protocol(e.to_string()))?;
                match lines.recv_timeout(self.deadline) {
                    Ok(Ok(line)) => line,
                    Ok(Err(e)) => return Err(Error::Protocol(format!("recv: {e}"))),
                    Err(_) => {
                        return Err(Error::Protocol(format!(
                            "deadline exceeded ({} ms)",
                            self.deadline.as_millis()
                        )))
                    }
                }
            }
        };
        let reply: ActMsg = serde_json::from_str(&line)
            .map_err(|e| Error::Protocol(format!("malformed reply {line:?}: {e}")))?;
        if reply.act.iter().any(|a| !a.is_finite()) {
            return Err(Error::Protocol("non-finite action in reply".into()));
        }
        Ok(reply.act)
    }
}

impl Drop for ExternalPolicyClient {
    fn drop(&mut self) {
        if let Transport::Child { child, .. } = &mut self.transport {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn read_line_deadline<R: BufRead>(reader: &mut R) -> Result<String> {
    let mut line = String::new();
    match reader.read_line(&mut line) {
        Ok(0) => Err(Error::Protocol("connection closed".into())),
        Ok(_) => Ok(line),
        Err(e)
            if e.kind() == std::io::ErrorKind::WouldBlock
                || e.kind() == std::io::ErrorKind::TimedOut =>
        {
            Err(Error::Protocol("deadline exceeded".into()))
        }
        Err(e) => Err(Error::Protocol(format!("recv: {e}"))),
    }
}

/// Hands out exclusive connection leases so parallel simulations never share
/// a connection.
pub struct ExternalPolicyPool {
    endpoint: Endpoint,
    deadline: Duration,
    idle: Mutex<Vec<ExternalPolicyClient>>,
}

impl ExternalPolicyPool {
    pub fn new(endpoint: Endpoint, deadline: Duration) -> Self {
        Self {
            endpoint,
            deadline,
            idle: Mutex::new(Vec::new()),
        }
    }

    /// Takes an idle connection or opens a new one.
    pub fn lease(&self) -> Result<PooledClient<'_>> {
        let existing = self.idle.lock().unwrap().pop();
        let client = match existing {
            Some(c) => c,
            None => ExternalPolicyClient::connect(&self.endpoint, self.deadline)?,
        };
        Ok(PooledClient {
            pool: self,
            client: Some(client),
        })
    }
}

/// Exclusive lease on one connection; returned to the pool on drop.
pub struct PooledClient<'a> {
    pool: &'a ExternalPolicyPool,
    client: Option<ExternalPolicyClient>,
}

impl PooledClient<'_> {
    pub fn client_mut(&mut self) -> &mut ExternalPolicyClient {
        self.client.as_mut().unwrap()
    }

    /// Takes ownership of the connection; the lease then returns nothing on
    /// drop until `put_back` restores it.
    pub fn take_client(&mut self) -> ExternalPolicyClient {
        self.client.take().unwrap()
    }

    pub fn put_back(&mut self, client: ExternalPolicyClient) {
        self.client = Some(client);
    }
}

impl Drop for PooledClient<'_> {
    fn drop(&mut self) {
        if let Some(c) = self.client.take() {
            self.pool.idle.lock().unwrap().push(c);
        }
    }
}
