//! HSA-style runtime substrate.
//!
//! Agents are the dispatch targets, queues carry [`DispatchPacket`]s to an
//! agent, and [`Signal`]s report packet completion. The [`KernelRegistry`]
//! maps `(op type, device kind)` to a software function or a bitstream role.

mod queue;
mod registry;
mod runtime;
mod signal;
mod topology;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{DeviceError, ManifestError};
use crate::kernels::{KernelError, OpType};
use crate::metrics::MetricsError;
use crate::resources::ResourceVector;

pub use queue::{DispatchPacket, OverflowPolicy, PacketId, Queue};
pub use registry::{KernelBody, KernelId, KernelObject, KernelRegistry, SoftwareFn};
pub use runtime::{Completion, Runtime, DEFAULT_QUEUE_DEPTH};
pub use signal::{Signal, SignalId};
pub use topology::{AgentConfig, Topology, TopologyError};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        AgentId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        AgentId(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Cpu,
    Fpga,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Cpu => "cpu",
            AgentKind::Fpga => "fpga",
        })
    }
}

/// A dispatch target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Agent {
    pub id: AgentId,
    pub kind: AgentKind,
    pub name: String,
    /// Programmable-logic capacity; zero for CPUs.
    pub capacity: ResourceVector,
    /// Reconfigurable regions; zero for CPUs.
    pub regions: usize,
}

#[derive(Debug, Error)]
pub enum HsaError {
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("invalid queue depth {0}: must be a power of two in 1..=65536")]
    InvalidDepth(u32),
    #[error("a kernel for {op} on {kind} is already registered")]
    DuplicateRegistration { op: OpType, kind: AgentKind },
    #[error("kernel id {0} is already registered")]
    DuplicateKernelId(KernelId),
    #[error("kernel {kernel}: {kind} kernels need a {expected} body")]
    VariantMismatch { kernel: KernelId, kind: AgentKind, expected: &'static str },
    #[error("unknown kernel {0}")]
    UnknownKernel(KernelId),
    #[error("queue {queue} is full ({depth} packets)")]
    QueueFull { queue: u64, depth: u32 },
    #[error("queue {0} has been destroyed")]
    QueueDestroyed(u64),
    #[error("kernel {kernel} targets {kernel_kind} but queue belongs to {queue_kind} agent {agent}")]
    DeviceKindMismatch {
        kernel: KernelId,
        kernel_kind: AgentKind,
        queue_kind: AgentKind,
        agent: AgentId,
    },
    #[error("signal wait timed out at value {value}")]
    Timeout { value: i64 },
    #[error("no fixed weights registered for {0}")]
    MissingWeights(OpType),
    #[error("weights for {op} must have shape {expected:?}, got {got:?}")]
    WeightShape { op: OpType, expected: [usize; 3], got: Vec<usize> },
    #[error("no kernel implementation for {0}")]
    NoImplementation(OpType),
    #[error("packet {0} has no recorded result")]
    MissingResult(PacketId),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}
