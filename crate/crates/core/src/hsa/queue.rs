use std::collections::VecDeque;
use std::fmt;
use std::sync::{Condvar, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use super::{AgentId, AgentKind, HsaError, KernelId, Signal};
use crate::kernels::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PacketId(pub u64);

impl fmt::Display for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// What a submitter does when the queue is full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverflowPolicy {
    /// Wait until a packet retires.
    #[default]
    Block,
    /// Fail with [`HsaError::QueueFull`].
    Error,
}

#[derive(Debug, Clone)]
pub struct DispatchPacket {
    /// Assigned on submission.
    pub id: PacketId,
    pub kernel: KernelId,
    pub args: Vec<Tensor>,
    pub completion: Signal,
    /// Simulated clock at submission, assigned on submission.
    pub enqueue_time_us: u64,
    /// Free-form tag carried into report events (graph runs use the node id).
    pub label: String,
}

impl DispatchPacket {
    pub fn new(kernel: KernelId, args: Vec<Tensor>, completion: Signal) -> Self {
        let label = kernel.to_string();
        Self { id: PacketId(0), kernel, args, completion, enqueue_time_us: 0, label }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

#[derive(Debug, Default)]
struct State {
    pending: VecDeque<DispatchPacket>,
    destroyed: bool,
    retired: Vec<PacketId>,
}

/// In-order user-mode queue bound to one agent.
///
/// Any number of threads may submit; submissions are totally ordered by the
/// queue lock, and packets retire in that order.
#[derive(Debug)]
pub struct Queue {
    id: u64,
    agent: AgentId,
    kind: AgentKind,
    depth: u32,
    policy: OverflowPolicy,
    state: Mutex<State>,
    not_full: Condvar,
    /// Held across pop-execute-retire so retirement order matches pop order.
    exec: Mutex<()>,
}

impl Queue {
    pub(crate) fn new(id: u64, agent: AgentId, kind: AgentKind, depth: u32, policy: OverflowPolicy) -> Self {
        Self {
            id,
            agent,
            kind,
            depth,
            policy,
            state: Mutex::new(State::default()),
            not_full: Condvar::new(),
            exec: Mutex::new(()),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn agent(&self) -> &AgentId {
        &self.agent
    }

    pub fn agent_kind(&self) -> AgentKind {
        self.kind
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn policy(&self) -> OverflowPolicy {
        self.policy
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().expect("queue poisoned")
    }

    pub fn pending_len(&self) -> usize {
        self.lock().pending.len()
    }

    /// Packet ids in retirement order.
    pub fn retired(&self) -> Vec<PacketId> {
        self.lock().retired.clone()
    }

    pub fn is_destroyed(&self) -> bool {
        self.lock().destroyed
    }

    /// Refuse further submissions and wake blocked submitters. Pending
    /// packets can still be drained.
    pub fn destroy(&self) {
        self.lock().destroyed = true;
        self.not_full.notify_all();
    }

    /// Append `packet`, calling `accept` on it while the queue lock is held
    /// and space is guaranteed.
    pub(crate) fn push(
        &self,
        mut packet: DispatchPacket,
        accept: impl FnOnce(&mut DispatchPacket) -> Result<(), HsaError>,
    ) -> Result<PacketId, HsaError> {
        let mut st = self.lock();
        loop {
            if st.destroyed {
                return Err(HsaError::QueueDestroyed(self.id));
            }
            if st.pending.len() < self.depth as usize {
                break;
            }
            match self.policy {
                OverflowPolicy::Error => {
                    return Err(HsaError::QueueFull { queue: self.id, depth: self.depth })
                }
                OverflowPolicy::Block => st = self.not_full.wait(st).expect("queue poisoned"),
            }
        }
        accept(&mut packet)?;
        let id = packet.id;
        st.pending.push_back(packet);
        Ok(id)
    }

    pub(crate) fn exec_guard(&self) -> MutexGuard<'_, ()> {
        self.exec.lock().expect("queue poisoned")
    }

    pub(crate) fn pop(&self) -> Option<DispatchPacket> {
        let p = self.lock().pending.pop_front();
        if p.is_some() {
            self.not_full.notify_one();
        }
        p
    }

    pub(crate) fn mark_retired(&self, id: PacketId) {
        self.lock().retired.push(id);
    }
}
