use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use super::{
    Agent, AgentId, AgentKind, DispatchPacket, HsaError, KernelBody, KernelId, KernelObject, KernelRegistry,
    OverflowPolicy, PacketId, Queue, Signal, Topology, TopologyError,
};
use crate::device::{CycleEvent, FpgaDevice, LoadOutcome};
use crate::kernels::Tensor;
use crate::metrics::{Calibration, Category, CostConstants, TimelineReport};
use crate::ratio::Rate;

pub const DEFAULT_QUEUE_DEPTH: u32 = 64;
const MAX_QUEUE_DEPTH: u32 = 1 << 16;

/// How long [`Runtime::dispatch`] waits on a completion signal.
const DISPATCH_WAIT: Duration = Duration::from_secs(30);

/// Outcome of a retired packet (or of a direct CPU execution).
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub packet: Option<PacketId>,
    pub agent: AgentId,
    pub output: Tensor,
    pub compute_cycles: u64,
    pub trace: Vec<CycleEvent>,
    pub load: Option<LoadOutcome>,
}

/// One runtime session: agents, kernels, device state and the cost sink.
///
/// All methods take `&self`; the runtime can be shared across threads.
/// Device state is serialized per FPGA agent and report events are
/// serialized through a single sink.
pub struct Runtime {
    agents: Vec<Agent>,
    registry: KernelRegistry,
    costs: CostConstants,
    calibration: Calibration,
    policy: OverflowPolicy,
    devices: BTreeMap<AgentId, Mutex<FpgaDevice>>,
    default_queues: Mutex<BTreeMap<AgentId, Arc<Queue>>>,
    sink: Mutex<TimelineReport>,
    results: Mutex<HashMap<PacketId, Result<Completion, HsaError>>>,
    next_packet: AtomicU64,
    next_queue: AtomicU64,
}

impl std::fmt::Debug for Runtime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runtime")
            .field("agents", &self.agents)
            .field("costs", &self.costs)
            .finish_non_exhaustive()
    }
}

impl Runtime {
    pub fn new(topology: &Topology, registry: KernelRegistry, calibration: Calibration) -> Result<Self, HsaError> {
        topology.validate()?;
        let mut devices = BTreeMap::new();
        for cfg in topology.agents.iter().filter(|a| a.kind == AgentKind::Fpga) {
            let mut dev = FpgaDevice::new(cfg.shell(), cfg.capacity(), cfg.regions())?;
            for role_id in &cfg.preload {
                let role = registry
                    .get(&KernelId::new(role_id.as_str()))
                    .and_then(KernelObject::role)
                    .ok_or_else(|| TopologyError::UnknownPreload { agent: cfg.id.clone(), role: role_id.clone() })?;
                dev.preload(role)?;
            }
            devices.insert(cfg.id.clone(), Mutex::new(dev));
        }
        Ok(Self {
            agents: topology.enumerate(),
            registry,
            costs: topology.costs,
            calibration,
            policy: topology.queue_policy,
            devices,
            default_queues: Mutex::new(BTreeMap::new()),
            sink: Mutex::new(TimelineReport::new()),
            results: Mutex::new(HashMap::new()),
            next_packet: AtomicU64::new(1),
            next_queue: AtomicU64::new(1),
        })
    }

    /// Default topology, default manifest kernels and default calibration.
    pub fn with_defaults() -> Self {
        let manifest = crate::device::Manifest::default();
        let registry = KernelRegistry::from_manifest(&manifest).expect("default manifest is valid");
        Self::new(&Topology::default(), registry, Calibration::default()).expect("default topology is valid")
    }

    /// All agents: CPUs first, then FPGAs, each ordered by id.
    pub fn enumerate_agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn agent(&self, id: &AgentId) -> Option<&Agent> {
        self.agents.iter().find(|a| &a.id == id)
    }

    pub fn first_agent(&self, kind: AgentKind) -> Option<&Agent> {
        self.agents.iter().find(|a| a.kind == kind)
    }

    pub fn registry(&self) -> &KernelRegistry {
        &self.registry
    }

    pub fn costs(&self) -> &CostConstants {
        &self.costs
    }

    fn sink(&self) -> MutexGuard<'_, TimelineReport> {
        self.sink.lock().expect("report sink poisoned")
    }

    /// Snapshot of the session report.
    pub fn report(&self) -> TimelineReport {
        self.sink().clone()
    }

    pub fn event_count(&self) -> usize {
        self.sink().events.len()
    }

    /// Report covering only the events recorded after the first `start`.
    pub fn report_since(&self, start: usize) -> TimelineReport {
        let sink = self.sink();
        TimelineReport::from_events(sink.events[start.min(sink.events.len())..].iter().cloned())
    }

    /// Copy of an FPGA agent's device state.
    pub fn device_snapshot(&self, agent: &AgentId) -> Option<FpgaDevice> {
        self.devices.get(agent).map(|d| d.lock().expect("device poisoned").clone())
    }

    /// Sum of reconfigurations over all FPGA agents.
    pub fn total_reconfigs(&self) -> u64 {
        self.devices.values().map(|d| d.lock().expect("device poisoned").reconfig_count()).sum()
    }

    /// Create a user-mode queue. The first queue of the session pays the
    /// device/kernel setup cost.
    pub fn create_queue(&self, agent: &AgentId, depth: u32) -> Result<Arc<Queue>, HsaError> {
        let a = self.agent(agent).ok_or_else(|| HsaError::UnknownAgent(agent.clone()))?;
        if depth == 0 || depth > MAX_QUEUE_DEPTH || !depth.is_power_of_two() {
            return Err(HsaError::InvalidDepth(depth));
        }
        {
            let mut sink = self.sink();
            if !sink.setup_charged() {
                sink.charge_for(Some(agent.as_str()), Category::Setup, self.costs.setup_us(), "device/kernel setup")?;
            }
        }
        let id = self.next_queue.fetch_add(1, Ordering::Relaxed);
        Ok(Arc::new(Queue::new(id, agent.clone(), a.kind, depth, self.policy)))
    }

    /// The queue [`Runtime::dispatch`] uses for `agent`, created on first use.
    pub fn default_queue(&self, agent: &AgentId) -> Result<Arc<Queue>, HsaError> {
        let mut queues = self.default_queues.lock().expect("queue map poisoned");
        if let Some(q) = queues.get(agent) {
            return Ok(q.clone());
        }
        let q = self.create_queue(agent, DEFAULT_QUEUE_DEPTH)?;
        queues.insert(agent.clone(), q.clone());
        Ok(q)
    }

    /// Enqueue `packet`, charging one dispatch latency.
    pub fn submit(&self, queue: &Queue, packet: DispatchPacket) -> Result<PacketId, HsaError> {
        let kernel = self
            .registry
            .get(&packet.kernel)
            .ok_or_else(|| HsaError::UnknownKernel(packet.kernel.clone()))?;
        if kernel.device_kind != queue.agent_kind() {
            return Err(HsaError::DeviceKindMismatch {
                kernel: kernel.id.clone(),
                kernel_kind: kernel.device_kind,
                queue_kind: queue.agent_kind(),
                agent: queue.agent().clone(),
            });
        }
        queue.push(packet, |p| {
            p.id = PacketId(self.next_packet.fetch_add(1, Ordering::Relaxed));
            let mut sink = self.sink();
            p.enqueue_time_us = sink.clock_us;
            let detail = format!("{} {}", p.label, p.id);
            sink.charge_for(Some(queue.agent().as_str()), Category::Dispatch, self.costs.dispatch_us(), detail)?;
            Ok(())
        })
    }

    /// Retire the oldest pending packet of `queue`, if any.
    ///
    /// Execution failures are stored as the packet's result; the completion
    /// signal is decremented either way.
    pub fn process_next(&self, queue: &Queue) -> Option<PacketId> {
        let _order = queue.exec_guard();
        let packet = queue.pop()?;
        let outcome = self.execute(queue.agent(), &packet);
        let id = packet.id;
        self.results.lock().expect("results poisoned").insert(id, outcome);
        queue.mark_retired(id);
        packet.completion.complete_one();
        Some(id)
    }

    /// Retire every pending packet, in order.
    pub fn drain(&self, queue: &Queue) -> Vec<PacketId> {
        std::iter::from_fn(|| self.process_next(queue)).collect()
    }

    /// Remove and return the result of a retired packet.
    pub fn take_result(&self, packet: PacketId) -> Option<Result<Completion, HsaError>> {
        self.results.lock().expect("results poisoned").remove(&packet)
    }

    /// Submit one packet to `agent`'s default queue, retire it and return
    /// its result.
    pub fn dispatch(&self, agent: &AgentId, kernel: &KernelId, args: Vec<Tensor>, label: &str) -> Result<Completion, HsaError> {
        let queue = self.default_queue(agent)?;
        let signal = Signal::new(1);
        let packet = DispatchPacket::new(kernel.clone(), args, signal.clone()).with_label(label);
        let id = self.submit(&queue, packet)?;
        self.drain(&queue);
        signal.wait_le(0, DISPATCH_WAIT)?;
        self.take_result(id).ok_or(HsaError::MissingResult(id))?
    }

    /// Run a CPU kernel in the caller's context, without a queue or
    /// dispatch charge. Compute cycles are still reported.
    pub fn execute_local(&self, agent: &AgentId, kernel: &KernelId, args: &[Tensor], label: &str) -> Result<Completion, HsaError> {
        let k = self.registry.get(kernel).ok_or_else(|| HsaError::UnknownKernel(kernel.clone()))?;
        let a = self.agent(agent).ok_or_else(|| HsaError::UnknownAgent(agent.clone()))?;
        if k.device_kind != AgentKind::Cpu || a.kind != AgentKind::Cpu {
            return Err(HsaError::DeviceKindMismatch {
                kernel: k.id.clone(),
                kernel_kind: k.device_kind,
                queue_kind: a.kind,
                agent: agent.clone(),
            });
        }
        self.run_software(agent, k, args, label, None)
    }

    fn execute(&self, agent: &AgentId, packet: &DispatchPacket) -> Result<Completion, HsaError> {
        let kernel = self
            .registry
            .get(&packet.kernel)
            .ok_or_else(|| HsaError::UnknownKernel(packet.kernel.clone()))?;
        match &kernel.body {
            KernelBody::Software(_) => self.run_software(agent, kernel, &packet.args, &packet.label, Some(packet.id)),
            KernelBody::Bitstream(role) => {
                let reference = self.registry.reference(&kernel.op_type)?;
                let device = self.devices.get(agent).ok_or_else(|| HsaError::UnknownAgent(agent.clone()))?;
                let mut device = device.lock().expect("device poisoned");
                let load = device.ensure_loaded(role)?;
                if load.reconfigured {
                    let detail = match &load.evicted {
                        Some(old) => format!("{} -> region {} (evicted {old})", role.id, load.region),
                        None => format!("{} -> region {}", role.id, load.region),
                    };
                    self.sink()
                        .charge_for(Some(agent.as_str()), Category::Reconfig, self.costs.reconfig_us, detail)?;
                }
                let exec = device.execute_role(load.region, role, &reference, &packet.args)?;
                self.sink()
                    .charge_for(Some(agent.as_str()), Category::Compute, exec.compute_cycles, packet.label.clone())?;
                Ok(Completion {
                    packet: Some(packet.id),
                    agent: agent.clone(),
                    output: exec.output,
                    compute_cycles: exec.compute_cycles,
                    trace: exec.trace,
                    load: Some(load),
                })
            }
        }
    }

    fn run_software(
        &self,
        agent: &AgentId,
        kernel: &KernelObject,
        args: &[Tensor],
        label: &str,
        packet: Option<PacketId>,
    ) -> Result<Completion, HsaError> {
        let reference = self.registry.reference(&kernel.op_type)?;
        let eval = reference.evaluate(args)?;
        // uncalibrated custom ops cost one cycle per element
        let rate = self.calibration.cpu_rate(&kernel.op_type).unwrap_or(Rate::integer(1));
        let compute_cycles = rate.ceil_mul(eval.output.len() as u64);
        self.sink()
            .charge_for(Some(agent.as_str()), Category::Compute, compute_cycles, label.to_owned())?;
        Ok(Completion {
            packet,
            agent: agent.clone(),
            output: eval.output,
            compute_cycles,
            trace: Vec::new(),
            load: None,
        })
    }
}
