use std::collections::BTreeMap;

use serde::Serialize;

use super::{Annotation, Graph, GraphError};
use crate::hsa::{Agent, AgentId, AgentKind, KernelId, KernelRegistry};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodePlacement {
    pub agent: AgentId,
    pub kernel: KernelId,
    /// FPGA was requested but no FPGA kernel (or agent) was available.
    pub fallback: bool,
}

/// Agent and kernel for every compute node.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Placement {
    pub nodes: BTreeMap<String, NodePlacement>,
}

impl Placement {
    pub fn get(&self, node: &str) -> Option<&NodePlacement> {
        self.nodes.get(node)
    }

    pub fn fallbacks(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().filter(|(_, p)| p.fallback).map(|(id, _)| id.as_str())
    }
}

/// Resolve every compute node against the registry.
///
/// FPGA-annotated nodes go to the first FPGA agent when an FPGA kernel for
/// their op is registered, and otherwise fall back to the CPU. Everything
/// else runs on the first CPU agent. Every compute op must have a CPU kernel.
pub fn place(graph: &Graph, registry: &KernelRegistry, agents: &[Agent]) -> Result<Placement, GraphError> {
    let cpu = agents.iter().find(|a| a.kind == AgentKind::Cpu).ok_or(GraphError::NoCpuAgent)?;
    let fpga = agents.iter().find(|a| a.kind == AgentKind::Fpga);
    let mut nodes = BTreeMap::new();
    for (node, op) in graph.compute_nodes() {
        let cpu_kernel = registry
            .lookup_kernel(op, AgentKind::Cpu)
            .ok_or_else(|| GraphError::NoCpuKernel(op.clone()))?;
        let on_fpga = match (node.annotation, fpga) {
            (Annotation::Fpga, Some(agent)) => registry.lookup_kernel(op, AgentKind::Fpga).map(|k| (agent, k)),
            _ => None,
        };
        let placement = match on_fpga {
            Some((agent, kernel)) => NodePlacement { agent: agent.id.clone(), kernel: kernel.id.clone(), fallback: false },
            None => NodePlacement {
                agent: cpu.id.clone(),
                kernel: cpu_kernel.id.clone(),
                fallback: node.annotation == Annotation::Fpga,
            },
        };
        nodes.insert(node.id.clone(), placement);
    }
    Ok(Placement { nodes })
}
