use std::collections::BTreeMap;
use std::str::FromStr;
use std::thread;

use super::{Graph, GraphError, GraphNode, NodeOp, Placement};
use crate::hsa::{AgentId, AgentKind, Runtime};
use crate::kernels::Tensor;
use crate::metrics::TimelineReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RunMode {
    /// One node at a time in topological order.
    #[default]
    Deterministic,
    /// Independent nodes on different agents run on separate threads.
    Concurrent,
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deterministic" => Ok(RunMode::Deterministic),
            "concurrent" => Ok(RunMode::Concurrent),
            other => Err(format!("unknown mode {other:?} (expected deterministic or concurrent)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Tensors reaching OUTPUT nodes, by node id.
    pub outputs: BTreeMap<String, Tensor>,
    /// Costs charged during this run only.
    pub report: TimelineReport,
    pub reconfigs: u64,
}

/// Execute `graph` on `runtime`. `inputs` supplies INPUT node values by id;
/// INPUT nodes without an entry use their default `value`.
pub fn run(
    graph: &Graph,
    placement: &Placement,
    runtime: &Runtime,
    inputs: &BTreeMap<String, Tensor>,
    mode: RunMode,
) -> Result<RunOutput, GraphError> {
    let start = runtime.event_count();
    let reconfigs_before = runtime.total_reconfigs();
    let mut values: BTreeMap<String, Tensor> = BTreeMap::new();

    match mode {
        RunMode::Deterministic => {
            for node in graph.topo_order() {
                let t = eval_node(node, placement, runtime, inputs, &values)?;
                values.insert(node.id.clone(), t);
            }
        }
        RunMode::Concurrent => {
            for level in levels(graph) {
                let mut groups: BTreeMap<Option<AgentId>, Vec<&GraphNode>> = BTreeMap::new();
                for node in level {
                    let agent = placement.get(&node.id).map(|p| p.agent.clone());
                    groups.entry(agent).or_default().push(node);
                }
                let done = thread::scope(|s| {
                    let handles: Vec<_> = groups
                        .into_values()
                        .map(|nodes| {
                            let values = &values;
                            s.spawn(move || {
                                nodes
                                    .into_iter()
                                    .map(|n| eval_node(n, placement, runtime, inputs, values).map(|t| (n.id.clone(), t)))
                                    .collect::<Result<Vec<_>, _>>()
                            })
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("graph worker panicked"))
                        .collect::<Result<Vec<_>, _>>()
                })?;
                values.extend(done.into_iter().flatten());
            }
        }
    }

    let outputs = graph
        .nodes()
        .iter()
        .filter(|n| n.op == NodeOp::Output)
        .map(|n| (n.id.clone(), values[&n.id].clone()))
        .collect();
    Ok(RunOutput {
        outputs,
        report: runtime.report_since(start),
        reconfigs: runtime.total_reconfigs() - reconfigs_before,
    })
}

fn eval_node(
    node: &GraphNode,
    placement: &Placement,
    runtime: &Runtime,
    inputs: &BTreeMap<String, Tensor>,
    values: &BTreeMap<String, Tensor>,
) -> Result<Tensor, GraphError> {
    let arg = |i: usize| values[&node.inputs[i]].clone();
    match &node.op {
        NodeOp::Input => inputs
            .get(&node.id)
            .or(node.value.as_ref())
            .cloned()
            .ok_or_else(|| GraphError::MissingInput(node.id.clone())),
        NodeOp::Const => node.value.clone().ok_or_else(|| GraphError::BadAttr {
            node: node.id.clone(),
            message: "CONST has no value".into(),
        }),
        NodeOp::Output => Ok(arg(0)),
        NodeOp::Compute(_) => {
            let p = placement.get(&node.id).ok_or_else(|| GraphError::Unplaced { node: node.id.clone() })?;
            let args: Vec<Tensor> = (0..node.inputs.len()).map(arg).collect();
            let kind = runtime.agent(&p.agent).map(|a| a.kind);
            let done = match kind {
                Some(AgentKind::Fpga) => runtime.dispatch(&p.agent, &p.kernel, args, &node.id),
                _ => runtime.execute_local(&p.agent, &p.kernel, &args, &node.id),
            };
            done.map(|c| c.output)
                .map_err(|e| GraphError::Node { node: node.id.clone(), source: Box::new(e.into()) })
        }
    }
}

/// Nodes grouped by longest distance from a source, each level in
/// execution order.
fn levels(graph: &Graph) -> Vec<Vec<&GraphNode>> {
    let mut depth: BTreeMap<&str, usize> = BTreeMap::new();
    let mut out: Vec<Vec<&GraphNode>> = Vec::new();
    for node in graph.topo_order() {
        let d = node.inputs.iter().map(|i| depth[i.as_str()] + 1).max().unwrap_or(0);
        depth.insert(&node.id, d);
        if out.len() <= d {
            out.resize_with(d + 1, Vec::new);
        }
        out[d].push(node);
    }
    out
}
