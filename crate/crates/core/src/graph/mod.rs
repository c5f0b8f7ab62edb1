//! Dataflow graph frontend.
//!
//! A graph file lists nodes with their inputs and an optional device
//! annotation:
//!
//! ```json
//! { "nodes": [
//!     { "id": "x", "op": "INPUT", "attrs": { "dtype": "f32", "shape": [2, 4] } },
//!     { "id": "w", "op": "CONST", "attrs": { "value": "f32 4x4: 1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1" } },
//!     { "id": "b", "op": "CONST", "attrs": { "file": "bias.tensor" } },
//!     { "id": "fc", "op": "FC_F32", "inputs": ["x", "w", "b"], "device": "fpga" },
//!     { "id": "y", "op": "OUTPUT", "inputs": ["fc"] }
//! ] }
//! ```
//!
//! `value` holds a tensor literal; `file` names a literal file relative to
//! the graph file. INPUT nodes may carry a default `value`, or `dtype` and
//! `shape` so inputs can be synthesized from a seed.

mod exec;
mod place;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hsa::HsaError;
use crate::kernels::{parse_literal, DType, KernelError, LiteralError, OpType, Tensor};

pub use exec::{run, RunMode, RunOutput};
pub use place::{place, NodePlacement, Placement};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("duplicate node id {0}")]
    DuplicateNode(String),
    #[error("node {node} references missing input {input}")]
    UnresolvedInput { node: String, input: String },
    #[error("graph has a cycle through {}", .0.join(", "))]
    CycleDetected(Vec<String>),
    #[error("node {node} ({op}) takes {expected} input(s), got {got}")]
    BadArity { node: String, op: String, expected: usize, got: usize },
    #[error("node {node}: {message}")]
    BadAttr { node: String, message: String },
    #[error("node {node}: {source}")]
    Literal { node: String, source: LiteralError },
    #[error("no value supplied for input node {0}")]
    MissingInput(String),
    #[error("no CPU kernel registered for {0}")]
    NoCpuKernel(OpType),
    #[error("topology has no CPU agent")]
    NoCpuAgent,
    #[error("node {node} is not placed")]
    Unplaced { node: String },
    #[error("node {node}: {source}")]
    Node { node: String, source: Box<GraphError> },
    #[error(transparent)]
    Hsa(#[from] HsaError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeOp {
    Input,
    Const,
    Output,
    Compute(OpType),
}

impl NodeOp {
    pub fn as_str(&self) -> &str {
        match self {
            NodeOp::Input => "INPUT",
            NodeOp::Const => "CONST",
            NodeOp::Output => "OUTPUT",
            NodeOp::Compute(op) => op.as_str(),
        }
    }

    pub fn compute(&self) -> Option<&OpType> {
        match self {
            NodeOp::Compute(op) => Some(op),
            _ => None,
        }
    }
}

impl fmt::Display for NodeOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Device a node asks to run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Annotation {
    #[default]
    Unspecified,
    Cpu,
    Fpga,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub id: String,
    pub op: NodeOp,
    pub inputs: Vec<String>,
    pub annotation: Annotation,
    /// Parsed tensor for CONST nodes and INPUT defaults.
    pub value: Option<Tensor>,
    /// For synthesizing INPUT values.
    pub dtype: Option<DType>,
    pub shape: Option<Vec<usize>>,
}

impl GraphNode {
    pub fn new(id: impl Into<String>, op: NodeOp, inputs: &[&str]) -> Self {
        Self {
            id: id.into(),
            op,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            annotation: Annotation::Unspecified,
            value: None,
            dtype: None,
            shape: None,
        }
    }

    pub fn on(mut self, annotation: Annotation) -> Self {
        self.annotation = annotation;
        self
    }

    pub fn with_value(mut self, value: Tensor) -> Self {
        self.value = Some(value);
        self
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    nodes: Vec<RawNode>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    op: String,
    #[serde(default)]
    inputs: Vec<String>,
    #[serde(default)]
    device: Option<String>,
    #[serde(default)]
    attrs: BTreeMap<String, serde_json::Value>,
}

/// A validated DAG with a fixed execution order.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    nodes: Vec<GraphNode>,
    index: BTreeMap<String, usize>,
    order: Vec<usize>,
}

/// Parse and validate a graph file's text. `file` attributes resolve
/// against the current directory.
pub fn parse_graph(text: &str) -> Result<Graph, GraphError> {
    Graph::parse(text, None)
}

impl Graph {
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, GraphError> {
        let raw: RawGraph = serde_json::from_str(text).map_err(|e| GraphError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let nodes = raw
            .nodes
            .into_iter()
            .map(|n| convert_node(n, base_dir))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_nodes(nodes)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let text = read(path)?;
        Self::parse(&text, path.parent())
    }

    /// Validate `nodes` and fix the execution order: Kahn's algorithm,
    /// always taking the lexicographically smallest ready id.
    pub fn from_nodes(nodes: Vec<GraphNode>) -> Result<Self, GraphError> {
        let mut index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateNode(n.id.clone()));
            }
        }
        for n in &nodes {
            check_arity(n)?;
            if n.op == NodeOp::Const && n.value.is_none() {
                return Err(GraphError::BadAttr { node: n.id.clone(), message: "CONST needs a value or file".into() });
            }
            if let Some(missing) = n.inputs.iter().find(|i| !index.contains_key(*i)) {
                return Err(GraphError::UnresolvedInput { node: n.id.clone(), input: missing.clone() });
            }
        }

        let mut indegree: Vec<usize> = nodes.iter().map(|n| n.inputs.len()).collect();
        let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            for input in &n.inputs {
                consumers[index[input]].push(i);
            }
        }
        let mut ready: BTreeSet<(&str, usize)> = nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| indegree[*i] == 0)
            .map(|(i, n)| (n.id.as_str(), i))
            .collect();
        let mut order = Vec::with_capacity(nodes.len());
        while let Some((_, i)) = ready.pop_first() {
            order.push(i);
            for &c in &consumers[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert((nodes[c].id.as_str(), c));
                }
            }
        }
        if order.len() != nodes.len() {
            let scheduled: BTreeSet<usize> = order.iter().copied().collect();
            let mut stuck: Vec<String> = (0..nodes.len())
                .filter(|i| !scheduled.contains(i))
                .map(|i| nodes[i].id.clone())
                .collect();
            stuck.sort();
            return Err(GraphError::CycleDetected(stuck));
        }
        Ok(Self { nodes, index, order })
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in execution order.
    pub fn topo_order(&self) -> impl Iterator<Item = &GraphNode> {
        self.order.iter().map(|&i| &self.nodes[i])
    }

    pub fn compute_nodes(&self) -> impl Iterator<Item = (&GraphNode, &OpType)> {
        self.topo_order().filter_map(|n| n.op.compute().map(|op| (n, op)))
    }

    /// Copy of the graph with every annotation rewritten by `f`.
    pub fn with_annotations(&self, f: impl Fn(&GraphNode) -> Annotation) -> Graph {
        let mut g = self.clone();
        for n in &mut g.nodes {
            n.annotation = f(n);
        }
        g
    }

    /// Fill in INPUT values not present in `provided`: the node's default
    /// `value` if it has one, else a random tensor of its `dtype`/`shape`
    /// drawn from `seed`. Inputs are visited in id order.
    pub fn synthesize_inputs(
        &self,
        provided: &BTreeMap<String, Tensor>,
        seed: u64,
    ) -> Result<BTreeMap<String, Tensor>, GraphError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = provided.clone();
        for (id, &i) in &self.index {
            let n = &self.nodes[i];
            if n.op != NodeOp::Input || out.contains_key(id) {
                continue;
            }
            let t = match (&n.value, n.dtype, &n.shape) {
                (Some(v), _, _) => v.clone(),
                (None, Some(dtype), Some(shape)) => Tensor::random(dtype, shape.clone(), &mut rng),
                _ => return Err(GraphError::MissingInput(id.clone())),
            };
            out.insert(id.clone(), t);
        }
        Ok(out)
    }
}

fn read(path: &Path) -> Result<String, GraphError> {
    std::fs::read_to_string(path).map_err(|source| GraphError::Io { path: path.display().to_string(), source })
}

fn check_arity(n: &GraphNode) -> Result<(), GraphError> {
    let expected = match &n.op {
        NodeOp::Input | NodeOp::Const => Some(0),
        NodeOp::Output => Some(1),
        NodeOp::Compute(op) => op.arity(),
    };
    match expected {
        Some(e) if e != n.inputs.len() => Err(GraphError::BadArity {
            node: n.id.clone(),
            op: n.op.to_string(),
            expected: e,
            got: n.inputs.len(),
        }),
        _ => Ok(()),
    }
}

fn convert_node(raw: RawNode, base_dir: Option<&Path>) -> Result<GraphNode, GraphError> {
    let bad = |message: String| GraphError::BadAttr { node: raw.id.clone(), message };
    let op = match raw.op.as_str() {
        "INPUT" => NodeOp::Input,
        "CONST" => NodeOp::Const,
        "OUTPUT" => NodeOp::Output,
        other => NodeOp::Compute(other.parse().map_err(|e: crate::kernels::OpTypeParseError| bad(e.to_string()))?),
    };
    let annotation = match raw.device.as_deref() {
        None => Annotation::Unspecified,
        Some(d) if d.eq_ignore_ascii_case("fpga") => Annotation::Fpga,
        Some(d) if d.eq_ignore_ascii_case("cpu") => Annotation::Cpu,
        Some(d) => return Err(bad(format!("unknown device {d:?}"))),
    };

    let literal = |text: &str| parse_literal(text).map_err(|source| GraphError::Literal { node: raw.id.clone(), source });
    let value = match (raw.attrs.get("value"), raw.attrs.get("file")) {
        (Some(_), Some(_)) => return Err(bad("give either value or file, not both".into())),
        (Some(serde_json::Value::String(s)), None) => Some(literal(s)?),
        (Some(_), None) => return Err(bad("value must be a tensor literal string".into())),
        (None, Some(serde_json::Value::String(f))) => {
            let path = base_dir.map_or_else(|| Path::new(f).to_path_buf(), |d| d.join(f));
            Some(literal(&read(&path)?)?)
        }
        (None, Some(_)) => return Err(bad("file must be a path string".into())),
        (None, None) => None,
    };
    let dtype = raw
        .attrs
        .get("dtype")
        .map(|v| serde_json::from_value::<DType>(v.clone()).map_err(|e| bad(format!("dtype: {e}"))))
        .transpose()?;
    let shape = raw
        .attrs
        .get("shape")
        .map(|v| serde_json::from_value::<Vec<usize>>(v.clone()).map_err(|e| bad(format!("shape: {e}"))))
        .transpose()?;

    Ok(GraphNode { id: raw.id, op, inputs: raw.inputs, annotation, value, dtype, shape })
}
