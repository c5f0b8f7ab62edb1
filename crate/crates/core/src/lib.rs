//! Transparent FPGA acceleration runtime model.
//!
//! A dataflow-graph frontend places annotated ops on agents through a
//! kernel registry, dispatches FPGA work through HSA-style queues and
//! signals, and executes it on a simulated partially reconfigurable FPGA
//! with LRU region management. Every overhead and compute cost is recorded
//! in a [`TimelineReport`].

pub mod device;
pub mod graph;
pub mod hsa;
pub mod kernels;
pub mod metrics;
pub mod ratio;
pub mod resources;

pub use device::{FpgaDevice, Manifest, Role, RoleId};
pub use graph::{parse_graph, place, run, Annotation, Graph, GraphError, GraphNode, NodeOp, Placement, RunMode, RunOutput};
pub use hsa::{Agent, AgentId, AgentKind, KernelRegistry, Runtime, Topology};
pub use kernels::{DType, FixedWeights, OpType, Tensor};
pub use metrics::{Calibration, CostConstants, Layer, TimelineReport};
pub use ratio::Rate;
pub use resources::ResourceVector;
