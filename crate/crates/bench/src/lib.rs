//! Shared fixtures for the criterion benches.

use hsaflow::graph::{Annotation, Graph, GraphNode, NodeOp};
use hsaflow::kernels::{DType, FixedWeights, OpType, Tensor};
use hsaflow::{Rate, ResourceVector, Role};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `count` small roles that never exhaust the default capacity.
pub fn roles(count: usize) -> Vec<Role> {
    (0..count)
        .map(|i| Role::new(format!("r{i}"), OpType::Custom(format!("OP{i}")), ResourceVector::new(100, 100, 1, 1), Rate::integer(1)))
        .collect()
}

pub fn access_sequence(len: usize, alphabet: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng(seed);
    (0..len).map(|_| rng.gen_range(0..alphabet)).collect()
}

pub fn fc_operands(m: usize, k: usize, n: usize, seed: u64) -> [Tensor; 3] {
    let mut rng = rng(seed);
    [
        Tensor::random(DType::F32, vec![m, k], &mut rng),
        Tensor::random(DType::F32, vec![k, n], &mut rng),
        Tensor::random(DType::F32, vec![n], &mut rng),
    ]
}

pub fn conv_operands(h: usize, w: usize, seed: u64) -> (Tensor, FixedWeights) {
    let mut rng = rng(seed);
    (Tensor::random(DType::I16, vec![h, w], &mut rng), FixedWeights::seeded([1, 5, 5], seed, 6))
}

/// Chain of `len` FPGA-annotated fully connected layers of width `d`.
pub fn fc_chain(len: usize, d: usize, seed: u64) -> Graph {
    let [x, w, b] = fc_operands(4, d, d, seed);
    let mut nodes = vec![
        GraphNode::new("x", NodeOp::Input, &[]).with_value(x),
        GraphNode::new("w", NodeOp::Const, &[]).with_value(w),
        GraphNode::new("b", NodeOp::Const, &[]).with_value(b),
    ];
    let mut prev = "x".to_string();
    for i in 0..len {
        let op = if i % 2 == 0 { OpType::FcF32 } else { OpType::FcF32Barrier };
        let id = format!("fc{i:03}");
        nodes.push(GraphNode::new(&id, NodeOp::Compute(op), &[&prev, "w", "b"]).on(Annotation::Fpga));
        prev = id;
    }
    nodes.push(GraphNode::new("y", NodeOp::Output, &[&prev]));
    Graph::from_nodes(nodes).expect("chain is a DAG")
}
