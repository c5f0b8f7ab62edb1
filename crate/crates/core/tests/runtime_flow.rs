use std::collections::BTreeMap;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use hsaflow::graph::{place, run, Annotation, Graph, GraphNode, NodeOp, RunMode};
use hsaflow::hsa::{DispatchPacket, HsaError, KernelId, KernelObject, KernelRegistry, OverflowPolicy, Runtime, Signal, Topology};
use hsaflow::kernels::{KernelError, OpType, Tensor};
use hsaflow::metrics::Calibration;
use hsaflow::{AgentId, Manifest, Rate, ResourceVector, Role};

fn doubler() -> hsaflow::kernels::CustomFn {
    Arc::new(|args: &[Tensor]| {
        let [x] = args else {
            return Err(KernelError::Custom { name: "DOUBLE".into(), message: "takes one tensor".into() });
        };
        let data = x.as_f32()?.iter().map(|v| v * 2.0).collect();
        Tensor::f32(x.shape().to_vec(), data)
    })
}

fn custom_registry(with_fpga: bool) -> KernelRegistry {
    let mut reg = KernelRegistry::from_manifest(&Manifest::default()).unwrap();
    reg.register_kernel(KernelObject::custom_cpu("DOUBLE", doubler())).unwrap();
    if with_fpga {
        let role = Role::new("dbl", OpType::Custom("DOUBLE".into()), ResourceVector::new(1000, 1000, 2, 2), Rate::new(1, 2));
        reg.register_kernel(KernelObject::bitstream(role)).unwrap();
    }
    reg
}

fn double_graph() -> Graph {
    Graph::from_nodes(vec![
        GraphNode::new("x", NodeOp::Input, &[]).with_value(Tensor::f32(vec![3], vec![1.5, -2.0, 0.0]).unwrap()),
        GraphNode::new("d1", NodeOp::Compute(OpType::Custom("DOUBLE".into())), &["x"]).on(Annotation::Fpga),
        GraphNode::new("d2", NodeOp::Compute(OpType::Custom("DOUBLE".into())), &["d1"]).on(Annotation::Fpga),
        GraphNode::new("y", NodeOp::Output, &["d2"]),
    ])
    .unwrap()
}

#[test]
fn custom_op_runs_on_registered_role_and_on_fallback() {
    let topo = Topology::default();
    let mut outputs = Vec::new();
    for with_fpga in [true, false] {
        let rt = Runtime::new(&topo, custom_registry(with_fpga), Calibration::default()).unwrap();
        let g = double_graph();
        let p = place(&g, rt.registry(), rt.enumerate_agents()).unwrap();
        assert_eq!(p.fallbacks().count(), if with_fpga { 0 } else { 2 });
        let out = run(&g, &p, &rt, &BTreeMap::new(), RunMode::Deterministic).unwrap();
        if with_fpga {
            // 3 elements at 1/2 cycle each
            assert_eq!(out.report.compute_cycles["d1"], 2);
            assert_eq!(out.reconfigs, 1);
        }
        outputs.push(out.outputs["y"].clone());
    }
    assert_eq!(outputs[0].as_f32().unwrap(), &[6.0, -8.0, 0.0]);
    assert!(outputs[0].bits_eq(&outputs[1]));
}

#[test]
fn error_policy_rejects_full_queue() {
    let topo = Topology { queue_policy: OverflowPolicy::Error, ..Topology::default() };
    let rt = Runtime::new(&topo, KernelRegistry::from_manifest(&Manifest::default()).unwrap(), Calibration::default()).unwrap();
    let fpga = AgentId::from("fpga0");
    let q = rt.create_queue(&fpga, 2).unwrap();
    let args = || {
        vec![
            Tensor::f32(vec![1, 1], vec![2.0]).unwrap(),
            Tensor::f32(vec![1, 1], vec![3.0]).unwrap(),
            Tensor::f32(vec![1], vec![1.0]).unwrap(),
        ]
    };
    let signal = Signal::new(2);
    for _ in 0..2 {
        rt.submit(&q, DispatchPacket::new(KernelId::new("role1"), args(), signal.clone())).unwrap();
    }
    let err = rt.submit(&q, DispatchPacket::new(KernelId::new("role1"), args(), signal.clone())).unwrap_err();
    assert!(matches!(err, HsaError::QueueFull { depth: 2, .. }));
    // the rejected packet is not charged
    assert_eq!(rt.report().dispatch_events, 2);

    let retired = rt.drain(&q);
    signal.wait_le(0, Duration::from_secs(1)).unwrap();
    assert_eq!(q.retired(), retired);
    for id in retired {
        let c = rt.take_result(id).unwrap().unwrap();
        assert_eq!(c.output.as_f32().unwrap(), &[7.0]);
    }
}

#[test]
fn cpu_kernel_on_fpga_queue_is_rejected() {
    let rt = Runtime::with_defaults();
    let q = rt.create_queue(&AgentId::from("fpga0"), 4).unwrap();
    let packet = DispatchPacket::new(KernelId::new("cpu:FC_F32"), vec![], Signal::new(1));
    assert!(matches!(rt.submit(&q, packet), Err(HsaError::DeviceKindMismatch { .. })));
}

#[test]
fn threads_share_one_runtime() {
    let rt = Runtime::with_defaults();
    let fpga = AgentId::from("fpga0");
    let kernels = [KernelId::new("role1"), KernelId::new("role2")];
    thread::scope(|s| {
        for t in 0..4 {
            let (rt, fpga, kernel) = (&rt, &fpga, &kernels[t % 2]);
            s.spawn(move || {
                for i in 0..25 {
                    let v = (t * 100 + i) as f32;
                    let args = vec![
                        Tensor::f32(vec![1, 1], vec![v]).unwrap(),
                        Tensor::f32(vec![1, 1], vec![1.0]).unwrap(),
                        Tensor::f32(vec![1], vec![0.5]).unwrap(),
                    ];
                    let c = rt.dispatch(fpga, kernel, args, "worker").unwrap();
                    assert_eq!(c.output.as_f32().unwrap(), &[v + 0.5]);
                }
            });
        }
    });
    let report = rt.report();
    assert_eq!(report.setup_events, 1);
    assert_eq!(report.dispatch_events, 100);
    // two regions hold both roles after their first loads
    assert_eq!(rt.total_reconfigs(), 2);
    assert_eq!(report.events.windows(2).filter(|w| w[0].seq >= w[1].seq).count(), 0);
}

#[test]
fn conv_graph_with_file_weights_matches_cpu() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<String> = (0..200).map(|i| (i * 37 % 400 - 200).to_string()).collect();
    std::fs::write(dir.path().join("img.tensor"), format!("i16 10x20: {}\n", values.join(" "))).unwrap();
    let graph = r#"{ "nodes": [
        { "id": "img", "op": "CONST", "attrs": { "file": "img.tensor" } },
        { "id": "c5", "op": "CONV5x5_I16", "inputs": ["img"], "device": "fpga" },
        { "id": "c3", "op": "CONV3x3x2_I16", "inputs": ["c5"], "device": "fpga" },
        { "id": "out", "op": "OUTPUT", "inputs": ["c3"] }
    ] }"#;
    std::fs::write(dir.path().join("g.json"), graph).unwrap();
    let g = Graph::load(dir.path().join("g.json")).unwrap();

    let fpga_rt = Runtime::with_defaults();
    let p = place(&g, fpga_rt.registry(), fpga_rt.enumerate_agents()).unwrap();
    let on_fpga = run(&g, &p, &fpga_rt, &BTreeMap::new(), RunMode::Deterministic).unwrap();
    assert_eq!(on_fpga.outputs["out"].shape(), &[2, 4, 14]);
    assert_eq!(on_fpga.reconfigs, 2);

    let cpu_graph = g.with_annotations(|_| Annotation::Cpu);
    let cpu_rt = Runtime::with_defaults();
    let p = place(&cpu_graph, cpu_rt.registry(), cpu_rt.enumerate_agents()).unwrap();
    let on_cpu = run(&cpu_graph, &p, &cpu_rt, &BTreeMap::new(), RunMode::Deterministic).unwrap();
    assert!(on_fpga.outputs["out"].bits_eq(&on_cpu.outputs["out"]));
}
