use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hsaflow::kernels::{format_literal, parse_literal};
use hsaflow::metrics::{efficiency_table, overhead_table, run_bench, BenchConfig};
use hsaflow::{place, run, Calibration, Graph, KernelRegistry, Layer, Manifest, RunMode, Runtime, Tensor, Topology};

const DEMO_GRAPH: &str = include_str!("../../../demo/graph.json");

#[derive(Parser)]
#[command(name = "hsaflow", version, about = "Run dataflow graphs on a simulated reconfigurable FPGA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a graph and write its outputs and cost report.
    Run(RunArgs),
    /// Measure OP/cycle of every role against the CPU baseline.
    Bench(BenchArgs),
    /// List the agents of a topology in enumeration order.
    Agents {
        #[arg(long)]
        topology: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Graph file; the built-in demo graph when omitted.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Role manifest; the four reference roles when omitted.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Input tensor as NAME=PATH to a tensor literal file. Repeatable.
    #[arg(long = "input", value_name = "NAME=PATH")]
    inputs: Vec<String>,
    /// Overrides the topology's cost layer.
    #[arg(long)]
    layer: Option<Layer>,
    /// Overrides the region count of every FPGA agent.
    #[arg(long)]
    regions: Option<usize>,
    #[arg(long, default_value = "deterministic")]
    mode: RunMode,
    /// Seed for inputs synthesized from dtype/shape attributes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Disable FPGA kernels so every node runs on the CPU.
    #[arg(long)]
    cpu_only: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    reps: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multiplier on every input extent.
    #[arg(long, default_value_t = 1)]
    scale: usize,
    /// Also write bench.json into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Agents { topology } => cmd_agents(topology),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain joined with ": ", skipping causes already spelled out
/// by the message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

/// Print to stdout, treating a closed pipe as success.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn load_topology(path: Option<&Path>) -> Result<Topology> {
    match path {
        Some(p) => Ok(Topology::load(p)?),
        None => Ok(Topology::default()),
    }
}

fn load_manifest(path: Option<&Path>) -> Result<Manifest> {
    match path {
        Some(p) => Ok(Manifest::load(p)?),
        None => Ok(Manifest::default()),
    }
}

fn load_calibration(path: Option<&Path>) -> Result<Calibration> {
    match path {
        Some(p) => Ok(Calibration::load(p)?),
        None => Ok(Calibration::default()),
    }
}

fn read_inputs(specs: &[String]) -> Result<BTreeMap<String, Tensor>> {
    let mut inputs = BTreeMap::new();
    for spec in specs {
        let Some((name, path)) = spec.split_once('=') else {
            bail!("--input expects NAME=PATH, got {spec:?}");
        };
        let text = fs::read_to_string(path).with_context(|| format!("cannot read input {name} from {path}"))?;
        let tensor = parse_literal(&text).with_context(|| format!("input {name} ({path})"))?;
        inputs.insert(name.to_owned(), tensor);
    }
    Ok(inputs)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if path.exists() {
        eprintln!("warning: overwriting {}", path.display());
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut topology = load_topology(args.topology.as_deref())?;
    if let Some(layer) = args.layer {
        topology.costs = topology.costs.with_layer(layer);
    }
    if let Some(n) = args.regions {
        topology = topology.with_regions(n);
        topology.validate()?;
    }
    let manifest = load_manifest(args.manifest.as_deref())?;
    let registry = if args.cpu_only {
        KernelRegistry::cpu_only(&manifest)?
    } else {
        KernelRegistry::from_manifest(&manifest)?
    };
    let calibration = load_calibration(args.calibration.as_deref())?;
    let graph = match &args.graph {
        Some(p) => Graph::load(p)?,
        None => Graph::parse(DEMO_GRAPH, None)?,
    };
    let provided = read_inputs(&args.inputs)?;
    for name in provided.keys() {
        if graph.node(name).is_none() {
            bail!("--input {name}: graph has no node with that id");
        }
    }
    let inputs = graph.synthesize_inputs(&provided, args.seed)?;

    let runtime = Runtime::new(&topology, registry, calibration)?;
    let placement = place(&graph, runtime.registry(), runtime.enumerate_agents())?;
    for node in placement.fallbacks() {
        eprintln!("warning: no FPGA kernel for node {node}; running it on the CPU");
    }
    let output = run(&graph, &placement, &runtime, &inputs, args.mode)?;

    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let report = serde_json::json!({
        "layer": runtime.costs().layer.to_string(),
        "placement": placement,
        "reconfigs": output.reconfigs,
        "report": output.report,
    });
    write_file(&args.out.join("report.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    let table = overhead_table(&output.report);
    write_file(&args.out.join("report.txt"), &table)?;
    for (id, tensor) in &output.outputs {
        write_file(&args.out.join(format!("{id}.tensor")), &format_literal(tensor))?;
    }

    emit(&format!("{table}outputs written to {}\n", args.out.display()))
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let manifest = load_manifest(args.manifest.as_deref())?;
    let calibration = load_calibration(args.calibration.as_deref())?;
    let cfg = BenchConfig { reps: args.reps, seed: args.seed, scale: args.scale };
    let figures = run_bench(&manifest, &calibration, cfg)?;
    emit(&efficiency_table(&figures))?;
    if let Some(dir) = args.out {
        fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        write_file(&dir.join("bench.json"), &(serde_json::to_string_pretty(&figures)? + "\n"))?;
    }
    Ok(())
}

fn cmd_agents(topology: Option<PathBuf>) -> Result<()> {
    let topology = load_topology(topology.as_deref())?;
    let mut text = String::new();
    for a in topology.enumerate() {
        text += &format!("{}\t{}\t{}\tregions={}\tcapacity={}\n", a.id, a.kind, a.name, a.regions, a.capacity);
    }
    emit(&text)
}
