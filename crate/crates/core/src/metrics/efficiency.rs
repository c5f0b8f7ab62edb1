use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::MetricsError;
use crate::device::{DeviceError, FpgaDevice, Manifest, ManifestError, RoleId, RoleSpec};
use crate::kernels::{DType, KernelError, OpType, Reference, Tensor};
use crate::ratio::Rate;
use crate::resources::{DEFAULT_CAPACITY, SHELL_FOOTPRINT};

/// OP/cycle increase over the CPU baseline for roles 1..=4.
pub const REFERENCE_INCREASES: [Rate; 4] = [
    Rate(num_rational::Ratio::new_raw(651, 100)),
    Rate(num_rational::Ratio::new_raw(303, 100)),
    Rate(num_rational::Ratio::new_raw(1862, 100)),
    Rate(num_rational::Ratio::new_raw(698, 100)),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EfficiencyFigure {
    pub role: RoleId,
    pub op_count: u64,
    pub accel_cycles: u64,
    pub cpu_cycles: u64,
    pub accel_op_per_cycle: Rate,
    pub cpu_op_per_cycle: Rate,
    pub increase: Rate,
}

impl EfficiencyFigure {
    pub fn increase_f64(&self) -> f64 {
        self.increase.to_f64()
    }
}

/// `increase = (ops / accel_cycles) / (ops / cpu_cycles)`; the op count
/// cancels, leaving `cpu_cycles / accel_cycles`.
pub fn efficiency(role: RoleId, op_count: u64, accel_cycles: u64, cpu_cycles: u64) -> Result<EfficiencyFigure, MetricsError> {
    if accel_cycles == 0 || cpu_cycles == 0 {
        return Err(MetricsError::ZeroCycles);
    }
    if op_count == 0 {
        return Err(MetricsError::ZeroOps);
    }
    let accel = Rate::new(op_count, accel_cycles);
    let cpu = Rate::new(op_count, cpu_cycles);
    Ok(EfficiencyFigure {
        role,
        op_count,
        accel_cycles,
        cpu_cycles,
        accel_op_per_cycle: accel,
        cpu_op_per_cycle: cpu,
        increase: Rate(accel.0 / cpu.0),
    })
}

/// CPU baseline cost per output element, by op type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub cpu_cycles_per_element: BTreeMap<OpType, Rate>,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read calibration {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("calibration parse error: {0}")]
    Parse(String),
    #[error("no CPU calibration for {0}")]
    Uncalibrated(OpType),
    #[error("zero repetitions requested")]
    NoReps,
    #[error("role {0}: device and CPU results differ")]
    Divergence(RoleId),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl Default for Calibration {
    /// Calibrated against the default manifest so every reference role
    /// reproduces its published increase.
    fn default() -> Self {
        Self::from_increases(&Manifest::default(), &REFERENCE_INCREASES)
    }
}

impl Calibration {
    /// CPU rate = role rate x increase, for the roles of `manifest` in order.
    pub fn from_increases(manifest: &Manifest, increases: &[Rate]) -> Self {
        let cpu_cycles_per_element = manifest
            .roles
            .iter()
            .zip(increases)
            .map(|(spec, inc)| (spec.op_type.clone(), spec.cycles_per_element * *inc))
            .collect();
        Self { cpu_cycles_per_element }
    }

    pub fn parse(text: &str) -> Result<Self, BenchError> {
        serde_json::from_str(text).map_err(|e| BenchError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn cpu_rate(&self, op: &OpType) -> Option<Rate> {
        self.cpu_cycles_per_element.get(op).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub reps: u32,
    pub seed: u64,
    /// Multiplier applied to every input extent.
    pub scale: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { reps: 1000, seed: 0, scale: 1 }
    }
}

/// Generated operands for one application of `op` at `scale`.
///
/// Base extents give 100 output elements for the fully connected and 5x5
/// roles and 200 for the two-filter 3x3 role.
fn bench_args(op: &OpType, scale: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Tensor>> {
    match op {
        OpType::FcF32 | OpType::FcF32Barrier => {
            let (m, k, n) = (10 * scale, 16 * scale, 10);
            Some(vec![
                Tensor::random(DType::F32, vec![m, k], rng),
                Tensor::random(DType::F32, vec![k, n], rng),
                Tensor::random(DType::F32, vec![n], rng),
            ])
        }
        OpType::Conv5x5I16 => Some(vec![Tensor::random(DType::I16, vec![14 * scale, 14 * scale], rng)]),
        OpType::Conv3x3x2I16 => Some(vec![Tensor::random(DType::I16, vec![12 * scale, 12 * scale], rng)]),
        OpType::Custom(_) => None,
    }
}

fn reference_for(spec: &RoleSpec) -> Result<Option<Reference>, BenchError> {
    Ok(match &spec.op_type {
        OpType::FcF32 => Some(Reference::Fc),
        OpType::FcF32Barrier => Some(Reference::FcBarrier),
        op @ (OpType::Conv5x5I16 | OpType::Conv3x3x2I16) => Some(Reference::Conv {
            op: op.clone(),
            weights: spec.fixed_weights()?.expect("validated conv role has weights"),
        }),
        OpType::Custom(_) => None,
    })
}

/// Run every built-in role of `manifest` `reps` times on the device model
/// and on the CPU baseline, and report the OP/cycle increase per role.
/// Custom roles have no input generator and are skipped.
pub fn run_bench(manifest: &Manifest, calibration: &Calibration, cfg: BenchConfig) -> Result<Vec<EfficiencyFigure>, BenchError> {
    if cfg.reps == 0 {
        return Err(BenchError::NoReps);
    }
    let mut figures = Vec::new();
    for spec in &manifest.roles {
        let Some(reference) = reference_for(spec)? else { continue };
        let cpu_rate = calibration
            .cpu_rate(&spec.op_type)
            .ok_or_else(|| BenchError::Uncalibrated(spec.op_type.clone()))?;
        let role = spec.role();
        let mut device = FpgaDevice::new(SHELL_FOOTPRINT, DEFAULT_CAPACITY, 1)?;
        let region = device.ensure_loaded(&role)?.region;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (mut ops, mut accel, mut cpu) = (0u64, 0u64, 0u64);
        for _ in 0..cfg.reps {
            let args = bench_args(&spec.op_type, cfg.scale.max(1), &mut rng).expect("built-in op");
            let on_device = device.execute_role(region, &role, &reference, &args)?;
            let on_cpu = reference.evaluate(&args)?;
            if !on_device.output.bits_eq(&on_cpu.output) {
                return Err(BenchError::Divergence(role.id.clone()));
            }
            ops += reference.op_count(&args)?;
            accel += on_device.compute_cycles;
            cpu += cpu_rate.ceil_mul(on_cpu.output.len() as u64);
        }
        figures.push(efficiency(role.id.clone(), ops, accel, cpu)?);
    }
    Ok(figures)
}
