use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::{AgentKind, HsaError};
use crate::device::{Manifest, ManifestError, Role};
use crate::kernels::{CustomFn, FixedWeights, OpType, Reference};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct KernelId(pub String);

impl KernelId {
    pub fn new(id: impl Into<String>) -> Self {
        KernelId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for KernelId {
    fn from(s: &str) -> Self {
        KernelId(s.to_owned())
    }
}

#[derive(Clone)]
pub enum SoftwareFn {
    /// The built-in reference function of an op type.
    Builtin(OpType),
    Custom { name: String, func: CustomFn },
}

impl fmt::Debug for SoftwareFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SoftwareFn::Builtin(op) => write!(f, "Builtin({op})"),
            SoftwareFn::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum KernelBody {
    Software(SoftwareFn),
    Bitstream(Role),
}

#[derive(Debug, Clone)]
pub struct KernelObject {
    pub id: KernelId,
    pub op_type: OpType,
    pub device_kind: AgentKind,
    pub body: KernelBody,
}

impl KernelObject {
    /// CPU kernel backed by the op's built-in reference function.
    pub fn builtin_cpu(op: OpType) -> Self {
        Self {
            id: KernelId::new(format!("cpu:{op}")),
            device_kind: AgentKind::Cpu,
            body: KernelBody::Software(SoftwareFn::Builtin(op.clone())),
            op_type: op,
        }
    }

    /// CPU kernel for a custom op.
    pub fn custom_cpu(op: impl Into<String>, func: CustomFn) -> Self {
        let name: String = op.into();
        Self {
            id: KernelId::new(format!("cpu:{name}")),
            op_type: OpType::Custom(name.clone()),
            device_kind: AgentKind::Cpu,
            body: KernelBody::Software(SoftwareFn::Custom { name, func }),
        }
    }

    /// FPGA kernel backed by a bitstream role; the kernel id is the role id.
    pub fn bitstream(role: Role) -> Self {
        Self {
            id: KernelId::new(role.id.as_str()),
            op_type: role.op_type.clone(),
            device_kind: AgentKind::Fpga,
            body: KernelBody::Bitstream(role),
        }
    }

    pub fn role(&self) -> Option<&Role> {
        match &self.body {
            KernelBody::Bitstream(r) => Some(r),
            KernelBody::Software(_) => None,
        }
    }
}

/// Kernel implementations keyed by `(op type, device kind)`, plus the fixed
/// weights shared by every implementation of a convolution op.
#[derive(Debug, Clone, Default)]
pub struct KernelRegistry {
    by_key: BTreeMap<(OpType, AgentKind), KernelObject>,
    key_of: BTreeMap<KernelId, (OpType, AgentKind)>,
    weights: BTreeMap<OpType, FixedWeights>,
}

impl KernelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// CPU kernels for the four built-in ops, plus the convolution weights
    /// of `manifest`. No FPGA kernels.
    pub fn cpu_only(manifest: &Manifest) -> Result<Self, ManifestError> {
        let mut reg = Self::new();
        for op in OpType::BUILTIN {
            reg.register_kernel(KernelObject::builtin_cpu(op)).expect("fresh registry");
        }
        for spec in &manifest.roles {
            if let Some(w) = spec.fixed_weights()? {
                reg.weights.insert(spec.op_type.clone(), w);
            }
        }
        Ok(reg)
    }

    /// [`Self::cpu_only`] plus one FPGA kernel per manifest role.
    pub fn from_manifest(manifest: &Manifest) -> Result<Self, HsaError> {
        let mut reg = Self::cpu_only(manifest)?;
        for role in manifest.roles() {
            reg.register_kernel(KernelObject::bitstream(role))?;
        }
        Ok(reg)
    }

    pub fn register_kernel(&mut self, kernel: KernelObject) -> Result<(), HsaError> {
        let expected = match (kernel.device_kind, &kernel.body) {
            (AgentKind::Cpu, KernelBody::Software(_)) | (AgentKind::Fpga, KernelBody::Bitstream(_)) => None,
            (AgentKind::Cpu, _) => Some("software function"),
            (AgentKind::Fpga, _) => Some("bitstream role"),
        };
        if let Some(expected) = expected {
            return Err(HsaError::VariantMismatch { kernel: kernel.id, kind: kernel.device_kind, expected });
        }
        let body_op = match &kernel.body {
            KernelBody::Software(SoftwareFn::Builtin(op)) => Some(op),
            KernelBody::Bitstream(role) => Some(&role.op_type),
            KernelBody::Software(SoftwareFn::Custom { .. }) => None,
        };
        if body_op.is_some_and(|op| *op != kernel.op_type) {
            return Err(HsaError::VariantMismatch {
                kernel: kernel.id,
                kind: kernel.device_kind,
                expected: "body implementing the kernel's op type",
            });
        }
        let key = (kernel.op_type.clone(), kernel.device_kind);
        if self.by_key.contains_key(&key) {
            return Err(HsaError::DuplicateRegistration { op: key.0, kind: key.1 });
        }
        if self.key_of.contains_key(&kernel.id) {
            return Err(HsaError::DuplicateKernelId(kernel.id));
        }
        self.key_of.insert(kernel.id.clone(), key.clone());
        self.by_key.insert(key, kernel);
        Ok(())
    }

    /// `None` tells the caller to fall back.
    pub fn lookup_kernel(&self, op: &OpType, kind: AgentKind) -> Option<&KernelObject> {
        self.by_key.get(&(op.clone(), kind))
    }

    pub fn get(&self, id: &KernelId) -> Option<&KernelObject> {
        self.key_of.get(id).and_then(|k| self.by_key.get(k))
    }

    pub fn kernels(&self) -> impl Iterator<Item = &KernelObject> {
        self.by_key.values()
    }

    pub fn set_fixed_weights(&mut self, op: OpType, weights: FixedWeights) -> Result<(), HsaError> {
        if let Some(shape) = op.conv_weight_shape() {
            if weights.values().shape() != shape {
                return Err(HsaError::WeightShape { op, expected: shape, got: weights.values().shape().to_vec() });
            }
        }
        self.weights.insert(op, weights);
        Ok(())
    }

    pub fn fixed_weights(&self, op: &OpType) -> Option<&FixedWeights> {
        self.weights.get(op)
    }

    /// The function any implementation of `op` evaluates. Custom ops use
    /// their CPU kernel's function.
    pub fn reference(&self, op: &OpType) -> Result<Reference, HsaError> {
        match op {
            OpType::FcF32 => Ok(Reference::Fc),
            OpType::FcF32Barrier => Ok(Reference::FcBarrier),
            OpType::Conv5x5I16 | OpType::Conv3x3x2I16 => self
                .weights
                .get(op)
                .map(|w| Reference::Conv { op: op.clone(), weights: w.clone() })
                .ok_or_else(|| HsaError::MissingWeights(op.clone())),
            OpType::Custom(_) => match self.lookup_kernel(op, AgentKind::Cpu).map(|k| &k.body) {
                Some(KernelBody::Software(SoftwareFn::Custom { func, .. })) => {
                    Ok(Reference::Custom { op: op.clone(), func: func.clone() })
                }
                _ => Err(HsaError::NoImplementation(op.clone())),
            },
        }
    }
}
