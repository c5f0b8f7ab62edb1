//! Role manifest: the presynthesized bitstreams available to the runtime.
//!
//! ```json
//! { "roles": [ { "role_id": "role3", "op_type": "CONV5x5_I16",
//!                "footprint": { "lut": 5091, "ff": 4935, "bram": 21, "dsp": 6 },
//!                "cycles_per_element": "1",
//!                "weights": { "seed": 3, "scale_shift": 6 } } ] }
//! ```
//!
//! A bare array of role objects is accepted too. Convolution roles carry
//! their fixed weights, either generated from a seed or listed explicitly
//! as `"values"` in `(filters, kh, kw)` row-major order.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Role, RoleId};
use crate::kernels::{FixedWeights, KernelError, OpType, Tensor};
use crate::ratio::Rate;
use crate::resources::{ResourceVector, ROLE_FOOTPRINTS};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("manifest parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("duplicate role id {0}")]
    DuplicateRole(RoleId),
    #[error("role {0}: convolution roles need fixed weights")]
    MissingWeights(RoleId),
    #[error("role {0}: only convolution roles take weights")]
    UnexpectedWeights(RoleId),
    #[error("role {role}: {source}")]
    Weights { role: RoleId, source: KernelError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsSpec {
    Seeded { seed: u64, scale_shift: u32 },
    Values { values: Vec<i16>, scale_shift: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleSpec {
    pub role_id: RoleId,
    pub op_type: OpType,
    pub footprint: ResourceVector,
    pub cycles_per_element: Rate,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub roles: Vec<RoleSpec>,
}

impl<'de> Deserialize<'de> for Manifest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Wrapped { roles: Vec<RoleSpec> },
            Bare(Vec<RoleSpec>),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Wrapped { roles } | Raw::Bare(roles) => Manifest { roles },
        })
    }
}

impl Default for Manifest {
    /// The four reference roles with their measured footprints.
    fn default() -> Self {
        let spec = |i: usize, op: OpType, cycles: u64, desc: &str, weights: Option<WeightsSpec>| RoleSpec {
            role_id: RoleId::new(format!("role{}", i + 1)),
            op_type: op,
            footprint: ROLE_FOOTPRINTS[i],
            cycles_per_element: Rate::integer(cycles),
            description: desc.to_owned(),
            weights,
        };
        Manifest {
            roles: vec![
                spec(0, OpType::FcF32, 16, "fully connected (float32)", None),
                spec(1, OpType::FcF32Barrier, 32, "fully connected with barrier (float32)", None),
                spec(
                    2,
                    OpType::Conv5x5I16,
                    1,
                    "conv 5x5, 1 filter, fixed weights (int16)",
                    Some(WeightsSpec::Seeded { seed: 3, scale_shift: 6 }),
                ),
                spec(
                    3,
                    OpType::Conv3x3x2I16,
                    1,
                    "conv 3x3, 2 filters, fixed weights (int16)",
                    Some(WeightsSpec::Seeded { seed: 4, scale_shift: 6 }),
                ),
            ],
        }
    }
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| ManifestError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut seen = BTreeSet::new();
        for spec in &self.roles {
            if !seen.insert(&spec.role_id) {
                return Err(ManifestError::DuplicateRole(spec.role_id.clone()));
            }
            spec.fixed_weights()?;
        }
        Ok(())
    }

    pub fn roles(&self) -> Vec<Role> {
        self.roles.iter().map(RoleSpec::role).collect()
    }
}

impl RoleSpec {
    pub fn role(&self) -> Role {
        Role {
            id: self.role_id.clone(),
            op_type: self.op_type.clone(),
            footprint: self.footprint,
            cycles_per_element: self.cycles_per_element,
            description: self.description.clone(),
        }
    }

    /// Weights for convolution roles, `None` for everything else.
    pub fn fixed_weights(&self) -> Result<Option<FixedWeights>, ManifestError> {
        let id = || self.role_id.clone();
        match (self.op_type.conv_weight_shape(), &self.weights) {
            (None, None) => Ok(None),
            (None, Some(_)) => Err(ManifestError::UnexpectedWeights(id())),
            (Some(_), None) => Err(ManifestError::MissingWeights(id())),
            (Some(shape), Some(WeightsSpec::Seeded { seed, scale_shift })) => {
                if *scale_shift > 31 {
                    return Err(ManifestError::Weights {
                        role: id(),
                        source: KernelError::ShapeMismatch(format!("scale_shift {scale_shift} exceeds 31")),
                    });
                }
                Ok(Some(FixedWeights::seeded(shape, *seed, *scale_shift)))
            }
            (Some(shape), Some(WeightsSpec::Values { values, scale_shift })) => {
                Tensor::i16(shape.to_vec(), values.clone())
                    .and_then(|t| FixedWeights::new(t, *scale_shift))
                    .map(Some)
                    .map_err(|source| ManifestError::Weights { role: id(), source })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_manifest_uses_measured_footprints() {
        let roles = Manifest::default().roles();
        assert_eq!(roles.len(), 4);
        assert_eq!(roles[0].footprint, ResourceVector::new(9984, 8479, 21, 22));
        assert_eq!(roles[3].footprint, ResourceVector::new(7881, 7926, 21, 12));
        Manifest::default().validate().unwrap();
    }

    #[test]
    fn default_manifest_round_trips_through_json() {
        let text = serde_json::to_string_pretty(&Manifest::default()).unwrap();
        assert_eq!(Manifest::parse(&text).unwrap(), Manifest::default());
    }

    #[test]
    fn bare_array_and_explicit_weights() {
        let values: Vec<String> = (0..18).map(|v| v.to_string()).collect();
        let text = format!(
            r#"[{{"role_id":"c","op_type":"CONV3x3x2_I16","footprint":{{"lut":1}},
                 "cycles_per_element":"3/2","weights":{{"values":[{}],"scale_shift":2}}}}]"#,
            values.join(",")
        );
        let m = Manifest::parse(&text).unwrap();
        let w = m.roles[0].fixed_weights().unwrap().unwrap();
        assert_eq!(w.dims(), (2, 3, 3));
        assert_eq!(w.scale_shift(), 2);
        assert_eq!(m.roles()[0].cycles_per_element, Rate::new(3, 2));
    }

    #[test]
    fn rejects_bad_manifests() {
        let conv_no_weights = r#"{"roles":[{"role_id":"c","op_type":"CONV5x5_I16","footprint":{},"cycles_per_element":1}]}"#;
        assert!(matches!(Manifest::parse(conv_no_weights), Err(ManifestError::MissingWeights(_))));
        let fc_weights = r#"{"roles":[{"role_id":"f","op_type":"FC_F32","footprint":{},"cycles_per_element":1,
            "weights":{"seed":1,"scale_shift":0}}]}"#;
        assert!(matches!(Manifest::parse(fc_weights), Err(ManifestError::UnexpectedWeights(_))));
        let dup = r#"[{"role_id":"f","op_type":"FC_F32","footprint":{},"cycles_per_element":1},
                      {"role_id":"f","op_type":"FC_F32_BARRIER","footprint":{},"cycles_per_element":1}]"#;
        assert!(matches!(Manifest::parse(dup), Err(ManifestError::DuplicateRole(_))));
        let short = r#"[{"role_id":"c","op_type":"CONV5x5_I16","footprint":{},"cycles_per_element":1,
            "weights":{"values":[1,2],"scale_shift":0}}]"#;
        assert!(matches!(Manifest::parse(short), Err(ManifestError::Weights { .. })));
        assert!(matches!(Manifest::parse("{"), Err(ManifestError::Parse { .. })));
    }
}
