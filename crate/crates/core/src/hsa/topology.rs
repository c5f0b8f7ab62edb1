//! Runtime topology file.
//!
//! ```json
//! {
//!   "agents": [
//!     { "id": "cpu0", "kind": "cpu" },
//!     { "id": "fpga0", "kind": "fpga", "regions": 2,
//!       "capacity": { "lut": 70560, "ff": 141120, "bram": 216, "dsp": 360 } }
//!   ],
//!   "costs": { "setup_us_tf": 156230, "setup_us_hsa": 39032, "reconfig_us": 7424,
//!              "dispatch_us_tf": 27, "dispatch_us_hsa": 10, "layer": "tf" },
//!   "queue_policy": "block"
//! }
//! ```
//!
//! Every field except `agents[].id` and `agents[].kind` is optional. FPGA
//! agents may also give a `shell` footprint and a `preload` list of role ids
//! resident when the session starts.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Agent, AgentId, AgentKind, OverflowPolicy};
use crate::device::RoleId;
use crate::metrics::CostConstants;
use crate::resources::{ResourceVector, DEFAULT_CAPACITY, SHELL_FOOTPRINT};

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("cannot read topology {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("topology parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("duplicate agent id {0}")]
    DuplicateAgent(AgentId),
    #[error("cpu agent {0} cannot have fabric capacity, regions or preloads")]
    CpuWithFabric(AgentId),
    #[error("fpga agent {0} needs at least one region")]
    NoRegions(AgentId),
    #[error("preload role {role} on {agent} is not a registered FPGA kernel")]
    UnknownPreload { agent: AgentId, role: RoleId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub id: AgentId,
    pub kind: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<ResourceVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shell: Option<ResourceVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub preload: Vec<RoleId>,
}

impl AgentConfig {
    pub fn cpu(id: &str) -> Self {
        Self { id: id.into(), kind: AgentKind::Cpu, name: None, capacity: None, shell: None, regions: None, preload: vec![] }
    }

    pub fn fpga(id: &str, regions: usize) -> Self {
        Self { kind: AgentKind::Fpga, regions: Some(regions), ..Self::cpu(id) }
    }

    pub fn capacity(&self) -> ResourceVector {
        match self.kind {
            AgentKind::Cpu => ResourceVector::ZERO,
            AgentKind::Fpga => self.capacity.unwrap_or(DEFAULT_CAPACITY),
        }
    }

    pub fn shell(&self) -> ResourceVector {
        match self.kind {
            AgentKind::Cpu => ResourceVector::ZERO,
            AgentKind::Fpga => self.shell.unwrap_or(SHELL_FOOTPRINT),
        }
    }

    pub fn regions(&self) -> usize {
        match self.kind {
            AgentKind::Cpu => 0,
            AgentKind::Fpga => self.regions.unwrap_or(2),
        }
    }

    pub fn agent(&self) -> Agent {
        Agent {
            id: self.id.clone(),
            kind: self.kind,
            name: self.name.clone().unwrap_or_else(|| self.id.to_string()),
            capacity: self.capacity(),
            regions: self.regions(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub agents: Vec<AgentConfig>,
    #[serde(default)]
    pub costs: CostConstants,
    #[serde(default)]
    pub queue_policy: OverflowPolicy,
}

impl Default for Topology {
    /// One CPU and one two-region FPGA.
    fn default() -> Self {
        Self {
            agents: vec![AgentConfig::cpu("cpu0"), AgentConfig::fpga("fpga0", 2)],
            costs: CostConstants::default(),
            queue_policy: OverflowPolicy::Block,
        }
    }
}

impl Topology {
    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        let t: Topology = serde_json::from_str(text).map_err(|e| TopologyError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TopologyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let mut seen = BTreeSet::new();
        for a in &self.agents {
            if !seen.insert(&a.id) {
                return Err(TopologyError::DuplicateAgent(a.id.clone()));
            }
            match a.kind {
                AgentKind::Cpu => {
                    let fabric = a.capacity.is_some_and(|c| !c.is_zero())
                        || a.shell.is_some_and(|s| !s.is_zero())
                        || a.regions.is_some_and(|r| r > 0)
                        || !a.preload.is_empty();
                    if fabric {
                        return Err(TopologyError::CpuWithFabric(a.id.clone()));
                    }
                }
                AgentKind::Fpga => {
                    if a.regions() == 0 {
                        return Err(TopologyError::NoRegions(a.id.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Set the region count of every FPGA agent.
    pub fn with_regions(mut self, regions: usize) -> Self {
        for a in self.agents.iter_mut().filter(|a| a.kind == AgentKind::Fpga) {
            a.regions = Some(regions);
        }
        self
    }

    /// Agents in enumeration order: CPUs, then FPGAs, each sorted by id.
    pub fn enumerate(&self) -> Vec<Agent> {
        let mut agents: Vec<Agent> = self.agents.iter().map(AgentConfig::agent).collect();
        agents.sort_by(|a, b| (a.kind, &a.id).cmp(&(b.kind, &b.id)));
        agents
    }
}
