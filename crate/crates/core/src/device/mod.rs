//! Virtual partially reconfigurable FPGA.
//!
//! A static shell plus a fixed number of homogeneous reconfigurable regions.
//! Each region hosts at most one role; when a role that is not resident is
//! requested and no region is empty, the least recently used region is
//! reconfigured. Loading is constrained only by whole-device capacity.

mod manifest;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{KernelError, OpType, Reference, Tensor};
use crate::ratio::Rate;
use crate::resources::{Resource, ResourceVector};

pub use manifest::{Manifest, ManifestError, RoleSpec, WeightsSpec};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoleId(pub String);

impl RoleId {
    pub fn new(id: impl Into<String>) -> Self {
        RoleId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RoleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RoleId {
    fn from(s: &str) -> Self {
        RoleId(s.to_owned())
    }
}

/// A presynthesized partial bitstream implementing one op type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Role {
    pub id: RoleId,
    pub op_type: OpType,
    pub footprint: ResourceVector,
    /// Device cycles per output element.
    pub cycles_per_element: Rate,
    pub description: String,
}

impl Role {
    pub fn new(id: impl Into<String>, op_type: OpType, footprint: ResourceVector, cycles_per_element: Rate) -> Self {
        Self {
            id: RoleId::new(id),
            op_type,
            footprint,
            cycles_per_element,
            description: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Region {
    pub index: usize,
    pub loaded: Option<RoleId>,
    /// Stamp of the last load or use; 0 while the region has never been touched.
    pub last_use: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeviceError {
    #[error("loading {role} exceeds device {resource} capacity: need {needed}, have {capacity}")]
    CapacityExceeded {
        role: RoleId,
        resource: Resource,
        needed: u64,
        capacity: u64,
    },
    #[error("region {region} does not hold role {role}")]
    RoleNotLoaded { region: usize, role: RoleId },
    #[error("region index {0} out of range")]
    NoSuchRegion(usize),
    #[error("device needs at least one region")]
    NoRegions,
    #[error("shell ({shell}) does not fit in capacity ({capacity})")]
    ShellTooLarge { shell: ResourceVector, capacity: ResourceVector },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Result of [`FpgaDevice::ensure_loaded`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadOutcome {
    pub region: usize,
    pub reconfigured: bool,
    pub evicted: Option<RoleId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Issue,
    Barrier,
    Retire,
}

/// Point in a role's simulated cycle trace, relative to its start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CycleEvent {
    pub cycle: u64,
    pub kind: TraceKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecOutcome {
    pub output: Tensor,
    pub compute_cycles: u64,
    pub trace: Vec<CycleEvent>,
}

#[derive(Debug, Clone)]
pub struct FpgaDevice {
    shell: ResourceVector,
    capacity: ResourceVector,
    regions: Vec<Region>,
    /// Footprints of resident roles, parallel to `regions`.
    resident: Vec<Option<ResourceVector>>,
    stamp: u64,
    reconfig_count: u64,
    hit_count: u64,
}

impl FpgaDevice {
    pub fn new(shell: ResourceVector, capacity: ResourceVector, regions: usize) -> Result<Self, DeviceError> {
        if regions == 0 {
            return Err(DeviceError::NoRegions);
        }
        if !shell.fits_within(&capacity) {
            return Err(DeviceError::ShellTooLarge { shell, capacity });
        }
        Ok(Self {
            shell,
            capacity,
            regions: (0..regions)
                .map(|index| Region { index, loaded: None, last_use: 0 })
                .collect(),
            resident: vec![None; regions],
            stamp: 0,
            reconfig_count: 0,
            hit_count: 0,
        })
    }

    pub fn shell(&self) -> ResourceVector {
        self.shell
    }

    pub fn capacity(&self) -> ResourceVector {
        self.capacity
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn reconfig_count(&self) -> u64 {
        self.reconfig_count
    }

    pub fn hit_count(&self) -> u64 {
        self.hit_count
    }

    /// Shell plus every resident footprint.
    pub fn used(&self) -> ResourceVector {
        self.shell + self.resident.iter().flatten().copied().sum()
    }

    /// Resident roles in region order.
    pub fn loaded_roles(&self) -> Vec<RoleId> {
        self.regions.iter().filter_map(|r| r.loaded.clone()).collect()
    }

    pub fn region_of(&self, role: &RoleId) -> Option<usize> {
        self.regions.iter().position(|r| r.loaded.as_ref() == Some(role))
    }

    fn tick(&mut self) -> u64 {
        self.stamp += 1;
        self.stamp
    }

    /// Would `role` fit on top of what is currently resident?
    pub fn resource_check(&self, role: &Role) -> Result<(), DeviceError> {
        self.check_with_victim(role, None)
    }

    fn check_with_victim(&self, role: &Role, victim: Option<usize>) -> Result<(), DeviceError> {
        let freed = victim.and_then(|i| self.resident[i]).unwrap_or_default();
        let needed = self.used().saturating_sub(&freed) + role.footprint;
        match needed.first_excess(&self.capacity) {
            None => Ok(()),
            Some(resource) => Err(DeviceError::CapacityExceeded {
                role: role.id.clone(),
                resource,
                needed: needed.get(resource),
                capacity: self.capacity.get(resource),
            }),
        }
    }

    /// Region that would receive a newly loaded role: the lowest-index empty
    /// region, otherwise the least recently used one.
    fn victim(&self) -> usize {
        if let Some(r) = self.regions.iter().find(|r| r.loaded.is_none()) {
            return r.index;
        }
        self.regions
            .iter()
            .min_by_key(|r| r.last_use)
            .map(|r| r.index)
            .expect("device has regions")
    }

    /// Make `role` resident, reconfiguring a region on a miss.
    ///
    /// The caller charges reconfiguration time when `reconfigured` is set.
    pub fn ensure_loaded(&mut self, role: &Role) -> Result<LoadOutcome, DeviceError> {
        if let Some(index) = self.region_of(&role.id) {
            let stamp = self.tick();
            self.regions[index].last_use = stamp;
            self.hit_count += 1;
            return Ok(LoadOutcome { region: index, reconfigured: false, evicted: None });
        }
        let index = self.victim();
        self.check_with_victim(role, Some(index))?;
        let stamp = self.tick();
        let region = &mut self.regions[index];
        let evicted = region.loaded.replace(role.id.clone());
        region.last_use = stamp;
        self.resident[index] = Some(role.footprint);
        self.reconfig_count += 1;
        Ok(LoadOutcome { region: index, reconfigured: true, evicted })
    }

    /// Place `role` without counting a reconfiguration, as if it had been
    /// left resident before this device model started observing.
    pub fn preload(&mut self, role: &Role) -> Result<LoadOutcome, DeviceError> {
        let before = self.reconfig_count;
        let out = self.ensure_loaded(role)?;
        self.reconfig_count = before;
        Ok(LoadOutcome { reconfigured: false, ..out })
    }

    /// Run the role resident in `region` on `args`.
    ///
    /// Cycles are `ceil(output elements x cycles_per_element)`.
    pub fn execute_role(
        &mut self,
        region: usize,
        role: &Role,
        reference: &Reference,
        args: &[Tensor],
    ) -> Result<ExecOutcome, DeviceError> {
        let slot = self.regions.get(region).ok_or(DeviceError::NoSuchRegion(region))?;
        if slot.loaded.as_ref() != Some(&role.id) {
            return Err(DeviceError::RoleNotLoaded { region, role: role.id.clone() });
        }
        let eval = reference.evaluate(args)?;
        let compute_cycles = role.cycles_per_element.ceil_mul(eval.output.len() as u64);
        let mut trace = vec![CycleEvent { cycle: 0, kind: TraceKind::Issue }];
        trace.extend((0..eval.barriers).map(|_| CycleEvent { cycle: compute_cycles, kind: TraceKind::Barrier }));
        trace.push(CycleEvent { cycle: compute_cycles, kind: TraceKind::Retire });
        let stamp = self.tick();
        self.regions[region].last_use = stamp;
        Ok(ExecOutcome { output: eval.output, compute_cycles, trace })
    }
}
