//! Programmable-logic resource accounting.
//!
//! A [`ResourceVector`] counts the four fabric resources a bitstream can
//! occupy. Device capacity, the static shell and every role footprint are
//! expressed in this unit and compared componentwise.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the four fabric resource classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resource {
    Lut,
    Ff,
    Bram,
    Dsp,
}

impl Resource {
    pub const ALL: [Resource; 4] = [Resource::Lut, Resource::Ff, Resource::Bram, Resource::Dsp];

    pub fn name(self) -> &'static str {
        match self {
            Resource::Lut => "LUT",
            Resource::Ff => "FF",
            Resource::Bram => "BRAM",
            Resource::Dsp => "DSP",
        }
    }
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// LUT / FF / BRAM (36Kb blocks) / DSP slice counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceVector {
    #[serde(default)]
    pub lut: u64,
    #[serde(default)]
    pub ff: u64,
    #[serde(default)]
    pub bram: u64,
    #[serde(default)]
    pub dsp: u64,
}

impl ResourceVector {
    pub const ZERO: ResourceVector = ResourceVector::new(0, 0, 0, 0);

    pub const fn new(lut: u64, ff: u64, bram: u64, dsp: u64) -> Self {
        Self { lut, ff, bram, dsp }
    }

    pub fn get(&self, r: Resource) -> u64 {
        match r {
            Resource::Lut => self.lut,
            Resource::Ff => self.ff,
            Resource::Bram => self.bram,
            Resource::Dsp => self.dsp,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    /// First component (in LUT, FF, BRAM, DSP order) where `self` exceeds
    /// `limit`, or `None` if `self <= limit` componentwise.
    pub fn first_excess(&self, limit: &ResourceVector) -> Option<Resource> {
        Resource::ALL.into_iter().find(|&r| self.get(r) > limit.get(r))
    }

    pub fn fits_within(&self, limit: &ResourceVector) -> bool {
        self.first_excess(limit).is_none()
    }

    pub fn saturating_sub(&self, rhs: &ResourceVector) -> ResourceVector {
        ResourceVector {
            lut: self.lut.saturating_sub(rhs.lut),
            ff: self.ff.saturating_sub(rhs.ff),
            bram: self.bram.saturating_sub(rhs.bram),
            dsp: self.dsp.saturating_sub(rhs.dsp),
        }
    }

    /// Utilization of `self` against `capacity`, in percent, per component.
    /// Components with zero capacity report 0.
    pub fn percent_of(&self, capacity: &ResourceVector) -> Utilization {
        let pct = |r: Resource| {
            let cap = capacity.get(r);
            if cap == 0 {
                0.0
            } else {
                self.get(r) as f64 * 100.0 / cap as f64
            }
        };
        Utilization {
            lut: pct(Resource::Lut),
            ff: pct(Resource::Ff),
            bram: pct(Resource::Bram),
            dsp: pct(Resource::Dsp),
        }
    }
}

impl Add for ResourceVector {
    type Output = ResourceVector;

    fn add(self, rhs: ResourceVector) -> ResourceVector {
        ResourceVector {
            lut: self.lut + rhs.lut,
            ff: self.ff + rhs.ff,
            bram: self.bram + rhs.bram,
            dsp: self.dsp + rhs.dsp,
        }
    }
}

impl Sub for ResourceVector {
    type Output = ResourceVector;

    /// Panics on underflow in debug builds, like integer subtraction.
    fn sub(self, rhs: ResourceVector) -> ResourceVector {
        ResourceVector {
            lut: self.lut - rhs.lut,
            ff: self.ff - rhs.ff,
            bram: self.bram - rhs.bram,
            dsp: self.dsp - rhs.dsp,
        }
    }
}

impl std::iter::Sum for ResourceVector {
    fn sum<I: Iterator<Item = ResourceVector>>(iter: I) -> Self {
        iter.fold(ResourceVector::ZERO, Add::add)
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} LUT, {} FF, {} BRAM, {} DSP",
            self.lut, self.ff, self.bram, self.dsp
        )
    }
}

/// Per-component percentages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Utilization {
    pub lut: f64,
    pub ff: f64,
    pub bram: f64,
    pub dsp: f64,
}

impl Utilization {
    pub fn get(&self, r: Resource) -> f64 {
        match r {
            Resource::Lut => self.lut,
            Resource::Ff => self.ff,
            Resource::Bram => self.bram,
            Resource::Dsp => self.dsp,
        }
    }

    /// Round every component to one decimal place, as utilization reports print them.
    pub fn rounded(&self) -> Utilization {
        let r = |v: f64| (v * 10.0).round() / 10.0;
        Utilization {
            lut: r(self.lut),
            ff: r(self.ff),
            bram: r(self.bram),
            dsp: r(self.dsp),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CapacityError {
    #[error("utilization percentage for {0} is zero; capacity cannot be derived")]
    ZeroPercent(Resource),
}

/// Back out total device capacity from an absolute count and the percentage
/// a report printed for it: `round(absolute / (percent / 100))`.
pub fn derive_capacity(
    absolute: &ResourceVector,
    percent: &Utilization,
) -> Result<ResourceVector, CapacityError> {
    let mut out = [0u64; 4];
    for (slot, r) in out.iter_mut().zip(Resource::ALL) {
        let p = percent.get(r);
        if p <= 0.0 {
            return Err(CapacityError::ZeroPercent(r));
        }
        *slot = (absolute.get(r) as f64 / (p / 100.0)).round() as u64;
    }
    Ok(ResourceVector::new(out[0], out[1], out[2], out[3]))
}

/// Total programmable logic of the reference board. Consistent with every
/// printed utilization percentage of the reference footprints to one
/// decimal place.
pub const DEFAULT_CAPACITY: ResourceVector = ResourceVector::new(70_560, 141_120, 216, 360);

/// Static shell footprint.
pub const SHELL_FOOTPRINT: ResourceVector = ResourceVector::new(9915, 8544, 10, 0);

/// Footprints of the four reference roles, in role order 1..=4.
pub const ROLE_FOOTPRINTS: [ResourceVector; 4] = [
    ResourceVector::new(9984, 8479, 21, 22),
    ResourceVector::new(9501, 7851, 23, 8),
    ResourceVector::new(5091, 4935, 21, 6),
    ResourceVector::new(7881, 7926, 21, 12),
];

/// Printed utilization percentages matching [`SHELL_FOOTPRINT`] followed by
/// [`ROLE_FOOTPRINTS`].
pub const PRINTED_UTILIZATION: [Utilization; 5] = [
    Utilization { lut: 14.1, ff: 6.1, bram: 4.6, dsp: 0.0 },
    Utilization { lut: 14.1, ff: 6.0, bram: 9.7, dsp: 6.1 },
    Utilization { lut: 13.5, ff: 5.6, bram: 10.6, dsp: 2.2 },
    Utilization { lut: 7.2, ff: 3.5, bram: 9.7, dsp: 1.7 },
    Utilization { lut: 11.2, ff: 5.6, bram: 9.7, dsp: 3.3 },
];
