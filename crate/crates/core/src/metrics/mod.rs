//! Overhead and efficiency accounting.
//!
//! Every runtime cost lands in a [`TimelineReport`] as an event. Overheads
//! (setup, reconfiguration, dispatch latency) are microseconds on a
//! simulated clock; compute is counted in device cycles and never advances
//! the clock, since no clock frequency is modeled.

mod efficiency;
mod render;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use efficiency::{efficiency, run_bench, BenchConfig, BenchError, Calibration, EfficiencyFigure, REFERENCE_INCREASES};
pub use render::{efficiency_table, overhead_table};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("setup already charged in this session")]
    DoubleSetup,
    #[error("cycle counts must be positive")]
    ZeroCycles,
    #[error("op count must be positive")]
    ZeroOps,
}

/// Which software layer's costs apply. The two are alternatives, never summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    #[default]
    #[serde(alias = "TF")]
    Tf,
    #[serde(alias = "HSA")]
    Hsa,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::Tf => "tf",
            Layer::Hsa => "hsa",
        })
    }
}

impl std::str::FromStr for Layer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tf" => Ok(Layer::Tf),
            "hsa" => Ok(Layer::Hsa),
            _ => Err(format!("unknown layer {s:?} (expected tf or hsa)")),
        }
    }
}

/// Overhead constants in microseconds, measured on the reference board
/// (mean of n=1000).
///
/// Files may give per-layer costs as flat keys (`setup_us_tf`) or grouped
/// (`"setup_us": {"tf": .., "hsa": ..}`); a bare number for `setup_us` or
/// `dispatch_us` applies to both layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CostsFile")]
pub struct CostConstants {
    pub setup_us_tf: u64,
    pub setup_us_hsa: u64,
    pub reconfig_us: u64,
    pub dispatch_us_tf: u64,
    pub dispatch_us_hsa: u64,
    pub layer: Layer,
}

impl Default for CostConstants {
    fn default() -> Self {
        Self {
            setup_us_tf: 156_230,
            setup_us_hsa: 39_032,
            reconfig_us: 7424,
            dispatch_us_tf: 27,
            dispatch_us_hsa: 10,
            layer: Layer::Tf,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PerLayer {
    Both(u64),
    Split {
        tf: Option<u64>,
        hsa: Option<u64>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CostsFile {
    setup_us: Option<PerLayer>,
    dispatch_us: Option<PerLayer>,
    setup_us_tf: Option<u64>,
    setup_us_hsa: Option<u64>,
    reconfig_us: Option<u64>,
    dispatch_us_tf: Option<u64>,
    dispatch_us_hsa: Option<u64>,
    layer: Option<Layer>,
}

fn merge(name: &str, grouped: Option<PerLayer>, tf: Option<u64>, hsa: Option<u64>) -> Result<(Option<u64>, Option<u64>), String> {
    match grouped {
        None => Ok((tf, hsa)),
        Some(_) if tf.is_some() || hsa.is_some() => Err(format!("give {name} either grouped or as {name}_tf/{name}_hsa")),
        Some(PerLayer::Both(v)) => Ok((Some(v), Some(v))),
        Some(PerLayer::Split { tf, hsa }) => Ok((tf, hsa)),
    }
}

impl TryFrom<CostsFile> for CostConstants {
    type Error = String;

    fn try_from(f: CostsFile) -> Result<Self, String> {
        let d = CostConstants::default();
        let (setup_tf, setup_hsa) = merge("setup_us", f.setup_us, f.setup_us_tf, f.setup_us_hsa)?;
        let (dispatch_tf, dispatch_hsa) = merge("dispatch_us", f.dispatch_us, f.dispatch_us_tf, f.dispatch_us_hsa)?;
        Ok(Self {
            setup_us_tf: setup_tf.unwrap_or(d.setup_us_tf),
            setup_us_hsa: setup_hsa.unwrap_or(d.setup_us_hsa),
            reconfig_us: f.reconfig_us.unwrap_or(d.reconfig_us),
            dispatch_us_tf: dispatch_tf.unwrap_or(d.dispatch_us_tf),
            dispatch_us_hsa: dispatch_hsa.unwrap_or(d.dispatch_us_hsa),
            layer: f.layer.unwrap_or(d.layer),
        })
    }
}

impl CostConstants {
    pub fn with_layer(self, layer: Layer) -> Self {
        Self { layer, ..self }
    }

    pub fn setup_us(&self) -> u64 {
        match self.layer {
            Layer::Tf => self.setup_us_tf,
            Layer::Hsa => self.setup_us_hsa,
        }
    }

    pub fn dispatch_us(&self) -> u64 {
        match self.layer {
            Layer::Tf => self.dispatch_us_tf,
            Layer::Hsa => self.dispatch_us_hsa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Setup,
    Dispatch,
    Reconfig,
    Compute,
}

impl Category {
    /// Whether amounts are microseconds of overhead (as opposed to cycles).
    pub fn is_overhead(self) -> bool {
        !matches!(self, Category::Compute)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Simulated clock when the event started, in microseconds.
    pub time_us: u64,
    pub category: Category,
    /// Microseconds for overhead categories, cycles for compute.
    pub amount: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineReport {
    pub setup_us_total: u64,
    pub dispatch_us_total: u64,
    pub reconfig_us_total: u64,
    pub compute_cycles_total: u64,
    pub setup_events: u64,
    pub dispatch_events: u64,
    pub reconfig_events: u64,
    /// Compute cycles keyed by event detail (the node id for graph runs).
    pub compute_cycles: BTreeMap<String, u64>,
    pub clock_us: u64,
    pub events: Vec<Event>,
}

impl TimelineReport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuild a report from an event list, recomputing every total.
    pub fn from_events(events: impl IntoIterator<Item = Event>) -> Self {
        let mut report = Self::new();
        for e in events {
            report.apply(&e);
            report.clock_us = report.clock_us.max(e.time_us + if e.category.is_overhead() { e.amount } else { 0 });
            report.events.push(e);
        }
        report
    }

    fn apply(&mut self, e: &Event) {
        match e.category {
            Category::Setup => {
                self.setup_us_total += e.amount;
                self.setup_events += 1;
            }
            Category::Dispatch => {
                self.dispatch_us_total += e.amount;
                self.dispatch_events += 1;
            }
            Category::Reconfig => {
                self.reconfig_us_total += e.amount;
                self.reconfig_events += 1;
            }
            Category::Compute => {
                self.compute_cycles_total += e.amount;
                *self.compute_cycles.entry(e.detail.clone()).or_default() += e.amount;
            }
        }
    }

    pub fn setup_charged(&self) -> bool {
        self.setup_events > 0
    }

    pub fn charge(&mut self, category: Category, amount: u64, detail: impl Into<String>) -> Result<&Event, MetricsError> {
        self.charge_for(None, category, amount, detail)
    }

    /// Append an event, attributing it to `agent`.
    pub fn charge_for(
        &mut self,
        agent: Option<&str>,
        category: Category,
        amount: u64,
        detail: impl Into<String>,
    ) -> Result<&Event, MetricsError> {
        if category == Category::Setup && self.setup_charged() {
            return Err(MetricsError::DoubleSetup);
        }
        let event = Event {
            seq: self.events.len() as u64,
            time_us: self.clock_us,
            category,
            amount,
            agent: agent.map(str::to_owned),
            detail: detail.into(),
        };
        self.apply(&event);
        if category.is_overhead() {
            self.clock_us += amount;
        }
        self.events.push(event);
        Ok(self.events.last().expect("just pushed"))
    }

    /// Setup + dispatch + reconfiguration, in microseconds. Compute is excluded.
    pub fn total_overhead(&self) -> u64 {
        self.setup_us_total + self.dispatch_us_total + self.reconfig_us_total
    }

    pub fn events_of(&self, category: Category) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.category == category)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cost_keys_grouped_or_flat() {
        let grouped: CostConstants =
            serde_json::from_str(r#"{"setup_us":{"tf":1,"hsa":2},"dispatch_us":5,"layer":"HSA"}"#).unwrap();
        assert_eq!((grouped.setup_us_tf, grouped.setup_us_hsa), (1, 2));
        assert_eq!((grouped.dispatch_us_tf, grouped.dispatch_us_hsa), (5, 5));
        assert_eq!(grouped.layer, Layer::Hsa);
        assert_eq!(grouped.reconfig_us, 7424);

        let flat: CostConstants = serde_json::from_str(r#"{"setup_us_hsa":3}"#).unwrap();
        assert_eq!((flat.setup_us_tf, flat.setup_us_hsa), (156_230, 3));
        let round: CostConstants = serde_json::from_str(&serde_json::to_string(&flat).unwrap()).unwrap();
        assert_eq!(round, flat);

        assert!(serde_json::from_str::<CostConstants>(r#"{"setup_us":1,"setup_us_tf":2}"#).is_err());
        assert!(serde_json::from_str::<CostConstants>(r#"{"setup":1}"#).is_err());
    }

    #[test]
    fn defaults_are_measured_constants() {
        let c = CostConstants::default();
        assert_eq!((c.setup_us_tf, c.setup_us_hsa), (156_230, 39_032));
        assert_eq!(c.reconfig_us, 7424);
        assert_eq!((c.dispatch_us_tf, c.dispatch_us_hsa), (27, 10));
        assert_eq!(c.with_layer(Layer::Hsa).setup_us(), 39_032);
        assert_eq!(c.dispatch_us(), 27);
    }

    #[test]
    fn setup_on_hsa_layer() {
        let costs = CostConstants::default().with_layer(Layer::Hsa);
        let mut r = TimelineReport::new();
        r.charge(Category::Setup, costs.setup_us(), "setup").unwrap();
        assert_eq!(r.setup_us_total, 39_032);
        assert_eq!(r.charge(Category::Setup, 1, "again"), Err(MetricsError::DoubleSetup));
        assert_eq!(r.setup_us_total, 39_032);
    }

    #[test]
    fn reconfig_charge() {
        let mut r = TimelineReport::new();
        r.charge(Category::Reconfig, CostConstants::default().reconfig_us, "role1").unwrap();
        assert_eq!(r.reconfig_us_total, 7424);
        assert_eq!(r.clock_us, 7424);
    }

    #[test]
    fn cold_tf_three_dispatches() {
        let c = CostConstants::default();
        let mut r = TimelineReport::new();
        r.charge(Category::Setup, c.setup_us(), "setup").unwrap();
        r.charge(Category::Reconfig, c.reconfig_us, "role1").unwrap();
        for _ in 0..3 {
            r.charge(Category::Dispatch, c.dispatch_us(), "fc").unwrap();
        }
        assert_eq!(r.total_overhead(), 163_735);
    }

    #[test]
    fn warm_hsa_single_dispatch() {
        let c = CostConstants::default().with_layer(Layer::Hsa);
        let mut r = TimelineReport::new();
        r.charge(Category::Setup, c.setup_us(), "setup").unwrap();
        r.charge(Category::Dispatch, c.dispatch_us(), "fc").unwrap();
        assert_eq!(r.total_overhead(), 39_042);
    }

    #[test]
    fn setup_only_total() {
        let mut r = TimelineReport::new();
        r.charge(Category::Setup, 156_230, "setup").unwrap();
        assert_eq!(r.total_overhead(), 156_230);
    }

    #[test]
    fn compute_does_not_advance_clock() {
        let mut r = TimelineReport::new();
        r.charge(Category::Compute, 500, "n1").unwrap();
        r.charge(Category::Compute, 20, "n1").unwrap();
        assert_eq!(r.clock_us, 0);
        assert_eq!(r.compute_cycles["n1"], 520);
        assert_eq!(r.total_overhead(), 0);
    }

    fn category() -> impl Strategy<Value = Category> {
        prop_oneof![
            Just(Category::Setup),
            Just(Category::Dispatch),
            Just(Category::Reconfig),
            Just(Category::Compute),
        ]
    }

    proptest! {
        #[test]
        fn overhead_is_sum_of_events(seq in proptest::collection::vec((category(), 0u64..100_000), 0..50)) {
            let mut r = TimelineReport::new();
            for (cat, amount) in seq {
                let _ = r.charge(cat, amount, "x");
            }
            let sum: u64 = r.events.iter().filter(|e| e.category.is_overhead()).map(|e| e.amount).sum();
            prop_assert_eq!(r.total_overhead(), sum);
            prop_assert!(r.setup_events <= 1);
            prop_assert_eq!(TimelineReport::from_events(r.events.clone()), r);
        }
    }
}
