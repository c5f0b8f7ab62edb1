use std::fmt::Write;

use super::{EfficiencyFigure, TimelineReport};

/// Plain-text overhead table: one row per overhead tier, then the total.
pub fn overhead_table(report: &TimelineReport) -> String {
    let rows = [
        ("device/kernel setup", "once", report.setup_us_total, report.setup_events),
        ("reconfiguration", "if not configured", report.reconfig_us_total, report.reconfig_events),
        ("dispatch latency", "every dispatch", report.dispatch_us_total, report.dispatch_events),
    ];
    let mut out = String::new();
    let _ = writeln!(out, "{:<22}{:<20}{:>14}{:>8}", "Operation", "Occurrence", "Charged [us]", "Events");
    for (name, occurrence, total, count) in rows {
        let _ = writeln!(out, "{name:<22}{occurrence:<20}{total:>14}{count:>8}");
    }
    let _ = writeln!(out, "{:<42}{:>14}", "total overhead", report.total_overhead());
    if !report.compute_cycles.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<30}{:>14}", "Node", "Cycles");
        for (node, cycles) in &report.compute_cycles {
            let _ = writeln!(out, "{node:<30}{cycles:>14}");
        }
    }
    out
}

pub fn efficiency_table(figures: &[EfficiencyFigure]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10}{:>14}{:>16}{:>16}{:>12}",
        "Role", "OPs", "accel OP/cyc", "CPU OP/cyc", "increase"
    );
    for f in figures {
        let _ = writeln!(
            out,
            "{:<10}{:>14}{:>16.3}{:>16.3}{:>11.2}x",
            f.role.as_str(),
            f.op_count,
            f.accel_op_per_cycle.to_f64(),
            f.cpu_op_per_cycle.to_f64(),
            f.increase_f64()
        );
    }
    out
}
