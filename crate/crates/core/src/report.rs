//! Run metrics and report files: CSV time series, per-namespace rollups, a
//! ledger export, a JSON summary, and a one-page plain-text summary.
//!
//! Every writer iterates sorted structures only, so two runs of the same
//! scenario and seed produce byte-identical files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::accounting::UsageLedger;
use crate::scheduler::PolicyConfig;
use crate::storage::ReplicaSet;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NamespaceRollup {
    pub gpu_hours: f64,
    pub cpu_core_hours: f64,
    pub gpu_seconds: u64,
    pub cpu_millicore_seconds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: Option<u64>,
    pub policy: PolicyConfig,
    pub horizon_seconds: u64,
    /// Allocated GPU-seconds over capacity GPU-seconds in [0, horizon).
    pub gpu_utilization: f64,
    pub cpu_utilization: f64,
    pub total: NamespaceRollup,
    pub by_namespace: BTreeMap<String, NamespaceRollup>,
    pub arrivals: u64,
    pub completed: u64,
    pub running_at_horizon: u64,
    pub pending_at_horizon: u64,
    pub failed_at_horizon: u64,
    pub preemption_events: u64,
    pub preemption_victims: u64,
    pub outage_pod_failures: u64,
    pub replica_additions: u64,
    pub object_count: u64,
    pub degraded_placements_at_horizon: u64,
    pub max_unavailable_objects: u64,
    /// Instantaneous allocated-GPU fraction sampled after each event batch.
    #[serde(skip)]
    pub utilization_series: Vec<(u64, f64)>,
    #[serde(skip)]
    pub queue_depth_series: Vec<(u64, u64)>,
    #[serde(skip)]
    pub availability_series: Vec<(u64, u64)>,
}

impl MetricsReport {
    /// Pods accounted for: arrivals must equal completed + running + pending
    /// + failed at the horizon.
    pub fn pod_conservation_holds(&self) -> bool {
        self.arrivals
            == self.completed + self.running_at_horizon + self.pending_at_horizon
                + self.failed_at_horizon
    }

    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        use std::fmt::Write as _;
        let _ = writeln!(out, "scenario          : {}", self.scenario);
        let _ = writeln!(
            out,
            "seed              : {}",
            self.seed.map(|s| s.to_string()).unwrap_or_else(|| "-".into())
        );
        let _ = writeln!(
            out,
            "policy            : ordering={:?} quotas={} reservations={} backfill={}",
            self.policy.ordering,
            self.policy.quotas_enabled,
            self.policy.reservations_enabled,
            self.policy.backfill_enabled
        );
        let _ = writeln!(out, "horizon           : {} s", self.horizon_seconds);
        let _ = writeln!(out, "gpu utilization   : {:.4}", self.gpu_utilization);
        let _ = writeln!(out, "cpu utilization   : {:.4}", self.cpu_utilization);
        let _ = writeln!(out, "gpu-hours total   : {:.3}", self.total.gpu_hours);
        let _ = writeln!(out, "cpu core-hours    : {:.3}", self.total.cpu_core_hours);
        let _ = writeln!(out, "gpu-hours by namespace:");
        for (ns, rollup) in &self.by_namespace {
            let _ = writeln!(
                out,
                "  {ns:<24} gpu {:>12.3}  cpu {:>12.3}",
                rollup.gpu_hours, rollup.cpu_core_hours
            );
        }
        let _ = writeln!(
            out,
            "pods              : arrived {} completed {} running {} pending {} failed {}",
            self.arrivals,
            self.completed,
            self.running_at_horizon,
            self.pending_at_horizon,
            self.failed_at_horizon
        );
        let _ = writeln!(
            out,
            "preemptions       : {} events, {} victims",
            self.preemption_events, self.preemption_victims
        );
        let _ = writeln!(out, "outage pod fails  : {}", self.outage_pod_failures);
        let _ = writeln!(
            out,
            "storage           : {} objects, {} replica additions, {} degraded at horizon, max {} unavailable",
            self.object_count,
            self.replica_additions,
            self.degraded_placements_at_horizon,
            self.max_unavailable_objects
        );
        let _ = writeln!(
            out,
            "pod conservation  : {}",
            if self.pod_conservation_holds() { "ok" } else { "VIOLATED" }
        );
        out
    }
}

/// Write every report file into `dir`, returning the paths written.
pub fn write_report_files(
    dir: &Path,
    report: &MetricsReport,
    ledger: &UsageLedger,
    placements: &BTreeMap<String, ReplicaSet>,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let summary_json = dir.join("summary.json");
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(&summary_json, json + "\n")?;
    written.push(summary_json);

    let summary_txt = dir.join("summary.txt");
    std::fs::write(&summary_txt, report.summary_text())?;
    written.push(summary_txt);

    let utilization = dir.join("utilization.csv");
    {
        let mut w = csv::Writer::from_path(&utilization)?;
        w.write_record(["time", "utilization"])?;
        for (t, u) in &report.utilization_series {
            w.write_record([t.to_string(), u.to_string()])?;
        }
        w.flush()?;
    }
    written.push(utilization);

    let queue_depth = dir.join("queue_depth.csv");
    {
        let mut w = csv::Writer::from_path(&queue_depth)?;
        w.write_record(["time", "pending"])?;
        for (t, d) in &report.queue_depth_series {
            w.write_record([t.to_string(), d.to_string()])?;
        }
        w.flush()?;
    }
    written.push(queue_depth);

    let availability = dir.join("availability.csv");
    {
        let mut w = csv::Writer::from_path(&availability)?;
        w.write_record(["time", "unavailable_objects"])?;
        for (t, u) in &report.availability_series {
            w.write_record([t.to_string(), u.to_string()])?;
        }
        w.flush()?;
    }
    written.push(availability);

    let rollup = dir.join("rollup.csv");
    {
        let mut w = csv::Writer::from_path(&rollup)?;
        w.write_record(["namespace", "gpu_hours", "cpu_hours"])?;
        for (ns, r) in &report.by_namespace {
            w.write_record([ns.clone(), r.gpu_hours.to_string(), r.cpu_core_hours.to_string()])?;
        }
        w.flush()?;
    }
    written.push(rollup);

    let ledger_csv = dir.join("ledger.csv");
    {
        let mut w = csv::Writer::from_path(&ledger_csv)?;
        w.write_record(["namespace", "resource", "amount", "start", "end"])?;
        for rec in ledger.records() {
            w.write_record([
                rec.namespace.clone(),
                rec.resource.as_str().to_string(),
                rec.amount.to_string(),
                rec.start.to_string(),
                rec.end.map(|e| e.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
    }
    written.push(ledger_csv);

    // Placement map for storage audits.
    let placements_json = dir.join("placements.json");
    let json =
        serde_json::to_string_pretty(&placements.values().collect::<Vec<_>>())
            .expect("replica sets serialize");
    std::fs::write(&placements_json, json + "\n")?;
    written.push(placements_json);

    Ok(written)
}

/// One row of a policy comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub variant: String,
    pub gpu_utilization: f64,
    pub gpu_hours: f64,
    pub pending_at_horizon: u64,
    pub preemptions: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonTable {
    pub rows: Vec<VariantRow>,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["variant", "utilization", "gpu_hours", "pending_at_horizon", "preemptions"])
                .expect("csv write");
            for row in &self.rows {
                w.write_record([
                    row.variant.clone(),
                    row.gpu_utilization.to_string(),
                    row.gpu_hours.to_string(),
                    row.pending_at_horizon.to_string(),
                    row.preemptions.to_string(),
                ])
                .expect("csv write");
            }
            w.flush().expect("csv flush");
        }
        String::from_utf8(out).expect("csv is utf-8")
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conservation_check_is_an_exact_identity() {
        let mut report = MetricsReport {
            scenario: "t".into(),
            seed: None,
            policy: PolicyConfig::default(),
            horizon_seconds: 10,
            gpu_utilization: 0.0,
            cpu_utilization: 0.0,
            total: NamespaceRollup::default(),
            by_namespace: BTreeMap::new(),
            arrivals: 10,
            completed: 4,
            running_at_horizon: 3,
            pending_at_horizon: 3,
            failed_at_horizon: 0,
            preemption_events: 0,
            preemption_victims: 0,
            outage_pod_failures: 0,
            replica_additions: 0,
            object_count: 0,
            degraded_placements_at_horizon: 0,
            max_unavailable_objects: 0,
            utilization_series: vec![],
            queue_depth_series: vec![],
            availability_series: vec![],
        };
        assert!(report.pod_conservation_holds());
        report.completed = 5;
        assert!(!report.pod_conservation_holds());
    }

    #[test]
    fn comparison_csv_shape() {
        let table = ComparisonTable {
            rows: vec![VariantRow {
                variant: "fifo".into(),
                gpu_utilization: 0.5,
                gpu_hours: 12.0,
                pending_at_horizon: 3,
                preemptions: 0,
            }],
        };
        let csv = table.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "variant,utilization,gpu_hours,pending_at_horizon,preemptions"
        );
        assert_eq!(lines.next().unwrap(), "fifo,0.5,12,3,0");
    }
}
