//! CSV and JSON outputs. Every number is written as a decimal string and
//! nothing time-dependent goes into the run files, so the same manifest
//! reproduces them byte for byte.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use ppbsp_core::counters::Op;
use ppbsp_core::settlement::RegulatorReport;

use crate::bench::{BenchReport, ScalingPoint};
use crate::metrics::{MetricsLedger, PeriodKind};
use crate::simnet::RunOutcome;

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 fields")
}

fn row<const N: usize>(w: &mut csv::Writer<Vec<u8>>, fields: [&str; N]) {
    w.write_record(fields).expect("in-memory writer");
}

/// `model,supplier,user,bill`, one row per customer.
pub fn bills_csv(run: &RunOutcome) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    row(&mut w, ["model", "supplier", "user", "bill"]);
    for (s, u, b) in run.billing.monthly_bills() {
        row(&mut w, [run.model.name(), &s.to_string(), &u.to_string(), &b.normalized().to_string()]);
    }
    finish(w)
}

/// Long format: `model,period,slot,subject,metric,value`. Subjects are
/// entities (with an op name as metric) or segments (messages, table_bits,
/// wire_bytes).
pub fn metrics_csv(model: &str, ledger: &MetricsLedger) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    row(&mut w, ["model", "period", "slot", "subject", "metric", "value"]);
    for p in &ledger.periods {
        let slot = p.slot.map(|s| s.to_string()).unwrap_or_default();
        for (e, ops) in &p.ops {
            for op in Op::ALL {
                row(&mut w, [model, p.kind.name(), &slot, &e.to_string(), op.name(), &ops.get(op).to_string()]);
            }
        }
        for (seg, t) in &p.traffic {
            for (metric, v) in [("messages", t.messages), ("table_bits", t.table_bits), ("wire_bytes", t.wire_bytes)] {
                row(&mut w, [model, p.kind.name(), &slot, seg.name(), metric, &v.to_string()]);
            }
        }
    }
    finish(w)
}

/// Per-slot market statistics.
pub fn slots_csv(run: &RunOutcome) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    row(&mut w, ["model", "slot", "t_c_under", "t_c_over", "t_p_under", "t_p_over", "rm_volume", "billed_before_aggregates"]);
    for s in &run.slots {
        let a = &s.aggregates;
        row(
            &mut w,
            [
                run.model.name(),
                &s.slot.to_string(),
                &a.t_c_under.to_string(),
                &a.t_c_over.to_string(),
                &a.t_p_under.to_string(),
                &a.t_p_over.to_string(),
                &s.rm_volume.to_string(),
                if s.billed_before_aggregates { "true" } else { "false" },
            ],
        );
    }
    finish(w)
}

pub fn report_json(report: &RegulatorReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn bench_csv(report: &BenchReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    row(&mut w, ["primitive", "key_bits", "reps", "mean_ms", "stddev_ms", "reference_ms", "ratio"]);
    for r in &report.rows {
        row(
            &mut w,
            [
                r.op.name(),
                &report.key_bits.to_string(),
                &r.reps.to_string(),
                &format!("{:.6}", r.mean_ms),
                &format!("{:.6}", r.stddev_ms),
                &format!("{:.2}", r.reference_ms),
                &format!("{:.4}", r.ratio()),
            ],
        );
    }
    finish(w)
}

pub fn scaling_csv(points: &[ScalingPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    row(&mut w, ["n_users", "billing_ms", "bill_calcs"]);
    for p in points {
        row(&mut w, [&p.n_users.to_string(), &format!("{:.6}", p.billing_ms), &p.bill_calcs.to_string()]);
    }
    finish(w)
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: String,
    pub scenario: String,
    pub scenario_sha256: String,
    pub model: String,
    pub key_bits: u32,
    pub seed: u64,
    pub workers: usize,
    pub verify: bool,
    pub inject_dishonest_supplier: Option<String>,
    pub misreport_offset: Option<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Write the standard file set of a run into `dir`.
pub fn write_run(dir: &Path, run: &RunOutcome, manifest: &RunManifest) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("bills.csv"), bills_csv(run))?;
    fs::write(dir.join("metrics.csv"), metrics_csv(run.model.name(), &run.metrics))?;
    fs::write(dir.join("slots.csv"), slots_csv(run))?;
    fs::write(dir.join("regulator_report.json"), report_json(&run.billing.report))?;
    fs::write(dir.join("manifest.json"), manifest.to_json())?;
    Ok(())
}

/// Sum of table bits per segment over all periods of `kind`.
pub fn segment_totals(ledger: &MetricsLedger, kind: PeriodKind) -> Vec<(String, u64)> {
    crate::network::Segment::TABLE
        .iter()
        .map(|s| (s.name().to_string(), ledger.total_table_bits(*s, kind)))
        .collect()
}
