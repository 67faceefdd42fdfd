//! Report rendering: fixed-width text, lossless JSON and flat CSV.
//!
//! Emission is deterministic — equal reports produce byte-identical output,
//! and a report emitted as JSON parses back into a structurally equal value.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{
    classify_overheads, OverheadBreakdown, ProfileReport, RegionKind, RegionStats, ThreadTimings,
};

/// Output format for [`emit_report`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidArgument(format!(
                "unknown report format '{other}' (expected text, json or csv)"
            ))),
        }
    }
}

/// One thread's timing row as it appears in reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreadRow {
    pub tid: usize,
    pub body_s: f64,
    pub enter_wait_s: f64,
    pub exit_barrier_s: f64,
    pub explicit_barrier_s: f64,
    pub mgmt_s: f64,
    pub idle_limpar_s: f64,
    pub entry_count: u64,
}

impl ThreadRow {
    fn from_timings(tid: usize, t: &ThreadTimings) -> Self {
        ThreadRow {
            tid,
            body_s: t.body_s,
            enter_wait_s: t.enter_wait_s,
            exit_barrier_s: t.exit_barrier_s,
            explicit_barrier_s: t.explicit_barrier_s,
            mgmt_s: t.mgmt_s,
            idle_limpar_s: t.idle_limpar_s,
            entry_count: t.entry_count,
        }
    }
}

/// One construct's entry in a report: identity, wall time, per-thread rows
/// and its overhead breakdown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub id: u64,
    pub kind: RegionKind,
    pub label: String,
    pub wall_s: f64,
    pub completed: bool,
    pub top_level: bool,
    pub threads: Vec<ThreadRow>,
    pub overheads: OverheadBreakdown,
}

impl RegionReport {
    pub(crate) fn from_stats(stats: &RegionStats, overheads: OverheadBreakdown) -> Self {
        RegionReport {
            id: stats.descriptor.id,
            kind: stats.descriptor.kind,
            label: stats.descriptor.label.clone(),
            wall_s: stats.wall_s,
            completed: stats.completed,
            top_level: stats.top_level,
            threads: stats
                .per_thread
                .iter()
                .enumerate()
                .map(|(tid, t)| ThreadRow::from_timings(tid, t))
                .collect(),
            overheads,
        }
    }

    /// Rebuilds the raw stats this entry was derived from.
    pub fn to_stats(&self) -> RegionStats {
        RegionStats {
            descriptor: crate::profile::RegionDescriptor {
                id: self.id,
                kind: self.kind,
                label: self.label.clone(),
            },
            wall_s: self.wall_s,
            per_thread: self
                .threads
                .iter()
                .map(|r| ThreadTimings {
                    body_s: r.body_s,
                    enter_wait_s: r.enter_wait_s,
                    exit_barrier_s: r.exit_barrier_s,
                    explicit_barrier_s: r.explicit_barrier_s,
                    mgmt_s: r.mgmt_s,
                    idle_limpar_s: r.idle_limpar_s,
                    entry_count: r.entry_count,
                })
                .collect(),
            completed: self.completed,
            top_level: self.top_level,
        }
    }
}

/// Renders a report into the requested format.
pub fn emit_report(report: &ProfileReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Text => emit_text(report).into_bytes(),
        ReportFormat::Json => {
            let mut bytes =
                serde_json::to_vec_pretty(report).expect("report serialization cannot fail");
            bytes.push(b'\n');
            bytes
        }
        ReportFormat::Csv => emit_csv(report),
    }
}

const OVHD_HEADER: &str = "Ovhds (%) = Synch (%) + Imbal (%) + Limpar (%) + Mgmt (%)";

fn overhead_line(o: &OverheadBreakdown) -> String {
    format!(
        "{:.6} ({:.2}) = {:.6} ({:.2}) + {:.6} ({:.2}) + {:.6} ({:.2}) + {:.6} ({:.2})",
        o.ovhds_s,
        o.ovhds_pct,
        o.synch_s,
        o.synch_pct,
        o.imbal_s,
        o.imbal_pct,
        o.limpar_s,
        o.limpar_pct,
        o.mgmt_s,
        o.mgmt_pct,
    )
}

fn emit_text(report: &ProfileReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "fork-join profile");
    let _ = writeln!(out, "=================");
    let _ = writeln!(out, "threads:           {}", report.team_size);
    let _ = writeln!(
        out,
        "parallel regions:  {}",
        report.census.parallel_regions
    );
    let _ = writeln!(out, "parallel loops:    {}", report.census.parallel_loops);
    let _ = writeln!(out, "explicit barriers: {}", report.census.barriers);
    let _ = writeln!(out, "program wall time: {:.6} s", report.program_wall_s);
    let _ = writeln!(
        out,
        "parallel coverage: {:.2}%",
        report.parallel_coverage * 100.0
    );
    for region in &report.regions {
        let _ = writeln!(out);
        let flags = match (region.completed, region.top_level) {
            (false, _) => " [incomplete]",
            (true, false) if region.kind == RegionKind::Parallel => " [nested]",
            _ => "",
        };
        let _ = writeln!(
            out,
            "[R{:03}] {} '{}'  wall {:.6} s{}",
            region.id, region.kind, region.label, region.wall_s, flags
        );
        let _ = writeln!(
            out,
            "  {:>4} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>8}",
            "tid", "body", "enter_wait", "exit_bar", "expl_bar", "mgmt", "limpar", "entries"
        );
        for t in &region.threads {
            let _ = writeln!(
                out,
                "  {:>4} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>8}",
                t.tid,
                t.body_s,
                t.enter_wait_s,
                t.exit_barrier_s,
                t.explicit_barrier_s,
                t.mgmt_s,
                t.idle_limpar_s,
                t.entry_count
            );
        }
        let _ = writeln!(out, "  {OVHD_HEADER}");
        let _ = writeln!(out, "  {}", overhead_line(&region.overheads));
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "totals:");
    let _ = writeln!(out, "  {OVHD_HEADER}");
    let _ = writeln!(out, "  {}", overhead_line(&report.totals));
    out
}

fn emit_csv(report: &ProfileReport) -> Vec<u8> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            "region_id",
            "kind",
            "label",
            "wall_s",
            "completed",
            "tid",
            "body_s",
            "enter_wait_s",
            "exit_barrier_s",
            "explicit_barrier_s",
            "mgmt_s",
            "idle_limpar_s",
            "entry_count",
        ])
        .expect("csv write to Vec cannot fail");
    for region in &report.regions {
        for t in &region.threads {
            writer
                .write_record([
                    region.id.to_string(),
                    region.kind.to_string(),
                    region.label.clone(),
                    format!("{}", region.wall_s),
                    region.completed.to_string(),
                    t.tid.to_string(),
                    format!("{}", t.body_s),
                    format!("{}", t.enter_wait_s),
                    format!("{}", t.exit_barrier_s),
                    format!("{}", t.explicit_barrier_s),
                    format!("{}", t.mgmt_s),
                    format!("{}", t.idle_limpar_s),
                    t.entry_count.to_string(),
                ])
                .expect("csv write to Vec cannot fail");
        }
    }
    writer.into_inner().expect("csv flush to Vec cannot fail")
}

/// Recomputes a region's breakdown from its raw stats; used by tests to
/// cross-check emitted overheads.
pub fn recompute_overheads(region: &RegionReport) -> OverheadBreakdown {
    classify_overheads(&region.to_stats())
}
