//! Per-thread, per-region timing collection and overhead analysis.
//!
//! Every construct executed by a team (parallel regions, work-shared loops,
//! barriers, critical sections, ordered blocks) reports timing events here.
//! Recording happens into thread-local buffers so the hot path never takes a
//! shared lock; buffers are merged on the master after the region joins.
//!
//! After a run the profiler computes a census of the constructs seen, the
//! parallel coverage, and a breakdown of lost time into four categories:
//!
//! * **synch** — waiting at explicit barriers and to enter critical/ordered
//!   sections,
//! * **imbal** — waiting at the implicit exit barrier of a work-sharing or
//!   parallel construct because peers still had work,
//! * **limpar** — threads idle because a construct exposed no work for them,
//! * **mgmt** — fork/join bookkeeping and lock signaling.

mod report;

pub use report::{emit_report, recompute_overheads, RegionReport, ReportFormat, ThreadRow};

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::time::Instant;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runtime::TeamContext;

/// The construct a region descriptor stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionKind {
    #[serde(rename = "parallel")]
    Parallel,
    #[serde(rename = "parallel-loop")]
    ParallelLoop,
    #[serde(rename = "barrier")]
    Barrier,
    #[serde(rename = "critical")]
    Critical,
    #[serde(rename = "ordered")]
    Ordered,
    /// Synthetic entry carrying the one-time worker creation cost of a pool.
    #[serde(rename = "pool-setup")]
    PoolSetup,
}

impl RegionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionKind::Parallel => "parallel",
            RegionKind::ParallelLoop => "parallel-loop",
            RegionKind::Barrier => "barrier",
            RegionKind::Critical => "critical",
            RegionKind::Ordered => "ordered",
            RegionKind::PoolSetup => "pool-setup",
        }
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identity of a profiled construct: ids are unique per run and stable
/// across threads; a (kind, label) pair re-entered later accumulates into
/// the same descriptor instead of creating a new one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionDescriptor {
    pub id: u64,
    pub kind: RegionKind,
    pub label: String,
}

/// One timing field of [`ThreadTimings`], used when recording events.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimingField {
    Body,
    EnterWait,
    ExitBarrier,
    ExplicitBarrier,
    Mgmt,
    IdleLimpar,
}

impl TimingField {
    /// Looks a field up by its report column name. Unknown names are a
    /// programming error and are surfaced immediately.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "body_s" => TimingField::Body,
            "enter_wait_s" => TimingField::EnterWait,
            "exit_barrier_s" => TimingField::ExitBarrier,
            "explicit_barrier_s" => TimingField::ExplicitBarrier,
            "mgmt_s" => TimingField::Mgmt,
            "idle_limpar_s" => TimingField::IdleLimpar,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown timing field '{other}'"
                )))
            }
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TimingField::Body => "body_s",
            TimingField::EnterWait => "enter_wait_s",
            TimingField::ExitBarrier => "exit_barrier_s",
            TimingField::ExplicitBarrier => "explicit_barrier_s",
            TimingField::Mgmt => "mgmt_s",
            TimingField::IdleLimpar => "idle_limpar_s",
        }
    }
}

/// Accumulated seconds one thread spent in the phases of one construct.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ThreadTimings {
    /// Executing user body code.
    pub body_s: f64,
    /// Blocked before entering a critical or ordered section.
    pub enter_wait_s: f64,
    /// Waiting at the implicit exit barrier of a work-sharing or parallel
    /// construct.
    pub exit_barrier_s: f64,
    /// Waiting at explicit barriers.
    pub explicit_barrier_s: f64,
    /// Fork/join and signaling bookkeeping.
    pub mgmt_s: f64,
    /// Idle because the construct exposed no work for this thread.
    pub idle_limpar_s: f64,
    /// Number of times this thread entered the construct.
    pub entry_count: u64,
}

impl ThreadTimings {
    pub(crate) fn add(&mut self, field: TimingField, seconds: f64) {
        match field {
            TimingField::Body => self.body_s += seconds,
            TimingField::EnterWait => self.enter_wait_s += seconds,
            TimingField::ExitBarrier => self.exit_barrier_s += seconds,
            TimingField::ExplicitBarrier => self.explicit_barrier_s += seconds,
            TimingField::Mgmt => self.mgmt_s += seconds,
            TimingField::IdleLimpar => self.idle_limpar_s += seconds,
        }
    }

    pub(crate) fn merge(&mut self, other: &ThreadTimings) {
        self.body_s += other.body_s;
        self.enter_wait_s += other.enter_wait_s;
        self.exit_barrier_s += other.exit_barrier_s;
        self.explicit_barrier_s += other.explicit_barrier_s;
        self.mgmt_s += other.mgmt_s;
        self.idle_limpar_s += other.idle_limpar_s;
        self.entry_count += other.entry_count;
    }

    /// Sum of all duration fields, in the declared field order.
    pub fn total_s(&self) -> f64 {
        self.body_s
            + self.enter_wait_s
            + self.exit_barrier_s
            + self.explicit_barrier_s
            + self.mgmt_s
            + self.idle_limpar_s
    }
}

/// Timing record of one construct: descriptor, master-observed wall time and
/// one [`ThreadTimings`] row per team thread.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionStats {
    pub descriptor: RegionDescriptor,
    pub wall_s: f64,
    pub per_thread: Vec<ThreadTimings>,
    /// False when a body panicked while this construct was live.
    pub completed: bool,
    /// True when the construct was entered outside any enclosing region.
    pub top_level: bool,
}

/// Seconds and percentages of lost time per overhead category.
///
/// `ovhds_s` is the sum of the four category fields in declaration order,
/// and `ovhds_pct` the sum of the four percentage fields, so the reported
/// identity `Ovhds = Synch + Imbal + Limpar + Mgmt` holds exactly.
/// Percentages are relative to available CPU time (wall seconds times team
/// size).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OverheadBreakdown {
    pub synch_s: f64,
    pub imbal_s: f64,
    pub limpar_s: f64,
    pub mgmt_s: f64,
    pub ovhds_s: f64,
    pub synch_pct: f64,
    pub imbal_pct: f64,
    pub limpar_pct: f64,
    pub mgmt_pct: f64,
    pub ovhds_pct: f64,
}

/// Counts of distinct constructs encountered during the profiled window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub parallel_regions: usize,
    pub parallel_loops: usize,
    pub barriers: usize,
}

/// Whole-run profile: census, coverage, per-region tables and totals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub team_size: usize,
    pub census: Census,
    pub program_wall_s: f64,
    pub parallel_coverage: f64,
    pub regions: Vec<RegionReport>,
    pub totals: OverheadBreakdown,
}

impl ProfileReport {
    /// Parses a report previously emitted as JSON.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes)
            .map_err(|e| Error::InvalidArgument(format!("malformed report json: {e}")))
    }
}

/// Splits a finished region's lost time into the four overhead categories.
///
/// Implicit exit-barrier waits count as imbalance; explicit-barrier and
/// section-entry waits as synchronization; zero-work idling as limited
/// parallelism; fork/join and signaling as thread management.
pub fn classify_overheads(stats: &RegionStats) -> OverheadBreakdown {
    let mut synch_s = 0.0;
    let mut imbal_s = 0.0;
    let mut limpar_s = 0.0;
    let mut mgmt_s = 0.0;
    for t in &stats.per_thread {
        synch_s += t.explicit_barrier_s + t.enter_wait_s;
        imbal_s += t.exit_barrier_s;
        limpar_s += t.idle_limpar_s;
        mgmt_s += t.mgmt_s;
    }
    let available = stats.wall_s * stats.per_thread.len() as f64;
    breakdown_from_sums(synch_s, imbal_s, limpar_s, mgmt_s, available)
}

fn breakdown_from_sums(
    synch_s: f64,
    imbal_s: f64,
    limpar_s: f64,
    mgmt_s: f64,
    available_cpu_s: f64,
) -> OverheadBreakdown {
    let pct = |s: f64| {
        if available_cpu_s > 0.0 {
            s / available_cpu_s * 100.0
        } else {
            0.0
        }
    };
    let synch_pct = pct(synch_s);
    let imbal_pct = pct(imbal_s);
    let limpar_pct = pct(limpar_s);
    let mgmt_pct = pct(mgmt_s);
    OverheadBreakdown {
        synch_s,
        imbal_s,
        limpar_s,
        mgmt_s,
        ovhds_s: synch_s + imbal_s + limpar_s + mgmt_s,
        synch_pct,
        imbal_pct,
        limpar_pct,
        mgmt_pct,
        ovhds_pct: synch_pct + imbal_pct + limpar_pct + mgmt_pct,
    }
}

/// Fraction of program wall time spent inside top-level parallel regions,
/// clamped to [0, 1]. Zero program time is defined as zero coverage.
pub fn parallel_coverage(report: &ProfileReport) -> f64 {
    if report.program_wall_s <= 0.0 {
        return 0.0;
    }
    let region_wall: f64 = report
        .regions
        .iter()
        .filter(|r| r.kind == RegionKind::Parallel && r.top_level)
        .map(|r| r.wall_s)
        .sum();
    (region_wall / report.program_wall_s).clamp(0.0, 1.0)
}

/// Records one timing event against (construct, calling thread).
///
/// The duration is accumulated into the caller's thread-local buffer and the
/// entry count is bumped; nothing is shared until the region joins. Outside
/// any region this is a no-op. Negative or non-finite durations are
/// rejected.
pub fn record_event(
    ctx: &TeamContext,
    kind: RegionKind,
    label: &str,
    field: TimingField,
    seconds: f64,
) -> Result<()> {
    if !seconds.is_finite() || seconds < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "event duration must be finite and nonnegative, got {seconds}"
        )));
    }
    if ctx.team().is_none() {
        return Ok(());
    }
    let id = ctx.resolve_descriptor(kind, label);
    ctx.with_recorder(|rec| {
        rec.enter(id);
        rec.add(id, field, seconds);
    });
    Ok(())
}

// ---------------------------------------------------------------------------
// Collection machinery
// ---------------------------------------------------------------------------

/// Thread-local accumulation buffer. One per logical thread per region;
/// merged into the profiler by the master after the join.
#[derive(Default)]
pub(crate) struct LocalRecorder {
    rows: HashMap<u64, ThreadTimings>,
    walls: HashMap<u64, f64>,
    // descriptor-id cache so repeated entries skip the profiler lock
    ids: HashMap<RegionKind, HashMap<String, u64>>,
}

impl LocalRecorder {
    pub(crate) fn enter(&mut self, id: u64) {
        self.rows.entry(id).or_default().entry_count += 1;
    }

    pub(crate) fn add(&mut self, id: u64, field: TimingField, seconds: f64) {
        self.rows.entry(id).or_default().add(field, seconds);
    }

    pub(crate) fn add_wall(&mut self, id: u64, seconds: f64) {
        *self.walls.entry(id).or_insert(0.0) += seconds;
    }

    pub(crate) fn cached_id(&self, kind: RegionKind, label: &str) -> Option<u64> {
        self.ids.get(&kind).and_then(|m| m.get(label)).copied()
    }

    pub(crate) fn cache_id(&mut self, kind: RegionKind, label: &str, id: u64) {
        self.ids
            .entry(kind)
            .or_default()
            .insert(label.to_string(), id);
    }

    pub(crate) fn take_data(&mut self) -> RecorderData {
        RecorderData {
            rows: std::mem::take(&mut self.rows),
            walls: std::mem::take(&mut self.walls),
        }
    }
}

pub(crate) struct RecorderData {
    pub(crate) rows: HashMap<u64, ThreadTimings>,
    pub(crate) walls: HashMap<u64, f64>,
}

struct RegionAccum {
    kind: RegionKind,
    label: String,
    wall_s: f64,
    completed: bool,
    top_level: bool,
    team_size: usize,
    rows: Vec<ThreadTimings>,
}

impl RegionAccum {
    fn to_stats(&self, id: u64) -> RegionStats {
        let mut per_thread = self.rows.clone();
        if per_thread.len() < self.team_size {
            per_thread.resize(self.team_size, ThreadTimings::default());
        }
        RegionStats {
            descriptor: RegionDescriptor {
                id,
                kind: self.kind,
                label: self.label.clone(),
            },
            wall_s: self.wall_s,
            per_thread,
            completed: self.completed,
            top_level: self.top_level,
        }
    }
}

struct ProfilerInner {
    origin: Instant,
    next_id: u64,
    index: HashMap<(RegionKind, String), u64>,
    regions: BTreeMap<u64, RegionAccum>,
    max_team: usize,
}

impl ProfilerInner {
    fn fresh() -> Self {
        ProfilerInner {
            origin: Instant::now(),
            next_id: 0,
            index: HashMap::new(),
            regions: BTreeMap::new(),
            max_team: 0,
        }
    }

    fn register(&mut self, kind: RegionKind, label: &str, top_level: bool) -> u64 {
        if let Some(&id) = self.index.get(&(kind, label.to_string())) {
            return id;
        }
        let id = self.next_id;
        self.next_id += 1;
        self.index.insert((kind, label.to_string()), id);
        self.regions.insert(
            id,
            RegionAccum {
                kind,
                label: label.to_string(),
                wall_s: 0.0,
                completed: true,
                top_level,
                team_size: 0,
                rows: Vec::new(),
            },
        );
        id
    }
}

/// Shared event sink. One per pool; teams hold it through their contexts.
pub(crate) struct Profiler {
    inner: Mutex<ProfilerInner>,
}

impl Profiler {
    pub(crate) fn new() -> Self {
        Profiler {
            inner: Mutex::new(ProfilerInner::fresh()),
        }
    }

    pub(crate) fn register(&self, kind: RegionKind, label: &str, top_level: bool) -> u64 {
        self.inner.lock().register(kind, label, top_level)
    }

    /// Records the one-time worker creation cost as a synthetic mgmt entry,
    /// keeping it out of the first region's overheads.
    pub(crate) fn record_pool_setup(&self, seconds: f64) {
        let mut inner = self.inner.lock();
        let id = inner.register(RegionKind::PoolSetup, "pool-setup", false);
        let accum = inner.regions.get_mut(&id).expect("registered above");
        accum.wall_s += seconds;
        accum.team_size = accum.team_size.max(1);
        if accum.rows.is_empty() {
            accum.rows.push(ThreadTimings::default());
        }
        accum.rows[0].mgmt_s += seconds;
        accum.rows[0].entry_count += 1;
        inner.max_team = inner.max_team.max(1);
    }

    /// Merges a thread's buffered events. Called post-join on the master.
    pub(crate) fn merge_thread(&self, tid: usize, team_size: usize, data: RecorderData) {
        let mut inner = self.inner.lock();
        inner.max_team = inner.max_team.max(team_size);
        for (id, timings) in data.rows {
            if let Some(accum) = inner.regions.get_mut(&id) {
                accum.team_size = accum.team_size.max(team_size);
                if accum.rows.len() <= tid {
                    accum.rows.resize(tid + 1, ThreadTimings::default());
                }
                accum.rows[tid].merge(&timings);
            }
        }
        for (id, wall) in data.walls {
            if let Some(accum) = inner.regions.get_mut(&id) {
                accum.wall_s += wall;
            }
        }
    }

    /// Adds a single field on one thread's row, post-join.
    pub(crate) fn add_field(
        &self,
        id: u64,
        tid: usize,
        field: TimingField,
        seconds: f64,
    ) {
        let mut inner = self.inner.lock();
        if let Some(accum) = inner.regions.get_mut(&id) {
            if accum.rows.len() <= tid {
                accum.rows.resize(tid + 1, ThreadTimings::default());
            }
            accum.rows[tid].add(field, seconds);
        }
    }

    pub(crate) fn finish_region(&self, id: u64, wall_s: f64, completed: bool) {
        let mut inner = self.inner.lock();
        if let Some(accum) = inner.regions.get_mut(&id) {
            accum.wall_s += wall_s;
            accum.completed &= completed;
        }
    }

    /// Drops everything recorded so far and restarts the program clock.
    pub(crate) fn reset(&self) {
        *self.inner.lock() = ProfilerInner::fresh();
    }

    /// Builds the whole-run report for everything recorded since the last
    /// reset. Regions appear in creation order.
    pub(crate) fn report(&self) -> ProfileReport {
        let inner = self.inner.lock();
        let program_wall_s = inner.origin.elapsed().as_secs_f64();
        let mut regions = Vec::with_capacity(inner.regions.len());
        let mut census = Census::default();
        let mut region_wall = 0.0;
        let mut synch_s = 0.0;
        let mut imbal_s = 0.0;
        let mut limpar_s = 0.0;
        let mut mgmt_s = 0.0;
        for (&id, accum) in &inner.regions {
            match accum.kind {
                RegionKind::Parallel => census.parallel_regions += 1,
                RegionKind::ParallelLoop => census.parallel_loops += 1,
                RegionKind::Barrier => census.barriers += 1,
                _ => {}
            }
            if accum.kind == RegionKind::Parallel && accum.top_level {
                region_wall += accum.wall_s;
            }
            let stats = accum.to_stats(id);
            let overheads = classify_overheads(&stats);
            synch_s += overheads.synch_s;
            imbal_s += overheads.imbal_s;
            limpar_s += overheads.limpar_s;
            mgmt_s += overheads.mgmt_s;
            regions.push(RegionReport::from_stats(&stats, overheads));
        }
        let team_size = inner.max_team;
        let coverage = if program_wall_s > 0.0 {
            (region_wall / program_wall_s).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let totals = breakdown_from_sums(
            synch_s,
            imbal_s,
            limpar_s,
            mgmt_s,
            program_wall_s * team_size as f64,
        );
        ProfileReport {
            team_size,
            census,
            program_wall_s,
            parallel_coverage: coverage,
            regions,
            totals,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats_with(rows: Vec<ThreadTimings>, wall_s: f64) -> RegionStats {
        RegionStats {
            descriptor: RegionDescriptor {
                id: 0,
                kind: RegionKind::Parallel,
                label: "t".to_string(),
            },
            wall_s,
            per_thread: rows,
            completed: true,
            top_level: true,
        }
    }

    #[test]
    fn balanced_region_has_zero_overheads() {
        let rows = vec![
            ThreadTimings {
                body_s: 10.0,
                entry_count: 1,
                ..Default::default()
            };
            2
        ];
        let b = classify_overheads(&stats_with(rows, 10.0));
        assert_eq!(b.synch_s, 0.0);
        assert_eq!(b.imbal_s, 0.0);
        assert_eq!(b.limpar_s, 0.0);
        assert_eq!(b.mgmt_s, 0.0);
        assert_eq!(b.ovhds_s, 0.0);
        assert_eq!(b.ovhds_pct, 0.0);
    }

    #[test]
    fn exit_barrier_wait_classifies_as_imbalance() {
        // 2 threads, 20 s wall, thread 1 spent 10 s at the exit barrier:
        // 10 s of imbalance = 25% of the 40 s of available CPU time.
        let t1 = ThreadTimings {
            exit_barrier_s: 10.0,
            ..Default::default()
        };
        let b = classify_overheads(&stats_with(vec![ThreadTimings::default(), t1], 20.0));
        assert_eq!(b.imbal_s, 10.0);
        assert_eq!(b.imbal_pct, 25.0);
        assert_eq!(b.ovhds_s, 10.0);
    }

    #[test]
    fn enter_wait_classifies_as_synchronization() {
        // 2 threads, 10 s wall, thread 1 blocked 5 s entering a critical
        // section: 5 s of synch = 25% of 20 s available.
        let t1 = ThreadTimings {
            enter_wait_s: 5.0,
            ..Default::default()
        };
        let b = classify_overheads(&stats_with(vec![ThreadTimings::default(), t1], 10.0));
        assert_eq!(b.synch_s, 5.0);
        assert_eq!(b.synch_pct, 25.0);
    }

    #[test]
    fn category_sum_identity_is_exact() {
        let t = ThreadTimings {
            enter_wait_s: 0.1,
            exit_barrier_s: 0.3,
            explicit_barrier_s: 0.7,
            mgmt_s: 0.011,
            idle_limpar_s: 0.023,
            ..Default::default()
        };
        let b = classify_overheads(&stats_with(vec![t], 1.0));
        assert_eq!(b.ovhds_s, b.synch_s + b.imbal_s + b.limpar_s + b.mgmt_s);
        assert_eq!(
            b.ovhds_pct,
            b.synch_pct + b.imbal_pct + b.limpar_pct + b.mgmt_pct
        );
    }

    #[test]
    fn zero_wall_yields_zero_percentages() {
        let t = ThreadTimings {
            mgmt_s: 1.0,
            ..Default::default()
        };
        let b = classify_overheads(&stats_with(vec![t], 0.0));
        assert_eq!(b.mgmt_s, 1.0);
        assert_eq!(b.mgmt_pct, 0.0);
        assert_eq!(b.ovhds_pct, 0.0);
    }

    #[test]
    fn field_lookup_rejects_unknown_names() {
        assert!(TimingField::from_name("body_s").is_ok());
        assert!(TimingField::from_name("bogus").is_err());
    }

    #[test]
    fn coverage_is_clamped_and_zero_for_empty_program() {
        let report = ProfileReport {
            team_size: 0,
            census: Census::default(),
            program_wall_s: 0.0,
            parallel_coverage: 0.0,
            regions: vec![],
            totals: OverheadBreakdown::default(),
        };
        assert_eq!(parallel_coverage(&report), 0.0);
    }
}
