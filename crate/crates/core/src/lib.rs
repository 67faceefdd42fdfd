//! Shared-memory fork-join runtime with work-sharing loop schedulers,
//! synchronization constructs and a built-in overhead profiler.
//!
//! A [`Pool`] of reusable workers executes parallel regions; inside a region
//! every thread gets a [`TeamContext`] it threads through the constructs:
//!
//! * [`parallel_for`] splits a loop across the team under a static, dynamic,
//!   guided or runtime-selected [`ScheduleSpec`], with an optional `nowait`
//!   on the implicit exit barrier;
//! * [`barrier`], [`critical`] and [`ordered_execute`] synchronize the team
//!   and report how long callers were blocked;
//! * the profiler classifies all lost time into synchronization, imbalance,
//!   limited-parallelism and thread-management overhead and renders
//!   [`ProfileReport`]s as text, JSON or CSV.
//!
//! The [`mod@bench`] module carries matrix-multiplication workloads in a naive
//! and an optimized flavor whose profiles demonstrate the cost of barriers,
//! access patterns and region placement, plus synthetic skewed loads for
//! validating the overhead classifier.
//!
//! ```
//! use forkprof::{parallel_for, Pool, ScheduleSpec};
//! use std::sync::atomic::{AtomicUsize, Ordering};
//!
//! let pool = Pool::new(4).unwrap();
//! let hits = AtomicUsize::new(0);
//! pool.parallel_region(4, "count", |ctx| {
//!     parallel_for(ctx, 100, &ScheduleSpec::static_block(), false, "loop", |_, chunk| {
//!         hits.fetch_add(chunk.len(), Ordering::Relaxed);
//!     })
//!     .unwrap();
//! })
//! .unwrap();
//! assert_eq!(hits.load(Ordering::Relaxed), 100);
//! let report = pool.profile_report();
//! assert_eq!(report.census.parallel_regions, 1);
//! ```

mod error;
mod runtime;
mod schedule;
mod sync;

pub mod bench;
pub mod profile;

pub use error::{Error, Result};
pub use profile::{
    classify_overheads, emit_report, parallel_coverage, record_event, Census, OverheadBreakdown,
    ProfileReport, RegionDescriptor, RegionKind, RegionReport, RegionStats, ReportFormat,
    ThreadRow, ThreadTimings, TimingField,
};
pub use runtime::{current_context, Pool, PoolBuilder, RegionOutcome, TeamContext, NO_REGION};
pub use schedule::{
    parallel_for, resolve_runtime_schedule, static_assignment, ChunkRange, ScheduleKind,
    ScheduleSpec, WorkshareState, SCHEDULE_ENV_VAR,
};
pub use sync::{barrier, critical, ordered_execute, OrderedSequencer};
