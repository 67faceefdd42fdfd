//! Overhead-taxonomy demo: four scenarios, one per category, profiled into
//! a single report window.

use std::time::Duration;

use forkprof::bench::{busy_work, skewed_region};
use forkprof::{barrier, critical, parallel_for, Pool, ProfileReport, Result, ScheduleSpec};

/// Runs the four scenarios back to back and returns the combined report:
///
/// * an uneven load whose stragglers show up as **imbalance**,
/// * a contended critical section and a staggered explicit barrier feeding
///   **synchronization**,
/// * a one-iteration loop on a full team feeding **limited parallelism**,
/// * pool setup and fork/join bookkeeping feeding **thread management**.
///
/// With a single thread every category but management stays near zero.
pub fn run_all_scenarios(
    pool: &Pool,
    threads: usize,
    per_thread_busy: &[Duration],
) -> Result<ProfileReport> {
    pool.reset_profile();

    skewed_region(pool, threads, per_thread_busy)?;

    pool.parallel_region(threads, "critical-contention", |ctx| {
        for _ in 0..3 {
            critical(ctx, "demo-resource", || {
                busy_work(Duration::from_millis(5));
            });
        }
    })?;

    pool.parallel_region(threads, "staggered-barrier", |ctx| {
        busy_work(Duration::from_millis(5 * ctx.thread_id() as u64));
        barrier(ctx, "stagger-sync");
    })?;

    pool.parallel_region(threads, "narrow-loop-region", |ctx| {
        parallel_for(
            ctx,
            1,
            &ScheduleSpec::static_block(),
            false,
            "narrow-loop",
            |_, chunk| {
                for _ in chunk {
                    busy_work(Duration::from_millis(20));
                }
            },
        )
        .expect("collective arguments are uniform");
    })?;

    Ok(pool.profile_report())
}
