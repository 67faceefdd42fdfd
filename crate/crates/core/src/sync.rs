//! Synchronization constructs with wait-time accounting.
//!
//! Each construct reports how long callers were blocked: explicit barrier
//! waits and section entry waits feed the synchronization overhead category,
//! release bookkeeping feeds thread management. Misuse that would deadlock
//! (a member never arriving, recursive critical entry) stays a deadlock by
//! design unless the pool's watchdog is armed, in which case the wait aborts
//! with a diagnostic panic after the configured timeout.

use std::cell::RefCell;
use std::collections::HashSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};

use crate::error::{Error, Result};
use crate::profile::{RegionKind, TimingField};
use crate::runtime::TeamContext;

thread_local! {
    // Critical-section names held by this thread, for recursive-entry
    // diagnostics when the watchdog is armed.
    static HELD_CRITICALS: RefCell<HashSet<String>> = RefCell::new(HashSet::new());
}

/// Centralized sense-reversing barrier. A shared arrival counter plus a
/// generation word; no thread observes generation g+1 effects before all
/// team members completed generation g.
pub(crate) struct CentralBarrier {
    team_size: usize,
    state: Mutex<BarrierState>,
    released: Condvar,
}

struct BarrierState {
    arrived: usize,
    generation: u64,
}

impl CentralBarrier {
    pub(crate) fn new(team_size: usize) -> Self {
        CentralBarrier {
            team_size,
            state: Mutex::new(BarrierState {
                arrived: 0,
                generation: 0,
            }),
            released: Condvar::new(),
        }
    }

    /// Blocks until all team members arrive. Returns the generation this
    /// arrival completed and the caller's arrival-to-release wait.
    fn wait(&self, watchdog: Option<Duration>, what: &str) -> (u64, Duration) {
        let arrive = Instant::now();
        if self.team_size <= 1 {
            let mut state = self.state.lock();
            let generation = state.generation;
            state.generation += 1;
            return (generation, Duration::ZERO);
        }
        let mut state = self.state.lock();
        let generation = state.generation;
        state.arrived += 1;
        if state.arrived == self.team_size {
            state.arrived = 0;
            state.generation += 1;
            self.released.notify_all();
        } else {
            while state.generation == generation {
                match watchdog {
                    Some(limit) => {
                        if self
                            .released
                            .wait_for(&mut state, limit)
                            .timed_out()
                            && state.generation == generation
                        {
                            panic!(
                                "watchdog: {what} still waiting after {limit:?}; \
                                 a team member never arrived"
                            );
                        }
                    }
                    None => self.released.wait(&mut state),
                }
            }
        }
        (generation, arrive.elapsed())
    }
}

/// Blocks until every member of the caller's team arrives, then releases
/// them together. Returns the caller's arrival-to-release wait, which is
/// recorded against this barrier label as synchronization time.
///
/// Must be called collectively by every team member. In a team of one (or a
/// serialized nested region) it returns immediately.
pub fn barrier(ctx: &TeamContext, label: &str) -> Duration {
    let Some(team) = ctx.team() else {
        return Duration::ZERO;
    };
    let id = ctx.resolve_descriptor(RegionKind::Barrier, label);
    ctx.mark_entry(id);
    let enter = Instant::now();
    let wait = if team.serialized {
        Duration::ZERO
    } else {
        let (_, wait) = team
            .barrier
            .wait(team.watchdog, &format!("barrier '{label}'"));
        wait
    };
    ctx.record(id, TimingField::ExplicitBarrier, wait.as_secs_f64());
    if ctx.is_master() {
        ctx.record_wall(id, enter.elapsed().as_secs_f64());
    }
    wait
}

/// Implicit rendezvous used by work-sharing constructs; wait attribution is
/// the caller's business.
pub(crate) fn team_rendezvous(ctx: &TeamContext, what: &str) -> Duration {
    let Some(team) = ctx.team() else {
        return Duration::ZERO;
    };
    if team.serialized {
        return Duration::ZERO;
    }
    let (_, wait) = team.barrier.wait(team.watchdog, what);
    wait
}

/// Runs `body` under mutual exclusion with every other `critical` call of
/// the same name on this team; an empty name is the shared anonymous scope.
/// Returns the body's result and the time spent blocked before entry
/// (recorded as synchronization); release bookkeeping is recorded as
/// management time.
///
/// The section is not reentrant: re-entering the same name on the same
/// thread deadlocks, or aborts diagnostically when the watchdog is armed.
pub fn critical<R>(ctx: &TeamContext, name: &str, body: impl FnOnce() -> R) -> (R, Duration) {
    let Some(team) = ctx.team() else {
        // No team to contend with: run the body uninstrumented.
        return (body(), Duration::ZERO);
    };
    let id = ctx.resolve_descriptor(RegionKind::Critical, name);
    ctx.mark_entry(id);
    let lock = {
        let mut registry = team.criticals.lock();
        registry
            .entry(name.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(())))
            .clone()
    };
    let enter = Instant::now();
    if team.watchdog.is_some() {
        let recursive = HELD_CRITICALS.with(|held| held.borrow().contains(name));
        if recursive {
            panic!("watchdog: recursive entry of critical section '{name}'");
        }
    }
    let guard = match team.watchdog {
        Some(limit) => lock.try_lock_for(limit).unwrap_or_else(|| {
            panic!("watchdog: critical section '{name}' not acquired after {limit:?}")
        }),
        None => lock.lock(),
    };
    let wait = enter.elapsed();
    ctx.record(id, TimingField::EnterWait, wait.as_secs_f64());
    HELD_CRITICALS.with(|held| held.borrow_mut().insert(name.to_string()));
    let _release = HeldName {
        name: name.to_string(),
    };
    let result = body();
    let release_start = Instant::now();
    drop(guard);
    ctx.record(id, TimingField::Mgmt, release_start.elapsed().as_secs_f64());
    if ctx.is_master() {
        ctx.record_wall(id, enter.elapsed().as_secs_f64());
    }
    (result, wait)
}

struct HeldName {
    name: String,
}

impl Drop for HeldName {
    fn drop(&mut self) {
        HELD_CRITICALS.with(|held| {
            held.borrow_mut().remove(&self.name);
        });
    }
}

/// Grants entry to loop iterations in strictly increasing index order,
/// regardless of which thread owns which iteration.
pub struct OrderedSequencer {
    label: String,
    total: usize,
    state: Mutex<OrderedState>,
    advanced: Condvar,
}

struct OrderedState {
    next: usize,
    claimed: Vec<bool>,
}

impl OrderedSequencer {
    /// A sequencer for a loop of `total` iterations. Share one instance
    /// across the team that executes the loop.
    pub fn new(label: impl Into<String>, total: usize) -> Self {
        OrderedSequencer {
            label: label.into(),
            total,
            state: Mutex::new(OrderedState {
                next: 0,
                claimed: vec![false; total],
            }),
            advanced: Condvar::new(),
        }
    }

    /// The lowest iteration index not yet granted entry.
    pub fn next_iteration(&self) -> usize {
        self.state.lock().next
    }
}

/// Executes `body` for `iteration` once every lower iteration has executed.
/// The wait before entry is recorded as synchronization time. Iterations
/// must be presented exactly once each; duplicates and out-of-range indices
/// are contract violations.
pub fn ordered_execute<R>(
    ctx: &TeamContext,
    sequencer: &OrderedSequencer,
    iteration: usize,
    body: impl FnOnce() -> R,
) -> Result<R> {
    if iteration >= sequencer.total {
        return Err(Error::ContractViolation(format!(
            "ordered iteration {iteration} out of range for loop of {}",
            sequencer.total
        )));
    }
    let watchdog = ctx.team().and_then(|t| t.watchdog);
    let desc = ctx
        .team()
        .map(|_| ctx.resolve_descriptor(RegionKind::Ordered, &sequencer.label));
    if let Some(id) = desc {
        ctx.mark_entry(id);
    }
    let enter = Instant::now();
    {
        let mut state = sequencer.state.lock();
        if state.claimed[iteration] {
            return Err(Error::ContractViolation(format!(
                "ordered iteration {iteration} presented twice"
            )));
        }
        state.claimed[iteration] = true;
        while state.next != iteration {
            match watchdog {
                Some(limit) => {
                    if sequencer
                        .advanced
                        .wait_for(&mut state, limit)
                        .timed_out()
                        && state.next != iteration
                    {
                        panic!(
                            "watchdog: ordered iteration {iteration} of '{}' still \
                             waiting after {limit:?}",
                            sequencer.label
                        );
                    }
                }
                None => sequencer.advanced.wait(&mut state),
            }
        }
    }
    let wait = enter.elapsed();
    if let Some(id) = desc {
        ctx.record(id, TimingField::EnterWait, wait.as_secs_f64());
    }
    let result = body();
    {
        let mut state = sequencer.state.lock();
        state.next = iteration + 1;
        sequencer.advanced.notify_all();
    }
    if let (Some(id), true) = (desc, ctx.is_master()) {
        ctx.record_wall(id, enter.elapsed().as_secs_f64());
    }
    Ok(result)
}
