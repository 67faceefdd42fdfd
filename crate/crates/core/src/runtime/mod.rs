//! Fork-join execution engine: a reusable worker pool and parallel regions
//! executed by a team of threads with a distinguished master.
//!
//! Workers are created once per pool and suspended between regions; forking
//! a region wakes as many as the team needs and joining suspends them again.
//! The calling thread always participates as the master (thread id 0).
//! Teams larger than the pool get the excess logical threads on one-shot OS
//! threads, so oversubscribed teams still rendezvous correctly at barriers
//! while the OS multiplexes them onto the available cores.

mod context;

pub use context::{current_context, TeamContext, NO_REGION};

use std::cell::RefCell;
use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};

use crate::error::{Error, Result};
use crate::profile::{
    LocalRecorder, ProfileReport, Profiler, RecorderData, RegionKind, TimingField,
};
use crate::schedule::LoopSlot;
use crate::sync::CentralBarrier;

/// State shared by every member of one team for the duration of a region.
pub(crate) struct TeamShared {
    pub(crate) team_size: usize,
    pub(crate) region_desc: u64,
    /// True for nested regions, which run their logical threads one after
    /// another on the caller; blocking rendezvous becomes a no-op there.
    pub(crate) serialized: bool,
    pub(crate) watchdog: Option<Duration>,
    pub(crate) profiler: Arc<Profiler>,
    pub(crate) barrier: CentralBarrier,
    pub(crate) loops: Mutex<Vec<Arc<LoopSlot>>>,
    pub(crate) criticals: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

/// Summary returned by [`Pool::parallel_region`] after the join.
#[derive(Clone, Debug)]
pub struct RegionOutcome {
    pub region_id: u64,
    pub team_size: usize,
    pub wall: Duration,
}

type MemberFn<'a> = &'a (dyn Fn(usize, usize) + Sync);

struct Task {
    func: &'static (dyn Fn(usize, usize) + Sync),
    tid: usize,
}

struct MemberOutcome {
    tid: usize,
    data: RecorderData,
    body_end: Instant,
    body_s: f64,
    panic: Option<(Instant, String)>,
}

struct JoinPoint {
    outcomes: Mutex<Vec<MemberOutcome>>,
    all_done: Condvar,
}

struct PoolState {
    senders: Vec<mpsc::Sender<Task>>,
    handles: Vec<JoinHandle<()>>,
    down: bool,
}

/// Builder for [`Pool`] with an optional deadlock watchdog.
pub struct PoolBuilder {
    max_workers: usize,
    watchdog: Option<Duration>,
}

impl PoolBuilder {
    pub fn max_workers(mut self, count: usize) -> Self {
        self.max_workers = count;
        self
    }

    /// Arms the watchdog: blocking waits inside sync constructs abort with a
    /// diagnostic panic after this timeout instead of deadlocking silently.
    pub fn watchdog(mut self, timeout: Option<Duration>) -> Self {
        self.watchdog = timeout;
        self
    }

    pub fn build(self) -> Result<Pool> {
        Pool::with_options(self.max_workers, self.watchdog)
    }
}

/// A reusable pool of worker threads executing parallel regions.
///
/// The pool may be shared across threads; concurrent region launches are
/// serialized. It must outlive every region it executes, and shutting it
/// down while a region is in flight is surfaced as an error.
pub struct Pool {
    state: Mutex<PoolState>,
    region_gate: Mutex<()>,
    profiler: Arc<Profiler>,
    watchdog: Option<Duration>,
    max_workers: usize,
    ephemeral_seq: AtomicUsize,
}

impl Pool {
    /// Creates a pool whose workers are created once and reused across all
    /// subsequent regions. Worker creation cost is attributed to a synthetic
    /// pool-setup profile entry rather than to the first region.
    pub fn new(max_workers: usize) -> Result<Pool> {
        Pool::with_options(max_workers, None)
    }

    pub fn builder() -> PoolBuilder {
        PoolBuilder {
            max_workers: 1,
            watchdog: None,
        }
    }

    fn with_options(max_workers: usize, watchdog: Option<Duration>) -> Result<Pool> {
        if max_workers == 0 {
            return Err(Error::InvalidArgument(
                "a pool needs at least one worker".to_string(),
            ));
        }
        let profiler = Arc::new(Profiler::new());
        let setup_start = Instant::now();
        let mut senders = Vec::with_capacity(max_workers);
        let mut handles = Vec::with_capacity(max_workers);
        for worker_id in 1..=max_workers {
            let (tx, rx) = mpsc::channel::<Task>();
            let handle = thread::Builder::new()
                .name(format!("forkprof-worker-{worker_id}"))
                .spawn(move || {
                    while let Ok(task) = rx.recv() {
                        (task.func)(task.tid, worker_id);
                    }
                })
                .map_err(|e| {
                    Error::InvalidArgument(format!("failed to spawn pool worker: {e}"))
                })?;
            senders.push(tx);
            handles.push(handle);
        }
        profiler.record_pool_setup(setup_start.elapsed().as_secs_f64());
        Ok(Pool {
            state: Mutex::new(PoolState {
                senders,
                handles,
                down: false,
            }),
            region_gate: Mutex::new(()),
            profiler,
            watchdog,
            max_workers,
            ephemeral_seq: AtomicUsize::new(max_workers + 1),
        })
    }

    pub fn max_workers(&self) -> usize {
        self.max_workers
    }

    /// Snapshot of everything profiled since creation or the last reset.
    pub fn profile_report(&self) -> ProfileReport {
        self.profiler.report()
    }

    /// Clears the profile and restarts the program clock. The synthetic
    /// pool-setup entry belongs to the window the pool was created in and
    /// is not carried over.
    pub fn reset_profile(&self) {
        self.profiler.reset()
    }

    /// Executes `body` once per logical thread id in `[0, team_size)`. The
    /// caller acts as master (thread id 0) and control returns only after
    /// every member finished. A panic in any body is re-surfaced as
    /// [`Error::BodyPanic`] after the region is torn down; the first failure
    /// wins and the profile records the region as incomplete.
    pub fn parallel_region<F>(&self, team_size: usize, label: &str, body: F) -> Result<RegionOutcome>
    where
        F: Fn(&TeamContext) + Sync,
    {
        if team_size == 0 {
            return Err(Error::InvalidArgument(
                "team_size must be at least 1".to_string(),
            ));
        }
        if current_context().team().is_some() {
            return self.run_serialized(team_size, label, &body);
        }
        let _gate = self.region_gate.lock();
        let senders = {
            let state = self.state.lock();
            if state.down {
                return Err(Error::PoolShutDown);
            }
            state.senders.clone()
        };

        let region_start = Instant::now();
        let region_id = self.profiler.register(RegionKind::Parallel, label, true);
        let team = Arc::new(TeamShared {
            team_size,
            region_desc: region_id,
            serialized: false,
            watchdog: self.watchdog,
            profiler: self.profiler.clone(),
            barrier: CentralBarrier::new(team_size),
            loops: Mutex::new(Vec::new()),
            criticals: Mutex::new(HashMap::new()),
        });
        let join = Arc::new(JoinPoint {
            outcomes: Mutex::new(Vec::with_capacity(team_size)),
            all_done: Condvar::new(),
        });

        let runner = {
            let team = team.clone();
            let join = join.clone();
            let body = &body;
            move |tid: usize, worker_id: usize| {
                let outcome = run_member(&team, region_id, tid, worker_id, body);
                let mut done = join.outcomes.lock();
                done.push(outcome);
                join.all_done.notify_all();
            }
        };

        // The erased reference is only ever called between dispatch and the
        // join below; the region does not return before every member has
        // pushed its outcome, so the borrow can never dangle.
        let runner_ref: MemberFn<'_> = &runner;
        let erased: MemberFn<'static> = unsafe { std::mem::transmute(runner_ref) };

        let fork_start = Instant::now();
        let mut dispatched = 1; // the master
        let mut ephemeral = Vec::new();
        let mut dispatch_error = None;
        for tid in 1..team_size {
            if tid <= senders.len() {
                if senders[tid - 1].send(Task { func: erased, tid }).is_err() {
                    dispatch_error = Some(format!("pool worker {tid} is gone"));
                    break;
                }
                dispatched += 1;
            } else {
                let worker_id = self.ephemeral_seq.fetch_add(1, Ordering::Relaxed);
                match thread::Builder::new()
                    .name(format!("forkprof-extra-{worker_id}"))
                    .spawn(move || (erased)(tid, worker_id))
                {
                    Ok(handle) => {
                        ephemeral.push(handle);
                        dispatched += 1;
                    }
                    Err(e) => {
                        dispatch_error = Some(format!("failed to spawn team thread: {e}"));
                        break;
                    }
                }
            }
        }
        let fork_s = fork_start.elapsed().as_secs_f64();

        runner(0, 0);

        let mut outcomes = {
            let mut done = join.outcomes.lock();
            while done.len() < dispatched {
                join.all_done.wait(&mut done);
            }
            std::mem::take(&mut *done)
        };
        for handle in ephemeral {
            let _ = handle.join();
        }

        let join_start = Instant::now();
        let last_end = outcomes
            .iter()
            .map(|o| o.body_end)
            .max()
            .expect("at least the master ran");
        let mut first_panic: Option<(Instant, usize, String)> = None;
        for outcome in outcomes.drain(..) {
            if let Some((at, message)) = outcome.panic {
                if first_panic.as_ref().is_none_or(|(t, _, _)| at < *t) {
                    first_panic = Some((at, outcome.tid, message));
                }
            }
            self.profiler
                .merge_thread(outcome.tid, team_size, outcome.data);
            let wait = last_end.duration_since(outcome.body_end).as_secs_f64();
            self.profiler
                .add_field(region_id, outcome.tid, TimingField::ExitBarrier, wait);
        }
        let completed = first_panic.is_none() && dispatch_error.is_none();
        let join_s = join_start.elapsed().as_secs_f64();
        self.profiler
            .add_field(region_id, 0, TimingField::Mgmt, fork_s + join_s);
        let wall = region_start.elapsed();
        self.profiler
            .finish_region(region_id, wall.as_secs_f64(), completed);

        if let Some(detail) = dispatch_error {
            return Err(Error::ContractViolation(detail));
        }
        if let Some((_, thread_id, message)) = first_panic {
            return Err(Error::BodyPanic { thread_id, message });
        }
        Ok(RegionOutcome {
            region_id,
            team_size,
            wall,
        })
    }

    /// Nested regions execute their logical threads sequentially on the
    /// caller; the inner team size is honored logically.
    fn run_serialized<F>(&self, team_size: usize, label: &str, body: &F) -> Result<RegionOutcome>
    where
        F: Fn(&TeamContext) + Sync,
    {
        let region_start = Instant::now();
        let region_id = self.profiler.register(RegionKind::Parallel, label, false);
        let team = Arc::new(TeamShared {
            team_size,
            region_desc: region_id,
            serialized: true,
            watchdog: self.watchdog,
            profiler: self.profiler.clone(),
            barrier: CentralBarrier::new(1),
            loops: Mutex::new(Vec::new()),
            criticals: Mutex::new(HashMap::new()),
        });
        let mut body_total = 0.0;
        let mut first_panic: Option<(usize, String)> = None;
        for tid in 0..team_size {
            let outcome = run_member(&team, region_id, tid, 0, body);
            if let Some((_, message)) = outcome.panic {
                if first_panic.is_none() {
                    first_panic = Some((tid, message));
                }
            }
            body_total += outcome.body_s;
            self.profiler.merge_thread(tid, team_size, outcome.data);
        }
        let completed = first_panic.is_none();
        let wall = region_start.elapsed();
        // Everything that was not body time is serialization bookkeeping.
        let mgmt = (wall.as_secs_f64() - body_total).max(0.0);
        self.profiler
            .add_field(region_id, 0, TimingField::Mgmt, mgmt);
        self.profiler
            .finish_region(region_id, wall.as_secs_f64(), completed);
        if let Some((thread_id, message)) = first_panic {
            return Err(Error::BodyPanic { thread_id, message });
        }
        Ok(RegionOutcome {
            region_id,
            team_size,
            wall,
        })
    }

    /// Stops the workers and joins them. Fails if a region is in flight.
    pub fn shutdown(&self) -> Result<()> {
        let _gate = self.region_gate.try_lock().ok_or_else(|| {
            Error::ContractViolation("cannot shut down: a region is in flight".to_string())
        })?;
        let handles = {
            let mut state = self.state.lock();
            state.down = true;
            state.senders.clear();
            std::mem::take(&mut state.handles)
        };
        for handle in handles {
            let _ = handle.join();
        }
        Ok(())
    }
}

impl std::fmt::Debug for Pool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pool")
            .field("max_workers", &self.max_workers)
            .field("watchdog", &self.watchdog)
            .finish_non_exhaustive()
    }
}

impl Drop for Pool {
    fn drop(&mut self) {
        let _gate = self.region_gate.lock();
        let handles = {
            let mut state = self.state.lock();
            state.down = true;
            state.senders.clear();
            std::mem::take(&mut state.handles)
        };
        for handle in handles {
            let _ = handle.join();
        }
    }
}

fn run_member<F>(
    team: &Arc<TeamShared>,
    region_id: u64,
    tid: usize,
    worker_id: usize,
    body: &F,
) -> MemberOutcome
where
    F: Fn(&TeamContext) + Sync,
{
    let recorder = Rc::new(RefCell::new(LocalRecorder::default()));
    let ctx = TeamContext::new(tid, worker_id, team.clone(), recorder.clone());
    let guard = context::ContextGuard::push(ctx.clone());
    let body_start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(|| body(&ctx)));
    let body_end = Instant::now();
    drop(guard);
    let panic = result
        .err()
        .map(|payload| (Instant::now(), panic_message(payload)));
    let body_s = body_end.duration_since(body_start).as_secs_f64();
    let data = {
        let mut rec = recorder.borrow_mut();
        rec.enter(region_id);
        rec.add(region_id, TimingField::Body, body_s);
        rec.take_data()
    };
    MemberOutcome {
        tid,
        data,
        body_end,
        body_s,
        panic,
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}
