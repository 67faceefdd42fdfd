//! Per-thread execution context threaded through every construct.

use std::cell::{Cell, RefCell};
use std::rc::Rc;
use std::sync::Arc;

use crate::profile::{LocalRecorder, RegionKind, TimingField};
use crate::runtime::TeamShared;

thread_local! {
    static CONTEXT_STACK: RefCell<Vec<TeamContext>> = const { RefCell::new(Vec::new()) };
}

/// Region id reported by the sentinel context returned outside any region.
pub const NO_REGION: u64 = u64::MAX;

/// Identity of a thread inside a team, plus handles to the team's shared
/// state and this thread's private timing buffer.
///
/// Contexts are confined to the thread they were issued to; they are
/// deliberately not `Send`.
#[derive(Clone)]
pub struct TeamContext {
    thread_id: usize,
    team_size: usize,
    worker_id: usize,
    team: Option<Arc<TeamShared>>,
    recorder: Rc<RefCell<LocalRecorder>>,
    loop_seq: Rc<Cell<usize>>,
}

impl TeamContext {
    pub(crate) fn new(
        thread_id: usize,
        worker_id: usize,
        team: Arc<TeamShared>,
        recorder: Rc<RefCell<LocalRecorder>>,
    ) -> Self {
        TeamContext {
            thread_id,
            team_size: team.team_size,
            worker_id,
            team: Some(team),
            recorder,
            loop_seq: Rc::new(Cell::new(0)),
        }
    }

    fn sentinel() -> Self {
        TeamContext {
            thread_id: 0,
            team_size: 1,
            worker_id: 0,
            team: None,
            recorder: Rc::new(RefCell::new(LocalRecorder::default())),
            loop_seq: Rc::new(Cell::new(0)),
        }
    }

    /// This thread's id within the team; the master is always 0.
    pub fn thread_id(&self) -> usize {
        self.thread_id
    }

    /// Number of logical threads in the team.
    pub fn team_size(&self) -> usize {
        self.team_size
    }

    /// True for the team's master thread.
    pub fn is_master(&self) -> bool {
        self.thread_id == 0
    }

    /// Profiler id of the enclosing parallel region, or [`NO_REGION`] for
    /// the sentinel context.
    pub fn region_id(&self) -> u64 {
        self.team.as_ref().map_or(NO_REGION, |t| t.region_desc)
    }

    /// Identity of the execution lane running this logical thread: 0 is the
    /// region's calling thread, 1..=max_workers are pooled workers, larger
    /// values are one-shot threads created for oversubscribed teams.
    pub fn worker_id(&self) -> usize {
        self.worker_id
    }

    pub(crate) fn team(&self) -> Option<&Arc<TeamShared>> {
        self.team.as_ref()
    }

    pub(crate) fn with_recorder<R>(&self, f: impl FnOnce(&mut LocalRecorder) -> R) -> R {
        f(&mut self.recorder.borrow_mut())
    }

    /// Resolves a (kind, label) pair to its profiler descriptor id, going
    /// through this thread's cache to keep the hot path lock-free.
    pub(crate) fn resolve_descriptor(&self, kind: RegionKind, label: &str) -> u64 {
        if let Some(id) = self.recorder.borrow().cached_id(kind, label) {
            return id;
        }
        let team = self.team.as_ref().expect("resolve requires a team");
        let id = team.profiler.register(kind, label, false);
        self.recorder.borrow_mut().cache_id(kind, label, id);
        id
    }

    pub(crate) fn record(&self, id: u64, field: TimingField, seconds: f64) {
        self.recorder.borrow_mut().add(id, field, seconds);
    }

    pub(crate) fn mark_entry(&self, id: u64) {
        self.recorder.borrow_mut().enter(id);
    }

    pub(crate) fn record_wall(&self, id: u64, seconds: f64) {
        self.recorder.borrow_mut().add_wall(id, seconds);
    }

    /// Index of the next collective construct this thread encounters in the
    /// current region; all team members see constructs in the same order.
    pub(crate) fn next_loop_index(&self) -> usize {
        let idx = self.loop_seq.get();
        self.loop_seq.set(idx + 1);
        idx
    }
}

/// Returns the calling thread's current context. Inside a region body this
/// is the context the runtime issued; outside any region it is a sentinel
/// with `thread_id` 0 and `team_size` 1. Nested regions see the innermost
/// team.
pub fn current_context() -> TeamContext {
    CONTEXT_STACK
        .with(|stack| stack.borrow().last().cloned())
        .unwrap_or_else(TeamContext::sentinel)
}

/// Keeps the context stack balanced even when a body panics.
pub(crate) struct ContextGuard;

impl ContextGuard {
    pub(crate) fn push(ctx: TeamContext) -> ContextGuard {
        CONTEXT_STACK.with(|stack| stack.borrow_mut().push(ctx));
        ContextGuard
    }
}

impl Drop for ContextGuard {
    fn drop(&mut self) {
        CONTEXT_STACK.with(|stack| {
            stack.borrow_mut().pop();
        });
    }
}
