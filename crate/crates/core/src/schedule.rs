//! Loop schedules and the parallel-for work-sharing construct.
//!
//! Four schedule kinds govern how the iterations of a loop are assigned to
//! the threads of a team:
//!
//! * **static** — iterations are split into blocks ahead of time and dealt
//!   round-robin; without a chunk size each thread gets one contiguous block
//!   of roughly n/p iterations.
//! * **dynamic** — threads claim fixed-size chunks on demand; a thread that
//!   finishes a portion starts on the next unclaimed one.
//! * **guided** — like dynamic, but the claimed portion shrinks as work is
//!   depleted: each claim takes `max(ceil(remaining / team_size), chunk)`.
//! * **runtime** — the actual kind is read from the `FORKPROF_SCHEDULE`
//!   environment variable when the loop starts.
//!
//! Loops are normalized to the iteration space `[0, n)` with stride 1;
//! callers map their own index arithmetic.

use std::env;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::profile::{RegionKind, TimingField};
use crate::runtime::TeamContext;
use crate::sync::team_rendezvous;

/// Environment variable consulted by the `runtime` schedule kind, holding
/// `kind[,chunk]`.
pub const SCHEDULE_ENV_VAR: &str = "FORKPROF_SCHEDULE";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    Static,
    Dynamic,
    Guided,
    Runtime,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Static => "static",
            ScheduleKind::Dynamic => "dynamic",
            ScheduleKind::Guided => "guided",
            ScheduleKind::Runtime => "runtime",
        })
    }
}

/// A schedule kind plus an optional chunk size (at least 1 when present).
/// The `runtime` kind carries no chunk of its own; it resolves to another
/// spec via [`resolve_runtime_schedule`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ScheduleSpec {
    kind: ScheduleKind,
    chunk: Option<usize>,
}

impl ScheduleSpec {
    pub fn new(kind: ScheduleKind, chunk: Option<usize>) -> Result<Self> {
        if chunk == Some(0) {
            return Err(Error::InvalidArgument(
                "chunk size must be at least 1".to_string(),
            ));
        }
        if kind == ScheduleKind::Runtime && chunk.is_some() {
            return Err(Error::InvalidArgument(
                "the runtime schedule carries no chunk of its own".to_string(),
            ));
        }
        Ok(ScheduleSpec { kind, chunk })
    }

    pub fn static_block() -> Self {
        ScheduleSpec {
            kind: ScheduleKind::Static,
            chunk: None,
        }
    }

    pub fn dynamic(chunk: Option<usize>) -> Result<Self> {
        ScheduleSpec::new(ScheduleKind::Dynamic, chunk)
    }

    pub fn guided(chunk: Option<usize>) -> Result<Self> {
        ScheduleSpec::new(ScheduleKind::Guided, chunk)
    }

    pub fn runtime() -> Self {
        ScheduleSpec {
            kind: ScheduleKind::Runtime,
            chunk: None,
        }
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn chunk(&self) -> Option<usize> {
        self.chunk
    }

    /// Resolves the `runtime` kind through [`SCHEDULE_ENV_VAR`], falling
    /// back to the default static split when the variable is unset. Other
    /// kinds resolve to themselves.
    pub fn resolve_from_env(&self) -> Result<ScheduleSpec> {
        if self.kind != ScheduleKind::Runtime {
            return Ok(self.clone());
        }
        let value = env::var(SCHEDULE_ENV_VAR).ok();
        resolve_runtime_schedule(value.as_deref(), &ScheduleSpec::static_block())
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.chunk {
            Some(c) => write!(f, "{},{}", self.kind, c),
            None => write!(f, "{}", self.kind),
        }
    }
}

impl FromStr for ScheduleSpec {
    type Err = Error;

    /// Parses `kind[,chunk]` where kind is one of static, dynamic, guided
    /// or runtime (case-insensitive). `runtime` rejects a chunk.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, chunk) = parse_schedule_tokens(s, true)?;
        ScheduleSpec::new(kind, chunk)
    }
}

fn parse_schedule_tokens(s: &str, allow_runtime: bool) -> Result<(ScheduleKind, Option<usize>)> {
    let mut tokens = s.split(',').map(str::trim);
    let kind_token = tokens.next().unwrap_or("");
    let kind = match kind_token.to_ascii_lowercase().as_str() {
        "static" => ScheduleKind::Static,
        "dynamic" => ScheduleKind::Dynamic,
        "guided" => ScheduleKind::Guided,
        "runtime" if allow_runtime => ScheduleKind::Runtime,
        _ => {
            return Err(Error::ScheduleParse(format!(
                "unknown schedule kind '{kind_token}'"
            )))
        }
    };
    let chunk = match tokens.next() {
        None => None,
        Some(chunk_token) => {
            let value: usize = chunk_token.parse().map_err(|_| {
                Error::ScheduleParse(format!("chunk '{chunk_token}' is not a positive integer"))
            })?;
            if value == 0 {
                return Err(Error::ScheduleParse(format!(
                    "chunk '{chunk_token}' must be at least 1"
                )));
            }
            Some(value)
        }
    };
    if let Some(extra) = tokens.next() {
        return Err(Error::ScheduleParse(format!(
            "trailing token '{extra}' after schedule"
        )));
    }
    Ok((kind, chunk))
}

/// Parses a `kind[,chunk]` environment value into a concrete schedule.
/// An absent or empty value yields `fallback`; the result never has kind
/// `runtime`.
pub fn resolve_runtime_schedule(
    env_value: Option<&str>,
    fallback: &ScheduleSpec,
) -> Result<ScheduleSpec> {
    if fallback.kind() == ScheduleKind::Runtime {
        return Err(Error::InvalidArgument(
            "fallback schedule must already be resolved".to_string(),
        ));
    }
    match env_value {
        None => Ok(fallback.clone()),
        Some(raw) if raw.trim().is_empty() => Ok(fallback.clone()),
        Some(raw) => {
            let (kind, chunk) = parse_schedule_tokens(raw, false)?;
            ScheduleSpec::new(kind, chunk)
        }
    }
}

/// A half-open run of loop iterations assigned to a thread as one unit of
/// work. Empty ranges are never handed to a body.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ChunkRange {
    pub start: usize,
    pub end: usize,
}

impl ChunkRange {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        ChunkRange { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn indices(&self) -> Range<usize> {
        self.start..self.end
    }
}

impl IntoIterator for ChunkRange {
    type Item = usize;
    type IntoIter = Range<usize>;

    fn into_iter(self) -> Range<usize> {
        self.start..self.end
    }
}

impl fmt::Display for ChunkRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Precomputes the blocks thread `tid` of `p` executes for a static
/// schedule over a loop of length `n`.
///
/// With a chunk size `c`, block k covers `[k*c, min((k+1)*c, n))` and goes
/// to thread `k % p`. Without one, each thread gets a single contiguous
/// block; the first `n % p` threads get one extra iteration. Deterministic:
/// equal arguments produce identical output.
pub fn static_assignment(
    n: usize,
    p: usize,
    tid: usize,
    chunk: Option<usize>,
) -> Result<Vec<ChunkRange>> {
    if p == 0 {
        return Err(Error::InvalidArgument(
            "team size must be at least 1".to_string(),
        ));
    }
    if tid >= p {
        return Err(Error::InvalidArgument(format!(
            "thread id {tid} out of range for team of {p}"
        )));
    }
    match chunk {
        Some(0) => Err(Error::InvalidArgument(
            "chunk size must be at least 1".to_string(),
        )),
        Some(c) => {
            let mut blocks = Vec::new();
            let mut k = tid;
            while k * c < n {
                blocks.push(ChunkRange::new(k * c, ((k + 1) * c).min(n)));
                k += p;
            }
            Ok(blocks)
        }
        None => {
            let base = n / p;
            let remainder = n % p;
            let start = tid * base + tid.min(remainder);
            let len = base + usize::from(tid < remainder);
            if len == 0 {
                Ok(Vec::new())
            } else {
                Ok(vec![ChunkRange::new(start, start + len)])
            }
        }
    }
}

/// Shared claiming state of one work-shared loop: the loop length, the team
/// size and a linearizable cursor over the first unclaimed iteration.
pub struct WorkshareState {
    total: usize,
    team_size: usize,
    kind: ScheduleKind,
    chunk: usize,
    next_unclaimed: AtomicUsize,
}

impl WorkshareState {
    /// Claiming state for a dynamic or guided loop. The chunk defaults to 1
    /// when the schedule does not carry one.
    pub fn new(n: usize, team_size: usize, spec: &ScheduleSpec) -> Result<Self> {
        if team_size == 0 {
            return Err(Error::InvalidArgument(
                "team size must be at least 1".to_string(),
            ));
        }
        match spec.kind() {
            ScheduleKind::Dynamic | ScheduleKind::Guided => Ok(WorkshareState {
                total: n,
                team_size,
                kind: spec.kind(),
                chunk: spec.chunk().unwrap_or(1),
                next_unclaimed: AtomicUsize::new(0),
            }),
            other => Err(Error::InvalidArgument(format!(
                "claim-based state requires a dynamic or guided schedule, got {other}"
            ))),
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn team_size(&self) -> usize {
        self.team_size
    }

    /// First unassigned iteration at this instant.
    pub fn next_unclaimed(&self) -> usize {
        self.next_unclaimed.load(Ordering::Acquire).min(self.total)
    }

    /// Atomically claims the next `min(chunk, remaining)` iterations, or
    /// returns `None` once the loop is exhausted.
    pub fn dynamic_next(&self) -> Option<ChunkRange> {
        assert_eq!(
            self.kind,
            ScheduleKind::Dynamic,
            "dynamic_next on a {} state",
            self.kind
        );
        self.claim(|_, chunk| chunk)
    }

    /// Atomically claims `max(ceil(remaining / team_size), chunk)`
    /// iterations, capped at the remainder; claimed sizes never increase.
    pub fn guided_next(&self) -> Option<ChunkRange> {
        assert_eq!(
            self.kind,
            ScheduleKind::Guided,
            "guided_next on a {} state",
            self.kind
        );
        let team = self.team_size;
        self.claim(move |remaining, chunk| remaining.div_ceil(team).max(chunk))
    }

    /// Claims the next portion according to this state's schedule kind.
    pub fn next_chunk(&self) -> Option<ChunkRange> {
        match self.kind {
            ScheduleKind::Dynamic => self.dynamic_next(),
            ScheduleKind::Guided => self.guided_next(),
            _ => unreachable!("claim-based state is dynamic or guided"),
        }
    }

    fn claim(&self, size_of: impl Fn(usize, usize) -> usize) -> Option<ChunkRange> {
        let mut current = self.next_unclaimed.load(Ordering::Acquire);
        loop {
            if current >= self.total {
                return None;
            }
            let remaining = self.total - current;
            let size = size_of(remaining, self.chunk).min(remaining).max(1);
            match self.next_unclaimed.compare_exchange_weak(
                current,
                current + size,
                Ordering::AcqRel,
                Ordering::Acquire,
            ) {
                Ok(_) => return Some(ChunkRange::new(current, current + size)),
                Err(observed) => current = observed,
            }
        }
    }
}

/// Registration record of one work-shared loop, used to hand all team
/// members the same claiming state and to cross-check collective arguments.
pub(crate) struct LoopSlot {
    pub(crate) label: String,
    pub(crate) n: usize,
    pub(crate) raw: ScheduleSpec,
    pub(crate) nowait: bool,
    pub(crate) resolved: ScheduleSpec,
    pub(crate) desc_id: u64,
    pub(crate) state: Option<WorkshareState>,
}

fn register_loop(
    ctx: &TeamContext,
    n: usize,
    spec: &ScheduleSpec,
    nowait: bool,
    label: &str,
) -> Result<Arc<LoopSlot>> {
    let team = ctx.team().expect("loops require a team");
    let index = ctx.next_loop_index();
    let mut loops = team.loops.lock();
    if let Some(slot) = loops.get(index) {
        if slot.label != label || slot.n != n || slot.raw != *spec || slot.nowait != nowait {
            return Err(Error::CollectiveMismatch(format!(
                "loop #{index}: this thread passed ('{label}', n={n}, {spec}, nowait={nowait}) \
                 but the team registered ('{}', n={}, {}, nowait={})",
                slot.label, slot.n, slot.raw, slot.nowait
            )));
        }
        return Ok(slot.clone());
    }
    if index != loops.len() {
        return Err(Error::CollectiveMismatch(format!(
            "loop #{index}: team members encountered constructs in different orders"
        )));
    }
    let resolved = spec.resolve_from_env()?;
    let state = match resolved.kind() {
        ScheduleKind::Dynamic | ScheduleKind::Guided => {
            Some(WorkshareState::new(n, ctx.team_size(), &resolved)?)
        }
        _ => None,
    };
    let desc_id = ctx.resolve_descriptor(RegionKind::ParallelLoop, label);
    let slot = Arc::new(LoopSlot {
        label: label.to_string(),
        n,
        raw: spec.clone(),
        nowait,
        resolved,
        desc_id,
        state,
    });
    loops.push(slot.clone());
    Ok(slot)
}

/// Work-sharing loop over the iteration space `[0, n)`: every iteration is
/// executed exactly once by exactly one thread of the team, in chunks
/// assigned per `spec`.
///
/// This is a collective operation: every team member must call it with
/// identical `n`, `spec`, `nowait` and `label` (cross-checked at
/// registration, best-effort). Unless `nowait` is set, an implicit exit
/// barrier follows the loop and each thread's wait there is recorded as
/// exit-barrier time — or as limited-parallelism idling for threads the
/// schedule handed no work. With `nowait` the barrier is elided and the
/// recorded exit-barrier time is exactly zero.
pub fn parallel_for<F>(
    ctx: &TeamContext,
    n: usize,
    spec: &ScheduleSpec,
    nowait: bool,
    label: &str,
    mut body: F,
) -> Result<()>
where
    F: FnMut(&TeamContext, ChunkRange),
{
    if ctx.team().is_none() {
        // Outside any region: run the whole loop here, uninstrumented.
        let resolved = spec.resolve_from_env()?;
        for range in single_thread_chunks(n, &resolved)? {
            body(ctx, range);
        }
        return Ok(());
    }

    let enter = Instant::now();
    let slot = register_loop(ctx, n, spec, nowait, label)?;
    ctx.mark_entry(slot.desc_id);

    let mut body_s = 0.0;
    let mut chunks_run = 0usize;
    let mut run_chunk = |range: ChunkRange, body: &mut F| {
        let start = Instant::now();
        body(ctx, range);
        body_s += start.elapsed().as_secs_f64();
        chunks_run += 1;
    };
    match slot.resolved.kind() {
        ScheduleKind::Static => {
            for range in static_assignment(n, ctx.team_size(), ctx.thread_id(), slot.resolved.chunk())? {
                run_chunk(range, &mut body);
            }
        }
        ScheduleKind::Dynamic | ScheduleKind::Guided => {
            let state = slot.state.as_ref().expect("claim-based slot has state");
            while let Some(range) = state.next_chunk() {
                run_chunk(range, &mut body);
            }
        }
        ScheduleKind::Runtime => unreachable!("slot schedules are resolved"),
    }
    ctx.record(slot.desc_id, TimingField::Body, body_s);

    if !nowait {
        let wait = team_rendezvous(ctx, &format!("exit barrier of loop '{label}'"));
        if chunks_run == 0 {
            // The construct exposed no work for this thread; its whole stay
            // counts as limited parallelism rather than imbalance.
            ctx.record(
                slot.desc_id,
                TimingField::IdleLimpar,
                enter.elapsed().as_secs_f64(),
            );
        } else {
            ctx.record(slot.desc_id, TimingField::ExitBarrier, wait.as_secs_f64());
        }
    } else if chunks_run == 0 {
        ctx.record(
            slot.desc_id,
            TimingField::IdleLimpar,
            enter.elapsed().as_secs_f64(),
        );
    }
    if ctx.is_master() {
        ctx.record_wall(slot.desc_id, enter.elapsed().as_secs_f64());
    }
    Ok(())
}

fn single_thread_chunks(n: usize, resolved: &ScheduleSpec) -> Result<Vec<ChunkRange>> {
    match resolved.kind() {
        ScheduleKind::Static => static_assignment(n, 1, 0, resolved.chunk()),
        ScheduleKind::Dynamic | ScheduleKind::Guided => {
            let state = WorkshareState::new(n, 1, resolved)?;
            let mut chunks = Vec::new();
            while let Some(range) = state.next_chunk() {
                chunks.push(range);
            }
            Ok(chunks)
        }
        ScheduleKind::Runtime => unreachable!("resolved spec cannot be runtime"),
    }
}
