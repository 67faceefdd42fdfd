use thiserror::Error;

/// Errors surfaced by the runtime, schedulers, profiler and benchmark kernels.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated (zero worker count,
    /// thread id out of range, zero chunk size, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A schedule string could not be parsed. The message names the
    /// offending token.
    #[error("invalid schedule: {0}")]
    ScheduleParse(String),

    /// Team members called a collective construct with different arguments.
    #[error("collective mismatch: {0}")]
    CollectiveMismatch(String),

    /// A construct was used outside its contract (duplicate ordered
    /// iteration, shutdown with a region in flight, ...).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// A region body panicked. The first failure wins; the remaining
    /// bodies ran to completion before this error was produced.
    #[error("body panicked on thread {thread_id}: {message}")]
    BodyPanic { thread_id: usize, message: String },

    /// A parallel kernel disagreed with the serial oracle.
    #[error("correctness failure: {0}")]
    CorrectnessFailure(String),

    /// The pool was shut down and can no longer execute regions.
    #[error("pool is shut down")]
    PoolShutDown,
}

pub type Result<T> = std::result::Result<T, Error>;
