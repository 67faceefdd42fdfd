//! Matrix-multiplication kernels and the skewed synthetic workload.

use std::time::Duration;

use crate::bench::{busy_work, Matrix};
use crate::error::{Error, Result};
use crate::profile::ProfileReport;
use crate::runtime::Pool;
use crate::schedule::{parallel_for, ScheduleKind, ScheduleSpec};
use crate::sync::barrier;

/// Exact triple-loop product; the reference every parallel variant is
/// compared against.
pub fn matmul_serial(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_dims(a, b)?;
    let (m, inner, n) = (a.rows(), a.cols(), b.cols());
    let mut c = Matrix::zeroed(m, n)?;
    let (av, bv) = (a.as_slice(), b.as_slice());
    let cv = c.as_mut_slice();
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..inner {
                acc += av[i * inner + k] * bv[k * n + j];
            }
            cv[i * n + j] = acc;
        }
    }
    Ok(c)
}

fn check_dims(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.cols() != b.rows() {
        return Err(Error::InvalidArgument(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

fn check_square(a: &Matrix, b: &Matrix) -> Result<usize> {
    check_dims(a, b)?;
    if a.rows() != a.cols() || b.rows() != b.cols() {
        return Err(Error::InvalidArgument(
            "parallel variants take square matrices".to_string(),
        ));
    }
    Ok(a.rows())
}

/// Shared output buffer written concurrently by team threads.
///
/// Loop schedules hand each output column (naive) or row (optimized) to
/// exactly one thread per loop, so all concurrent writes are disjoint; the
/// barriers/joins between dependent loops order the phases.
struct SharedCells {
    ptr: *mut f64,
    len: usize,
}

unsafe impl Sync for SharedCells {}

impl SharedCells {
    fn new(backing: &mut [f64]) -> Self {
        SharedCells {
            ptr: backing.as_mut_ptr(),
            len: backing.len(),
        }
    }

    #[inline]
    unsafe fn write(&self, index: usize, value: f64) {
        debug_assert!(index < self.len);
        *self.ptr.add(index) = value;
    }

    #[inline]
    unsafe fn read(&self, index: usize) -> f64 {
        debug_assert!(index < self.len);
        *self.ptr.add(index)
    }

    /// Exclusive view of one row. Callers must ensure no other thread
    /// touches `[start, start+len)` while the slice lives.
    #[inline]
    #[allow(clippy::mut_from_ref)]
    unsafe fn row_mut(&self, start: usize, len: usize) -> &mut [f64] {
        debug_assert!(start + len <= self.len);
        std::slice::from_raw_parts_mut(self.ptr.add(start), len)
    }
}

/// Parallel product written the way the guidelines say not to: a separate
/// region for initialization and another for the computation (four loops in
/// total), an explicit barrier after every phase, a scratch accumulator that
/// is copied out at the end, and column-first traversals so the inner loops
/// stride across rows instead of walking contiguous memory.
///
/// Its profile census is always 2 parallel regions, 4 parallel loops,
/// 3 explicit barriers.
pub fn matmul_naive_parallel(
    a: &Matrix,
    b: &Matrix,
    pool: &Pool,
    threads: usize,
    schedule: &ScheduleSpec,
) -> Result<(Matrix, ProfileReport)> {
    let n = check_square(a, b)?;
    let spec = schedule.resolve_from_env()?;
    pool.reset_profile();

    let mut c = Matrix::zeroed(n, n)?;
    let mut scratch = vec![0.0f64; n * n];
    let out = SharedCells::new(c.as_mut_slice());
    let tmp = SharedCells::new(&mut scratch);
    let av = a.as_slice();
    let bv = b.as_slice();

    pool.parallel_region(threads, "init", |ctx| {
        parallel_for(ctx, n, &spec, false, "zero-output", |_, cols| {
            for j in cols {
                for i in 0..n {
                    unsafe { out.write(i * n + j, 0.0) };
                }
            }
        })
        .expect("collective arguments are uniform");
        barrier(ctx, "init-sync");
        parallel_for(ctx, n, &spec, false, "zero-scratch", |_, cols| {
            for j in cols {
                for i in 0..n {
                    unsafe { tmp.write(i * n + j, 0.0) };
                }
            }
        })
        .expect("collective arguments are uniform");
    })?;

    pool.parallel_region(threads, "multiply", |ctx| {
        parallel_for(ctx, n, &spec, false, "accumulate", |_, cols| {
            for j in cols {
                for i in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += av[i * n + k] * bv[k * n + j];
                    }
                    unsafe { tmp.write(i * n + j, acc) };
                }
            }
        })
        .expect("collective arguments are uniform");
        barrier(ctx, "accumulate-sync");
        parallel_for(ctx, n, &spec, false, "copy-output", |_, cols| {
            for j in cols {
                for i in 0..n {
                    unsafe { out.write(i * n + j, tmp.read(i * n + j)) };
                }
            }
        })
        .expect("collective arguments are uniform");
        barrier(ctx, "copy-sync");
    })?;

    Ok((c, pool.profile_report()))
}

/// Parallel product following the guidelines: one parallel region hoisted
/// around three work-shared loops, no explicit barriers, i-k-j loop order so
/// the innermost index walks contiguous rows of both operands, and nowait on
/// loops whose implicit barrier is not needed for correctness.
///
/// The static schedule assigns identical row sets to every loop, making all
/// barriers elidable; claim-based schedules keep the implicit barrier
/// between dependent loops. The final loop never needs one — the region join
/// completes it. The census is always 1 region, 3 loops, 0 barriers.
pub fn matmul_optimized_parallel(
    a: &Matrix,
    b: &Matrix,
    pool: &Pool,
    threads: usize,
    schedule: &ScheduleSpec,
) -> Result<(Matrix, ProfileReport)> {
    let n = check_square(a, b)?;
    let spec = schedule.resolve_from_env()?;
    let nowait_between_phases = spec.kind() == ScheduleKind::Static;
    pool.reset_profile();

    let mut c = Matrix::zeroed(n, n)?;
    let out = SharedCells::new(c.as_mut_slice());
    let av = a.as_slice();
    let bv = b.as_slice();
    let split = n / 2;

    pool.parallel_region(threads, "multiply", |ctx| {
        parallel_for(ctx, n, &spec, nowait_between_phases, "zero-output", |_, rows| {
            for i in rows {
                unsafe { out.row_mut(i * n, n) }.fill(0.0);
            }
        })
        .expect("collective arguments are uniform");
        parallel_for(
            ctx,
            n,
            &spec,
            nowait_between_phases,
            "accumulate-low",
            |_, rows| {
                for i in rows {
                    let out_row = unsafe { out.row_mut(i * n, n) };
                    for k in 0..split {
                        let aik = av[i * n + k];
                        let b_row = &bv[k * n..(k + 1) * n];
                        for j in 0..n {
                            out_row[j] += aik * b_row[j];
                        }
                    }
                }
            },
        )
        .expect("collective arguments are uniform");
        parallel_for(ctx, n, &spec, true, "accumulate-high", |_, rows| {
            for i in rows {
                let out_row = unsafe { out.row_mut(i * n, n) };
                for k in split..n {
                    let aik = av[i * n + k];
                    let b_row = &bv[k * n..(k + 1) * n];
                    for j in 0..n {
                        out_row[j] += aik * b_row[j];
                    }
                }
            }
        })
        .expect("collective arguments are uniform");
    })?;

    Ok((c, pool.profile_report()))
}

/// One parallel region where thread t busy-works for `per_thread_busy[t]`
/// and then hits the implicit exit barrier, without resetting the pool's
/// profile window first.
pub fn skewed_region(pool: &Pool, threads: usize, per_thread_busy: &[Duration]) -> Result<()> {
    if per_thread_busy.len() != threads {
        return Err(Error::InvalidArgument(format!(
            "busy list has {} entries for {threads} threads",
            per_thread_busy.len()
        )));
    }
    pool.parallel_region(threads, "skewed-load", |ctx| {
        busy_work(per_thread_busy[ctx.thread_id()]);
    })?;
    Ok(())
}

/// Runs [`skewed_region`] in a fresh profile window and returns its report.
/// The imbalance seconds come out close to the sum over threads of
/// `max(busy) - busy[t]`.
pub fn skewed_workload(
    pool: &Pool,
    threads: usize,
    per_thread_busy: &[Duration],
) -> Result<ProfileReport> {
    pool.reset_profile();
    skewed_region(pool, threads, per_thread_busy)?;
    Ok(pool.profile_report())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serial_product_matches_hand_computation() {
        let a = Matrix::from_elements(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Matrix::from_elements(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = matmul_serial(&a, &b).unwrap();
        assert_eq!(c.as_slice(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn identity_is_neutral() {
        let a = Matrix::filled_random(6, 6, 9).unwrap();
        let product = matmul_serial(&a, &Matrix::identity(6).unwrap()).unwrap();
        assert_eq!(product, a);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = Matrix::zeroed(2, 3).unwrap();
        let b = Matrix::zeroed(2, 2).unwrap();
        assert!(matmul_serial(&a, &b).is_err());
    }
}
