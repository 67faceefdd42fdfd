//! Brute-force oracles shared by the property and acceptance suites.
//!
//! These deliberately re-derive schedule behavior by simulating the dealing
//! process step by step, independent of the library's arithmetic.
#![allow(dead_code)] // each test binary uses its own subset

use forkprof::ChunkRange;

/// Deals blocks of `chunk` iterations to threads round-robin, one block at a
/// time, and returns the blocks owned by `tid`.
pub fn oracle_static_chunked(n: usize, p: usize, tid: usize, chunk: usize) -> Vec<ChunkRange> {
    let mut per_thread = vec![Vec::new(); p];
    let mut owner = 0;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        per_thread[owner].push(ChunkRange::new(start, end));
        owner = (owner + 1) % p;
        start = end;
    }
    per_thread.swap_remove(tid)
}

/// Splits `[0, n)` into one contiguous run per thread by repeatedly giving
/// the next thread the ceiling of what remains per remaining thread.
pub fn oracle_static_block(n: usize, p: usize, tid: usize) -> Vec<ChunkRange> {
    let mut start = 0;
    let mut remaining = n;
    for current in 0..p {
        let len = remaining.div_ceil(p - current);
        if current == tid {
            return if len == 0 {
                Vec::new()
            } else {
                vec![ChunkRange::new(start, start + len)]
            };
        }
        start += len;
        remaining -= len;
    }
    unreachable!("tid checked against p by callers")
}

/// Single-consumer simulation of the guided claim rule: take
/// `max(ceil(remaining / p), floor)` capped at the remainder until empty.
pub fn oracle_guided_sizes(n: usize, p: usize, floor: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut remaining = n;
    while remaining > 0 {
        let size = remaining.div_ceil(p).max(floor).min(remaining);
        sizes.push(size);
        remaining -= size;
    }
    sizes
}

/// Single-consumer simulation of dynamic claiming with a fixed chunk.
pub fn oracle_dynamic_sizes(n: usize, chunk: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut remaining = n;
    while remaining > 0 {
        let size = chunk.min(remaining);
        sizes.push(size);
        remaining -= size;
    }
    sizes
}
