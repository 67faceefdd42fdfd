//! Property tests for the schedulers and the overhead arithmetic.

mod common;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use forkprof::{
    classify_overheads, emit_report, parallel_coverage, parallel_for, static_assignment, Census,
    OverheadBreakdown, Pool, ProfileReport, RegionDescriptor, RegionKind, RegionStats,
    ScheduleKind, ScheduleSpec, ThreadTimings, WorkshareState,
};

proptest! {
    #[test]
    fn static_chunked_matches_the_dealing_oracle(
        n in 0usize..200,
        p in 1usize..=8,
        chunk in 1usize..=7,
    ) {
        for tid in 0..p {
            prop_assert_eq!(
                static_assignment(n, p, tid, Some(chunk)).unwrap(),
                common::oracle_static_chunked(n, p, tid, chunk)
            );
        }
    }

    #[test]
    fn static_block_matches_the_remainder_oracle(n in 0usize..200, p in 1usize..=8) {
        for tid in 0..p {
            prop_assert_eq!(
                static_assignment(n, p, tid, None).unwrap(),
                common::oracle_static_block(n, p, tid)
            );
        }
    }

    #[test]
    fn guided_sequences_are_non_increasing_and_sum_to_n(
        n in 0usize..5_000,
        p in 1usize..=8,
        floor in 1usize..=8,
    ) {
        let spec = ScheduleSpec::guided(Some(floor)).unwrap();
        let state = WorkshareState::new(n, p, &spec).unwrap();
        let mut sizes = Vec::new();
        while let Some(range) = state.guided_next() {
            sizes.push(range.len());
        }
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        for pair in sizes.windows(2) {
            prop_assert!(pair[1] <= pair[0], "sizes grew: {:?}", sizes);
        }
        prop_assert_eq!(&sizes, &common::oracle_guided_sizes(n, p, floor));
    }

    #[test]
    fn dynamic_single_consumer_matches_cursor_simulation(
        n in 0usize..2_000,
        chunk in 1usize..=7,
    ) {
        let spec = ScheduleSpec::dynamic(Some(chunk)).unwrap();
        let state = WorkshareState::new(n, 3, &spec).unwrap();
        let mut sizes = Vec::new();
        let mut next_start = 0;
        while let Some(range) = state.dynamic_next() {
            prop_assert_eq!(range.start, next_start, "claims must be prefix-contiguous");
            next_start = range.end;
            sizes.push(range.len());
        }
        prop_assert_eq!(&sizes, &common::oracle_dynamic_sizes(n, chunk));
    }

    #[test]
    fn overhead_identity_holds_for_arbitrary_timings(
        rows in prop::collection::vec(
            (0.0f64..50.0, 0.0f64..50.0, 0.0f64..50.0, 0.0f64..50.0, 0.0f64..50.0, 0.0f64..50.0),
            1..8,
        ),
        wall in 0.0f64..100.0,
    ) {
        let per_thread: Vec<ThreadTimings> = rows
            .into_iter()
            .map(|(body, enter, exit, explicit, mgmt, idle)| ThreadTimings {
                body_s: body,
                enter_wait_s: enter,
                exit_barrier_s: exit,
                explicit_barrier_s: explicit,
                mgmt_s: mgmt,
                idle_limpar_s: idle,
                entry_count: 1,
            })
            .collect();
        let stats = RegionStats {
            descriptor: RegionDescriptor {
                id: 0,
                kind: RegionKind::Parallel,
                label: "p".to_string(),
            },
            wall_s: wall,
            per_thread,
            completed: true,
            top_level: true,
        };
        let b = classify_overheads(&stats);
        prop_assert_eq!(b.ovhds_s, b.synch_s + b.imbal_s + b.limpar_s + b.mgmt_s);
        prop_assert_eq!(
            b.ovhds_pct,
            b.synch_pct + b.imbal_pct + b.limpar_pct + b.mgmt_pct
        );
        prop_assert!(b.ovhds_s >= 0.0);
    }

    #[test]
    fn coverage_stays_in_unit_range(
        region_walls in prop::collection::vec(0.0f64..10.0, 0..6),
        program_wall in 0.0f64..5.0,
    ) {
        let regions = region_walls
            .iter()
            .enumerate()
            .map(|(id, &wall_s)| forkprof::RegionReport {
                id: id as u64,
                kind: RegionKind::Parallel,
                label: format!("r{id}"),
                wall_s,
                completed: true,
                top_level: true,
                threads: vec![],
                overheads: OverheadBreakdown::default(),
            })
            .collect();
        let report = ProfileReport {
            team_size: 2,
            census: Census::default(),
            program_wall_s: program_wall,
            parallel_coverage: 0.0,
            regions,
            totals: OverheadBreakdown::default(),
        };
        let coverage = parallel_coverage(&report);
        prop_assert!((0.0..=1.0).contains(&coverage));
    }

    #[test]
    fn json_report_round_trips_arbitrary_durations(
        wall in 0.0f64..1_000.0,
        body in 0.0f64..1_000.0,
        coverage in 0.0f64..=1.0,
    ) {
        let report = ProfileReport {
            team_size: 3,
            census: Census {
                parallel_regions: 1,
                parallel_loops: 0,
                barriers: 0,
            },
            program_wall_s: wall,
            parallel_coverage: coverage,
            regions: vec![forkprof::RegionReport {
                id: 0,
                kind: RegionKind::Parallel,
                label: "r".to_string(),
                wall_s: wall,
                completed: true,
                top_level: true,
                threads: vec![forkprof::ThreadRow {
                    tid: 0,
                    body_s: body,
                    enter_wait_s: 0.0,
                    exit_barrier_s: 0.0,
                    explicit_barrier_s: 0.0,
                    mgmt_s: 0.0,
                    idle_limpar_s: 0.0,
                    entry_count: 1,
                }],
                overheads: OverheadBreakdown::default(),
            }],
            totals: OverheadBreakdown::default(),
        };
        let first = emit_report(&report, forkprof::ReportFormat::Json);
        let parsed = ProfileReport::from_json(&first).unwrap();
        prop_assert_eq!(&parsed, &report);
        let second = emit_report(&parsed, forkprof::ReportFormat::Json);
        prop_assert_eq!(first, second);
    }
}

/// Concurrent claiming partitions the loop: no claim overlaps another and
/// together they cover exactly `[0, n)`, whatever the interleaving.
#[test]
fn concurrent_claims_partition_without_overlap() {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    for round in 0..30 {
        let n = rng.gen_range(0..400);
        let claimers = rng.gen_range(1..=4usize);
        let chunk = rng.gen_range(1..=5usize);
        let guided = rng.gen_bool(0.5);
        let spec = if guided {
            ScheduleSpec::guided(Some(chunk)).unwrap()
        } else {
            ScheduleSpec::dynamic(Some(chunk)).unwrap()
        };
        let state = WorkshareState::new(n, claimers, &spec).unwrap();
        let hits: Vec<AtomicU32> = (0..n).map(|_| AtomicU32::new(0)).collect();
        thread::scope(|scope| {
            for worker in 0..claimers {
                let state = &state;
                let hits = &hits;
                let mut delay_rng = StdRng::seed_from_u64(round * 16 + worker as u64);
                scope.spawn(move || {
                    while let Some(range) = state.next_chunk() {
                        if delay_rng.gen_bool(0.3) {
                            thread::sleep(Duration::from_micros(delay_rng.gen_range(0..200)));
                        }
                        for i in range {
                            hits[i].fetch_add(1, Ordering::Relaxed);
                        }
                    }
                });
            }
        });
        for (i, hit) in hits.iter().enumerate() {
            assert_eq!(
                hit.load(Ordering::Relaxed),
                1,
                "iteration {i} of round {round} claimed a wrong number of times"
            );
        }
        assert_eq!(state.next_unclaimed(), n);
    }
}

/// The full construct delivers every iteration exactly once for a random
/// sample of (n, p, chunk, kind) combinations.
#[test]
fn parallel_for_partitions_random_configurations() {
    let mut rng = StdRng::seed_from_u64(7);
    let mut pools: HashMap<usize, Pool> = HashMap::new();
    for _ in 0..40 {
        let n = rng.gen_range(0..150);
        let p = rng.gen_range(1..=4usize);
        let chunk = if rng.gen_bool(0.5) {
            None
        } else {
            Some(rng.gen_range(1..=7usize))
        };
        let kind = match rng.gen_range(0..3) {
            0 => ScheduleKind::Static,
            1 => ScheduleKind::Dynamic,
            _ => ScheduleKind::Guided,
        };
        let spec = ScheduleSpec::new(kind, chunk).unwrap();
        let pool = pools
            .entry(p)
            .or_insert_with(|| Pool::new(p).expect("pool builds"));
        let hits: Vec<AtomicU32> = (0..n).map(|_| AtomicU32::new(0)).collect();
        let hits_ref = &hits;
        let spec_ref = &spec;
        pool.parallel_region(p, "partition", |ctx| {
            parallel_for(ctx, n, spec_ref, false, "partition-loop", |_, range| {
                for i in range {
                    hits_ref[i].fetch_add(1, Ordering::Relaxed);
                }
            })
            .unwrap();
        })
        .unwrap();
        for (i, hit) in hits.iter().enumerate() {
            assert_eq!(
                hit.load(Ordering::Relaxed),
                1,
                "iteration {i} under {spec} on {p} threads"
            );
        }
    }
}

/// Claim order across threads is free, but each claim must be the prefix of
/// the unclaimed tail at claim time: observed starts are strictly increasing
/// per the shared cursor.
#[test]
fn claims_are_prefix_contiguous_under_contention() {
    let spec = ScheduleSpec::dynamic(Some(3)).unwrap();
    let state = WorkshareState::new(1_000, 4, &spec).unwrap();
    let observed = Mutex::new(Vec::new());
    thread::scope(|scope| {
        for _ in 0..4 {
            let state = &state;
            let observed = &observed;
            scope.spawn(move || {
                while let Some(range) = state.dynamic_next() {
                    observed.lock().unwrap().push(range);
                }
            });
        }
    });
    let mut ranges = observed.into_inner().unwrap();
    ranges.sort_by_key(|r| r.start);
    let mut expected_start = 0;
    for range in ranges {
        assert_eq!(range.start, expected_start, "gap or overlap in claims");
        assert!(!range.is_empty());
        expected_start = range.end;
    }
    assert_eq!(expected_start, 1_000);
}
