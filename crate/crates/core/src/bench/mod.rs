//! Benchmark workloads: serial-oracle matrix multiplication, a deliberately
//! naive parallel variant, an optimized variant, and synthetic skewed
//! workloads for validating the overhead classifier.

mod kernels;

pub use kernels::{
    matmul_naive_parallel, matmul_optimized_parallel, matmul_serial, skewed_region,
    skewed_workload,
};

use std::fmt;
use std::time::{Duration, Instant};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::ProfileReport;
use crate::runtime::Pool;
use crate::schedule::ScheduleSpec;

/// Dense row-major matrix of f64 values, allocated on the heap.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    elements: Vec<f64>,
}

impl Matrix {
    /// A zero matrix. Dimensions must be positive.
    pub fn zeroed(rows: usize, cols: usize) -> Result<Matrix> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(
                "matrix dimensions must be positive".to_string(),
            ));
        }
        Ok(Matrix {
            rows,
            cols,
            elements: vec![0.0; rows * cols],
        })
    }

    /// Builds a matrix from row-major data.
    pub fn from_elements(rows: usize, cols: usize, elements: Vec<f64>) -> Result<Matrix> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(
                "matrix dimensions must be positive".to_string(),
            ));
        }
        if elements.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "expected {} elements for a {rows}x{cols} matrix, got {}",
                rows * cols,
                elements.len()
            )));
        }
        Ok(Matrix {
            rows,
            cols,
            elements,
        })
    }

    /// Deterministic fill with small integer values in [0, 16). Products of
    /// such matrices are exactly representable, so parallel variants can be
    /// compared to the serial oracle without tolerances.
    pub fn filled_random(rows: usize, cols: usize, seed: u64) -> Result<Matrix> {
        let mut m = Matrix::zeroed(rows, cols)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = Uniform::from(0u8..16);
        for slot in &mut m.elements {
            *slot = f64::from(values.sample(&mut rng));
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Result<Matrix> {
        let mut m = Matrix::zeroed(n, n)?;
        for i in 0..n {
            m.elements[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.elements[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.elements[row * self.cols + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.elements
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.elements
    }

    /// Order-independent digest: the exact element sum plus a positional
    /// hash over 64 fixed sample indices, catching both value and placement
    /// errors.
    pub fn checksum(&self) -> MatrixChecksum {
        let len = self.elements.len();
        let element_sum: f64 = self.elements.iter().sum();
        let mut sample_hash: u64 = 0xcbf2_9ce4_8422_2325;
        for k in 0..64usize {
            let index = (k * len) / 64;
            let bits = self.elements[index].to_bits();
            sample_hash ^= index as u64;
            sample_hash = sample_hash.wrapping_mul(0x0000_0100_0000_01b3);
            sample_hash ^= bits;
            sample_hash = sample_hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        MatrixChecksum {
            element_sum,
            sample_hash,
        }
    }
}

/// Digest of a product matrix used as the correctness gate of a benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixChecksum {
    pub element_sum: f64,
    pub sample_hash: u64,
}

impl fmt::Display for MatrixChecksum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sum={} hash={:016x}", self.element_sum, self.sample_hash)
    }
}

/// Which matrix-multiplication kernel a benchmark runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Two parallel regions, four loops, three explicit barriers, and
    /// column-wise inner traversals.
    Naive,
    /// One hoisted parallel region, three loops with nowait where legal,
    /// no explicit barriers, row-wise traversal throughout.
    Optimized,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Naive => "naive",
            Variant::Optimized => "optimized",
        })
    }
}

/// Configuration of one benchmark run.
#[derive(Clone, Debug)]
pub struct BenchConfig {
    /// Square matrix dimension.
    pub n: usize,
    /// Team size.
    pub threads: usize,
    pub schedule: ScheduleSpec,
    pub variant: Variant,
    /// Repetitions; the best wall time is the headline number.
    pub trials: usize,
    /// Seed for the deterministic matrix fill.
    pub seed: u64,
}

/// Wall times, correctness digest and final-trial profile of one benchmark.
#[derive(Clone, Debug)]
pub struct BenchResult {
    pub per_trial_wall_s: Vec<f64>,
    pub best_wall_s: f64,
    pub mean_wall_s: f64,
    pub checksum: MatrixChecksum,
    pub profile: ProfileReport,
}

/// Runs the configured kernel `trials` times on deterministically filled
/// matrices, verifying every product against the serial oracle before any
/// timing is reported. A checksum mismatch is a hard error.
pub fn run_benchmark(config: &BenchConfig, pool: &Pool) -> Result<BenchResult> {
    if config.n == 0 {
        return Err(Error::InvalidArgument(
            "matrix dimension must be at least 1".to_string(),
        ));
    }
    if config.trials == 0 {
        return Err(Error::InvalidArgument(
            "trials must be at least 1".to_string(),
        ));
    }
    if config.threads == 0 {
        return Err(Error::InvalidArgument(
            "threads must be at least 1".to_string(),
        ));
    }
    let a = Matrix::filled_random(config.n, config.n, config.seed)?;
    let b = Matrix::filled_random(config.n, config.n, config.seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let oracle = matmul_serial(&a, &b)?;
    let expected = oracle.checksum();

    let mut per_trial_wall_s = Vec::with_capacity(config.trials);
    let mut last_profile = None;
    for trial in 0..config.trials {
        let start = Instant::now();
        let (product, profile) = match config.variant {
            Variant::Naive => {
                matmul_naive_parallel(&a, &b, pool, config.threads, &config.schedule)?
            }
            Variant::Optimized => {
                matmul_optimized_parallel(&a, &b, pool, config.threads, &config.schedule)?
            }
        };
        per_trial_wall_s.push(start.elapsed().as_secs_f64());
        let got = product.checksum();
        if got != expected {
            return Err(Error::CorrectnessFailure(format!(
                "trial {trial}: {} kernel produced {got}, oracle says {expected}",
                config.variant
            )));
        }
        last_profile = Some(profile);
    }
    let best_wall_s = per_trial_wall_s
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let mean_wall_s = per_trial_wall_s.iter().sum::<f64>() / per_trial_wall_s.len() as f64;
    Ok(BenchResult {
        per_trial_wall_s,
        best_wall_s,
        mean_wall_s,
        checksum: expected,
        profile: last_profile.expect("at least one trial ran"),
    })
}

/// Spins for the given duration; used by workloads that must stay on-CPU
/// rather than sleep.
pub fn busy_work(duration: Duration) {
    let start = Instant::now();
    while start.elapsed() < duration {
        std::hint::spin_loop();
    }
}
