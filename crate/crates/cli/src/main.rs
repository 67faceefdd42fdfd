//! Command-line front end: runs benchmarks and overhead demos, writes
//! profile reports, and compares two reports for before/after analysis.
//!
//! Exit codes: 0 success, 1 correctness failure, 2 usage or I/O error,
//! 3 compare verdict "not improved".

mod demo;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use forkprof::bench::{run_benchmark, BenchConfig, Variant};
use forkprof::{
    emit_report, resolve_runtime_schedule, Error, Pool, ProfileReport, ReportFormat, ScheduleKind,
    ScheduleSpec, SCHEDULE_ENV_VAR,
};

const EXIT_CORRECTNESS: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NOT_IMPROVED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "forkprof",
    about = "Fork-join benchmark harness with overhead profiling",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a matrix-multiplication benchmark and emit its profile report.
    Bench(BenchArgs),
    /// Run synthetic scenarios that exercise all four overhead categories.
    DemoOverheads(DemoArgs),
    /// Compare two JSON reports; exits 3 unless the second improved.
    Compare(CompareArgs),
}

#[derive(Args)]
struct BenchArgs {
    /// Square matrix dimension.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    size: u64,
    /// Team size.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,
    /// Kernel flavor to run.
    #[arg(long, default_value = "naive", value_parser = parse_variant)]
    variant: Variant,
    /// static|dynamic|guided|runtime, optionally with ",chunk".
    #[arg(long, default_value = "static", value_parser = parse_schedule)]
    schedule: ScheduleSpec,
    /// Repetitions; the best wall time is the headline number.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    /// Seed for the deterministic matrix fill.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
    #[command(flatten)]
    watchdog: WatchdogArg,
}

#[derive(Args)]
struct DemoArgs {
    /// Team size.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,
    /// Per-thread busy milliseconds, comma-separated; length must equal
    /// --threads. Defaults to 40ms steps per thread id.
    #[arg(long)]
    skew: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
    #[command(flatten)]
    watchdog: WatchdogArg,
}

#[derive(Args)]
struct CompareArgs {
    /// Baseline report (JSON).
    first: PathBuf,
    /// Candidate report (JSON).
    second: PathBuf,
}

#[derive(Args)]
struct OutputArgs {
    /// Report format.
    #[arg(long = "report", default_value = "text", value_parser = parse_format)]
    format: ReportFormat,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WatchdogArg {
    /// Abort blocking waits with a diagnostic after this many milliseconds.
    #[arg(long = "watchdog-ms")]
    watchdog_ms: Option<u64>,
}

impl WatchdogArg {
    fn timeout(&self) -> Option<Duration> {
        self.watchdog_ms.map(Duration::from_millis)
    }
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    match s {
        "naive" => Ok(Variant::Naive),
        "optimized" => Ok(Variant::Optimized),
        other => Err(format!("unknown variant '{other}' (naive|optimized)")),
    }
}

fn parse_schedule(s: &str) -> Result<ScheduleSpec, String> {
    s.parse::<ScheduleSpec>().map_err(|e| e.to_string())
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse::<ReportFormat>().map_err(|e| e.to_string())
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::InvalidArgument(_) | Error::ScheduleParse(_) => EXIT_USAGE,
            _ => EXIT_CORRECTNESS,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(args) => cmd_bench(args),
        Command::DemoOverheads(args) => cmd_demo_overheads(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn cmd_bench(args: BenchArgs) -> Result<u8, Failure> {
    let schedule = if args.schedule.kind() == ScheduleKind::Runtime {
        let value = std::env::var(SCHEDULE_ENV_VAR).ok();
        resolve_runtime_schedule(value.as_deref(), &ScheduleSpec::static_block())?
    } else {
        args.schedule.clone()
    };
    let config = BenchConfig {
        n: args.size as usize,
        threads: args.threads as usize,
        schedule,
        variant: args.variant,
        trials: args.trials as usize,
        seed: args.seed,
    };
    let pool = Pool::builder()
        .max_workers(config.threads)
        .watchdog(args.watchdog.timeout())
        .build()?;
    let result = run_benchmark(&config, &pool)?;
    for (index, wall) in result.per_trial_wall_s.iter().enumerate() {
        println!("trial {}/{}: {:.6} s", index + 1, config.trials, wall);
    }
    println!(
        "{} n={} threads={} schedule={}: best {:.6} s, mean {:.6} s, checksum {}",
        args.variant, config.n, config.threads, config.schedule, result.best_wall_s,
        result.mean_wall_s, result.checksum
    );
    write_report(&result.profile, &args.output)?;
    Ok(0)
}

fn cmd_demo_overheads(args: DemoArgs) -> Result<u8, Failure> {
    let threads = args.threads as usize;
    let busy = match &args.skew {
        Some(pattern) => parse_skew(pattern, threads)?,
        None => (0..threads)
            .map(|tid| Duration::from_millis(40 * tid as u64))
            .collect(),
    };
    let pool = Pool::builder()
        .max_workers(threads)
        .watchdog(args.watchdog.timeout())
        .build()?;
    let report = demo::run_all_scenarios(&pool, threads, &busy)?;
    write_report(&report, &args.output)?;
    Ok(0)
}

fn parse_skew(pattern: &str, threads: usize) -> Result<Vec<Duration>, Failure> {
    let parsed: Result<Vec<u64>, _> = pattern.split(',').map(|t| t.trim().parse()).collect();
    let millis =
        parsed.map_err(|_| Failure::usage(format!("--skew '{pattern}' is not a list of ms")))?;
    if millis.len() != threads {
        return Err(Failure::usage(format!(
            "--skew lists {} entries for {threads} threads",
            millis.len()
        )));
    }
    Ok(millis.into_iter().map(Duration::from_millis).collect())
}

fn cmd_compare(args: CompareArgs) -> Result<u8, Failure> {
    let first = load_report(&args.first)?;
    let second = load_report(&args.second)?;
    print_comparison(&args, &first, &second);
    if second.totals.ovhds_pct <= first.totals.ovhds_pct {
        println!("verdict: improved (total overhead percentage did not rise)");
        Ok(0)
    } else {
        println!("verdict: not improved");
        Ok(EXIT_NOT_IMPROVED)
    }
}

fn load_report(path: &PathBuf) -> Result<ProfileReport, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure {
        code: EXIT_USAGE,
        message: format!("{}: {e}", path.display()),
    })?;
    ProfileReport::from_json(&bytes).map_err(|e| Failure {
        code: EXIT_USAGE,
        message: format!("{}: {e}", path.display()),
    })
}

fn print_comparison(args: &CompareArgs, first: &ProfileReport, second: &ProfileReport) {
    let name_a = args.first.display().to_string();
    let name_b = args.second.display().to_string();
    println!("{:<22} {:>16} {:>16} {:>12}", "metric", "first", "second", "delta");
    let row = |label: &str, a: f64, b: f64| {
        println!("{label:<22} {a:>16.6} {b:>16.6} {:>+12.6}", b - a);
    };
    row("program wall s", first.program_wall_s, second.program_wall_s);
    row(
        "parallel coverage",
        first.parallel_coverage,
        second.parallel_coverage,
    );
    row("synch s", first.totals.synch_s, second.totals.synch_s);
    row("imbal s", first.totals.imbal_s, second.totals.imbal_s);
    row("limpar s", first.totals.limpar_s, second.totals.limpar_s);
    row("mgmt s", first.totals.mgmt_s, second.totals.mgmt_s);
    row("ovhds s", first.totals.ovhds_s, second.totals.ovhds_s);
    row("ovhds pct", first.totals.ovhds_pct, second.totals.ovhds_pct);
    let census = |label: &str, a: usize, b: usize| {
        println!(
            "{label:<22} {a:>16} {b:>16} {:>+12}",
            b as i64 - a as i64
        );
    };
    census(
        "parallel regions",
        first.census.parallel_regions,
        second.census.parallel_regions,
    );
    census(
        "parallel loops",
        first.census.parallel_loops,
        second.census.parallel_loops,
    );
    census("barriers", first.census.barriers, second.census.barriers);
    println!("first:  {name_a}");
    println!("second: {name_b}");
}

fn write_report(report: &ProfileReport, output: &OutputArgs) -> Result<(), Failure> {
    let bytes = emit_report(report, output.format);
    match &output.out {
        Some(path) => fs::write(path, bytes).map_err(|e| Failure {
            code: EXIT_USAGE,
            message: format!("{}: {e}", path.display()),
        }),
        None => {
            print!("{}", String::from_utf8_lossy(&bytes));
            Ok(())
        }
    }
}
