//! Command-line front end. Exit codes: 0 success, 1 infeasible or violated,
//! 2 usage error (bad flags or malformed input documents).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::bench::{load_suite, run_suite, to_csv};
use crate::error::{Error, Result};
use crate::instance::{generate_random, parse_instance, verify_allocation, Allocation, Instance};
use crate::oracle::exact_optimum;
use crate::par::Exec;
use crate::pipeline::{solve, SolveOptions, Strategy, DEFAULT_ALPHA};
use crate::rat::Rat;

const SCHEMA_HELP: &str = "\
Input documents:
  instance:   {\"machines\": M, \"jobs\": [{\"size\": P, \"eligible\": [i, ...]}, ...]}
              M >= 1, P >= 1, every i in 0..M
  allocation: {\"owner\": {\"<job>\": <machine>, ...}, \"min_value\": \"p/q\"}
";

#[derive(Debug, Parser)]
#[command(name = "fairalloc", version, about = "Max-min fair allocation with certified 1/12 guarantee")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve an instance and write the allocation.
    Solve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Strategy::Matching)]
        strategy: Strategy,
        #[arg(long, default_value_t = DEFAULT_ALPHA, value_parser = clap::value_parser!(u64).range(1..))]
        alpha: u64,
        /// Write the JSON solve report here.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Exec::default())]
        exec: Exec,
        /// Leave stage timings out of the report.
        #[arg(long)]
        no_timings: bool,
    },
    /// Compute the exact optimum by exhaustive search.
    Exact {
        #[arg(long)]
        input: PathBuf,
        /// Also write an optimal allocation.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check an allocation against an instance and print its value.
    Verify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        alloc: PathBuf,
    },
    /// Generate a random instance.
    Gen {
        #[arg(long)]
        machines: usize,
        #[arg(long)]
        jobs: usize,
        #[arg(long)]
        max_size: u64,
        /// Eligibility probability as a fraction, e.g. 1/2.
        #[arg(long)]
        density: Rat,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve every instance in a directory and write a CSV summary.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Strategy::Matching)]
        strategy: Strategy,
        #[arg(long, value_enum, default_value_t = Exec::default())]
        exec: Exec,
        /// Write zero in the millis column.
        #[arg(long)]
        no_timings: bool,
    },
}

/// Runs the CLI on `argv` (program name first) with the process streams.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_cli_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn run_cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            let _ = write!(err, "{}\n{SCHEMA_HELP}", e.render());
            return 2;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::Parse { .. } | Error::Io { .. } | Error::InvalidArgument(_) => {
                    let _ = write!(err, "{SCHEMA_HELP}");
                    2
                }
                _ => 1,
            }
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
}

fn load(path: &Path) -> Result<Instance> {
    parse_instance(&read(path)?).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Solve { input, out: alloc_path, strategy, alpha, report, seed, exec, no_timings } => {
            let inst = load(&input)?;
            let opts = SolveOptions { strategy, alpha, exec, seed, timings: !no_timings, ..SolveOptions::default() };
            let r = solve(&inst, &opts)?;
            write_file(&alloc_path, &r.allocation.to_json())?;
            if let Some(path) = report {
                write_file(&path, &r.to_json())?;
            }
            let bound = r.certified_ratio_bound.as_ref().map_or_else(|| "none".to_string(), Rat::to_string);
            let _ = writeln!(out, "T = {}\nbranch = {}\nmin_value = {}\nratio_bound = {bound}", r.t, branch_name(&r), r.min_value);
            Ok(0)
        }
        Command::Exact { input, out: path } => {
            let inst = load(&input)?;
            let opt = exact_optimum(&inst)?;
            if let Some(path) = path {
                write_file(&path, &opt.witness.to_json())?;
            }
            let _ = writeln!(out, "OPT = {}", opt.value);
            Ok(0)
        }
        Command::Verify { input, alloc } => {
            let inst = load(&input)?;
            let text = read(&alloc)?;
            let alloc_doc = Allocation::from_json(&text).map_err(|e| Error::parse(alloc.display().to_string(), e.to_string()))?;
            let value = verify_allocation(&inst, &alloc_doc)?;
            let _ = writeln!(out, "min_value = {value}");
            if value != alloc_doc.min_value {
                let _ = writeln!(out, "stored min_value {} disagrees with the computed value", alloc_doc.min_value);
                return Ok(1);
            }
            Ok(0)
        }
        Command::Gen { machines, jobs, max_size, density, seed, out: path } => {
            let inst = generate_random(machines, jobs, max_size, &density, seed)?;
            write_file(&path, &inst.to_json())?;
            let _ = writeln!(out, "wrote {} machines, {} jobs to {}", machines, jobs, path.display());
            Ok(0)
        }
        Command::Bench { suite, out: path, strategy, exec, no_timings } => {
            let instances = load_suite(&suite)?;
            let opts = SolveOptions { strategy, ..SolveOptions::default() };
            let rows = run_suite(&instances, &opts, exec, !no_timings)?;
            write_file(&path, &to_csv(&rows))?;
            let _ = writeln!(out, "solved {} instances", rows.len());
            Ok(0)
        }
    }
}

fn branch_name(r: &crate::pipeline::SolveReport) -> String {
    serde_json::to_value(r.branch).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}
