//! Suite runner behind the `bench` subcommand.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::instance::{parse_instance, Instance};
use crate::oracle::{exact_optimum, oracle_fits};
use crate::pipeline::{solve, SolveOptions};
use crate::par::Exec;
use crate::rat::Rat;

pub const CSV_HEADER: &str = "instance,m,n,T,OPT,alg_value,ratio,millis";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRow {
    pub instance: String,
    pub m: usize,
    pub n: usize,
    pub t: Rat,
    pub opt: Option<Rat>,
    pub alg_value: Rat,
    /// `OPT / alg_value` when the oracle ran, otherwise `T / alg_value`.
    pub ratio: Option<Rat>,
    pub millis: u64,
}

/// Loads every `*.json` file of `dir` in name order.
pub fn load_suite(dir: &Path) -> Result<Vec<(String, Instance)>> {
    let io = |e| Error::Io { path: dir.display().to_string(), source: e };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .map(|entry| entry.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(io)?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::Io { path: p.display().to_string(), source: e })?;
            let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let inst = parse_instance(&text).map_err(|e| Error::parse(name.clone(), e.to_string()))?;
            Ok((name, inst))
        })
        .collect()
}

/// Solves every instance (in parallel across instances when `exec` allows;
/// each solve itself runs sequentially). Rows keep the suite order. With
/// `timings` off the `millis` column is zero so output is reproducible.
pub fn run_suite(suite: &[(String, Instance)], opts: &SolveOptions, exec: Exec, timings: bool) -> Result<Vec<BenchRow>> {
    let inner = SolveOptions { exec: Exec::Sequential, timings: false, ..*opts };
    exec.map(suite, |(name, inst)| {
        let start = Instant::now();
        let report = solve(inst, &inner)?;
        let millis = if timings { start.elapsed().as_millis() as u64 } else { 0 };
        let opt = if oracle_fits(inst) { Some(exact_optimum(inst)?.value) } else { None };
        let reference = opt.clone().unwrap_or_else(|| report.t.clone());
        let ratio = report.min_value.is_positive().then(|| &reference / &report.min_value);
        Ok(BenchRow {
            instance: name.clone(),
            m: inst.machine_count(),
            n: inst.job_count(),
            t: report.t,
            opt,
            alg_value: report.min_value,
            ratio,
            millis,
        })
    })
    .into_iter()
    .collect()
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let opt = r.opt.as_ref().map(Rat::to_string).unwrap_or_default();
        let ratio = r.ratio.as_ref().map(|q| format!("{:.4}", q.to_f64())).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{},{},{},{}", r.instance, r.m, r.n, r.t, opt, r.alg_value, ratio, r.millis);
    }
    out
}
