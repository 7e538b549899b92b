//! Configuration LP family solved by column generation.
//!
//! One engine covers the plain configuration LP (one cover row per machine,
//! all jobs), its small-job restriction, and the extended variant over
//! composite machines (one exact cover row per group of machines).

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::cluster::ClusterSet;
use crate::gap::JobClasses;
use crate::instance::{Instance, JobId, MachineId};
use crate::knapsack::price_min_knapsack;
use crate::lp::{Bounds, IncrementalLp, LinearProgram, Relation};
use crate::par::Exec;
use crate::rat::Rat;
use crate::rounding::FractionalAssignment;

/// A set of jobs with its total size under the size model it was built for.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Configuration {
    pub jobs: Vec<JobId>,
    pub total_size: Rat,
}

impl Configuration {
    pub fn new(mut jobs: Vec<JobId>, sizes: &[Rat]) -> Self {
        jobs.sort_unstable();
        jobs.dedup();
        let total_size = jobs.iter().map(|&j| &sizes[j]).sum();
        Configuration { jobs, total_size }
    }

    pub fn contains(&self, job: JobId) -> bool {
        self.jobs.binary_search(&job).is_ok()
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    /// Covers `tau`, and dropping any single member falls below it.
    pub fn is_minimal(&self, sizes: &[Rat], tau: &Rat) -> bool {
        let total: Rat = self.jobs.iter().map(|&j| &sizes[j]).sum();
        total == self.total_size
            && total >= *tau
            && self.jobs.iter().all(|&j| &total - &sizes[j] < *tau)
    }

    pub fn is_disjoint(&self, other: &Configuration) -> bool {
        self.jobs.iter().all(|&j| !other.contains(j))
    }
}

/// Shrinks a covering job set to a minimal one at `tau`, dropping the
/// lowest-index removable job first. `None` if the set does not cover.
pub fn prune_to_minimal(jobs: &[JobId], sizes: &[Rat], tau: &Rat) -> Option<Configuration> {
    let mut kept: Vec<JobId> = jobs.to_vec();
    kept.sort_unstable();
    kept.dedup();
    let mut total: Rat = kept.iter().map(|&j| &sizes[j]).sum();
    if total < *tau {
        return None;
    }
    while let Some(k) = kept.iter().position(|&j| &total - &sizes[j] >= *tau) {
        total -= &sizes[kept[k]];
        kept.remove(k);
    }
    Some(Configuration { jobs: kept, total_size: total })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverMode {
    /// `sum_C x_iC >= 1` per cover row.
    AtLeastOne,
    /// `sum_C x_iC = 1` per cover row.
    ExactlyOne,
}

pub type Column = (MachineId, Configuration);

/// A configuration LP instance: which sizes, which threshold, which cover
/// rows and which jobs may appear in configurations.
#[derive(Debug, Clone)]
pub struct ClpProblem<'a> {
    pub inst: &'a Instance,
    pub sizes: Vec<Rat>,
    pub tau: Rat,
    pub mode: CoverMode,
    /// Each group is one cover row over the configurations of its machines.
    pub groups: Vec<Vec<MachineId>>,
    pub job_pool: Vec<bool>,
}

impl<'a> ClpProblem<'a> {
    /// The plain configuration LP: original sizes, one row per machine, all jobs.
    pub fn new(inst: &'a Instance, tau: Rat) -> Self {
        ClpProblem {
            inst,
            sizes: (0..inst.job_count()).map(|j| Rat::from(inst.size(j))).collect(),
            tau,
            mode: CoverMode::AtLeastOne,
            groups: (0..inst.machine_count()).map(|i| vec![i]).collect(),
            job_pool: vec![true; inst.job_count()],
        }
    }

    pub fn with_sizes(mut self, sizes: Vec<Rat>) -> Self {
        self.sizes = sizes;
        self
    }

    pub fn with_mode(mut self, mode: CoverMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_groups(mut self, groups: Vec<Vec<MachineId>>) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_job_pool(mut self, pool: Vec<bool>) -> Self {
        self.job_pool = pool;
        self
    }

    fn group_of(&self) -> BTreeMap<MachineId, usize> {
        let mut map = BTreeMap::new();
        for (g, members) in self.groups.iter().enumerate() {
            for &i in members {
                let prev = map.insert(i, g);
                assert!(prev.is_none(), "machine {i} appears in two cover groups");
            }
        }
        map
    }

    /// Whether `(machine, config)` is a legal column of this LP.
    pub fn admits(&self, machine: MachineId, config: &Configuration) -> bool {
        config
            .jobs
            .iter()
            .all(|&j| j < self.job_pool.len() && self.job_pool[j] && self.inst.is_eligible(machine, j))
            && config.is_minimal(&self.sizes, &self.tau)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClpSolution {
    pub tau: Rat,
    pub mode: CoverMode,
    /// Positive weights only.
    pub weights: BTreeMap<Column, Rat>,
}

#[derive(Serialize)]
struct ColumnDump<'a> {
    machine: MachineId,
    jobs: &'a [JobId],
    total_size: &'a Rat,
    weight: &'a Rat,
}

impl ClpSolution {
    pub fn columns_of(&self, machine: MachineId) -> impl Iterator<Item = (&Configuration, &Rat)> {
        let start = (machine, Configuration { jobs: Vec::new(), total_size: Rat::zero() });
        self.weights.range(start..).take_while(move |((i, _), _)| *i == machine).map(|((_, c), w)| (c, w))
    }

    pub fn machines(&self) -> Vec<MachineId> {
        let set: BTreeSet<MachineId> = self.weights.keys().map(|(i, _)| *i).collect();
        set.into_iter().collect()
    }

    /// `sum_C x_iC` for one machine.
    pub fn machine_weight(&self, machine: MachineId) -> Rat {
        self.columns_of(machine).map(|(_, w)| w).sum()
    }

    /// `sum_{i, C containing j} x_iC`.
    pub fn job_usage(&self, job: JobId) -> Rat {
        self.weights.iter().filter(|((_, c), _)| c.contains(job)).map(|(_, w)| w).sum()
    }

    /// Keeps only the columns accepted by `keep`.
    pub fn filtered(&self, keep: impl Fn(MachineId, &Configuration) -> bool) -> ClpSolution {
        ClpSolution {
            tau: self.tau.clone(),
            mode: self.mode,
            weights: self.weights.iter().filter(|((i, c), _)| keep(*i, c)).map(|(k, w)| (k.clone(), w.clone())).collect(),
        }
    }

    /// Compact JSON listing of the columns, for debugging.
    pub fn columns_json(&self) -> String {
        let dump: Vec<ColumnDump> = self
            .weights
            .iter()
            .map(|((i, c), w)| ColumnDump { machine: *i, jobs: &c.jobs, total_size: &c.total_size, weight: w })
            .collect();
        serde_json::to_string(&dump).expect("columns serialize")
    }
}

/// Checks every constraint of `problem` against `sol` exactly.
pub fn check_clp(problem: &ClpProblem, sol: &ClpSolution) -> Result<(), String> {
    let groups = problem.group_of();
    for ((i, c), w) in &sol.weights {
        if !w.is_positive() || *w > Rat::one() {
            return Err(format!("weight {w} of machine {i} on {:?} outside (0, 1]", c.jobs));
        }
        if !groups.contains_key(i) {
            return Err(format!("machine {i} carries a column but has no cover row"));
        }
        if !problem.admits(*i, c) {
            return Err(format!("column {:?} of machine {i} is not an eligible minimal configuration", c.jobs));
        }
    }
    for (g, members) in problem.groups.iter().enumerate() {
        let cover: Rat = members.iter().map(|&i| sol.machine_weight(i)).sum();
        let ok = match problem.mode {
            CoverMode::AtLeastOne => cover >= Rat::one(),
            CoverMode::ExactlyOne => cover == Rat::one(),
        };
        if !ok {
            return Err(format!("cover row {g} (machines {members:?}) sums to {cover}"));
        }
    }
    for j in 0..problem.inst.job_count() {
        let usage = sol.job_usage(j);
        if usage > Rat::one() {
            return Err(format!("job {j} used {usage} > 1"));
        }
    }
    Ok(())
}

/// Result of one column-generation run.
#[derive(Debug, Clone)]
pub struct ClpRun {
    pub solution: Option<ClpSolution>,
    /// Every column in the final master, feasible or not; reusable as a warm start.
    pub columns: Vec<Column>,
    pub rounds: usize,
}

/// Column generation for the feasibility version of `problem`.
///
/// The master maximizes `-sum(a_g)` with one artificial per cover row and is
/// priced with a min-cost knapsack per machine. At convergence the master is
/// optimal for the full LP, so a positive artificial mass proves infeasibility.
pub fn solve_clp(problem: &ClpProblem, warm: &[Column], exec: Exec) -> ClpRun {
    assert!(problem.tau.is_positive(), "configuration LP threshold must be positive");
    let group_of = problem.group_of();
    let pool_jobs: Vec<JobId> = (0..problem.inst.job_count()).filter(|&j| problem.job_pool[j]).collect();
    let machines: Vec<MachineId> = group_of.keys().copied().collect();

    let mut columns: BTreeSet<Column> = BTreeSet::new();
    for (i, c) in warm {
        if !group_of.contains_key(i) {
            continue;
        }
        if c.jobs.iter().any(|&j| !problem.job_pool[j] || !problem.inst.is_eligible(*i, j)) {
            continue;
        }
        if let Some(pruned) = prune_to_minimal(&c.jobs, &problem.sizes, &problem.tau) {
            columns.insert((*i, pruned));
        }
    }

    let g_count = problem.groups.len();
    let job_row: BTreeMap<JobId, usize> = pool_jobs.iter().enumerate().map(|(r, &j)| (j, g_count + r)).collect();
    let entries = |(i, c): &Column| -> Vec<(usize, Rat)> {
        std::iter::once((group_of[i], Rat::one())).chain(c.jobs.iter().map(|j| (job_row[j], Rat::one()))).collect()
    };

    // Artificial cover variables come first, then the columns in order.
    let mut lp = LinearProgram::new(g_count);
    let cover_rel = match problem.mode {
        CoverMode::AtLeastOne => Relation::Ge,
        CoverMode::ExactlyOne => Relation::Eq,
    };
    for g in 0..g_count {
        lp.add_constraint(vec![(g, Rat::one())], cover_rel, Rat::one());
        lp.bounds[g] = Bounds { lo: Some(Rat::zero()), hi: Some(Rat::one()) };
    }
    for _ in &pool_jobs {
        lp.add_constraint(Vec::new(), Relation::Le, Rat::one());
    }
    lp.set_objective((0..g_count).map(|g| (g, -Rat::one())).collect());
    let mut master = IncrementalLp::new(lp);
    let mut cols: Vec<Column> = Vec::new();
    for col in &columns {
        master.add_column(entries(col), Rat::zero());
        cols.push(col.clone());
    }

    let mut rounds = 0;
    loop {
        rounds += 1;
        let sol = master.solve();
        assert!(sol.is_optimal(), "configuration master is always feasible and bounded");

        let mut costs = vec![Rat::zero(); problem.inst.job_count()];
        for (r, &j) in pool_jobs.iter().enumerate() {
            costs[j] = sol.duals[g_count + r].clone();
        }
        let fresh: Vec<Option<Column>> = exec.map(&machines, |&i| {
            let threshold = -&sol.duals[group_of[&i]];
            if !threshold.is_positive() {
                return None;
            }
            let priced = price_min_knapsack(problem.inst, i, &problem.job_pool, &problem.sizes, &costs, &problem.tau)?;
            (priced.cost < threshold).then_some((i, priced.configuration))
        });
        let mut added = false;
        for col in fresh.into_iter().flatten() {
            let is_new = columns.insert(col.clone());
            assert!(is_new, "priced column already in the master");
            master.add_column(entries(&col), Rat::zero());
            cols.push(col);
            added = true;
        }
        if added {
            continue;
        }

        let solution = sol.objective.is_zero().then(|| ClpSolution {
            tau: problem.tau.clone(),
            mode: problem.mode,
            weights: cols
                .iter()
                .enumerate()
                .filter(|(k, _)| sol.values[g_count + k].is_positive())
                .map(|(k, col)| (col.clone(), sol.values[g_count + k].clone()))
                .collect(),
        });
        if let Some(s) = &solution {
            debug_assert_eq!(check_clp(problem, s), Ok(()));
        }
        return ClpRun { solution, columns: columns.into_iter().collect(), rounds };
    }
}

/// Feasible point of `problem`, or `None` when it is infeasible.
pub fn solve_clp_feasibility(problem: &ClpProblem) -> Option<ClpSolution> {
    solve_clp(problem, &[], Exec::default()).solution
}

/// Outcome of the binary search for the largest feasible integer threshold.
#[derive(Debug, Clone)]
pub struct TSearch {
    pub t: u64,
    /// Feasible solution of the plain configuration LP at `t` (absent when `t = 0`).
    pub solution: Option<ClpSolution>,
    pub probes: usize,
    pub rounds: usize,
}

/// Largest integer `tau` at which the plain configuration LP is feasible.
///
/// Searches `[0, min_i eligible_total_i]`; any larger `tau` leaves some machine
/// unable to reach it. With integer sizes the feasible set only changes at
/// integers, so the integer optimum is the true one rounded down.
pub fn find_t(inst: &Instance, exec: Exec) -> TSearch {
    let hi = (0..inst.machine_count()).map(|i| inst.eligible_total(i)).min().unwrap_or(0);
    let mut search = TSearch { t: 0, solution: None, probes: 0, rounds: 0 };
    let (mut lo, mut hi) = (0u64, hi);
    let mut warm: Vec<Column> = Vec::new();
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        let problem = ClpProblem::new(inst, Rat::from(mid));
        let run = solve_clp(&problem, &warm, exec);
        search.probes += 1;
        search.rounds += run.rounds;
        warm = run.columns;
        match run.solution {
            Some(sol) => {
                lo = mid;
                search.solution = Some(sol);
            }
            None => hi = mid - 1,
        }
    }
    // Feasible probes only raise `lo`, so the last stored solution is at `lo`.
    search.t = lo;
    search
}

/// `y_ij = sum_{C containing j} x_iC` over the machines of `sol`, with
/// `target` set to the smallest resulting machine value under `sizes`.
pub fn clp_to_alp(sol: &ClpSolution, sizes: &[Rat]) -> FractionalAssignment {
    let mut y: BTreeMap<(MachineId, JobId), Rat> = BTreeMap::new();
    for ((i, c), w) in &sol.weights {
        for &j in &c.jobs {
            *y.entry((*i, j)).or_insert_with(Rat::zero) += w;
        }
    }
    let machines = sol.machines();
    let mut fa = FractionalAssignment { machines, y, target: Rat::zero() };
    fa.target = fa.machines.iter().map(|&i| fa.machine_value(i, sizes)).min().unwrap_or_else(Rat::zero);
    fa
}

/// The modified configuration LP as a checker: every composite machine keeps
/// small-configuration mass at least 1/2 in `xstar`, and no small job is
/// over-used by small configurations.
pub fn check_mclp(clusters: &ClusterSet, xstar: &ClpSolution, classes: &JobClasses) -> Result<(), String> {
    let half = Rat::new(1, 2);
    let is_small = |c: &Configuration| c.jobs.iter().all(|&j| !classes.is_big(j));
    for (d, comp) in clusters.composites.iter().enumerate() {
        let mass: Rat = comp
            .machines
            .iter()
            .flat_map(|&i| xstar.columns_of(i))
            .filter(|(c, _)| is_small(c))
            .map(|(_, w)| w)
            .sum();
        if mass < half {
            return Err(format!("composite {d} (machines {:?}) has small mass {mass} < 1/2", comp.machines));
        }
    }
    for &j in &classes.small {
        let usage: Rat = xstar.weights.iter().filter(|((_, c), _)| is_small(c) && c.contains(j)).map(|(_, w)| w).sum();
        if usage > Rat::one() {
            return Err(format!("small job {j} used {usage} > 1"));
        }
    }
    Ok(())
}
