//! End-to-end solver: threshold search, gap instance, classification, then
//! either the all-middle branch or clustering plus matching, rounding and
//! assembly. Every stage checks its own postcondition, and the final
//! allocation is certified against the original sizes.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::clp::{check_clp, check_mclp, clp_to_alp, find_t, solve_clp, ClpProblem, ClpSolution, CoverMode};
use crate::cluster::{build_big_graph, eliminate_cycles, extract_clusters, place_super_jobs, BigGraph, ClusterSet, CompositeKind};
use crate::eap::{check_eap, eap_from_matching, restrict_eap, select_by_enumeration, EapSolution, Selection, DEFAULT_SELECTION_BUDGET};
use crate::error::{Error, Result};
use crate::gap::{build_gap_instance, classify_jobs, classify_machines, transfer_to_gap, GapInstance, JobClasses, MachineClasses};
use crate::hypergraph::{find_perfect_matching, Hypergraph, MatchingOptions, MatchingState, MatchingStats, MatchingStrategy, DEFAULT_TREE_BUDGET};
use crate::instance::{machine_loads, Allocation, Instance, JobId, MachineId};
use crate::par::Exec;
use crate::rat::Rat;
use crate::rounding::{round_assignment, FractionalAssignment};

pub const DEFAULT_ALPHA: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Alternating-tree hypergraph matching.
    Matching,
    /// Selection enumeration with an assignment LP per candidate.
    Enumeration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOptions {
    pub strategy: Strategy,
    pub alpha: u64,
    pub exec: Exec,
    /// Recorded in the report; the pipeline itself is deterministic.
    pub seed: u64,
    pub matching_budget: u64,
    pub selection_budget: u64,
    pub timings: bool,
    pub trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            strategy: Strategy::Matching,
            alpha: DEFAULT_ALPHA,
            exec: Exec::default(),
            seed: 0,
            matching_budget: DEFAULT_TREE_BUDGET,
            selection_budget: DEFAULT_SELECTION_BUDGET,
            timings: true,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// `T = 0`: some machine has no eligible job.
    Trivial,
    NoUpper,
    Clustered,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub t_probes: usize,
    pub t_rounds: usize,
    pub gap_rounds: usize,
    pub upper: usize,
    pub middle: usize,
    pub boundary: usize,
    pub rotations: usize,
    pub supers: usize,
    pub dedicated: usize,
    pub composites: usize,
    pub matching: Option<MatchingStats>,
    /// Jobs placed by the completion step after certification.
    pub completion_jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageTiming {
    pub stage: &'static str,
    pub micros: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SolveReport {
    #[serde(rename = "T")]
    pub t: Rat,
    pub alpha: u64,
    pub branch: Branch,
    pub strategy: Strategy,
    pub exec: Exec,
    pub seed: u64,
    /// Minimum load of the certified core allocation.
    pub core_min_value: Rat,
    /// Minimum load after leftover jobs are handed out.
    pub min_value: Rat,
    /// `T / min_value`, absent when `min_value = 0`.
    pub certified_ratio_bound: Option<Rat>,
    /// How the all-middle branch obtains its small-job mass.
    pub small_mass_source: &'static str,
    pub counters: Counters,
    pub timings: Vec<StageTiming>,
    #[serde(skip)]
    pub allocation: Allocation,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Intermediate objects of one run, for inspection and tests.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub gap_size: Vec<Rat>,
    pub jobs: Option<JobClasses>,
    pub machines: Option<MachineClasses>,
    /// Exact-cover solution of the gap configuration LP at `T`.
    pub x: Option<ClpSolution>,
    pub big_graph: Option<BigGraph>,
    pub forest_graph: Option<BigGraph>,
    pub clusters: Option<ClusterSet>,
    pub matching: Option<MatchingState>,
    pub eap: Option<EapSolution>,
    pub restricted: Option<EapSolution>,
    pub selection: Option<Selection>,
    pub fractional: Option<FractionalAssignment>,
    pub core_owner: BTreeMap<JobId, MachineId>,
}

struct Clock {
    enabled: bool,
    last: Instant,
    stages: Vec<StageTiming>,
}

impl Clock {
    fn new(enabled: bool) -> Self {
        Clock { enabled, last: Instant::now(), stages: Vec::new() }
    }

    fn lap(&mut self, stage: &'static str) {
        if self.enabled {
            let now = Instant::now();
            self.stages.push(StageTiming { stage, micros: (now - self.last).as_micros() as u64 });
            self.last = now;
        }
    }
}

pub fn solve(inst: &Instance, opts: &SolveOptions) -> Result<SolveReport> {
    solve_detailed(inst, opts).map(|(report, _)| report)
}

pub fn solve_detailed(inst: &Instance, opts: &SolveOptions) -> Result<(SolveReport, Artifacts)> {
    check_alpha(opts)?;
    let mut clock = Clock::new(opts.timings);
    let mut counters = Counters::default();

    let search = find_t(inst, opts.exec);
    counters.t_probes = search.probes;
    counters.t_rounds = search.rounds;
    clock.lap("find_t");
    let t = Rat::from(search.t);
    let Some(x_orig) = search.solution else {
        let empty = Allocation::empty(inst);
        let report = make_report(inst, &t, opts, Branch::Trivial, BTreeMap::new(), empty, counters, clock)?;
        return Ok((report, Artifacts::default()));
    };

    let gap = build_gap_instance(inst, &t, opts.alpha)?;
    let jobs = classify_jobs(&gap);
    let problem = gap_problem(&gap);
    let warm: Vec<_> = transfer_to_gap(&x_orig, &gap, &jobs).weights.into_keys().collect();
    let run = solve_clp(&problem, &warm, opts.exec);
    counters.gap_rounds = run.rounds;
    let x = run.solution.ok_or_else(|| Error::post("gap-clp", "gap LP infeasible at T although the original is feasible"))?;
    check_clp(&problem, &x).map_err(|e| Error::post("gap-clp", e))?;
    clock.lap("gap_clp");
    finish(&gap, jobs, x, opts, clock, counters)
}

/// Runs every stage after the gap configuration LP on a caller-supplied
/// solution `x`: exact-cover mode, gap sizes, threshold `t`. The guarantee
/// `min_value >= t / alpha` holds for any such `x`.
pub fn solve_from_clp(inst: &Instance, t: &Rat, x: ClpSolution, opts: &SolveOptions) -> Result<(SolveReport, Artifacts)> {
    check_alpha(opts)?;
    if !t.is_positive() {
        return Err(Error::InvalidArgument(format!("threshold {t} must be positive")));
    }
    let gap = build_gap_instance(inst, t, opts.alpha)?;
    let jobs = classify_jobs(&gap);
    check_clp(&gap_problem(&gap), &x).map_err(Error::Precondition)?;
    finish(&gap, jobs, x, opts, Clock::new(opts.timings), Counters::default())
}

fn check_alpha(opts: &SolveOptions) -> Result<()> {
    if opts.alpha == 0 {
        return Err(Error::InvalidArgument("alpha must be at least 1".into()));
    }
    Ok(())
}

fn gap_problem<'a>(gap: &GapInstance<'a>) -> ClpProblem<'a> {
    ClpProblem::new(gap.base, gap.tau.clone()).with_sizes(gap.gap_size.clone()).with_mode(CoverMode::ExactlyOne)
}

#[allow(clippy::too_many_arguments)]
fn make_report(
    inst: &Instance,
    t: &Rat,
    opts: &SolveOptions,
    branch: Branch,
    core: BTreeMap<JobId, MachineId>,
    alloc: Allocation,
    counters: Counters,
    clock: Clock,
) -> Result<SolveReport> {
    Ok(SolveReport {
        t: t.clone(),
        alpha: opts.alpha,
        branch,
        strategy: opts.strategy,
        exec: opts.exec,
        seed: opts.seed,
        core_min_value: Allocation::new(inst, core)?.min_value,
        certified_ratio_bound: alloc.min_value.is_positive().then(|| t / &alloc.min_value),
        min_value: alloc.min_value.clone(),
        small_mass_source: "classifying-solution",
        counters,
        timings: clock.stages,
        allocation: alloc,
    })
}

/// Classification, the branch work, certification and completion.
fn finish(
    gap: &GapInstance,
    jobs: JobClasses,
    x: ClpSolution,
    opts: &SolveOptions,
    mut clock: Clock,
    mut counters: Counters,
) -> Result<(SolveReport, Artifacts)> {
    let inst = gap.base;
    let t = gap.tau.clone();
    let sizes = gap.original_sizes();
    let mut art = Artifacts { gap_size: gap.gap_size.clone(), ..Artifacts::default() };
    let machines = classify_machines(gap, &jobs, &x)?;
    counters.upper = machines.upper.len();
    counters.middle = machines.middle.len();
    counters.boundary = machines.boundary.len();
    clock.lap("classify");

    let alpha = Rat::from(opts.alpha);
    let floor = &t / &alpha;
    let mut owner: BTreeMap<JobId, MachineId>;
    let branch;
    if machines.upper.is_empty() {
        branch = Branch::NoUpper;
        let small = x.filtered(|_, c| jobs.is_small_config(c));
        let mut fa = clp_to_alp(&small, &sizes);
        fa.machines = (0..inst.machine_count()).collect();
        fa.target = fa.machines.iter().map(|&i| fa.machine_value(i, &sizes)).min().unwrap_or_else(Rat::zero);
        let half = &t / &Rat::from_int(2);
        if fa.target < half {
            return Err(Error::post("no-upper", format!("fractional value {} < T/2", fa.target)));
        }
        owner = round_assignment(&fa, &sizes)?;
        clock.lap("round");
        let strong = &half - &floor;
        let got = min_load(inst, &owner)?;
        if got < strong {
            return Err(Error::post("no-upper", format!("rounded value {got} < T/2 - T/alpha = {strong}")));
        }
        art.fractional = Some(fa);
    } else {
        branch = Branch::Clustered;
        let graph = build_big_graph(&x, &jobs, &machines);
        let forest = eliminate_cycles(&graph, &x, gap);
        counters.rotations = forest.rotations;
        for &i in &graph.machines {
            if graph.machine_total(i) != forest.graph.machine_total(i) {
                return Err(Error::post("cycles", format!("machine {i} big total changed")));
            }
        }
        for &j in &graph.jobs {
            if graph.job_total(j) != forest.graph.job_total(j) {
                return Err(Error::post("cycles", format!("job {j} total changed")));
            }
        }
        let clusters = extract_clusters(&forest, inst, &jobs, &machines)?;
        check_mclp(&clusters, &clusters.xstar, &jobs).map_err(|e| Error::post("mclp", e))?;
        counters.supers = clusters.supers.len();
        counters.dedicated = clusters.dedicated.len();
        counters.composites = clusters.composites.len();
        clock.lap("cluster");

        let hg = Hypergraph::new(&clusters, &jobs, gap);
        let fa = match opts.strategy {
            Strategy::Matching => {
                let mopts = MatchingOptions {
                    strategy: MatchingStrategy::AlternatingTree,
                    budget: opts.matching_budget,
                    trace: opts.trace,
                };
                let matching = find_perfect_matching(&hg, mopts)?;
                counters.matching = Some(matching.stats.clone());
                let eap = eap_from_matching(&matching);
                check_eap(&eap, inst, &hg).map_err(|e| Error::post("eap", e))?;
                let restricted = restrict_eap(&eap, inst, &hg)?;
                let fa = FractionalAssignment {
                    machines: restricted.s.keys().copied().collect(),
                    y: restricted.u.clone(),
                    target: hg.threshold.clone(),
                };
                art.matching = Some(matching);
                art.eap = Some(eap);
                art.restricted = Some(restricted);
                fa
            }
            Strategy::Enumeration => {
                let (selection, fa) = select_by_enumeration(inst, &hg, opts.selection_budget, opts.exec)?;
                art.selection = Some(selection);
                fa
            }
        };
        clock.lap("select");
        fa.check(&sizes, Some(inst)).map_err(|e| Error::post("select", e))?;
        owner = round_assignment(&fa, &sizes)?;

        let chosen: Vec<MachineId> = fa.machines.clone();
        for comp in &clusters.composites {
            let picked: Vec<MachineId> = comp.machines.iter().copied().filter(|i| chosen.contains(i)).collect();
            let [left_out] = picked[..] else {
                return Err(Error::post("assemble", format!("composite {:?} has {} selected machines", comp.machines, picked.len())));
            };
            if let CompositeKind::Super(k) = comp.kind {
                let placed = place_super_jobs(&clusters.supers[k], left_out, inst)
                    .ok_or_else(|| Error::post("assemble", format!("super {k} cannot place its jobs")))?;
                for (j, i) in placed {
                    owner.insert(j, i);
                }
            }
        }
        for &(i, j) in &clusters.dedicated {
            owner.insert(j, i);
        }
        clock.lap("round");
        art.big_graph = Some(graph);
        art.forest_graph = Some(forest.graph);
        art.clusters = Some(clusters);
        art.fractional = Some(fa);
    }

    let core_min = min_load(inst, &owner)?;
    if core_min < floor {
        return Err(Error::post("certify", format!("core allocation reaches {core_min} < T/alpha = {floor}")));
    }
    art.core_owner = owner.clone();
    art.jobs = Some(jobs);
    art.machines = Some(machines);
    art.x = Some(x);

    let core = owner.clone();
    counters.completion_jobs = complete(inst, &mut owner)?;
    let alloc = Allocation::new(inst, owner)?;
    if alloc.min_value < core_min {
        return Err(Error::post("certify", "completion lowered the minimum"));
    }
    clock.lap("certify");
    Ok((make_report(inst, &t, opts, branch, core, alloc, counters, clock)?, art))
}

fn min_load(inst: &Instance, owner: &BTreeMap<JobId, MachineId>) -> Result<Rat> {
    Ok(machine_loads(inst, owner)?.into_iter().min().map(Rat::from).unwrap_or_else(Rat::zero))
}

/// Hands every unassigned job with an eligible machine to its least-loaded
/// eligible machine (lowest id on ties). Loads only grow.
fn complete(inst: &Instance, owner: &mut BTreeMap<JobId, MachineId>) -> Result<usize> {
    let mut loads = machine_loads(inst, owner)?;
    let mut placed = 0;
    for j in 0..inst.job_count() {
        if owner.contains_key(&j) {
            continue;
        }
        if let Some(&i) = inst.job(j).eligible.iter().min_by_key(|&&i| (loads[i], i)) {
            owner.insert(j, i);
            loads[i] += inst.size(j);
            placed += 1;
        }
    }
    Ok(placed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_random, JobSpec};
    use crate::oracle::exact_optimum;

    fn quiet() -> SolveOptions {
        SolveOptions { timings: false, ..SolveOptions::default() }
    }

    #[test]
    fn single_machine() {
        let inst = Instance::new(1, vec![JobSpec::new(3, [0]), JobSpec::new(4, [0])]).unwrap();
        let r = solve(&inst, &quiet()).unwrap();
        assert_eq!(r.t, Rat::from_int(7));
        assert_eq!(r.min_value, Rat::from_int(7));
    }

    #[test]
    fn symmetric_pair_is_clustered() {
        let inst = Instance::new(2, vec![JobSpec::new(4, [0, 1]), JobSpec::new(4, [0, 1])]).unwrap();
        let r = solve(&inst, &quiet()).unwrap();
        assert_eq!(r.t, Rat::from_int(4));
        assert_eq!(r.branch, Branch::Clustered);
        assert!(r.min_value >= Rat::new(1, 3));
        assert_eq!(r.min_value, Rat::from_int(4));
    }

    #[test]
    fn starved_machine_is_trivial() {
        let inst = Instance::new(2, vec![JobSpec::new(5, [0])]).unwrap();
        let r = solve(&inst, &quiet()).unwrap();
        assert_eq!(r.branch, Branch::Trivial);
        assert!(r.allocation.owner.is_empty());
        assert_eq!(r.certified_ratio_bound, None);
    }

    #[test]
    fn strategies_and_execs_certify() {
        for seed in 0..12 {
            let inst = generate_random(3, 8, 20, &Rat::new(2, 3), seed).unwrap();
            let opt = exact_optimum(&inst).unwrap().value;
            for strategy in [Strategy::Matching, Strategy::Enumeration] {
                for exec in [Exec::Sequential, Exec::Parallel] {
                    let r = solve(&inst, &SolveOptions { strategy, exec, ..quiet() }).unwrap();
                    assert!(r.t >= opt, "seed {seed}");
                    assert!(&r.min_value * &Rat::from_int(12) >= r.t, "seed {seed}");
                }
            }
        }
    }

    #[test]
    fn report_is_deterministic() {
        let inst = generate_random(4, 9, 20, &Rat::new(1, 2), 5).unwrap();
        let a = solve(&inst, &quiet()).unwrap();
        let b = solve(&inst, &quiet()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.allocation, b.allocation);
    }
}
