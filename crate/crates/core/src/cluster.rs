//! Big-job support graph, cycle cancelling, and clustering of upper machines.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;

use crate::bipartite::left_perfect_matching;
use crate::clp::{ClpSolution, Configuration};
use crate::error::{Error, Result};
use crate::gap::{GapInstance, JobClasses, MachineClasses};
use crate::instance::{Instance, JobId, MachineId};
use crate::rat::Rat;

/// Weighted bipartite graph between upper machines and big jobs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BigGraph {
    pub machines: BTreeSet<MachineId>,
    pub jobs: BTreeSet<JobId>,
    /// Strictly positive weights.
    pub edges: BTreeMap<(MachineId, JobId), Rat>,
}

impl BigGraph {
    pub fn machine_total(&self, machine: MachineId) -> Rat {
        self.edges.range((machine, 0)..=(machine, usize::MAX)).map(|(_, w)| w).sum()
    }

    pub fn job_total(&self, job: JobId) -> Rat {
        self.edges.iter().filter(|((_, j), _)| *j == job).map(|(_, w)| w).sum()
    }

    fn neighbours_of_machine(&self, machine: MachineId) -> impl Iterator<Item = JobId> + '_ {
        self.edges.range((machine, 0)..=(machine, usize::MAX)).map(|((_, j), _)| *j)
    }

    fn neighbours_of_job(&self, job: JobId) -> impl Iterator<Item = MachineId> + '_ {
        self.edges.keys().filter(move |(_, j)| *j == job).map(|(i, _)| *i)
    }

    pub fn is_forest(&self) -> bool {
        self.edges.keys().all(|&e| self.path_avoiding(e).is_none())
    }

    /// Shortest path from `e.1` back to `e.0` that does not use `e`, as the
    /// edge sequence job -> ... -> machine.
    fn path_avoiding(&self, e: (MachineId, JobId)) -> Option<Vec<(MachineId, JobId)>> {
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
        enum V {
            M(MachineId),
            J(JobId),
        }
        let mut prev: BTreeMap<V, V> = BTreeMap::new();
        let mut queue = VecDeque::from([V::J(e.1)]);
        prev.insert(V::J(e.1), V::J(e.1));
        while let Some(v) = queue.pop_front() {
            let next: Vec<V> = match v {
                V::J(j) => self.neighbours_of_job(j).filter(|&i| (i, j) != e).map(V::M).collect(),
                V::M(i) => self.neighbours_of_machine(i).filter(|&j| (i, j) != e).map(V::J).collect(),
            };
            for w in next {
                if prev.contains_key(&w) {
                    continue;
                }
                prev.insert(w, v);
                if w == V::M(e.0) {
                    let mut path = Vec::new();
                    let mut cur = w;
                    while cur != V::J(e.1) {
                        let p = prev[&cur];
                        path.push(match (cur, p) {
                            (V::M(i), V::J(j)) | (V::J(j), V::M(i)) => (i, j),
                            _ => unreachable!("bipartite"),
                        });
                        cur = p;
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(w);
            }
        }
        None
    }

    /// Graphviz rendering for debugging.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph big {\n");
        for i in &self.machines {
            let _ = writeln!(out, "  m{i} [shape=box];");
        }
        for j in &self.jobs {
            let _ = writeln!(out, "  j{j};");
        }
        for ((i, j), w) in &self.edges {
            let _ = writeln!(out, "  m{i} -- j{j} [label=\"{w}\"];");
        }
        out.push_str("}\n");
        out
    }
}

/// Edges from upper machines to the big singletons they carry in `x`.
pub fn build_big_graph(x: &ClpSolution, jobs: &JobClasses, machines: &MachineClasses) -> BigGraph {
    let mut edges = BTreeMap::new();
    for ((i, c), w) in &x.weights {
        if machines.is_upper(*i) && jobs.is_big_config(c) {
            edges.insert((*i, c.jobs[0]), w.clone());
        }
    }
    BigGraph {
        machines: machines.upper.clone(),
        jobs: jobs.big.clone(),
        edges,
    }
}

#[derive(Debug, Clone)]
pub struct Forest {
    pub graph: BigGraph,
    pub xstar: ClpSolution,
    pub rotations: usize,
}

/// Cancels cycles by alternating `+eps/-eps` rotations until the support is a
/// forest. Each rotation starts at the smallest edge on a cycle, decrements
/// the even positions and zeroes at least one edge, so machine and job totals
/// are unchanged and the edge count strictly drops. `x` is rewritten to match.
pub fn eliminate_cycles(graph: &BigGraph, x: &ClpSolution, gap: &GapInstance) -> Forest {
    let mut g = graph.clone();
    let mut rotations = 0;
    loop {
        let cycle = g.edges.keys().find_map(|&e| g.path_avoiding(e).map(|path| (e, path)));
        let Some((first, path)) = cycle else { break };
        let mut cycle = vec![first];
        cycle.extend(path);
        let eps = cycle.iter().step_by(2).map(|e| g.edges[e].clone()).min().expect("non-empty cycle");
        for (k, e) in cycle.iter().enumerate() {
            let w = g.edges.get_mut(e).expect("cycle edge");
            if k % 2 == 0 {
                *w -= &eps;
            } else {
                *w += &eps;
            }
        }
        g.edges.retain(|_, w| w.is_positive());
        rotations += 1;
    }

    let mut xstar = x.clone();
    xstar.weights.retain(|(i, c), _| !(g.machines.contains(i) && c.len() == 1 && g.jobs.contains(&c.jobs[0])));
    for ((i, j), w) in &g.edges {
        xstar.weights.insert((*i, Configuration::new(vec![*j], &gap.gap_size)), w.clone());
    }
    Forest { graph: g, xstar, rotations }
}

/// Upper machines `machines` sharing the big jobs `jobs`, one fewer job than machines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SuperMachine {
    pub machines: Vec<MachineId>,
    pub jobs: Vec<JobId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositeKind {
    /// Index into `ClusterSet::supers`.
    Super(usize),
    Middle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Composite {
    pub machines: Vec<MachineId>,
    pub kind: CompositeKind,
}

#[derive(Debug, Clone)]
pub struct ClusterSet {
    pub supers: Vec<SuperMachine>,
    /// Upper machines served by a big job of their own; they need no small jobs.
    pub dedicated: Vec<(MachineId, JobId)>,
    /// Super machines and middle singletons, ordered by smallest member.
    pub composites: Vec<Composite>,
    pub xstar: ClpSolution,
}

/// Groups the forest's upper machines into super machines.
///
/// Leaf jobs are peeled first: a big job with a single neighbour is given to
/// that machine, which then leaves the graph. In what remains every job has at
/// least two neighbours; each tree is rooted at its smallest machine and every
/// job joins its parent machine and its heaviest child (smallest id on ties),
/// while its other children start clusters of their own. A non-heaviest child
/// edge carries less than 1/2, which is what keeps each cluster's small mass
/// at least 1/2.
pub fn extract_clusters(
    forest: &Forest,
    inst: &Instance,
    jobs: &JobClasses,
    machines: &MachineClasses,
) -> Result<ClusterSet> {
    let mut g = forest.graph.clone();
    if !g.is_forest() {
        return Err(Error::Clustering("input graph has a cycle".into()));
    }

    let mut dedicated = Vec::new();
    loop {
        let leaf = g.jobs.iter().copied().find(|&j| g.neighbours_of_job(j).count() == 1);
        let Some(j) = leaf else { break };
        let i = g.neighbours_of_job(j).next().expect("leaf has one neighbour");
        dedicated.push((i, j));
        g.jobs.remove(&j);
        g.machines.remove(&i);
        g.edges.retain(|(m, _), _| *m != i);
        let isolated: Vec<JobId> = g.jobs.iter().copied().filter(|&j| g.neighbours_of_job(j).next().is_none()).collect();
        for j in isolated {
            g.jobs.remove(&j);
        }
    }
    let linked: BTreeSet<JobId> = g.edges.keys().map(|(_, j)| *j).collect();
    g.jobs.retain(|j| linked.contains(j));

    let mut cluster_of: BTreeMap<MachineId, usize> = BTreeMap::new();
    let mut cluster_jobs: Vec<Vec<JobId>> = Vec::new();
    for &root in &g.machines {
        if cluster_of.contains_key(&root) {
            continue;
        }
        cluster_of.insert(root, cluster_jobs.len());
        cluster_jobs.push(Vec::new());
        let mut queue = VecDeque::from([(root, None::<JobId>)]);
        while let Some((i, parent_job)) = queue.pop_front() {
            let children: Vec<JobId> = g.neighbours_of_machine(i).filter(|&j| Some(j) != parent_job).collect();
            for j in children {
                let kids: Vec<MachineId> = g.neighbours_of_job(j).filter(|&m| m != i).collect();
                let chosen = *kids
                    .iter()
                    .max_by(|&&a, &&b| g.edges[&(a, j)].cmp(&g.edges[&(b, j)]).then(b.cmp(&a)))
                    .ok_or_else(|| Error::Clustering(format!("job {j} has no child machine")))?;
                let k = cluster_of[&i];
                cluster_jobs[k].push(j);
                for m in kids {
                    if m == chosen {
                        cluster_of.insert(m, k);
                    } else {
                        cluster_of.insert(m, cluster_jobs.len());
                        cluster_jobs.push(Vec::new());
                    }
                    queue.push_back((m, Some(j)));
                }
            }
        }
    }

    let mut supers: Vec<SuperMachine> = cluster_jobs
        .into_iter()
        .enumerate()
        .map(|(k, mut js)| {
            js.sort_unstable();
            let ms = cluster_of.iter().filter(|(_, &c)| c == k).map(|(&m, _)| m).collect();
            SuperMachine { machines: ms, jobs: js }
        })
        .collect();
    supers.sort_by_key(|s| s.machines[0]);
    dedicated.sort_unstable();

    let mut composites: Vec<Composite> = supers
        .iter()
        .enumerate()
        .map(|(k, s)| Composite { machines: s.machines.clone(), kind: CompositeKind::Super(k) })
        .chain(machines.middle.iter().map(|&i| Composite { machines: vec![i], kind: CompositeKind::Middle }))
        .collect();
    composites.sort_by_key(|c| c.machines[0]);

    let clusters = ClusterSet { supers, dedicated, composites, xstar: forest.xstar.clone() };
    check_cluster_properties(&clusters, inst, jobs, machines).map_err(Error::Clustering)?;
    Ok(clusters)
}

/// Perfect matching of `sup.jobs` into `sup.machines` minus `left_out`, along eligibility.
pub fn place_super_jobs(sup: &SuperMachine, left_out: MachineId, inst: &Instance) -> Option<Vec<(JobId, MachineId)>> {
    let rest: Vec<MachineId> = sup.machines.iter().copied().filter(|&m| m != left_out).collect();
    let matching = left_perfect_matching(sup.jobs.len(), rest.len(), |a, b| inst.is_eligible(rest[b], sup.jobs[a]))?;
    Some(matching.into_iter().enumerate().map(|(a, b)| (sup.jobs[a], rest[b])).collect())
}

/// Checks the three cluster properties plus the partition structure:
/// one fewer job than machines, every left-out choice placeable, and small
/// mass at least 1/2 per super machine.
pub fn check_cluster_properties(
    clusters: &ClusterSet,
    inst: &Instance,
    jobs: &JobClasses,
    machines: &MachineClasses,
) -> std::result::Result<(), String> {
    let half = Rat::new(1, 2);
    for (k, sup) in clusters.supers.iter().enumerate() {
        if sup.machines.is_empty() || sup.jobs.len() + 1 != sup.machines.len() {
            return Err(format!("property 1: super {k} has {} machines and {} jobs", sup.machines.len(), sup.jobs.len()));
        }
        for &m in &sup.machines {
            if place_super_jobs(sup, m, inst).is_none() {
                return Err(format!("property 2: super {k} cannot place its jobs without machine {m}"));
            }
        }
        let mass: Rat = sup
            .machines
            .iter()
            .flat_map(|&i| clusters.xstar.columns_of(i))
            .filter(|(c, _)| jobs.is_small_config(c))
            .map(|(_, w)| w)
            .sum();
        if mass < half {
            return Err(format!("property 3: super {k} has small mass {mass} < 1/2"));
        }
    }

    let mut owner_of_machine: BTreeMap<MachineId, String> = BTreeMap::new();
    let mut used_jobs: BTreeSet<JobId> = BTreeSet::new();
    let mut claim = |i: MachineId, what: String| match owner_of_machine.insert(i, what.clone()) {
        Some(prev) => Err(format!("machine {i} is in both {prev} and {what}")),
        None => Ok(()),
    };
    for (k, sup) in clusters.supers.iter().enumerate() {
        for &i in &sup.machines {
            if !machines.is_upper(i) {
                return Err(format!("super {k} contains middle machine {i}"));
            }
            claim(i, format!("super {k}"))?;
        }
        for &j in &sup.jobs {
            if !jobs.is_big(j) || !used_jobs.insert(j) {
                return Err(format!("super job {j} is small or reused"));
            }
        }
    }
    for &(i, j) in &clusters.dedicated {
        if !machines.is_upper(i) || !jobs.is_big(j) || !inst.is_eligible(i, j) {
            return Err(format!("dedicated pair ({i}, {j}) is not an eligible upper/big pair"));
        }
        if !used_jobs.insert(j) {
            return Err(format!("dedicated job {j} reused"));
        }
        claim(i, "a dedicated pair".into())?;
    }
    if let Some(i) = machines.upper.iter().find(|i| !owner_of_machine.contains_key(i)) {
        return Err(format!("upper machine {i} belongs to no cluster"));
    }
    let middle: Vec<MachineId> = clusters
        .composites
        .iter()
        .filter(|c| c.kind == CompositeKind::Middle)
        .flat_map(|c| c.machines.clone())
        .collect();
    if middle != machines.middle.iter().copied().collect::<Vec<_>>() {
        return Err("middle machines are not exactly the singleton composites".into());
    }
    if clusters.composites.len() != clusters.supers.len() + middle.len() {
        return Err("composite list does not match supers plus middle machines".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clp::CoverMode;
    use crate::gap::{build_gap_instance, classify_jobs, classify_machines};
    use crate::instance::JobSpec;

    /// Gap instance at `t` plus a hand-written exact-cover solution.
    fn setup<'a>(inst: &'a Instance, t: i64, cols: &[(MachineId, &[JobId], Rat)]) -> (GapInstance<'a>, ClpSolution) {
        let gap = build_gap_instance(inst, &Rat::from_int(t), 12).unwrap();
        let weights = cols
            .iter()
            .map(|(i, js, w)| ((*i, Configuration::new(js.to_vec(), &gap.gap_size)), w.clone()))
            .collect();
        let x = ClpSolution { tau: Rat::from_int(t), mode: CoverMode::ExactlyOne, weights };
        (gap, x)
    }

    fn run(gap: &GapInstance, x: &ClpSolution) -> (Forest, ClusterSet) {
        let jobs = classify_jobs(gap);
        let machines = classify_machines(gap, &jobs, x).unwrap();
        let graph = build_big_graph(x, &jobs, &machines);
        let forest = eliminate_cycles(&graph, x, gap);
        let clusters = extract_clusters(&forest, gap.base, &jobs, &machines).unwrap();
        (forest, clusters)
    }

    fn everywhere(m: usize, sizes: &[u64]) -> Instance {
        Instance::new(m, sizes.iter().map(|&s| JobSpec::new(s, 0..m)).collect()).unwrap()
    }

    #[test]
    fn four_cycle_loses_an_edge_and_keeps_totals() {
        // machines 0,1 x big jobs 0,1 all at 1/2: a 4-cycle.
        let inst = everywhere(2, &[24, 24]);
        let h = Rat::new(1, 2);
        let (gap, x) = setup(&inst, 24, &[(0, &[0], h.clone()), (0, &[1], h.clone()), (1, &[0], h.clone()), (1, &[1], h)]);
        let jobs = classify_jobs(&gap);
        let machines = classify_machines(&gap, &jobs, &x).unwrap();
        let graph = build_big_graph(&x, &jobs, &machines);
        assert_eq!(graph.edges.len(), 4);
        let forest = eliminate_cycles(&graph, &x, &gap);
        assert_eq!(forest.rotations, 1);
        assert_eq!(forest.graph.edges.len(), 2);
        for i in 0..2 {
            assert_eq!(forest.graph.machine_total(i), Rat::one());
            assert_eq!(forest.graph.job_total(i), Rat::one());
        }
        assert!(forest.graph.is_forest());
        // Smallest edge (0,0) is decremented: it and (1,1) vanish.
        assert!(!forest.graph.edges.contains_key(&(0, 0)));
    }

    #[test]
    fn two_disjoint_cycles_both_broken() {
        let inst = everywhere(4, &[24, 24, 24, 24]);
        let h = Rat::new(1, 2);
        let mut cols = Vec::new();
        for (a, b) in [(0usize, 1usize), (2, 3)] {
            for i in [a, b] {
                for j in [a, b] {
                    cols.push((i, vec![j], h.clone()));
                }
            }
        }
        let cols: Vec<(MachineId, &[JobId], Rat)> = cols.iter().map(|(i, j, w)| (*i, j.as_slice(), w.clone())).collect();
        let (gap, x) = setup(&inst, 24, &cols);
        let (forest, _) = run(&gap, &x);
        assert_eq!(forest.rotations, 2);
        assert_eq!(forest.graph.edges.len(), 4);
    }

    #[test]
    fn star_forms_one_cluster() {
        // big job 0 shared by machines 0 and 1; each has small mass 1/2 on its own small job.
        let inst = Instance::new(2, vec![JobSpec::new(24, [0, 1]), JobSpec::new(1, [0]), JobSpec::new(1, [1])]).unwrap();
        let h = Rat::new(1, 2);
        let (gap, x) = setup(&inst, 24, &[(0, &[0], h.clone()), (1, &[0], h.clone()), (0, &[1], h.clone()), (1, &[2], h)]);
        let (_, clusters) = run(&gap, &x);
        assert_eq!(clusters.supers, vec![SuperMachine { machines: vec![0, 1], jobs: vec![0] }]);
        assert!(clusters.dedicated.is_empty());
        assert_eq!(clusters.composites.len(), 1);
    }

    #[test]
    fn private_big_jobs_become_dedicated() {
        // Machine 0 splits its whole cover over two private big jobs.
        let inst = Instance::new(1, vec![JobSpec::new(24, [0]), JobSpec::new(24, [0])]).unwrap();
        let h = Rat::new(1, 2);
        let (gap, x) = setup(&inst, 24, &[(0, &[0], h.clone()), (0, &[1], h)]);
        let (_, clusters) = run(&gap, &x);
        assert!(clusters.supers.is_empty());
        assert_eq!(clusters.dedicated, vec![(0, 0)]);
    }

    #[test]
    fn middle_machines_are_singletons() {
        let inst = everywhere(2, &[1, 1]);
        let (gap, x) = setup(&inst, 24, &[(0, &[0], Rat::one()), (1, &[1], Rat::one())]);
        let (_, clusters) = run(&gap, &x);
        assert!(clusters.supers.is_empty());
        assert_eq!(clusters.composites.len(), 2);
        assert!(clusters.composites.iter().all(|c| c.kind == CompositeKind::Middle));
    }

    #[test]
    fn checker_flags_each_property() {
        let inst = Instance::new(2, vec![JobSpec::new(24, [0]), JobSpec::new(24, [0, 1]), JobSpec::new(1, [0, 1])]).unwrap();
        let h = Rat::new(1, 2);
        let (gap, x) = setup(&inst, 24, &[(0, &[1], h.clone()), (1, &[1], h.clone()), (0, &[2], h.clone()), (1, &[2], h)]);
        let jobs = classify_jobs(&gap);
        let machines = classify_machines(&gap, &jobs, &x).unwrap();
        let base = ClusterSet {
            supers: vec![SuperMachine { machines: vec![0, 1], jobs: vec![1] }],
            dedicated: vec![],
            composites: vec![Composite { machines: vec![0, 1], kind: CompositeKind::Super(0) }],
            xstar: x.clone(),
        };
        assert_eq!(check_cluster_properties(&base, &inst, &jobs, &machines), Ok(()));

        let mut too_many = base.clone();
        too_many.supers[0].jobs = vec![0, 1];
        assert!(check_cluster_properties(&too_many, &inst, &jobs, &machines).unwrap_err().starts_with("property 1"));

        // Job 0 only fits machine 0, so leaving machine 0 out strands it.
        let mut stranded = base.clone();
        stranded.supers[0].jobs = vec![0];
        let err = check_cluster_properties(&stranded, &inst, &jobs, &machines).unwrap_err();
        assert!(err.starts_with("property 2") && err.contains("machine 0"), "{err}");

        let mut starved = base;
        starved.xstar.weights.retain(|(i, c), _| !(*i == 1 && c.jobs == vec![2]));
        starved.xstar.weights.retain(|(i, c), _| !(*i == 0 && c.jobs == vec![2]));
        assert!(check_cluster_properties(&starved, &inst, &jobs, &machines).unwrap_err().starts_with("property 3"));
    }

    #[test]
    fn dot_output_lists_edges() {
        let inst = everywhere(1, &[24]);
        let (gap, x) = setup(&inst, 24, &[(0, &[0], Rat::one())]);
        let jobs = classify_jobs(&gap);
        let machines = classify_machines(&gap, &jobs, &x).unwrap();
        let dot = build_big_graph(&x, &jobs, &machines).to_dot();
        assert!(dot.contains("m0 -- j0 [label=\"1/1\"]"));
    }
}
