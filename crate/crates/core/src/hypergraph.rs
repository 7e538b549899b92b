//! Perfect matching of composite machines to disjoint small-job bundles.
//!
//! A hyperedge joins a composite machine to a bundle: a minimal set of small
//! jobs, reaching the bundle threshold, taken from one small configuration
//! that a member machine carries in `x*`. Two strategies find a perfect
//! matching: an alternating-tree local search and plain backtracking.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::clp::{ClpSolution, Configuration};
use crate::cluster::{ClusterSet, Composite};
use crate::error::{Error, Result};
use crate::gap::{GapInstance, JobClasses};
use crate::instance::{JobId, MachineId};
use crate::rat::Rat;

pub const DEFAULT_TREE_BUDGET: u64 = 1_000_000;
pub const DEFAULT_EXHAUSTIVE_BUDGET: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Hyperedge {
    /// Index into the composite list.
    pub composite: usize,
    pub member: MachineId,
    pub bundle: Configuration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchingStrategy {
    AlternatingTree,
    Exhaustive,
}

/// The bundle hypergraph over the composites of a cluster set.
#[derive(Debug, Clone)]
pub struct Hypergraph<'a> {
    pub composites: &'a [Composite],
    pub xstar: &'a ClpSolution,
    pub classes: &'a JobClasses,
    /// Original job sizes.
    pub sizes: Vec<Rat>,
    /// Bundles must reach this size (`2T / alpha`).
    pub threshold: Rat,
}

impl<'a> Hypergraph<'a> {
    pub fn new(clusters: &'a ClusterSet, classes: &'a JobClasses, gap: &GapInstance) -> Self {
        Hypergraph {
            composites: &clusters.composites,
            xstar: &clusters.xstar,
            classes,
            sizes: gap.original_sizes(),
            threshold: &(&gap.tau * &Rat::from_int(2)) / &Rat::from(gap.alpha),
        }
    }

    /// Small configurations carried by members of composite `d`, by member then configuration.
    pub fn support(&self, d: usize) -> Vec<(MachineId, &'a Configuration)> {
        let xstar: &'a ClpSolution = self.xstar;
        let mut out = Vec::new();
        for &i in &self.composites[d].machines {
            for (c, _) in xstar.columns_of(i) {
                if self.classes.is_small_config(c) {
                    out.push((i, c));
                }
            }
        }
        out
    }

    /// Lazy stream of every hyperedge of composite `d`, by member, then
    /// configuration, then lexicographic bundle; repeats are skipped.
    pub fn bundles(&self, d: usize) -> BundleIter<'_, 'a> {
        BundleIter { hg: self, d, support: self.support(d), next_config: 0, buffer: VecDeque::new(), seen: BTreeSet::new() }
    }

    /// First minimal bundle inside `pool` in lexicographic order.
    fn first_bundle(&self, pool: &[JobId]) -> Option<Vec<JobId>> {
        let mut found = None;
        self.minimal_subsets(pool, &mut |b| {
            found = Some(b.to_vec());
            false
        });
        found
    }

    /// Calls `emit` on each minimal subset of `pool` reaching the threshold,
    /// in lexicographic order, until it returns false.
    fn minimal_subsets(&self, pool: &[JobId], emit: &mut dyn FnMut(&[JobId]) -> bool) {
        let mut pool = pool.to_vec();
        pool.sort_unstable();
        let mut suffix = vec![Rat::zero(); pool.len() + 1];
        for k in (0..pool.len()).rev() {
            suffix[k] = &suffix[k + 1] + &self.sizes[pool[k]];
        }
        let mut chosen = Vec::new();
        self.dfs(&pool, &suffix, 0, &mut chosen, Rat::zero(), emit);
    }

    fn dfs(
        &self,
        pool: &[JobId],
        suffix: &[Rat],
        start: usize,
        chosen: &mut Vec<JobId>,
        total: Rat,
        emit: &mut dyn FnMut(&[JobId]) -> bool,
    ) -> bool {
        for k in start..pool.len() {
            if &total + &suffix[k] < self.threshold {
                return true;
            }
            let j = pool[k];
            let t = &total + &self.sizes[j];
            chosen.push(j);
            let go_on = if t >= self.threshold {
                let minimal = chosen.iter().all(|&m| &t - &self.sizes[m] < self.threshold);
                !minimal || emit(chosen)
            } else {
                self.dfs(pool, suffix, k + 1, chosen, t, emit)
            };
            chosen.pop();
            if !go_on {
                return false;
            }
        }
        true
    }

    fn edge(&self, d: usize, member: MachineId, jobs: Vec<JobId>) -> Hyperedge {
        Hyperedge { composite: d, member, bundle: Configuration::new(jobs, &self.sizes) }
    }

    /// The addable edge of composite `d` avoiding `blocked` jobs: the first in
    /// stream order.
    fn first_avoiding(&self, d: usize, blocked: &BTreeSet<JobId>) -> Option<Hyperedge> {
        self.support(d).into_iter().find_map(|(i, c)| {
            let pool: Vec<JobId> = c.jobs.iter().copied().filter(|j| !blocked.contains(j)).collect();
            self.first_bundle(&pool).map(|b| self.edge(d, i, b))
        })
    }

    /// Checks size bounds and support of one hyperedge.
    pub fn check_edge(&self, e: &Hyperedge) -> std::result::Result<(), String> {
        let max_small = self.classes.small.iter().map(|&j| self.sizes[j].clone()).max().unwrap_or_else(Rat::zero);
        if !e.bundle.is_minimal(&self.sizes, &self.threshold) {
            return Err(format!("bundle {:?} is not minimal at {}", e.bundle.jobs, self.threshold));
        }
        if e.bundle.total_size >= &self.threshold + &max_small {
            return Err(format!("bundle {:?} reaches {}", e.bundle.jobs, e.bundle.total_size));
        }
        let supported = self.support(e.composite).iter().any(|(i, c)| *i == e.member && e.bundle.jobs.iter().all(|&j| c.contains(j)));
        if !supported {
            return Err(format!("bundle {:?} is not inside a configuration of machine {}", e.bundle.jobs, e.member));
        }
        Ok(())
    }
}

pub struct BundleIter<'h, 'a> {
    hg: &'h Hypergraph<'a>,
    d: usize,
    support: Vec<(MachineId, &'a Configuration)>,
    next_config: usize,
    buffer: VecDeque<Hyperedge>,
    seen: BTreeSet<(MachineId, Vec<JobId>)>,
}

impl Iterator for BundleIter<'_, '_> {
    type Item = Hyperedge;

    fn next(&mut self) -> Option<Hyperedge> {
        loop {
            if let Some(e) = self.buffer.pop_front() {
                return Some(e);
            }
            let (i, c) = *self.support.get(self.next_config)?;
            self.next_config += 1;
            let (hg, d, seen, buffer) = (self.hg, self.d, &mut self.seen, &mut self.buffer);
            hg.minimal_subsets(&c.jobs, &mut |b| {
                if seen.insert((i, b.to_vec())) {
                    buffer.push_back(hg.edge(d, i, b.to_vec()));
                }
                true
            });
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MatchingStats {
    pub steps: u64,
    pub add_edges: u64,
    pub collapses: u64,
    pub max_layers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchingState {
    /// Composite index to its hyperedge.
    pub matched: BTreeMap<usize, Hyperedge>,
    pub stats: MatchingStats,
    /// One line per tree operation when tracing is on.
    pub trace: Option<Vec<String>>,
}

impl MatchingState {
    fn new(trace: bool) -> Self {
        MatchingState { matched: BTreeMap::new(), stats: MatchingStats::default(), trace: trace.then(Vec::new) }
    }

    fn log(&mut self, line: impl FnOnce() -> String) {
        if let Some(t) = &mut self.trace {
            t.push(line());
        }
    }

    fn matched_jobs(&self) -> BTreeSet<JobId> {
        self.matched.values().flat_map(|e| e.bundle.jobs.iter().copied()).collect()
    }

    /// Every composite matched, bundles pairwise disjoint, each edge valid.
    pub fn check_perfect(&self, hg: &Hypergraph) -> std::result::Result<(), String> {
        if self.matched.len() != hg.composites.len() {
            return Err(format!("{} of {} composites matched", self.matched.len(), hg.composites.len()));
        }
        let mut used = BTreeSet::new();
        for (d, e) in &self.matched {
            if e.composite != *d {
                return Err(format!("composite {d} holds an edge of composite {}", e.composite));
            }
            hg.check_edge(e)?;
            for &j in &e.bundle.jobs {
                if !used.insert(j) {
                    return Err(format!("job {j} appears in two bundles"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchingOptions {
    pub strategy: MatchingStrategy,
    pub budget: u64,
    pub trace: bool,
}

impl Default for MatchingOptions {
    fn default() -> Self {
        MatchingOptions { strategy: MatchingStrategy::AlternatingTree, budget: DEFAULT_TREE_BUDGET, trace: false }
    }
}

impl MatchingOptions {
    pub fn exhaustive() -> Self {
        MatchingOptions { strategy: MatchingStrategy::Exhaustive, budget: DEFAULT_EXHAUSTIVE_BUDGET, trace: false }
    }
}

pub fn find_perfect_matching(hg: &Hypergraph, opts: MatchingOptions) -> Result<MatchingState> {
    let state = match opts.strategy {
        MatchingStrategy::AlternatingTree => alternating_tree(hg, opts)?,
        MatchingStrategy::Exhaustive => exhaustive(hg, opts)?,
    };
    state.check_perfect(hg).map_err(|e| Error::post("matching", e))?;
    Ok(state)
}

struct Layer {
    add: Hyperedge,
    /// Composites whose matched edges block `add`.
    blockers: Vec<usize>,
}

/// Grows one alternating tree per unmatched composite.
///
/// Tree players are the root and the composites of all blocking edges. An
/// edge of a tree player is addable when it avoids every job in the tree.
/// If it also avoids the matching, the tree collapses: the edge replaces its
/// player's blocking edge, that blocker leaves its layer, later layers are
/// dropped, and a layer left without blockers collapses in turn. Otherwise
/// the edge becomes a new layer whose blockers join the tree.
fn alternating_tree(hg: &Hypergraph, opts: MatchingOptions) -> Result<MatchingState> {
    let mut state = MatchingState::new(opts.trace);
    for root in 0..hg.composites.len() {
        let mut layers: Vec<Layer> = Vec::new();
        'grow: loop {
            state.stats.steps += 1;
            if state.stats.steps > opts.budget {
                return Err(Error::BudgetExceeded(format!("alternating tree exceeded {} steps", opts.budget)));
            }
            debug_assert!(layers.iter().all(|l| !l.blockers.is_empty()));
            let mut players = vec![root];
            players.extend(layers.iter().flat_map(|l| l.blockers.iter().copied()));
            let mut tree_jobs: BTreeSet<JobId> = BTreeSet::new();
            for l in &layers {
                tree_jobs.extend(l.add.bundle.jobs.iter().copied());
                for b in &l.blockers {
                    tree_jobs.extend(state.matched[b].bundle.jobs.iter().copied());
                }
            }

            let pick = players
                .iter()
                .filter_map(|&p| hg.first_avoiding(p, &tree_jobs))
                .min_by(|a, b| (a.member, &a.bundle.jobs).cmp(&(b.member, &b.bundle.jobs)));
            let Some(edge) = pick else {
                return Err(Error::ExistenceViolated(format!(
                    "no addable hyperedge for composite {root} with {} layers",
                    layers.len()
                )));
            };

            let matched_jobs = state.matched_jobs();
            let blockers: Vec<usize> = state
                .matched
                .iter()
                .filter(|(_, m)| m.bundle.jobs.iter().any(|j| edge.bundle.contains(*j)))
                .map(|(&d, _)| d)
                .collect();
            debug_assert_eq!(blockers.is_empty(), edge.bundle.jobs.iter().all(|j| !matched_jobs.contains(j)));
            if !blockers.is_empty() {
                state.stats.add_edges += 1;
                state.log(|| format!("add {:?} blocked by {blockers:?}", edge));
                layers.push(Layer { add: edge, blockers });
                state.stats.max_layers = state.stats.max_layers.max(layers.len());
                continue;
            }

            let mut edge = edge;
            loop {
                state.stats.collapses += 1;
                let d = edge.composite;
                state.log(|| format!("match {:?}", edge));
                state.matched.insert(d, edge);
                if d == root {
                    break 'grow;
                }
                let k = layers
                    .iter()
                    .position(|l| l.blockers.contains(&d))
                    .expect("non-root tree player is a blocker");
                layers.truncate(k + 1);
                layers[k].blockers.retain(|&b| b != d);
                if !layers[k].blockers.is_empty() {
                    continue 'grow;
                }
                edge = layers.pop().expect("layer k exists").add;
            }
        }
    }
    Ok(state)
}

/// Backtracking over composites in order, trying every hyperedge.
fn exhaustive(hg: &Hypergraph, opts: MatchingOptions) -> Result<MatchingState> {
    let edges: Vec<Vec<Hyperedge>> = (0..hg.composites.len()).map(|d| hg.bundles(d).collect()).collect();
    let mut state = MatchingState::new(opts.trace);
    let mut used = BTreeSet::new();
    let mut chosen = Vec::new();
    if search(&edges, 0, &mut used, &mut chosen, &mut state.stats.steps, opts.budget)? {
        for e in chosen {
            state.log(|| format!("match {:?}", e));
            state.matched.insert(e.composite, e);
        }
        Ok(state)
    } else {
        Err(Error::ExistenceViolated("no perfect matching exists".into()))
    }
}

fn search(
    edges: &[Vec<Hyperedge>],
    d: usize,
    used: &mut BTreeSet<JobId>,
    chosen: &mut Vec<Hyperedge>,
    steps: &mut u64,
    budget: u64,
) -> Result<bool> {
    if d == edges.len() {
        return Ok(true);
    }
    for e in &edges[d] {
        *steps += 1;
        if *steps > budget {
            return Err(Error::BudgetExceeded(format!("exhaustive matching exceeded {budget} nodes")));
        }
        if e.bundle.jobs.iter().any(|j| used.contains(j)) {
            continue;
        }
        used.extend(e.bundle.jobs.iter().copied());
        chosen.push(e.clone());
        if search(edges, d + 1, used, chosen, steps, budget)? {
            return Ok(true);
        }
        chosen.pop();
        for j in &e.bundle.jobs {
            used.remove(j);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clp::CoverMode;
    use crate::cluster::CompositeKind;
    use crate::gap::build_gap_instance;
    use crate::instance::{Instance, JobSpec};

    /// Middle-only composites with hand-picked small configurations at T = 72
    /// (bundle threshold 12, small jobs below 6).
    struct Fixture {
        inst: Instance,
        clusters: ClusterSet,
        classes: JobClasses,
    }

    fn fixture(sizes: &[u64], machines: usize, cols: &[(MachineId, &[JobId])]) -> Fixture {
        let inst = Instance::new(machines, sizes.iter().map(|&s| JobSpec::new(s, 0..machines)).collect()).unwrap();
        let rs: Vec<Rat> = sizes.iter().map(|&s| Rat::from(s)).collect();
        let weights = cols.iter().map(|(i, js)| ((*i, Configuration::new(js.to_vec(), &rs)), Rat::one())).collect();
        let xstar = ClpSolution { tau: Rat::from_int(72), mode: CoverMode::ExactlyOne, weights };
        let composites = (0..machines).map(|i| Composite { machines: vec![i], kind: CompositeKind::Middle }).collect();
        let clusters = ClusterSet { supers: vec![], dedicated: vec![], composites, xstar };
        let classes = JobClasses { big: BTreeSet::new(), small: (0..sizes.len()).collect() };
        Fixture { inst, clusters, classes }
    }

    fn hypergraph(f: &Fixture) -> Hypergraph<'_> {
        let gap = build_gap_instance(&f.inst, &Rat::from_int(72), 12).unwrap();
        Hypergraph::new(&f.clusters, &f.classes, &gap)
    }

    #[test]
    fn bundle_stream_examples() {
        // threshold 12: {4,4,4,...}: bundles are triples
        let f = fixture(&[4, 4, 4], 1, &[(0, &[0, 1, 2])]);
        let hg = hypergraph(&f);
        let all: Vec<Vec<JobId>> = hg.bundles(0).map(|e| e.bundle.jobs).collect();
        assert_eq!(all, vec![vec![0, 1, 2]]);

        let f = fixture(&[5, 5, 5, 5], 1, &[(0, &[0, 1, 2, 3])]);
        let hg = hypergraph(&f);
        let all: Vec<Vec<JobId>> = hg.bundles(0).map(|e| e.bundle.jobs).collect();
        assert_eq!(all, vec![vec![0, 1, 2], vec![0, 1, 3], vec![0, 2, 3], vec![1, 2, 3]]);
    }

    #[test]
    fn non_minimal_prefixes_are_skipped() {
        // Mixed sizes, compared with brute-force enumeration of minimal subsets.
        let f = fixture(&[2, 5, 5, 5, 4], 1, &[(0, &[0, 1, 2, 3, 4])]);
        let hg = hypergraph(&f);
        for e in hg.bundles(0) {
            assert_eq!(hg.check_edge(&e), Ok(()));
        }
        assert_eq!(hg.bundles(0).count(), brute_minimal(&hg, &[0, 1, 2, 3, 4]));
    }

    fn brute_minimal(hg: &Hypergraph, pool: &[JobId]) -> usize {
        (1u32..1 << pool.len())
            .filter(|mask| {
                let jobs: Vec<JobId> = (0..pool.len()).filter(|k| mask >> k & 1 == 1).map(|k| pool[k]).collect();
                Configuration::new(jobs, &hg.sizes).is_minimal(&hg.sizes, &hg.threshold)
            })
            .count()
    }

    #[test]
    fn empty_support_has_no_bundles() {
        let f = fixture(&[5], 1, &[]);
        assert_eq!(hypergraph(&f).bundles(0).count(), 0);
    }

    #[test]
    fn single_composite_matches() {
        let f = fixture(&[5, 5, 5], 1, &[(0, &[0, 1, 2])]);
        let hg = hypergraph(&f);
        let m = find_perfect_matching(&hg, MatchingOptions::default()).unwrap();
        assert_eq!(m.matched[&0].bundle.jobs, vec![0, 1, 2]);
    }

    #[test]
    fn tight_pool_needs_an_augmentation() {
        // Jobs 0..5 of size 4. Composite 0 may use {0,1,2} or {3,4,5};
        // composite 1 only {0,1,2}. Greedy order gives 0 the first triple, so
        // composite 1's tree must swap composite 0 to {3,4,5}.
        let f = fixture(&[4, 4, 4, 4, 4, 4], 2, &[(0, &[0, 1, 2]), (0, &[3, 4, 5]), (1, &[0, 1, 2])]);
        let hg = hypergraph(&f);
        let opts = MatchingOptions { trace: true, ..MatchingOptions::default() };
        let tree = find_perfect_matching(&hg, opts).unwrap();
        assert_eq!(tree.matched[&0].bundle.jobs, vec![3, 4, 5]);
        assert_eq!(tree.matched[&1].bundle.jobs, vec![0, 1, 2]);
        assert_eq!(tree.stats.add_edges, 1);
        assert!(tree.trace.unwrap().iter().any(|l| l.starts_with("add")));
        let ex = find_perfect_matching(&hg, MatchingOptions::exhaustive()).unwrap();
        assert_eq!(ex.matched, tree.matched);
    }

    #[test]
    fn unmatchable_reported() {
        let f = fixture(&[4, 4, 4], 2, &[(0, &[0, 1, 2]), (1, &[0, 1, 2])]);
        let hg = hypergraph(&f);
        assert!(matches!(find_perfect_matching(&hg, MatchingOptions::default()), Err(Error::ExistenceViolated(_))));
        assert!(matches!(find_perfect_matching(&hg, MatchingOptions::exhaustive()), Err(Error::ExistenceViolated(_))));
    }

    #[test]
    fn budgets_are_enforced() {
        let f = fixture(&[4, 4, 4, 4, 4, 4], 2, &[(0, &[0, 1, 2]), (0, &[3, 4, 5]), (1, &[0, 1, 2])]);
        let hg = hypergraph(&f);
        let tiny = MatchingOptions { budget: 1, ..MatchingOptions::default() };
        assert!(matches!(find_perfect_matching(&hg, tiny), Err(Error::BudgetExceeded(_))));
        let tiny = MatchingOptions { budget: 1, ..MatchingOptions::exhaustive() };
        assert!(matches!(find_perfect_matching(&hg, tiny), Err(Error::BudgetExceeded(_))));
    }

    #[test]
    fn empty_composite_list() {
        let f = fixture(&[], 1, &[]);
        let mut clusters = f.clusters.clone();
        clusters.composites.clear();
        let gap = build_gap_instance(&f.inst, &Rat::from_int(72), 12).unwrap();
        let hg = Hypergraph::new(&clusters, &f.classes, &gap);
        assert!(find_perfect_matching(&hg, MatchingOptions::default()).unwrap().matched.is_empty());
    }
}
