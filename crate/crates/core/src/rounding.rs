//! Rounding a fractional assignment to an integral one.
//!
//! Each machine keeps every job it holds fractionally except at most one, so
//! it loses at most its largest fractional job.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::instance::{Instance, JobId, MachineId};
use crate::lp::{solve_feasibility, Bounds, LinearProgram, Relation};
use crate::rat::Rat;

/// Fractional job shares `y_ij` for a set of machines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FractionalAssignment {
    pub machines: Vec<MachineId>,
    /// Positive entries only.
    pub y: BTreeMap<(MachineId, JobId), Rat>,
    pub target: Rat,
}

impl FractionalAssignment {
    pub fn machine_value(&self, machine: MachineId, sizes: &[Rat]) -> Rat {
        self.row(machine).map(|(j, y)| y * &sizes[j]).sum()
    }

    fn row(&self, machine: MachineId) -> impl Iterator<Item = (JobId, &Rat)> {
        self.y.range((machine, 0)..=(machine, usize::MAX)).map(|((_, j), y)| (*j, y))
    }

    /// Largest job size in the machine's support (zero if empty).
    pub fn max_support_size(&self, machine: MachineId, sizes: &[Rat]) -> Rat {
        self.row(machine).map(|(j, _)| sizes[j].clone()).max().unwrap_or_else(Rat::zero)
    }

    /// Entries in `(0, 1]`, job mass at most one, every machine at `target`,
    /// and (given an instance) support inside eligibility.
    pub fn check(&self, sizes: &[Rat], inst: Option<&Instance>) -> std::result::Result<(), String> {
        let listed: BTreeSet<MachineId> = self.machines.iter().copied().collect();
        let mut mass: BTreeMap<JobId, Rat> = BTreeMap::new();
        for ((i, j), y) in &self.y {
            if !y.is_positive() || *y > Rat::one() {
                return Err(format!("y[{i},{j}] = {y} outside (0, 1]"));
            }
            if !listed.contains(i) {
                return Err(format!("y[{i},{j}] names an unlisted machine"));
            }
            if inst.is_some_and(|inst| !inst.is_eligible(*i, *j)) {
                return Err(format!("job {j} is not eligible on machine {i}"));
            }
            *mass.entry(*j).or_insert_with(Rat::zero) += y;
        }
        if let Some((j, m)) = mass.iter().find(|(_, m)| **m > Rat::one()) {
            return Err(format!("job {j} has mass {m} > 1"));
        }
        for &i in &self.machines {
            let v = self.machine_value(i, sizes);
            if v < self.target {
                return Err(format!("machine {i} has value {v} < target {}", self.target));
            }
        }
        Ok(())
    }
}

/// Integral assignment over `fa.machines` where every machine's value is at
/// least its fractional value minus its largest support job.
///
/// The support LP (job rows `<= 1`, machine rows at their current values) is
/// re-solved to a vertex, whose fractional support is a pseudoforest. Leaf
/// jobs go to their only machine; a leaf machine gives up its last job; what
/// remains is a union of even cycles, where each job follows the cycle to the
/// next machine.
pub fn round_assignment(fa: &FractionalAssignment, sizes: &[Rat]) -> Result<BTreeMap<JobId, MachineId>> {
    fa.check(sizes, None).map_err(Error::Precondition)?;
    let edges: Vec<(MachineId, JobId)> = fa.y.keys().copied().collect();
    let mut owner: BTreeMap<JobId, MachineId> = BTreeMap::new();
    if edges.is_empty() {
        return Ok(owner);
    }

    let mut lp = LinearProgram::new(edges.len());
    for k in 0..edges.len() {
        lp.bounds[k] = Bounds { lo: Some(Rat::zero()), hi: Some(Rat::one()) };
    }
    let jobs: BTreeSet<JobId> = edges.iter().map(|e| e.1).collect();
    for &j in &jobs {
        let row = edges.iter().enumerate().filter(|(_, e)| e.1 == j).map(|(k, _)| (k, Rat::one())).collect();
        lp.add_constraint(row, Relation::Le, Rat::one());
    }
    for &i in &fa.machines {
        let row: Vec<(usize, Rat)> =
            edges.iter().enumerate().filter(|(_, e)| e.0 == i).map(|(k, e)| (k, sizes[e.1].clone())).collect();
        if !row.is_empty() {
            lp.add_constraint(row, Relation::Ge, fa.machine_value(i, sizes));
        }
    }
    let vertex = solve_feasibility(&lp);
    if !vertex.is_optimal() {
        return Err(Error::post("rounding", "support LP infeasible at the input's own values"));
    }

    // Fractional support graph.
    let mut machine_adj: BTreeMap<MachineId, BTreeSet<JobId>> = BTreeMap::new();
    let mut job_adj: BTreeMap<JobId, BTreeSet<MachineId>> = BTreeMap::new();
    for (k, &(i, j)) in edges.iter().enumerate() {
        let v = &vertex.values[k];
        if *v == Rat::one() {
            owner.insert(j, i);
        } else if v.is_positive() {
            machine_adj.entry(i).or_default().insert(j);
            job_adj.entry(j).or_default().insert(i);
        }
    }
    check_pseudoforest(&machine_adj, &job_adj)?;

    loop {
        if let Some((&j, ms)) = job_adj.iter().find(|(_, ms)| ms.len() == 1) {
            let i = *ms.iter().next().expect("leaf has a neighbour");
            owner.insert(j, i);
            job_adj.remove(&j);
            machine_adj.get_mut(&i).expect("edge endpoint").remove(&j);
            continue;
        }
        if let Some((&i, js)) = machine_adj.iter().find(|(_, js)| js.len() == 1) {
            let j = *js.iter().next().expect("leaf has a neighbour");
            machine_adj.remove(&i);
            let rest = job_adj.get_mut(&j).expect("edge endpoint");
            rest.remove(&i);
            if rest.is_empty() {
                job_adj.remove(&j);
            }
            continue;
        }
        break;
    }
    machine_adj.retain(|_, js| !js.is_empty());
    job_adj.retain(|_, ms| !ms.is_empty());

    // Only disjoint cycles remain: every vertex has degree exactly two.
    while let Some((&start, _)) = machine_adj.iter().next() {
        let mut i = start;
        loop {
            let js = machine_adj.remove(&i).ok_or_else(|| Error::post("rounding", "residual graph is not a cycle"))?;
            if js.len() != 2 {
                return Err(Error::post("rounding", format!("machine {i} has residual degree {}", js.len())));
            }
            // Walk towards the smaller job first on the start machine; afterwards the unvisited one.
            let j = *js.iter().find(|j| job_adj.contains_key(j)).ok_or_else(|| Error::post("rounding", "cycle walk lost its job"))?;
            let ms = job_adj.remove(&j).expect("checked above");
            let next = *ms.iter().find(|&&m| m != i).ok_or_else(|| Error::post("rounding", "job with one residual machine"))?;
            owner.insert(j, next);
            if next == start {
                break;
            }
            i = next;
        }
    }
    if !job_adj.is_empty() {
        return Err(Error::post("rounding", "jobs left after cycle assignment"));
    }

    for &i in &fa.machines {
        let got: Rat = owner.iter().filter(|(_, &m)| m == i).map(|(&j, _)| &sizes[j]).sum();
        let floor = &fa.machine_value(i, sizes) - &fa.max_support_size(i, sizes);
        if got < floor {
            return Err(Error::post("rounding", format!("machine {i} rounded to {got} < {floor}")));
        }
    }
    Ok(owner)
}

fn check_pseudoforest(
    machine_adj: &BTreeMap<MachineId, BTreeSet<JobId>>,
    job_adj: &BTreeMap<JobId, BTreeSet<MachineId>>,
) -> Result<()> {
    let mut seen_m: BTreeSet<MachineId> = BTreeSet::new();
    let mut seen_j: BTreeSet<JobId> = BTreeSet::new();
    for &root in machine_adj.keys() {
        if seen_m.contains(&root) {
            continue;
        }
        let (mut vertices, mut degree_sum) = (0usize, 0usize);
        let mut stack = vec![root];
        seen_m.insert(root);
        while let Some(i) = stack.pop() {
            vertices += 1;
            for &j in &machine_adj[&i] {
                degree_sum += 1;
                if seen_j.insert(j) {
                    vertices += 1;
                    for &m in &job_adj[&j] {
                        if seen_m.insert(m) {
                            stack.push(m);
                        }
                    }
                }
            }
        }
        if degree_sum > vertices {
            return Err(Error::post(
                "rounding",
                format!("fractional support around machine {root} has {degree_sum} edges on {vertices} vertices"),
            ));
        }
    }
    Ok(())
}
