//! Extended assignment program: one machine per composite plus small-job shares.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, MatchingState};
use crate::instance::{Instance, JobId, MachineId};
use crate::lp::{solve_feasibility, Bounds, LinearProgram, Relation};
use crate::par::Exec;
use crate::rat::Rat;
use crate::rounding::FractionalAssignment;

pub const DEFAULT_SELECTION_BUDGET: u64 = 100_000;

/// `u` shares small jobs among machines; `s` weighs machines inside each composite.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EapSolution {
    pub u: BTreeMap<(MachineId, JobId), Rat>,
    pub s: BTreeMap<MachineId, Rat>,
}

impl EapSolution {
    pub fn machine_value(&self, machine: MachineId, sizes: &[Rat]) -> Rat {
        self.u.range((machine, 0)..=(machine, usize::MAX)).map(|((_, j), u)| u * &sizes[*j]).sum()
    }

    pub fn s_of(&self, machine: MachineId) -> Rat {
        self.s.get(&machine).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn is_integral(&self) -> bool {
        self.s.values().all(|v| v.is_zero() || *v == Rat::one())
    }
}

/// One chosen machine per composite, in composite order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub chosen: Vec<MachineId>,
}

/// Verifies, exactly: the domain of `s` and `u`; support on composite
/// machines, small jobs and eligible pairs; unit `s` mass per composite;
/// job shares at most one; and the bilinear value per composite.
pub fn check_eap(sol: &EapSolution, inst: &Instance, hg: &Hypergraph) -> std::result::Result<(), String> {
    let mut owner: BTreeMap<MachineId, usize> = BTreeMap::new();
    for (d, c) in hg.composites.iter().enumerate() {
        for &i in &c.machines {
            owner.insert(i, d);
        }
    }
    let unit = |v: &Rat| !v.is_negative() && *v <= Rat::one();
    for (i, v) in &sol.s {
        if !unit(v) {
            return Err(format!("domain: s[{i}] = {v}"));
        }
        if !owner.contains_key(i) {
            return Err(format!("support: s[{i}] on a machine outside every composite"));
        }
    }
    let mut mass: BTreeMap<JobId, Rat> = BTreeMap::new();
    for ((i, j), v) in &sol.u {
        if !unit(v) {
            return Err(format!("domain: u[{i},{j}] = {v}"));
        }
        if !owner.contains_key(i) || !hg.classes.small.contains(j) || !inst.is_eligible(*i, *j) {
            return Err(format!("support: u[{i},{j}] is not a small eligible pair of a composite machine"));
        }
        *mass.entry(*j).or_insert_with(Rat::zero) += v;
    }
    for (d, c) in hg.composites.iter().enumerate() {
        let total: Rat = c.machines.iter().map(|&i| sol.s_of(i)).sum();
        if total != Rat::one() {
            return Err(format!("selection: composite {d} has s mass {total}"));
        }
    }
    if let Some((j, m)) = mass.iter().find(|(_, m)| **m > Rat::one()) {
        return Err(format!("job share: job {j} has u mass {m}"));
    }
    for (d, c) in hg.composites.iter().enumerate() {
        let value: Rat = c.machines.iter().map(|&i| &sol.s_of(i) * &sol.machine_value(i, &hg.sizes)).sum();
        if value < hg.threshold {
            return Err(format!("value: composite {d} receives {value} < {}", hg.threshold));
        }
    }
    Ok(())
}

/// Indicator solution of a perfect matching.
pub fn eap_from_matching(matching: &MatchingState) -> EapSolution {
    let mut sol = EapSolution::default();
    for e in matching.matched.values() {
        sol.s.insert(e.member, Rat::one());
        for &j in &e.bundle.jobs {
            sol.u.insert((e.member, j), Rat::one());
        }
    }
    sol
}

/// Keeps, per composite, the lowest-id machine whose own value reaches the
/// threshold (one exists by averaging), and zeroes `s` and `u` elsewhere.
pub fn restrict_eap(sol: &EapSolution, inst: &Instance, hg: &Hypergraph) -> Result<EapSolution> {
    check_eap(sol, inst, hg).map_err(Error::Precondition)?;
    let mut out = EapSolution::default();
    for (d, c) in hg.composites.iter().enumerate() {
        let pick = c
            .machines
            .iter()
            .copied()
            .find(|&i| sol.machine_value(i, &hg.sizes) >= hg.threshold)
            .ok_or_else(|| Error::post("restrict_eap", format!("composite {d} has no machine at the threshold")))?;
        out.s.insert(pick, Rat::one());
        for ((i, j), v) in sol.u.range((pick, 0)..=(pick, usize::MAX)) {
            out.u.insert((*i, *j), v.clone());
        }
    }
    check_eap(&out, inst, hg).map_err(|e| Error::post("restrict_eap", e))?;
    Ok(out)
}

/// Assignment LP on `machines` over small eligible jobs with every machine at
/// the threshold. Returns the fractional solution if feasible.
fn selection_alp(inst: &Instance, hg: &Hypergraph, machines: &[MachineId]) -> Option<FractionalAssignment> {
    let pairs: Vec<(MachineId, JobId)> = machines
        .iter()
        .flat_map(|&i| hg.classes.small.iter().filter(move |&&j| inst.is_eligible(i, j)).map(move |&j| (i, j)))
        .collect();
    let mut lp = LinearProgram::new(pairs.len());
    for b in lp.bounds.iter_mut() {
        *b = Bounds { lo: Some(Rat::zero()), hi: Some(Rat::one()) };
    }
    for &j in &hg.classes.small {
        let row: Vec<(usize, Rat)> =
            pairs.iter().enumerate().filter(|(_, p)| p.1 == j).map(|(k, _)| (k, Rat::one())).collect();
        if !row.is_empty() {
            lp.add_constraint(row, Relation::Le, Rat::one());
        }
    }
    for &i in machines {
        let row = pairs.iter().enumerate().filter(|(_, p)| p.0 == i).map(|(k, p)| (k, hg.sizes[p.1].clone())).collect();
        lp.add_constraint(row, Relation::Ge, hg.threshold.clone());
    }
    let sol = solve_feasibility(&lp);
    if !sol.is_optimal() {
        return None;
    }
    let y = pairs.iter().zip(sol.values).filter(|(_, v)| v.is_positive()).map(|(p, v)| (*p, v)).collect();
    Some(FractionalAssignment { machines: machines.to_vec(), y, target: hg.threshold.clone() })
}

/// Tries selections in mixed-radix order (last composite fastest) and returns
/// the first whose assignment LP reaches the threshold on every selected
/// machine. Candidates are tested in parallel chunks; the earliest feasible
/// one wins regardless of scheduling.
pub fn select_by_enumeration(
    inst: &Instance,
    hg: &Hypergraph,
    budget: u64,
    exec: Exec,
) -> Result<(Selection, FractionalAssignment)> {
    let radices: Vec<u64> = hg.composites.iter().map(|c| c.machines.len() as u64).collect();
    let total = radices.iter().try_fold(1u64, |acc, &r| acc.checked_mul(r)).unwrap_or(u64::MAX);
    if total > budget {
        return Err(Error::BudgetExceeded(format!("{total} selections exceed the budget of {budget}")));
    }
    let decode = |mut code: u64| -> Vec<MachineId> {
        let mut chosen = vec![0; radices.len()];
        for d in (0..radices.len()).rev() {
            chosen[d] = hg.composites[d].machines[(code % radices[d]) as usize];
            code /= radices[d];
        }
        chosen
    };
    const CHUNK: u64 = 64;
    let mut start = 0;
    while start < total {
        let codes: Vec<u64> = (start..total.min(start + CHUNK)).collect();
        let hit = exec.find_first(&codes, |&code| {
            let chosen = decode(code);
            selection_alp(inst, hg, &chosen).map(|fa| (Selection { chosen }, fa))
        });
        if let Some(found) = hit {
            return Ok(found);
        }
        start += CHUNK;
    }
    Err(Error::NoFeasibleSelection(format!("none of {total} selections reaches {}", hg.threshold)))
}
