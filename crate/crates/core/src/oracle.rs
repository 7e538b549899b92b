//! Exhaustive max-min optimum for small instances.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::instance::{Allocation, Instance, JobId, MachineId};
use crate::rat::Rat;

/// Largest `m^n` the oracle accepts.
pub const ORACLE_BUDGET: u64 = 10_000_000;

/// True max-min value together with an optimal witness.
#[derive(Debug, Clone)]
pub struct Optimum {
    pub value: Rat,
    pub witness: Allocation,
}

pub fn oracle_fits(inst: &Instance) -> bool {
    assignment_count(inst.machine_count(), inst.job_count()) <= ORACLE_BUDGET
}

fn assignment_count(m: usize, n: usize) -> u64 {
    (0..n).fold(1u64, |acc, _| acc.saturating_mul(m as u64))
}

/// Enumerates job → machine maps with branch-and-bound on the best reachable
/// minimum load. Leaving a job with eligible machines unassigned never raises
/// any load, so only eligible machines are branched on.
pub fn exact_optimum(inst: &Instance) -> Result<Optimum> {
    if !oracle_fits(inst) {
        return Err(Error::OracleTooLarge {
            machines: inst.machine_count(),
            jobs: inst.job_count(),
            budget: ORACLE_BUDGET,
        });
    }
    let m = inst.machine_count();
    let mut order: Vec<JobId> = (0..inst.job_count()).filter(|&j| !inst.job(j).eligible.is_empty()).collect();
    order.sort_by(|&a, &b| inst.size(b).cmp(&inst.size(a)).then(a.cmp(&b)));

    // remaining[k][i]: eligible size on machine i among order[k..]
    let mut remaining = vec![vec![0u64; m]; order.len() + 1];
    for k in (0..order.len()).rev() {
        remaining[k] = remaining[k + 1].clone();
        for &i in &inst.job(order[k]).eligible {
            remaining[k][i] += inst.size(order[k]);
        }
    }

    let mut search = Search {
        inst,
        order: &order,
        remaining: &remaining,
        loads: vec![0; m],
        current: vec![usize::MAX; order.len()],
        best: None,
        best_choice: Vec::new(),
    };
    search.dfs(0);

    let (value, choice) = match search.best {
        Some(v) => (v, search.best_choice),
        None => (0, vec![usize::MAX; order.len()]),
    };
    let owner: BTreeMap<JobId, MachineId> = order
        .iter()
        .zip(&choice)
        .filter(|(_, &i)| i != usize::MAX)
        .map(|(&j, &i)| (j, i))
        .collect();
    let witness = Allocation::new(inst, owner)?;
    debug_assert_eq!(witness.min_value, Rat::from(value));
    Ok(Optimum { value: Rat::from(value), witness })
}

struct Search<'a> {
    inst: &'a Instance,
    order: &'a [JobId],
    remaining: &'a [Vec<u64>],
    loads: Vec<u64>,
    current: Vec<MachineId>,
    best: Option<u64>,
    best_choice: Vec<MachineId>,
}

impl Search<'_> {
    fn dfs(&mut self, k: usize) {
        let bound = self.loads.iter().zip(&self.remaining[k]).map(|(l, r)| l + r).min().unwrap_or(0);
        if let Some(best) = self.best {
            if bound <= best {
                return;
            }
        }
        if k == self.order.len() {
            let value = self.loads.iter().copied().min().unwrap_or(0);
            if self.best.is_none_or(|b| value > b) {
                self.best = Some(value);
                self.best_choice = self.current.clone();
            }
            return;
        }
        let j = self.order[k];
        let size = self.inst.size(j);
        let mut machines = self.inst.job(j).eligible.clone();
        machines.sort_by_key(|&i| (self.loads[i], i));
        for i in machines {
            self.loads[i] += size;
            self.current[k] = i;
            self.dfs(k + 1);
            self.loads[i] -= size;
        }
        self.current[k] = usize::MAX;
    }
}
