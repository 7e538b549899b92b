//! Min-cost covering knapsack, the pricing problem of the configuration LP.

use crate::clp::Configuration;
use crate::instance::{Instance, JobId, MachineId};
use crate::rat::Rat;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnapsackItem {
    pub job: JobId,
    pub size: Rat,
    pub cost: Rat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Priced {
    pub configuration: Configuration,
    pub cost: Rat,
}

struct State {
    total: Rat,
    cost: Rat,
    jobs: Vec<JobId>,
}

/// Cheapest subset of `items` with total size at least `tau`, pruned to a
/// minimal configuration. `None` if the items cannot reach `tau`.
///
/// Dynamic program over totals capped at `tau`, keeping only the Pareto
/// frontier of (total, cost). Pruning repeatedly drops the most expensive
/// removable job (smallest index on ties), which never increases cost since
/// costs are non-negative.
pub fn min_cost_cover(items: &[KnapsackItem], tau: &Rat) -> Option<Priced> {
    assert!(tau.is_positive(), "cover threshold must be positive");
    debug_assert!(items.iter().all(|it| !it.cost.is_negative() && it.size.is_positive()));
    let mut items: Vec<&KnapsackItem> = items.iter().collect();
    items.sort_by_key(|it| it.job);

    let mut frontier = vec![State { total: Rat::zero(), cost: Rat::zero(), jobs: Vec::new() }];
    for it in &items {
        let mut next: Vec<State> = Vec::with_capacity(frontier.len() * 2);
        for s in &frontier {
            let mut jobs = s.jobs.clone();
            jobs.push(it.job);
            next.push(State {
                total: (&s.total + &it.size).min(tau.clone()),
                cost: &s.cost + &it.cost,
                jobs,
            });
        }
        // Old states first so they win exact ties.
        let mut all: Vec<State> = frontier.drain(..).chain(next).collect();
        all.sort_by(|a, b| b.total.cmp(&a.total).then_with(|| a.cost.cmp(&b.cost)));
        let mut best: Option<Rat> = None;
        for s in all {
            if best.as_ref().is_none_or(|b| s.cost < *b) {
                best = Some(s.cost.clone());
                frontier.push(s);
            }
        }
    }
    let state = frontier.into_iter().find(|s| s.total == *tau)?;

    let size_of = |j: JobId| &items.iter().find(|it| it.job == j).expect("chosen job is an item").size;
    let cost_of = |j: JobId| &items.iter().find(|it| it.job == j).expect("chosen job is an item").cost;
    let mut jobs = state.jobs;
    let mut total: Rat = jobs.iter().map(|&j| size_of(j)).sum();
    loop {
        let drop = jobs
            .iter()
            .enumerate()
            .filter(|(_, &j)| &total - size_of(j) >= *tau)
            .max_by(|(_, &a), (_, &b)| cost_of(a).cmp(cost_of(b)).then(b.cmp(&a)))
            .map(|(k, _)| k);
        match drop {
            Some(k) => {
                total -= size_of(jobs[k]);
                jobs.remove(k);
            }
            None => break,
        }
    }
    let cost = jobs.iter().map(|&j| cost_of(j)).sum();
    Some(Priced { configuration: Configuration { jobs, total_size: total }, cost })
}

/// Pricing for one machine: the cheapest minimal configuration over its
/// eligible jobs in `pool`, with job sizes `sizes` and costs `costs`.
pub fn price_min_knapsack(
    inst: &Instance,
    machine: MachineId,
    pool: &[bool],
    sizes: &[Rat],
    costs: &[Rat],
    tau: &Rat,
) -> Option<Priced> {
    let items: Vec<KnapsackItem> = (0..inst.job_count())
        .filter(|&j| pool[j] && inst.is_eligible(machine, j))
        .map(|j| KnapsackItem { job: j, size: sizes[j].clone(), cost: costs[j].clone() })
        .collect();
    min_cost_cover(&items, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn item(job: JobId, size: i64, cost: Rat) -> KnapsackItem {
        KnapsackItem { job, size: Rat::from_int(size), cost }
    }

    /// Minimum cost over all 2^n subsets reaching tau.
    fn brute(items: &[KnapsackItem], tau: &Rat) -> Option<Rat> {
        let n = items.len();
        (0u32..1 << n)
            .filter_map(|mask| {
                let chosen = items.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1);
                let total: Rat = chosen.clone().map(|(_, it)| it.size.clone()).sum();
                (total >= *tau).then(|| chosen.map(|(_, it)| it.cost.clone()).sum())
            })
            .min()
    }

    #[test]
    fn cheapest_cover_of_three() {
        let items = [
            item(0, 3, Rat::new(1, 5)),
            item(1, 5, Rat::new(3, 10)),
            item(2, 7, Rat::new(1, 2)),
        ];
        let p = min_cost_cover(&items, &Rat::from_int(8)).unwrap();
        assert_eq!(p.configuration.jobs, vec![0, 1]);
        assert_eq!(p.cost, Rat::new(1, 2));
        assert_eq!(brute(&items, &Rat::from_int(8)), Some(Rat::new(1, 2)));
    }

    #[test]
    fn short_pool_has_no_cover() {
        let items = [item(0, 3, Rat::zero()), item(1, 4, Rat::zero())];
        assert!(min_cost_cover(&items, &Rat::from_int(8)).is_none());
    }

    #[test]
    fn zero_costs_prune_to_a_single_job() {
        let items = [item(0, 2, Rat::zero()), item(1, 5, Rat::zero()), item(2, 5, Rat::zero())];
        let p = min_cost_cover(&items, &Rat::from_int(5)).unwrap();
        assert_eq!(p.configuration.jobs.len(), 1);
        assert!(p.configuration.is_minimal(&[2, 5, 5].map(Rat::from_int), &Rat::from_int(5)));
    }

    proptest! {
        #[test]
        fn optimal_and_minimal(
            raw in proptest::collection::vec((1i64..9, 0i64..6), 1..8),
            tau in 1i64..30,
        ) {
            let items: Vec<KnapsackItem> =
                raw.iter().enumerate().map(|(j, &(s, c))| item(j, s, Rat::new(c, 4))).collect();
            let tau = Rat::from_int(tau);
            let sizes: Vec<Rat> = items.iter().map(|it| it.size.clone()).collect();
            match (min_cost_cover(&items, &tau), brute(&items, &tau)) {
                (None, None) => {}
                (Some(p), Some(best)) => {
                    prop_assert_eq!(&p.cost, &best);
                    prop_assert!(p.configuration.is_minimal(&sizes, &tau));
                }
                (got, want) => prop_assert!(false, "got {:?}, want {:?}", got, want),
            }
        }
    }
}
