//! Instance families shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use fairalloc::clp::{prune_to_minimal, ClpSolution, Configuration, CoverMode};
use fairalloc::instance::{generate_random, Instance, JobSpec, MachineId};
use fairalloc::rat::Rat;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Nonempty random subset of `0..m`, each machine kept with probability `num/den`.
pub fn random_subset(rng: &mut ChaCha8Rng, m: usize, num: u32, den: u32) -> Vec<MachineId> {
    let mut e: Vec<MachineId> = (0..m).filter(|_| rng.gen_ratio(num, den)).collect();
    if e.is_empty() {
        e.push(rng.gen_range(0..m));
    }
    e
}

pub const FAMILIES: usize = 4;

/// Oracle-sized instances (m <= 5, n <= 10, sizes <= 20) from four families:
/// uniform density, few large jobs, big jobs topped up with small ones, and
/// sparse eligibility.
pub fn family_instance(family: usize, seed: u64) -> Instance {
    let mut rng = rng(seed ^ (family as u64) << 32);
    match family {
        0 => {
            let m = rng.gen_range(1..=5);
            let n = rng.gen_range(1..=10);
            let density = [Rat::new(1, 3), Rat::new(1, 2), Rat::new(2, 3), Rat::one()].choose(&mut rng).unwrap().clone();
            generate_random(m, n, 20, &density, seed).unwrap()
        }
        1 => {
            let m = rng.gen_range(2..=5);
            let n = rng.gen_range(m..=(m + 3).min(10));
            let jobs = (0..n).map(|_| JobSpec::new(rng.gen_range(8..=20), random_subset(&mut rng, m, 1, 2))).collect();
            Instance::new(m, jobs).unwrap()
        }
        2 => {
            let m = rng.gen_range(2..=4);
            let big = rng.gen_range(m - 1..=m);
            let n = rng.gen_range(big + 1..=10);
            let jobs = (0..n)
                .map(|k| {
                    let size = if k < big { rng.gen_range(12..=20) } else { rng.gen_range(1..=3) };
                    JobSpec::new(size, random_subset(&mut rng, m, 2, 3))
                })
                .collect();
            Instance::new(m, jobs).unwrap()
        }
        _ => {
            let m = rng.gen_range(2..=5);
            let n = rng.gen_range(1..=10);
            let jobs = (0..n)
                .map(|_| {
                    let mut e = vec![rng.gen_range(0..m)];
                    if rng.gen_bool(0.5) {
                        e.push(rng.gen_range(0..m));
                    }
                    JobSpec::new(rng.gen_range(1..=20), e)
                })
                .collect();
            Instance::new(m, jobs).unwrap()
        }
    }
}

/// Threshold of the synthetic family: big jobs are those of size >= 4.
pub const SYNTHETIC_T: i64 = 48;

/// A random instance together with a feasible exact-cover solution of its gap
/// configuration LP at `SYNTHETIC_T`. Big jobs are shared fractionally among
/// up to three machines (so the big support has trees and cycles) and small
/// configurations overlap wherever job capacity allows (so bundles compete).
/// Weights are multiples of 1/4.
pub fn synthetic_clp(seed: u64) -> (Instance, Rat, ClpSolution) {
    let mut rng = rng(seed);
    let t = Rat::from_int(SYNTHETIC_T);
    let quarter = Rat::new(1, 4);
    let m = rng.gen_range(3..=6);

    let mut specs: Vec<(u64, BTreeSet<MachineId>)> = Vec::new();
    let mut used: Vec<Rat> = Vec::new();
    let mut left = vec![Rat::one(); m];
    let mut weights: BTreeMap<(MachineId, Vec<usize>), Rat> = BTreeMap::new();

    for _ in 0..rng.gen_range(1..=m + 1) {
        let j = specs.len();
        let eligible: BTreeSet<MachineId> = random_subset(&mut rng, m, 1, 2).into_iter().take(3).collect();
        specs.push((rng.gen_range(4..=60), eligible.clone()));
        used.push(Rat::zero());
        for &i in &eligible {
            let quarters = rng.gen_range(0..=2);
            let w = &quarter * &Rat::from_int(quarters);
            if w.is_positive() && w <= left[i] && &used[j] + &w <= Rat::one() {
                left[i] = &left[i] - &w;
                used[j] = &used[j] + &w;
                weights.insert((i, vec![j]), w);
            }
        }
    }

    for (i, rest) in left.iter_mut().enumerate() {
        while rest.is_positive() {
            let w = if *rest > Rat::new(1, 2) && rng.gen_bool(0.5) { Rat::new(1, 2) } else { rest.clone() };
            let mut chosen: Vec<usize> = Vec::new();
            let mut total = 0u64;
            let mut reusable: Vec<usize> = (0..specs.len())
                .filter(|&j| specs[j].0 < 4 && &used[j] + &w <= Rat::one())
                .collect();
            reusable.shuffle(&mut rng);
            for j in reusable {
                if total >= SYNTHETIC_T as u64 {
                    break;
                }
                if rng.gen_bool(0.6) {
                    chosen.push(j);
                    total += specs[j].0;
                }
            }
            while total < SYNTHETIC_T as u64 {
                let size = rng.gen_range(1..=3);
                chosen.push(specs.len());
                specs.push((size, BTreeSet::new()));
                used.push(Rat::zero());
                total += size;
            }
            let sizes: Vec<Rat> = specs.iter().map(|(p, _)| if *p >= 4 { t.clone() } else { Rat::from(*p) }).collect();
            let config = prune_to_minimal(&chosen, &sizes, &t).expect("chosen jobs cover the threshold");
            for &j in &config.jobs {
                specs[j].1.insert(i);
                used[j] = &used[j] + &w;
            }
            let key = (i, config.jobs.clone());
            let prev = weights.remove(&key).unwrap_or_else(Rat::zero);
            weights.insert(key, &prev + &w);
            *rest = &*rest - &w;
        }
    }

    // spare jobs and extra eligibility
    for _ in 0..rng.gen_range(0..=4) {
        specs.push((rng.gen_range(1..=8), BTreeSet::new()));
    }
    for (_, e) in specs.iter_mut() {
        if e.is_empty() || rng.gen_bool(0.2) {
            e.insert(rng.gen_range(0..m));
        }
    }

    let gap_sizes: Vec<Rat> = specs.iter().map(|(p, _)| if *p >= 4 { t.clone() } else { Rat::from(*p) }).collect();
    let inst = Instance::new(m, specs.into_iter().map(|(p, e)| JobSpec::new(p, e)).collect()).unwrap();
    let x = ClpSolution {
        tau: t.clone(),
        mode: CoverMode::ExactlyOne,
        weights: weights.into_iter().map(|((i, jobs), w)| ((i, Configuration::new(jobs, &gap_sizes)), w)).collect(),
    };
    (inst, t, x)
}
