//! Gap instances and the big/small, upper/middle classifications.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::clp::{ClpSolution, Configuration, CoverMode};
use crate::error::{Error, Result};
use crate::instance::{Instance, JobId, MachineId};
use crate::rat::Rat;

/// The instance with every job of size at least `tau / alpha` inflated to `tau`.
#[derive(Debug, Clone)]
pub struct GapInstance<'a> {
    pub base: &'a Instance,
    pub tau: Rat,
    pub alpha: u64,
    pub gap_size: Vec<Rat>,
}

impl GapInstance<'_> {
    /// `tau / alpha`; jobs at or above it are big.
    pub fn threshold(&self) -> Rat {
        &self.tau / &Rat::from(self.alpha)
    }

    pub fn is_big(&self, job: JobId) -> bool {
        Rat::from(self.base.size(job)) >= self.threshold()
    }

    pub fn original_sizes(&self) -> Vec<Rat> {
        (0..self.base.job_count()).map(|j| Rat::from(self.base.size(j))).collect()
    }
}

pub fn build_gap_instance<'a>(inst: &'a Instance, tau: &Rat, alpha: u64) -> Result<GapInstance<'a>> {
    if !tau.is_positive() {
        return Err(Error::Precondition(format!("gap instance needs a positive threshold, got {tau}")));
    }
    if alpha == 0 {
        return Err(Error::InvalidArgument("alpha must be at least 1".into()));
    }
    let threshold = tau / &Rat::from(alpha);
    let gap_size = (0..inst.job_count())
        .map(|j| {
            let p = Rat::from(inst.size(j));
            if p >= threshold {
                tau.clone()
            } else {
                p
            }
        })
        .collect();
    Ok(GapInstance { base: inst, tau: tau.clone(), alpha, gap_size })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JobClasses {
    pub big: BTreeSet<JobId>,
    pub small: BTreeSet<JobId>,
}

impl JobClasses {
    pub fn is_big(&self, job: JobId) -> bool {
        self.big.contains(&job)
    }

    /// No member is big.
    pub fn is_small_config(&self, c: &Configuration) -> bool {
        c.jobs.iter().all(|j| !self.is_big(*j))
    }

    /// A singleton holding one big job.
    pub fn is_big_config(&self, c: &Configuration) -> bool {
        c.jobs.len() == 1 && self.is_big(c.jobs[0])
    }

    pub fn small_pool(&self, job_count: usize) -> Vec<bool> {
        (0..job_count).map(|j| self.small.contains(&j)).collect()
    }
}

/// Splits jobs at `tau / alpha` (closed: equality is big).
///
/// Panics if some big job's gap size is below `tau`, which would let a
/// minimal configuration hold a big job next to others.
pub fn classify_jobs(gap: &GapInstance) -> JobClasses {
    let (big, small): (BTreeSet<JobId>, BTreeSet<JobId>) = (0..gap.base.job_count()).partition(|&j| gap.is_big(j));
    assert!(big.iter().all(|&j| gap.gap_size[j] >= gap.tau), "big jobs must fill a configuration alone");
    JobClasses { big, small }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MachineClasses {
    pub upper: BTreeSet<MachineId>,
    pub middle: BTreeSet<MachineId>,
    /// Weight on big singletons, per machine.
    pub big_mass: BTreeMap<MachineId, Rat>,
    /// Weight on small configurations, per machine.
    pub small_mass: BTreeMap<MachineId, Rat>,
    /// Machines whose big mass is exactly 1/2.
    pub boundary: Vec<MachineId>,
}

impl MachineClasses {
    pub fn is_upper(&self, machine: MachineId) -> bool {
        self.upper.contains(&machine)
    }
}

/// Upper iff big-singleton mass in `x` is at least 1/2. Every carried column
/// must be a big singleton or a small configuration, and middle machines must
/// keep small mass at least 1/2.
pub fn classify_machines(gap: &GapInstance, jobs: &JobClasses, x: &ClpSolution) -> Result<MachineClasses> {
    let half = Rat::new(1, 2);
    let mut classes = MachineClasses {
        upper: BTreeSet::new(),
        middle: BTreeSet::new(),
        big_mass: BTreeMap::new(),
        small_mass: BTreeMap::new(),
        boundary: Vec::new(),
    };
    for i in 0..gap.base.machine_count() {
        let mut big = Rat::zero();
        let mut small = Rat::zero();
        for (c, w) in x.columns_of(i) {
            if jobs.is_big_config(c) {
                big += w;
            } else if jobs.is_small_config(c) {
                small += w;
            } else {
                return Err(Error::Precondition(format!(
                    "machine {i} carries {:?}, which mixes big and small jobs",
                    c.jobs
                )));
            }
        }
        if big == half {
            classes.boundary.push(i);
        }
        if big >= half {
            classes.upper.insert(i);
        } else {
            if small < half {
                return Err(Error::Precondition(format!("middle machine {i} has small mass {small} < 1/2")));
            }
            classes.middle.insert(i);
        }
        classes.big_mass.insert(i, big);
        classes.small_mass.insert(i, small);
    }
    Ok(classes)
}

/// Carries a feasible configuration LP solution of the original instance at
/// `gap.tau` over to the gap instance: configurations holding a big job shrink
/// to their lowest-index big job, and each machine's cover is scaled to
/// exactly one. Job usage only drops, so the result is feasible for the gap
/// instance in exact-cover mode.
pub fn transfer_to_gap(x: &ClpSolution, gap: &GapInstance, jobs: &JobClasses) -> ClpSolution {
    let mut weights: BTreeMap<(MachineId, Configuration), Rat> = BTreeMap::new();
    for ((i, c), w) in &x.weights {
        let carried = match c.jobs.iter().find(|&&j| jobs.is_big(j)) {
            Some(&j) => Configuration::new(vec![j], &gap.gap_size),
            None => Configuration::new(c.jobs.clone(), &gap.gap_size),
        };
        *weights.entry((*i, carried)).or_insert_with(Rat::zero) += w;
    }
    let mut cover: BTreeMap<MachineId, Rat> = BTreeMap::new();
    for ((i, _), w) in &weights {
        *cover.entry(*i).or_insert_with(Rat::zero) += w;
    }
    for ((i, _), w) in weights.iter_mut() {
        *w = &*w / &cover[i];
    }
    ClpSolution { tau: gap.tau.clone(), mode: CoverMode::ExactlyOne, weights }
}
