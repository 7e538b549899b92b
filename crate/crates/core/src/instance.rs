//! Problem data: instances, allocations, JSON IO and the random generator.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rat::Rat;

pub type MachineId = usize;
pub type JobId = usize;

/// A job with a single size and the set of machines that value it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JobSpec {
    pub size: u64,
    /// Sorted, duplicate free.
    pub eligible: Vec<MachineId>,
}

impl JobSpec {
    pub fn new(size: u64, eligible: impl IntoIterator<Item = MachineId>) -> Self {
        let mut eligible: Vec<_> = eligible.into_iter().collect();
        eligible.sort_unstable();
        eligible.dedup();
        JobSpec { size, eligible }
    }

    pub fn is_eligible(&self, machine: MachineId) -> bool {
        self.eligible.binary_search(&machine).is_ok()
    }
}

/// A restricted max-min allocation instance: job `j` is worth `size` to every
/// machine in its eligible set and nothing to the others.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instance {
    machines: usize,
    jobs: Vec<JobSpec>,
}

impl Instance {
    pub fn new(machines: usize, jobs: Vec<JobSpec>) -> Result<Self> {
        if machines == 0 {
            return Err(Error::parse("machines", "must be at least 1"));
        }
        for (j, job) in jobs.iter().enumerate() {
            if job.size == 0 {
                return Err(Error::parse(format!("jobs[{j}].size"), "size must be positive"));
            }
            if let Some((k, &i)) = job.eligible.iter().enumerate().find(|(_, &i)| i >= machines) {
                return Err(Error::parse(
                    format!("jobs[{j}].eligible[{k}]"),
                    format!("machine index {i} out of range (machines = {machines})"),
                ));
            }
        }
        let jobs = jobs.into_iter().map(|j| JobSpec::new(j.size, j.eligible)).collect();
        Ok(Instance { machines, jobs })
    }

    pub fn machine_count(&self) -> usize {
        self.machines
    }

    pub fn job_count(&self) -> usize {
        self.jobs.len()
    }

    pub fn jobs(&self) -> &[JobSpec] {
        &self.jobs
    }

    pub fn job(&self, j: JobId) -> &JobSpec {
        &self.jobs[j]
    }

    pub fn size(&self, j: JobId) -> u64 {
        self.jobs[j].size
    }

    pub fn is_eligible(&self, machine: MachineId, job: JobId) -> bool {
        self.jobs[job].is_eligible(machine)
    }

    /// Jobs eligible on `machine`, ascending.
    pub fn eligible_jobs(&self, machine: MachineId) -> Vec<JobId> {
        (0..self.jobs.len()).filter(|&j| self.is_eligible(machine, j)).collect()
    }

    pub fn total_size(&self) -> u64 {
        self.jobs.iter().map(|j| j.size).sum()
    }

    /// Total size a machine could receive if it got every eligible job.
    pub fn eligible_total(&self, machine: MachineId) -> u64 {
        self.jobs.iter().filter(|j| j.is_eligible(machine)).map(|j| j.size).sum()
    }

    /// Returns a copy with one more job appended.
    pub fn with_job(&self, job: JobSpec) -> Result<Self> {
        let mut jobs = self.jobs.clone();
        jobs.push(job);
        Instance::new(self.machines, jobs)
    }

    /// Canonical compact JSON.
    pub fn to_json(&self) -> String {
        let raw = RawInstanceOut {
            machines: self.machines,
            jobs: self.jobs.iter().map(|j| RawJobOut { size: j.size, eligible: &j.eligible }).collect(),
        };
        serde_json::to_string(&raw).expect("instance serialization is infallible")
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    machines: i64,
    jobs: Vec<RawJob>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJob {
    size: i64,
    eligible: Vec<i64>,
}

#[derive(Serialize)]
struct RawInstanceOut<'a> {
    machines: usize,
    jobs: Vec<RawJobOut<'a>>,
}

#[derive(Serialize)]
struct RawJobOut<'a> {
    size: u64,
    eligible: &'a [MachineId],
}

fn path_of(p: &serde_path_to_error::Path) -> String {
    let s = p.to_string();
    if s == "." || s.is_empty() {
        "$".to_string()
    } else {
        s
    }
}

/// Decodes an instance document, reporting the offending field path on error.
pub fn parse_instance(text: &str) -> Result<Instance> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawInstance = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::parse(path_of(e.path()), e.inner().to_string()))?;
    if raw.machines < 1 {
        return Err(Error::parse("machines", "must be at least 1"));
    }
    let machines = raw.machines as usize;
    let mut jobs = Vec::with_capacity(raw.jobs.len());
    for (j, job) in raw.jobs.into_iter().enumerate() {
        if job.size < 1 {
            return Err(Error::parse(format!("jobs[{j}].size"), "size must be positive"));
        }
        let mut eligible = Vec::with_capacity(job.eligible.len());
        for (k, i) in job.eligible.into_iter().enumerate() {
            if i < 0 || i as u64 >= machines as u64 {
                return Err(Error::parse(
                    format!("jobs[{j}].eligible[{k}]"),
                    format!("machine index {i} out of range (machines = {machines})"),
                ));
            }
            eligible.push(i as usize);
        }
        jobs.push(JobSpec::new(job.size as u64, eligible));
    }
    Instance::new(machines, jobs)
}

/// An integral allocation. Unassigned jobs are simply absent from `owner`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub owner: BTreeMap<JobId, MachineId>,
    pub min_value: Rat,
}

impl Allocation {
    /// Builds an allocation and computes its exact objective.
    pub fn new(inst: &Instance, owner: BTreeMap<JobId, MachineId>) -> Result<Self> {
        let mut alloc = Allocation { owner, min_value: Rat::zero() };
        alloc.min_value = verify_allocation(inst, &alloc)?;
        Ok(alloc)
    }

    pub fn empty(inst: &Instance) -> Self {
        Allocation::new(inst, BTreeMap::new()).expect("empty allocation is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("allocation serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::parse(path_of(e.path()), e.inner().to_string()))
    }
}

/// Per-machine load under `owner`, validating indices and eligibility.
pub fn machine_loads(inst: &Instance, owner: &BTreeMap<JobId, MachineId>) -> Result<Vec<u64>> {
    let mut loads = vec![0u64; inst.machine_count()];
    for (&j, &i) in owner {
        if j >= inst.job_count() {
            return Err(Error::JobOutOfRange { job: j, jobs: inst.job_count() });
        }
        if i >= inst.machine_count() {
            return Err(Error::MachineOutOfRange { job: j, machine: i, machines: inst.machine_count() });
        }
        if !inst.is_eligible(i, j) {
            return Err(Error::Ineligible { job: j, machine: i });
        }
        loads[i] += inst.size(j);
    }
    Ok(loads)
}

/// Exact minimum machine load of `alloc`. Ignores the stored `min_value`.
pub fn verify_allocation(inst: &Instance, alloc: &Allocation) -> Result<Rat> {
    let loads = machine_loads(inst, &alloc.owner)?;
    Ok(Rat::from(loads.into_iter().min().unwrap_or(0)))
}

/// Deterministic random instance. Eligibility of each (machine, job) pair is
/// drawn independently with probability `density`.
pub fn generate_random(
    machines: usize,
    jobs: usize,
    max_size: u64,
    density: &Rat,
    seed: u64,
) -> Result<Instance> {
    if machines == 0 || jobs == 0 {
        return Err(Error::InvalidArgument("machines and jobs must be at least 1".into()));
    }
    if max_size == 0 {
        return Err(Error::InvalidArgument("max size must be at least 1".into()));
    }
    if !density.is_positive() || *density > Rat::one() {
        return Err(Error::InvalidArgument(format!("density {density} must lie in (0, 1]")));
    }
    let p: u64 = density.numer().try_into().map_err(|_| Error::InvalidArgument("density numerator too large".into()))?;
    let q: u64 = density.denom().try_into().map_err(|_| Error::InvalidArgument("density denominator too large".into()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs = (0..jobs)
        .map(|_| {
            let size = rng.gen_range(1..=max_size);
            let eligible = (0..machines).filter(|_| rng.gen_range(0..q) < p).collect::<Vec<_>>();
            JobSpec::new(size, eligible)
        })
        .collect();
    Instance::new(machines, specs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_minimal_document() {
        let inst = parse_instance(r#"{"machines":1,"jobs":[{"size":3,"eligible":[0]}]}"#).unwrap();
        assert_eq!(inst.machine_count(), 1);
        assert_eq!(inst.job_count(), 1);
        assert_eq!(inst.size(0), 3);
    }

    #[test]
    fn parses_symmetric_document() {
        let text = r#"{"machines":2,"jobs":[{"size":4,"eligible":[0,1]},{"size":4,"eligible":[0,1]}]}"#;
        let inst = parse_instance(text).unwrap();
        assert_eq!(inst.machine_count(), 2);
        assert_eq!(inst.jobs().iter().map(|j| j.size).collect::<Vec<_>>(), vec![4, 4]);
        assert_eq!(inst.to_json(), text);
    }

    #[test]
    fn rejects_zero_size_with_path() {
        let err = parse_instance(r#"{"machines":1,"jobs":[{"size":0,"eligible":[0]}]}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("jobs[0].size"), "{msg}");
        assert!(msg.contains("size must be positive"), "{msg}");
    }

    #[test]
    fn rejects_out_of_range_machine_with_path() {
        let err = parse_instance(r#"{"machines":2,"jobs":[{"size":1,"eligible":[0]},{"size":1,"eligible":[1,2]}]}"#)
            .unwrap_err();
        assert!(err.to_string().starts_with("jobs[1].eligible[1]:"), "{err}");
    }

    #[test]
    fn rejects_malformed_documents() {
        assert!(parse_instance("{").is_err());
        let err = parse_instance(r#"{"machines":1,"jobs":[{"size":"3","eligible":[0]}]}"#).unwrap_err();
        assert!(err.to_string().starts_with("jobs[0].size"), "{err}");
        assert!(parse_instance(r#"{"machines":0,"jobs":[]}"#).is_err());
        assert!(parse_instance(r#"{"machines":1,"jobs":[],"extra":1}"#).is_err());
    }

    #[test]
    fn canonicalizes_eligible_sets() {
        let inst = parse_instance(r#"{"machines":3,"jobs":[{"size":2,"eligible":[2,0,2]}]}"#).unwrap();
        assert_eq!(inst.to_json(), r#"{"machines":3,"jobs":[{"size":2,"eligible":[0,2]}]}"#);
    }

    fn two_by_four() -> Instance {
        Instance::new(2, vec![JobSpec::new(4, [0, 1]), JobSpec::new(4, [0, 1])]).unwrap()
    }

    #[test]
    fn verify_sums_single_machine() {
        let inst = Instance::new(1, vec![JobSpec::new(3, [0]), JobSpec::new(4, [0])]).unwrap();
        let alloc = Allocation::new(&inst, BTreeMap::from([(0, 0), (1, 0)])).unwrap();
        assert_eq!(alloc.min_value, Rat::from_int(7));
    }

    #[test]
    fn verify_one_job_each() {
        let inst = two_by_four();
        let owner = BTreeMap::from([(0, 0), (1, 1)]);
        assert_eq!(verify_allocation(&inst, &Allocation { owner, min_value: Rat::zero() }).unwrap(), Rat::from_int(4));
        // both on one machine leaves the other empty
        let owner = BTreeMap::from([(0, 1), (1, 1)]);
        assert_eq!(verify_allocation(&inst, &Allocation { owner, min_value: Rat::zero() }).unwrap(), Rat::zero());
    }

    #[test]
    fn verify_rejects_ineligible() {
        let inst = Instance::new(2, vec![JobSpec::new(5, [0])]).unwrap();
        let alloc = Allocation { owner: BTreeMap::from([(0, 1)]), min_value: Rat::zero() };
        match verify_allocation(&inst, &alloc) {
            Err(Error::Ineligible { job: 0, machine: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn allocation_json_format() {
        let inst = two_by_four();
        let alloc = Allocation::new(&inst, BTreeMap::from([(0, 0), (1, 1)])).unwrap();
        let text = alloc.to_json();
        assert_eq!(text, r#"{"owner":{"0":0,"1":1},"min_value":"4/1"}"#);
        assert_eq!(Allocation::from_json(&text).unwrap(), alloc);
    }

    #[test]
    fn generator_full_density_and_determinism() {
        let a = generate_random(2, 3, 10, &Rat::one(), 7).unwrap();
        assert!(a.jobs().iter().all(|j| j.eligible == vec![0, 1]));
        assert!(a.jobs().iter().all(|j| (1..=10).contains(&j.size)));
        let b = generate_random(2, 3, 10, &Rat::one(), 7).unwrap();
        assert_eq!(a, b);
        let h1 = generate_random(4, 6, 20, &Rat::new(1, 2), 11).unwrap();
        let h2 = generate_random(4, 6, 20, &Rat::new(1, 2), 11).unwrap();
        assert_eq!(h1.to_json(), h2.to_json());
    }

    #[test]
    fn generator_rejects_bad_density() {
        assert!(generate_random(2, 2, 5, &Rat::zero(), 1).is_err());
        assert!(generate_random(2, 2, 5, &Rat::new(3, 2), 1).is_err());
    }

    proptest! {
        #[test]
        fn json_round_trip(m in 1usize..6, n in 1usize..12, max in 1u64..30, p in 1i64..5, seed in any::<u64>()) {
            let inst = generate_random(m, n, max, &Rat::new(p, 4), seed).unwrap();
            let text = inst.to_json();
            let back = parse_instance(&text).unwrap();
            prop_assert_eq!(&back, &inst);
            prop_assert_eq!(back.to_json(), text);
        }
    }
}
