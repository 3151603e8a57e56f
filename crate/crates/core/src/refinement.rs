//! Refinement of the groups inside one neighborhood: simulate the
//! assignment rule over sampled arrival orders and keep the order giving the
//! fewest groups whose member sets all have prospective models.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Partition, SemanticVector, TaskId};
use crate::grouping::{sequential_grouping, GroupingState};
use crate::prospective::{MemberSet, ProspectiveRepository};

/// Answers whether a member set has a retrievable model.
pub trait GroupCatalog {
    fn has_group(&self, members: &MemberSet) -> bool;
}

impl GroupCatalog for ProspectiveRepository {
    fn has_group(&self, members: &MemberSet) -> bool {
        self.contains(members)
    }
}

impl GroupCatalog for BTreeSet<MemberSet> {
    fn has_group(&self, members: &MemberSet) -> bool {
        self.contains(members)
    }
}

/// A catalog holding every possible set.
#[derive(Clone, Copy, Debug, Default)]
pub struct AnyGroup;

impl GroupCatalog for AnyGroup {
    fn has_group(&self, _: &MemberSet) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementResult {
    pub performed: bool,
    pub old_group_count: usize,
    pub new_group_count: usize,
    pub winning_order: Option<Vec<TaskId>>,
    /// Ids of the installed groups (empty when not performed).
    pub new_group_ids: Vec<usize>,
    /// Member sets of the installed groups.
    pub new_sets: Vec<MemberSet>,
}

/// A feasible simulated grouping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderCandidate {
    pub order: Vec<TaskId>,
    /// Indexed like the neighborhood's members (arrival order).
    pub partition: Partition,
}

fn factorial_capped(n: usize, cap: usize) -> usize {
    let mut f: usize = 1;
    for i in 2..=n {
        f = f.saturating_mul(i);
        if f > cap {
            return f;
        }
    }
    f
}

/// Groups `members` in the order of index permutation `perm`; the partition
/// is indexed like `members`. `None` when some group lacks a model.
fn simulate<C: GroupCatalog + ?Sized>(
    members: &[(TaskId, SemanticVector)],
    perm: &[usize],
    radius: f64,
    catalog: &C,
) -> Result<Option<Partition>> {
    let ordered: Vec<SemanticVector> = perm.iter().map(|&i| members[i].1.clone()).collect();
    let p = sequential_grouping(&ordered, radius)?;
    let mut labels = alloc::vec![0usize; members.len()];
    for (pos, &i) in perm.iter().enumerate() {
        labels[i] = p.labels()[pos];
    }
    let partition = Partition::from_labels(&labels);
    for cluster in partition.clusters() {
        let set: MemberSet = cluster.iter().map(|&i| members[i].0).collect();
        if !catalog.has_group(&set) {
            return Ok(None);
        }
    }
    Ok(Some(partition))
}

/// Lexicographic successor; false at the last permutation.
fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let Some(i) = (0..n - 1).rev().find(|&i| p[i] < p[i + 1]) else { return false };
    let j = (i + 1..n).rev().find(|&j| p[j] > p[i]).expect("successor exists");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

/// Samples `min(kappa, n!)` distinct arrival orders (the given order first)
/// and returns the feasible one with the fewest groups; ties keep the first
/// one seen. `members` must be in arrival order.
pub fn find_minimum_group_order<C: GroupCatalog + ?Sized, R: Rng + ?Sized>(
    members: &[(TaskId, SemanticVector)],
    radius: f64,
    catalog: &C,
    kappa: usize,
    rng: &mut R,
) -> Result<Option<OrderCandidate>> {
    let n = members.len();
    if n == 0 {
        return Err(Error::EmptyGroup);
    }
    let budget = kappa.max(1);
    let mut best: Option<(Vec<usize>, Partition)> = None;
    let consider = |perm: &[usize], best: &mut Option<(Vec<usize>, Partition)>| -> Result<()> {
        if let Some(p) = simulate(members, perm, radius, catalog)? {
            if best.as_ref().map_or(true, |(_, b)| p.num_clusters() < b.num_clusters()) {
                *best = Some((perm.to_vec(), p));
            }
        }
        Ok(())
    };
    let identity: Vec<usize> = (0..n).collect();
    if factorial_capped(n, budget) <= budget {
        let mut perm = identity;
        loop {
            consider(&perm, &mut best)?;
            if !next_permutation(&mut perm) {
                break;
            }
        }
    } else {
        let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
        seen.insert(identity.clone());
        consider(&identity, &mut best)?;
        let mut perm = identity;
        while seen.len() < budget {
            perm.shuffle(rng);
            if seen.insert(perm.clone()) {
                consider(&perm, &mut best)?;
            }
        }
    }
    Ok(best.map(|(perm, partition)| OrderCandidate {
        order: perm.iter().map(|&i| members[i].0).collect(),
        partition,
    }))
}

fn candidate_sets(members: &[TaskId], candidate: &Partition) -> Vec<MemberSet> {
    candidate.clusters().iter().map(|c| c.iter().map(|&i| members[i]).collect()).collect()
}

/// Whether `candidate` (indexed like `members`) has fewer groups than the
/// active groups lying inside the neighborhood.
pub fn is_reduced(candidate: &Partition, state: &GroupingState, members: &[TaskId]) -> Result<bool> {
    Ok(candidate.num_clusters() < current_groups(candidate, state, members)?.len())
}

fn current_groups(candidate: &Partition, state: &GroupingState, members: &[TaskId]) -> Result<Vec<usize>> {
    if candidate.len() != members.len() {
        return Err(Error::CoverageMismatch);
    }
    let set: MemberSet = members.iter().copied().collect();
    if set.len() != members.len() {
        return Err(Error::CoverageMismatch);
    }
    let ids = state.groups_within(&set);
    let covered: usize = ids.iter().map(|id| state.group(*id).map_or(0, |g| g.len())).sum();
    if covered != set.len() {
        return Err(Error::CoverageMismatch);
    }
    Ok(ids)
}

/// Replaces the active groups inside the neighborhood by the groups of
/// `candidate`, with fresh ids. Models are bound by the caller.
pub fn apply_refinement<C: GroupCatalog + ?Sized>(
    state: &mut GroupingState,
    members: &[TaskId],
    candidate: &OrderCandidate,
    catalog: &C,
) -> Result<RefinementResult> {
    let old = current_groups(&candidate.partition, state, members)?;
    if candidate.partition.num_clusters() >= old.len() {
        return Err(Error::NotReduced);
    }
    let sets = candidate_sets(members, &candidate.partition);
    if let Some(missing) = sets.iter().find(|s| !catalog.has_group(s)) {
        return Err(Error::MissingRepositoryEntry(missing.iter().copied().collect()));
    }
    let ids = state.replace_groups(&old, &sets)?;
    Ok(RefinementResult {
        performed: true,
        old_group_count: old.len(),
        new_group_count: sets.len(),
        winning_order: Some(candidate.order.clone()),
        new_group_ids: ids,
        new_sets: sets,
    })
}

/// Search plus application for the neighborhood `neighborhood` of `state`.
pub fn refine_neighborhood<C: GroupCatalog + ?Sized, R: Rng + ?Sized>(
    state: &mut GroupingState,
    neighborhood: usize,
    catalog: &C,
    rng: &mut R,
) -> Result<RefinementResult> {
    let nb = state.neighborhood(neighborhood).ok_or(Error::UnknownTask(neighborhood))?;
    let ids: Vec<TaskId> = nb.arrival_order().to_vec();
    let members: Vec<(TaskId, SemanticVector)> =
        ids.iter().map(|t| (*t, state.semantic(*t).expect("assigned").clone())).collect();
    let old = state.groups_within(&ids.iter().copied().collect()).len();
    let cfg = state.config().clone();
    let not_performed = RefinementResult {
        performed: false,
        old_group_count: old,
        new_group_count: old,
        winning_order: None,
        new_group_ids: Vec::new(),
        new_sets: Vec::new(),
    };
    match find_minimum_group_order(&members, cfg.radius, catalog, cfg.kappa, rng)? {
        Some(c) if is_reduced(&c.partition, state, &ids)? => apply_refinement(state, &ids, &c, catalog),
        _ => Ok(not_performed),
    }
}

/// Exact minimum over all orders (test oracle, at most 8 items).
/// `None` when no order is feasible.
pub fn exhaustive_min_groups<C: GroupCatalog + ?Sized>(
    members: &[(TaskId, SemanticVector)],
    radius: f64,
    catalog: &C,
) -> Result<Option<Partition>> {
    let n = members.len();
    if n > 8 {
        return Err(Error::OracleSizeBound(n));
    }
    if n == 0 {
        return Err(Error::EmptyGroup);
    }
    // Heap's algorithm, independent of the lexicographic enumerator above.
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = alloc::vec![0usize; n];
    let mut best: Option<Partition> = None;
    let visit = |perm: &[usize], best: &mut Option<Partition>| -> Result<()> {
        if let Some(p) = simulate(members, perm, radius, catalog)? {
            if best.as_ref().map_or(true, |b| p.num_clusters() < b.num_clusters()) {
                *best = Some(p);
            }
        }
        Ok(())
    };
    visit(&perm, &mut best)?;
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm, &mut best)?;
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouping::{GroupingConfig, TaskRecord};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nb(xs: &[f64]) -> Vec<(TaskId, SemanticVector)> {
        xs.iter().enumerate().map(|(i, x)| (i, SemanticVector::new(alloc::vec![*x]).unwrap())).collect()
    }

    fn sets(v: &[&[TaskId]]) -> BTreeSet<MemberSet> {
        v.iter().map(|s| s.iter().copied().collect()).collect()
    }

    #[test]
    fn finds_single_group_order() {
        // arrival ⟨0, 1, 0.5⟩
        let members = nb(&[0.0, 1.0, 0.5]);
        let repo = sets(&[&[0, 1, 2]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = find_minimum_group_order(&members, 0.42, &repo, 100, &mut rng).unwrap().unwrap();
        assert_eq!(c.partition.num_clusters(), 1);
        assert_eq!(c.order, alloc::vec![0, 2, 1]);
    }

    #[test]
    fn constraint_filters_candidates() {
        let members = nb(&[0.0, 1.0, 0.5]);
        let repo = sets(&[&[0, 2], &[1]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = find_minimum_group_order(&members, 0.42, &repo, 100, &mut rng).unwrap().unwrap();
        assert_eq!(c.partition.num_clusters(), 2);
        assert_eq!(find_minimum_group_order(&members, 0.42, &sets(&[]), 100, &mut rng).unwrap(), None);
    }

    #[test]
    fn singleton_neighborhood() {
        let members = nb(&[0.3]);
        let c = find_minimum_group_order(&members, 0.4, &AnyGroup, 100, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap()
            .unwrap();
        assert_eq!(c.partition.num_clusters(), 1);
        assert_eq!(exhaustive_min_groups(&members, 0.4, &AnyGroup).unwrap().unwrap().num_clusters(), 1);
    }

    #[test]
    fn exhaustive_examples() {
        assert_eq!(exhaustive_min_groups(&nb(&[0.0, 1.0, 0.5]), 0.42, &AnyGroup).unwrap().unwrap().num_clusters(), 1);
        // δ of the pair is 0.5 > 0.42 under every order.
        assert_eq!(exhaustive_min_groups(&nb(&[0.0, 1.0]), 0.42, &AnyGroup).unwrap().unwrap().num_clusters(), 2);
        let nine = nb(&[0.0; 9]);
        assert_eq!(exhaustive_min_groups(&nine, 0.4, &AnyGroup), Err(Error::OracleSizeBound(9)));
    }

    fn line_state(xs: &[f64], radius: f64) -> GroupingState {
        let cfg = GroupingConfig { radius, gamma: 3.0, ..GroupingConfig::default() };
        let mut s = GroupingState::new(cfg).unwrap();
        for (i, x) in xs.iter().enumerate() {
            s.assign(&TaskRecord { task_id: i, semantic: SemanticVector::new(alloc::vec![*x]).unwrap() }).unwrap();
        }
        s
    }

    #[test]
    fn is_reduced_examples() {
        let s = line_state(&[0.0, 1.0, 0.5], 0.42);
        assert_eq!(s.group_count(), 2);
        let ids = [0, 1, 2];
        assert!(is_reduced(&Partition::from_labels(&[0, 0, 0]), &s, &ids).unwrap());
        assert!(!is_reduced(&Partition::from_labels(&[0, 1, 0]), &s, &ids).unwrap());
        assert!(!is_reduced(&Partition::from_labels(&[0, 1, 2]), &s, &ids).unwrap());
        assert_eq!(is_reduced(&Partition::from_labels(&[0, 0]), &s, &ids), Err(Error::CoverageMismatch));
    }

    #[test]
    fn apply_refinement_bookkeeping() {
        let mut s = line_state(&[0.0, 1.0, 0.5], 0.42);
        let repo = sets(&[&[0, 1, 2]]);
        let same = OrderCandidate { order: alloc::vec![0, 1, 2], partition: s.partition() };
        assert_eq!(apply_refinement(&mut s, &[0, 1, 2], &same, &repo), Err(Error::NotReduced));
        let r = refine_neighborhood(&mut s, 0, &repo, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(r.performed);
        assert_eq!((r.old_group_count, r.new_group_count), (2, 1));
        assert_eq!(s.group_count(), 1);
        assert_eq!(r.new_sets, alloc::vec![BTreeSet::from([0, 1, 2])]);
        for t in 0..3 {
            assert_eq!(s.group_of(t), Some(r.new_group_ids[0]));
        }
        let g = s.group(r.new_group_ids[0]).unwrap();
        assert!(g.radius() <= 0.42);
    }

    #[test]
    fn missing_entry_is_an_error() {
        let mut s = line_state(&[0.0, 1.0, 0.5], 0.42);
        let c = OrderCandidate { order: alloc::vec![0, 2, 1], partition: Partition::from_labels(&[0, 0, 0]) };
        assert_eq!(
            apply_refinement(&mut s, &[0, 1, 2], &c, &sets(&[])),
            Err(Error::MissingRepositoryEntry(alloc::vec![0, 1, 2]))
        );
        assert_eq!(s.group_count(), 2);
    }

    #[test]
    fn permutation_enumeration_counts() {
        let mut p: Vec<usize> = (0..4).collect();
        let mut n = 1;
        while next_permutation(&mut p) {
            n += 1;
        }
        assert_eq!(n, 24);
    }

    proptest! {
        #[test]
        fn sampled_matches_exhaustive(
            xs in prop::collection::vec(-1.0f64..1.0, 1..7),
            seed in 0u64..1000,
            kappa in 1usize..30,
        ) {
            let members = nb(&xs);
            let exact = exhaustive_min_groups(&members, 0.3, &AnyGroup).unwrap().unwrap().num_clusters();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let full = find_minimum_group_order(&members, 0.3, &AnyGroup, 5040, &mut rng).unwrap().unwrap();
            prop_assert_eq!(full.partition.num_clusters(), exact);
            let sampled = find_minimum_group_order(&members, 0.3, &AnyGroup, kappa, &mut rng).unwrap().unwrap();
            prop_assert!(sampled.partition.num_clusters() >= exact);
        }
    }
}
