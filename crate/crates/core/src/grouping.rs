//! Online assignment of tasks to semantic groups and neighboring task sets.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Partition, RadiusStats, SemanticVector, TaskId};

/// Thresholds and sampling budgets of the assign-and-refine process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupingConfig {
    /// Assignment radius R.
    pub radius: f64,
    /// Neighborhood scale γ; neighborhoods use radius γR.
    pub gamma: f64,
    /// Permutations simulated per refinement (κ).
    pub kappa: usize,
    /// Clustering iterations for prospective collection (r).
    pub r_iters: usize,
    /// Representative cluster counts kept (η).
    pub eta: usize,
    /// Restrict group candidates to the task's neighborhood.
    pub scoped: bool,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self { radius: 0.4, gamma: 1.5, kappa: 100, r_iters: 100, eta: 2, scoped: true }
    }
}

impl GroupingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidConfig(format!("radius must be > 0, got {}", self.radius)));
        }
        if !(self.gamma.is_finite() && self.gamma > 1.0) {
            return Err(Error::InvalidConfig(format!("gamma must be > 1, got {}", self.gamma)));
        }
        if self.kappa == 0 || self.r_iters == 0 || self.eta == 0 {
            return Err(Error::InvalidConfig("kappa, r_iters and eta must be positive".into()));
        }
        Ok(())
    }

    pub fn neighborhood_radius(&self) -> f64 {
        self.gamma * self.radius
    }
}

/// A task entering the grouping process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: TaskId,
    pub semantic: SemanticVector,
}

/// A set of tasks with cached radius statistics. Used both for semantic
/// groups (bound R) and neighboring task sets (bound γR).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    pub id: usize,
    members: BTreeSet<TaskId>,
    arrival: Vec<TaskId>,
    stats: RadiusStats,
}

pub type SemanticGroup = TaskSet;
pub type NeighboringTaskSet = TaskSet;

impl TaskSet {
    fn singleton(id: usize, task: &TaskRecord) -> Result<Self> {
        let mut stats = RadiusStats::empty(task.semantic.dim());
        stats.push(task.semantic.as_slice())?;
        Ok(Self {
            id,
            members: BTreeSet::from([task.task_id]),
            arrival: alloc::vec![task.task_id],
            stats,
        })
    }

    fn from_members<'a>(
        id: usize,
        members: impl IntoIterator<Item = (TaskId, &'a SemanticVector)>,
    ) -> Result<Self> {
        let mut set: Option<Self> = None;
        for (task_id, semantic) in members {
            let rec = TaskRecord { task_id, semantic: semantic.clone() };
            match set.as_mut() {
                None => set = Some(Self::singleton(id, &rec)?),
                Some(s) => s.insert(&rec)?,
            }
        }
        set.ok_or(Error::EmptyGroup)
    }

    fn insert(&mut self, task: &TaskRecord) -> Result<()> {
        self.stats.push(task.semantic.as_slice())?;
        self.members.insert(task.task_id);
        self.arrival.push(task.task_id);
        Ok(())
    }

    pub fn members(&self) -> &BTreeSet<TaskId> {
        &self.members
    }

    /// Members in the order they joined this set.
    pub fn arrival_order(&self) -> &[TaskId] {
        &self.arrival
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn stats(&self) -> &RadiusStats {
        &self.stats
    }

    pub fn radius(&self) -> f64 {
        self.stats.radius().unwrap_or(0.0)
    }

    pub fn trial_radius(&self, semantic: &SemanticVector) -> Result<f64> {
        self.stats.trial_radius(semantic.as_slice())
    }
}

/// Whether an assignment opened a new set or joined an existing one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentKind {
    CreatedNew,
    JoinedExisting,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentOutcome {
    pub kind: AssignmentKind,
    /// Group id (or neighborhood id) the task ended up in.
    pub group_id: usize,
    /// Smallest trial δ among candidates, or 0 for the first task.
    pub trial_delta: f64,
}

/// Picks the candidate with the smallest trial δ; ties go to the lowest id.
/// Returns `None` when there are no candidates.
fn closest<'a>(
    candidates: impl Iterator<Item = &'a TaskSet>,
    semantic: &SemanticVector,
) -> Result<Option<(usize, f64)>> {
    let mut best: Option<(usize, f64)> = None;
    for set in candidates {
        let t = set.trial_radius(semantic)?;
        match best {
            Some((id, b)) if t > b || (t == b && id < set.id) => {}
            _ => best = Some((set.id, t)),
        }
    }
    Ok(best)
}

/// Groups, neighborhoods and task bookkeeping for one stream.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupingState {
    config: GroupingConfig,
    groups: BTreeMap<usize, SemanticGroup>,
    neighborhoods: Vec<NeighboringTaskSet>,
    semantics: BTreeMap<TaskId, SemanticVector>,
    arrival: Vec<TaskId>,
    group_of: BTreeMap<TaskId, usize>,
    neighborhood_of: BTreeMap<TaskId, usize>,
    next_group_id: usize,
}

impl GroupingState {
    pub fn new(config: GroupingConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            groups: BTreeMap::new(),
            neighborhoods: Vec::new(),
            semantics: BTreeMap::new(),
            arrival: Vec::new(),
            group_of: BTreeMap::new(),
            neighborhood_of: BTreeMap::new(),
            next_group_id: 0,
        })
    }

    pub fn config(&self) -> &GroupingConfig {
        &self.config
    }

    /// Active groups in creation order.
    pub fn groups(&self) -> impl Iterator<Item = &SemanticGroup> {
        self.groups.values()
    }

    pub fn group(&self, id: usize) -> Option<&SemanticGroup> {
        self.groups.get(&id)
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn neighborhoods(&self) -> &[NeighboringTaskSet] {
        &self.neighborhoods
    }

    pub fn neighborhood(&self, id: usize) -> Option<&NeighboringTaskSet> {
        self.neighborhoods.get(id)
    }

    pub fn group_of(&self, task: TaskId) -> Option<usize> {
        self.group_of.get(&task).copied()
    }

    pub fn neighborhood_of(&self, task: TaskId) -> Option<usize> {
        self.neighborhood_of.get(&task).copied()
    }

    pub fn semantic(&self, task: TaskId) -> Option<&SemanticVector> {
        self.semantics.get(&task)
    }

    /// Tasks seen so far, in arrival order.
    pub fn tasks(&self) -> &[TaskId] {
        &self.arrival
    }

    fn remember(&mut self, task: &TaskRecord) -> Result<()> {
        match self.semantics.get(&task.task_id) {
            Some(s) if s != &task.semantic => Err(Error::AlreadyAssigned(task.task_id)),
            Some(_) => Ok(()),
            None => {
                if let Some(first) = self.semantics.values().next() {
                    if first.dim() != task.semantic.dim() {
                        return Err(Error::DimensionMismatch {
                            expected: first.dim(),
                            found: task.semantic.dim(),
                        });
                    }
                }
                self.semantics.insert(task.task_id, task.semantic.clone());
                self.arrival.push(task.task_id);
                Ok(())
            }
        }
    }

    /// Assigns `task` to a neighboring task set with threshold γR over all
    /// neighborhoods.
    pub fn assign_neighborhood(&mut self, task: &TaskRecord) -> Result<AssignmentOutcome> {
        if self.neighborhood_of.contains_key(&task.task_id) {
            return Err(Error::AlreadyAssigned(task.task_id));
        }
        self.remember(task)?;
        let threshold = self.config.neighborhood_radius();
        let outcome = match closest(self.neighborhoods.iter(), &task.semantic)? {
            Some((id, t)) if t <= threshold => {
                self.neighborhoods[id].insert(task)?;
                AssignmentOutcome { kind: AssignmentKind::JoinedExisting, group_id: id, trial_delta: t }
            }
            best => {
                let id = self.neighborhoods.len();
                self.neighborhoods.push(TaskSet::singleton(id, task)?);
                AssignmentOutcome {
                    kind: AssignmentKind::CreatedNew,
                    group_id: id,
                    trial_delta: best.map_or(0.0, |(_, t)| t),
                }
            }
        };
        self.neighborhood_of.insert(task.task_id, outcome.group_id);
        Ok(outcome)
    }

    /// Assigns `task` to a semantic group with threshold R. In scoped mode the
    /// candidates are the groups lying in the task's neighborhood (when it has
    /// one); otherwise every active group is a candidate.
    pub fn assign_task(&mut self, task: &TaskRecord) -> Result<AssignmentOutcome> {
        if self.group_of.contains_key(&task.task_id) {
            return Err(Error::AlreadyAssigned(task.task_id));
        }
        self.remember(task)?;
        let scope = if self.config.scoped { self.neighborhood_of(task.task_id) } else { None };
        let candidates = self.groups.values().filter(|g| match scope {
            None => true,
            Some(n) => g.members.iter().all(|m| self.neighborhood_of.get(m) == Some(&n)),
        });
        let outcome = match closest(candidates, &task.semantic)? {
            Some((id, t)) if t <= self.config.radius => {
                self.groups.get_mut(&id).expect("candidate exists").insert(task)?;
                AssignmentOutcome { kind: AssignmentKind::JoinedExisting, group_id: id, trial_delta: t }
            }
            best => {
                let id = self.fresh_group_id();
                self.groups.insert(id, TaskSet::singleton(id, task)?);
                AssignmentOutcome {
                    kind: AssignmentKind::CreatedNew,
                    group_id: id,
                    trial_delta: best.map_or(0.0, |(_, t)| t),
                }
            }
        };
        self.group_of.insert(task.task_id, outcome.group_id);
        Ok(outcome)
    }

    /// Neighborhood assignment followed by (scoped) group assignment.
    pub fn assign(&mut self, task: &TaskRecord) -> Result<(AssignmentOutcome, AssignmentOutcome)> {
        let n = self.assign_neighborhood(task)?;
        let g = self.assign_task(task)?;
        Ok((n, g))
    }

    /// Places `task` without consulting any threshold: into group
    /// `join` when given and active, otherwise into a fresh group. The
    /// neighborhood mirrors the group choice. Used by the forced baselines.
    pub fn assign_forced(&mut self, task: &TaskRecord, join: Option<usize>) -> Result<AssignmentOutcome> {
        if self.group_of.contains_key(&task.task_id) {
            return Err(Error::AlreadyAssigned(task.task_id));
        }
        self.remember(task)?;
        let outcome = match join.filter(|id| self.groups.contains_key(id)) {
            Some(id) => {
                let g = self.groups.get_mut(&id).expect("checked");
                let t = g.trial_radius(&task.semantic)?;
                g.insert(task)?;
                AssignmentOutcome { kind: AssignmentKind::JoinedExisting, group_id: id, trial_delta: t }
            }
            None => {
                let id = self.fresh_group_id();
                self.groups.insert(id, TaskSet::singleton(id, task)?);
                AssignmentOutcome { kind: AssignmentKind::CreatedNew, group_id: id, trial_delta: 0.0 }
            }
        };
        let nb = match outcome.kind {
            AssignmentKind::JoinedExisting => {
                let any_member = *self.groups[&outcome.group_id].members.iter().next().expect("nonempty");
                let nb = self.neighborhood_of[&any_member];
                self.neighborhoods[nb].insert(task)?;
                nb
            }
            AssignmentKind::CreatedNew => {
                let nb = self.neighborhoods.len();
                self.neighborhoods.push(TaskSet::singleton(nb, task)?);
                nb
            }
        };
        self.neighborhood_of.insert(task.task_id, nb);
        self.group_of.insert(task.task_id, outcome.group_id);
        Ok(outcome)
    }

    fn fresh_group_id(&mut self) -> usize {
        let id = self.next_group_id;
        self.next_group_id += 1;
        id
    }

    /// Ids of active groups whose members all lie in `members`.
    pub fn groups_within(&self, members: &BTreeSet<TaskId>) -> Vec<usize> {
        self.groups
            .values()
            .filter(|g| g.members.is_subset(members))
            .map(|g| g.id)
            .collect()
    }

    /// Replaces the groups `old` with new groups built from `new_sets`.
    /// Members must be conserved; returns the fresh group ids in order.
    pub(crate) fn replace_groups(&mut self, old: &[usize], new_sets: &[BTreeSet<TaskId>]) -> Result<Vec<usize>> {
        let mut before: BTreeSet<TaskId> = BTreeSet::new();
        for id in old {
            let g = self.groups.get(id).ok_or(Error::EmptyGroup)?;
            before.extend(g.members.iter().copied());
        }
        let mut after: BTreeSet<TaskId> = BTreeSet::new();
        let mut total = 0;
        for s in new_sets {
            total += s.len();
            after.extend(s.iter().copied());
        }
        if before != after || total != after.len() || new_sets.iter().any(|s| s.is_empty()) {
            return Err(Error::CoverageMismatch);
        }
        for id in old {
            self.groups.remove(id);
        }
        let mut ids = Vec::with_capacity(new_sets.len());
        for s in new_sets {
            let id = self.fresh_group_id();
            // Members keep stream arrival order inside the rebuilt group.
            let ordered: Vec<TaskId> = self.arrival.iter().copied().filter(|t| s.contains(t)).collect();
            let set = TaskSet::from_members(id, ordered.iter().map(|t| (*t, &self.semantics[t])))?;
            for t in s {
                self.group_of.insert(*t, id);
            }
            self.groups.insert(id, set);
            ids.push(id);
        }
        Ok(ids)
    }

    /// The current grouping of all assigned tasks, in arrival order.
    pub fn partition(&self) -> Partition {
        let labels: Vec<usize> = self.arrival.iter().map(|t| self.group_of[t]).collect();
        Partition::from_labels(&labels)
    }
}

/// Runs the R-threshold assignment rule over `ordered` with no
/// neighborhood scoping and returns the resulting partition of the items
/// (indexed as in `ordered`).
pub fn sequential_grouping(ordered: &[SemanticVector], threshold: f64) -> Result<Partition> {
    let mut stats: Vec<RadiusStats> = Vec::new();
    let mut labels = Vec::with_capacity(ordered.len());
    for s in ordered {
        let mut best: Option<(usize, f64)> = None;
        for (i, g) in stats.iter().enumerate() {
            let t = g.trial_radius(s.as_slice())?;
            if best.map_or(true, |(_, b)| t < b) {
                best = Some((i, t));
            }
        }
        match best {
            Some((i, t)) if t <= threshold => {
                stats[i].push(s.as_slice())?;
                labels.push(i);
            }
            _ => {
                let mut g = RadiusStats::empty(s.dim());
                g.push(s.as_slice())?;
                labels.push(stats.len());
                stats.push(g);
            }
        }
    }
    Ok(Partition::from_labels(&labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rec(id: TaskId, c: &[f64]) -> TaskRecord {
        TaskRecord { task_id: id, semantic: SemanticVector::new(c.to_vec()).unwrap() }
    }

    fn line(xs: &[f64]) -> Vec<SemanticVector> {
        xs.iter().map(|x| SemanticVector::new(vec![*x]).unwrap()).collect()
    }

    fn state() -> GroupingState {
        GroupingState::new(GroupingConfig::default()).unwrap()
    }

    #[test]
    fn first_task_creates_group_zero() {
        let mut s = state();
        let o = s.assign_task(&rec(0, &[1.0, 0.0])).unwrap();
        assert_eq!(o.kind, AssignmentKind::CreatedNew);
        assert_eq!(o.group_id, 0);
        let mut s = state();
        let o = s.assign_neighborhood(&rec(0, &[1.0, 0.0])).unwrap();
        assert_eq!((o.kind, o.group_id), (AssignmentKind::CreatedNew, 0));
    }

    #[test]
    fn orthogonal_task_opens_new_group() {
        let mut s = state();
        s.assign_task(&rec(0, &[1.0, 0.0])).unwrap();
        let o = s.assign_task(&rec(1, &[0.0, 1.0])).unwrap();
        assert_eq!(o.kind, AssignmentKind::CreatedNew);
        assert_eq!(o.group_id, 1);
        assert!((o.trial_delta - 0.707_106_78).abs() < 1e-6);
    }

    #[test]
    fn nearby_task_joins() {
        let mut s = state();
        s.assign_task(&rec(0, &[1.0, 0.0])).unwrap();
        let v = SemanticVector::normalized(vec![0.995, 0.0999]).unwrap();
        let o = s.assign_task(&TaskRecord { task_id: 1, semantic: v }).unwrap();
        assert_eq!(o.kind, AssignmentKind::JoinedExisting);
        assert_eq!(o.group_id, 0);
        assert!((o.trial_delta - 0.0500).abs() < 1e-4, "{}", o.trial_delta);
    }

    #[test]
    fn neighborhood_threshold_uses_gamma() {
        let mut s = state();
        s.assign_neighborhood(&rec(0, &[1.0, 0.0])).unwrap();
        let o = s.assign_neighborhood(&rec(1, &[0.0, 1.0])).unwrap();
        // 0.70711 > γR = 0.6
        assert_eq!(o.kind, AssignmentKind::CreatedNew);
    }

    #[test]
    fn duplicate_joins_with_shrunken_delta() {
        let mut s = state();
        s.assign_neighborhood(&rec(0, &[1.0, 0.0])).unwrap();
        s.assign_neighborhood(&rec(1, &[0.8, 0.6])).unwrap();
        let before = s.neighborhood(0).unwrap().radius();
        let o = s.assign_neighborhood(&rec(2, &[0.8, 0.6])).unwrap();
        assert_eq!(o.kind, AssignmentKind::JoinedExisting);
        // Multiset {a, b, b}: δ² = 2/9 ‖a − b‖², previous δ² = 1/4 ‖a − b‖².
        let expected = before * libm::sqrt(8.0 / 9.0);
        assert!((o.trial_delta - expected).abs() < 1e-12);
        assert!(o.trial_delta <= before);
    }

    #[test]
    fn already_assigned_is_an_error() {
        let mut s = state();
        s.assign(&rec(0, &[1.0, 0.0])).unwrap();
        assert_eq!(s.assign_task(&rec(0, &[1.0, 0.0])), Err(Error::AlreadyAssigned(0)));
        assert_eq!(s.assign_neighborhood(&rec(0, &[1.0, 0.0])), Err(Error::AlreadyAssigned(0)));
    }

    #[test]
    fn sequential_grouping_examples() {
        assert_eq!(sequential_grouping(&line(&[0.3]), 0.42).unwrap().num_clusters(), 1);
        let p = sequential_grouping(&line(&[0.0, 1.0, 0.5]), 0.42).unwrap();
        assert_eq!(p.labels(), &[0, 1, 0]);
        let p = sequential_grouping(&line(&[0.0, 0.5, 1.0]), 0.42).unwrap();
        assert_eq!(p.num_clusters(), 1);
    }

    #[test]
    fn scoped_assignment_keeps_groups_nested() {
        let cfg = GroupingConfig { radius: 0.42, gamma: 1.5, ..GroupingConfig::default() };
        let mut s = GroupingState::new(cfg).unwrap();
        for (i, x) in [0.0, 1.0, 0.5, 3.0, 3.2].iter().enumerate() {
            s.assign(&rec(i, &[*x])).unwrap();
        }
        for g in s.groups() {
            let ns: BTreeSet<usize> = g.members().iter().map(|t| s.neighborhood_of(*t).unwrap()).collect();
            assert_eq!(ns.len(), 1);
        }
    }

    #[test]
    fn config_validation() {
        let bad = GroupingConfig { gamma: 1.0, ..GroupingConfig::default() };
        assert!(GroupingState::new(bad).is_err());
        let bad = GroupingConfig { radius: 0.0, ..GroupingConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn replace_groups_checks_conservation() {
        let mut s = state();
        for (i, x) in [0.0, 1.0].iter().enumerate() {
            s.assign(&rec(i, &[*x])).unwrap();
        }
        assert_eq!(s.group_count(), 2);
        assert_eq!(
            s.replace_groups(&[0, 1], &[BTreeSet::from([0])]),
            Err(Error::CoverageMismatch)
        );
        let ids = s.replace_groups(&[0, 1], &[BTreeSet::from([0, 1])]).unwrap();
        assert_eq!(ids, vec![2]);
        assert_eq!(s.group_of(1), Some(2));
    }
}
