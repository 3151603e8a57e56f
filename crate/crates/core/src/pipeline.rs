//! End-to-end driver: warm-up, assignment, prospective collection,
//! refinement, tuning and evaluation for every task of a stream.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Partition, SemanticVector, TaskId};
use crate::grouping::{AssignmentKind, GroupingConfig, GroupingState, TaskRecord};
use crate::learner::{extract_semantic, warmup_train, KeyDistance, TaskDataset, ToyBackbone, WarmupConfig, WarmupPrompt};
use crate::metrics::{
    adjusted_rand_index, forgetting, grouping_objective, last_accuracy, normalized_mutual_information, AccuracyMatrix,
    ForgettingMode,
};
use crate::models::{
    avg_merge, make_baseline, predict, tune, AssignmentMode, GroupModel, Policy, PolicySpec, RefineMode,
    SharedClassifier, TuningConfig,
};
use crate::prospective::{collect_prospective, MemberSet, ProspectiveRepository};
use crate::refinement::{refine_neighborhood, RefinementResult};
use crate::rng::{derive_seed, rng_from, tag};
use crate::scenarios::ScenarioTask;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grouping: GroupingConfig,
    pub warmup: WarmupConfig,
    pub tuning: TuningConfig,
    pub forgetting: ForgettingMode,
    pub repository_cap: Option<usize>,
    /// Group penalty of the diagnostic grouping objective.
    pub objective_alpha: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.grouping.validate()?;
        self.warmup.validate()?;
        self.tuning.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub policy: Policy,
    pub seed: u64,
    pub final_group_count: usize,
    pub ari: Option<f64>,
    pub nmi: Option<f64>,
    pub a_last: f64,
    pub f_last: f64,
    /// Active group count after each task.
    pub group_trace: Vec<usize>,
    /// Final group label per task (canonical).
    pub final_partition: Vec<usize>,
    pub refinements: usize,
    pub objective: f64,
    pub accuracy: AccuracyMatrix,
    pub repository_size: usize,
    pub config: ExperimentConfig,
}

/// What the observer sees after each task.
pub struct TaskSnapshot<'a> {
    pub task: TaskId,
    pub state: &'a GroupingState,
    pub refinement: Option<&'a RefinementResult>,
    /// Task ids covered by the refined neighborhood's groups before and
    /// after refinement (one entry per group membership).
    pub refined_members: Option<(Vec<TaskId>, Vec<TaskId>)>,
    /// Whether the policy promises the radius bounds (forced ones don't).
    pub radius_bounded: bool,
}

pub type Observer<'o> = &'o mut dyn FnMut(&TaskSnapshot<'_>);

/// Group models: owned per group id, or kept in the repository under the
/// group's member set.
enum ModelStore {
    PerGroup(BTreeMap<usize, GroupModel>),
    Repository,
}

/// Builds fresh models. A set's salt depends only on its members, except
/// that `{current}` uses 0, so every policy draws the same model for a new
/// singleton group.
struct Scratch<'a> {
    seed: u64,
    tokens: usize,
    std: f64,
    dim: usize,
    warm_keys: &'a BTreeMap<TaskId, Vec<f64>>,
}

impl Scratch<'_> {
    fn model(&self, set: &MemberSet, current: TaskId) -> Result<GroupModel> {
        let salt = if set.len() == 1 && set.contains(&current) {
            0
        } else {
            1 + derive_seed(0, &set.iter().map(|t| *t as u64).collect::<Vec<_>>())
        };
        let mut rng = rng_from(self.seed, &[tag::MODEL_INIT, current as u64, salt]);
        let prompt = WarmupPrompt::random(self.tokens, self.dim, self.std, &mut rng);
        let mut key = vec![0.0; self.dim];
        for t in set {
            let k = self.warm_keys.get(t).ok_or(Error::UnknownTask(*t))?;
            key.iter_mut().zip(k).for_each(|(a, b)| *a += b / set.len() as f64);
        }
        GroupModel::new(prompt, key)
    }
}

struct Run<'a> {
    spec: PolicySpec,
    cfg: &'a ExperimentConfig,
    seed: u64,
    backbone: &'a ToyBackbone,
    state: GroupingState,
    repo: ProspectiveRepository,
    store: ModelStore,
    classifier: SharedClassifier,
    /// Warm-up key per task, used as the key of models built for old tasks.
    warm_keys: BTreeMap<TaskId, Vec<f64>>,
}

impl Run<'_> {
    fn scratch(&self) -> Scratch<'_> {
        Scratch {
            seed: self.seed,
            tokens: self.cfg.tuning.prompt_tokens,
            std: self.cfg.tuning.init_std,
            dim: self.backbone.feature_dim(),
            warm_keys: &self.warm_keys,
        }
    }

    fn active_models(&self) -> Vec<&GroupModel> {
        match &self.store {
            ModelStore::PerGroup(m) => self.state.groups().map(|g| &m[&g.id]).collect(),
            ModelStore::Repository => self
                .state
                .groups()
                .map(|g| &self.repo.get(g.members()).expect("active group has an entry").model)
                .collect(),
        }
    }

    fn assign(&mut self, task: TaskId, semantic: SemanticVector) -> Result<(usize, AssignmentKind)> {
        let rec = TaskRecord { task_id: task, semantic };
        let out = match self.spec.assignment {
            AssignmentMode::Single => {
                let first = self.state.groups().next().map(|g| g.id);
                self.state.assign_forced(&rec, first)?
            }
            AssignmentMode::PerTask => self.state.assign_forced(&rec, None)?,
            AssignmentMode::Threshold => self.state.assign(&rec)?.1,
        };
        Ok((out.group_id, out.kind))
    }

    fn covered(&self, ids: &[TaskId]) -> Vec<TaskId> {
        let set: MemberSet = ids.iter().copied().collect();
        let mut all: Vec<TaskId> = self
            .state
            .groups_within(&set)
            .iter()
            .flat_map(|g| self.state.group(*g).expect("active").members().iter().copied())
            .collect();
        all.sort_unstable();
        all
    }

    /// Prospective collection and refinement on the task's neighborhood.
    fn collect_and_refine(&mut self, task: TaskId) -> Result<(Option<RefinementResult>, Option<(Vec<TaskId>, Vec<TaskId>)>)> {
        let nb = self.state.neighborhood_of(task).expect("assigned");
        let ids: Vec<TaskId> = self.state.neighborhood(nb).expect("exists").arrival_order().to_vec();
        let members: Vec<(TaskId, SemanticVector)> =
            ids.iter().map(|t| (*t, self.state.semantic(*t).expect("known").clone())).collect();
        let mut rng = rng_from(self.seed, &[tag::PROSPECTIVE, task as u64]);
        {
            let scratch = Scratch {
                seed: self.seed,
                tokens: self.cfg.tuning.prompt_tokens,
                std: self.cfg.tuning.init_std,
                dim: self.backbone.feature_dim(),
                warm_keys: &self.warm_keys,
            };
            let mut make = |set: &MemberSet| scratch.model(set, task);
            collect_prospective(&members, nb, &mut self.repo, task, &self.cfg.grouping, &mut rng, &mut make)?;
        }
        if self.spec.refine == RefineMode::Off {
            return Ok((None, None));
        }
        let old_models: Vec<(MemberSet, GroupModel)> = match &self.store {
            ModelStore::PerGroup(m) => self
                .state
                .groups_within(&ids.iter().copied().collect())
                .iter()
                .map(|g| (self.state.group(*g).expect("active").members().clone(), m[g].clone()))
                .collect(),
            ModelStore::Repository => Vec::new(),
        };
        let before = self.covered(&ids);
        let mut rng = rng_from(self.seed, &[tag::REFINE, task as u64]);
        let r = refine_neighborhood(&mut self.state, nb, &self.repo, &mut rng)?;
        if !r.performed {
            return Ok((Some(r), None));
        }
        if let ModelStore::PerGroup(models) = &mut self.store {
            models.retain(|id, _| self.state.group(*id).is_some());
            for (id, set) in r.new_group_ids.iter().zip(&r.new_sets) {
                let m = match self.spec.refine {
                    RefineMode::Average => {
                        let parts: Vec<&GroupModel> =
                            old_models.iter().filter(|(s, _)| !s.is_disjoint(set)).map(|(_, m)| m).collect();
                        avg_merge(&parts)?
                    }
                    _ => {
                        self.repo
                            .get(set)
                            .ok_or_else(|| Error::MissingRepositoryEntry(set.iter().copied().collect()))?
                            .model
                            .clone()
                    }
                };
                models.insert(*id, m);
            }
        }
        let after = self.covered(&ids);
        Ok((Some(r), Some((before, after))))
    }

    fn step(&mut self, task: TaskId, data: &ScenarioTask, observer: &mut Option<Observer<'_>>) -> Result<bool> {
        let train = &data.train;
        let warm_cfg = WarmupConfig { seed: derive_seed(self.seed, &[tag::WARMUP, task as u64]), ..self.cfg.warmup.clone() };
        let warm = warmup_train(train, self.backbone, &warm_cfg)?;
        let semantic = extract_semantic(&warm.prompt)?;
        self.warm_keys.insert(task, warm.key);

        let (group, kind) = self.assign(task, semantic)?;
        if kind == AssignmentKind::CreatedNew && matches!(self.store, ModelStore::PerGroup(_)) {
            let m = self.scratch().model(&BTreeSet::from([task]), task)?;
            if let ModelStore::PerGroup(models) = &mut self.store {
                models.insert(group, m);
            }
        }

        let (refinement, refined_members) =
            if self.spec.prospective { self.collect_and_refine(task)? } else { (None, None) };
        let group = self.state.group_of(task).unwrap_or(group);
        let active_set = self.state.group(group).expect("active").members().clone();

        let tune_cfg =
            TuningConfig { seed: derive_seed(self.seed, &[tag::TUNE, task as u64]), ..self.cfg.tuning.clone() };
        match &mut self.store {
            ModelStore::PerGroup(models) => {
                let m = models.get_mut(&group).expect("group model");
                tune(&mut [m], train, task, &mut self.classifier, self.backbone, &tune_cfg)?;
            }
            ModelStore::Repository => {
                if !self.repo.contains(&active_set) {
                    let nb = self.state.neighborhood_of(task).expect("assigned");
                    let scratch = Scratch {
                        seed: self.seed,
                        tokens: self.cfg.tuning.prompt_tokens,
                        std: self.cfg.tuning.init_std,
                        dim: self.backbone.feature_dim(),
                        warm_keys: &self.warm_keys,
                    };
                    let mut make = |set: &MemberSet| scratch.model(set, task);
                    self.repo.insert_with_lineage(active_set.clone(), nb, task, &mut make)?;
                }
                let entry = self.repo.get_mut(&active_set).expect("entry");
                tune(&mut [&mut entry.model], train, task, &mut self.classifier, self.backbone, &tune_cfg)?;
                // Other prospective sets holding this task adapt to it
                // against a frozen copy of the classifier.
                let others: Vec<MemberSet> =
                    self.repo.containing(task).into_iter().filter(|s| *s != active_set).collect();
                for (i, set) in others.iter().enumerate() {
                    let mut frozen = self.classifier.clone();
                    let side = TuningConfig {
                        seed: derive_seed(self.seed, &[tag::SIDE_TUNE, task as u64, i as u64]),
                        ..self.cfg.tuning.clone()
                    };
                    let e = self.repo.get_mut(set).expect("listed");
                    tune(&mut [&mut e.model], train, task, &mut frozen, self.backbone, &side)?;
                }
            }
        }

        if let Some(obs) = observer.as_mut() {
            obs(&TaskSnapshot {
                task,
                state: &self.state,
                refinement: refinement.as_ref(),
                refined_members,
                radius_bounded: self.spec.assignment == AssignmentMode::Threshold,
            });
        }
        Ok(refinement.is_some_and(|r| r.performed))
    }

    fn accuracy(&self, test: &TaskDataset, distance: KeyDistance) -> Result<f64> {
        let models = self.active_models();
        let mut correct = 0usize;
        for inst in test.instances() {
            if predict(&inst.x, &models, &self.classifier, self.backbone, distance)? == inst.y {
                correct += 1;
            }
        }
        Ok(correct as f64 / test.len() as f64)
    }
}

/// Runs `policy` over `tasks`. `truth` is only read at the end, to score the
/// final grouping.
pub fn run_experiment(
    tasks: &[ScenarioTask],
    truth: Option<&[usize]>,
    backbone: &ToyBackbone,
    policy: Policy,
    config: &ExperimentConfig,
    seed: u64,
    mut observer: Option<Observer<'_>>,
) -> Result<ExperimentReport> {
    config.validate()?;
    if tasks.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(t) = truth {
        if t.len() != tasks.len() {
            return Err(Error::LengthMismatch { left: t.len(), right: tasks.len() });
        }
    }
    let spec = make_baseline(policy);
    let mut run = Run {
        spec,
        cfg: config,
        seed,
        backbone,
        state: GroupingState::new(config.grouping.clone())?,
        repo: ProspectiveRepository::with_cap(config.repository_cap),
        store: if spec.refine == RefineMode::Retrieve {
            ModelStore::Repository
        } else {
            ModelStore::PerGroup(BTreeMap::new())
        },
        classifier: SharedClassifier::new(backbone.feature_dim()),
        warm_keys: BTreeMap::new(),
    };
    let mut accuracy = AccuracyMatrix::new();
    let mut group_trace = Vec::with_capacity(tasks.len());
    let mut refinements = 0;
    for (t, data) in tasks.iter().enumerate() {
        let refined = run.step(t, data, &mut observer).map_err(|e| e.at_task(t))?;
        refinements += usize::from(refined);
        group_trace.push(run.state.group_count());
        let row = tasks[..=t]
            .iter()
            .map(|d| run.accuracy(&d.test, config.tuning.distance))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.at_task(t))?;
        accuracy.push_row(row)?;
    }
    let partition = run.state.partition();
    let (ari, nmi) = match truth {
        Some(t) => {
            let truth = Partition::from_labels(t);
            (Some(adjusted_rand_index(&partition, &truth)?), Some(normalized_mutual_information(&partition, &truth)?))
        }
        None => (None, None),
    };
    let semantics: Vec<SemanticVector> =
        run.state.tasks().iter().map(|t| run.state.semantic(*t).expect("known").clone()).collect();
    let objective = grouping_objective(&partition, &semantics, config.objective_alpha)?;
    Ok(ExperimentReport {
        policy,
        seed,
        final_group_count: run.state.group_count(),
        ari,
        nmi,
        a_last: last_accuracy(&accuracy),
        f_last: forgetting(&accuracy, config.forgetting),
        group_trace,
        final_partition: partition.labels().to_vec(),
        refinements,
        objective,
        accuracy,
        repository_size: run.repo.len(),
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{generate, Regime, ScenarioConfig};

    fn small(regime: Regime) -> ScenarioConfig {
        ScenarioConfig { regime, instances_per_class: 20, ..ScenarioConfig::default() }
    }

    fn quick() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.tuning.epochs = 3;
        c.grouping.r_iters = 20;
        c
    }

    #[test]
    fn forced_policies_fix_group_counts() {
        let cfg = small(Regime::Recurrence { semantics: 3, recurrences: 2, adversarial: false });
        let s = generate(&cfg).unwrap();
        let b = cfg.backbone().unwrap();
        let u = run_experiment(&s.tasks, Some(&s.true_semantic), &b, Policy::Universal, &quick(), 0, None).unwrap();
        assert_eq!(u.final_group_count, 1);
        let sp = run_experiment(&s.tasks, Some(&s.true_semantic), &b, Policy::Specific, &quick(), 0, None).unwrap();
        assert_eq!(sp.final_group_count, 6);
        assert_eq!(sp.accuracy.tasks(), 6);
    }

    #[test]
    fn adaptive_matches_no_refine_without_refinement() {
        let cfg = small(Regime::UniformMild { tasks: 5 });
        let s = generate(&cfg).unwrap();
        let b = cfg.backbone().unwrap();
        let a = run_experiment(&s.tasks, Some(&s.true_semantic), &b, Policy::Adaptive, &quick(), 1, None).unwrap();
        let n = run_experiment(&s.tasks, Some(&s.true_semantic), &b, Policy::NoRefine, &quick(), 1, None).unwrap();
        assert_eq!(a.refinements, 0);
        assert_eq!(a.final_group_count, 1);
        assert_eq!((a.a_last, a.f_last, &a.final_partition, &a.accuracy), (n.a_last, n.f_last, &n.final_partition, &n.accuracy));
    }

    #[test]
    fn run_is_deterministic() {
        let cfg = small(Regime::Recurrence { semantics: 2, recurrences: 3, adversarial: false });
        let s = generate(&cfg).unwrap();
        let b = cfg.backbone().unwrap();
        let a = run_experiment(&s.tasks, Some(&s.true_semantic), &b, Policy::Adaptive, &quick(), 4, None).unwrap();
        let c = run_experiment(&s.tasks, Some(&s.true_semantic), &b, Policy::Adaptive, &quick(), 4, None).unwrap();
        assert_eq!(a, c);
    }
}
