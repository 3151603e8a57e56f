//! Group models (prompt + key), the shared classifier, group-conditioned
//! tuning, key-matched inference and the prompting policies.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, TaskId};
use crate::learner::{softmax_in_place, KeyDistance, TaskDataset, ToyBackbone, WarmupPrompt};
use crate::rng::rng_from;

/// Prompt and key of one (prospective) semantic group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupModel {
    pub prompt: WarmupPrompt,
    pub key: Vec<f64>,
    pub trained_on: BTreeSet<TaskId>,
}

impl GroupModel {
    pub fn new(prompt: WarmupPrompt, key: Vec<f64>) -> Result<Self> {
        if prompt.dim() != key.len() {
            return Err(Error::DimensionMismatch { expected: prompt.dim(), found: key.len() });
        }
        if key.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { prompt, key, trained_on: BTreeSet::new() })
    }

    /// Fresh model: N(0, std²) prompt, key at the mean backbone feature of
    /// `dataset`.
    pub fn scratch<R: Rng + ?Sized>(
        dataset: &TaskDataset,
        backbone: &ToyBackbone,
        tokens: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let d = backbone.feature_dim();
        let prompt = WarmupPrompt::random(tokens, d, std, rng);
        let mut key = vec![0.0; d];
        let n = dataset.len() as f64;
        for f in dataset.features(backbone)? {
            key.iter_mut().zip(&f).for_each(|(k, x)| *k += x / n);
        }
        Self::new(prompt, key)
    }
}

/// Linear softmax classifier over prompted features whose rows are added
/// as new labels appear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedClassifier {
    dim: usize,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    /// label -> row
    classes: BTreeMap<usize, usize>,
}

impl SharedClassifier {
    pub fn new(dim: usize) -> Self {
        Self { dim, weights: Vec::new(), bias: Vec::new(), classes: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn register(&mut self, label: usize) -> usize {
        if let Some(&r) = self.classes.get(&label) {
            return r;
        }
        let r = self.weights.len();
        self.weights.push(vec![0.0; self.dim]);
        self.bias.push(0.0);
        self.classes.insert(label, r);
        r
    }

    pub fn row(&self, label: usize) -> Option<usize> {
        self.classes.get(&label).copied()
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.classes.keys().copied()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn logit(&self, row: usize, feature: &[f64]) -> f64 {
        dot(&self.weights[row], feature) + self.bias[row]
    }

    /// Argmax over registered classes; ties go to the lowest label.
    pub fn predict(&self, feature: &[f64]) -> Result<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (&label, &row) in &self.classes {
            let l = self.logit(row, feature);
            if best.map_or(true, |(_, b)| l > b) {
                best = Some((label, l));
            }
        }
        best.map(|(l, _)| l).ok_or(Error::EmptyModels)
    }
}

/// Which classifier rows take part in the softmax while tuning on a task.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassMask {
    /// Only the current task's classes.
    #[default]
    Task,
    /// Every class registered so far.
    Seen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub lambda_key: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub distance: KeyDistance,
    pub mask: ClassMask,
    pub prompt_tokens: usize,
    pub init_std: f64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.05,
            lambda_key: 0.1,
            batch_size: 32,
            seed: 0,
            distance: KeyDistance::SquaredEuclidean,
            mask: ClassMask::Task,
            prompt_tokens: 4,
            init_std: 0.02,
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("tuning learning_rate must be > 0".into()));
        }
        if !(self.lambda_key.is_finite() && self.lambda_key >= 0.0) {
            return Err(Error::InvalidConfig("tuning lambda_key must be >= 0".into()));
        }
        if self.batch_size == 0 || self.prompt_tokens == 0 {
            return Err(Error::InvalidConfig("batch_size and prompt_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

/// Gradient of the tuning loss for one sampled model on one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct TuningGradient {
    /// Per-token prompt gradient (identical across tokens).
    pub prompt_token: Vec<f64>,
    pub key: Vec<f64>,
    /// Indexed by classifier row; rows outside the mask stay zero.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Tuning loss on a batch of `(feature, label)`:
/// `mean CE(W(f + avgpool(P)) + b over masked rows) + λ · mean d(f, key)`.
/// `rows` are the classifier rows allowed in the softmax; every label must
/// map to one of them.
pub fn tuning_loss_and_gradient(
    model: &GroupModel,
    classifier: &SharedClassifier,
    rows: &[usize],
    batch: &[(&[f64], usize)],
    lambda: f64,
    distance: KeyDistance,
) -> Result<(f64, TuningGradient)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = classifier.dim();
    let h = model.prompt.avgpool();
    let n = batch.len() as f64;
    let mut g = TuningGradient {
        prompt_token: vec![0.0; d],
        key: vec![0.0; d],
        weights: vec![vec![0.0; d]; classifier.num_classes()],
        bias: vec![0.0; classifier.num_classes()],
    };
    let mut g_h = vec![0.0; d];
    let mut loss = 0.0;
    let mut shifted = vec![0.0; d];
    let mut logits = vec![0.0; rows.len()];
    for (f, label) in batch {
        if f.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: f.len() });
        }
        let target_row = classifier.row(*label).ok_or(Error::UnknownLabel(*label))?;
        let t = rows.iter().position(|r| *r == target_row).ok_or(Error::UnknownLabel(*label))?;
        shifted.iter_mut().zip(*f).zip(&h).for_each(|((s, a), b)| *s = a + b);
        for (l, r) in logits.iter_mut().zip(rows) {
            *l = classifier.logit(*r, &shifted);
        }
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + libm::log(logits.iter().map(|l| libm::exp(l - m)).sum::<f64>());
        loss += (lse - logits[t]) / n;
        softmax_in_place(&mut logits);
        logits[t] -= 1.0;
        for (resid, &r) in logits.iter().zip(rows) {
            let resid = resid / n;
            g.weights[r].iter_mut().zip(&shifted).for_each(|(gw, s)| *gw += resid * s);
            g.bias[r] += resid;
            g_h.iter_mut().zip(&classifier.weights[r]).for_each(|(gh, w)| *gh += resid * w);
        }
        if lambda != 0.0 {
            loss += lambda * distance.eval(f, &model.key) / n;
            distance.add_key_gradient(f, &model.key, lambda / n, &mut g.key);
        }
    }
    let p = model.prompt.num_tokens() as f64;
    g.prompt_token = g_h.iter().map(|v| v / p).collect();
    Ok((loss, g))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningTrace {
    /// Loss of every step, before the update.
    pub losses: Vec<f64>,
    /// Index into theta of the model sampled at every step.
    pub sampled: Vec<usize>,
}

/// Tunes the models in `theta` and the classifier on `dataset`. Each step
/// draws one model uniformly from `theta`; every model records `task`.
pub fn tune(
    theta: &mut [&mut GroupModel],
    dataset: &TaskDataset,
    task: TaskId,
    classifier: &mut SharedClassifier,
    backbone: &ToyBackbone,
    config: &TuningConfig,
) -> Result<TuningTrace> {
    if theta.is_empty() {
        return Err(Error::EmptyModels);
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for label in dataset.class_set() {
        classifier.register(*label);
    }
    let rows: Vec<usize> = match config.mask {
        ClassMask::Task => dataset.class_set().iter().map(|l| classifier.row(*l).expect("registered")).collect(),
        ClassMask::Seen => (0..classifier.num_classes()).collect(),
    };
    let features = dataset.features(backbone)?;
    let labels: Vec<usize> = dataset.instances().iter().map(|i| i.y).collect();
    let mut rng = rng_from(config.seed, &[crate::rng::tag::TUNE]);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let lr = config.learning_rate;
    let mut trace = TuningTrace { losses: Vec::new(), sampled: Vec::new() };
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let pick = if theta.len() == 1 { 0 } else { rng.random_range(0..theta.len()) };
            let batch: Vec<(&[f64], usize)> = chunk.iter().map(|&i| (features[i].as_slice(), labels[i])).collect();
            let model = &mut *theta[pick];
            let (loss, g) = tuning_loss_and_gradient(model, classifier, &rows, &batch, config.lambda_key, config.distance)?;
            model.prompt.step_pooled(lr, &g.prompt_token);
            model.key.iter_mut().zip(&g.key).for_each(|(k, gk)| *k -= lr * gk);
            for &r in &rows {
                classifier.weights[r].iter_mut().zip(&g.weights[r]).for_each(|(w, gw)| *w -= lr * gw);
                classifier.bias[r] -= lr * g.bias[r];
            }
            trace.losses.push(loss);
            trace.sampled.push(pick);
        }
    }
    for m in theta.iter_mut() {
        m.trained_on.insert(task);
    }
    Ok(trace)
}

/// Index of the model whose key is nearest `feature`; ties go to the
/// lowest index.
pub fn infer_group(models: &[&GroupModel], feature: &[f64], distance: KeyDistance) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, m) in models.iter().enumerate() {
        let d = distance.eval(feature, &m.key);
        if best.map_or(true, |(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::EmptyModels)
}

/// Routes `x` to the nearest active key and classifies the prompted feature.
pub fn predict(
    x: &[f64],
    models: &[&GroupModel],
    classifier: &SharedClassifier,
    backbone: &ToyBackbone,
    distance: KeyDistance,
) -> Result<usize> {
    if models.is_empty() {
        return Err(Error::NoActiveGroups);
    }
    let mut f = backbone.feature(x)?;
    let i = infer_group(models, &f, distance)?;
    f.iter_mut().zip(models[i].prompt.avgpool()).for_each(|(a, b)| *a += b);
    classifier.predict(&f)
}

/// Componentwise mean of prompts and keys; `trained_on` is the union.
pub fn avg_merge(models: &[&GroupModel]) -> Result<GroupModel> {
    let first = models.first().ok_or(Error::EmptyModels)?;
    let n = models.len() as f64;
    let (p, d) = (first.prompt.num_tokens(), first.prompt.dim());
    let mut tokens = vec![vec![0.0; d]; p];
    let mut key = vec![0.0; d];
    let mut trained_on = BTreeSet::new();
    for m in models {
        if m.prompt.num_tokens() != p || m.prompt.dim() != d {
            return Err(Error::DimensionMismatch { expected: p * d, found: m.prompt.num_tokens() * m.prompt.dim() });
        }
        for (acc, t) in tokens.iter_mut().zip(m.prompt.tokens()) {
            acc.iter_mut().zip(t).for_each(|(a, b)| *a += b / n);
        }
        key.iter_mut().zip(&m.key).for_each(|(a, b)| *a += b / n);
        trained_on.extend(m.trained_on.iter().copied());
    }
    let mut merged = GroupModel::new(WarmupPrompt::new(tokens)?, key)?;
    merged.trained_on = trained_on;
    Ok(merged)
}

/// Prompting policies compared by the experiment runner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Universal,
    Specific,
    Adaptive,
    NoRefine,
    AvgMerge,
}

impl Policy {
    pub const ALL: [Policy; 5] = [Policy::Universal, Policy::Specific, Policy::Adaptive, Policy::NoRefine, Policy::AvgMerge];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Universal => "universal",
            Policy::Specific => "specific",
            Policy::Adaptive => "adaptive",
            Policy::NoRefine => "no_refine",
            Policy::AvgMerge => "avg_merge",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s || p.name().replace('_', "-") == s)
            .ok_or_else(|| Error::UnknownPolicy(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    /// Every task joins one group.
    Single,
    /// Every task opens its own group.
    PerTask,
    /// The radius-threshold rule.
    Threshold,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    Off,
    /// Bind refined groups to repository models.
    Retrieve,
    /// Build refined group models by averaging the replaced groups' models.
    Average,
}

/// What a policy does at each stage of the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub policy: Policy,
    pub assignment: AssignmentMode,
    pub refine: RefineMode,
    /// Maintain the prospective repository.
    pub prospective: bool,
}

pub fn make_baseline(policy: Policy) -> PolicySpec {
    let (assignment, refine, prospective) = match policy {
        Policy::Universal => (AssignmentMode::Single, RefineMode::Off, false),
        Policy::Specific => (AssignmentMode::PerTask, RefineMode::Off, false),
        Policy::NoRefine => (AssignmentMode::Threshold, RefineMode::Off, false),
        Policy::Adaptive => (AssignmentMode::Threshold, RefineMode::Retrieve, true),
        Policy::AvgMerge => (AssignmentMode::Threshold, RefineMode::Average, true),
    };
    PolicySpec { policy, assignment, refine, prospective }
}

/// Parses a policy name, for callers holding strings.
pub fn parse_policy(name: &str) -> Result<PolicySpec> {
    Ok(make_baseline(name.parse()?))
}
