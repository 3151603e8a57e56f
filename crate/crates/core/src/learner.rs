//! Toy backbone, task datasets and warm-up prompt training.
//!
//! The frozen backbone is a linear map with orthonormal columns and a prompt
//! acts on it as an additive shift by its token average. A task's semantic
//! representation is the normalized token average of a briefly trained
//! warm-up prompt.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, norm, SemanticVector};
use crate::rng::rng_from;

/// Frozen feature extractor `f(x) = xᵀ·projection` with an m×d projection
/// whose columns are orthonormal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyBackbone {
    input_dim: usize,
    feature_dim: usize,
    /// Row-major m×d.
    projection: Vec<f64>,
}

impl ToyBackbone {
    pub fn new(input_dim: usize, feature_dim: usize, seed: u64) -> Result<Self> {
        if feature_dim == 0 || input_dim < feature_dim {
            return Err(Error::InvalidConfig(alloc::format!(
                "backbone needs input_dim >= feature_dim > 0, got {input_dim}x{feature_dim}"
            )));
        }
        let mut rng = rng_from(seed, &[0xb4c3]);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        // Gram-Schmidt on random columns, redrawing a column that collapses.
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(feature_dim);
        while cols.len() < feature_dim {
            let mut v: Vec<f64> = (0..input_dim).map(|_| normal.sample(&mut rng)).collect();
            for _ in 0..2 {
                for c in &cols {
                    let p = dot(&v, c);
                    v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
                }
            }
            let n = norm(&v);
            if n > 1e-8 {
                v.iter_mut().for_each(|a| *a /= n);
                cols.push(v);
            }
        }
        let mut projection = vec![0.0; input_dim * feature_dim];
        for (j, c) in cols.iter().enumerate() {
            for (i, x) in c.iter().enumerate() {
                projection[i * feature_dim + j] = *x;
            }
        }
        Ok(Self { input_dim, feature_dim, projection })
    }

    /// The identity map on `dim` coordinates.
    pub fn identity(dim: usize) -> Self {
        let mut projection = vec![0.0; dim * dim];
        for i in 0..dim {
            projection[i * dim + i] = 1.0;
        }
        Self { input_dim: dim, feature_dim: dim, projection }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Column `j` of the projection.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.input_dim).map(|i| self.projection[i * self.feature_dim + j]).collect()
    }

    pub fn feature(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, found: x.len() });
        }
        let d = self.feature_dim;
        let mut f = vec![0.0; d];
        for (i, xi) in x.iter().enumerate() {
            let row = &self.projection[i * d..(i + 1) * d];
            f.iter_mut().zip(row).for_each(|(a, p)| *a += xi * p);
        }
        Ok(f)
    }

    /// Lifts a feature-space point `z` to an input `x` with `f(x) = z`,
    /// adding the part of `nuisance` orthogonal to the column space.
    pub fn embed(&self, z: &[f64], nuisance: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.feature_dim {
            return Err(Error::DimensionMismatch { expected: self.feature_dim, found: z.len() });
        }
        let coeff = self.feature(nuisance)?;
        let d = self.feature_dim;
        let mut x = nuisance.to_vec();
        for (i, xi) in x.iter_mut().enumerate() {
            let row = &self.projection[i * d..(i + 1) * d];
            *xi += row.iter().zip(z).zip(&coeff).map(|((p, zj), cj)| p * (zj - cj)).sum::<f64>();
        }
        Ok(x)
    }
}

pub fn backbone_feature(backbone: &ToyBackbone, x: &[f64]) -> Result<Vec<f64>> {
    backbone.feature(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub x: Vec<f64>,
    pub y: usize,
}

/// Labelled instances of one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    instances: Vec<Instance>,
    class_set: BTreeSet<usize>,
}

impl TaskDataset {
    pub fn new(instances: Vec<Instance>) -> Result<Self> {
        let first = instances.first().ok_or(Error::EmptyDataset)?.x.len();
        for inst in &instances {
            if inst.x.len() != first {
                return Err(Error::DimensionMismatch { expected: first, found: inst.x.len() });
            }
            if inst.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        let class_set = instances.iter().map(|i| i.y).collect();
        Ok(Self { instances, class_set })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn class_set(&self) -> &BTreeSet<usize> {
        &self.class_set
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.instances[0].x.len()
    }

    pub fn features(&self, backbone: &ToyBackbone) -> Result<Vec<Vec<f64>>> {
        self.instances.iter().map(|i| backbone.feature(&i.x)).collect()
    }
}

/// A p×d block of prompt tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmupPrompt {
    tokens: Vec<Vec<f64>>,
}

pub type Prompt = WarmupPrompt;

impl WarmupPrompt {
    pub fn new(tokens: Vec<Vec<f64>>) -> Result<Self> {
        let d = tokens.first().ok_or(Error::EmptyDataset)?.len();
        for t in &tokens {
            if t.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: t.len() });
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        Ok(Self { tokens })
    }

    pub fn zeros(tokens: usize, dim: usize) -> Self {
        Self { tokens: vec![vec![0.0; dim]; tokens.max(1)] }
    }

    /// Entries drawn i.i.d. from N(0, std²).
    pub fn random<R: Rng + ?Sized>(tokens: usize, dim: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        let tokens = (0..tokens.max(1)).map(|_| (0..dim).map(|_| normal.sample(rng)).collect()).collect();
        Self { tokens }
    }

    pub fn tokens(&self) -> &[Vec<f64>] {
        &self.tokens
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn dim(&self) -> usize {
        self.tokens[0].len()
    }

    pub fn avgpool(&self) -> Vec<f64> {
        let p = self.tokens.len() as f64;
        let mut h = vec![0.0; self.dim()];
        for t in &self.tokens {
            h.iter_mut().zip(t).for_each(|(a, b)| *a += b);
        }
        h.iter_mut().for_each(|a| *a /= p);
        h
    }

    /// Adds `-lr * g` to every token. The gradient of any function of the
    /// token average is the same for every token, so one vector suffices.
    pub(crate) fn step_pooled(&mut self, lr: f64, grad_per_token: &[f64]) {
        for t in &mut self.tokens {
            t.iter_mut().zip(grad_per_token).for_each(|(a, g)| *a -= lr * g);
        }
    }
}

/// `f(x) + avgpool(P)`.
pub fn prompted_feature(backbone: &ToyBackbone, prompt: &WarmupPrompt, x: &[f64]) -> Result<Vec<f64>> {
    let mut f = backbone.feature(x)?;
    if prompt.dim() != f.len() {
        return Err(Error::DimensionMismatch { expected: f.len(), found: prompt.dim() });
    }
    f.iter_mut().zip(prompt.avgpool()).for_each(|(a, b)| *a += b);
    Ok(f)
}

/// The l2-normalized token average of `prompt`.
pub fn extract_semantic(prompt: &WarmupPrompt) -> Result<SemanticVector> {
    SemanticVector::normalized(prompt.avgpool()).map_err(|e| match e {
        Error::ZeroNorm => Error::DegeneratePrompt,
        e => e,
    })
}

/// Distance between an instance feature and a key.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyDistance {
    #[default]
    SquaredEuclidean,
    Cosine,
}

impl KeyDistance {
    pub fn eval(self, feature: &[f64], key: &[f64]) -> f64 {
        match self {
            KeyDistance::SquaredEuclidean => crate::geometry::squared_distance(feature, key),
            KeyDistance::Cosine => {
                let (nf, nk) = (norm(feature), norm(key));
                if nf == 0.0 || nk == 0.0 {
                    1.0
                } else {
                    1.0 - dot(feature, key) / (nf * nk)
                }
            }
        }
    }

    /// Adds `scale * ∂d/∂key` into `out`.
    pub fn add_key_gradient(self, feature: &[f64], key: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            KeyDistance::SquaredEuclidean => {
                for ((o, k), f) in out.iter_mut().zip(key).zip(feature) {
                    *o += scale * 2.0 * (k - f);
                }
            }
            KeyDistance::Cosine => {
                let (nf, nk) = (norm(feature), norm(key));
                if nf == 0.0 || nk == 0.0 {
                    return;
                }
                let c = dot(feature, key) / (nf * nk);
                for ((o, k), f) in out.iter_mut().zip(key).zip(feature) {
                    *o += scale * (c * k / (nk * nk) - f / (nf * nk));
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmupConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub lambda_key: f64,
    pub seed: u64,
    pub prompt_tokens: usize,
    pub init_std: f64,
    /// The task-local head starts at this multiple of the centered class
    /// means of the backbone features.
    pub head_init_scale: f64,
    pub distance: KeyDistance,
}

impl Default for WarmupConfig {
    fn default() -> Self {
        Self {
            iterations: 150,
            learning_rate: 1.0,
            lambda_key: 0.1,
            seed: 0,
            prompt_tokens: 4,
            init_std: 0.02,
            head_init_scale: 3.0,
            distance: KeyDistance::SquaredEuclidean,
        }
    }
}

impl WarmupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("warmup learning_rate must be > 0".into()));
        }
        if !(self.lambda_key.is_finite() && self.lambda_key >= 0.0) {
            return Err(Error::InvalidConfig("warmup lambda_key must be >= 0".into()));
        }
        if self.prompt_tokens == 0 {
            return Err(Error::InvalidConfig("prompt_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

/// Trainable warm-up parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmupParams {
    pub prompt: WarmupPrompt,
    pub key: Vec<f64>,
    /// Bias-free task-local head, one row per class of the task.
    pub head: Vec<Vec<f64>>,
}

/// Gradient of the warm-up loss, shaped like [`WarmupParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct WarmupGradient {
    pub prompt: Vec<Vec<f64>>,
    pub key: Vec<f64>,
    pub head: Vec<Vec<f64>>,
}

/// Warm-up objective over precomputed backbone features:
/// `mean CE(head·(f + avgpool(P)), y) + λ · mean d(f, key)`.
#[derive(Clone, Debug)]
pub struct WarmupObjective {
    features: Vec<Vec<f64>>,
    targets: Vec<usize>,
    num_classes: usize,
    lambda: f64,
    distance: KeyDistance,
}

pub(crate) fn softmax_in_place(logits: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for l in logits.iter_mut() {
        *l = libm::exp(*l - m);
        z += *l;
    }
    logits.iter_mut().for_each(|l| *l /= z);
}

impl WarmupObjective {
    /// `targets` are task-local class indices in `0..num_classes`.
    pub fn new(
        features: Vec<Vec<f64>>,
        targets: Vec<usize>,
        num_classes: usize,
        lambda: f64,
        distance: KeyDistance,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if features.len() != targets.len() {
            return Err(Error::LengthMismatch { left: features.len(), right: targets.len() });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= num_classes) {
            return Err(Error::UnknownLabel(bad));
        }
        Ok(Self { features, targets, num_classes, lambda, distance })
    }

    pub fn from_dataset(dataset: &TaskDataset, backbone: &ToyBackbone, lambda: f64, distance: KeyDistance) -> Result<Self> {
        let local: BTreeMap<usize, usize> = dataset.class_set().iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let targets = dataset.instances().iter().map(|i| local[&i.y]).collect();
        Self::new(dataset.features(backbone)?, targets, local.len(), lambda, distance)
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn loss(&self, params: &WarmupParams) -> f64 {
        self.loss_and_gradient(params).0
    }

    pub fn loss_and_gradient(&self, params: &WarmupParams) -> (f64, WarmupGradient) {
        let d = params.prompt.dim();
        let n = self.features.len() as f64;
        let h = params.prompt.avgpool();
        let mut g_head = vec![vec![0.0; d]; self.num_classes];
        let mut g_h = vec![0.0; d];
        let mut g_key = vec![0.0; d];
        let mut loss = 0.0;
        let mut shifted = vec![0.0; d];
        let mut logits = vec![0.0; self.num_classes];
        for (f, &y) in self.features.iter().zip(&self.targets) {
            shifted.iter_mut().zip(f).zip(&h).for_each(|((s, a), b)| *s = a + b);
            for (l, w) in logits.iter_mut().zip(&params.head) {
                *l = dot(w, &shifted);
            }
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + libm::log(logits.iter().map(|l| libm::exp(l - m)).sum::<f64>());
            loss += (lse - logits[y]) / n;
            softmax_in_place(&mut logits);
            logits[y] -= 1.0;
            for (c, r) in logits.iter().enumerate() {
                let r = r / n;
                g_head[c].iter_mut().zip(&shifted).for_each(|(g, s)| *g += r * s);
                g_h.iter_mut().zip(&params.head[c]).for_each(|(g, w)| *g += r * w);
            }
            if self.lambda != 0.0 {
                loss += self.lambda * self.distance.eval(f, &params.key) / n;
                self.distance.add_key_gradient(f, &params.key, self.lambda / n, &mut g_key);
            }
        }
        let p = params.prompt.num_tokens() as f64;
        let per_token: Vec<f64> = g_h.iter().map(|g| g / p).collect();
        let prompt = vec![per_token; params.prompt.num_tokens()];
        (loss, WarmupGradient { prompt, key: g_key, head: g_head })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmupOutcome {
    pub prompt: WarmupPrompt,
    pub key: Vec<f64>,
    /// Loss before each step, followed by the final loss.
    pub loss_trace: Vec<f64>,
}

/// Initial parameters: N(0, init_std²) prompt, key at the mean backbone
/// feature and the head at scaled centered class means.
pub fn warmup_init(objective: &WarmupObjective, config: &WarmupConfig) -> WarmupParams {
    let d = objective.features[0].len();
    let mut rng = rng_from(config.seed, &[crate::rng::tag::WARMUP]);
    let prompt = WarmupPrompt::random(config.prompt_tokens, d, config.init_std, &mut rng);
    let n = objective.features.len() as f64;
    let mut key = vec![0.0; d];
    for f in &objective.features {
        key.iter_mut().zip(f).for_each(|(k, x)| *k += x / n);
    }
    let mut means = vec![vec![0.0; d]; objective.num_classes];
    let mut counts = vec![0usize; objective.num_classes];
    for (f, &y) in objective.features.iter().zip(&objective.targets) {
        means[y].iter_mut().zip(f).for_each(|(m, x)| *m += x);
        counts[y] += 1;
    }
    let present: Vec<usize> = (0..objective.num_classes).filter(|c| counts[*c] > 0).collect();
    for c in &present {
        let k = counts[*c] as f64;
        means[*c].iter_mut().for_each(|m| *m /= k);
    }
    let mut grand = vec![0.0; d];
    for c in &present {
        grand.iter_mut().zip(&means[*c]).for_each(|(g, m)| *g += m / present.len() as f64);
    }
    let head = (0..objective.num_classes)
        .map(|c| {
            if counts[c] == 0 {
                return vec![0.0; d];
            }
            means[c].iter().zip(&grand).map(|(m, g)| config.head_init_scale * (m - g)).collect()
        })
        .collect();
    WarmupParams { prompt, key, head }
}

/// Full-batch gradient descent on the warm-up objective.
pub fn warmup_train(dataset: &TaskDataset, backbone: &ToyBackbone, config: &WarmupConfig) -> Result<WarmupOutcome> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let objective = WarmupObjective::from_dataset(dataset, backbone, config.lambda_key, config.distance)?;
    let mut params = warmup_init(&objective, config);
    let lr = config.learning_rate;
    let mut loss_trace = Vec::with_capacity(config.iterations + 1);
    for _ in 0..config.iterations {
        let (loss, g) = objective.loss_and_gradient(&params);
        loss_trace.push(loss);
        params.prompt.step_pooled(lr, &g.prompt[0]);
        params.key.iter_mut().zip(&g.key).for_each(|(k, gk)| *k -= lr * gk);
        for (w, gw) in params.head.iter_mut().zip(&g.head) {
            w.iter_mut().zip(gw).for_each(|(a, b)| *a -= lr * b);
        }
    }
    loss_trace.push(objective.loss(&params));
    if !loss_trace.last().copied().unwrap_or(0.0).is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(WarmupOutcome { prompt: params.prompt, key: params.key, loss_trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn sep_dataset(backbone: &ToyBackbone) -> TaskDataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.2).unwrap();
        let d = backbone.feature_dim();
        let mut inst = Vec::new();
        for c in 0..2usize {
            for _ in 0..20 {
                let mut z: Vec<f64> = (0..d).map(|_| noise.sample(&mut rng)).collect();
                z[0] += if c == 0 { -1.0 } else { 1.0 };
                let x = backbone.embed(&z, &vec![0.0; backbone.input_dim()]).unwrap();
                inst.push(Instance { x, y: c + 10 });
            }
        }
        TaskDataset::new(inst).unwrap()
    }

    #[test]
    fn backbone_examples() {
        let b = ToyBackbone::identity(2);
        assert_eq!(b.feature(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        let b = ToyBackbone::new(32, 16, 9).unwrap();
        assert_eq!(b.feature(&[0.0; 32]).unwrap(), vec![0.0; 16]);
        let x: Vec<f64> = (0..32).map(|i| i as f64 * 0.1).collect();
        assert_eq!(b.feature(&x).unwrap(), b.feature(&x).unwrap());
        assert_eq!(ToyBackbone::new(32, 16, 9).unwrap(), b);
        assert!(matches!(b.feature(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn backbone_columns_orthonormal() {
        let b = ToyBackbone::new(32, 16, 1).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let v = dot(&b.column(i), &b.column(j));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn embed_inverts_feature() {
        let b = ToyBackbone::new(12, 5, 4).unwrap();
        let z = [0.3, -1.0, 2.0, 0.0, 0.5];
        let nu: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let f = b.feature(&b.embed(&z, &nu).unwrap()).unwrap();
        for (a, e) in f.iter().zip(z) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn prompted_feature_examples() {
        let b = ToyBackbone::identity(2);
        let zero = WarmupPrompt::zeros(3, 2);
        assert_eq!(prompted_feature(&b, &zero, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        let p = WarmupPrompt::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(prompted_feature(&b, &p, &[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let s1 = prompted_feature(&b, &p, &[3.0, -1.0]).unwrap();
        assert_eq!([s1[0] - 3.0, s1[1] + 1.0], [0.5, 0.5]);
    }

    #[test]
    fn extract_semantic_examples() {
        let p = WarmupPrompt::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = extract_semantic(&p).unwrap();
        assert!((s.as_slice()[0] - 0.707_106_781_186_547_5).abs() < 1e-12);
        assert!((s.as_slice()[1] - 0.707_106_781_186_547_5).abs() < 1e-12);
        let p = WarmupPrompt::new(vec![vec![2.0, 0.0]]).unwrap();
        assert_eq!(extract_semantic(&p).unwrap().as_slice(), &[1.0, 0.0]);
        assert_eq!(extract_semantic(&WarmupPrompt::zeros(4, 3)), Err(Error::DegeneratePrompt));
    }

    #[test]
    fn zero_iterations_returns_init() {
        let b = ToyBackbone::new(8, 4, 0).unwrap();
        let ds = sep_dataset(&b);
        let cfg = WarmupConfig { iterations: 0, ..WarmupConfig::default() };
        let out = warmup_train(&ds, &b, &cfg).unwrap();
        let obj = WarmupObjective::from_dataset(&ds, &b, cfg.lambda_key, cfg.distance).unwrap();
        let init = warmup_init(&obj, &cfg);
        assert_eq!(out.prompt, init.prompt);
        assert_eq!(out.key, init.key);
        assert_eq!(out.loss_trace.len(), 1);
    }

    #[test]
    fn warmup_is_deterministic_and_decreases_loss() {
        let b = ToyBackbone::new(8, 4, 0).unwrap();
        let ds = sep_dataset(&b);
        let cfg = WarmupConfig { learning_rate: 0.05, ..WarmupConfig::default() };
        let a = warmup_train(&ds, &b, &cfg).unwrap();
        let c = warmup_train(&ds, &b, &cfg).unwrap();
        assert_eq!(a, c);
        assert!(a.loss_trace.last().unwrap() < &a.loss_trace[0]);
        let fast = warmup_train(&ds, &b, &WarmupConfig::default()).unwrap();
        assert!(fast.loss_trace.last().unwrap() < &fast.loss_trace[0]);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert_eq!(TaskDataset::new(Vec::new()), Err(Error::EmptyDataset));
    }

    #[test]
    fn lambda_zero_gives_zero_key_gradient() {
        let b = ToyBackbone::new(8, 4, 0).unwrap();
        let ds = sep_dataset(&b);
        let obj = WarmupObjective::from_dataset(&ds, &b, 0.0, KeyDistance::SquaredEuclidean).unwrap();
        let mut params = warmup_init(&obj, &WarmupConfig::default());
        params.key = vec![5.0, -3.0, 1.0, 0.0];
        let (_, g) = obj.loss_and_gradient(&params);
        assert!(g.key.iter().all(|v| *v == 0.0));
    }

    proptest! {
        #[test]
        fn semantic_is_unit_and_scale_invariant(
            toks in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..5),
            c in 0.01f64..100.0,
        ) {
            let p = WarmupPrompt::new(toks.clone()).unwrap();
            if let Ok(s) = extract_semantic(&p) {
                prop_assert!((s.norm() - 1.0).abs() < 1e-9);
                let scaled = WarmupPrompt::new(toks.iter().map(|t| t.iter().map(|v| v * c).collect()).collect()).unwrap();
                let s2 = extract_semantic(&scaled).unwrap();
                for (a, b) in s.as_slice().iter().zip(s2.as_slice()) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }
}
