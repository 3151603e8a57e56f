//! Seeded synthetic task streams with hidden semantic labels.
//!
//! Every semantic has a unit center. A task's planted direction `u` is its
//! center jittered on the sphere, and its classes come in pairs along `u`
//! at radii `axis_offset ± class_gap`, each pair shifted sideways by a
//! mean-zero offset. Features are sampled in backbone space and lifted to
//! inputs through the backbone.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{avg_distance, dot, norm, squared_distance, Partition, SemanticVector};
use crate::learner::{Instance, TaskDataset, ToyBackbone};
use crate::rng::rng_from;

/// Attempts at drawing a stream that passes its separation certificate.
pub const CERTIFICATE_ATTEMPTS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Regime {
    /// Every task around one center.
    UniformMild { tasks: usize },
    /// One center per task.
    UniformAbrupt { tasks: usize },
    /// `semantics` centers, each occurring `recurrences` times in random
    /// order. The adversarial variant opens every semantic with two
    /// antipodal occurrences so greedy assignment splits it.
    Recurrence { semantics: usize, recurrences: usize, adversarial: bool },
    /// `dissimilar` tasks with their own centers, then `similar` tasks that
    /// mix `overlap_percent`% instances from a shared donor semantic.
    Overlap { dissimilar: usize, similar: usize, overlap_percent: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub regime: Regime,
    pub classes_per_task: usize,
    pub instances_per_class: usize,
    pub input_dim: usize,
    pub feature_dim: usize,
    /// Assignment radius the certificate is checked against.
    pub radius: f64,
    /// Minimum pairwise center distance, as a multiple of `radius`.
    pub separation: f64,
    /// RMS angular jitter of a task direction around its center.
    pub within_spread: f64,
    pub axis_offset: f64,
    pub class_gap: f64,
    /// Length of the sideways offsets between class pairs.
    pub pair_offset: f64,
    pub axial_noise: f64,
    pub lateral_noise: f64,
    /// Noise outside the backbone's column space (input space).
    pub nuisance_noise: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub backbone_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            regime: Regime::Recurrence { semantics: 5, recurrences: 10, adversarial: false },
            classes_per_task: 4,
            instances_per_class: 50,
            input_dim: 32,
            feature_dim: 16,
            radius: 0.4,
            separation: 3.5,
            within_spread: 0.1,
            axis_offset: 2.0,
            class_gap: 1.0,
            pair_offset: 1.0,
            axial_noise: 0.7,
            lateral_noise: 0.1,
            nuisance_noise: 0.1,
            test_fraction: 0.2,
            seed: 0,
            backbone_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        use alloc::format;
        let bad = |m: alloc::string::String| Err(Error::InvalidConfig(m));
        if self.classes_per_task == 0 || self.classes_per_task % 2 != 0 {
            return bad(format!("classes_per_task must be even and positive, got {}", self.classes_per_task));
        }
        if self.instances_per_class < 2 {
            return bad("instances_per_class must be >= 2".into());
        }
        if self.feature_dim < 2 || self.input_dim < self.feature_dim {
            return bad("need input_dim >= feature_dim >= 2".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must lie in (0, 1)".into());
        }
        for (name, v) in [
            ("radius", self.radius),
            ("separation", self.separation),
            ("axis_offset", self.axis_offset),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be > 0"));
            }
        }
        for (name, v) in [
            ("within_spread", self.within_spread),
            ("class_gap", self.class_gap),
            ("pair_offset", self.pair_offset),
            ("axial_noise", self.axial_noise),
            ("lateral_noise", self.lateral_noise),
            ("nuisance_noise", self.nuisance_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be >= 0"));
            }
        }
        match self.regime {
            Regime::UniformMild { tasks } if tasks == 0 => bad("tasks must be >= 1".into()),
            Regime::UniformAbrupt { tasks } if tasks < 2 => bad("uniform_abrupt needs tasks >= 2".into()),
            Regime::Recurrence { semantics, recurrences, adversarial } => {
                if semantics < 2 || recurrences == 0 {
                    bad("recurrence needs semantics >= 2 and recurrences >= 1".into())
                } else if adversarial && recurrences < 2 {
                    bad("adversarial recurrence needs recurrences >= 2".into())
                } else {
                    Ok(())
                }
            }
            Regime::Overlap { overlap_percent, .. } if !(0.0..=100.0).contains(&overlap_percent) => {
                bad("overlap_percent must lie in [0, 100]".into())
            }
            Regime::Overlap { dissimilar, similar, .. } if dissimilar + similar == 0 => {
                bad("overlap needs at least one task".into())
            }
            _ => Ok(()),
        }
    }

    pub fn num_tasks(&self) -> usize {
        match self.regime {
            Regime::UniformMild { tasks } | Regime::UniformAbrupt { tasks } => tasks,
            Regime::Recurrence { semantics, recurrences, .. } => semantics * recurrences,
            Regime::Overlap { dissimilar, similar, .. } => dissimilar + similar,
        }
    }

    pub fn backbone(&self) -> Result<ToyBackbone> {
        ToyBackbone::new(self.input_dim, self.feature_dim, self.backbone_seed)
    }
}

/// Train and held-out splits of one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTask {
    pub train: TaskDataset,
    pub test: TaskDataset,
}

/// Recomputed check that the planted directions are groupable at R.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationCertificate {
    pub radius: f64,
    /// Largest pair δ among tasks of the same semantic (0 if none).
    pub max_same_pair_delta: f64,
    /// Largest δ of a semantic's full task set.
    pub max_group_delta: f64,
    /// Smallest pair δ among tasks of different semantics (∞ if none).
    pub min_cross_pair_delta: f64,
    pub min_center_distance: f64,
    /// Whether same-semantic pairs are required to be within R.
    pub pairwise_same: bool,
    pub holds: bool,
    pub attempts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStream {
    pub tasks: Vec<ScenarioTask>,
    /// Canonical ground-truth semantic label per task.
    pub true_semantic: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Planted unit direction per task.
    pub planted: Vec<Vec<f64>>,
    pub certificate: Option<SeparationCertificate>,
    pub config: ScenarioConfig,
}

impl ScenarioStream {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn truth(&self) -> Partition {
        Partition::from_labels(&self.true_semantic)
    }
}

fn unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Removes the components along the (orthonormal) `basis`.
fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let p = dot(v, b);
        v.iter_mut().zip(b).for_each(|(a, c)| *a -= p * c);
    }
}

/// `count` orthonormal vectors orthogonal to `against`.
fn orthonormal<R: Rng + ?Sized>(d: usize, count: usize, against: &[Vec<f64>], rng: &mut R) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = against.to_vec();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut v = unit(d, rng);
        project_out(&mut v, &basis);
        project_out(&mut v, &basis);
        if norm(&v) > 1e-6 {
            let v = normalize(v);
            basis.push(v.clone());
            out.push(v);
        }
    }
    out
}

/// Unit centers with pairwise distance at least `min_dist`: a randomly
/// rotated regular simplex when it fits, rejection sampling otherwise.
fn draw_centers<R: Rng + ?Sized>(k: usize, d: usize, min_dist: f64, rng: &mut R) -> Option<Vec<Vec<f64>>> {
    if k == 1 {
        return Some(vec![unit(d, rng)]);
    }
    if k <= d + 1 {
        // Vertices e_i − 1/k in R^k span a (k−1)-dim subspace; express them
        // in an orthonormal basis of it and rotate into R^d.
        let verts: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 } - 1.0 / k as f64).collect())
            .collect();
        let mut sub: Vec<Vec<f64>> = Vec::new();
        for v in verts.iter().take(k - 1) {
            let mut w = v.clone();
            project_out(&mut w, &sub);
            project_out(&mut w, &sub);
            sub.push(normalize(w));
        }
        let rot = orthonormal(d, k - 1, &[], rng);
        let centers = verts
            .iter()
            .map(|v| {
                let coords: Vec<f64> = sub.iter().map(|b| dot(v, b)).collect();
                let mut c = vec![0.0; d];
                for (q, a) in rot.iter().zip(&coords) {
                    c.iter_mut().zip(q).for_each(|(x, y)| *x += a * y);
                }
                normalize(c)
            })
            .collect::<Vec<_>>();
        return if min_pair_distance(&centers) >= min_dist { Some(centers) } else { None };
    }
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let min_sq = min_dist * min_dist;
    for _ in 0..k {
        let mut found = None;
        for _ in 0..20_000 {
            let c = unit(d, rng);
            if centers.iter().all(|o| squared_distance(o, &c) >= min_sq) {
                found = Some(c);
                break;
            }
        }
        centers.push(found?);
    }
    Some(centers)
}

fn min_pair_distance(points: &[Vec<f64>]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            m = m.min(libm::sqrt(squared_distance(&points[i], &points[j])));
        }
    }
    m
}

/// Center moved by an RMS tangent Gaussian of size `spread`, renormalized.
fn jitter<R: Rng + ?Sized>(center: &[f64], spread: f64, rng: &mut R) -> Vec<f64> {
    let d = center.len();
    if spread == 0.0 {
        return center.to_vec();
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut g: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
    project_out(&mut g, &[center.to_vec()]);
    let scale = spread / libm::sqrt((d - 1) as f64);
    normalize(center.iter().zip(&g).map(|(c, x)| c + scale * x).collect())
}

/// Class structure shared by every occurrence of a semantic.
#[derive(Clone, Debug)]
struct Profile {
    /// Sideways offset per class pair (mean zero).
    offsets: Vec<Vec<f64>>,
    /// Labels: pair j has labels `labels[2j]` (inner) and `labels[2j+1]`.
    labels: Vec<usize>,
}

fn profile<R: Rng + ?Sized>(cfg: &ScenarioConfig, center: &[f64], next_label: &mut usize, rng: &mut R) -> Profile {
    let pairs = cfg.classes_per_task / 2;
    let d = cfg.feature_dim;
    let mut offsets = if pairs > 1 && d > pairs {
        orthonormal(d, pairs, &[center.to_vec()], rng)
    } else {
        vec![vec![0.0; d]; pairs]
    };
    if pairs > 1 {
        let mut mean = vec![0.0; d];
        for o in &offsets {
            mean.iter_mut().zip(o).for_each(|(m, x)| *m += x / pairs as f64);
        }
        for o in &mut offsets {
            o.iter_mut().zip(&mean).for_each(|(x, m)| *x -= m);
            let n = norm(o);
            if n > 0.0 {
                o.iter_mut().for_each(|x| *x *= cfg.pair_offset / n);
            }
        }
    }
    let labels = (0..cfg.classes_per_task).map(|i| *next_label + i).collect();
    *next_label += cfg.classes_per_task;
    Profile { offsets, labels }
}

/// Samples `count` features of class `(pair, outer)` for direction `u`.
fn sample_class<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    u: &[f64],
    offset: &[f64],
    outer: bool,
    count: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let radius = cfg.axis_offset + if outer { cfg.class_gap } else { -cfg.class_gap };
    (0..count)
        .map(|_| {
            let mut lat: Vec<f64> = (0..u.len()).map(|_| cfg.lateral_noise * std.sample(rng)).collect();
            project_out(&mut lat, &[u.to_vec()]);
            let a = radius + cfg.axial_noise * std.sample(rng);
            u.iter().zip(offset).zip(&lat).map(|((ui, oi), li)| a * ui + oi + li).collect()
        })
        .collect()
}

fn lift<R: Rng + ?Sized>(cfg: &ScenarioConfig, backbone: &ToyBackbone, z: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let nu: Vec<f64> = (0..cfg.input_dim).map(|_| cfg.nuisance_noise * normal.sample(rng)).collect();
    backbone.embed(z, &nu)
}

/// Builds train/test splits: the first `1 − test_fraction` of each class
/// trains, the rest is held out.
fn split(cfg: &ScenarioConfig, per_class: Vec<(usize, Vec<Vec<f64>>)>) -> Result<ScenarioTask> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (y, xs) in per_class {
        let n_test = ((xs.len() as f64 * cfg.test_fraction) as usize).clamp(1, xs.len() - 1);
        let n_train = xs.len() - n_test;
        for (i, x) in xs.into_iter().enumerate() {
            if i < n_train {
                train.push(Instance { x, y });
            } else {
                test.push(Instance { x, y });
            }
        }
    }
    Ok(ScenarioTask { train: TaskDataset::new(train)?, test: TaskDataset::new(test)? })
}

/// Samples a task of `profile` with planted direction `u`, each class with
/// `count` instances.
fn build_task<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    backbone: &ToyBackbone,
    u: &[f64],
    prof: &Profile,
    count: usize,
    rng: &mut R,
) -> Result<Vec<(usize, Vec<Vec<f64>>)>> {
    let mut per_class = Vec::new();
    for (j, off) in prof.offsets.iter().enumerate() {
        for outer in [false, true] {
            let zs = sample_class(cfg, u, off, outer, count, rng);
            let xs = zs.iter().map(|z| lift(cfg, backbone, z, rng)).collect::<Result<Vec<_>>>()?;
            per_class.push((prof.labels[2 * j + usize::from(outer)], xs));
        }
    }
    Ok(per_class)
}

fn certify(cfg: &ScenarioConfig, planted: &[Vec<f64>], labels: &[usize], centers: &[Vec<f64>], pairwise_same: bool) -> SeparationCertificate {
    let r = cfg.radius;
    let (mut same, mut cross) = (0.0f64, f64::INFINITY);
    for i in 0..planted.len() {
        for j in i + 1..planted.len() {
            let delta = libm::sqrt(squared_distance(&planted[i], &planted[j])) / 2.0;
            if labels[i] == labels[j] {
                same = same.max(delta);
            } else {
                cross = cross.min(delta);
            }
        }
    }
    let groups: BTreeSet<usize> = labels.iter().copied().collect();
    let group_delta = groups
        .iter()
        .map(|g| {
            let members: Vec<&Vec<f64>> = planted.iter().zip(labels).filter(|(_, l)| *l == g).map(|(p, _)| p).collect();
            avg_distance(&members).unwrap_or(0.0)
        })
        .fold(0.0, f64::max);
    let min_center = min_pair_distance(centers);
    let holds =
        group_delta <= r && cross > r && (!pairwise_same || same <= r) && min_center >= cfg.separation * r - 1e-12;
    SeparationCertificate {
        radius: r,
        max_same_pair_delta: same,
        max_group_delta: group_delta,
        min_cross_pair_delta: cross,
        min_center_distance: min_center,
        pairwise_same,
        holds,
        attempts: 0,
    }
}

/// Generates the stream described by `config`.
pub fn generate(config: &ScenarioConfig) -> Result<ScenarioStream> {
    config.validate()?;
    let backbone = config.backbone()?;
    for attempt in 0..CERTIFICATE_ATTEMPTS {
        let mut rng = rng_from(config.seed, &[0x5ce7, attempt as u64]);
        if let Some(mut stream) = generate_once(config, &backbone, &mut rng)? {
            match stream.certificate.as_mut() {
                Some(c) if !c.holds => continue,
                Some(c) => c.attempts = attempt + 1,
                None => {}
            }
            return Ok(stream);
        }
    }
    Err(Error::SeparationCertificateFailed { attempts: CERTIFICATE_ATTEMPTS })
}

pub fn gen_uniform_mild(tasks: usize, config: &ScenarioConfig) -> Result<ScenarioStream> {
    generate(&ScenarioConfig { regime: Regime::UniformMild { tasks }, ..config.clone() })
}

pub fn gen_uniform_abrupt(tasks: usize, config: &ScenarioConfig) -> Result<ScenarioStream> {
    generate(&ScenarioConfig { regime: Regime::UniformAbrupt { tasks }, ..config.clone() })
}

pub fn gen_recurrence(semantics: usize, recurrences: usize, adversarial: bool, config: &ScenarioConfig) -> Result<ScenarioStream> {
    generate(&ScenarioConfig { regime: Regime::Recurrence { semantics, recurrences, adversarial }, ..config.clone() })
}

pub fn gen_overlap(dissimilar: usize, similar: usize, overlap_percent: f64, config: &ScenarioConfig) -> Result<ScenarioStream> {
    generate(&ScenarioConfig { regime: Regime::Overlap { dissimilar, similar, overlap_percent }, ..config.clone() })
}

fn generate_once(cfg: &ScenarioConfig, backbone: &ToyBackbone, rng: &mut ChaCha8Rng) -> Result<Option<ScenarioStream>> {
    let d = cfg.feature_dim;
    let min_dist = cfg.separation * cfg.radius;
    let sigma = cfg.within_spread;
    let n = cfg.instances_per_class;
    let mut next_label = 0usize;
    let mut tasks = Vec::new();
    let mut planted = Vec::new();
    let mut labels = Vec::new();
    let (centers, pairwise_same) = match cfg.regime {
        Regime::UniformMild { tasks: t } => {
            let centers = vec![unit(d, rng)];
            for _ in 0..t {
                let u = jitter(&centers[0], sigma, rng);
                let prof = profile(cfg, &u, &mut next_label, rng);
                tasks.push(split(cfg, build_task(cfg, backbone, &u, &prof, n, rng)?)?);
                planted.push(u);
                labels.push(0);
            }
            (centers, true)
        }
        Regime::UniformAbrupt { tasks: t } => {
            let Some(centers) = draw_centers(t, d, min_dist, rng) else { return Ok(None) };
            for (i, c) in centers.iter().enumerate() {
                let u = jitter(c, sigma, rng);
                let prof = profile(cfg, &u, &mut next_label, rng);
                tasks.push(split(cfg, build_task(cfg, backbone, &u, &prof, n, rng)?)?);
                planted.push(u);
                labels.push(i);
            }
            (centers, true)
        }
        Regime::Recurrence { semantics, recurrences, adversarial } => {
            let Some(centers) = draw_centers(semantics, d, min_dist, rng) else { return Ok(None) };
            let profiles: Vec<Profile> = centers.iter().map(|c| profile(cfg, c, &mut next_label, rng)).collect();
            let mut order: Vec<usize> = Vec::with_capacity(semantics * recurrences);
            if adversarial {
                let mut opening: Vec<usize> = (0..semantics).collect();
                opening.shuffle(rng);
                order.extend(&opening);
                opening.shuffle(rng);
                order.extend(&opening);
                let mut rest: Vec<usize> = (0..semantics).flat_map(|c| vec![c; recurrences - 2]).collect();
                rest.shuffle(rng);
                order.extend(rest);
            } else {
                order = (0..semantics).flat_map(|c| vec![c; recurrences]).collect();
                order.shuffle(rng);
            }
            let sides: Vec<Vec<f64>> = centers.iter().map(|c| orthonormal(d, 1, &[c.clone()], rng).remove(0)).collect();
            let mut seen = vec![0usize; semantics];
            for &c in &order {
                let u = if adversarial && seen[c] < 2 {
                    let sign = if seen[c] == 0 { 2.0 } else { -2.0 };
                    normalize(centers[c].iter().zip(&sides[c]).map(|(a, b)| a + sign * sigma * b).collect())
                } else {
                    jitter(&centers[c], sigma, rng)
                };
                seen[c] += 1;
                tasks.push(split(cfg, build_task(cfg, backbone, &u, &profiles[c], n, rng)?)?);
                planted.push(u);
                labels.push(c);
            }
            (centers, !adversarial)
        }
        Regime::Overlap { dissimilar, similar, overlap_percent } => {
            let total = dissimilar + similar;
            let Some(centers) = draw_centers(total + 1, d, min_dist, rng) else { return Ok(None) };
            let donor = &centers[total];
            let donor_prof = profile(cfg, donor, &mut next_label, rng);
            let frac = overlap_percent / 100.0;
            for (i, c) in centers[..total].iter().enumerate() {
                let u = jitter(c, sigma, rng);
                let prof = profile(cfg, &u, &mut next_label, rng);
                let is_similar = i >= dissimilar;
                let (n_own, n_donor) = if is_similar {
                    let k = libm::round(n as f64 * frac) as usize;
                    (n - k, k)
                } else {
                    (n, 0)
                };
                let mut per_class = Vec::new();
                if n_own >= 2 {
                    per_class.extend(build_task(cfg, backbone, &u, &prof, n_own, rng)?);
                }
                if n_donor >= 2 {
                    let du = jitter(donor, sigma, rng);
                    per_class.extend(build_task(cfg, backbone, &du, &donor_prof, n_donor, rng)?);
                }
                tasks.push(split(cfg, per_class)?);
                planted.push(u);
                labels.push(if is_similar && overlap_percent >= 50.0 { total } else { i });
            }
            let true_semantic = Partition::from_labels(&labels).labels().to_vec();
            return Ok(Some(ScenarioStream {
                tasks,
                true_semantic,
                centers,
                planted,
                certificate: None,
                config: cfg.clone(),
            }));
        }
    };
    let certificate = certify(cfg, &planted, &labels, &centers, pairwise_same);
    let true_semantic = Partition::from_labels(&labels).labels().to_vec();
    Ok(Some(ScenarioStream { tasks, true_semantic, centers, planted, certificate: Some(certificate), config: cfg.clone() }))
}

/// Planted task directions as semantic vectors.
pub fn planted_semantics(stream: &ScenarioStream) -> Result<Vec<SemanticVector>> {
    stream.planted.iter().map(|p| SemanticVector::new(p.clone())).collect()
}
