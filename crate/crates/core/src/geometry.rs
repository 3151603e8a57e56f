//! Semantic vectors, radius statistics and partitions.
//!
//! Groups are summarised BIRCH-style by `(count, sum_vector, sum_sq)`, which
//! is enough to recover the centroid and the average distance
//! `δ = sqrt(mean ‖s − centroid‖²)` in O(d) per update.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a task in its stream (arrival order).
pub type TaskId = usize;

/// Tolerance for accepting slightly negative variances from cancellation.
pub const VARIANCE_CLAMP: f64 = 1e-12;

/// A task's semantic representation: a finite point in d-dimensional space.
///
/// Vectors produced by semantic extraction are unit norm; vectors built with
/// [`SemanticVector::new`] are only required to be finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SemanticVector(Vec<f64>);

impl SemanticVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(components))
    }

    /// Builds the l2-normalized vector along `components`.
    pub fn normalized(components: Vec<f64>) -> Result<Self> {
        let mut v = Self::new(components)?;
        let n = norm(&v.0);
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        v.0.iter_mut().for_each(|c| *c /= n);
        Ok(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for SemanticVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(squared_distance(a, b))
}

fn check_dims<P: AsRef<[f64]>>(members: &[P]) -> Result<usize> {
    let first = members.first().ok_or(Error::EmptyGroup)?.as_ref().len();
    for m in members {
        let found = m.as_ref().len();
        if found != first {
            return Err(Error::DimensionMismatch { expected: first, found });
        }
    }
    Ok(first)
}

/// Componentwise mean of `members` (not renormalized).
pub fn centroid<P: AsRef<[f64]>>(members: &[P]) -> Result<Vec<f64>> {
    let d = check_dims(members)?;
    let mut c = vec![0.0; d];
    for m in members {
        c.iter_mut().zip(m.as_ref()).for_each(|(acc, x)| *acc += x);
    }
    let n = members.len() as f64;
    c.iter_mut().for_each(|x| *x /= n);
    Ok(c)
}

/// Root-mean-square distance of `members` to their centroid, computed
/// directly from the stored points.
pub fn avg_distance<P: AsRef<[f64]>>(members: &[P]) -> Result<f64> {
    let c = centroid(members)?;
    let ms: f64 = members
        .iter()
        .map(|m| squared_distance(m.as_ref(), &c))
        .sum::<f64>()
        / members.len() as f64;
    Ok(libm::sqrt(ms))
}

/// Sufficient statistics of a point set: count, componentwise sum and the
/// sum of squared norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusStats {
    count: usize,
    sum_vector: Vec<f64>,
    sum_sq: f64,
}

impl RadiusStats {
    pub fn empty(dim: usize) -> Self {
        Self { count: 0, sum_vector: vec![0.0; dim], sum_sq: 0.0 }
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let d = check_dims(points)?;
        let mut s = Self::empty(d);
        for p in points {
            s.push(p.as_ref())?;
        }
        Ok(s)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.sum_vector.len()
    }

    pub fn sum_vector(&self) -> &[f64] {
        &self.sum_vector
    }

    pub fn sum_sq(&self) -> f64 {
        self.sum_sq
    }

    pub fn push(&mut self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: point.len() });
        }
        self.count += 1;
        self.sum_vector.iter_mut().zip(point).for_each(|(s, x)| *s += x);
        self.sum_sq += dot(point, point);
        Ok(())
    }

    pub fn centroid(&self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::EmptyGroup);
        }
        let n = self.count as f64;
        Ok(self.sum_vector.iter().map(|s| s / n).collect())
    }

    /// δ of the summarised set, via `δ² = sum_sq/n − ‖sum/n‖²`.
    pub fn radius(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::EmptyGroup);
        }
        Ok(radius_from(self.count as f64, self.sum_sq, self.sum_vector.iter().copied()))
    }

    /// δ of the set with `candidate` added, without mutating the statistics.
    pub fn trial_radius(&self, candidate: &[f64]) -> Result<f64> {
        if candidate.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: candidate.len() });
        }
        let n = (self.count + 1) as f64;
        let sum_sq = self.sum_sq + dot(candidate, candidate);
        let sums = self.sum_vector.iter().zip(candidate).map(|(s, x)| s + x);
        Ok(radius_from(n, sum_sq, sums))
    }
}

fn radius_from(n: f64, sum_sq: f64, sums: impl Iterator<Item = f64>) -> f64 {
    let centroid_sq: f64 = sums.map(|s| (s / n) * (s / n)).sum();
    let var = sum_sq / n - centroid_sq;
    // var >= -VARIANCE_CLAMP in exact-arithmetic-adjacent cases; anything
    // below zero is cancellation noise.
    debug_assert!(var >= -VARIANCE_CLAMP * (1.0 + sum_sq / n), "variance {var}");
    libm::sqrt(var.max(0.0))
}

/// Average distance of the set `group ∪ {candidate}`.
pub fn trial_distance(group: &RadiusStats, candidate: &SemanticVector) -> Result<f64> {
    group.trial_radius(candidate.as_slice())
}

/// A labelling of items `0..n` in canonical form: labels are numbered by
/// first appearance, so every id in `0..k` is used.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Partition {
    labels: Vec<usize>,
}

impl Partition {
    /// Canonicalizes arbitrary labels by order of first appearance.
    pub fn from_labels<L: Ord + Clone>(labels: &[L]) -> Self {
        let mut ids: BTreeMap<L, usize> = BTreeMap::new();
        let labels = labels
            .iter()
            .map(|l| {
                let next = ids.len();
                *ids.entry(l.clone()).or_insert(next)
            })
            .collect();
        Self { labels }
    }

    /// Builds a partition from clusters of item indices covering `0..n`.
    pub fn from_clusters(n: usize, clusters: &[Vec<usize>]) -> Result<Self> {
        let mut labels = vec![usize::MAX; n];
        for (c, members) in clusters.iter().enumerate() {
            for &i in members {
                if i >= n || labels[i] != usize::MAX {
                    return Err(Error::CoverageMismatch);
                }
                labels[i] = c;
            }
        }
        if labels.contains(&usize::MAX) {
            return Err(Error::CoverageMismatch);
        }
        Ok(Self::from_labels(&labels))
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Item indices per cluster, ordered by cluster id.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn canonicalize(&self) -> Self {
        Self::from_labels(&self.labels)
    }
}
