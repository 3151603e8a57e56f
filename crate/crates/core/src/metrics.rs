//! Grouping agreement (ARI, NMI), continual-learning accuracy summaries
//! and the grouping objective.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, Partition, SemanticVector};

struct Contingency {
    n: f64,
    cells: Vec<f64>,
    rows: Vec<f64>,
    cols: Vec<f64>,
}

fn contingency(a: &Partition, b: &Partition) -> Result<Contingency> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut rows = vec![0.0; a.num_clusters()];
    let mut cols = vec![0.0; b.num_clusters()];
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        *cells.entry((x, y)).or_insert(0.0) += 1.0;
        rows[x] += 1.0;
        cols[y] += 1.0;
    }
    Ok(Contingency { n: a.len() as f64, cells: cells.into_values().collect(), rows, cols })
}

fn comb2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. Degenerate cases where the expected and maximal
/// index coincide (e.g. both partitions single-cluster) return 1.
pub fn adjusted_rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let t = contingency(a, b)?;
    // Pair counts are integers; scaling numerator and denominator by
    // 2·C(n,2) leaves a single rounding step.
    let pairs = |xs: &[f64]| xs.iter().map(|c| comb2(*c) as i128).sum::<i128>();
    let (index, sa, sb) = (pairs(&t.cells), pairs(&t.rows), pairs(&t.cols));
    let total = comb2(t.n) as i128;
    let num = 2 * (index * total - sa * sb);
    let den = (sa + sb) * total - 2 * sa * sb;
    if den == 0 {
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}

fn entropy(counts: &[f64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|c| **c > 0.0)
        .map(|c| {
            let p = c / n;
            -p * libm::log(p)
        })
        .sum()
}

/// Normalized mutual information with the arithmetic mean of the two
/// entropies as normalizer (natural log).
pub fn normalized_mutual_information(a: &Partition, b: &Partition) -> Result<f64> {
    let t = contingency(a, b)?;
    if t.n == 0.0 {
        return Err(Error::EmptyDataset);
    }
    let ha = entropy(&t.rows, t.n);
    let hb = entropy(&t.cols, t.n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    // MI = H(A) + H(B) − H(A, B)
    let hab = entropy(&t.cells, t.n);
    let mi = (ha + hb - hab).max(0.0);
    Ok((mi / ((ha + hb) / 2.0)).min(1.0))
}

/// Lower-triangular matrix of accuracies: row i holds the accuracy on tasks
/// `0..=i` after learning task i.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the row for the next task; it must have one entry per task
    /// learned so far.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        let want = self.rows.len() + 1;
        if row.len() != want {
            return Err(Error::LengthMismatch { left: row.len(), right: want });
        }
        if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidConfig("accuracy outside [0, 1]".into()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::new();
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn tasks(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, after: usize, task: usize) -> Option<f64> {
        self.rows.get(after)?.get(task).copied()
    }
}

/// Mean of the last row (0 for an empty matrix).
pub fn last_accuracy(a: &AccuracyMatrix) -> f64 {
    match a.rows.last() {
        Some(r) => r.iter().sum::<f64>() / r.len() as f64,
        None => 0.0,
    }
}

/// Per-task forgetting measure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgettingMode {
    /// Best earlier accuracy minus final accuracy.
    #[default]
    MaxGap,
    /// Accuracy after the previous task minus final accuracy.
    LastMinusCurrent,
}

/// Mean over tasks `0..T−1` of the forgetting measure; 0 when T ≤ 1.
pub fn forgetting(a: &AccuracyMatrix, mode: ForgettingMode) -> f64 {
    let t = a.rows.len();
    if t <= 1 {
        return 0.0;
    }
    let last = &a.rows[t - 1];
    let total: f64 = (0..t - 1)
        .map(|j| {
            let reference = match mode {
                ForgettingMode::MaxGap => (j..t - 1).map(|k| a.rows[k][j]).fold(f64::NEG_INFINITY, f64::max),
                ForgettingMode::LastMinusCurrent => a.rows[t - 2][j],
            };
            reference - last[j]
        })
        .sum();
    total / (t - 1) as f64
}

/// Sum over groups of pairwise semantic distances plus `alpha` per group.
pub fn grouping_objective(partition: &Partition, semantics: &[SemanticVector], alpha: f64) -> Result<f64> {
    if partition.len() != semantics.len() {
        return Err(Error::LengthMismatch { left: partition.len(), right: semantics.len() });
    }
    let clusters = partition.clusters();
    let mut j = alpha * clusters.len() as f64;
    for c in &clusters {
        for (x, &i) in c.iter().enumerate() {
            for &k in &c[x + 1..] {
                j += distance(semantics[i].as_slice(), semantics[k].as_slice());
            }
        }
    }
    Ok(j)
}
