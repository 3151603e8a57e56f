//! Prospective semantic groups: silhouette-guided k-means over a
//! neighborhood, kept in a repository of member sets with pre-adapted
//! models so that later refinement can retrieve them.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, squared_distance, Partition, SemanticVector, TaskId};
use crate::grouping::{sequential_grouping, GroupingConfig};
use crate::models::GroupModel;
use crate::rng::rng_from;

pub type MemberSet = BTreeSet<TaskId>;

/// Mean silhouette of `partition` over `points`. `None` when the partition
/// has a single cluster (undefined). Points in singleton clusters score 0.
pub fn silhouette_score(points: &[SemanticVector], partition: &Partition) -> Result<Option<f64>> {
    if points.len() != partition.len() {
        return Err(Error::LengthMismatch { left: points.len(), right: partition.len() });
    }
    let k = partition.num_clusters();
    if k < 2 {
        return Ok(None);
    }
    let labels = partition.labels();
    let sizes: Vec<usize> = partition.clusters().iter().map(Vec::len).collect();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for (i, p) in points.iter().enumerate() {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sums[labels[j]] += distance(p.as_slice(), q.as_slice());
            }
        }
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|c| *c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(Some(total / points.len() as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub partition: Partition,
    pub centers: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after every Lloyd iteration.
    pub wcss_trace: Vec<f64>,
    pub iterations: usize,
}

const KMEANS_MAX_ITERS: usize = 100;
const KMEANS_TOL: f64 = 1e-6;

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = squared_distance(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds<R: Rng + ?Sized>(points: &[SemanticVector], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers = vec![points[first].as_slice().to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p.as_slice(), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if *w > 0.0 && u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            if d2[pick] == 0.0 {
                pick = (0..n).rev().find(|i| d2[*i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // All remaining mass is on existing centers (duplicates).
            (0..n).find(|i| !chosen[*i]).unwrap_or(0)
        };
        chosen[pick] = true;
        let c = points[pick].as_slice().to_vec();
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(squared_distance(p.as_slice(), &c));
        }
        centers.push(c);
    }
    centers
}

/// Lloyd's algorithm from k-means++ seeds. An empty cluster takes the point
/// farthest from its center among clusters with at least two members.
pub fn kmeans<R: Rng + ?Sized>(points: &[SemanticVector], k: usize, rng: &mut R) -> Result<KMeansResult> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let dim = points[0].dim();
    let mut centers = plus_plus_seeds(points, k, rng);
    let mut labels = vec![0usize; n];
    let mut wcss_trace = Vec::new();
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITERS {
        iterations += 1;
        let mut cost: Vec<f64> = Vec::with_capacity(n);
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p.as_slice(), &centers);
            labels[i] = c;
            cost.push(d);
        }
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|l| sizes[*l] += 1);
        for empty in 0..k {
            if sizes[empty] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|i| sizes[labels[*i]] >= 2)
                .max_by(|a, b| cost[*a].total_cmp(&cost[*b]).then(b.cmp(a)))
                .expect("k <= n leaves a cluster with two members");
            sizes[labels[far]] -= 1;
            labels[far] = empty;
            sizes[empty] = 1;
            cost[far] = 0.0;
        }
        let mut next = vec![vec![0.0; dim]; k];
        for (p, l) in points.iter().zip(&labels) {
            next[*l].iter_mut().zip(p.as_slice()).for_each(|(a, b)| *a += b);
        }
        for (c, s) in next.iter_mut().zip(&sizes) {
            c.iter_mut().for_each(|a| *a /= *s as f64);
        }
        let wcss: f64 = points.iter().zip(&labels).map(|(p, l)| squared_distance(p.as_slice(), &next[*l])).sum();
        wcss_trace.push(wcss);
        let shift = centers
            .iter()
            .zip(&next)
            .map(|(a, b)| squared_distance(a, b))
            .fold(0.0, f64::max);
        centers = next;
        if libm::sqrt(shift) < KMEANS_TOL {
            break;
        }
    }
    Ok(KMeansResult { partition: Partition::from_labels(&labels), centers, wcss_trace, iterations })
}

/// Sequential threshold grouping over a uniformly random permutation.
/// The partition is indexed like `points`.
pub fn random_threshold_clustering<R: Rng + ?Sized>(
    points: &[SemanticVector],
    threshold: f64,
    rng: &mut R,
) -> Result<Partition> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(rng);
    let permuted: Vec<SemanticVector> = order.iter().map(|&i| points[i].clone()).collect();
    let p = sequential_grouping(&permuted, threshold)?;
    let mut labels = vec![0usize; points.len()];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = p.labels()[pos];
    }
    Ok(Partition::from_labels(&labels))
}

/// Silhouette records of the cluster-count sweep. `None` scores are the
/// undefined single-cluster case.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteMemory {
    records: Vec<(usize, Option<f64>)>,
}

impl SilhouetteMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, k: usize, score: Option<f64>) {
        self.records.push((k, score));
    }

    pub fn records(&self) -> &[(usize, Option<f64>)] {
        &self.records
    }

    /// Average score per observed count; undefined if any record is.
    pub fn averages(&self) -> BTreeMap<usize, Option<f64>> {
        let mut acc: BTreeMap<usize, (f64, usize, bool)> = BTreeMap::new();
        for (k, s) in &self.records {
            let e = acc.entry(*k).or_insert((0.0, 0, false));
            match s {
                Some(v) => e.0 += v,
                None => e.2 = true,
            }
            e.1 += 1;
        }
        acc.into_iter()
            .map(|(k, (sum, n, undef))| (k, if undef { None } else { Some(sum / n as f64) }))
            .collect()
    }

    /// The `eta` counts with the highest average score. Undefined scores
    /// rank below every defined one; ties go to the smaller count.
    pub fn top(&self, eta: usize) -> Vec<usize> {
        let mut ranked: Vec<(usize, Option<f64>)> = self.averages().into_iter().collect();
        ranked.sort_by(|a, b| match (a.1, b.1) {
            (Some(x), Some(y)) => y.total_cmp(&x).then(a.0.cmp(&b.0)),
            (Some(_), None) => core::cmp::Ordering::Less,
            (None, Some(_)) => core::cmp::Ordering::Greater,
            (None, None) => a.0.cmp(&b.0),
        });
        ranked.into_iter().take(eta).map(|(k, _)| k).collect()
    }
}

/// Top-η cluster counts by average silhouette over `r_iters` random
/// threshold clusterings at R. Fewer than 3 points give `[1]`.
pub fn representative_counts<R: Rng + ?Sized>(
    points: &[SemanticVector],
    config: &GroupingConfig,
    rng: &mut R,
) -> Result<Vec<usize>> {
    Ok(sweep_counts(points, config, rng)?.0)
}

fn sweep_counts<R: Rng + ?Sized>(
    points: &[SemanticVector],
    config: &GroupingConfig,
    rng: &mut R,
) -> Result<(Vec<usize>, SilhouetteMemory)> {
    let mut memory = SilhouetteMemory::new();
    if points.len() < 3 {
        return Ok((vec![1], memory));
    }
    for _ in 0..config.r_iters {
        let p = random_threshold_clustering(points, config.radius, rng)?;
        let s = silhouette_score(points, &p)?;
        memory.record(p.num_clusters(), s);
    }
    Ok((memory.top(config.eta), memory))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProspectiveEntry {
    pub model: GroupModel,
    pub neighborhood: usize,
    /// Logical time of the last collection that produced this set.
    pub touched: u64,
}

/// Where a new entry's model came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lineage {
    /// Copied from the entry for the set minus the current task.
    Predecessor(MemberSet),
    /// Copied from the entry with the largest Jaccard overlap.
    Overlap(MemberSet),
    Scratch,
}

/// Candidate task sets keyed by member set, each with a model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProspectiveRepository {
    entries: BTreeMap<Vec<TaskId>, ProspectiveEntry>,
    /// Keep at most this many entries per neighborhood (most recently
    /// touched first).
    pub cap_per_neighborhood: Option<usize>,
    clock: u64,
}

fn key_of(set: &MemberSet) -> Vec<TaskId> {
    set.iter().copied().collect()
}

fn jaccard(a: &MemberSet, b: &[TaskId]) -> f64 {
    let inter = b.iter().filter(|t| a.contains(t)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

impl ProspectiveRepository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_cap(cap: Option<usize>) -> Self {
        Self { cap_per_neighborhood: cap, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, set: &MemberSet) -> bool {
        self.entries.contains_key(&key_of(set))
    }

    pub fn get(&self, set: &MemberSet) -> Option<&ProspectiveEntry> {
        self.entries.get(&key_of(set))
    }

    pub fn get_mut(&mut self, set: &MemberSet) -> Option<&mut ProspectiveEntry> {
        self.entries.get_mut(&key_of(set))
    }

    pub fn member_sets(&self) -> impl Iterator<Item = MemberSet> + '_ {
        self.entries.keys().map(|k| k.iter().copied().collect())
    }

    pub fn entries(&self) -> impl Iterator<Item = (MemberSet, &ProspectiveEntry)> + '_ {
        self.entries.iter().map(|(k, e)| (k.iter().copied().collect(), e))
    }

    pub fn in_neighborhood(&self, id: usize) -> impl Iterator<Item = MemberSet> + '_ {
        self.entries.iter().filter(move |(_, e)| e.neighborhood == id).map(|(k, _)| k.iter().copied().collect())
    }

    /// Member sets containing `task`.
    pub fn containing(&self, task: TaskId) -> Vec<MemberSet> {
        self.entries.keys().filter(|k| k.contains(&task)).map(|k| k.iter().copied().collect()).collect()
    }

    /// Picks the model a new set should start from.
    pub fn lineage(&self, set: &MemberSet, current: TaskId) -> Lineage {
        let mut pred = set.clone();
        pred.remove(&current);
        if !pred.is_empty() && pred.len() < set.len() && self.contains(&pred) {
            return Lineage::Predecessor(pred);
        }
        let mut best: Option<(&Vec<TaskId>, f64)> = None;
        for k in self.entries.keys() {
            let j = jaccard(set, k);
            if j > 0.0 && best.map_or(true, |(_, b)| j > b) {
                best = Some((k, j));
            }
        }
        match best {
            Some((k, _)) => Lineage::Overlap(k.iter().copied().collect()),
            None => Lineage::Scratch,
        }
    }

    /// Inserts `set` (no-op apart from touching it if present), starting its
    /// model by the lineage rule. Returns the lineage for new sets.
    pub fn insert_with_lineage(
        &mut self,
        set: MemberSet,
        neighborhood: usize,
        current: TaskId,
        scratch: &mut dyn FnMut(&MemberSet) -> Result<GroupModel>,
    ) -> Result<Option<Lineage>> {
        if set.is_empty() {
            return Err(Error::EmptyGroup);
        }
        self.clock += 1;
        let now = self.clock;
        if let Some(e) = self.get_mut(&set) {
            e.touched = now;
            e.neighborhood = neighborhood;
            return Ok(None);
        }
        let lineage = self.lineage(&set, current);
        let model = match &lineage {
            Lineage::Predecessor(s) | Lineage::Overlap(s) => self.get(s).expect("lineage source").model.clone(),
            Lineage::Scratch => scratch(&set)?,
        };
        self.entries.insert(key_of(&set), ProspectiveEntry { model, neighborhood, touched: now });
        Ok(Some(lineage))
    }

    /// Inserts or replaces the model for `set`.
    pub fn put(&mut self, set: &MemberSet, model: GroupModel, neighborhood: usize) {
        self.clock += 1;
        let touched = self.clock;
        self.entries.insert(key_of(set), ProspectiveEntry { model, neighborhood, touched });
    }

    /// Drops least recently touched entries of `neighborhood` beyond the
    /// cap, never dropping a set in `keep`.
    pub fn enforce_cap(&mut self, neighborhood: usize, keep: &BTreeSet<Vec<TaskId>>) {
        let Some(cap) = self.cap_per_neighborhood else { return };
        let mut mine: Vec<(u64, Vec<TaskId>)> = self
            .entries
            .iter()
            .filter(|(_, e)| e.neighborhood == neighborhood)
            .map(|(k, e)| (e.touched, k.clone()))
            .collect();
        if mine.len() <= cap {
            return;
        }
        mine.sort();
        let excess = mine.len() - cap;
        for (_, k) in mine.into_iter().filter(|(_, k)| !keep.contains(k)).take(excess) {
            self.entries.remove(&k);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectionOutcome {
    pub counts: Vec<usize>,
    /// Distinct clusters produced by the k-means runs this call.
    pub clusters: Vec<MemberSet>,
    /// Sets that were not in the repository before, with their lineage.
    pub inserted: Vec<(MemberSet, Lineage)>,
}

/// Runs the silhouette sweep and the k-means runs on the neighborhood
/// `members` (task id and semantic, in arrival order) and unions every
/// resulting cluster into `repo`.
pub fn collect_prospective<R: Rng + ?Sized>(
    members: &[(TaskId, SemanticVector)],
    neighborhood: usize,
    repo: &mut ProspectiveRepository,
    current_task: TaskId,
    config: &GroupingConfig,
    rng: &mut R,
    scratch: &mut dyn FnMut(&MemberSet) -> Result<GroupModel>,
) -> Result<CollectionOutcome> {
    if !members.iter().any(|(t, _)| *t == current_task) {
        return Err(Error::UnknownTask(current_task));
    }
    let points: Vec<SemanticVector> = members.iter().map(|(_, s)| s.clone()).collect();
    let counts = representative_counts(&points, config, rng)?;
    let base: u64 = rng.random();
    let mut seen: BTreeSet<Vec<TaskId>> = BTreeSet::new();
    let mut clusters = Vec::new();
    for &k in &counts {
        for run in 0..config.r_iters {
            if k == 1 && run > 0 {
                break; // every run gives the whole neighborhood
            }
            let mut sub = rng_from(base, &[crate::rng::tag::KMEANS, k as u64, run as u64]);
            let km = kmeans(&points, k, &mut sub)?;
            for c in km.partition.clusters() {
                let set: MemberSet = c.iter().map(|&i| members[i].0).collect();
                if seen.insert(key_of(&set)) {
                    clusters.push(set);
                }
            }
        }
    }
    let mut inserted = Vec::new();
    for set in &clusters {
        if let Some(lineage) = repo.insert_with_lineage(set.clone(), neighborhood, current_task, scratch)? {
            inserted.push((set.clone(), lineage));
        }
    }
    repo.enforce_cap(neighborhood, &seen);
    Ok(CollectionOutcome { counts, clusters, inserted })
}

/// Silhouette records of one sweep, for diagnostics.
pub fn silhouette_sweep<R: Rng + ?Sized>(
    points: &[SemanticVector],
    config: &GroupingConfig,
    rng: &mut R,
) -> Result<SilhouetteMemory> {
    Ok(sweep_counts(points, config, rng)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::WarmupPrompt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(xs: &[f64]) -> Vec<SemanticVector> {
        xs.iter().map(|x| SemanticVector::new(vec![*x]).unwrap()).collect()
    }

    fn pts(xs: &[[f64; 2]]) -> Vec<SemanticVector> {
        xs.iter().map(|x| SemanticVector::new(x.to_vec()).unwrap()).collect()
    }

    fn dummy(_: &MemberSet) -> Result<GroupModel> {
        GroupModel::new(WarmupPrompt::zeros(1, 2), vec![0.0, 0.0])
    }

    #[test]
    fn silhouette_examples() {
        let p = line(&[0.0, 0.1, 10.0, 10.1]);
        let s = silhouette_score(&p, &Partition::from_labels(&[0, 0, 1, 1])).unwrap().unwrap();
        // Per-point (b − a)/b with a = 0.1 and b ∈ {10.05, 9.95}.
        let want = (2.0 * (1.0 - 0.1 / 10.05) + 2.0 * (1.0 - 0.1 / 9.95)) / 4.0;
        assert!((s - want).abs() < 1e-12);
        assert!((s - 0.990).abs() < 1e-3);
        assert_eq!(silhouette_score(&p, &Partition::from_labels(&[0, 0, 0, 0])).unwrap(), None);
        assert_eq!(silhouette_score(&p, &Partition::from_labels(&[0, 1, 2, 3])).unwrap(), Some(0.0));
        assert!(matches!(
            silhouette_score(&p, &Partition::from_labels(&[0, 1])),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn kmeans_trivial_k() {
        let p = pts(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(kmeans(&p, 1, &mut rng).unwrap().partition.num_clusters(), 1);
        let all = kmeans(&p, 4, &mut rng).unwrap().partition;
        assert_eq!(all.labels(), &[0, 1, 2, 3]);
        assert_eq!(kmeans(&p, 5, &mut rng), Err(Error::KOutOfRange { k: 5, n: 4 }));
        assert_eq!(kmeans(&p, 0, &mut rng), Err(Error::KOutOfRange { k: 0, n: 4 }));
    }

    #[test]
    fn kmeans_duplicates_still_fill_k() {
        let p = pts(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(kmeans(&p, 3, &mut rng).unwrap().partition.num_clusters(), 3);
    }

    #[test]
    fn random_threshold_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(random_threshold_clustering(&line(&[0.2]), 0.42, &mut rng).unwrap().num_clusters(), 1);
        let p = line(&[0.0, 0.5, 1.0]);
        let mut counts = BTreeSet::new();
        for _ in 0..200 {
            counts.insert(random_threshold_clustering(&p, 0.42, &mut rng).unwrap().num_clusters());
        }
        assert_eq!(counts, BTreeSet::from([1, 2]));
        let a = random_threshold_clustering(&p, 0.42, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = random_threshold_clustering(&p, 0.42, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn representative_count_examples() {
        let cfg = GroupingConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pairs = pts(&[[0.0, 0.0], [0.05, 0.0], [3.0, 3.0], [3.0, 3.05]]);
        assert!(representative_counts(&pairs, &cfg, &mut rng).unwrap().contains(&2));
        assert_eq!(representative_counts(&pairs[..1], &cfg, &mut rng).unwrap(), vec![1]);
        assert_eq!(representative_counts(&pairs[..2], &cfg, &mut rng).unwrap(), vec![1]);
    }

    #[test]
    fn silhouette_memory_ranking() {
        let mut m = SilhouetteMemory::new();
        m.record(1, None);
        m.record(2, Some(0.4));
        m.record(2, Some(0.6));
        m.record(3, Some(0.7));
        assert_eq!(m.top(2), vec![3, 2]);
        assert_eq!(m.top(3), vec![3, 2, 1]);
        let mut only = SilhouetteMemory::new();
        only.record(1, None);
        only.record(2, Some(0.1));
        assert_eq!(only.top(2), vec![2, 1]);
    }

    #[test]
    fn collection_examples() {
        let cfg = GroupingConfig::default();
        let mut repo = ProspectiveRepository::new();
        let single = vec![(4, SemanticVector::new(vec![1.0, 0.0]).unwrap())];
        let out = collect_prospective(&single, 0, &mut repo, 4, &cfg, &mut ChaCha8Rng::seed_from_u64(0), &mut dummy).unwrap();
        assert_eq!(out.inserted.len(), 1);
        assert_eq!(repo.member_sets().collect::<Vec<_>>(), vec![BTreeSet::from([4])]);

        let mut repo = ProspectiveRepository::new();
        let pairs: Vec<(TaskId, SemanticVector)> = pts(&[[0.0, 0.0], [0.05, 0.0], [3.0, 3.0], [3.0, 3.05]])
            .into_iter()
            .enumerate()
            .collect();
        collect_prospective(&pairs, 0, &mut repo, 3, &cfg, &mut ChaCha8Rng::seed_from_u64(1), &mut dummy).unwrap();
        assert!(repo.contains(&BTreeSet::from([0, 1])));
        assert!(repo.contains(&BTreeSet::from([2, 3])));
        let before: Vec<MemberSet> = repo.member_sets().collect();
        collect_prospective(&pairs, 0, &mut repo, 3, &cfg, &mut ChaCha8Rng::seed_from_u64(1), &mut dummy).unwrap();
        assert_eq!(repo.member_sets().collect::<Vec<_>>(), before);
    }

    #[test]
    fn lineage_rule() {
        let mut repo = ProspectiveRepository::new();
        let m = |v: f64| GroupModel::new(WarmupPrompt::zeros(1, 1), vec![v]).unwrap();
        repo.put(&BTreeSet::from([0, 1]), m(1.0), 0);
        repo.put(&BTreeSet::from([2, 5]), m(2.0), 0);
        assert_eq!(repo.lineage(&BTreeSet::from([0, 1, 7]), 7), Lineage::Predecessor(BTreeSet::from([0, 1])));
        assert_eq!(repo.lineage(&BTreeSet::from([2, 7]), 7), Lineage::Overlap(BTreeSet::from([2, 5])));
        assert_eq!(repo.lineage(&BTreeSet::from([9]), 9), Lineage::Scratch);
        repo.insert_with_lineage(BTreeSet::from([0, 1, 7]), 0, 7, &mut |_| Ok(m(9.0))).unwrap();
        assert_eq!(repo.get(&BTreeSet::from([0, 1, 7])).unwrap().model.key, vec![1.0]);
    }

    #[test]
    fn cap_keeps_recent_entries() {
        let mut repo = ProspectiveRepository::with_cap(Some(2));
        let m = GroupModel::new(WarmupPrompt::zeros(1, 1), vec![0.0]).unwrap();
        for t in 0..4 {
            repo.put(&BTreeSet::from([t]), m.clone(), 0);
        }
        repo.enforce_cap(0, &BTreeSet::new());
        assert_eq!(repo.member_sets().collect::<Vec<_>>(), vec![BTreeSet::from([2]), BTreeSet::from([3])]);
    }
}
