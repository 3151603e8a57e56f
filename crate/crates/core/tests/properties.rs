use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semgroup_core::geometry::{avg_distance, trial_distance, Partition, RadiusStats, SemanticVector};
use semgroup_core::grouping::{GroupingConfig, GroupingState, TaskRecord};
use semgroup_core::learner::{KeyDistance, WarmupPrompt};
use semgroup_core::metrics::{
    adjusted_rand_index, forgetting, grouping_objective, normalized_mutual_information, AccuracyMatrix, ForgettingMode,
};
use semgroup_core::models::{avg_merge, infer_group, GroupModel};
use semgroup_core::prospective::{collect_prospective, kmeans, silhouette_score, MemberSet, ProspectiveRepository};
use semgroup_core::refinement::refine_neighborhood;

fn raw_points(max_n: usize, max_d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_d).prop_flat_map(move |d| prop::collection::vec(prop::collection::vec(-3.0..3.0f64, d), 1..=max_n))
}

/// Unit vectors scattered around a few directions, so groups and
/// neighborhoods of several members form.
fn clustered_stream(max_n: usize) -> impl Strategy<Value = Vec<SemanticVector>> {
    (2..=4usize, 1..=3usize, 0.05..0.5f64).prop_flat_map(move |(d, k, spread)| {
        let centers = prop::collection::vec(prop::collection::vec(-1.0..1.0f64, d), k);
        let noise = prop::collection::vec((0..k, prop::collection::vec(-1.0..1.0f64, d)), 1..=max_n);
        (centers, noise).prop_filter_map("degenerate direction", move |(cs, ns)| {
            ns.into_iter()
                .map(|(c, e)| {
                    let v = cs[c].iter().zip(&e).map(|(a, b)| a + spread * b).collect();
                    SemanticVector::normalized(v).ok()
                })
                .collect()
        })
    })
}

fn direct_delta(points: &[Vec<f64>]) -> f64 {
    let n = points.len() as f64;
    let d = points[0].len();
    let c: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    let ms: f64 = points.iter().map(|p| p.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sum::<f64>() / n;
    ms.sqrt()
}

fn build_state(stream: &[SemanticVector], config: GroupingConfig) -> GroupingState {
    let mut s = GroupingState::new(config).unwrap();
    for (t, v) in stream.iter().enumerate() {
        s.assign(&TaskRecord { task_id: t, semantic: v.clone() }).unwrap();
    }
    s
}

fn check_invariants(s: &GroupingState, n: usize) {
    let r = s.config().radius;
    let gr = s.config().neighborhood_radius();
    let mut seen = vec![0usize; n];
    for g in s.groups() {
        let pts: Vec<&[f64]> = g.members().iter().map(|t| s.semantic(*t).unwrap().as_slice()).collect();
        assert!(avg_distance(&pts).unwrap() <= r + 1e-9);
        let nbs: BTreeSet<usize> = g.members().iter().map(|t| s.neighborhood_of(*t).unwrap()).collect();
        assert_eq!(nbs.len(), 1, "group spans neighborhoods");
        for t in g.members() {
            seen[*t] += 1;
        }
    }
    assert!(seen.iter().all(|c| *c == 1), "tasks not in exactly one group: {seen:?}");
    for nb in s.neighborhoods() {
        let pts: Vec<&[f64]> = nb.members().iter().map(|t| s.semantic(*t).unwrap().as_slice()).collect();
        assert!(avg_distance(&pts).unwrap() <= gr + 1e-9);
    }
}

fn model(key: Vec<f64>, shift: f64) -> GroupModel {
    let d = key.len();
    GroupModel::new(WarmupPrompt::new(vec![vec![shift; d], vec![-shift; d]]).unwrap(), key).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn incremental_stats_match_direct_formula(points in raw_points(12, 6)) {
        let mut stats = RadiusStats::empty(points[0].len());
        for (i, p) in points.iter().enumerate() {
            stats.push(p).unwrap();
            let direct = direct_delta(&points[..=i]);
            prop_assert!((stats.radius().unwrap() - direct).abs() <= 1e-9);
        }
    }

    #[test]
    fn trial_distance_is_union_radius(points in raw_points(11, 8), pick in any::<prop::sample::Index>()) {
        prop_assume!(points.len() >= 2);
        let c = pick.index(points.len());
        let rest: Vec<Vec<f64>> = points.iter().enumerate().filter(|(i, _)| *i != c).map(|(_, p)| p.clone()).collect();
        let stats = RadiusStats::from_points(&rest).unwrap();
        let cand = SemanticVector::new(points[c].clone()).unwrap();
        let union: Vec<Vec<f64>> = rest.iter().cloned().chain([points[c].clone()]).collect();
        prop_assert!((trial_distance(&stats, &cand).unwrap() - avg_distance(&union).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn canonical_partition_is_stable(labels in prop::collection::vec(0..5usize, 1..15), perm in Just([3usize, 0, 4, 1, 2])) {
        let p = Partition::from_labels(&labels);
        prop_assert_eq!(p.canonicalize(), p.canonicalize().canonicalize());
        let relabeled: Vec<usize> = labels.iter().map(|l| perm[*l]).collect();
        prop_assert_eq!(Partition::from_labels(&relabeled).canonicalize(), p.canonicalize());
    }

    #[test]
    fn assignment_keeps_radius_safety_and_nesting(stream in clustered_stream(20), radius in 0.1..0.6f64) {
        let cfg = GroupingConfig { radius, ..GroupingConfig::default() };
        let s = build_state(&stream, cfg.clone());
        check_invariants(&s, stream.len());
        // Replays are identical.
        prop_assert_eq!(s.partition(), build_state(&stream, cfg).partition());
    }

    #[test]
    fn refinement_keeps_invariants(stream in clustered_stream(9), seed in any::<u64>()) {
        let cfg = GroupingConfig { radius: 0.3, r_iters: 10, ..GroupingConfig::default() };
        let mut s = build_state(&stream, cfg.clone());
        let n = stream.len();
        let last = n - 1;
        let nb = s.neighborhood_of(last).unwrap();
        let ids: Vec<usize> = s.neighborhood(nb).unwrap().arrival_order().to_vec();
        let members: Vec<(usize, SemanticVector)> = ids.iter().map(|t| (*t, stream[*t].clone())).collect();
        let mut repo = ProspectiveRepository::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = stream[0].dim();
        let out = collect_prospective(&members, nb, &mut repo, last, &cfg, &mut rng, &mut |_| Ok(model(vec![0.0; d], 0.0))).unwrap();
        for c in &out.clusters {
            prop_assert!(repo.contains(c));
        }
        let sets: BTreeSet<MemberSet> = repo.member_sets().collect();
        prop_assert_eq!(sets.len(), repo.len());

        let idset: MemberSet = ids.iter().copied().collect();
        let covered = |s: &GroupingState| {
            let mut v: Vec<usize> = s.groups_within(&idset).iter().flat_map(|g| s.group(*g).unwrap().members().iter().copied().collect::<Vec<_>>()).collect();
            v.sort_unstable();
            v
        };
        let nb_partition = |s: &GroupingState| {
            let labels: Vec<usize> = ids.iter().map(|t| s.group_of(*t).unwrap()).collect();
            Partition::from_labels(&labels)
        };
        let nb_semantics: Vec<SemanticVector> = members.iter().map(|(_, v)| v.clone()).collect();
        let before = covered(&s);
        let j_before = grouping_objective(&nb_partition(&s), &nb_semantics, 1e6).unwrap();
        let r = refine_neighborhood(&mut s, nb, &repo, &mut rng).unwrap();
        prop_assert_eq!(covered(&s), before);
        check_invariants(&s, n);
        if r.performed {
            prop_assert!(r.new_group_count < r.old_group_count);
            let j_after = grouping_objective(&nb_partition(&s), &nb_semantics, 1e6).unwrap();
            prop_assert!(j_after <= j_before);
        }
    }

    #[test]
    fn kmeans_wcss_never_increases(stream in clustered_stream(15), k in 1..5usize, seed in any::<u64>()) {
        prop_assume!(k <= stream.len());
        let res = kmeans(&stream, k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for w in res.wcss_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        prop_assert_eq!(res.partition.num_clusters(), k);
    }

    #[test]
    fn silhouette_invariant_under_relabeling_and_isometry(
        stream in clustered_stream(12),
        labels in prop::collection::vec(0..3usize, 12),
        angle in 0.0..6.28f64,
        shift in prop::collection::vec(-2.0..2.0f64, 4),
    ) {
        let n = stream.len();
        let p = Partition::from_labels(&labels[..n]);
        let base = silhouette_score(&stream, &p).unwrap();
        let relabeled = Partition::from_labels(&labels[..n].iter().map(|l| 2 - l).collect::<Vec<_>>());
        prop_assert_eq!(silhouette_score(&stream, &relabeled).unwrap(), base);
        // Rotate the first two coordinates, then translate.
        let (c, s) = (angle.cos(), angle.sin());
        let moved: Vec<SemanticVector> = stream.iter().map(|v| {
            let mut x = v.as_slice().to_vec();
            let (a, b) = (x[0], x[1]);
            x[0] = c * a - s * b;
            x[1] = s * a + c * b;
            x.iter_mut().zip(&shift).for_each(|(xi, t)| *xi += t);
            SemanticVector::new(x).unwrap()
        }).collect();
        match (base, silhouette_score(&moved, &p).unwrap()) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-9),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn farther_models_do_not_change_routing(
        keys in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 3), 1..5),
        feature in prop::collection::vec(-2.0..2.0f64, 3),
        extra in 0.1..3.0f64,
    ) {
        let models: Vec<GroupModel> = keys.iter().map(|k| model(k.clone(), 0.0)).collect();
        let refs: Vec<&GroupModel> = models.iter().collect();
        let best = infer_group(&refs, &feature, KeyDistance::SquaredEuclidean).unwrap();
        let bd = KeyDistance::SquaredEuclidean.eval(&feature, &models[best].key);
        // A key strictly farther than the best, pushed out along a coordinate.
        let mut far_key = feature.clone();
        far_key[0] += bd.sqrt() + extra;
        let far = model(far_key, 0.0);
        let mut more = refs.clone();
        more.push(&far);
        prop_assert_eq!(infer_group(&more, &feature, KeyDistance::SquaredEuclidean).unwrap(), best);
    }

    #[test]
    fn routing_ignores_a_common_distance_offset(
        keys in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 3), 1..5),
        feature in prop::collection::vec(-2.0..2.0f64, 3),
        offset in 0.0..5.0f64,
    ) {
        let models: Vec<GroupModel> = keys.iter().map(|k| model(k.clone(), 0.0)).collect();
        let refs: Vec<&GroupModel> = models.iter().collect();
        let best = infer_group(&refs, &feature, KeyDistance::SquaredEuclidean).unwrap();
        // An extra coordinate fixed at sqrt(offset) in every key and 0 in the
        // feature adds `offset` to every squared distance.
        let lifted: Vec<GroupModel> = keys.iter().map(|k| {
            let mut k = k.clone();
            k.push(offset.sqrt());
            model(k, 0.0)
        }).collect();
        let lrefs: Vec<&GroupModel> = lifted.iter().collect();
        let mut f = feature.clone();
        f.push(0.0);
        prop_assert_eq!(infer_group(&lrefs, &f, KeyDistance::SquaredEuclidean).unwrap(), best);
    }

    #[test]
    fn avg_merge_ignores_order(
        entries in prop::collection::vec((prop::collection::vec(-2.0..2.0f64, 3), -1.0..1.0f64), 1..6),
        rot in any::<prop::sample::Index>(),
    ) {
        let models: Vec<GroupModel> = entries.iter().map(|(k, s)| model(k.clone(), *s)).collect();
        let a = avg_merge(&models.iter().collect::<Vec<_>>()).unwrap();
        let mut refs: Vec<&GroupModel> = models.iter().collect();
        let k = rot.index(refs.len());
        refs.rotate_left(k);
        refs.reverse();
        let b = avg_merge(&refs).unwrap();
        for (x, y) in a.key.iter().zip(&b.key) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        for (tx, ty) in a.prompt.tokens().iter().zip(b.prompt.tokens()) {
            for (x, y) in tx.iter().zip(ty) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn ari_nmi_are_symmetric(pairs in prop::collection::vec((0..4usize, 0..4usize), 1..13)) {
        let a = Partition::from_labels(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
        let b = Partition::from_labels(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
        prop_assert_eq!(adjusted_rand_index(&a, &b).unwrap(), adjusted_rand_index(&b, &a).unwrap());
        prop_assert!((normalized_mutual_information(&a, &b).unwrap() - normalized_mutual_information(&b, &a).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn constant_columns_have_no_forgetting(cols in prop::collection::vec(0.0..1.0f64, 1..7)) {
        let rows: Vec<Vec<f64>> = (0..cols.len()).map(|i| cols[..=i].to_vec()).collect();
        let a = AccuracyMatrix::from_rows(rows).unwrap();
        prop_assert_eq!(forgetting(&a, ForgettingMode::MaxGap), 0.0);
        prop_assert_eq!(forgetting(&a, ForgettingMode::LastMinusCurrent), 0.0);
    }
}
