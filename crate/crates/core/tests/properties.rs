use std::collections::BTreeSet;

use factcheck_core::analysis::{balanced_subsamples, fleiss_kappa, harmonic_mean, krippendorff_alpha, LabelMatrix};
use factcheck_core::dictionary::{kmeans, KMeansConfig};
use factcheck_core::localization::{localize, AlignmentTable, SourceClaim, TargetCorpus};
use factcheck_core::pipeline::{aggregate, partition_splits, ConfidenceTriple, SplitConfig};
use factcheck_core::retrieval::{mrr_at_k, top_k, GoldMap, Ranking, ScoredDoc};
use factcheck_core::text::bucket;
use factcheck_core::Label;
use proptest::prelude::*;

fn label() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Supports), Just(Label::Refutes), Just(Label::Nei)]
}

fn triple() -> impl Strategy<Value = ConfidenceTriple> {
    (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(s, r, n)| ConfidenceTriple::new(s, r, n))
}

fn matrix(items: usize, raters: usize) -> impl Strategy<Value = Vec<Vec<Option<usize>>>> {
    prop::collection::vec(prop::collection::vec(prop::option::weighted(0.85, 0..3usize), raters), items)
}

type Component = fn(&ConfidenceTriple) -> f64;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn aggregate_is_a_convex_combination(ts in prop::collection::vec(triple(), 1..8), lambda in 0.0..3.0f64) {
        let a = aggregate(&ts, lambda).unwrap();
        let parts: [(Component, &str); 3] =
            [(|t| t.supports, "supports"), (|t| t.refutes, "refutes"), (|t| t.nei, "nei")];
        for (get, name) in parts {
            let lo = ts.iter().map(get).fold(f64::INFINITY, f64::min);
            let hi = ts.iter().map(get).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(get(&a) >= lo - 1e-12 && get(&a) <= hi + 1e-12, "{name} out of range");
        }
        // lambda = 0 keeps only the top split.
        prop_assert_eq!(aggregate(&ts, 0.0).unwrap(), ts[0]);
    }

    #[test]
    fn splits_cover_docs_in_order(lens in prop::collection::vec(1..900usize, 0..20), k_s in 1..5usize, overhead in 0..100usize) {
        let docs: Vec<(String, usize)> = lens.iter().enumerate().map(|(i, &l)| (format!("d{i}"), l)).collect();
        let splits = partition_splits(&docs, SplitConfig { max_input: 512, k_s }, overhead).unwrap();
        let flat: Vec<&String> = splits.iter().flat_map(|s| &s.members).collect();
        prop_assert_eq!(flat, docs.iter().map(|d| &d.0).collect::<Vec<_>>());
        for s in &splits {
            prop_assert!(!s.members.is_empty() && s.members.len() <= k_s);
            prop_assert!(s.truncated || s.token_count + overhead <= 512);
        }
    }

    #[test]
    fn top_k_is_sorted_prefix(scores in prop::collection::vec(-5.0..5.0f64, 0..40), k in 0..50usize) {
        let scored: Vec<(u32, f64)> = scores.iter().enumerate().map(|(i, &s)| (i as u32, s)).collect();
        let got = top_k(scored.clone(), k);
        let mut all = scored;
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        prop_assert_eq!(got, all);
    }

    #[test]
    fn mrr_is_bounded_and_monotone(
        ranks in prop::collection::vec((prop::collection::vec(0..30u32, 0..25), prop::collection::btree_set(0..30u32, 1..4)), 1..10)
    ) {
        let mut rankings = Vec::new();
        let mut gold = GoldMap::new();
        for (q, (hits, g)) in ranks.iter().enumerate() {
            let uniq: Vec<u32> = hits.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            rankings.push(Ranking {
                query_id: format!("q{q}"),
                hits: uniq.iter().map(|d| ScoredDoc { paragraph_id: format!("p{d}"), score: 0.0 }).collect(),
            });
            gold.insert(format!("q{q}"), g.iter().map(|d| format!("p{d}")).collect());
        }
        let ks = [1, 2, 5, 10, 20, 30];
        let rep = mrr_at_k(&rankings, &gold, &ks).unwrap();
        let vals: Vec<f64> = ks.iter().map(|k| rep.mrr[k]).collect();
        prop_assert!(vals.iter().all(|v| (0.0..=100.0).contains(v)));
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn alpha_is_at_most_one_and_label_invariant(rows in matrix(15, 4), perm in Just([2usize, 0, 1])) {
        let m = LabelMatrix { categories: vec!["A".into(), "B".into(), "C".into()], rows: rows.clone() };
        if let Ok(a) = krippendorff_alpha(&m) {
            prop_assert!(a <= 1.0 + 1e-12);
            let relabeled = LabelMatrix {
                categories: m.categories.clone(),
                rows: rows.iter().map(|r| r.iter().map(|c| c.map(|v| perm[v])).collect()).collect(),
            };
            prop_assert!((krippendorff_alpha(&relabeled).unwrap() - a).abs() < 1e-9);
        }
    }

    #[test]
    fn kappa_ignores_rater_order(rows in prop::collection::vec(prop::collection::vec(0..3usize, 3), 5..20)) {
        let to_m = |rows: Vec<Vec<usize>>| LabelMatrix {
            categories: vec!["A".into(), "B".into(), "C".into()],
            rows: rows.into_iter().map(|r| r.into_iter().map(Some).collect()).collect(),
        };
        let reversed: Vec<Vec<usize>> = rows.iter().map(|r| r.iter().rev().copied().collect()).collect();
        match (fleiss_kappa(&to_m(rows)), fleiss_kappa(&to_m(reversed))) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-9 && a <= 1.0 + 1e-12),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn subsamples_are_balanced(labels in prop::collection::vec(label(), 3..200), seed in any::<u64>()) {
        let mut counts = [0usize; 3];
        labels.iter().for_each(|l| counts[l.index()] += 1);
        let min = *counts.iter().min().unwrap();
        match balanced_subsamples(&labels, 3, seed) {
            Ok(samples) => {
                prop_assert!(min > 0);
                for s in samples {
                    let mut per = [0usize; 3];
                    s.iter().for_each(|&i| per[labels[i].index()] += 1);
                    prop_assert_eq!(per, [min; 3]);
                    prop_assert_eq!(s.iter().collect::<BTreeSet<_>>().len(), s.len());
                }
            }
            Err(_) => prop_assert_eq!(min, 0),
        }
    }

    #[test]
    fn harmonic_mean_lies_between_min_and_max(a in 0.001..1.0f64, b in 0.001..1.0f64) {
        let h = harmonic_mean(a, b);
        prop_assert!(h >= a.min(b) - 1e-12 && h <= a.max(b) + 1e-12);
    }

    #[test]
    fn localization_accounts_for_every_claim(
        shapes in prop::collection::vec((label(), prop::collection::vec(prop::collection::vec(0..5usize, 1..3), 0..3)), 0..40)
    ) {
        // Pages 0-2 map to existing targets, 3 maps to a missing one, 4 is unmapped.
        let alignment = AlignmentTable::parse_tsv("P0\tT0\nP1\tT1\nP2\tT2\nP3\tT3\n").unwrap();
        let target = TargetCorpus::from_pairs([("T0", "a."), ("T1", "b."), ("T2", "c.")]);
        let claims: Vec<SourceClaim> = shapes
            .iter()
            .enumerate()
            .map(|(i, (l, sets))| SourceClaim {
                id: i.to_string(),
                claim: format!("c{i}"),
                label: *l,
                evidence: sets.iter().map(|s| s.iter().map(|p| (format!("P{p}"), Some(0))).collect()).collect(),
            })
            .collect();
        let (kept, report) = localize(&claims, &alignment, &target);
        let dropped: usize = report.dropped.values().sum();
        prop_assert_eq!(kept.len() + dropped, claims.len());
        for c in &kept {
            prop_assert!(c.evidence.iter().flatten().all(|d| ["T0", "T1", "T2"].contains(&d.as_str())));
            prop_assert!(c.label == Label::Nei || !c.evidence.is_empty());
            let uniq: BTreeSet<_> = c.evidence.iter().collect();
            prop_assert_eq!(uniq.len(), c.evidence.len());
        }
        prop_assert_eq!(kept.iter().filter(|c| c.label == Label::Nei).count(), claims.iter().filter(|c| c.label == Label::Nei).count());
    }

    #[test]
    fn kmeans_objective_never_increases(pts in prop::collection::vec(prop::collection::vec(-1.0..1.0f32, 4), 3..30), k in 1..4usize, seed in any::<u64>()) {
        let refs: Vec<&[f32]> = pts.iter().map(Vec::as_slice).collect();
        let res = kmeans(&refs, &KMeansConfig { k, seed, ..KMeansConfig::default() }).unwrap();
        prop_assert_eq!(res.assignments.len(), pts.len());
        prop_assert!(res.assignments.iter().all(|&a| a < res.centroids.len()));
        prop_assert!(res.objective_history.windows(2).all(|w| w[1] <= w[0] + 1e-6));
    }

    #[test]
    fn buckets_stay_in_range(s in ".{0,20}", shift in 0u32..24) {
        prop_assert!(bucket(&s, 1 << shift) < 1 << shift);
    }
}
