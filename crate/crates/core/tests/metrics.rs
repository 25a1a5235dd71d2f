mod common;

use std::collections::BTreeMap;

use common::ann;
use proptest::prelude::*;
use voclab_core::metrics::{
    bootstrap_ci, confusion, filter_by_annotator_count, model_vs_annotators, roc_points, uar,
    weighted_cohen_kappa, weighted_fleiss_kappa, AgreementMode, BootstrapConfig, ConfusionMatrix, LabelCounts,
    MetricsError, WeightMatrix,
};
use voclab_core::rng::SeededRng;
use voclab_core::LabelClass;

use LabelClass::*;

fn random_weights(rng: &mut SeededRng) -> WeightMatrix {
    let mut d = [[0.0; 5]; 5];
    for i in 0..5 {
        for j in i + 1..5 {
            let v = rng.uniform(0.05, 1.0);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    WeightMatrix::new(d).unwrap()
}

fn scaled(w: &WeightMatrix, lambda: f64) -> WeightMatrix {
    WeightMatrix::new(w.as_array().map(|row| row.map(|v| v * lambda))).unwrap()
}

/// Items as explicit annotation lists, 2 to 7 annotations each.
fn random_items(rng: &mut SeededRng, n: usize) -> Vec<Vec<LabelClass>> {
    (0..n)
        .map(|_| {
            let k = 2 + rng.index(6);
            // skewed label distribution so agreement is above chance
            (0..k)
                .map(|_| LabelClass::ALL[rng.index(5).min(rng.index(5))])
                .collect()
        })
        .collect()
}

fn to_counts(items: &[Vec<LabelClass>]) -> Vec<LabelCounts> {
    items
        .iter()
        .map(|labels| {
            let mut c = [0u32; 5];
            for l in labels {
                c[l.index()] += 1;
            }
            c
        })
        .collect()
}

/// Enumerates every pair of annotations within each item.
fn brute_force_fleiss(items: &[Vec<LabelClass>], d: &WeightMatrix) -> f64 {
    let mut observed = 0.0;
    let mut pooled = [0.0; 5];
    let mut total = 0.0;
    for labels in items {
        let mut sum = 0.0;
        let mut pairs = 0.0;
        for a in 0..labels.len() {
            for b in a + 1..labels.len() {
                sum += d.get(labels[a], labels[b]);
                pairs += 1.0;
            }
            pooled[labels[a].index()] += 1.0;
            total += 1.0;
        }
        observed += sum / pairs;
    }
    observed /= items.len() as f64;
    let mut expected = 0.0;
    for j in LabelClass::ALL {
        for k in LabelClass::ALL {
            expected += pooled[j.index()] / total * pooled[k.index()] / total * d.get(j, k);
        }
    }
    1.0 - observed / expected
}

#[test]
fn fleiss_matches_pairwise_enumeration() {
    let mut rng = SeededRng::new(2024);
    for _ in 0..100 {
        let n = 1 + rng.index(60);
        let items = random_items(&mut rng, n);
        let d = random_weights(&mut rng);
        let fast = weighted_fleiss_kappa(&to_counts(&items), &d).unwrap().kappa;
        let slow = brute_force_fleiss(&items, &d);
        assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
    }
}

/// The classic unweighted statistic: (P_bar - P_e) / (1 - P_e).
fn classic_fleiss(items: &[LabelCounts]) -> f64 {
    let mut p_bar = 0.0;
    let mut pooled = [0.0; 5];
    let mut total = 0.0;
    for c in items {
        let n: f64 = c.iter().map(|&v| v as f64).sum();
        p_bar += c.iter().map(|&v| v as f64 * (v as f64 - 1.0)).sum::<f64>() / (n * (n - 1.0));
        for (p, &v) in pooled.iter_mut().zip(c) {
            *p += v as f64;
        }
        total += n;
    }
    p_bar /= items.len() as f64;
    let p_e: f64 = pooled.iter().map(|p| (p / total).powi(2)).sum();
    (p_bar - p_e) / (1.0 - p_e)
}

#[test]
fn uniform_weights_give_the_unweighted_statistic() {
    let mut rng = SeededRng::new(7);
    for _ in 0..100 {
        let n = 5 + rng.index(50);
        let items = to_counts(&random_items(&mut rng, n));
        let k = weighted_fleiss_kappa(&items, &WeightMatrix::uniform()).unwrap().kappa;
        assert!((k - classic_fleiss(&items)).abs() < 1e-12);
    }
}

#[test]
fn chance_labels_give_zero_kappa() {
    let mut rng = SeededRng::new(99);
    let items: Vec<LabelCounts> = (0..10_000)
        .map(|_| {
            let mut c = [0u32; 5];
            for _ in 0..3 {
                c[rng.index(5)] += 1;
            }
            c
        })
        .collect();
    let k = weighted_fleiss_kappa(&items, &WeightMatrix::uniform()).unwrap().kappa;
    assert!(k.abs() < 0.05, "{k}");

    let pairs: Vec<(LabelClass, LabelClass)> = (0..10_000)
        .map(|_| (LabelClass::ALL[rng.index(5)], LabelClass::ALL[rng.index(5)]))
        .collect();
    let k = weighted_cohen_kappa(&pairs, &WeightMatrix::uniform()).unwrap().kappa;
    assert!(k.abs() < 0.05, "{k}");
}

#[test]
fn cost_scaling_cancels() {
    let mut rng = SeededRng::new(31);
    for _ in 0..50 {
        let d = random_weights(&mut rng);
        let lambda = rng.uniform(0.05, 1.0);
        let d2 = scaled(&d, lambda);
        let items = to_counts(&random_items(&mut rng, 40));
        let a = weighted_fleiss_kappa(&items, &d).unwrap().kappa;
        let b = weighted_fleiss_kappa(&items, &d2).unwrap().kappa;
        assert!((a - b).abs() < 1e-12);

        let pairs: Vec<_> = (0..200)
            .map(|_| {
                let x = LabelClass::ALL[rng.index(5)];
                let y = if rng.index(3) == 0 { LabelClass::ALL[rng.index(5)] } else { x };
                (x, y)
            })
            .collect();
        let a = weighted_cohen_kappa(&pairs, &d).unwrap().kappa;
        let b = weighted_cohen_kappa(&pairs, &scaled(&d, lambda)).unwrap().kappa;
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn cohen_hand_case_by_direct_tabulation() {
    let pairs = [(Crying, Crying), (Crying, Laughing), (Laughing, Laughing), (Junk, Junk)];
    let d = WeightMatrix::uniform();
    // tabulate: 1 disagreement of 4; by chance, agreement needs both sides equal
    let n = pairs.len() as f64;
    let observed = pairs.iter().filter(|(a, b)| a != b).count() as f64 / n;
    let mut chance_agree = 0.0;
    for c in LabelClass::ALL {
        let pa = pairs.iter().filter(|(a, _)| *a == c).count() as f64 / n;
        let pb = pairs.iter().filter(|(_, b)| *b == c).count() as f64 / n;
        chance_agree += pa * pb;
    }
    let expected = 1.0 - chance_agree;
    let k = weighted_cohen_kappa(&pairs, &d).unwrap();
    assert!((k.kappa - (1.0 - observed / expected)).abs() < 1e-15);

    let same: Vec<_> = [Crying, Junk, Canonical, Canonical].iter().map(|&l| (l, l)).collect();
    assert_eq!(weighted_cohen_kappa(&same, &WeightMatrix::default()).unwrap().kappa, 1.0);
}

/// Mann-Whitney: concordant pairs plus half the tied pairs.
fn pair_count_auc(s: &[(f64, bool)]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for p in s.iter().filter(|x| x.1) {
        for n in s.iter().filter(|x| !x.1) {
            den += 1.0;
            if p.0 > n.0 {
                num += 1.0;
            } else if p.0 == n.0 {
                num += 0.5;
            }
        }
    }
    num / den
}

proptest! {
    #[test]
    fn auc_equals_pair_counting(
        s in prop::collection::vec((0u8..12, any::<bool>()), 2..200)
    ) {
        let s: Vec<(f64, bool)> = s.into_iter().map(|(v, p)| (v as f64 / 10.0, p)).collect();
        let pos = s.iter().filter(|x| x.1).count();
        prop_assume!(pos > 0 && pos < s.len());
        let (points, auc) = roc_points(&s).unwrap();
        prop_assert!((auc - pair_count_auc(&s)).abs() < 1e-12);
        prop_assert_eq!(points[0], (0.0, 0.0));
        prop_assert_eq!(*points.last().unwrap(), (1.0, 1.0));
        prop_assert!(points.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
    }

    #[test]
    fn uar_invariant_under_relabeling(
        counts in prop::array::uniform5(prop::array::uniform5(0u64..50)),
        perm_seed in any::<u64>(),
    ) {
        let cm = ConfusionMatrix { counts };
        prop_assume!(cm.total() > 0);
        let mut perm: Vec<usize> = (0..5).collect();
        SeededRng::new(perm_seed).shuffle(&mut perm);
        let mut permuted = ConfusionMatrix::default();
        for r in 0..5 {
            for c in 0..5 {
                permuted.counts[perm[r]][perm[c]] = counts[r][c];
            }
        }
        match (uar(&cm), uar(&permuted)) {
            (Ok(a), Ok(b)) => prop_assert!((a.uar - b.uar).abs() < 1e-9),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "support mismatch"),
        }
    }

    #[test]
    fn filter_partitions_by_count(
        items in prop::collection::vec(prop::array::uniform5(0u32..4), 0..50),
        max in 0u32..12,
    ) {
        let kept = filter_by_annotator_count(&items, max);
        prop_assert!(kept.iter().all(|c| c.iter().sum::<u32>() <= max));
        let dropped = items.iter().filter(|c| c.iter().sum::<u32>() > max).count();
        prop_assert_eq!(kept.len() + dropped, items.len());
    }
}

#[test]
fn auc_hand_cases() {
    let s = [(0.9, true), (0.8, false), (0.4, true), (0.3, false)];
    assert_eq!(roc_points(&s).unwrap().1, 0.75);
    assert_eq!(pair_count_auc(&s), 0.75);
    let mut rng = SeededRng::new(4);
    let s: Vec<(f64, bool)> = (0..10_000).map(|_| (rng.next_f64(), rng.index(2) == 0)).collect();
    let auc = roc_points(&s).unwrap().1;
    assert!((auc - 0.5).abs() < 0.02, "{auc}");
}

#[test]
fn uar_constructed_cases() {
    let mut diag = ConfusionMatrix::default();
    for i in 0..5 {
        diag.counts[i][i] = 10;
    }
    assert_eq!(uar(&diag).unwrap().uar, 100.0);

    // recalls 1.0, 0.5, 0.5, 0.0, 0.5
    let cm = ConfusionMatrix {
        counts: [
            [10, 0, 0, 0, 0],
            [3, 3, 0, 0, 0],
            [0, 0, 4, 4, 0],
            [0, 0, 5, 0, 0],
            [1, 0, 0, 0, 1],
        ],
    };
    let r = uar(&cm).unwrap();
    assert_eq!(r.per_class_recall, [Some(1.0), Some(0.5), Some(0.5), Some(0.0), Some(0.5)]);
    assert_eq!(r.uar, 50.0);
}

#[test]
fn confusion_matches_histogram() {
    let mut rng = SeededRng::new(12);
    let pairs: Vec<_> = (0..1000)
        .map(|_| (LabelClass::ALL[rng.index(5)], LabelClass::ALL[rng.index(5)]))
        .collect();
    let cm = confusion(&pairs);
    assert_eq!(cm.total(), 1000);
    for c in LabelClass::ALL {
        let hist = pairs.iter().filter(|(r, _)| *r == c).count() as u64;
        assert_eq!(cm.support(c), hist);
        let hits = pairs.iter().filter(|(r, p)| *r == c && *p == c).count() as f64;
        if hist > 0 {
            assert_eq!(cm.recall(c), Some(hits / hist as f64));
        }
    }
}

#[test]
fn model_vs_annotators_cases() {
    let mut rng = SeededRng::new(21);
    let n = 5000;
    let preds: BTreeMap<String, LabelClass> =
        (0..n).map(|i| (format!("c{i:05}"), LabelClass::ALL[rng.index(5)])).collect();

    let perfect: Vec<_> = preds.iter().map(|(c, &l)| ann(c, "match", l)).collect();
    let r = model_vs_annotators(&preds, &perfect, &WeightMatrix::default(), 20, AgreementMode::Grouped).unwrap();
    assert_eq!((r.mean_kappa, r.sd), (1.0, 0.0));

    let random: Vec<_> = preds.keys().map(|c| ann(c, "random", LabelClass::ALL[rng.index(5)])).collect();
    let mut few: Vec<_> = preds.keys().take(5).map(|c| ann(c, "few", Canonical)).collect();
    let mut all = perfect.clone();
    all.extend(random.iter().cloned());
    all.append(&mut few);
    let d = WeightMatrix::default();
    let r = model_vs_annotators(&preds, &all, &d, 20, AgreementMode::Grouped).unwrap();

    // independent per-annotator kappas
    let k1 = 1.0;
    let pairs: Vec<_> = random.iter().map(|a| (preds[&a.clip_id], a.label)).collect();
    let k2 = weighted_cohen_kappa(&pairs, &d).unwrap().kappa;
    assert!(k2.abs() < 0.05);
    assert!((r.mean_kappa - (k1 + k2) / 2.0).abs() < 1e-12);
    assert!((r.mean_kappa - 0.5).abs() < 0.05);
    assert!((r.sd - (k1 - k2).abs() / 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(r.n_annotators, 2);
    let few = r.per_annotator.iter().find(|a| a.annotator_id == "few").unwrap();
    assert_eq!((few.n_pairs, few.kappa), (5, None));

    assert!(matches!(
        model_vs_annotators(&preds, &all, &d, 10_000, AgreementMode::Grouped),
        Err(MetricsError::NoQualifyingAnnotator { .. })
    ));
    let pooled = model_vs_annotators(&preds, &all, &d, 20, AgreementMode::Pooled).unwrap();
    assert!(pooled.mean_kappa > k2 && pooled.mean_kappa < k1);
}

#[test]
fn bootstrap_of_the_mean() {
    let mut rng = SeededRng::new(8);
    let xs: Vec<f64> = (0..1000).map(|_| rng.normal()).collect();
    let mean = |s: &[f64]| Some(s.iter().sum::<f64>() / s.len() as f64);
    let cfg = BootstrapConfig {
        resamples: 2000,
        level: 0.95,
        seed: 5,
    };
    let ci = bootstrap_ci(&xs, mean, &cfg).unwrap();
    let theory = 2.0 * 1.96 / 1000f64.sqrt();
    let width = ci.high - ci.low;
    assert!((width / theory - 1.0).abs() < 0.2, "{width} vs {theory}");
    assert!(ci.low <= ci.high);
    assert_eq!(bootstrap_ci(&xs, mean, &cfg).unwrap(), ci);
}
