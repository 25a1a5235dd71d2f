mod common;

use std::collections::BTreeMap;

use common::{ann, clip, random_label};
use voclab_core::classifier::PredictionRecord;
use voclab_core::dataset::SplitAssignment;
use voclab_core::metrics::{BootstrapConfig, ConfusionMatrix};
use voclab_core::report::{
    compare_matrix, evaluate, render_comparison, render_markdown, render_stratum_table, EvalConfig, EvalInputs,
    EvaluationReport, ReportError, StratumKey,
};
use voclab_core::rng::SeededRng;
use voclab_core::{Environment, Fold, LabelClass, Manifest};

fn one_hot(clip_id: &str, l: LabelClass) -> PredictionRecord {
    let mut scores = [0.0; 5];
    scores[l.index()] = 1.0;
    PredictionRecord {
        clip_id: clip_id.into(),
        scores,
        predicted: l,
    }
}

struct Fixture {
    manifest: Manifest,
    gold: Vec<(String, LabelClass)>,
}

/// 60 children across two environments, three languages and ages 3 to 38
/// months, each with 3 annotations per clip that agree with the gold label.
fn fixture(n_per_env: usize, seed: u64) -> Fixture {
    let mut rng = SeededRng::new(seed);
    let mut manifest = Manifest::default();
    let mut gold = Vec::new();
    for (e, env) in [Environment::Urban, Environment::Rural].into_iter().enumerate() {
        for i in 0..n_per_env {
            let id = format!("{e}-{i:05}");
            let child = format!("{e}-k{:02}", i % 30);
            let lang = ["fr", "en", "ninde"][i % 3];
            let c = clip(&id, &child, lang, env, 3 + (i % 30) as u32);
            let l = random_label(&mut rng);
            for a in 0..3 {
                manifest.annotations.push(ann(&id, &format!("ann{a}"), l));
            }
            manifest.clips.push(c);
            gold.push((id, l));
        }
    }
    Fixture { manifest, gold }
}

fn cfg() -> EvalConfig {
    EvalConfig {
        strata: vec![StratumKey::Environment, StratumKey::Language, StratumKey::AgeBucket],
        bootstrap: BootstrapConfig {
            resamples: 200,
            level: 0.95,
            seed: 3,
        },
        ..Default::default()
    }
}

fn run(f: &Fixture, preds: &[PredictionRecord]) -> EvaluationReport {
    evaluate(
        &EvalInputs {
            predictions: preds,
            gold: &f.gold,
            manifest: &f.manifest,
            split: None,
            pipeline: BTreeMap::new(),
        },
        &cfg(),
    )
    .unwrap()
}

#[test]
fn perfect_predictions_score_100_everywhere() {
    let f = fixture(300, 1);
    let preds: Vec<_> = f.gold.iter().map(|(id, l)| one_hot(id, *l)).collect();
    let r = run(&f, &preds);
    assert_eq!(r.overall.uar, 100.0);
    assert_eq!(r.overall.uar_sd, 0.0);
    for (key, values) in &r.strata {
        for (v, s) in values {
            assert_eq!(s.uar, 100.0, "{key}={v}");
        }
    }
    for c in &r.overall.classes {
        assert_eq!(c.auc, Some(1.0));
    }
    let human = r.agreement.human.as_ref().unwrap();
    assert_eq!(human.kappa, 1.0);
    let model = r.agreement.model_vs_annotators.as_ref().unwrap();
    assert_eq!((model.mean_kappa, model.n_annotators), (1.0, 3));
}

#[test]
fn random_rural_predictions_sit_at_chance() {
    let f = fixture(5000, 2);
    let mut rng = SeededRng::new(77);
    let preds: Vec<_> = f
        .gold
        .iter()
        .map(|(id, l)| {
            if id.starts_with('0') {
                one_hot(id, *l)
            } else {
                one_hot(id, random_label(&mut rng))
            }
        })
        .collect();
    let r = run(&f, &preds);
    let env = &r.strata["environment"];
    assert_eq!(env["urban"].uar, 100.0);
    let rural = env["rural"].uar;
    assert!((rural - 20.0).abs() <= 2.0, "rural {rural}");
    assert!(env["rural"].uar_sd > 0.0);
}

#[test]
fn stratum_confusions_sum_to_overall() {
    let f = fixture(400, 3);
    let mut rng = SeededRng::new(1);
    let preds: Vec<_> = f
        .gold
        .iter()
        .map(|(id, l)| if rng.index(3) == 0 { one_hot(id, random_label(&mut rng)) } else { one_hot(id, *l) })
        .collect();
    let r = run(&f, &preds);
    for (key, values) in &r.strata {
        let mut sum = ConfusionMatrix::default();
        for s in values.values() {
            sum.merge(&s.confusion);
        }
        assert_eq!(sum, r.overall.confusion, "{key}");
        assert_eq!(values.values().map(|s| s.n_clips).sum::<usize>(), r.overall.n_clips);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let f = fixture(200, 4);
    let mut rng = SeededRng::new(2);
    let preds: Vec<_> = f.gold.iter().map(|(id, _)| one_hot(id, random_label(&mut rng))).collect();
    let mut shuffled = preds.clone();
    SeededRng::new(6).shuffle(&mut shuffled);
    let a = serde_json::to_string(&run(&f, &preds)).unwrap();
    let b = serde_json::to_string(&run(&f, &shuffled)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_predictions_are_listed() {
    let f = fixture(20, 5);
    let preds: Vec<_> = f.gold.iter().skip(2).map(|(id, l)| one_hot(id, *l)).collect();
    let err = evaluate(
        &EvalInputs {
            predictions: &preds,
            gold: &f.gold,
            manifest: &f.manifest,
            split: None,
            pipeline: BTreeMap::new(),
        },
        &cfg(),
    )
    .unwrap_err();
    match err {
        ReportError::MissingPredictions(ids) => assert_eq!(ids, vec!["0-00000", "0-00001"]),
        e => panic!("unexpected {e}"),
    }
}

/// Builds a manifest and split with the published per-environment fold
/// counts, then renders the environment table.
#[test]
fn environment_distribution_table() {
    let counts = [
        (Environment::Urban, [8508, 759, 681]),
        (Environment::Rural, [32723, 4283, 4436]),
    ];
    let mut manifest = Manifest::default();
    let mut split = SplitAssignment::default();
    let mut gold = Vec::new();
    let mut rng = SeededRng::new(9);
    for (env, per_fold) in counts {
        for (fold, n) in Fold::ALL.into_iter().zip(per_fold) {
            for i in 0..n {
                let id = format!("{}-{}-{i:05}", env.as_str(), fold.as_str());
                let child = format!("{}-{}-k{}", env.as_str(), fold.as_str(), i % 50);
                manifest.clips.push(clip(&id, &child, "en", env, 12));
                split.clip_to_fold.insert(id.clone(), fold);
                split.child_to_fold.insert(child, fold);
                if fold == Fold::Test {
                    gold.push((id, random_label(&mut rng)));
                }
            }
        }
    }
    assert_eq!(manifest.clips.len(), 51390);
    let preds: Vec<_> = gold.iter().map(|(id, l)| one_hot(id, *l)).collect();
    let cfg = EvalConfig {
        strata: vec![StratumKey::Environment],
        bootstrap: BootstrapConfig {
            resamples: 100,
            level: 0.95,
            seed: 1,
        },
        ..Default::default()
    };
    let r = evaluate(
        &EvalInputs {
            predictions: &preds,
            gold: &gold,
            manifest: &manifest,
            split: Some(&split),
            pipeline: BTreeMap::new(),
        },
        &cfg,
    )
    .unwrap();
    let table = render_stratum_table(&r, "environment").unwrap();
    for row in [
        "| | Urban | Rural | Total |",
        "| Train Clips | 8508 | 32723 | 41231 |",
        "| Dev Clips | 759 | 4283 | 5042 |",
        "| Test Clips | 681 | 4436 | 5117 |",
        "| Total Clips | 9948 | 41442 | 51390 |",
        "| Evaluated Clips | 681 | 4436 | 5117 |",
        "| UAR (SD) | 100.0 (0.00) | 100.0 (0.00) | 100.0 (0.00) |",
    ] {
        assert!(table.contains(row), "missing `{row}` in\n{table}");
    }
    assert!(render_markdown(&r).contains("| Train Clips | 8508 | 32723 | 41231 |"));
}

fn stub(finetune: &str, dataset: &str, uar: f64) -> EvaluationReport {
    let f = fixture(10, 8);
    let preds: Vec<_> = f.gold.iter().map(|(id, l)| one_hot(id, *l)).collect();
    let mut r = run(&f, &preds);
    r.finetune_set = finetune.into();
    r.dataset_id = dataset.into();
    r.overall.uar = uar;
    r
}

#[test]
fn comparison_matrix_marks_missing_cells() {
    let reports = vec![
        stub("all", "lena", 61.2),
        stub("all", "babblecor", 44.0),
        stub("lena", "lena", 58.5),
    ];
    let t = compare_matrix(&reports).unwrap();
    assert_eq!(t.rows, vec!["all", "lena"]);
    assert_eq!(t.cols, vec!["lena", "babblecor"]);
    assert_eq!(t.cells, vec![vec![Some(61.2), Some(44.0)], vec![Some(58.5), None]]);
    assert_eq!(t.missing, vec![("lena".to_string(), "babblecor".to_string())]);
    let text = render_comparison(&t);
    assert!(text.contains("| lena | 58.5 | — |"));
    assert!(text.contains("3 of 4 cells populated. Missing: lena / babblecor."));

    let dup = vec![stub("all", "lena", 1.0), stub("all", "lena", 2.0)];
    assert!(matches!(compare_matrix(&dup), Err(ReportError::DuplicateKey(..))));
    assert!(matches!(compare_matrix(&[]), Err(ReportError::Empty)));
}
