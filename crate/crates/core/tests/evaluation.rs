use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ransomflow::eval::{benchmark, parse_report_json, render_report_json, split, Metric, SplitMode};
use ransomflow::synthetic::gaussian_clusters;
use ransomflow::{evaluate, ClassifierKind, Hyperparams, Label, SplitSpec};

#[test]
fn holdout_is_stratified_and_disjoint() {
    let ds = gaussian_clusters(396, 420, 4.0, 1);
    let parts = split(&ds, &SplitSpec::default()).unwrap();
    assert_eq!(parts.len(), 1);
    let p = &parts[0];
    let train: BTreeSet<usize> = p.train.iter().copied().collect();
    assert!(p.test.iter().all(|i| !train.contains(i)));
    assert_eq!(p.train.len() + p.test.len(), ds.len());
    let sub = ds.subset(&p.train);
    assert_eq!((sub.count(Label::Ransomware), sub.count(Label::Benign)), (317, 336));
}

#[test]
fn kfold_covers_every_sample_once() {
    let ds = gaussian_clusters(23, 31, 4.0, 2);
    let parts = split(&ds, &SplitSpec { mode: SplitMode::KFold(5), seed: 3 }).unwrap();
    let mut seen: Vec<usize> = parts.iter().flat_map(|p| p.test.iter().copied()).collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..ds.len()).collect::<Vec<_>>());
    let sizes: Vec<usize> = parts.iter().map(|p| p.test.len()).collect();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
}

#[test]
fn separable_clusters_are_classified_perfectly() {
    let ds = gaussian_clusters(100, 100, 10.0, 4);
    for kind in [ClassifierKind::KNearestNeighbor, ClassifierKind::DecisionTreeJ48, ClassifierKind::BayesNetwork] {
        let eval = evaluate(kind, &Hyperparams::default_for(kind), &ds, &SplitSpec::default()).unwrap();
        assert_eq!(eval.summary.accuracy, Metric::Value(1.0), "{kind}");
        assert_eq!(eval.summary.fpr, Metric::Value(0.0), "{kind}");
    }
}

#[test]
fn shuffled_labels_give_chance_accuracy() {
    let mut total = 0.0;
    for seed in 0..10 {
        let mut ds = gaussian_clusters(60, 60, 4.0, seed);
        let mut labels: Vec<Label> = ds.samples.iter().map(|s| s.label).collect();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 100));
        ds.samples.iter_mut().zip(labels).for_each(|(s, l)| s.label = l);
        let kind = ClassifierKind::BayesNetwork;
        let eval = evaluate(kind, &Hyperparams::default_for(kind), &ds, &SplitSpec { mode: SplitMode::KFold(4), seed }).unwrap();
        total += eval.summary.accuracy.value().unwrap();
    }
    let mean = total / 10.0;
    assert!((mean - 0.5).abs() <= 0.10, "mean accuracy {mean}");
}

#[test]
fn kfold_summary_is_the_fold_mean() {
    let ds = gaussian_clusters(40, 40, 1.0, 5);
    let kind = ClassifierKind::KNearestNeighbor;
    let eval = evaluate(kind, &Hyperparams::default_for(kind), &ds, &SplitSpec { mode: SplitMode::KFold(5), seed: 6 }).unwrap();
    assert_eq!(eval.folds.len(), 5);
    let mean = eval.folds.iter().map(|f| f.report.accuracy.value().unwrap()).sum::<f64>() / 5.0;
    assert!((eval.summary.accuracy.value().unwrap() - mean).abs() < 1e-12);
    let tp: u64 = eval.folds.iter().map(|f| f.report.counts.tp).sum();
    assert_eq!(eval.summary.counts.tp, tp);
    assert_eq!(eval.summary.counts.total(), ds.len() as u64);
}

#[test]
fn models_never_see_their_test_samples() {
    let ds = gaussian_clusters(30, 30, 2.0, 7);
    let kind = ClassifierKind::DecisionTreeJ48;
    let eval = evaluate(kind, &Hyperparams::default_for(kind), &ds, &SplitSpec { mode: SplitMode::KFold(3), seed: 8 }).unwrap();
    for fold in &eval.folds {
        assert_eq!(fold.model.train_fingerprint, ds.subset(&fold.partition.train).fingerprint());
        assert_ne!(fold.model.train_fingerprint, ds.fingerprint());
    }
}

#[test]
fn knn_fits_faster_than_mlp() {
    let ds = gaussian_clusters(396, 420, 4.0, 9);
    let rows = benchmark(
        &[ClassifierKind::KNearestNeighbor, ClassifierKind::MultilayerPerceptron],
        &Hyperparams::default_for,
        &ds,
        &SplitSpec::default(),
    )
    .unwrap();
    assert!(rows[0].training_time < rows[1].training_time, "{rows:?}");
}

#[test]
fn json_report_round_trips() {
    let ds = gaussian_clusters(20, 20, 4.0, 10);
    let reports: Vec<_> = ClassifierKind::ALL
        .into_iter()
        .map(|k| evaluate(k, &Hyperparams::default_for(k), &ds, &SplitSpec::default()).unwrap().summary)
        .collect();
    let doc = parse_report_json(&render_report_json(42, &reports)).unwrap();
    assert_eq!(doc.seed, 42);
    assert_eq!(doc.reports, reports);
}
