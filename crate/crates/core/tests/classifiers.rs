use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ransomflow::classifiers::bayes::BayesParams;
use ransomflow::classifiers::forest::ForestParams;
use ransomflow::classifiers::mlp::MlpModel;
use ransomflow::classifiers::{FamilyParams, ModelFormatError, ModelParams};
use ransomflow::features::FEATURE_COUNT;
use ransomflow::synthetic::gaussian_clusters;
use ransomflow::{load_model, save_model, train, ClassifierKind, Dataset, FeatureVector, Hyperparams, Label, LabeledSample};

fn random_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dataset::new(
        (0..n)
            .map(|i| {
                let mut x = [0.0; FEATURE_COUNT];
                x.iter_mut().for_each(|v| *v = rng.gen_range(-100.0..100.0));
                let label = if i % 2 == 0 { Label::Ransomware } else { Label::Benign };
                LabeledSample { features: FeatureVector(x), label, origin: None }
            })
            .collect(),
    )
}

fn random_queries(n: usize, seed: u64) -> Vec<[f64; FEATURE_COUNT]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut x = [0.0; FEATURE_COUNT];
            x.iter_mut().for_each(|v| *v = rng.gen_range(-150.0..150.0));
            x
        })
        .collect()
}

fn quick(kind: ClassifierKind) -> Hyperparams {
    let mut hp = Hyperparams::default_for(kind);
    match &mut hp.family {
        FamilyParams::Mlp(p) => p.epochs = 100,
        FamilyParams::Forest(p) => p.trees = 15,
        FamilyParams::Svm(p) => p.iterations = 5_000,
        _ => {}
    }
    hp
}

#[test]
fn same_inputs_give_byte_identical_models() {
    let ds = random_dataset(60, 1);
    for kind in ClassifierKind::ALL {
        let a = save_model(&train(kind, &quick(kind), &ds).unwrap());
        let b = save_model(&train(kind, &quick(kind), &ds).unwrap());
        assert_eq!(a, b, "{kind}");
        let other_seed = save_model(&train(kind, &quick(kind).with_seed(7), &ds).unwrap());
        if matches!(kind, ClassifierKind::MultilayerPerceptron | ClassifierKind::RandomForest | ClassifierKind::SupportVectorMachine) {
            assert_ne!(a, other_seed, "{kind} should depend on the seed");
        }
    }
}

#[test]
fn loaded_models_predict_identically() {
    let ds = random_dataset(80, 2);
    let queries = random_queries(1000, 3);
    for kind in ClassifierKind::ALL {
        let model = train(kind, &quick(kind), &ds).unwrap();
        let loaded = load_model(&save_model(&model)).unwrap();
        assert_eq!(loaded.fingerprint(), model.fingerprint());
        for q in &queries {
            let (p, r) = (model.predict(q).unwrap(), loaded.predict(q).unwrap());
            assert_eq!(p.label, r.label);
            assert_eq!(p.score.to_bits(), r.score.to_bits());
        }
    }
}

#[test]
fn corrupted_models_are_rejected() {
    let model = train(ClassifierKind::DecisionTreeJ48, &quick(ClassifierKind::DecisionTreeJ48), &random_dataset(20, 4)).unwrap();
    let bytes = save_model(&model);
    let mut flipped = bytes.clone();
    flipped[20] ^= 1;
    assert_eq!(load_model(&flipped), Err(ModelFormatError::ChecksumFailure));
    assert_eq!(load_model(&bytes[..bytes.len() - 1]), Err(ModelFormatError::ChecksumFailure));
    let mut version = bytes.clone();
    version[8] = 9;
    assert!(matches!(load_model(&version), Err(ModelFormatError::VersionMismatch { found: 9, expected: 1 })));
    assert!(matches!(load_model(b"not a model at all"), Err(ModelFormatError::MalformedModel(_))));
}

#[test]
fn single_tree_forest_is_the_tree() {
    let ds = random_dataset(120, 5);
    let tree = train(ClassifierKind::DecisionTreeJ48, &Hyperparams::default_for(ClassifierKind::DecisionTreeJ48), &ds).unwrap();
    let mut hp = Hyperparams::default_for(ClassifierKind::RandomForest);
    hp.family = FamilyParams::Forest(ForestParams { trees: 1, bootstrap: false, features_per_split: Some(FEATURE_COUNT), ..Default::default() });
    let forest = train(ClassifierKind::RandomForest, &hp, &ds).unwrap();
    if let (ModelParams::Tree(t), ModelParams::Forest(f)) = (&tree.params, &forest.params) {
        assert_eq!(&f.trees[0], t);
    } else {
        panic!("unexpected parameter families");
    }
    for q in random_queries(500, 6) {
        assert_eq!(tree.predict(&q).unwrap(), forest.predict(&q).unwrap());
    }
}

#[test]
fn tree_fits_conflict_free_data() {
    let ds = random_dataset(300, 7);
    let tree = train(ClassifierKind::DecisionTreeJ48, &Hyperparams::default_for(ClassifierKind::DecisionTreeJ48), &ds).unwrap();
    for s in &ds.samples {
        assert_eq!(tree.predict(&s.features.0).unwrap().label, s.label);
    }
}

#[test]
fn mlp_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let xs: Vec<Vec<f64>> = (0..10).map(|_| (0..FEATURE_COUNT).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
    let ys: Vec<f64> = (0..10).map(|i| f64::from(i % 2)).collect();
    let rows: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let model = MlpModel::init(FEATURE_COUNT, 4, 9);
    let analytic = model.gradient(&rows, &ys);
    let base = model.parameters();
    assert_eq!(analytic.len(), FEATURE_COUNT * 4 + 4 + 4 + 1);
    let h = 1e-5;
    for i in 0..base.len() {
        let mut probe = model.clone();
        let mut p = base.clone();
        p[i] += h;
        probe.set_parameters(&p);
        let up = probe.loss(&rows, &ys);
        p[i] -= 2.0 * h;
        probe.set_parameters(&p);
        let down = probe.loss(&rows, &ys);
        let numeric = (up - down) / (2.0 * h);
        let rel = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-8);
        assert!(rel < 1e-4, "parameter {i}: analytic {} numeric {numeric}", analytic[i]);
    }
}

#[test]
fn every_family_separates_clusters() {
    let ds = gaussian_clusters(60, 60, 5.0, 10);
    for kind in ClassifierKind::ALL {
        let model = train(kind, &quick(kind), &ds).unwrap();
        let correct = ds.samples.iter().filter(|s| model.predict(&s.features.0).unwrap().label == s.label).count();
        assert!(correct as f64 / ds.len() as f64 >= 0.95, "{kind}: {correct}/{}", ds.len());
    }
}

#[test]
fn zeroed_addresses_are_ignored_at_prediction() {
    let ds = random_dataset(60, 11);
    for kind in ClassifierKind::ALL {
        let mut hp = quick(kind);
        hp.zero_addresses = true;
        let model = train(kind, &hp, &ds).unwrap();
        for mut q in random_queries(50, 12) {
            let p = model.predict(&q).unwrap();
            q[1] = 3e9;
            q[3] = 1.0;
            assert_eq!(model.predict(&q).unwrap(), p, "{kind}");
        }
    }
}

#[test]
fn single_class_training_is_refused() {
    let mut ds = random_dataset(10, 13);
    ds.samples.iter_mut().for_each(|s| s.label = Label::Benign);
    for kind in ClassifierKind::ALL {
        assert!(train(kind, &quick(kind), &ds).is_err());
    }
}

fn map_features(ds: &Dataset, f: impl Fn(usize, f64) -> f64) -> Dataset {
    Dataset::new(
        ds.samples
            .iter()
            .map(|s| {
                let mut x = s.features.0;
                x.iter_mut().enumerate().for_each(|(i, v)| *v = f(i, *v));
                LabeledSample { features: FeatureVector(x), ..s.clone() }
            })
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bayes_ignores_a_common_unit(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let ds = gaussian_clusters(15, 15, 1.0, seed);
        let scaled = map_features(&ds, |_, v| v * scale);
        let kind = ClassifierKind::BayesNetwork;
        let a = train(kind, &quick(kind), &ds).unwrap();
        let b = train(kind, &quick(kind), &scaled).unwrap();
        for (s, t) in ds.samples.iter().zip(&scaled.samples) {
            let (p, q) = (a.predict(&s.features.0).unwrap(), b.predict(&t.features.0).unwrap());
            prop_assert!((p.score - q.score).abs() < 1e-9);
        }
    }

    // The smoothing term follows the largest variance, so per-feature units
    // only drop out when smoothing is negligible.
    #[test]
    fn bayes_ignores_feature_units_without_smoothing(seed in any::<u64>(), scale in prop::array::uniform13(0.1f64..10.0)) {
        let ds = gaussian_clusters(15, 15, 1.0, seed);
        let scaled = map_features(&ds, |i, v| v * scale[i]);
        let kind = ClassifierKind::BayesNetwork;
        let mut hp = quick(kind);
        hp.family = FamilyParams::Bayes(BayesParams { var_smoothing: 1e-15 });
        let a = train(kind, &hp, &ds).unwrap();
        let b = train(kind, &hp, &scaled).unwrap();
        for (s, t) in ds.samples.iter().zip(&scaled.samples) {
            let (p, q) = (a.predict(&s.features.0).unwrap(), b.predict(&t.features.0).unwrap());
            prop_assert!((p.score - q.score).abs() < 1e-6, "{} vs {}", p.score, q.score);
        }
    }

    #[test]
    fn knn_ignores_positive_affine_maps(
        seed in any::<u64>(),
        scale in prop::array::uniform13(0.5f64..4.0),
        shift in prop::array::uniform13(-50.0f64..50.0),
    ) {
        let ds = gaussian_clusters(15, 15, 1.0, seed);
        let mapped = map_features(&ds, |i, v| v * scale[i] + shift[i]);
        let kind = ClassifierKind::KNearestNeighbor;
        let a = train(kind, &quick(kind), &ds).unwrap();
        let b = train(kind, &quick(kind), &mapped).unwrap();
        for (s, t) in ds.samples.iter().zip(&mapped.samples) {
            prop_assert_eq!(a.predict(&s.features.0).unwrap().label, b.predict(&t.features.0).unwrap().label);
        }
    }

    #[test]
    fn svm_separates_separable_data(seed in any::<u64>()) {
        let ds = gaussian_clusters(30, 30, 8.0, seed);
        let kind = ClassifierKind::SupportVectorMachine;
        let model = train(kind, &Hyperparams::default_for(kind).with_seed(seed), &ds).unwrap();
        for s in &ds.samples {
            prop_assert_eq!(model.predict(&s.features.0).unwrap().label, s.label);
        }
    }

    #[test]
    fn tree_leaves_agree_with_majority(seed in any::<u64>()) {
        let ds = random_dataset(40, seed);
        let kind = ClassifierKind::DecisionTreeJ48;
        let model = train(kind, &quick(kind), &ds).unwrap();
        for s in &ds.samples {
            let p = model.predict(&s.features.0).unwrap();
            prop_assert!((0.0..=1.0).contains(&p.score));
            prop_assert_eq!(p.label, s.label);
        }
    }
}
