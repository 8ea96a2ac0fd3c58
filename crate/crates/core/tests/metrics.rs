use proptest::prelude::*;
use ransomflow::classifiers::ClassifierKind;
use ransomflow::eval::{render_report_csv, Metric, REPORT_CSV_HEADER};
use ransomflow::{confusion, metrics, ConfusionCounts, Label};

fn label(positive: bool) -> Label {
    if positive {
        Label::Ransomware
    } else {
        Label::Benign
    }
}

fn swap(l: Label) -> Label {
    label(l == Label::Benign)
}

fn close(m: Metric, expected: Option<f64>) -> bool {
    match (m.value(), expected) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
        (None, None) => true,
        _ => false,
    }
}

fn counts() -> impl Strategy<Value = ConfusionCounts> {
    let n = prop_oneof![Just(0u64), 0u64..5, 0u64..1_000_000];
    (n.clone(), n.clone(), n.clone(), n).prop_map(|(tp, fp, tn, fn_)| ConfusionCounts { tp, fp, tn, fn_ })
}

proptest! {
    #[test]
    fn confusion_matches_a_tally(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let predictions: Vec<Label> = pairs.iter().map(|p| label(p.0)).collect();
        let truths: Vec<Label> = pairs.iter().map(|p| label(p.1)).collect();
        let c = confusion(&predictions, &truths).unwrap();
        let tally = |p: bool, t: bool| pairs.iter().filter(|&&x| x == (p, t)).count() as u64;
        prop_assert_eq!(c, ConfusionCounts { tp: tally(true, true), fp: tally(true, false), tn: tally(false, false), fn_: tally(false, true) });
        prop_assert_eq!(c.total(), pairs.len() as u64);
    }

    #[test]
    fn metrics_follow_their_formulas(c in counts()) {
        let r = metrics(&c, ClassifierKind::BayesNetwork, 0.0);
        let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
        let div = |a: f64, b: f64| (b != 0.0).then(|| a / b);
        let recall = div(tp, tp + fn_);
        let precision = div(tp, tp + fp);
        let f = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        prop_assert!(close(r.tpr, recall));
        prop_assert!(close(r.recall, recall));
        prop_assert!(close(r.fpr, div(fp, fp + tn)));
        prop_assert!(close(r.precision, precision));
        prop_assert!(close(r.f_measure, f));
        prop_assert!(close(r.accuracy, div(tp + tn, tp + tn + fp + fn_)));
        for m in [r.tpr, r.fpr, r.precision, r.recall, r.f_measure, r.accuracy] {
            if let Some(v) = m.value() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        if let (Some(f), Some(p), Some(rc)) = (r.f_measure.value(), r.precision.value(), r.recall.value()) {
            prop_assert!(f <= p.max(rc) + 1e-12 && f >= p.min(rc) - 1e-12);
        }
    }

    #[test]
    fn swapping_classes_swaps_rates(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let predictions: Vec<Label> = pairs.iter().map(|p| label(p.0)).collect();
        let truths: Vec<Label> = pairs.iter().map(|p| label(p.1)).collect();
        let swapped_p: Vec<Label> = predictions.iter().copied().map(swap).collect();
        let swapped_t: Vec<Label> = truths.iter().copied().map(swap).collect();
        let a = metrics(&confusion(&predictions, &truths).unwrap(), ClassifierKind::BayesNetwork, 0.0);
        let b = metrics(&confusion(&swapped_p, &swapped_t).unwrap(), ClassifierKind::BayesNetwork, 0.0);
        prop_assert_eq!(a.accuracy, b.accuracy);
        prop_assert!(close(b.tpr, a.fpr.value().map(|v| 1.0 - v)));
        prop_assert!(close(b.fpr, a.tpr.value().map(|v| 1.0 - v)));
    }
}

#[test]
fn degenerate_denominators_are_undefined() {
    let r = metrics(&ConfusionCounts::default(), ClassifierKind::KNearestNeighbor, 0.0);
    for m in [r.tpr, r.fpr, r.precision, r.recall, r.f_measure, r.accuracy] {
        assert_eq!(m, Metric::Undefined);
    }
    let csv = render_report_csv(&[r]);
    assert_eq!(csv.lines().next().unwrap(), REPORT_CSV_HEADER);
    assert!(csv.lines().nth(1).unwrap().contains("n/a"));
}

#[test]
fn confusion_rejects_length_mismatch() {
    assert!(confusion(&[Label::Benign], &[]).is_err());
    assert!(confusion(&[], &[]).is_err());
}
