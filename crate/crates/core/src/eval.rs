//! Detection metrics, stratified splits, evaluation runs and report rendering.
//!
//! Ransomware is the positive class throughout. Any metric whose denominator
//! is zero is [`Metric::Undefined`] and renders as `n/a`.

use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::classifiers::{train, ClassifierError, ClassifierKind, Hyperparams, TrainedModel};
use crate::features::{Dataset, Label};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("predictions ({predictions}) and truths ({truths}) differ in length")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(predictions: &[Label], truths: &[Label]) -> Result<ConfusionCounts, EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch { predictions: predictions.len(), truths: truths.len() });
    }
    if predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in predictions.iter().zip(truths) {
        match (p.is_positive(), t.is_positive()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// A rate in `[0, 1]`, or undefined when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Value(f64),
    Undefined,
}

impl Metric {
    pub fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Metric::Undefined
        } else {
            Metric::Value(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(v),
            Metric::Undefined => None,
        }
    }

    /// Percentage with two decimals, or `n/a`.
    pub fn percent(self) -> String {
        match self {
            Metric::Value(v) => format!("{:.2}", v * 100.0),
            Metric::Undefined => "n/a".to_string(),
        }
    }

    /// Unweighted mean of the defined values; undefined if none are defined.
    pub fn mean<I: IntoIterator<Item = Metric>>(items: I) -> Metric {
        let (sum, n) = items
            .into_iter()
            .filter_map(Metric::value)
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n == 0 {
            Metric::Undefined
        } else {
            Metric::Value(sum / n as f64)
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Value(v) => write!(f, "{v}"),
            Metric::Undefined => f.write_str("n/a"),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Metric::Value(v) => s.serialize_f64(*v),
            Metric::Undefined => s.serialize_str("n/a"),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Metric::Value(v)),
            Raw::Text(t) if t == "n/a" => Ok(Metric::Undefined),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"n/a\", found {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classifier: ClassifierKind,
    pub tpr: Metric,
    pub fpr: Metric,
    pub precision: Metric,
    pub recall: Metric,
    pub f_measure: Metric,
    pub accuracy: Metric,
    pub training_time: f64,
    pub counts: ConfusionCounts,
}

/// The six detection metrics for one confusion table. `classifier` and
/// `training_time` are filled in by the caller.
pub fn metrics(counts: &ConfusionCounts, classifier: ClassifierKind, training_time: f64) -> MetricsReport {
    let c = counts;
    let tpr = Metric::ratio(c.tp, c.tp + c.fn_);
    let precision = Metric::ratio(c.tp, c.tp + c.fp);
    let f_measure = match (precision, tpr) {
        (Metric::Value(p), Metric::Value(r)) if p + r > 0.0 => Metric::Value(2.0 * p * r / (p + r)),
        _ => Metric::Undefined,
    };
    MetricsReport {
        classifier,
        tpr,
        fpr: Metric::ratio(c.fp, c.fp + c.tn),
        precision,
        recall: tpr,
        f_measure,
        accuracy: Metric::ratio(c.tp + c.tn, c.total()),
        training_time,
        counts: *c,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitMode {
    /// Fraction of each class that goes to training.
    Holdout(f64),
    KFold(usize),
}

/// Stratified split configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { mode: SplitMode::Holdout(0.8), seed: 42 }
    }
}

/// Index sets into a dataset; both sides are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn shuffled_class_indices(dataset: &Dataset, seed: u64) -> [Vec<usize>; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes = [Vec::new(), Vec::new()];
    for (i, s) in dataset.samples.iter().enumerate() {
        classes[usize::from(!s.label.is_positive())].push(i);
    }
    for c in classes.iter_mut() {
        c.shuffle(&mut rng);
    }
    classes
}

/// Stratified holdout or k-fold partitions, deterministic in `spec.seed`.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Vec<Partition>, EvalError> {
    let per_class = [dataset.count(Label::Ransomware), dataset.count(Label::Benign)];
    if per_class.iter().any(|&n| n < 2) {
        return Err(EvalError::TooFewSamples(format!(
            "need at least 2 samples per class, have {} ransomware and {} benign",
            per_class[0], per_class[1]
        )));
    }
    let classes = shuffled_class_indices(dataset, spec.seed);
    match spec.mode {
        SplitMode::Holdout(ratio) => {
            if !(ratio > 0.0 && ratio < 1.0) {
                return Err(EvalError::InvalidSplit(format!("holdout ratio {ratio} must be in (0, 1)")));
            }
            let mut train = Vec::new();
            let mut test = Vec::new();
            for idx in &classes {
                let n = idx.len();
                let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
                train.extend_from_slice(&idx[..n_train]);
                test.extend_from_slice(&idx[n_train..]);
            }
            train.sort_unstable();
            test.sort_unstable();
            Ok(vec![Partition { train, test }])
        }
        SplitMode::KFold(k) => {
            if k < 2 {
                return Err(EvalError::InvalidSplit(format!("k = {k} must be at least 2")));
            }
            if per_class.iter().any(|&n| n < k) {
                return Err(EvalError::TooFewSamples(format!(
                    "{k} folds need at least {k} samples per class, have {} ransomware and {} benign",
                    per_class[0], per_class[1]
                )));
            }
            // Deal class by class with one running counter so fold sizes
            // differ by at most one overall as well as per class.
            let mut folds = vec![Vec::new(); k];
            for (slot, &i) in classes.iter().flatten().enumerate() {
                folds[slot % k].push(i);
            }
            Ok((0..k)
                .map(|f| {
                    let mut test = folds[f].clone();
                    test.sort_unstable();
                    let mut train: Vec<usize> =
                        folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, v)| v.iter().copied()).collect();
                    train.sort_unstable();
                    Partition { train, test }
                })
                .collect())
        }
    }
}

/// One trained-and-tested partition.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub report: MetricsReport,
    pub model: TrainedModel,
    pub partition: Partition,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub folds: Vec<FoldResult>,
    /// Per-metric unweighted mean over folds (equal to the single fold for holdout).
    pub summary: MetricsReport,
}

/// Scores a trained model on the given samples.
pub fn test_model(model: &TrainedModel, test: &Dataset) -> Result<MetricsReport, EvalError> {
    let predictions = test
        .samples
        .iter()
        .map(|s| model.predict(&s.features.0).map(|p| p.label))
        .collect::<Result<Vec<_>, _>>()?;
    let truths: Vec<Label> = test.samples.iter().map(|s| s.label).collect();
    let counts = confusion(&predictions, &truths)?;
    Ok(metrics(&counts, model.kind, model.training_time))
}

/// Trains on each training part and tests on the matching test part.
pub fn evaluate(
    kind: ClassifierKind,
    hyperparams: &Hyperparams,
    dataset: &Dataset,
    spec: &SplitSpec,
) -> Result<Evaluation, EvalError> {
    let partitions = split(dataset, spec)?;
    let mut folds = Vec::with_capacity(partitions.len());
    for partition in partitions {
        let model = train(kind, hyperparams, &dataset.subset(&partition.train))?;
        let report = test_model(&model, &dataset.subset(&partition.test))?;
        folds.push(FoldResult { report, model, partition });
    }
    let summary = summarize(kind, folds.iter().map(|f| &f.report));
    Ok(Evaluation { folds, summary })
}

fn summarize<'a>(kind: ClassifierKind, reports: impl Iterator<Item = &'a MetricsReport> + Clone) -> MetricsReport {
    let mean = |get: fn(&MetricsReport) -> Metric| Metric::mean(reports.clone().map(get));
    let n = reports.clone().count() as f64;
    let mut counts = ConfusionCounts::default();
    for r in reports.clone() {
        counts.tp += r.counts.tp;
        counts.fp += r.counts.fp;
        counts.tn += r.counts.tn;
        counts.fn_ += r.counts.fn_;
    }
    MetricsReport {
        classifier: kind,
        tpr: mean(|r| r.tpr),
        fpr: mean(|r| r.fpr),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f_measure: mean(|r| r.f_measure),
        accuracy: mean(|r| r.accuracy),
        training_time: reports.map(|r| r.training_time).sum::<f64>() / n,
        counts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub classifier: ClassifierKind,
    pub training_time: f64,
}

/// Training time per kind on the first training partition of `spec`, run
/// sequentially in the given order.
pub fn benchmark(
    kinds: &[ClassifierKind],
    hyperparams: &dyn Fn(ClassifierKind) -> Hyperparams,
    dataset: &Dataset,
    spec: &SplitSpec,
) -> Result<Vec<TimingRow>, EvalError> {
    if kinds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let partition = split(dataset, spec)?.swap_remove(0);
    let train_set = dataset.subset(&partition.train);
    kinds
        .iter()
        .map(|&kind| {
            let model = train(kind, &hyperparams(kind), &train_set)?;
            Ok(TimingRow { classifier: kind, training_time: model.training_time })
        })
        .collect()
}

pub const REPORT_CSV_HEADER: &str =
    "classifier,TPR(%),FPR(%),Precision,Recall,F-measure,Accuracy score,training_time_s";
pub const TIMING_CSV_HEADER: &str = "classifier,training_time_s";

/// Metrics table as CSV. All six metrics are printed as percentages with two
/// decimals; training time in seconds with six decimals.
pub fn render_report_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    out.push_str(REPORT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.6}",
            r.classifier,
            r.tpr.percent(),
            r.fpr.percent(),
            r.precision.percent(),
            r.recall.percent(),
            r.f_measure.percent(),
            r.accuracy.percent(),
            r.training_time
        );
    }
    out
}

/// JSON document with the run seed and the full-precision reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub seed: u64,
    pub reports: Vec<MetricsReport>,
}

pub fn render_report_json(seed: u64, reports: &[MetricsReport]) -> String {
    let doc = ReportDocument { seed, reports: reports.to_vec() };
    serde_json::to_string_pretty(&doc).expect("reports always serialize")
}

pub fn parse_report_json(text: &str) -> Result<ReportDocument, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn render_timing_csv(rows: &[TimingRow]) -> String {
    let mut out = String::new();
    out.push_str(TIMING_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{:.6}", r.classifier, r.training_time);
    }
    out
}
