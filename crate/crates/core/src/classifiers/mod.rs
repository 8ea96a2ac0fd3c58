//! The six classifier families, their hyperparameters and the shared
//! train/predict entry points.
//!
//! Every family produces a score in `[0, 1]` for the Ransomware class and the
//! decision rule is the same everywhere: `score >= 0.5` means Ransomware.
//! Distance- and gradient-based families (KNN, MLP, SVM) train on min-max
//! scaled features; the tree family and Bayes use raw values.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{fit_scaler, Dataset, Label, ScalingParams, FEATURE_COUNT};

pub mod bayes;
pub mod forest;
pub mod knn;
pub mod mlp;
mod model_io;
pub mod svm;
pub mod tree;

pub use model_io::{load_model, save_model, ModelFormatError, MODEL_FORMAT_VERSION, MODEL_MAGIC};

use bayes::{BayesModel, BayesParams};
use forest::{ForestParams, RandomForest};
use knn::{KnnModel, KnnParams};
use mlp::{MlpModel, MlpParams};
use svm::{SvmModel, SvmParams};
use tree::{DecisionTree, TreeParams};

/// The six families, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassifierKind {
    KNearestNeighbor,
    MultilayerPerceptron,
    DecisionTreeJ48,
    RandomForest,
    SupportVectorMachine,
    BayesNetwork,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 6] = [
        ClassifierKind::KNearestNeighbor,
        ClassifierKind::MultilayerPerceptron,
        ClassifierKind::DecisionTreeJ48,
        ClassifierKind::RandomForest,
        ClassifierKind::SupportVectorMachine,
        ClassifierKind::BayesNetwork,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::KNearestNeighbor => "KNearestNeighbor",
            ClassifierKind::MultilayerPerceptron => "MultilayerPerceptron",
            ClassifierKind::DecisionTreeJ48 => "DecisionTreeJ48",
            ClassifierKind::RandomForest => "RandomForest",
            ClassifierKind::SupportVectorMachine => "SupportVectorMachine",
            ClassifierKind::BayesNetwork => "BayesNetwork",
        }
    }

    /// Short command-line name.
    pub fn short_name(self) -> &'static str {
        match self {
            ClassifierKind::KNearestNeighbor => "knn",
            ClassifierKind::MultilayerPerceptron => "mlp",
            ClassifierKind::DecisionTreeJ48 => "j48",
            ClassifierKind::RandomForest => "rf",
            ClassifierKind::SupportVectorMachine => "svm",
            ClassifierKind::BayesNetwork => "bayes",
        }
    }

    /// Whether the family trains on min-max scaled features.
    pub fn uses_scaler(self) -> bool {
        matches!(
            self,
            ClassifierKind::KNearestNeighbor | ClassifierKind::MultilayerPerceptron | ClassifierKind::SupportVectorMachine
        )
    }

    pub(crate) fn tag(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(usize::from(tag)).copied()
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.short_name() == lower || k.name().to_ascii_lowercase() == lower)
            .ok_or_else(|| format!("unknown classifier `{s}` (expected one of knn, mlp, j48, rf, svm, bayes)"))
    }
}

/// Family-specific hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilyParams {
    Knn(KnnParams),
    Mlp(MlpParams),
    Tree(TreeParams),
    Forest(ForestParams),
    Svm(SvmParams),
    Bayes(BayesParams),
}

impl FamilyParams {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            FamilyParams::Knn(_) => ClassifierKind::KNearestNeighbor,
            FamilyParams::Mlp(_) => ClassifierKind::MultilayerPerceptron,
            FamilyParams::Tree(_) => ClassifierKind::DecisionTreeJ48,
            FamilyParams::Forest(_) => ClassifierKind::RandomForest,
            FamilyParams::Svm(_) => ClassifierKind::SupportVectorMachine,
            FamilyParams::Bayes(_) => ClassifierKind::BayesNetwork,
        }
    }

    pub fn default_for(kind: ClassifierKind) -> Self {
        match kind {
            ClassifierKind::KNearestNeighbor => FamilyParams::Knn(KnnParams::default()),
            ClassifierKind::MultilayerPerceptron => FamilyParams::Mlp(MlpParams::default()),
            ClassifierKind::DecisionTreeJ48 => FamilyParams::Tree(TreeParams::default()),
            ClassifierKind::RandomForest => FamilyParams::Forest(ForestParams::default()),
            ClassifierKind::SupportVectorMachine => FamilyParams::Svm(SvmParams::default()),
            ClassifierKind::BayesNetwork => FamilyParams::Bayes(BayesParams::default()),
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            FamilyParams::Knn(p) => p.validate(),
            FamilyParams::Mlp(p) => p.validate(),
            FamilyParams::Tree(p) => p.validate(),
            FamilyParams::Forest(p) => p.validate(),
            FamilyParams::Svm(p) => p.validate(),
            FamilyParams::Bayes(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub seed: u64,
    /// Zero both address features at train and predict time.
    pub zero_addresses: bool,
    pub family: FamilyParams,
}

impl Hyperparams {
    pub const DEFAULT_SEED: u64 = 42;

    pub fn default_for(kind: ClassifierKind) -> Self {
        Self { seed: Self::DEFAULT_SEED, zero_addresses: false, family: FamilyParams::default_for(kind) }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn kind(&self) -> ClassifierKind {
        self.family.kind()
    }
}

/// Learned state of one family.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Knn(KnnModel),
    Mlp(MlpModel),
    Tree(DecisionTree),
    Forest(RandomForest),
    Svm(SvmModel),
    Bayes(BayesModel),
}

impl ModelParams {
    fn score(&self, x: &[f64]) -> f64 {
        match self {
            ModelParams::Knn(m) => m.score(x),
            ModelParams::Mlp(m) => m.score(x),
            ModelParams::Tree(m) => m.score(x),
            ModelParams::Forest(m) => m.score(x),
            ModelParams::Svm(m) => m.score(x),
            ModelParams::Bayes(m) => m.score(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub kind: ClassifierKind,
    pub hyperparams: Hyperparams,
    pub params: ModelParams,
    pub scaler: Option<ScalingParams>,
    /// Wall-clock seconds spent in the fit. Not persisted: a loaded model reports 0.
    pub training_time: f64,
    /// Fingerprint of the dataset the model was fitted on.
    pub train_fingerprint: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    /// Confidence for the Ransomware class.
    pub score: f64,
}

impl Prediction {
    pub fn from_score(score: f64) -> Self {
        let label = if score >= 0.5 { Label::Ransomware } else { Label::Benign };
        Self { label, score }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("training data must contain both classes")]
    SingleClassDataset,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("sample {sample}: feature {index} is not finite")]
    NonFiniteFeature { sample: usize, index: usize },
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Training samples as plain arrays plus boolean positive-class labels.
pub(crate) struct TrainingData {
    pub x: Vec<[f64; FEATURE_COUNT]>,
    pub y: Vec<bool>,
}

/// Fits a classifier. Every stochastic choice derives from `hyperparams.seed`,
/// so identical inputs produce identical models.
pub fn train(kind: ClassifierKind, hyperparams: &Hyperparams, dataset: &Dataset) -> Result<TrainedModel, ClassifierError> {
    if hyperparams.kind() != kind {
        return Err(ClassifierError::InvalidHyperparams(format!(
            "hyperparameters are for {}, not {kind}",
            hyperparams.kind()
        )));
    }
    hyperparams.family.validate().map_err(ClassifierError::InvalidHyperparams)?;
    for (sample, s) in dataset.samples.iter().enumerate() {
        if let Some(index) = s.features.0.iter().position(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFiniteFeature { sample, index });
        }
    }
    let positives = dataset.count(Label::Ransomware);
    if positives == 0 || positives == dataset.len() {
        return Err(ClassifierError::SingleClassDataset);
    }

    let prepared = if hyperparams.zero_addresses { dataset.without_addresses() } else { dataset.clone() };
    let train_fingerprint = dataset.fingerprint();
    let scaler = if kind.uses_scaler() {
        Some(fit_scaler(&prepared).expect("dataset checked non-empty"))
    } else {
        None
    };
    let x = prepared
        .samples
        .iter()
        .map(|s| match &scaler {
            Some(sc) => sc.apply(&s.features.0).expect("dimension fixed").try_into().expect("13 features"),
            None => s.features.0,
        })
        .collect();
    let y = prepared.samples.iter().map(|s| s.label.is_positive()).collect();
    let data = TrainingData { x, y };

    let seed = hyperparams.seed;
    let started = Instant::now();
    let params = match &hyperparams.family {
        FamilyParams::Knn(p) => ModelParams::Knn(KnnModel::fit(p, &data)),
        FamilyParams::Mlp(p) => ModelParams::Mlp(MlpModel::fit(p, &data, seed)),
        FamilyParams::Tree(p) => ModelParams::Tree(DecisionTree::fit(p, &data)),
        FamilyParams::Forest(p) => ModelParams::Forest(RandomForest::fit(p, &data, seed)),
        FamilyParams::Svm(p) => ModelParams::Svm(SvmModel::fit(p, &data, seed)),
        FamilyParams::Bayes(p) => ModelParams::Bayes(BayesModel::fit(p, &data)),
    };
    let training_time = started.elapsed().as_secs_f64();

    Ok(TrainedModel { kind, hyperparams: hyperparams.clone(), params, scaler, training_time, train_fingerprint })
}

impl TrainedModel {
    /// Applies address masking and scaling exactly as during training.
    pub fn prepare(&self, vector: &[f64]) -> Result<[f64; FEATURE_COUNT], ClassifierError> {
        if vector.len() != FEATURE_COUNT {
            return Err(ClassifierError::DimensionMismatch { expected: FEATURE_COUNT, found: vector.len() });
        }
        if let Some(index) = vector.iter().position(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFiniteFeature { sample: 0, index });
        }
        let mut x: [f64; FEATURE_COUNT] = vector.try_into().expect("length checked");
        if self.hyperparams.zero_addresses {
            for i in crate::features::ADDRESS_FEATURES {
                x[i] = 0.0;
            }
        }
        if let Some(scaler) = &self.scaler {
            let scaled = scaler
                .apply(&x)
                .map_err(|_| ClassifierError::DimensionMismatch { expected: scaler.dim(), found: FEATURE_COUNT })?;
            x = scaled.try_into().expect("scaler has 13 entries");
        }
        Ok(x)
    }

    pub fn predict(&self, vector: &[f64]) -> Result<Prediction, ClassifierError> {
        let x = self.prepare(vector)?;
        Ok(Prediction::from_score(self.params.score(&x)))
    }

    /// Hex fingerprint of the serialized model (first 8 bytes of its checksum).
    pub fn fingerprint(&self) -> String {
        let bytes = save_model(self);
        let checksum = &bytes[bytes.len() - 32..];
        checksum[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn predict(model: &TrainedModel, vector: &[f64]) -> Result<Prediction, ClassifierError> {
    model.predict(vector)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
