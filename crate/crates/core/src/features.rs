//! Feature encoding, labeled datasets and min-max scaling.

use std::fmt::{self, Write as _};
use std::io::Read;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::conversation::{
    read_conversation_rows, write_conversation_fields, Conversation, ConversationError, ImportWarning,
    ValidationMode, CONVERSATION_CSV_HEADER,
};

pub const FEATURE_COUNT: usize = 13;

/// Feature names in vector order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "protocol",
    "address_a",
    "port_a",
    "address_b",
    "port_b",
    "packets",
    "bytes",
    "packets_ab",
    "bytes_ab",
    "packets_ba",
    "bytes_ba",
    "rel_start",
    "duration",
];

/// Positions of the two address features.
pub const ADDRESS_FEATURES: [usize; 2] = [1, 3];

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no conversation sets to merge, or set {0} is empty")]
    EmptyInput(usize),
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("feature {index} is not finite")]
    NonFiniteFeature { index: usize },
    #[error("dataset CSV: {0}")]
    Csv(#[from] ConversationError),
    #[error("line {line}: label must be `ransomware` or `benign`, found `{value}`")]
    BadLabel { line: u64, value: String },
}

/// Fixed-order vector of the 13 conversation features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }

    /// Builds a vector from a slice, checking length and finiteness.
    pub fn from_slice(values: &[f64]) -> Result<Self, FeatureError> {
        let arr: [f64; FEATURE_COUNT] = values
            .try_into()
            .map_err(|_| FeatureError::DimensionMismatch { expected: FEATURE_COUNT, found: values.len() })?;
        let v = FeatureVector(arr);
        v.check_finite()?;
        Ok(v)
    }

    pub fn check_finite(&self) -> Result<(), FeatureError> {
        match self.0.iter().position(|x| !x.is_finite()) {
            Some(index) => Err(FeatureError::NonFiniteFeature { index }),
            None => Ok(()),
        }
    }

    /// Copy with both address features set to zero.
    pub fn without_addresses(mut self) -> Self {
        for i in ADDRESS_FEATURES {
            self.0[i] = 0.0;
        }
        self
    }
}

/// Class label. Ransomware is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Ransomware,
    Benign,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Ransomware
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Ransomware => "ransomware",
            Label::Benign => "benign",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ransomware" => Ok(Label::Ransomware),
            "benign" => Ok(Label::Benign),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: Label,
    pub origin: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledSample>) -> Self {
        Self { samples }
    }

    pub fn feature_names(&self) -> &'static [&'static str; FEATURE_COUNT] {
        &FEATURE_NAMES
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    /// Samples at the given indices, in index order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset { samples: indices.iter().map(|&i| self.samples[i].clone()).collect() }
    }

    /// SHA-256 over the feature bits and labels, truncated to 64 bits.
    /// Origins are not part of the fingerprint.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update((self.samples.len() as u64).to_le_bytes());
        for s in &self.samples {
            for v in s.features.0 {
                hasher.update(v.to_bits().to_le_bytes());
            }
            hasher.update([u8::from(s.label.is_positive())]);
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    pub fn without_addresses(&self) -> Dataset {
        Dataset {
            samples: self
                .samples
                .iter()
                .map(|s| LabeledSample { features: s.features.without_addresses(), ..s.clone() })
                .collect(),
        }
    }
}

/// Encodes a conversation. Addresses become their big-endian `u32` value.
pub fn encode(c: &Conversation) -> FeatureVector {
    FeatureVector([
        f64::from(c.protocol),
        f64::from(u32::from(c.address_a)),
        f64::from(c.port_a),
        f64::from(u32::from(c.address_b)),
        f64::from(c.port_b),
        c.packets_total as f64,
        c.bytes_total as f64,
        c.packets_ab as f64,
        c.bytes_ab as f64,
        c.packets_ba as f64,
        c.bytes_ba as f64,
        c.rel_start,
        c.duration,
    ])
}

/// Inverse of [`encode`] for vectors that came from a conversation.
pub fn decode(v: &FeatureVector) -> Conversation {
    let x = &v.0;
    Conversation {
        protocol: x[0] as u8,
        address_a: Ipv4Addr::from(x[1] as u32),
        port_a: x[2] as u16,
        address_b: Ipv4Addr::from(x[3] as u32),
        port_b: x[4] as u16,
        packets_total: x[5] as u64,
        bytes_total: x[6] as u64,
        packets_ab: x[7] as u64,
        bytes_ab: x[8] as u64,
        packets_ba: x[9] as u64,
        bytes_ba: x[10] as u64,
        rel_start: x[11],
        duration: x[12],
    }
}

/// Per-feature min-max ranges fitted on a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub fitted_on: u64,
}

impl ScalingParams {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Maps each value to `(v - min) / (max - min)` clamped to `[0, 1]`.
    /// Constant features map to 0.
    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if values.len() != self.dim() {
            return Err(FeatureError::DimensionMismatch { expected: self.dim(), found: values.len() });
        }
        Ok(values
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| {
                let range = hi - lo;
                if range > 0.0 {
                    ((v - lo) / range).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect())
    }
}

pub fn fit_scaler(dataset: &Dataset) -> Result<ScalingParams, FeatureError> {
    if dataset.is_empty() {
        return Err(FeatureError::EmptyDataset);
    }
    let mut min = vec![f64::INFINITY; FEATURE_COUNT];
    let mut max = vec![f64::NEG_INFINITY; FEATURE_COUNT];
    for s in &dataset.samples {
        for (i, &v) in s.features.0.iter().enumerate() {
            min[i] = min[i].min(v);
            max[i] = max[i].max(v);
        }
    }
    Ok(ScalingParams { min, max, fitted_on: dataset.fingerprint() })
}

pub fn apply_scaler(params: &ScalingParams, vector: &[f64]) -> Result<FeatureVector, FeatureError> {
    let scaled = params.apply(vector)?;
    FeatureVector::from_slice(&scaled)
}

/// One labeled group of conversations, typically one capture file.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub conversations: Vec<Conversation>,
    pub label: Label,
    pub origin: Option<String>,
}

/// Encodes and labels every conversation; samples keep the input order.
pub fn label_and_merge(sets: &[LabeledSet]) -> Result<Dataset, FeatureError> {
    if sets.is_empty() {
        return Err(FeatureError::EmptyInput(0));
    }
    if let Some(i) = sets.iter().position(|s| s.conversations.is_empty()) {
        return Err(FeatureError::EmptyInput(i));
    }
    let samples = sets
        .iter()
        .flat_map(|set| {
            set.conversations.iter().map(move |c| LabeledSample {
                features: encode(c),
                label: set.label,
                origin: set.origin.clone(),
            })
        })
        .collect();
    Ok(Dataset { samples })
}

/// Writes the dataset CSV: conversation columns plus a `label` column.
pub fn dataset_to_csv(dataset: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CONVERSATION_CSV_HEADER},label");
    for s in &dataset.samples {
        write_conversation_fields(&mut out, &decode(&s.features));
        let _ = writeln!(out, ",{}", s.label);
    }
    out
}

pub fn csv_to_dataset<R: Read>(input: R, mode: ValidationMode) -> Result<(Dataset, Vec<ImportWarning>), FeatureError> {
    let mut samples = Vec::new();
    let mut warnings = Vec::new();
    let mut bad_label = None;
    let header = read_conversation_rows(
        input,
        FEATURE_COUNT + 1,
        mode,
        |conv, record, line| {
            let value = record.get(FEATURE_COUNT).unwrap_or("");
            match value.parse::<Label>() {
                Ok(label) => samples.push(LabeledSample { features: encode(&conv), label, origin: None }),
                Err(_) => {
                    if bad_label.is_none() {
                        bad_label = Some(FeatureError::BadLabel { line, value: value.to_string() });
                    }
                }
            }
            Ok(())
        },
        &mut warnings,
    )?;
    if header[FEATURE_COUNT] != "label" {
        return Err(ConversationError::SchemaMismatch(header.join(",")).into());
    }
    if let Some(e) = bad_label {
        return Err(e);
    }
    Ok((Dataset { samples }, warnings))
}
