//! Versioned binary model file. The byte layout is documented in
//! `docs/model-format.md`; all integers and floats are little-endian and
//! floats are stored as their IEEE-754 bit patterns, so a round trip is exact.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{Label, ScalingParams, FEATURE_COUNT};

use super::bayes::{BayesModel, BayesParams};
use super::forest::{ForestParams, RandomForest};
use super::knn::{KnnModel, KnnParams};
use super::mlp::{MlpModel, MlpParams};
use super::svm::{SvmModel, SvmParams};
use super::tree::{DecisionTree, Node, TreeParams};
use super::{ClassifierKind, FamilyParams, Hyperparams, ModelParams, TrainedModel};

pub const MODEL_MAGIC: &[u8; 8] = b"RFMODEL\0";
pub const MODEL_FORMAT_VERSION: u16 = 1;
const CHECKSUM_LEN: usize = 32;
const HEADER_LEN: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum ModelFormatError {
    #[error("model format version {found} is not supported (this build reads version {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("model checksum does not match its contents (file truncated or corrupted)")]
    ChecksumFailure,
    #[error("malformed model: {0}")]
    MalformedModel(String),
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("collection too large for model file"));
    }
    fn f64s(&mut self, vs: &[f64]) {
        self.len(vs.len());
        vs.iter().for_each(|&v| self.f64(v));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

type ReadResult<T> = Result<T, ModelFormatError>;

fn malformed(msg: impl Into<String>) -> ModelFormatError {
    ModelFormatError::MalformedModel(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> ReadResult<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(malformed("unexpected end of model body"));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self) -> ReadResult<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> ReadResult<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> ReadResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> ReadResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> ReadResult<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn bool(&mut self) -> ReadResult<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(malformed(format!("invalid boolean byte {b}"))),
        }
    }
    fn len(&mut self) -> ReadResult<usize> {
        let n = self.u32()? as usize;
        // Every element takes at least one byte, so a larger count is corrupt.
        if n > self.buf.len() - self.pos {
            return Err(malformed("collection length exceeds file size"));
        }
        Ok(n)
    }
    fn f64s(&mut self) -> ReadResult<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn f64s_exact(&mut self, n: usize, what: &str) -> ReadResult<Vec<f64>> {
        let v = self.f64s()?;
        if v.len() != n {
            return Err(malformed(format!("{what}: expected {n} values, found {}", v.len())));
        }
        Ok(v)
    }
}

fn write_tree_params(w: &mut Writer, p: &TreeParams) {
    w.u64(p.min_leaf as u64);
    w.u64(p.max_depth.map_or(0, |d| d as u64));
}

fn read_tree_params(r: &mut Reader<'_>) -> ReadResult<TreeParams> {
    let min_leaf = r.u64()? as usize;
    let max_depth = match r.u64()? {
        0 => None,
        d => Some(d as usize),
    };
    Ok(TreeParams { min_leaf, max_depth })
}

fn write_family(w: &mut Writer, family: &FamilyParams) {
    match family {
        FamilyParams::Knn(p) => w.u64(p.k as u64),
        FamilyParams::Mlp(p) => {
            w.u64(p.hidden as u64);
            w.f64(p.learning_rate);
            w.u64(p.epochs as u64);
        }
        FamilyParams::Tree(p) => write_tree_params(w, p),
        FamilyParams::Forest(p) => {
            w.u64(p.trees as u64);
            w.u8(u8::from(p.bootstrap));
            w.u64(p.features_per_split.map_or(0, |m| m as u64));
            write_tree_params(w, &p.tree);
        }
        FamilyParams::Svm(p) => {
            w.f64(p.c);
            w.u64(p.iterations);
        }
        FamilyParams::Bayes(p) => w.f64(p.var_smoothing),
    }
}

fn read_family(r: &mut Reader<'_>, kind: ClassifierKind) -> ReadResult<FamilyParams> {
    Ok(match kind {
        ClassifierKind::KNearestNeighbor => FamilyParams::Knn(KnnParams { k: r.u64()? as usize }),
        ClassifierKind::MultilayerPerceptron => FamilyParams::Mlp(MlpParams {
            hidden: r.u64()? as usize,
            learning_rate: r.f64()?,
            epochs: r.u64()? as usize,
        }),
        ClassifierKind::DecisionTreeJ48 => FamilyParams::Tree(read_tree_params(r)?),
        ClassifierKind::RandomForest => FamilyParams::Forest(ForestParams {
            trees: r.u64()? as usize,
            bootstrap: r.bool()?,
            features_per_split: match r.u64()? {
                0 => None,
                m => Some(m as usize),
            },
            tree: read_tree_params(r)?,
        }),
        ClassifierKind::SupportVectorMachine => FamilyParams::Svm(SvmParams { c: r.f64()?, iterations: r.u64()? }),
        ClassifierKind::BayesNetwork => FamilyParams::Bayes(BayesParams { var_smoothing: r.f64()? }),
    })
}

fn write_tree(w: &mut Writer, t: &DecisionTree) {
    w.len(t.nodes.len());
    for node in &t.nodes {
        match *node {
            Node::Leaf { positives, negatives } => {
                w.u8(0);
                w.u32(positives);
                w.u32(negatives);
            }
            Node::Split { feature, threshold, left, right, positives, negatives } => {
                w.u8(1);
                w.u16(feature);
                w.f64(threshold);
                w.u32(left);
                w.u32(right);
                w.u32(positives);
                w.u32(negatives);
            }
        }
    }
}

fn read_tree(r: &mut Reader<'_>) -> ReadResult<DecisionTree> {
    let n = r.len()?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        nodes.push(match r.u8()? {
            0 => Node::Leaf { positives: r.u32()?, negatives: r.u32()? },
            1 => Node::Split {
                feature: r.u16()?,
                threshold: r.f64()?,
                left: r.u32()?,
                right: r.u32()?,
                positives: r.u32()?,
                negatives: r.u32()?,
            },
            t => return Err(malformed(format!("unknown tree node tag {t}"))),
        });
    }
    let tree = DecisionTree { nodes };
    if !tree.is_well_formed() {
        return Err(malformed("tree node links are inconsistent"));
    }
    Ok(tree)
}

fn write_params(w: &mut Writer, params: &ModelParams) {
    match params {
        ModelParams::Knn(m) => {
            w.u64(m.k as u64);
            w.len(m.points.len());
            for (p, label) in m.points.iter().zip(&m.labels) {
                p.iter().for_each(|&v| w.f64(v));
                w.u8(u8::from(label.is_positive()));
            }
        }
        ModelParams::Mlp(m) => {
            w.u64(m.inputs as u64);
            w.u64(m.hidden as u64);
            w.f64s(&m.w1);
            w.f64s(&m.b1);
            w.f64s(&m.w2);
            w.f64(m.b2);
        }
        ModelParams::Tree(t) => write_tree(w, t),
        ModelParams::Forest(f) => {
            w.len(f.trees.len());
            f.trees.iter().for_each(|t| write_tree(w, t));
        }
        ModelParams::Svm(m) => {
            w.f64s(&m.weights);
            w.f64(m.bias);
        }
        ModelParams::Bayes(m) => {
            for class in 0..2 {
                w.f64(m.priors[class]);
                w.f64s(&m.means[class]);
                w.f64s(&m.variances[class]);
            }
        }
    }
}

fn read_params(r: &mut Reader<'_>, kind: ClassifierKind) -> ReadResult<ModelParams> {
    Ok(match kind {
        ClassifierKind::KNearestNeighbor => {
            let k = r.u64()? as usize;
            let n = r.len()?;
            let mut points = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let mut p = [0.0; FEATURE_COUNT];
                for v in p.iter_mut() {
                    *v = r.f64()?;
                }
                points.push(p);
                labels.push(if r.bool()? { Label::Ransomware } else { Label::Benign });
            }
            if n == 0 || k == 0 {
                return Err(malformed("knn model needs k >= 1 and at least one point"));
            }
            ModelParams::Knn(KnnModel { k, points, labels })
        }
        ClassifierKind::MultilayerPerceptron => {
            let inputs = r.u64()? as usize;
            let hidden = r.u64()? as usize;
            if inputs != FEATURE_COUNT || hidden == 0 {
                return Err(malformed("mlp shape does not match the feature vector"));
            }
            let w1 = r.f64s_exact(inputs * hidden, "mlp w1")?;
            let b1 = r.f64s_exact(hidden, "mlp b1")?;
            let w2 = r.f64s_exact(hidden, "mlp w2")?;
            let b2 = r.f64()?;
            ModelParams::Mlp(MlpModel { inputs, hidden, w1, b1, w2, b2 })
        }
        ClassifierKind::DecisionTreeJ48 => ModelParams::Tree(read_tree(r)?),
        ClassifierKind::RandomForest => {
            let n = r.len()?;
            if n == 0 {
                return Err(malformed("forest has no trees"));
            }
            let trees = (0..n).map(|_| read_tree(r)).collect::<ReadResult<_>>()?;
            ModelParams::Forest(RandomForest { trees })
        }
        ClassifierKind::SupportVectorMachine => {
            let weights = r.f64s_exact(FEATURE_COUNT, "svm weights")?;
            ModelParams::Svm(SvmModel { weights, bias: r.f64()? })
        }
        ClassifierKind::BayesNetwork => {
            let mut priors = [0.0; 2];
            let mut means: [Vec<f64>; 2] = Default::default();
            let mut variances: [Vec<f64>; 2] = Default::default();
            for class in 0..2 {
                priors[class] = r.f64()?;
                means[class] = r.f64s_exact(FEATURE_COUNT, "bayes means")?;
                variances[class] = r.f64s_exact(FEATURE_COUNT, "bayes variances")?;
            }
            ModelParams::Bayes(BayesModel { priors, means, variances })
        }
    })
}

/// Serializes a model. Training time is not stored, so identical training
/// inputs give byte-identical files.
pub fn save_model(model: &TrainedModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(MODEL_MAGIC);
    w.u16(MODEL_FORMAT_VERSION);
    w.u8(model.kind.tag());
    w.u64(model.hyperparams.seed);
    w.u8(u8::from(model.hyperparams.zero_addresses));
    write_family(&mut w, &model.hyperparams.family);
    write_params(&mut w, &model.params);
    match &model.scaler {
        None => w.u8(0),
        Some(s) => {
            w.u8(1);
            w.f64s(&s.min);
            w.f64s(&s.max);
            w.u64(s.fitted_on);
        }
    }
    w.u64(model.train_fingerprint);
    let checksum = Sha256::digest(&w.buf);
    w.buf.extend_from_slice(&checksum);
    w.buf
}

/// Parses a model file, checking magic, version and checksum before decoding.
pub fn load_model(bytes: &[u8]) -> Result<TrainedModel, ModelFormatError> {
    let magic_len = MODEL_MAGIC.len().min(bytes.len());
    if bytes[..magic_len] != MODEL_MAGIC[..magic_len] {
        return Err(malformed("missing model magic"));
    }
    if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
        return Err(ModelFormatError::ChecksumFailure);
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != MODEL_FORMAT_VERSION {
        return Err(ModelFormatError::VersionMismatch { found: version, expected: MODEL_FORMAT_VERSION });
    }
    let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(ModelFormatError::ChecksumFailure);
    }

    let mut r = Reader { buf: body, pos: HEADER_LEN };
    let tag = r.u8()?;
    let kind = ClassifierKind::from_tag(tag).ok_or_else(|| malformed(format!("unknown classifier tag {tag}")))?;
    let seed = r.u64()?;
    let zero_addresses = r.bool()?;
    let family = read_family(&mut r, kind)?;
    let params = read_params(&mut r, kind)?;
    let scaler = match r.u8()? {
        0 => None,
        1 => {
            let min = r.f64s_exact(FEATURE_COUNT, "scaler min")?;
            let max = r.f64s_exact(FEATURE_COUNT, "scaler max")?;
            Some(ScalingParams { min, max, fitted_on: r.u64()? })
        }
        b => return Err(malformed(format!("invalid scaler flag {b}"))),
    };
    let train_fingerprint = r.u64()?;
    if r.pos != body.len() {
        return Err(malformed("trailing bytes after model body"));
    }
    if scaler.is_some() != kind.uses_scaler() {
        return Err(malformed("scaler presence does not match classifier kind"));
    }
    Ok(TrainedModel {
        kind,
        hyperparams: Hyperparams { seed, zero_addresses, family },
        params,
        scaler,
        training_time: 0.0,
        train_fingerprint,
    })
}
