use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ransomflow::classifiers::bayes::BayesParams;
use ransomflow::classifiers::forest::ForestParams;
use ransomflow::classifiers::knn::KnnParams;
use ransomflow::classifiers::mlp::MlpParams;
use ransomflow::classifiers::svm::SvmParams;
use ransomflow::classifiers::tree::TreeParams;
use ransomflow::classifiers::{FamilyParams, MODEL_FORMAT_VERSION};
use ransomflow::eval::SplitMode;
use ransomflow::{ClassifierKind, Hyperparams, SplitSpec};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (model format v1)");

/// Ransomware traffic detection: conversation extraction, classifier
/// training and evaluation, and windowed detection over packet captures.
#[derive(Parser, Debug)]
#[command(name = "ransomflow", version = VERSION, propagate_version = true)]
pub struct Cli {
    /// Read default flag values from a key=value file; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Aggregate a capture into the conversation CSV.
    Extract(ExtractArgs),
    /// Label conversation files and merge them into a dataset CSV.
    Label(LabelArgs),
    /// Train one classifier and write the model file.
    Train(TrainArgs),
    /// Evaluate classifiers and print the metric table.
    Eval(EvalArgs),
    /// Time the training of each classifier.
    Bench(BenchArgs),
    /// Replay a capture window by window and raise alerts.
    Detect(DetectArgs),
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct PacketSource {
    /// Classic libpcap capture (Ethernet).
    #[arg(long, value_name = "FILE")]
    pub pcap: Option<PathBuf>,
    /// Packet CSV with the header timestamp,src_addr,src_port,dst_addr,dst_port,protocol,wire_bytes.
    #[arg(long, value_name = "FILE")]
    pub packets: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub source: PacketSource,
    /// Output file (default: standard output).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LabelArgs {
    /// Conversation CSVs or pcap files labeled ransomware.
    #[arg(long, value_name = "FILE", num_args = 1.., value_delimiter = ',')]
    pub ransomware: Vec<PathBuf>,
    /// Conversation CSVs or pcap files labeled benign.
    #[arg(long, value_name = "FILE", num_args = 1.., value_delimiter = ',')]
    pub benign: Vec<PathBuf>,
    /// Recompute inconsistent totals instead of rejecting the row.
    #[arg(long)]
    pub lenient: bool,
    /// Output file (default: standard output).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SplitArgs {
    /// Fraction of each class used for training.
    #[arg(long, value_name = "RATIO", default_value_t = 0.8, conflicts_with = "kfold")]
    pub holdout: f64,
    /// Stratified k-fold cross-validation instead of a holdout split.
    #[arg(long, value_name = "K")]
    pub kfold: Option<usize>,
}

impl SplitArgs {
    pub fn spec(&self, seed: u64) -> SplitSpec {
        let mode = match self.kfold {
            Some(k) => SplitMode::KFold(k),
            None => SplitMode::Holdout(self.holdout),
        };
        SplitSpec { mode, seed }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct HyperArgs {
    /// KNN: number of neighbors.
    #[arg(long, help_heading = "Hyperparameters")]
    pub k: Option<usize>,
    /// MLP: hidden units.
    #[arg(long, help_heading = "Hyperparameters")]
    pub hidden: Option<usize>,
    /// MLP: gradient step size.
    #[arg(long, help_heading = "Hyperparameters")]
    pub learning_rate: Option<f64>,
    /// MLP: full-batch epochs.
    #[arg(long, help_heading = "Hyperparameters")]
    pub epochs: Option<usize>,
    /// J48 and RandomForest: smallest node that may be split.
    #[arg(long, help_heading = "Hyperparameters")]
    pub min_leaf: Option<usize>,
    /// J48 and RandomForest: depth limit.
    #[arg(long, help_heading = "Hyperparameters")]
    pub max_depth: Option<usize>,
    /// RandomForest: number of trees.
    #[arg(long, help_heading = "Hyperparameters")]
    pub trees: Option<usize>,
    /// RandomForest: features tried per split.
    #[arg(long, help_heading = "Hyperparameters")]
    pub features_per_split: Option<usize>,
    /// RandomForest: grow every tree on the full training set.
    #[arg(long, help_heading = "Hyperparameters")]
    pub no_bootstrap: bool,
    /// SVM: regularization constant.
    #[arg(long, help_heading = "Hyperparameters")]
    pub c: Option<f64>,
    /// SVM: stochastic iterations.
    #[arg(long, help_heading = "Hyperparameters")]
    pub iterations: Option<u64>,
    /// BayesNetwork: variance smoothing relative to the largest variance.
    #[arg(long, help_heading = "Hyperparameters")]
    pub var_smoothing: Option<f64>,
}

impl HyperArgs {
    fn tree(&self) -> TreeParams {
        let d = TreeParams::default();
        TreeParams { min_leaf: self.min_leaf.unwrap_or(d.min_leaf), max_depth: self.max_depth.or(d.max_depth) }
    }

    pub fn family(&self, kind: ClassifierKind) -> FamilyParams {
        match kind {
            ClassifierKind::KNearestNeighbor => FamilyParams::Knn(KnnParams { k: self.k.unwrap_or(KnnParams::default().k) }),
            ClassifierKind::MultilayerPerceptron => {
                let d = MlpParams::default();
                FamilyParams::Mlp(MlpParams {
                    hidden: self.hidden.unwrap_or(d.hidden),
                    learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
                    epochs: self.epochs.unwrap_or(d.epochs),
                })
            }
            ClassifierKind::DecisionTreeJ48 => FamilyParams::Tree(self.tree()),
            ClassifierKind::RandomForest => {
                let d = ForestParams::default();
                FamilyParams::Forest(ForestParams {
                    trees: self.trees.unwrap_or(d.trees),
                    bootstrap: !self.no_bootstrap,
                    features_per_split: self.features_per_split.or(d.features_per_split),
                    tree: self.tree(),
                })
            }
            ClassifierKind::SupportVectorMachine => {
                let d = SvmParams::default();
                FamilyParams::Svm(SvmParams { c: self.c.unwrap_or(d.c), iterations: self.iterations.unwrap_or(d.iterations) })
            }
            ClassifierKind::BayesNetwork => FamilyParams::Bayes(BayesParams {
                var_smoothing: self.var_smoothing.unwrap_or(BayesParams::default().var_smoothing),
            }),
        }
    }

    /// Flags given that the family does not use.
    pub fn unused_by(&self, kind: ClassifierKind) -> Vec<&'static str> {
        let set = [
            ("k", self.k.is_some(), [ClassifierKind::KNearestNeighbor].as_slice()),
            ("hidden", self.hidden.is_some(), &[ClassifierKind::MultilayerPerceptron]),
            ("learning-rate", self.learning_rate.is_some(), &[ClassifierKind::MultilayerPerceptron]),
            ("epochs", self.epochs.is_some(), &[ClassifierKind::MultilayerPerceptron]),
            ("min-leaf", self.min_leaf.is_some(), &[ClassifierKind::DecisionTreeJ48, ClassifierKind::RandomForest]),
            ("max-depth", self.max_depth.is_some(), &[ClassifierKind::DecisionTreeJ48, ClassifierKind::RandomForest]),
            ("trees", self.trees.is_some(), &[ClassifierKind::RandomForest]),
            ("features-per-split", self.features_per_split.is_some(), &[ClassifierKind::RandomForest]),
            ("no-bootstrap", self.no_bootstrap, &[ClassifierKind::RandomForest]),
            ("c", self.c.is_some(), &[ClassifierKind::SupportVectorMachine]),
            ("iterations", self.iterations.is_some(), &[ClassifierKind::SupportVectorMachine]),
            ("var-smoothing", self.var_smoothing.is_some(), &[ClassifierKind::BayesNetwork]),
        ];
        set.into_iter().filter(|(_, given, kinds)| *given && !kinds.contains(&kind)).map(|(name, _, _)| name).collect()
    }
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Seed for every stochastic choice (splits, initialization, sampling).
    #[arg(long, default_value_t = Hyperparams::DEFAULT_SEED)]
    pub seed: u64,
    /// Zero the two address features at training and prediction time.
    #[arg(long)]
    pub zero_addresses: bool,
    /// Recompute inconsistent totals in the dataset CSV instead of rejecting the row.
    #[arg(long)]
    pub lenient: bool,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

impl ModelArgs {
    pub fn hyperparams(&self, kind: ClassifierKind) -> Hyperparams {
        Hyperparams { seed: self.seed, zero_addresses: self.zero_addresses, family: self.hyper.family(kind) }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Classifier family: knn, mlp, j48, rf, svm or bayes.
    #[arg(long, value_parser = parse_kind)]
    pub kind: ClassifierKind,
    /// Dataset CSV produced by `label`.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Model file to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Fraction of each class used for training; the rest is scored and reported.
    #[arg(long, value_name = "RATIO", default_value_t = 0.8, conflicts_with = "all_data")]
    pub holdout: f64,
    /// Train on every sample.
    #[arg(long)]
    pub all_data: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Dataset CSV produced by `label`.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// `all` or a comma-separated list of knn, mlp, j48, rf, svm, bayes.
    #[arg(long, default_value = "all", value_parser = parse_kinds)]
    pub kinds: KindList,
    /// Score an existing model on the test part of the split instead of training.
    #[arg(long = "model", value_name = "FILE", conflicts_with = "kfold")]
    pub model_path: Option<PathBuf>,
    /// With --model: score on every sample.
    #[arg(long, requires = "model_path")]
    pub all_data: bool,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
    pub format: ReportFormat,
    /// Output file (default: standard output).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Dataset CSV produced by `label`.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// `all` or a comma-separated list of knn, mlp, j48, rf, svm, bayes.
    #[arg(long, default_value = "all", value_parser = parse_kinds)]
    pub kinds: KindList,
    /// Fraction of each class in the timed training set.
    #[arg(long, value_name = "RATIO", default_value_t = 0.8)]
    pub holdout: f64,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output file (default: standard output).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlertFormat {
    /// One JSON object per line.
    Json,
    /// One warning line per alert.
    Text,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    /// Model file written by `train`.
    #[arg(long = "model", value_name = "FILE")]
    pub model_path: PathBuf,
    #[command(flatten)]
    pub source: PacketSource,
    /// Window length in seconds.
    #[arg(long, default_value_t = ransomflow::detect::DEFAULT_INTERVAL)]
    pub interval: f64,
    #[arg(long, value_enum, default_value_t = AlertFormat::Json)]
    pub format: AlertFormat,
    /// Output file (default: standard output).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KindList(pub Vec<ClassifierKind>);

fn parse_kind(s: &str) -> Result<ClassifierKind, String> {
    s.parse()
}

fn parse_kinds(s: &str) -> Result<KindList, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(KindList(ClassifierKind::ALL.to_vec()));
    }
    let mut kinds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let kind = parse_kind(part)?;
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    if kinds.is_empty() {
        return Err("no classifier named".into());
    }
    Ok(KindList(kinds))
}

const _: () = assert!(MODEL_FORMAT_VERSION == 1, "update VERSION with the model format");
