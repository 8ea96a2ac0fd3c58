//! Conversation-level network traffic analysis for ransomware detection.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! - [`capture`]: read classic pcap files or packet CSV into [`capture::PacketRecord`]s.
//! - [`conversation`]: aggregate packets into bidirectional conversations.
//! - [`features`]: encode conversations as 13-value vectors, label and scale them.
//! - [`classifiers`]: train and apply KNN, MLP, C4.5 tree, random forest,
//!   linear SVM and Gaussian naive Bayes models; save and load model files.
//! - [`eval`]: confusion counts, the six detection metrics, splits and reports.
//! - [`detect`]: windowed replay that raises an alert per flagged conversation.

pub mod capture;
pub mod classifiers;
pub mod conversation;
pub mod detect;
pub mod eval;
pub mod features;
pub mod synthetic;

pub use capture::{parse_packet_csv, parse_pcap, CaptureSummary, PacketRecord};
pub use classifiers::{load_model, save_model, train, ClassifierKind, Hyperparams, Prediction, TrainedModel};
pub use conversation::{aggregate, Conversation, ConversationKey};
pub use detect::{detect_stream, Alert, WindowSpec};
pub use eval::{confusion, evaluate, metrics, ConfusionCounts, MetricsReport, SplitSpec};
pub use features::{encode, Dataset, FeatureVector, Label, LabeledSample};
