//! Windowed detection over a packet replay.
//!
//! Packets are bucketed into half-open windows `[start + n*interval,
//! start + (n+1)*interval)` aligned to the capture start. Each window is
//! aggregated on its own, every conversation is classified, and positives are
//! emitted as alerts once the window closes.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::capture::{CaptureError, PacketRecord, SourceEvent};
use crate::classifiers::{load_model, ClassifierError, ModelFormatError, Prediction, TrainedModel};
use crate::conversation::{aggregate, Conversation, ConversationError, ConversationTable};
use crate::features::{encode, Label, FEATURE_COUNT, FEATURE_NAMES};

pub const DEFAULT_INTERVAL: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    interval: f64,
}

impl WindowSpec {
    pub fn new(interval: f64) -> Result<Self, DetectError> {
        if interval > 0.0 && interval.is_finite() {
            Ok(Self { interval })
        } else {
            Err(DetectError::InvalidInterval(interval))
        }
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    pub fn window_of(&self, timestamp: f64, capture_start: f64) -> u64 {
        ((timestamp - capture_start) / self.interval).floor() as u64
    }

    /// Capture time at which window `index` closes.
    pub fn window_end(&self, index: u64, capture_start: f64) -> f64 {
        capture_start + (index + 1) as f64 * self.interval
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { interval: DEFAULT_INTERVAL }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alert {
    pub window_index: u64,
    pub conversation: Conversation,
    pub prediction: Prediction,
    pub model_fingerprint: String,
    /// Capture time at which the window closed.
    pub emitted_at: f64,
}

#[derive(Serialize)]
struct AlertRecord<'a> {
    window: u64,
    protocol: u8,
    address_a: String,
    port_a: u16,
    address_b: String,
    port_b: u16,
    score: f64,
    label: Label,
    model_fingerprint: &'a str,
    emitted_at: f64,
    feature_names: [&'static str; FEATURE_COUNT],
    features: [f64; FEATURE_COUNT],
}

impl Alert {
    /// One-line JSON object.
    pub fn to_json(&self) -> String {
        let c = &self.conversation;
        let record = AlertRecord {
            window: self.window_index,
            protocol: c.protocol,
            address_a: c.address_a.to_string(),
            port_a: c.port_a,
            address_b: c.address_b.to_string(),
            port_b: c.port_b,
            score: self.prediction.score,
            label: self.prediction.label,
            model_fingerprint: &self.model_fingerprint,
            emitted_at: self.emitted_at,
            feature_names: FEATURE_NAMES,
            features: encode(c).0,
        };
        serde_json::to_string(&record).expect("alert always serializes")
    }

    /// Human-readable warning line for terminals.
    pub fn to_warning(&self) -> String {
        let c = &self.conversation;
        let proto = match c.protocol {
            6 => "TCP",
            17 => "UDP",
            _ => "IP",
        };
        format!(
            "WARNING: ransomware traffic detected in window {}: {proto} {}:{} -> {}:{} ({} packets, {} bytes, score {:.4}, model {})",
            self.window_index,
            c.address_a,
            c.port_a,
            c.address_b,
            c.port_b,
            c.packets_total,
            c.bytes_total,
            self.prediction.score,
            self.model_fingerprint
        )
    }
}

/// Destination for alerts.
pub trait AlertSink {
    fn emit(&mut self, alert: &Alert) -> io::Result<()>;
}

impl AlertSink for Vec<Alert> {
    fn emit(&mut self, alert: &Alert) -> io::Result<()> {
        self.push(alert.clone());
        Ok(())
    }
}

/// Writes one JSON object per line.
pub struct JsonLinesSink<W>(pub W);

impl<W: Write> AlertSink for JsonLinesSink<W> {
    fn emit(&mut self, alert: &Alert) -> io::Result<()> {
        writeln!(self.0, "{}", alert.to_json())
    }
}

/// Writes the one-line warning format.
pub struct WarningSink<W>(pub W);

impl<W: Write> AlertSink for WarningSink<W> {
    fn emit(&mut self, alert: &Alert) -> io::Result<()> {
        writeln!(self.0, "{}", alert.to_warning())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct RunSummary {
    pub windows: u64,
    pub conversations: u64,
    pub alerts: u64,
    pub packets: u64,
    /// Records that were not usable packets (non-IP, other protocols, malformed).
    pub skipped: u64,
    /// Packets older than an already closed window.
    pub late_packets: u64,
}

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("window interval must be a positive number of seconds, got {0}")]
    InvalidInterval(f64),
    #[error("could not load model: {0}")]
    ModelLoadFailure(#[from] ModelFormatError),
    #[error("alert sink failed after {} alerts", summary.alerts)]
    SinkFailure { summary: RunSummary, source: io::Error },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Aggregation(#[from] ConversationError),
}

/// Buckets packets into windows aligned to `capture_start` (default: the
/// smallest timestamp). Empty windows are omitted; packets keep input order
/// within a window.
pub fn window_packets(
    packets: &[PacketRecord],
    spec: &WindowSpec,
    capture_start: Option<f64>,
) -> Vec<(u64, Vec<PacketRecord>)> {
    let Some(start) = capture_start.or_else(|| packets.iter().map(|p| p.timestamp).reduce(f64::min)) else {
        return Vec::new();
    };
    let mut windows: std::collections::BTreeMap<u64, Vec<PacketRecord>> = Default::default();
    for p in packets {
        windows.entry(spec.window_of(p.timestamp, start)).or_default().push(*p);
    }
    windows.into_iter().collect()
}

fn classify_window(
    model: &TrainedModel,
    fingerprint: &str,
    window_index: u64,
    emitted_at: f64,
    conversations: &[Conversation],
) -> Result<Vec<Alert>, ClassifierError> {
    let mut alerts = Vec::new();
    for c in conversations {
        let prediction = model.predict(&encode(c).0)?;
        if prediction.label == Label::Ransomware {
            alerts.push(Alert {
                window_index,
                conversation: *c,
                prediction,
                model_fingerprint: fingerprint.to_string(),
                emitted_at,
            });
        }
    }
    alerts.sort_by(|a, b| a.conversation.key().cmp(&b.conversation.key()));
    Ok(alerts)
}

/// Offline route: window the whole capture, aggregate each window with
/// [`aggregate`], and classify. Returns alerts in (window, key) order.
/// Non-TCP/UDP records are ignored, as in the streaming path.
pub fn detect_batch(packets: &[PacketRecord], model: &TrainedModel, spec: &WindowSpec) -> Result<Vec<Alert>, DetectError> {
    let fingerprint = model.fingerprint();
    let usable: Vec<PacketRecord> =
        packets.iter().filter(|p| p.is_tcp_or_udp() && p.validate().is_ok()).copied().collect();
    let Some(start) = usable.iter().map(|p| p.timestamp).reduce(f64::min) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for (index, batch) in window_packets(&usable, spec, Some(start)) {
        let convs = aggregate(&batch, Some(start))?;
        out.extend(classify_window(model, &fingerprint, index, spec.window_end(index, start), &convs)?);
    }
    Ok(out)
}

/// Streaming detector. Feed packets in capture order with [`Detector::push`];
/// a window closes when the first packet of a later window arrives, or at
/// [`Detector::finish`].
pub struct Detector {
    model: TrainedModel,
    fingerprint: String,
    spec: WindowSpec,
    capture_start: Option<f64>,
    current: Option<(u64, ConversationTable)>,
    summary: RunSummary,
}

impl Detector {
    pub fn new(model: TrainedModel, spec: WindowSpec) -> Self {
        let fingerprint = model.fingerprint();
        Self { model, fingerprint, spec, capture_start: None, current: None, summary: RunSummary::default() }
    }

    /// Loads and verifies a serialized model.
    pub fn from_model_bytes(bytes: &[u8], spec: WindowSpec) -> Result<Self, DetectError> {
        Ok(Self::new(load_model(bytes)?, spec))
    }

    pub fn model_fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn summary(&self) -> RunSummary {
        self.summary
    }

    pub fn note_skipped(&mut self) {
        self.summary.skipped += 1;
    }

    fn close_current(&mut self, sink: &mut dyn AlertSink) -> Result<(), DetectError> {
        let Some((index, table)) = self.current.take() else {
            return Ok(());
        };
        let start = self.capture_start.expect("window implies a capture start");
        let convs = table.finish(start);
        self.summary.windows += 1;
        self.summary.conversations += convs.len() as u64;
        let alerts = classify_window(&self.model, &self.fingerprint, index, self.spec.window_end(index, start), &convs)?;
        for alert in &alerts {
            if let Err(source) = sink.emit(alert) {
                return Err(DetectError::SinkFailure { summary: self.summary, source });
            }
            self.summary.alerts += 1;
        }
        Ok(())
    }

    pub fn push(&mut self, packet: &PacketRecord, sink: &mut dyn AlertSink) -> Result<(), DetectError> {
        if !packet.is_tcp_or_udp() || packet.validate().is_err() {
            self.summary.skipped += 1;
            return Ok(());
        }
        let start = *self.capture_start.get_or_insert(packet.timestamp);
        if packet.timestamp < start {
            self.summary.late_packets += 1;
            return Ok(());
        }
        let index = self.spec.window_of(packet.timestamp, start);
        match &self.current {
            Some((current, _)) if index < *current => {
                self.summary.late_packets += 1;
                return Ok(());
            }
            Some((current, _)) if index > *current => self.close_current(sink)?,
            _ => {}
        }
        self.summary.packets += 1;
        let (_, table) = self.current.get_or_insert_with(|| (index, ConversationTable::new()));
        table.push(packet);
        Ok(())
    }

    /// Closes the open window and returns the final counts.
    pub fn finish(mut self, sink: &mut dyn AlertSink) -> Result<RunSummary, DetectError> {
        self.close_current(sink)?;
        Ok(self.summary)
    }
}

/// Runs a detector over a packet source until it is exhausted. Source errors
/// (malformed or truncated records) are counted as skipped and end the
/// replay only when the source itself stops.
pub fn detect_stream<I>(
    source: I,
    model: TrainedModel,
    spec: WindowSpec,
    sink: &mut dyn AlertSink,
) -> Result<RunSummary, DetectError>
where
    I: IntoIterator<Item = Result<SourceEvent, CaptureError>>,
{
    let mut detector = Detector::new(model, spec);
    for event in source {
        match event {
            Ok(SourceEvent::Packet(p)) => detector.push(&p, sink)?,
            Ok(SourceEvent::Skipped(_)) | Err(_) => detector.note_skipped(),
        }
    }
    detector.finish(sink)
}
