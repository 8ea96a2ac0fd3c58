//! Bidirectional conversation aggregation and the conversation CSV format.
//!
//! A conversation groups every packet exchanged between two `(address, port)`
//! endpoints under one transport protocol. Endpoint A is the sender of the
//! earliest packet; the `_ab` counters cover A→B traffic and `_ba` the reverse.
//! There is no idle timeout: within one aggregation a key maps to exactly one
//! conversation.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Read;
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::capture::{PacketRecord, PROTO_TCP, PROTO_UDP};

/// Header row of the conversation CSV format.
pub const CONVERSATION_CSV_HEADER: &str =
    "protocol,address_a,port_a,address_b,port_b,packets,bytes,packets_ab,bytes_ab,packets_ba,bytes_ba,rel_start,duration";

pub type Endpoint = (Ipv4Addr, u16);

/// Direction-free conversation key with endpoints in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConversationKey {
    pub endpoint_low: Endpoint,
    pub endpoint_high: Endpoint,
    pub protocol: u8,
}

impl ConversationKey {
    pub fn new(protocol: u8, a: Endpoint, b: Endpoint) -> Self {
        // Ipv4Addr orders by octets, which is the big-endian u32 order.
        let (endpoint_low, endpoint_high) = if a <= b { (a, b) } else { (b, a) };
        Self { endpoint_low, endpoint_high, protocol }
    }

    pub fn of_packet(p: &PacketRecord) -> Self {
        Self::new(p.protocol, (p.src_addr, p.src_port), (p.dst_addr, p.dst_port))
    }
}

/// One bidirectional flow with its 13 attributes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conversation {
    pub protocol: u8,
    pub address_a: Ipv4Addr,
    pub port_a: u16,
    pub address_b: Ipv4Addr,
    pub port_b: u16,
    pub packets_total: u64,
    pub bytes_total: u64,
    pub packets_ab: u64,
    pub bytes_ab: u64,
    pub packets_ba: u64,
    pub bytes_ba: u64,
    /// Seconds between the capture start and the first packet.
    pub rel_start: f64,
    /// Seconds between the first and the last packet.
    pub duration: f64,
}

impl Conversation {
    pub fn key(&self) -> ConversationKey {
        ConversationKey::new(self.protocol, (self.address_a, self.port_a), (self.address_b, self.port_b))
    }

    /// Returns the first violated invariant, if any.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.packets_total != self.packets_ab + self.packets_ba {
            return Err(format!(
                "packets {} != packets_ab {} + packets_ba {}",
                self.packets_total, self.packets_ab, self.packets_ba
            ));
        }
        if self.bytes_total != self.bytes_ab + self.bytes_ba {
            return Err(format!(
                "bytes {} != bytes_ab {} + bytes_ba {}",
                self.bytes_total, self.bytes_ab, self.bytes_ba
            ));
        }
        if self.packets_total == 0 {
            return Err("conversation has no packets".into());
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(format!("duration {} must be finite and non-negative", self.duration));
        }
        if !(self.rel_start >= 0.0 && self.rel_start.is_finite()) {
            return Err(format!("rel_start {} must be finite and non-negative", self.rel_start));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConversationError {
    #[error("packet {index} has timestamp {timestamp} before capture start {capture_start}")]
    ClockSkew { index: usize, timestamp: f64, capture_start: f64 },
    #[error("packet {index} has protocol {protocol}; only TCP (6) and UDP (17) are aggregated")]
    UnsupportedProtocol { index: usize, protocol: u8 },
    #[error("conversation CSV header mismatch: expected `{CONVERSATION_CSV_HEADER}`, found `{0}`")]
    SchemaMismatch(String),
    #[error("line {line}: {message}")]
    RowError { line: u64, message: String },
    #[error("line {line}: {message}")]
    InvariantViolation { line: u64, message: String },
    #[error("I/O error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy)]
struct FlowState {
    first_ts: f64,
    last_ts: f64,
    // Sender of the earliest packet seen so far.
    origin: Endpoint,
    // Counters by canonical direction: low→high and high→low.
    packets_up: u64,
    bytes_up: u64,
    packets_down: u64,
    bytes_down: u64,
}

/// Incremental conversation accumulator.
///
/// Packets may arrive in any order; endpoint A is resolved to the sender of
/// the packet with the smallest timestamp, ties going to the packet pushed
/// first. This matches a stable timestamp sort followed by a single pass.
#[derive(Debug, Default, Clone)]
pub struct ConversationTable {
    flows: HashMap<ConversationKey, FlowState>,
}

impl ConversationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    /// Adds one TCP/UDP packet. The caller is responsible for protocol filtering.
    pub fn push(&mut self, p: &PacketRecord) {
        let key = ConversationKey::of_packet(p);
        let src = (p.src_addr, p.src_port);
        let upward = src == key.endpoint_low;
        let bytes = u64::from(p.wire_bytes);
        let state = self.flows.entry(key).or_insert(FlowState {
            first_ts: p.timestamp,
            last_ts: p.timestamp,
            origin: src,
            packets_up: 0,
            bytes_up: 0,
            packets_down: 0,
            bytes_down: 0,
        });
        if p.timestamp < state.first_ts {
            state.first_ts = p.timestamp;
            state.origin = src;
        }
        if p.timestamp > state.last_ts {
            state.last_ts = p.timestamp;
        }
        if upward {
            state.packets_up += 1;
            state.bytes_up += bytes;
        } else {
            state.packets_down += 1;
            state.bytes_down += bytes;
        }
    }

    /// Emits conversations sorted by `rel_start`, ties by canonical key.
    pub fn finish(self, capture_start: f64) -> Vec<Conversation> {
        let mut rows: Vec<(ConversationKey, Conversation)> = self
            .flows
            .into_iter()
            .map(|(key, s)| {
                let a_is_low = s.origin == key.endpoint_low;
                let (a, b) = if a_is_low {
                    (key.endpoint_low, key.endpoint_high)
                } else {
                    (key.endpoint_high, key.endpoint_low)
                };
                let (packets_ab, bytes_ab, packets_ba, bytes_ba) = if a_is_low {
                    (s.packets_up, s.bytes_up, s.packets_down, s.bytes_down)
                } else {
                    (s.packets_down, s.bytes_down, s.packets_up, s.bytes_up)
                };
                let conv = Conversation {
                    protocol: key.protocol,
                    address_a: a.0,
                    port_a: a.1,
                    address_b: b.0,
                    port_b: b.1,
                    packets_total: packets_ab + packets_ba,
                    bytes_total: bytes_ab + bytes_ba,
                    packets_ab,
                    bytes_ab,
                    packets_ba,
                    bytes_ba,
                    rel_start: s.first_ts - capture_start,
                    duration: s.last_ts - s.first_ts,
                };
                (key, conv)
            })
            .collect();
        rows.sort_by(|x, y| x.1.rel_start.total_cmp(&y.1.rel_start).then(x.0.cmp(&y.0)));
        rows.into_iter().map(|(_, c)| c).collect()
    }
}

/// Aggregates a packet stream into conversations.
///
/// `capture_start` defaults to the smallest timestamp. An empty input yields
/// an empty output.
pub fn aggregate(packets: &[PacketRecord], capture_start: Option<f64>) -> Result<Vec<Conversation>, ConversationError> {
    if packets.is_empty() {
        return Ok(Vec::new());
    }
    let min_ts = packets.iter().map(|p| p.timestamp).fold(f64::INFINITY, f64::min);
    let start = capture_start.unwrap_or(min_ts);
    for (index, p) in packets.iter().enumerate() {
        if !p.is_tcp_or_udp() {
            return Err(ConversationError::UnsupportedProtocol { index, protocol: p.protocol });
        }
        if p.timestamp < start {
            return Err(ConversationError::ClockSkew { index, timestamp: p.timestamp, capture_start: start });
        }
    }
    let mut order: Vec<usize> = (0..packets.len()).collect();
    order.sort_by(|&i, &j| packets[i].timestamp.total_cmp(&packets[j].timestamp));
    let mut table = ConversationTable::new();
    for i in order {
        table.push(&packets[i]);
    }
    Ok(table.finish(start))
}

/// Validation applied when importing conversation CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationMode {
    /// Inconsistent rows are rejected.
    #[default]
    Strict,
    /// Totals are recomputed from the directional counters and a warning is recorded.
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportWarning {
    pub line: u64,
    pub message: String,
}

/// Writes the conversation CSV. Times are printed with 6 decimal places.
pub fn conversations_to_csv(convs: &[Conversation]) -> String {
    let mut out = String::with_capacity(96 * (convs.len() + 1));
    out.push_str(CONVERSATION_CSV_HEADER);
    out.push('\n');
    for c in convs {
        write_conversation_fields(&mut out, c);
        out.push('\n');
    }
    out
}

pub(crate) fn write_conversation_fields(out: &mut String, c: &Conversation) {
    let _ = write!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.6}",
        c.protocol,
        c.address_a,
        c.port_a,
        c.address_b,
        c.port_b,
        c.packets_total,
        c.bytes_total,
        c.packets_ab,
        c.bytes_ab,
        c.packets_ba,
        c.bytes_ba,
        c.rel_start,
        c.duration
    );
}

/// Reads conversation CSV. In lenient mode the returned warnings list every
/// row whose totals were recomputed.
pub fn csv_to_conversations<R: Read>(
    input: R,
    mode: ValidationMode,
) -> Result<(Vec<Conversation>, Vec<ImportWarning>), ConversationError> {
    let mut convs = Vec::new();
    let mut warnings = Vec::new();
    read_conversation_rows(input, 13, mode, |conv, _, _| {
        convs.push(conv);
        Ok(())
    }, &mut warnings)?;
    Ok((convs, warnings))
}

/// Shared row reader for the conversation and dataset CSV formats.
/// `width` is the expected field count; extra trailing fields are handed to
/// `on_row` as the raw record.
pub(crate) fn read_conversation_rows<R: Read, F>(
    input: R,
    width: usize,
    mode: ValidationMode,
    mut on_row: F,
    warnings: &mut Vec<ImportWarning>,
) -> Result<Vec<String>, ConversationError>
where
    F: FnMut(Conversation, &csv::StringRecord, u64) -> Result<(), ConversationError>,
{
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| ConversationError::Io(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let expected: Vec<&str> = CONVERSATION_CSV_HEADER.split(',').collect();
    if header.len() != width || header[..13] != expected[..] {
        return Err(ConversationError::SchemaMismatch(header.join(",")));
    }
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            ConversationError::RowError { line, message: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut conv = parse_conversation_row(&record, line)?;
        if let Err(message) = conv.check_invariants() {
            match mode {
                ValidationMode::Strict => return Err(ConversationError::InvariantViolation { line, message }),
                ValidationMode::Lenient => {
                    conv.packets_total = conv.packets_ab + conv.packets_ba;
                    conv.bytes_total = conv.bytes_ab + conv.bytes_ba;
                    if let Err(still) = conv.check_invariants() {
                        return Err(ConversationError::InvariantViolation { line, message: still });
                    }
                    warnings.push(ImportWarning { line, message: format!("{message}; totals recomputed") });
                }
            }
        }
        on_row(conv, &record, line)?;
    }
    Ok(header)
}

fn parse_conversation_row(record: &csv::StringRecord, line: u64) -> Result<Conversation, ConversationError> {
    let err = |message: String| ConversationError::RowError { line, message };
    let field = |i: usize| record.get(i).ok_or_else(|| err(format!("missing field {i}")));
    let int = |i: usize, name: &str| -> Result<u64, ConversationError> {
        let v = field(i)?;
        v.parse().map_err(|_| err(format!("{name}: `{v}` is not a non-negative integer")))
    };
    let port = |i: usize, name: &str| -> Result<u16, ConversationError> {
        let n = int(i, name)?;
        u16::try_from(n).map_err(|_| err(format!("{name}: {n} is outside 0-65535")))
    };
    let addr = |i: usize, name: &str| -> Result<Ipv4Addr, ConversationError> {
        let v = field(i)?;
        v.parse().map_err(|_| err(format!("{name}: `{v}` is not an IPv4 address")))
    };
    let real = |i: usize, name: &str| -> Result<f64, ConversationError> {
        let v = field(i)?;
        let x: f64 = v.parse().map_err(|_| err(format!("{name}: `{v}` is not a number")))?;
        if x.is_finite() {
            Ok(x)
        } else {
            Err(err(format!("{name}: `{v}` is not finite")))
        }
    };
    let protocol = int(0, "protocol")?;
    if protocol != u64::from(PROTO_TCP) && protocol != u64::from(PROTO_UDP) {
        return Err(err(format!("protocol: {protocol} is not TCP (6) or UDP (17)")));
    }
    Ok(Conversation {
        protocol: protocol as u8,
        address_a: addr(1, "address_a")?,
        port_a: port(2, "port_a")?,
        address_b: addr(3, "address_b")?,
        port_b: port(4, "port_b")?,
        packets_total: int(5, "packets")?,
        bytes_total: int(6, "bytes")?,
        packets_ab: int(7, "packets_ab")?,
        bytes_ab: int(8, "bytes_ab")?,
        packets_ba: int(9, "packets_ba")?,
        bytes_ba: int(10, "bytes_ba")?,
        rel_start: real(11, "rel_start")?,
        duration: real(12, "duration")?,
    })
}
