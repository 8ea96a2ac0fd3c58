//! Packet ingestion from classic libpcap files and packet-record CSV.
//!
//! Both readers produce a normalized stream of [`PacketRecord`]s carrying only
//! what conversation aggregation needs: timestamp, IPv4 endpoints, transport
//! protocol and the on-the-wire length. Anything that is not an IPv4 TCP/UDP
//! packet is counted and dropped.

use std::fmt::Write as _;
use std::io::{self, Read};
use std::net::Ipv4Addr;

use thiserror::Error;

pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;

/// Header row of the packet CSV format.
pub const PACKET_CSV_HEADER: &str = "timestamp,src_addr,src_port,dst_addr,dst_port,protocol,wire_bytes";

const PCAP_MAGIC_MICRO: u32 = 0xA1B2_C3D4;
const PCAP_MAGIC_NANO: u32 = 0xA1B2_3C4D;
const PCAP_GLOBAL_HEADER_LEN: usize = 24;
const PCAP_RECORD_HEADER_LEN: usize = 16;
const LINKTYPE_ETHERNET: u32 = 1;

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_VLAN: u16 = 0x8100;

/// One captured IPv4 TCP or UDP packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    /// Seconds since the capture epoch.
    pub timestamp: f64,
    pub src_addr: Ipv4Addr,
    pub src_port: u16,
    pub dst_addr: Ipv4Addr,
    pub dst_port: u16,
    /// IANA protocol number.
    pub protocol: u8,
    /// Length of the packet on the wire, in bytes.
    pub wire_bytes: u32,
}

impl PacketRecord {
    /// Checks the record invariants that are not already enforced by the field types.
    pub fn validate(&self) -> Result<(), String> {
        if !self.timestamp.is_finite() || self.timestamp < 0.0 {
            return Err(format!("timestamp {} must be finite and non-negative", self.timestamp));
        }
        if self.wire_bytes == 0 {
            return Err("wire_bytes must be at least 1".to_string());
        }
        Ok(())
    }

    pub fn is_tcp_or_udp(&self) -> bool {
        self.protocol == PROTO_TCP || self.protocol == PROTO_UDP
    }
}

/// Counters describing one parsed capture.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CaptureSummary {
    pub packets_read: u64,
    pub packets_skipped_non_ip: u64,
    pub packets_skipped_unsupported_protocol: u64,
    pub capture_start: f64,
    pub capture_end: f64,
}

impl CaptureSummary {
    pub fn total_records(&self) -> u64 {
        self.packets_read + self.packets_skipped_non_ip + self.packets_skipped_unsupported_protocol
    }

    fn observe(&mut self, event: &SourceEvent) {
        match event {
            SourceEvent::Packet(p) => {
                if self.packets_read == 0 {
                    self.capture_start = p.timestamp;
                    self.capture_end = p.timestamp;
                } else {
                    self.capture_start = self.capture_start.min(p.timestamp);
                    self.capture_end = self.capture_end.max(p.timestamp);
                }
                self.packets_read += 1;
            }
            SourceEvent::Skipped(SkipReason::NonIp) => self.packets_skipped_non_ip += 1,
            SourceEvent::Skipped(SkipReason::UnsupportedProtocol) => {
                self.packets_skipped_unsupported_protocol += 1
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("not a classic pcap file (magic {0:#010x})")]
    BadMagic(u32),
    #[error("pcap global header truncated ({0} of 24 bytes)")]
    TruncatedHeader(usize),
    #[error("pcap record {index} truncated")]
    TruncatedRecord { index: u64 },
    #[error("unsupported pcap link type {0} (only Ethernet is supported)")]
    UnsupportedLinkType(u32),
    #[error("packet CSV header mismatch: expected `{PACKET_CSV_HEADER}`, found `{0}`")]
    SchemaMismatch(String),
    #[error("line {line}: {message}")]
    RowError { line: u64, message: String },
    #[error("line {line}: IPv6 address `{value}` is not supported")]
    Ipv6Unsupported { line: u64, value: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Why a capture record did not produce a [`PacketRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    /// Not IPv4 at the network layer (ARP, IPv6, nested VLAN, runt frame).
    NonIp,
    /// IPv4 but not a usable TCP/UDP packet (other protocol, non-first fragment,
    /// truncated transport header).
    UnsupportedProtocol,
}

/// One item of a packet source: either a usable packet or a skipped record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceEvent {
    Packet(PacketRecord),
    Skipped(SkipReason),
}

/// Result of [`parse_pcap`]. When the file ends mid-structure, `truncated`
/// carries the error and `packets` holds everything decoded before it.
#[derive(Debug)]
pub struct ParsedCapture {
    pub packets: Vec<PacketRecord>,
    pub summary: CaptureSummary,
    pub truncated: Option<CaptureError>,
}

/// Streaming reader over a classic pcap byte stream.
pub struct PcapReader<R> {
    inner: R,
    big_endian: bool,
    nanos: bool,
    index: u64,
    done: bool,
    frame: Vec<u8>,
}

impl<R: Read> PcapReader<R> {
    /// Reads and validates the 24-byte global header.
    pub fn new(mut inner: R) -> Result<Self, CaptureError> {
        let mut header = [0u8; PCAP_GLOBAL_HEADER_LEN];
        let got = read_full(&mut inner, &mut header)?;
        if got >= 4 {
            let magic_le = u32::from_le_bytes(header[0..4].try_into().unwrap());
            if !matches!(magic_le, PCAP_MAGIC_MICRO | PCAP_MAGIC_NANO)
                && !matches!(magic_le.swap_bytes(), PCAP_MAGIC_MICRO | PCAP_MAGIC_NANO)
            {
                return Err(CaptureError::BadMagic(magic_le));
            }
        }
        if got < PCAP_GLOBAL_HEADER_LEN {
            return Err(CaptureError::TruncatedHeader(got));
        }
        let magic_le = u32::from_le_bytes(header[0..4].try_into().unwrap());
        let big_endian = !matches!(magic_le, PCAP_MAGIC_MICRO | PCAP_MAGIC_NANO);
        let magic = if big_endian { magic_le.swap_bytes() } else { magic_le };
        let field = |off: usize| {
            let raw: [u8; 4] = header[off..off + 4].try_into().unwrap();
            if big_endian {
                u32::from_be_bytes(raw)
            } else {
                u32::from_le_bytes(raw)
            }
        };
        let link_type = field(20);
        if link_type != LINKTYPE_ETHERNET {
            return Err(CaptureError::UnsupportedLinkType(link_type));
        }
        Ok(Self {
            inner,
            big_endian,
            nanos: magic == PCAP_MAGIC_NANO,
            index: 0,
            done: false,
            frame: Vec::new(),
        })
    }

    fn u32_at(&self, buf: &[u8], off: usize) -> u32 {
        let raw: [u8; 4] = buf[off..off + 4].try_into().unwrap();
        if self.big_endian {
            u32::from_be_bytes(raw)
        } else {
            u32::from_le_bytes(raw)
        }
    }

    fn read_record(&mut self) -> Result<Option<SourceEvent>, CaptureError> {
        let mut header = [0u8; PCAP_RECORD_HEADER_LEN];
        let got = read_full(&mut self.inner, &mut header)?;
        if got == 0 {
            return Ok(None);
        }
        if got < PCAP_RECORD_HEADER_LEN {
            return Err(CaptureError::TruncatedRecord { index: self.index });
        }
        let ts_sec = self.u32_at(&header, 0);
        let ts_frac = self.u32_at(&header, 4);
        let incl_len = self.u32_at(&header, 8) as usize;
        let orig_len = self.u32_at(&header, 12);

        // Grow with the data actually present, not with the declared length.
        self.frame.clear();
        let got = (&mut self.inner).take(incl_len as u64).read_to_end(&mut self.frame)?;
        if got < incl_len {
            return Err(CaptureError::TruncatedRecord { index: self.index });
        }
        self.index += 1;

        let divisor = if self.nanos { 1e9 } else { 1e6 };
        let timestamp = f64::from(ts_sec) + f64::from(ts_frac) / divisor;
        let wire_bytes = orig_len.max(incl_len as u32);
        Ok(Some(decode_ethernet(&self.frame, timestamp, wire_bytes)))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<SourceEvent, CaptureError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_record() {
            Ok(Some(event)) => Some(Ok(event)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

fn read_full<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

fn be16(buf: &[u8], off: usize) -> u16 {
    u16::from_be_bytes([buf[off], buf[off + 1]])
}

fn decode_ethernet(frame: &[u8], timestamp: f64, wire_bytes: u32) -> SourceEvent {
    if frame.len() < 14 {
        return SourceEvent::Skipped(SkipReason::NonIp);
    }
    let mut ethertype = be16(frame, 12);
    let mut offset = 14;
    if ethertype == ETHERTYPE_VLAN {
        if frame.len() < 18 {
            return SourceEvent::Skipped(SkipReason::NonIp);
        }
        ethertype = be16(frame, 16);
        offset = 18;
    }
    if ethertype != ETHERTYPE_IPV4 {
        return SourceEvent::Skipped(SkipReason::NonIp);
    }
    decode_ipv4(&frame[offset..], timestamp, wire_bytes)
}

fn decode_ipv4(ip: &[u8], timestamp: f64, wire_bytes: u32) -> SourceEvent {
    if ip.len() < 20 || ip[0] >> 4 != 4 {
        return SourceEvent::Skipped(SkipReason::NonIp);
    }
    let header_len = usize::from(ip[0] & 0x0f) * 4;
    if header_len < 20 || ip.len() < header_len {
        return SourceEvent::Skipped(SkipReason::NonIp);
    }
    let protocol = ip[9];
    if protocol != PROTO_TCP && protocol != PROTO_UDP {
        return SourceEvent::Skipped(SkipReason::UnsupportedProtocol);
    }
    let fragment_offset = be16(ip, 6) & 0x1fff;
    if fragment_offset != 0 {
        return SourceEvent::Skipped(SkipReason::UnsupportedProtocol);
    }
    let transport = &ip[header_len..];
    if transport.len() < 4 {
        return SourceEvent::Skipped(SkipReason::UnsupportedProtocol);
    }
    SourceEvent::Packet(PacketRecord {
        timestamp,
        src_addr: Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]),
        src_port: be16(transport, 0),
        dst_addr: Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]),
        dst_port: be16(transport, 2),
        protocol,
        wire_bytes: wire_bytes.max(1),
    })
}

/// Parses a whole classic pcap capture held in memory.
///
/// Hard errors (bad magic, short global header, unsupported link type) are
/// returned as `Err`. A file that ends mid-record yields `Ok` with the
/// packets decoded so far and the truncation error in
/// [`ParsedCapture::truncated`].
pub fn parse_pcap(raw: &[u8]) -> Result<ParsedCapture, CaptureError> {
    let reader = PcapReader::new(raw)?;
    let mut packets = Vec::new();
    let mut summary = CaptureSummary::default();
    let mut truncated = None;
    for event in reader {
        match event {
            Ok(event) => {
                summary.observe(&event);
                if let SourceEvent::Packet(p) = event {
                    packets.push(p);
                }
            }
            Err(e) => truncated = Some(e),
        }
    }
    Ok(ParsedCapture { packets, summary, truncated })
}

/// Streaming reader over packet CSV text. Each row yields its own result, so
/// callers can choose between failing fast and skipping bad rows.
pub struct PacketCsvReader<R> {
    records: csv::StringRecordsIntoIter<R>,
}

impl<R: Read> PacketCsvReader<R> {
    pub fn new(input: R) -> Result<Self, CaptureError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let header = reader.headers().map_err(csv_to_capture_error)?.clone();
        let found = header.iter().collect::<Vec<_>>().join(",");
        if found != PACKET_CSV_HEADER {
            return Err(CaptureError::SchemaMismatch(found));
        }
        Ok(Self { records: reader.into_records() })
    }
}

impl<R: Read> Iterator for PacketCsvReader<R> {
    type Item = Result<PacketRecord, CaptureError>;

    fn next(&mut self) -> Option<Self::Item> {
        let record = match self.records.next()? {
            Ok(r) => r,
            Err(e) => return Some(Err(csv_to_capture_error(e))),
        };
        let line = record.position().map_or(0, |p| p.line());
        Some(parse_packet_row(&record, line))
    }
}

fn csv_to_capture_error(e: csv::Error) -> CaptureError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CaptureError::Io(io),
        other => CaptureError::RowError { line, message: format!("{other:?}") },
    }
}

fn parse_packet_row(record: &csv::StringRecord, line: u64) -> Result<PacketRecord, CaptureError> {
    if record.len() != 7 {
        return Err(CaptureError::RowError {
            line,
            message: format!("expected 7 fields, found {}", record.len()),
        });
    }
    let row_err = |message: String| CaptureError::RowError { line, message };
    let addr = |idx: usize, name: &str| -> Result<Ipv4Addr, CaptureError> {
        let value = &record[idx];
        if value.contains(':') {
            return Err(CaptureError::Ipv6Unsupported { line, value: value.to_string() });
        }
        value.parse().map_err(|_| row_err(format!("{name}: invalid IPv4 address `{value}`")))
    };
    let port = |idx: usize, name: &str| -> Result<u16, CaptureError> {
        let value = &record[idx];
        let n: u64 = value.parse().map_err(|_| row_err(format!("{name}: `{value}` is not an integer")))?;
        u16::try_from(n).map_err(|_| row_err(format!("{name}: {n} is outside 0-65535")))
    };
    let timestamp: f64 = record[0]
        .parse()
        .map_err(|_| row_err(format!("timestamp: `{}` is not a number", &record[0])))?;
    let protocol: u64 = record[5]
        .parse()
        .map_err(|_| row_err(format!("protocol: `{}` is not an integer", &record[5])))?;
    let protocol = u8::try_from(protocol).map_err(|_| row_err(format!("protocol: {protocol} is outside 0-255")))?;
    let wire_bytes: u64 = record[6]
        .parse()
        .map_err(|_| row_err(format!("wire_bytes: `{}` is not an integer", &record[6])))?;
    let wire_bytes =
        u32::try_from(wire_bytes).map_err(|_| row_err(format!("wire_bytes: {wire_bytes} is too large")))?;

    let packet = PacketRecord {
        timestamp,
        src_addr: addr(1, "src_addr")?,
        src_port: port(2, "src_port")?,
        dst_addr: addr(3, "dst_addr")?,
        dst_port: port(4, "dst_port")?,
        protocol,
        wire_bytes,
    };
    packet.validate().map_err(row_err)?;
    Ok(packet)
}

/// Parses packet CSV, failing on the first invalid row.
pub fn parse_packet_csv<R: Read>(input: R) -> Result<Vec<PacketRecord>, CaptureError> {
    PacketCsvReader::new(input)?.collect()
}

/// Serializes packets to packet CSV. Timestamps use the shortest decimal
/// representation that parses back to the same `f64`.
pub fn packets_to_csv(packets: &[PacketRecord]) -> String {
    let mut out = String::with_capacity(64 * (packets.len() + 1));
    out.push_str(PACKET_CSV_HEADER);
    out.push('\n');
    for p in packets {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.timestamp, p.src_addr, p.src_port, p.dst_addr, p.dst_port, p.protocol, p.wire_bytes
        );
    }
    out
}

/// Writes packets as a microsecond-resolution classic pcap (little-endian,
/// Ethernet). Frames carry synthesized Ethernet/IPv4/TCP|UDP headers only;
/// `orig_len` holds `wire_bytes`, raised to the header size when smaller.
pub fn write_pcap(packets: &[PacketRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(PCAP_GLOBAL_HEADER_LEN + packets.len() * 80);
    out.extend_from_slice(&PCAP_MAGIC_MICRO.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&65535u32.to_le_bytes());
    out.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
    for p in packets {
        let transport_len: u16 = if p.protocol == PROTO_TCP { 20 } else { 8 };
        let mut frame = Vec::with_capacity(14 + 20 + usize::from(transport_len));
        frame.extend_from_slice(&[0x02, 0, 0, 0, 0, 2, 0x02, 0, 0, 0, 0, 1]);
        frame.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
        let ip_total = (p.wire_bytes.saturating_sub(14)).clamp(20 + u32::from(transport_len), 65535) as u16;
        frame.extend_from_slice(&[0x45, 0]);
        frame.extend_from_slice(&ip_total.to_be_bytes());
        frame.extend_from_slice(&[0, 0, 0x40, 0, 64, p.protocol, 0, 0]);
        frame.extend_from_slice(&p.src_addr.octets());
        frame.extend_from_slice(&p.dst_addr.octets());
        frame.extend_from_slice(&p.src_port.to_be_bytes());
        frame.extend_from_slice(&p.dst_port.to_be_bytes());
        if p.protocol == PROTO_TCP {
            frame.extend_from_slice(&[0, 0, 0, 1, 0, 0, 0, 0, 0x50, 0x18, 0xff, 0xff, 0, 0, 0, 0]);
        } else {
            frame.extend_from_slice(&(ip_total - 20).to_be_bytes());
            frame.extend_from_slice(&[0, 0]);
        }
        let micros = (p.timestamp * 1e6).round() as u64;
        let orig_len = p.wire_bytes.max(frame.len() as u32);
        out.extend_from_slice(&((micros / 1_000_000) as u32).to_le_bytes());
        out.extend_from_slice(&((micros % 1_000_000) as u32).to_le_bytes());
        out.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        out.extend_from_slice(&orig_len.to_le_bytes());
        out.extend_from_slice(&frame);
    }
    out
}
