use std::net::Ipv4Addr;

use proptest::prelude::*;
use ransomflow::capture::{packets_to_csv, write_pcap, PcapReader, SourceEvent, PROTO_TCP, PROTO_UDP};
use ransomflow::{parse_packet_csv, parse_pcap, PacketRecord};

const GOLDEN_PCAP: &[u8] = include_bytes!("data/golden5.pcap");
const GOLDEN_TXT: &str = include_str!("data/golden5.txt");

#[test]
fn golden_capture_matches_reference_dissector() {
    let parsed = parse_pcap(GOLDEN_PCAP).unwrap();
    assert!(parsed.truncated.is_none());

    let mut expected = Vec::new();
    let mut non_ip = 0;
    for line in GOLDEN_TXT.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f[1] == "non-ip" {
            non_ip += 1;
            continue;
        }
        expected.push(PacketRecord {
            timestamp: f[0].parse().unwrap(),
            src_addr: f[1].parse().unwrap(),
            src_port: f[2].parse().unwrap(),
            dst_addr: f[3].parse().unwrap(),
            dst_port: f[4].parse().unwrap(),
            protocol: f[5].parse().unwrap(),
            wire_bytes: f[6].parse().unwrap(),
        });
    }
    assert_eq!(parsed.packets.len(), expected.len());
    for (got, want) in parsed.packets.iter().zip(&expected) {
        assert!((got.timestamp - want.timestamp).abs() < 1e-9, "{got:?} vs {want:?}");
        assert_eq!(
            (got.src_addr, got.src_port, got.dst_addr, got.dst_port, got.protocol, got.wire_bytes),
            (want.src_addr, want.src_port, want.dst_addr, want.dst_port, want.protocol, want.wire_bytes)
        );
    }
    assert_eq!(parsed.summary.packets_read, 4);
    assert_eq!(parsed.summary.packets_skipped_non_ip, non_ip);
    assert_eq!(parsed.summary.packets_skipped_unsupported_protocol, 0);
}

#[test]
fn golden_capture_streams_the_same_events() {
    let events: Vec<SourceEvent> = PcapReader::new(GOLDEN_PCAP).unwrap().map(Result::unwrap).collect();
    assert_eq!(events.len(), 5);
    let packets: Vec<PacketRecord> = events
        .iter()
        .filter_map(|e| match e {
            SourceEvent::Packet(p) => Some(*p),
            SourceEvent::Skipped(_) => None,
        })
        .collect();
    assert_eq!(packets, parse_pcap(GOLDEN_PCAP).unwrap().packets);
}

#[test]
fn truncated_golden_capture_keeps_complete_records() {
    let cut = &GOLDEN_PCAP[..GOLDEN_PCAP.len() - 10];
    let parsed = parse_pcap(cut).unwrap();
    assert_eq!(parsed.packets.len(), 3);
    assert!(parsed.truncated.is_some());
}

fn arb_packet() -> impl Strategy<Value = PacketRecord> {
    (
        0u64..4_000_000_000_000_000,
        any::<u32>(),
        any::<u16>(),
        any::<u32>(),
        any::<u16>(),
        prop_oneof![Just(PROTO_TCP), Just(PROTO_UDP)],
        1u32..70_000,
    )
        .prop_map(|(micros, s, sp, d, dp, protocol, wire_bytes)| PacketRecord {
            timestamp: micros as f64 / 1e6,
            src_addr: Ipv4Addr::from(s),
            src_port: sp,
            dst_addr: Ipv4Addr::from(d),
            dst_port: dp,
            protocol,
            wire_bytes,
        })
}

proptest! {
    #[test]
    fn packet_csv_round_trips(packets in prop::collection::vec(arb_packet(), 0..40)) {
        let csv = packets_to_csv(&packets);
        prop_assert_eq!(parse_packet_csv(csv.as_bytes()).unwrap(), packets);
    }

    #[test]
    fn written_pcap_round_trips(packets in prop::collection::vec(arb_packet(), 0..40)) {
        let packets: Vec<PacketRecord> = packets
            .into_iter()
            .map(|mut p| {
                // pcap seconds are 32-bit
                p.timestamp = (p.timestamp * 1e6 % 4.0e15).round() / 1e6;
                p.wire_bytes = p.wire_bytes.max(54);
                p
            })
            .collect();
        let parsed = parse_pcap(&write_pcap(&packets)).unwrap();
        prop_assert_eq!(parsed.packets.len(), packets.len());
        for (got, want) in parsed.packets.iter().zip(&packets) {
            prop_assert!((got.timestamp - want.timestamp).abs() < 1e-6);
            prop_assert_eq!(
                (got.src_addr, got.src_port, got.dst_addr, got.dst_port, got.protocol, got.wire_bytes),
                (want.src_addr, want.src_port, want.dst_addr, want.dst_port, want.protocol, want.wire_bytes)
            );
        }
    }

    #[test]
    fn arbitrary_bytes_never_yield_other_protocols(body in prop::collection::vec(any::<u8>(), 0..600)) {
        let mut raw = GOLDEN_PCAP[..24].to_vec();
        raw.extend_from_slice(&body);
        if let Ok(parsed) = parse_pcap(&raw) {
            prop_assert!(parsed.packets.iter().all(|p| p.protocol == PROTO_TCP || p.protocol == PROTO_UDP));
            prop_assert_eq!(parsed.summary.packets_read, parsed.packets.len() as u64);
        }
    }

    #[test]
    fn every_complete_record_is_counted_once(frames in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..120), 0..20)) {
        let mut raw = GOLDEN_PCAP[..24].to_vec();
        for (i, frame) in frames.iter().enumerate() {
            raw.extend_from_slice(&(i as u32).to_le_bytes());
            raw.extend_from_slice(&0u32.to_le_bytes());
            raw.extend_from_slice(&(frame.len() as u32).to_le_bytes());
            raw.extend_from_slice(&(frame.len() as u32).to_le_bytes());
            raw.extend_from_slice(frame);
        }
        let parsed = parse_pcap(&raw).unwrap();
        prop_assert!(parsed.truncated.is_none());
        prop_assert_eq!(parsed.summary.total_records(), frames.len() as u64);
    }
}
