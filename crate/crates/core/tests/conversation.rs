use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use proptest::prelude::*;
use ransomflow::conversation::{conversations_to_csv, csv_to_conversations, ValidationMode};
use ransomflow::{aggregate, Conversation, ConversationKey, PacketRecord};

fn pkt(t: f64, src: (Ipv4Addr, u16), dst: (Ipv4Addr, u16), protocol: u8, wire_bytes: u32) -> PacketRecord {
    PacketRecord { timestamp: t, src_addr: src.0, src_port: src.1, dst_addr: dst.0, dst_port: dst.1, protocol, wire_bytes }
}

#[test]
fn first_table_row_is_reconstructed() {
    let a = (Ipv4Addr::new(192, 168, 1, 4), 49252);
    let b = (Ipv4Addr::new(192, 168, 1, 5), 5357);
    // 8 requests (one of 178 bytes, seven of 174) interleaved with 12
    // replies (eleven of 1154 bytes, one of 1047) over [1.841135, 1.867189].
    let requests = [0, 1, 5, 6, 10, 11, 15, 16];
    let packets: Vec<PacketRecord> = (0..20u32)
        .map(|i| {
            let t = ((1.841135 + 0.026054 * f64::from(i) / 19.0) * 1e6).round() / 1e6;
            match (requests.contains(&i), i) {
                (true, 0) => pkt(t, a, b, 6, 178),
                (true, _) => pkt(t, a, b, 6, 174),
                (false, 19) => pkt(t, b, a, 6, 1047),
                (false, _) => pkt(t, b, a, 6, 1154),
            }
        })
        .collect();

    let convs = aggregate(&packets, Some(0.0)).unwrap();
    assert_eq!(convs.len(), 1);
    let c = convs[0];
    assert_eq!((c.packets_ab, c.bytes_ab, c.packets_ba, c.bytes_ba), (8, 1396, 12, 13741));
    let csv = conversations_to_csv(&convs);
    assert_eq!(
        csv.lines().nth(1).unwrap(),
        "6,192.168.1.4,49252,192.168.1.5,5357,20,15137,8,1396,12,13741,1.841135,0.026054"
    );
}

#[test]
fn second_table_row_is_flagged() {
    let csv = "protocol,address_a,port_a,address_b,port_b,packets,bytes,packets_ab,bytes_ab,packets_ba,bytes_ba,rel_start,duration\n\
               6,192.168.1.4,49254,192.168.1.5,5357,10,1101,10,440,3,661,1.841135,0.026054\n";
    assert!(csv_to_conversations(csv.as_bytes(), ValidationMode::Strict).is_err());
    let (convs, warnings) = csv_to_conversations(csv.as_bytes(), ValidationMode::Lenient).unwrap();
    assert_eq!(warnings.len(), 1);
    assert_eq!((convs[0].packets_total, convs[0].bytes_total), (13, 1101));
}

/// Direct recomputation for one key, used as the oracle.
fn oracle(packets: &[PacketRecord], key: ConversationKey, capture_start: f64) -> Conversation {
    let mine: Vec<&PacketRecord> = packets.iter().filter(|p| ConversationKey::of_packet(p) == key).collect();
    let first = mine.iter().min_by(|x, y| x.timestamp.total_cmp(&y.timestamp)).unwrap();
    let last = mine.iter().map(|p| p.timestamp).fold(f64::MIN, f64::max);
    let a = (first.src_addr, first.src_port);
    let from_a = |p: &&&PacketRecord| (p.src_addr, p.src_port) == a;
    let packets_ab = mine.iter().filter(from_a).count() as u64;
    let bytes_ab: u64 = mine.iter().filter(from_a).map(|p| u64::from(p.wire_bytes)).sum();
    let bytes_total: u64 = mine.iter().map(|p| u64::from(p.wire_bytes)).sum();
    Conversation {
        protocol: key.protocol,
        address_a: first.src_addr,
        port_a: first.src_port,
        address_b: first.dst_addr,
        port_b: first.dst_port,
        packets_total: mine.len() as u64,
        bytes_total,
        packets_ab,
        bytes_ab,
        packets_ba: mine.len() as u64 - packets_ab,
        bytes_ba: bytes_total - bytes_ab,
        rel_start: first.timestamp - capture_start,
        duration: last - first.timestamp,
    }
}

/// Packets over a small pool of endpoints so that flows collide, with
/// distinct microsecond timestamps.
fn arb_stream() -> impl Strategy<Value = Vec<PacketRecord>> {
    let endpoint = (0u8..4, prop_oneof![Just(53u16), Just(80), Just(443), Just(50000)])
        .prop_map(|(host, port)| (Ipv4Addr::new(10, 0, 0, host), port));
    prop::collection::vec(
        (endpoint.clone(), endpoint, prop_oneof![Just(6u8), Just(17)], 1u32..1600, 0u64..1000),
        1..60,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (s, d, proto, bytes, jitter))| pkt((jitter * 1000 + i as u64) as f64 / 1e6, s, d, proto, bytes))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn matches_direct_recomputation(packets in arb_stream()) {
        let convs = aggregate(&packets, None).unwrap();
        let start = packets.iter().map(|p| p.timestamp).fold(f64::MAX, f64::min);
        let keys: BTreeSet<ConversationKey> = packets.iter().map(ConversationKey::of_packet).collect();
        prop_assert_eq!(convs.len(), keys.len());
        for c in &convs {
            prop_assert_eq!(*c, oracle(&packets, c.key(), start));
            prop_assert!(c.check_invariants().is_ok());
        }
    }

    #[test]
    fn totals_are_conserved(packets in arb_stream()) {
        let convs = aggregate(&packets, None).unwrap();
        prop_assert_eq!(convs.iter().map(|c| c.packets_total).sum::<u64>(), packets.len() as u64);
        prop_assert_eq!(
            convs.iter().map(|c| c.bytes_total).sum::<u64>(),
            packets.iter().map(|p| u64::from(p.wire_bytes)).sum::<u64>()
        );
    }

    #[test]
    fn input_order_does_not_matter(packets in arb_stream(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = packets.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(aggregate(&packets, None).unwrap(), aggregate(&shuffled, None).unwrap());
    }

    #[test]
    fn key_ignores_direction(p in arb_stream().prop_map(|v| v[0])) {
        let mut q = p;
        std::mem::swap(&mut q.src_addr, &mut q.dst_addr);
        std::mem::swap(&mut q.src_port, &mut q.dst_port);
        prop_assert_eq!(ConversationKey::of_packet(&p), ConversationKey::of_packet(&q));
    }

    #[test]
    fn csv_round_trips(packets in arb_stream()) {
        let convs = aggregate(&packets, None).unwrap();
        let (back, warnings) = csv_to_conversations(conversations_to_csv(&convs).as_bytes(), ValidationMode::Strict).unwrap();
        prop_assert!(warnings.is_empty());
        prop_assert_eq!(back.len(), convs.len());
        for (x, y) in back.iter().zip(&convs) {
            prop_assert!((x.rel_start - y.rel_start).abs() < 1e-9);
            prop_assert!((x.duration - y.duration).abs() < 1e-9);
            prop_assert_eq!(x.key(), y.key());
            prop_assert_eq!(
                (x.address_a, x.port_a, x.packets_ab, x.bytes_ab, x.packets_ba, x.bytes_ba),
                (y.address_a, y.port_a, y.packets_ab, y.bytes_ab, y.packets_ba, y.bytes_ba)
            );
        }
    }
}
