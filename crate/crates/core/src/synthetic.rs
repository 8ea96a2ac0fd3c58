//! Seeded synthetic data: Gaussian feature clusters and labeled packet traffic.
//!
//! Real ransomware captures are not redistributable, so demos and test suites
//! run on data generated here. Everything is a pure function of the seed.

use std::collections::HashMap;
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::capture::{PacketRecord, PROTO_TCP, PROTO_UDP};
use crate::conversation::{aggregate, ConversationKey};
use crate::detect::{window_packets, WindowSpec};
use crate::features::{encode, Dataset, FeatureVector, Label, LabeledSample, FEATURE_COUNT};

/// Per-feature standard deviations of the cluster generator.
const CLUSTER_SCALE: [f64; FEATURE_COUNT] =
    [1.0, 1000.0, 100.0, 1000.0, 100.0, 10.0, 1000.0, 10.0, 100.0, 10.0, 1000.0, 10.0, 1.0];

/// Two axis-aligned Gaussian clusters in 13 dimensions. Benign samples are
/// centred at `10 * scale`, ransomware samples `separation` standard
/// deviations higher on every feature. Positives come first.
pub fn gaussian_clusters(n_ransomware: usize, n_benign: usize, separation: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let mut samples = Vec::with_capacity(n_ransomware + n_benign);
    for (label, count, shift) in [(Label::Ransomware, n_ransomware, separation), (Label::Benign, n_benign, 0.0)] {
        for _ in 0..count {
            let mut x = [0.0; FEATURE_COUNT];
            for (v, scale) in x.iter_mut().zip(CLUSTER_SCALE) {
                *v = scale * (10.0 + shift + unit.sample(&mut rng));
            }
            samples.push(LabeledSample { features: FeatureVector(x), label, origin: None });
        }
    }
    Dataset::new(samples)
}

/// Shape of a generated packet replay.
#[derive(Debug, Clone, Copy)]
pub struct TrafficSpec {
    pub ransomware_flows: usize,
    pub benign_flows: usize,
    /// Capture length in seconds.
    pub duration: f64,
}

impl Default for TrafficSpec {
    fn default() -> Self {
        Self { ransomware_flows: 20, benign_flows: 20, duration: 300.0 }
    }
}

/// Generated packets (sorted by timestamp) and the label of every flow key.
#[derive(Debug, Clone)]
pub struct LabeledTraffic {
    pub packets: Vec<PacketRecord>,
    pub labels: HashMap<ConversationKey, Label>,
}

impl LabeledTraffic {
    /// Aggregates the whole capture and labels each conversation by its key.
    pub fn dataset(&self) -> Dataset {
        let convs = aggregate(&self.packets, None).expect("generated packets are valid");
        Dataset::new(
            convs
                .iter()
                .map(|c| LabeledSample { features: encode(c), label: self.labels[&c.key()], origin: None })
                .collect(),
        )
    }

    /// Labels the per-window conversations that detection would see, so a
    /// model trained on it matches the fragments it classifies.
    pub fn windowed_dataset(&self, spec: &WindowSpec) -> Dataset {
        let samples = window_packets(&self.packets, spec, None)
            .into_iter()
            .flat_map(|(_, batch)| aggregate(&batch, None).expect("generated packets are valid"))
            .map(|c| LabeledSample { features: encode(&c), label: self.labels[&c.key()], origin: None })
            .collect();
        Dataset::new(samples)
    }
}

/// Synthetic flows. Ransomware-like flows talk from a 10.13.0.0/16 host to
/// TCP 443 with many small outbound packets and large replies in short
/// bursts; benign flows are a mix of TCP and UDP with fewer, evenly sized
/// packets spread over the capture.
pub fn labeled_traffic(spec: &TrafficSpec, seed: u64) -> LabeledTraffic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut packets = Vec::new();
    let mut labels = HashMap::new();
    let base = 1_700_000_000.0;
    let mut next_port: u16 = 20_000;

    for flow in 0..spec.ransomware_flows + spec.benign_flows {
        let ransomware = flow < spec.ransomware_flows;
        next_port = next_port.wrapping_add(rng.gen_range(1..50));
        let client_port = next_port.max(1024);
        let (client, server, server_port, protocol) = if ransomware {
            (
                Ipv4Addr::new(10, 13, rng.gen(), rng.gen_range(1..255)),
                Ipv4Addr::new(185, rng.gen(), rng.gen(), rng.gen_range(1..255)),
                443,
                PROTO_TCP,
            )
        } else {
            let udp = rng.gen_bool(0.3);
            (
                Ipv4Addr::new(192, 168, 1, rng.gen_range(2..250)),
                Ipv4Addr::new(93, rng.gen(), rng.gen(), rng.gen_range(1..255)),
                if udp { 53 } else { 80 },
                if udp { PROTO_UDP } else { PROTO_TCP },
            )
        };
        let key = ConversationKey::new(protocol, (client, client_port), (server, server_port));
        if labels.contains_key(&key) {
            continue;
        }
        labels.insert(key, if ransomware { Label::Ransomware } else { Label::Benign });

        let (count, span) = if ransomware {
            (rng.gen_range(30..80), rng.gen_range(0.5..5.0))
        } else {
            (rng.gen_range(2..12), rng.gen_range(5.0..spec.duration / 2.0))
        };
        let start = rng.gen_range(0.0..(spec.duration - span).max(1.0));
        for i in 0..count {
            // Microsecond resolution, like a classic pcap.
            let t = ((start + span * i as f64 / count as f64) * 1e6).round() / 1e6;
            let outbound = i == 0 || rng.gen_bool(if ransomware { 0.6 } else { 0.5 });
            let wire_bytes = match (ransomware, outbound) {
                (true, true) => rng.gen_range(60..200),
                (true, false) => rng.gen_range(1200..1514),
                (false, _) => rng.gen_range(300..700),
            };
            let (src, sport, dst, dport) =
                if outbound { (client, client_port, server, server_port) } else { (server, server_port, client, client_port) };
            packets.push(PacketRecord {
                timestamp: base + t,
                src_addr: src,
                src_port: sport,
                dst_addr: dst,
                dst_port: dport,
                protocol,
                wire_bytes,
            });
        }
    }
    packets.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    LabeledTraffic { packets, labels }
}
