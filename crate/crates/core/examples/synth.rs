//! Writes seeded demo captures: `cargo run -p ransomflow --example synth -- <dir> [seed]`.
//!
//! Produces `ransomware.pcap`, `benign.pcap` (one class each, for `label`)
//! and `mixed.pcap` (both kinds interleaved, for `detect`).

use std::path::PathBuf;

use ransomflow::capture::write_pcap;
use ransomflow::synthetic::{labeled_traffic, TrafficSpec};

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| ".".into()));
    let seed: u64 = args.next().map_or(42, |s| s.parse().expect("seed must be an integer"));
    std::fs::create_dir_all(&dir)?;

    let captures = [
        ("ransomware.pcap", TrafficSpec { ransomware_flows: 200, benign_flows: 0, duration: 600.0 }, seed),
        ("benign.pcap", TrafficSpec { ransomware_flows: 0, benign_flows: 200, duration: 600.0 }, seed + 1),
        ("mixed.pcap", TrafficSpec { ransomware_flows: 5, benign_flows: 40, duration: 300.0 }, seed + 2),
    ];
    for (name, spec, seed) in captures {
        let traffic = labeled_traffic(&spec, seed);
        std::fs::write(dir.join(name), write_pcap(&traffic.packets))?;
        println!("{}: {} packets, {} flows", dir.join(name).display(), traffic.packets.len(), traffic.labels.len());
    }
    Ok(())
}
