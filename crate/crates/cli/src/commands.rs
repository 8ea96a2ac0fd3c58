use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ransomflow::capture::{PacketCsvReader, PcapReader, SourceEvent};
use ransomflow::conversation::{conversations_to_csv, csv_to_conversations, ImportWarning, ValidationMode};
use ransomflow::detect::{AlertSink, DetectError, Detector, JsonLinesSink, WarningSink};
use ransomflow::eval::{
    benchmark, render_report_csv, render_report_json, render_timing_csv, split, test_model, SplitMode,
};
use ransomflow::features::{csv_to_dataset, dataset_to_csv, label_and_merge, LabeledSet};
use ransomflow::{
    aggregate, evaluate, load_model, parse_packet_csv, parse_pcap, save_model, train, CaptureSummary, Conversation,
    Dataset, Label, PacketRecord, SplitSpec, WindowSpec,
};

use crate::args::{AlertFormat, BenchArgs, DetectArgs, EvalArgs, ExtractArgs, LabelArgs, PacketSource, ReportFormat, TrainArgs};
use crate::Internal;

const PCAP_MAGICS: [[u8; 4]; 4] = [[0xd4, 0xc3, 0xb2, 0xa1], [0xa1, 0xb2, 0xc3, 0xd4], [0x4d, 0x3c, 0xb2, 0xa1], [0xa1, 0xb2, 0x3c, 0x4d]];

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).with_context(|| format!("cannot open {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display())).context(Internal)?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    let mut out = output(path)?;
    out.write_all(bytes).and_then(|()| out.flush()).context("cannot write output").context(Internal)
}

fn warn_imports(path: &Path, warnings: &[ImportWarning]) {
    for w in warnings {
        eprintln!("warning: {}:{}: {}", path.display(), w.line, w.message);
    }
}

fn load_packets(source: &PacketSource) -> Result<(Vec<PacketRecord>, CaptureSummary)> {
    if let Some(path) = &source.pcap {
        let parsed = parse_pcap(&read(path)?).with_context(|| format!("cannot parse {}", path.display()))?;
        if let Some(e) = &parsed.truncated {
            eprintln!("warning: {}: {e}; using the {} packets read before it", path.display(), parsed.packets.len());
        }
        return Ok((parsed.packets, parsed.summary));
    }
    let path = source.packets.as_ref().expect("clap requires one source");
    let all = parse_packet_csv(open(path)?).with_context(|| format!("cannot parse {}", path.display()))?;
    let mut summary = CaptureSummary::default();
    let (packets, other): (Vec<PacketRecord>, Vec<PacketRecord>) = all.into_iter().partition(PacketRecord::is_tcp_or_udp);
    summary.packets_read = packets.len() as u64;
    summary.packets_skipped_unsupported_protocol = other.len() as u64;
    summary.capture_start = packets.iter().map(|p| p.timestamp).reduce(f64::min).unwrap_or(0.0);
    summary.capture_end = packets.iter().map(|p| p.timestamp).reduce(f64::max).unwrap_or(0.0);
    Ok((packets, summary))
}

fn conversations_of(packets: &[PacketRecord], summary: &CaptureSummary) -> Result<Vec<Conversation>> {
    let start = (summary.packets_read > 0).then_some(summary.capture_start);
    Ok(aggregate(packets, start)?)
}

pub fn extract(args: &ExtractArgs) -> Result<()> {
    let (packets, summary) = load_packets(&args.source)?;
    let convs = conversations_of(&packets, &summary)?;
    write_output(args.out.as_deref(), conversations_to_csv(&convs).as_bytes())?;
    eprintln!(
        "{} packets read, {} skipped (non-IP), {} skipped (unsupported protocol); {} conversations",
        summary.packets_read,
        summary.packets_skipped_non_ip,
        summary.packets_skipped_unsupported_protocol,
        convs.len()
    );
    Ok(())
}

/// Conversations from a capture (recognized by its magic) or a conversation CSV.
fn load_conversations(path: &Path, mode: ValidationMode) -> Result<Vec<Conversation>> {
    let bytes = read(path)?;
    if bytes.len() >= 4 && PCAP_MAGICS.iter().any(|m| bytes[..4] == m[..]) {
        let parsed = parse_pcap(&bytes).with_context(|| format!("cannot parse {}", path.display()))?;
        if let Some(e) = &parsed.truncated {
            eprintln!("warning: {}: {e}", path.display());
        }
        return conversations_of(&parsed.packets, &parsed.summary);
    }
    let (convs, warnings) =
        csv_to_conversations(&bytes[..], mode).with_context(|| format!("cannot parse {}", path.display()))?;
    warn_imports(path, &warnings);
    Ok(convs)
}

pub fn label(args: &LabelArgs) -> Result<()> {
    if args.ransomware.is_empty() && args.benign.is_empty() {
        bail!("give at least one --ransomware or --benign input");
    }
    let mode = if args.lenient { ValidationMode::Lenient } else { ValidationMode::Strict };
    let inputs = args.ransomware.iter().map(|p| (p, Label::Ransomware)).chain(args.benign.iter().map(|p| (p, Label::Benign)));
    let mut sets = Vec::new();
    for (path, label) in inputs {
        let conversations = load_conversations(path, mode)?;
        if conversations.is_empty() {
            bail!("{} contains no conversations", path.display());
        }
        sets.push(LabeledSet { conversations, label, origin: Some(path.display().to_string()) });
    }
    let dataset = label_and_merge(&sets)?;
    write_output(args.out.as_deref(), dataset_to_csv(&dataset).as_bytes())?;
    eprintln!(
        "{} samples: {} ransomware, {} benign",
        dataset.len(),
        dataset.count(Label::Ransomware),
        dataset.count(Label::Benign)
    );
    Ok(())
}

fn load_dataset(path: &Path, lenient: bool) -> Result<Dataset> {
    let mode = if lenient { ValidationMode::Lenient } else { ValidationMode::Strict };
    let (dataset, warnings) = csv_to_dataset(open(path)?, mode).with_context(|| format!("cannot parse {}", path.display()))?;
    warn_imports(path, &warnings);
    Ok(dataset)
}

pub fn train_model(args: &TrainArgs) -> Result<()> {
    let kind = args.kind;
    let unused = args.model.hyper.unused_by(kind);
    if !unused.is_empty() {
        eprintln!("warning: {kind} ignores --{}", unused.join(", --"));
    }
    let dataset = load_dataset(&args.data, args.model.lenient)?;
    let hp = args.model.hyperparams(kind);
    let (train_set, test_set) = if args.all_data {
        (dataset, None)
    } else {
        let spec = SplitSpec { mode: SplitMode::Holdout(args.holdout), seed: hp.seed };
        let part = split(&dataset, &spec)?.swap_remove(0);
        (dataset.subset(&part.train), Some(dataset.subset(&part.test)))
    };
    let model = train(kind, &hp, &train_set)?;
    let bytes = save_model(&model);
    fs::write(&args.out, &bytes).with_context(|| format!("cannot write {}", args.out.display())).context(Internal)?;
    eprintln!(
        "trained {kind} on {} samples in {:.6} s; model {} written to {}",
        train_set.len(),
        model.training_time,
        model.fingerprint(),
        args.out.display()
    );
    if let Some(test) = test_set {
        let r = test_model(&model, &test)?;
        eprintln!(
            "holdout ({} samples): accuracy {}%, TPR {}%, FPR {}%",
            test.len(),
            r.accuracy.percent(),
            r.tpr.percent(),
            r.fpr.percent()
        );
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let dataset = load_dataset(&args.data, args.model.lenient)?;
    let seed = args.model.seed;
    let spec = args.split.spec(seed);
    let reports = if let Some(path) = &args.model_path {
        let model = load_model(&read(path)?).with_context(|| format!("cannot load {}", path.display()))?;
        let test = if args.all_data {
            dataset
        } else {
            let part = split(&dataset, &spec)?.swap_remove(0);
            let test = dataset.subset(&part.test);
            if model.train_fingerprint == dataset.subset(&part.train).fingerprint() {
                test
            } else {
                eprintln!("warning: the model was not trained on this split's training part; scores may be optimistic");
                test
            }
        };
        vec![test_model(&model, &test)?]
    } else {
        let mut reports = Vec::new();
        for &kind in &args.kinds.0 {
            let evaluation = evaluate(kind, &args.model.hyperparams(kind), &dataset, &spec)?;
            eprintln!("{kind}: accuracy {}%", evaluation.summary.accuracy.percent());
            reports.push(evaluation.summary);
        }
        reports
    };
    let text = match args.format {
        ReportFormat::Csv => render_report_csv(&reports),
        ReportFormat::Json => render_report_json(seed, &reports) + "\n",
    };
    write_output(args.out.as_deref(), text.as_bytes())
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    let dataset = load_dataset(&args.data, args.model.lenient)?;
    let spec = SplitSpec { mode: SplitMode::Holdout(args.holdout), seed: args.model.seed };
    let rows = benchmark(&args.kinds.0, &|k| args.model.hyperparams(k), &dataset, &spec)?;
    write_output(args.out.as_deref(), render_timing_csv(&rows).as_bytes())
}

struct Flushing<S>(S);

impl<W: Write> AlertSink for Flushing<JsonLinesSink<W>> {
    fn emit(&mut self, alert: &ransomflow::Alert) -> io::Result<()> {
        self.0.emit(alert)?;
        self.0 .0.flush()
    }
}

impl<W: Write> AlertSink for Flushing<WarningSink<W>> {
    fn emit(&mut self, alert: &ransomflow::Alert) -> io::Result<()> {
        self.0.emit(alert)?;
        self.0 .0.flush()
    }
}

pub fn detect(args: &DetectArgs) -> Result<()> {
    let spec = WindowSpec::new(args.interval)?;
    let model_path: &PathBuf = &args.model_path;
    let mut detector = Detector::from_model_bytes(&read(model_path)?, spec)
        .with_context(|| format!("cannot load {}", model_path.display()))?;
    eprintln!("model {} ({}), window {} s", detector.model_fingerprint(), model_path.display(), args.interval);

    let out = output(args.out.as_deref())?;
    let mut sink: Box<dyn AlertSink> = match args.format {
        AlertFormat::Json => Box::new(Flushing(JsonLinesSink(out))),
        AlertFormat::Text => Box::new(Flushing(WarningSink(out))),
    };
    let mut feed = |event: Result<SourceEvent, ransomflow::capture::CaptureError>| -> Result<()> {
        match event {
            Ok(SourceEvent::Packet(p)) => detector.push(&p, sink.as_mut()).map_err(classify_detect_error),
            Ok(SourceEvent::Skipped(_)) => {
                detector.note_skipped();
                Ok(())
            }
            Err(e) => {
                eprintln!("warning: {e}");
                detector.note_skipped();
                Ok(())
            }
        }
    };
    if let Some(path) = &args.source.pcap {
        let reader = PcapReader::new(open(path)?).with_context(|| format!("cannot parse {}", path.display()))?;
        reader.into_iter().try_for_each(&mut feed)?;
    } else {
        let path = args.source.packets.as_ref().expect("clap requires one source");
        let reader = PacketCsvReader::new(open(path)?).with_context(|| format!("cannot parse {}", path.display()))?;
        reader.map(|r| r.map(SourceEvent::Packet)).try_for_each(&mut feed)?;
    }
    let summary = detector.finish(sink.as_mut()).map_err(classify_detect_error)?;
    eprintln!(
        "{} packets in {} windows, {} conversations, {} alerts ({} skipped, {} late)",
        summary.packets, summary.windows, summary.conversations, summary.alerts, summary.skipped, summary.late_packets
    );
    Ok(())
}

fn classify_detect_error(e: DetectError) -> anyhow::Error {
    match e {
        DetectError::SinkFailure { .. } => anyhow::Error::new(e).context(Internal),
        other => other.into(),
    }
}
