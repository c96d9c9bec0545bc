//! Property checks shared by the `properties` and `acceptance` targets. Each
//! runs its own generated cases and reports the first minimal failure.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::OnceLock;

use apptraffic::analytics::{protocol_distribution, temporal_histogram, Scope, TrackedProtocol};
use apptraffic::classify::{classify_capture, AppProtocol, ClassifiedPacket, FlowKey, TlsVersion};
use apptraffic::dataset::{scan_dataset, truncate_packets, CaptureLabel, EntryKind, LabelFormat};
use apptraffic::ingest::{load_capture, PacketRecord, Transport};
use apptraffic::keylog::{key_coverage, keylog_filename_with, parse_keylog, render_keylog, tls_flow_randoms};
use apptraffic::synth::{synthesize, AppSpec, CaptureSpec, FixtureSpec, FlowSpec, Profile};
use chrono::DateTime;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::fake_packet;

pub const CASES: u32 = 1000;

pub type Outcome = Result<(), String>;

fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    })
}

fn run<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Outcome
where
    S::Value: std::fmt::Debug,
{
    runner().run(&strategy, test).map_err(|e| e.to_string())
}

pub type Suite = (&'static str, fn() -> Outcome);

pub const ALL: [Suite; 7] = [
    ("filename round-trip", filename_round_trip),
    ("classification invariant under interleaving", interleaving_invariance),
    ("histogram conservation", histogram_conservation),
    ("distribution percentages sum to 100", distribution_sums),
    ("truncation idempotence", truncation_idempotence),
    ("keylog coverage monotonicity", keylog_monotonicity),
    ("manifest conservation", manifest_conservation),
];

fn app_name() -> impl Strategy<Value = String> {
    prop_oneof![
        "[A-Za-z0-9.-]{1,20}",
        "[a-z]{1,6}(_[A-Za-z0-9.]{0,6}){1,4}",
        "_[a-z0-9_]{0,8}_",
    ]
}

fn label() -> impl Strategy<Value = CaptureLabel> {
    (app_name(), 0i64..4_102_444_800, 1u64..10_000_000).prop_map(|(app, secs, dur)| {
        CaptureLabel::new(&app, DateTime::from_timestamp(secs, 0).unwrap(), dur).unwrap()
    })
}

pub fn filename_round_trip() -> Outcome {
    let formats = [
        LabelFormat::default(),
        LabelFormat::new("%Y-%m-%d_%H-%M-%S").unwrap(),
    ];
    run((label(), 0..formats.len()), |(label, f)| {
        let format = &formats[f];
        let name = format.render_filename(&label);
        let parsed = format.parse_filename(&name).map_err(|e| TestCaseError::fail(format!("{name}: {e}")))?;
        prop_assert_eq!(&parsed, &label);
        prop_assert_eq!(format.render_filename(&parsed), name);
        let keylog = keylog_filename_with(&label, format);
        prop_assert_eq!(apptraffic::keylog::parse_keylog_filename(&keylog, format).ok(), Some(label));
        Ok(())
    })
}

const PROFILES: [Profile; 10] = [
    Profile::Tls10,
    Profile::Tls12,
    Profile::Tls13,
    Profile::Ssl2,
    Profile::UnknownSsl,
    Profile::QuicV1,
    Profile::Do53,
    Profile::DoT,
    Profile::DoT12,
    Profile::ConnectivityHttp,
];

fn capture_records(flows: &[(usize, u64)]) -> Vec<PacketRecord> {
    let spec = FixtureSpec {
        seed: 11,
        linktype: apptraffic::ingest::LINKTYPE_LINUX_SLL,
        apps: vec![AppSpec {
            app_name: "com.example.mix".into(),
            captures: vec![CaptureSpec {
                duration_s: 60,
                date: None,
                flows: flows
                    .iter()
                    .map(|&(p, n)| FlowSpec::new(PROFILES[p], n, 0.0, 50.0))
                    .collect(),
            }],
        }],
    };
    let cap = synthesize(&spec).unwrap().remove(0);
    load_capture(&cap.pcap).unwrap().packets
}

type PerFlow = BTreeMap<FlowKey, Vec<(AppProtocol, bool, Option<[u8; 32]>)>>;

fn per_flow(classified: &[ClassifiedPacket]) -> PerFlow {
    let mut out = PerFlow::new();
    for p in classified {
        out.entry(p.flow).or_default().push((p.protocol, p.is_app_data, p.client_random));
    }
    out
}

pub fn interleaving_invariance() -> Outcome {
    let flows = prop::collection::vec((0..PROFILES.len(), 1u64..6), 1..6);
    run((flows, any::<u64>()), |(flows, seed)| {
        let records = capture_records(&flows);
        let baseline = per_flow(&classify_capture(records.clone()));

        let mut queues: BTreeMap<FlowKey, std::collections::VecDeque<PacketRecord>> = BTreeMap::new();
        for r in records {
            queues.entry(FlowKey::of(&r)).or_default().push_back(r);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shuffled = Vec::new();
        loop {
            let live: Vec<FlowKey> = queues.iter().filter(|(_, q)| !q.is_empty()).map(|(k, _)| *k).collect();
            let Some(k) = live.choose(&mut rng) else { break };
            shuffled.extend(queues.get_mut(k).and_then(|q| q.pop_front()));
        }
        prop_assert_eq!(per_flow(&classify_capture(shuffled)), baseline);
        Ok(())
    })
}

const TAGS: [(Transport, u16); 7] = [
    (Transport::Tcp, 443),
    (Transport::Tcp, 853),
    (Transport::Tcp, 80),
    (Transport::Tcp, 5222),
    (Transport::Udp, 443),
    (Transport::Udp, 53),
    (Transport::Udp, 3478),
];

fn tag_protocol(i: usize, version: usize) -> AppProtocol {
    let v = TlsVersion::ALL[version % TlsVersion::ALL.len()];
    match i {
        0 => AppProtocol::tls(v),
        1 => AppProtocol::dot(v),
        2 => AppProtocol::HTTP,
        3 => AppProtocol::OTHER_TCP,
        4 => AppProtocol::QUIC,
        5 => AppProtocol::DO53,
        _ => AppProtocol::OTHER_UDP,
    }
}

fn packets() -> impl Strategy<Value = Vec<ClassifiedPacket>> {
    prop::collection::vec((0u64..900_000_000_000, 0..TAGS.len(), 0usize..7, any::<bool>()), 0..200).prop_map(|v| {
        v.into_iter()
            .map(|(ts, tag, version, app)| {
                let (transport, port) = TAGS[tag];
                fake_packet(ts, transport, tag_protocol(tag, version), app, port)
            })
            .collect()
    })
}

pub fn histogram_conservation() -> Outcome {
    let width = prop_oneof![Just(1.0), Just(5.0), Just(10.0), Just(30.0), Just(60.0), 0.5f64..120.0];
    run((packets(), width), |(packets, width)| {
        let h = temporal_histogram(&packets, width);
        for t in TrackedProtocol::ALL {
            let expected = packets.iter().filter(|p| p.is_app_data && TrackedProtocol::of(p) == Some(t)).count();
            prop_assert_eq!(h.total(t), expected as u64);
            prop_assert_eq!(h.series[&t].len(), h.bin_count);
        }
        if packets.is_empty() {
            prop_assert_eq!(h.bin_count, 0);
        }
        Ok(())
    })
}

pub fn distribution_sums() -> Outcome {
    run(packets(), |packets| {
        for scope in [Scope::AllPackets, Scope::AppDataOnly] {
            let d = protocol_distribution(&packets, scope);
            let admitted = packets.iter().filter(|p| scope.admits(p)).count() as u64;
            prop_assert_eq!(d.total, admitted);
            let rows = d.rows();
            prop_assert_eq!(rows.iter().map(|r| r.count).sum::<u64>(), admitted);
            prop_assert!(rows.iter().all(|r| r.count > 0));
            if admitted > 0 {
                let sum: f64 = rows.iter().map(|r| r.pct).sum();
                prop_assert!((sum - 100.0).abs() < 1e-9, "sum {}", sum);
                let by_transport = d.percentage_sum_by_transport();
                prop_assert!((by_transport - 100.0).abs() < 1e-9);
            }
        }
        Ok(())
    })
}

trait TransportShares {
    fn percentage_sum_by_transport(&self) -> f64;
}

impl TransportShares for apptraffic::analytics::ProtocolDistribution {
    fn percentage_sum_by_transport(&self) -> f64 {
        [Transport::Tcp, Transport::Udp]
            .into_iter()
            .map(|t| apptraffic::analytics::pct(self.transport_count(t), self.total))
            .sum()
    }
}

pub fn truncation_idempotence() -> Outcome {
    let input = prop::collection::vec(0u64..1_000_000_000_000, 0..300);
    run((input, 0.001f64..20.0), |(ts, minutes)| {
        let packets: Vec<ClassifiedPacket> = ts
            .iter()
            .enumerate()
            .map(|(i, &t)| fake_packet(t, Transport::Udp, AppProtocol::DO53, true, i as u16))
            .collect();
        let once = truncate_packets(&packets, minutes);
        let twice = truncate_packets(&once, minutes);
        prop_assert_eq!(&twice, &once);
        let mut sorted = packets.clone();
        sorted.sort_by_key(|p| p.record.ts_ns);
        prop_assert_eq!(&sorted[..once.len()], &once[..]);
        if let Some(first) = sorted.first() {
            let end = first.record.ts_ns + apptraffic::dataset::minutes_to_ns(minutes);
            prop_assert!(once.iter().all(|p| p.record.ts_ns < end));
            prop_assert!(sorted[once.len()..].iter().all(|p| p.record.ts_ns >= end));
        }
        Ok(())
    })
}

struct KeyFixture {
    packets: Vec<ClassifiedPacket>,
    randoms: Vec<[u8; 32]>,
    keylog: apptraffic::keylog::KeyIndex,
}

fn key_fixture() -> &'static KeyFixture {
    static FIXTURE: OnceLock<KeyFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let profiles = [
            Profile::Tls13,
            Profile::Tls13,
            Profile::Tls12,
            Profile::Tls10,
            Profile::Ssl2,
            Profile::DoT,
            Profile::DoT12,
            Profile::Tls13,
            Profile::UnknownSsl,
            Profile::QuicV1,
        ];
        let flows: Vec<(usize, u64)> = profiles
            .iter()
            .map(|p| (PROFILES.iter().position(|q| q == p).unwrap(), 3))
            .collect();
        let spec_flows: Vec<FlowSpec> = flows.iter().map(|&(p, n)| FlowSpec::new(PROFILES[p], n, 0.0, 20.0)).collect();
        let spec = FixtureSpec {
            seed: 5,
            linktype: apptraffic::ingest::LINKTYPE_LINUX_SLL,
            apps: vec![AppSpec {
                app_name: "com.example.keys".into(),
                captures: vec![CaptureSpec {
                    duration_s: 60,
                    date: None,
                    flows: spec_flows,
                }],
            }],
        };
        let cap = synthesize(&spec).unwrap().remove(0);
        let packets = classify_capture(load_capture(&cap.pcap).unwrap().packets);
        let randoms = tls_flow_randoms(&packets).into_values().flatten().collect();
        KeyFixture {
            packets,
            randoms,
            keylog: parse_keylog(&cap.keylog),
        }
    })
}

pub fn keylog_monotonicity() -> Outcome {
    let fx = key_fixture();
    let n = fx.randoms.len();
    run((any::<u64>(), any::<u64>(), any::<bool>()), |(small, extra, garbage)| {
        let mask_a = small & ((1u64 << n) - 1);
        let mask_b = mask_a | (extra & ((1u64 << n) - 1));
        let subset = |mask: u64| {
            let keep: BTreeSet<[u8; 32]> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| fx.randoms[i]).collect();
            let mut text = render_keylog(fx.keylog.entries().filter(|e| keep.contains(&e.client_random)));
            if garbage {
                text.push_str("not a key line\nCLIENT_RANDOM zz 00\n");
            }
            parse_keylog(&text)
        };
        let a = key_coverage(&fx.packets, &subset(mask_a));
        let b = key_coverage(&fx.packets, &subset(mask_b));
        prop_assert!(a.coverage_fraction <= b.coverage_fraction);
        prop_assert_eq!(a.flows_with_keys, mask_a.count_ones() as usize);
        prop_assert_eq!(b.flows_with_keys, mask_b.count_ones() as usize);
        prop_assert_eq!(a.flows_with_client_hello, n);
        Ok(())
    })
}

#[derive(Debug, Clone)]
enum Listed {
    Pair { capture: bool, keylog: bool },
    JunkCapture,
    JunkKeylog,
    OtherFile,
    Directory,
}

fn listed() -> impl Strategy<Value = Listed> {
    prop_oneof![
        6 => (any::<bool>(), any::<bool>()).prop_map(|(capture, keylog)| Listed::Pair { capture, keylog }),
        1 => Just(Listed::JunkCapture),
        1 => Just(Listed::JunkKeylog),
        1 => Just(Listed::OtherFile),
        1 => Just(Listed::Directory),
    ]
}

pub fn manifest_conservation() -> Outcome {
    let format = LabelFormat::default();
    let items = prop::collection::vec((listed(), label(), 0usize..4), 0..40);
    run(items, |items| {
        let root = PathBuf::from("/data");
        let mut listing = Vec::new();
        let mut expected_entries = HashMap::new();
        let mut expected_unpaired = 0;
        let mut expected_junk = 0;
        let mut apps = BTreeSet::new();
        for (i, (item, label, kind)) in items.iter().enumerate() {
            // an index suffix keeps every stem distinct
            let label = CaptureLabel::new(&format!("{}{i}", label.app_name), label.capture_date, label.duration_s).unwrap();
            match item {
                Listed::Pair { capture, keylog } => {
                    if *capture {
                        listing.push((root.join(format.render_filename(&label)), EntryKind::File));
                        expected_entries.insert(label.clone(), *keylog);
                        apps.insert(label.app_name.clone());
                    } else if *keylog {
                        expected_unpaired += 1;
                    }
                    if *keylog {
                        listing.push((root.join(keylog_filename_with(&label, &format)), EntryKind::File));
                    }
                }
                Listed::JunkCapture => {
                    listing.push((root.join(format!("junk{i}.pcap")), EntryKind::File));
                    expected_junk += 1;
                }
                Listed::JunkKeylog => {
                    listing.push((root.join(format!("sslkeylog_junk{i}.txt")), EntryKind::File));
                    expected_junk += 1;
                }
                Listed::OtherFile => listing.push((root.join(format!("notes{i}.md")), EntryKind::File)),
                Listed::Directory => {
                    let k = if kind % 2 == 0 { EntryKind::Directory } else { EntryKind::Other };
                    listing.push((root.join(format.render_filename(&label)), k));
                }
            }
        }
        let m = scan_dataset(&listing, &format);
        prop_assert_eq!(m.entries.len(), expected_entries.len());
        for e in &m.entries {
            prop_assert_eq!(Some(&e.keylog_path.is_some()), expected_entries.get(&e.label));
        }
        prop_assert_eq!(m.unpaired_keylogs.len(), expected_unpaired);
        prop_assert_eq!(m.unparseable.len(), expected_junk);
        prop_assert_eq!(&m.apps, &apps);
        let files = listing.iter().filter(|(p, k)| *k == EntryKind::File && !p.to_string_lossy().ends_with(".md")).count();
        let keyed = m.entries.iter().filter(|e| e.keylog_path.is_some()).count();
        prop_assert_eq!(files, m.entries.len() + keyed + m.unpaired_keylogs.len() + m.unparseable.len());
        Ok(())
    })
}
