//! Aggregate statistics over classified packets.

mod compare;
mod graph;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::classify::{AppTag, ClassifiedPacket, ProtocolCategory, TlsVersion};
use crate::dataset::CaptureLabel;
use crate::ingest::Transport;

pub use compare::{
    compare_datasets, quic_behavior, CaptureData, CompareError, CompareOptions, ComparisonReport, DatasetInput,
    DnsEvolution, EncryptionRow, PpmRow, QuicBehavior, QuicRow,
};
pub use graph::{flow_graph, FlowGraph, GraphLink, GraphMode, GraphNode, DEFAULT_PORT_INTERVAL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    AllPackets,
    #[default]
    AppDataOnly,
}

impl Scope {
    pub fn admits(self, p: &ClassifiedPacket) -> bool {
        self == Scope::AllPackets || p.is_app_data
    }
}

pub fn pct(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 * 100.0 / whole as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionRow {
    pub key: String,
    pub transport: Transport,
    pub category: ProtocolCategory,
    pub count: u64,
    pub pct: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProtocolDistribution {
    pub scope: Scope,
    pub counts: BTreeMap<(Transport, ProtocolCategory), u64>,
    pub total: u64,
}

impl ProtocolDistribution {
    pub fn new(scope: Scope) -> Self {
        ProtocolDistribution {
            scope,
            ..Default::default()
        }
    }

    pub fn add(&mut self, p: &ClassifiedPacket) {
        if self.scope.admits(p) {
            *self.counts.entry((p.record.transport, p.protocol.category())).or_default() += 1;
            self.total += 1;
        }
    }

    pub fn merge(&mut self, other: &ProtocolDistribution) {
        for (k, v) in &other.counts {
            *self.counts.entry(*k).or_default() += v;
        }
        self.total += other.total;
    }

    pub fn count(&self, transport: Transport, category: ProtocolCategory) -> u64 {
        self.counts.get(&(transport, category)).copied().unwrap_or(0)
    }

    pub fn percentage(&self, transport: Transport, category: ProtocolCategory) -> f64 {
        pct(self.count(transport, category), self.total)
    }

    pub fn transport_count(&self, transport: Transport) -> u64 {
        self.counts.iter().filter(|((t, _), _)| *t == transport).map(|(_, c)| c).sum()
    }

    pub fn rows(&self) -> Vec<DistributionRow> {
        self.counts
            .iter()
            .map(|(&(transport, category), &count)| DistributionRow {
                key: format!("{}/{}", transport.as_str(), category.label()),
                transport,
                category,
                count,
                pct: pct(count, self.total),
            })
            .collect()
    }
}

impl Serialize for ProtocolDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            scope: Scope,
            total: u64,
            tcp_pct: f64,
            udp_pct: f64,
            rows: Vec<DistributionRow>,
        }
        Repr {
            scope: self.scope,
            total: self.total,
            tcp_pct: pct(self.transport_count(Transport::Tcp), self.total),
            udp_pct: pct(self.transport_count(Transport::Udp), self.total),
            rows: self.rows(),
        }
        .serialize(s)
    }
}

/// Zero-count categories never appear.
pub fn protocol_distribution<'a>(
    classified: impl IntoIterator<Item = &'a ClassifiedPacket>,
    scope: Scope,
) -> ProtocolDistribution {
    let mut d = ProtocolDistribution::new(scope);
    classified.into_iter().for_each(|p| d.add(p));
    d
}

/// Packets per minute over `duration_s`, or over the observed span when no
/// duration is known. The duration is floored at one second.
pub fn ppm_over(packets: &[ClassifiedPacket], duration_s: Option<f64>, scope: Scope) -> f64 {
    let count = packets.iter().filter(|p| scope.admits(p)).count();
    if count == 0 {
        return 0.0;
    }
    let duration = duration_s.unwrap_or_else(|| {
        let first = packets.iter().map(|p| p.record.ts_ns).min().unwrap_or(0);
        let last = packets.iter().map(|p| p.record.ts_ns).max().unwrap_or(0);
        (last - first) as f64 / 1e9
    });
    count as f64 * 60.0 / duration.max(1.0)
}

/// All-packet rate using the labeled duration when present.
pub fn packets_per_minute(packets: &[ClassifiedPacket], label: Option<&CaptureLabel>) -> f64 {
    ppm_over(packets, label.map(|l| l.duration_s as f64), Scope::AllPackets)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PpmRecord {
    pub app_name: String,
    pub mean_ppm: f64,
    pub captures_used: usize,
}

/// Per-app arithmetic mean of per-capture rates, sorted by app name.
pub fn mean_ppm_per_app<'a>(per_capture: impl IntoIterator<Item = (&'a str, f64)>) -> Vec<PpmRecord> {
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (app, ppm) in per_capture {
        let e = acc.entry(app).or_default();
        e.0 += ppm;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(app, (sum, n))| PpmRecord {
            app_name: app.to_string(),
            mean_ppm: sum / n as f64,
            captures_used: n,
        })
        .collect()
}

/// Unweighted mean over apps.
pub fn dataset_mean_ppm(records: &[PpmRecord]) -> f64 {
    if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.mean_ppm).sum::<f64>() / records.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum TrackedProtocol {
    #[serde(rename = "TCP-encrypted")]
    TcpEncrypted,
    #[serde(rename = "QUIC")]
    Quic,
    Do53,
    DoT,
    #[serde(rename = "HTTP")]
    Http,
}

impl TrackedProtocol {
    pub const ALL: [TrackedProtocol; 5] = [
        TrackedProtocol::TcpEncrypted,
        TrackedProtocol::Quic,
        TrackedProtocol::Do53,
        TrackedProtocol::DoT,
        TrackedProtocol::Http,
    ];

    pub fn of(p: &ClassifiedPacket) -> Option<TrackedProtocol> {
        Some(match p.protocol.tag {
            AppTag::Tls => TrackedProtocol::TcpEncrypted,
            AppTag::Quic => TrackedProtocol::Quic,
            AppTag::Do53 => TrackedProtocol::Do53,
            AppTag::DoT => TrackedProtocol::DoT,
            AppTag::Http => TrackedProtocol::Http,
            AppTag::OtherTcp | AppTag::OtherUdp => return None,
        })
    }
}

pub const DEFAULT_BIN_WIDTH_S: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemporalHistogram {
    pub bin_width_s: f64,
    pub t0_ns: u64,
    pub bin_count: usize,
    /// One count series per tracked protocol, all of length `bin_count`.
    pub series: BTreeMap<TrackedProtocol, Vec<u64>>,
}

impl TemporalHistogram {
    pub fn total(&self, protocol: TrackedProtocol) -> u64 {
        self.series.get(&protocol).map_or(0, |s| s.iter().sum())
    }
}

/// Histogram of app-data packets, anchored at the earliest packet of the
/// input (app data or not) and spanning to the latest.
pub fn temporal_histogram(packets: &[ClassifiedPacket], bin_width_s: f64) -> TemporalHistogram {
    let t0 = packets.iter().map(|p| p.record.ts_ns).min().unwrap_or(0);
    let t_end = packets.iter().map(|p| p.record.ts_ns).max().unwrap_or(0);
    histogram_between(packets.iter().filter(|p| p.is_app_data), bin_width_s, t0, t_end, !packets.is_empty())
}

/// Bins the given packets over `[t0, t_end]`; packets outside are ignored.
pub fn histogram_between<'a>(
    packets: impl IntoIterator<Item = &'a ClassifiedPacket>,
    bin_width_s: f64,
    t0: u64,
    t_end: u64,
    nonempty: bool,
) -> TemporalHistogram {
    let width_ns = (bin_width_s * 1e9).max(1.0);
    let bin_of = |ts: u64| ((ts - t0) as f64 / width_ns).floor() as usize;
    let bin_count = if nonempty && t_end >= t0 { bin_of(t_end) + 1 } else { 0 };
    let mut series: BTreeMap<TrackedProtocol, Vec<u64>> =
        TrackedProtocol::ALL.iter().map(|&t| (t, vec![0; bin_count])).collect();
    for p in packets {
        let ts = p.record.ts_ns;
        if ts < t0 || ts > t_end {
            continue;
        }
        if let Some(t) = TrackedProtocol::of(p) {
            let b = bin_of(ts).min(bin_count.saturating_sub(1));
            if let Some(slot) = series.get_mut(&t).and_then(|s| s.get_mut(b)) {
                *slot += 1;
            }
        }
    }
    TemporalHistogram {
        bin_width_s,
        t0_ns: t0,
        bin_count,
        series,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VersionShare {
    pub version: TlsVersion,
    pub count: u64,
    pub pct: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EncryptionBreakdown {
    pub app_data_total: u64,
    /// TLS and DoT app-data packets over TCP.
    pub tcp_encrypted_total: u64,
    pub tcp_encrypted: Vec<VersionShare>,
    pub quic_count: u64,
    pub quic_share_pct: f64,
    pub dot_count: u64,
    pub dot_pct_of_total: f64,
    pub dot_versions: Vec<VersionShare>,
}

impl EncryptionBreakdown {
    pub fn version_pct(&self, v: TlsVersion) -> f64 {
        self.tcp_encrypted.iter().find(|s| s.version == v).map_or(0.0, |s| s.pct)
    }

    pub fn version_count(&self, v: TlsVersion) -> u64 {
        self.tcp_encrypted.iter().find(|s| s.version == v).map_or(0, |s| s.count)
    }
}

fn shares(counts: &BTreeMap<TlsVersion, u64>) -> Vec<VersionShare> {
    let total = counts.values().sum();
    counts
        .iter()
        .rev()
        .filter(|(_, &c)| c > 0)
        .map(|(&version, &count)| VersionShare {
            version,
            count,
            pct: pct(count, total),
        })
        .collect()
}

/// Always computed over app-data packets.
pub fn encryption_breakdown<'a>(classified: impl IntoIterator<Item = &'a ClassifiedPacket>) -> EncryptionBreakdown {
    let mut tcp: BTreeMap<TlsVersion, u64> = BTreeMap::new();
    let mut dot: BTreeMap<TlsVersion, u64> = BTreeMap::new();
    let mut b = EncryptionBreakdown::default();
    for p in classified.into_iter().filter(|p| p.is_app_data) {
        b.app_data_total += 1;
        let version = p.protocol.tls_version.unwrap_or(TlsVersion::UnknownSsl);
        match p.protocol.tag {
            AppTag::Tls if p.record.transport == Transport::Tcp => *tcp.entry(version).or_default() += 1,
            AppTag::DoT => {
                *tcp.entry(version).or_default() += 1;
                *dot.entry(version).or_default() += 1;
                b.dot_count += 1;
            }
            AppTag::Quic => b.quic_count += 1,
            _ => {}
        }
    }
    b.tcp_encrypted_total = tcp.values().sum();
    b.tcp_encrypted = shares(&tcp);
    b.dot_versions = shares(&dot);
    b.quic_share_pct = pct(b.quic_count, b.app_data_total);
    b.dot_pct_of_total = pct(b.dot_count, b.app_data_total);
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{AppProtocol, Direction, FlowKey};
    use crate::ingest::PacketRecord;

    pub(crate) fn pkt(ts_s: f64, transport: Transport, protocol: AppProtocol, app: bool) -> ClassifiedPacket {
        let record = PacketRecord {
            ts_ns: (ts_s * 1e9).round() as u64,
            src_ip: "10.0.0.1".parse().unwrap(),
            dst_ip: "10.0.0.2".parse().unwrap(),
            src_port: 40000,
            dst_port: 443,
            transport,
            packet_len: 100,
            payload: vec![],
            tcp_flags: None,
        };
        ClassifiedPacket {
            flow: FlowKey::of(&record),
            record,
            protocol,
            is_app_data: app,
            direction: Direction::FromInitiator,
            client_random: None,
        }
    }

    #[test]
    fn distribution_shares() {
        let mut v = Vec::new();
        v.extend((0..546).map(|_| pkt(0.0, Transport::Tcp, AppProtocol::tls(TlsVersion::Tls1_3), true)));
        v.extend((0..454).map(|_| pkt(0.0, Transport::Udp, AppProtocol::QUIC, true)));
        v.push(pkt(0.0, Transport::Tcp, AppProtocol::tls(TlsVersion::Tls1_3), false));
        let d = protocol_distribution(&v, Scope::AppDataOnly);
        assert_eq!(d.total, 1000);
        assert!((pct(d.transport_count(Transport::Tcp), d.total) - 54.6).abs() < 1e-9);
        assert_eq!(protocol_distribution(&v, Scope::AllPackets).total, 1001);
        let empty = protocol_distribution(&[], Scope::AllPackets);
        assert_eq!((empty.total, empty.rows().len()), (0, 0));
    }

    #[test]
    fn ppm() {
        let label = CaptureLabel::new("x", chrono::DateTime::UNIX_EPOCH, 120).unwrap();
        let v: Vec<_> = (0..600).map(|i| pkt(i as f64 * 0.1, Transport::Udp, AppProtocol::QUIC, true)).collect();
        assert_eq!(packets_per_minute(&v, Some(&label)), 300.0);
        assert_eq!(packets_per_minute(&[], Some(&label)), 0.0);
        // single packet: span 0 floors to 1 s
        assert_eq!(packets_per_minute(&v[..1], None), 60.0);
        let recs = mean_ppm_per_app([("a", 100.0), ("a", 300.0), ("b", 50.0)]);
        assert_eq!(recs[0].mean_ppm, 200.0);
        assert_eq!(dataset_mean_ppm(&recs), 125.0);
    }

    #[test]
    fn histogram_burst() {
        let mut v: Vec<_> = (0..50).map(|i| pkt(i as f64, Transport::Tcp, AppProtocol::tls(TlsVersion::Tls1_3), true)).collect();
        v.push(pkt(299.0, Transport::Tcp, AppProtocol::OTHER_TCP, false));
        let h = temporal_histogram(&v, DEFAULT_BIN_WIDTH_S);
        assert_eq!(h.bin_count, 30);
        let s = &h.series[&TrackedProtocol::TcpEncrypted];
        assert!(s[..5].iter().all(|&c| c == 10));
        assert!(s[5..].iter().all(|&c| c == 0));
        let one = temporal_histogram(&v[..1], 10.0);
        assert_eq!((one.bin_count, one.total(TrackedProtocol::TcpEncrypted)), (1, 1));
    }

    #[test]
    fn encryption_mix() {
        let mut v = Vec::new();
        v.extend((0..900).map(|_| pkt(0.0, Transport::Tcp, AppProtocol::tls(TlsVersion::Tls1_3), true)));
        v.extend((0..96).map(|_| pkt(0.0, Transport::Tcp, AppProtocol::tls(TlsVersion::Tls1_2), true)));
        v.extend((0..4).map(|_| pkt(0.0, Transport::Tcp, AppProtocol::dot(TlsVersion::Tls1_0), true)));
        let b = encryption_breakdown(&v);
        assert!((b.version_pct(TlsVersion::Tls1_3) - 90.0).abs() < 1e-9);
        assert!((b.version_pct(TlsVersion::Tls1_2) - 9.6).abs() < 1e-9);
        assert_eq!(b.dot_count, 4);
        let z = encryption_breakdown(&[]);
        assert_eq!((z.quic_share_pct, z.dot_pct_of_total), (0.0, 0.0));
    }
}
