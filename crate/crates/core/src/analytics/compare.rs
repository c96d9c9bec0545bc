//! Side-by-side statistics for two datasets restricted to their common apps.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{
    dataset_mean_ppm, encryption_breakdown, flow_graph, mean_ppm_per_app, pct, ppm_over, protocol_distribution,
    EncryptionBreakdown, FlowGraph, GraphMode, PpmRecord, ProtocolDistribution, Scope, DEFAULT_PORT_INTERVAL,
};
use crate::classify::{AppTag, ClassifiedPacket, TlsVersion};
use crate::dataset::{truncate_packets, CaptureLabel};
use crate::ingest::Transport;

#[derive(Debug, Clone)]
pub struct CaptureData {
    pub label: CaptureLabel,
    pub packets: Vec<ClassifiedPacket>,
}

#[derive(Debug, Clone, Default)]
pub struct DatasetInput {
    pub captures: Vec<CaptureData>,
}

impl DatasetInput {
    pub fn apps(&self) -> BTreeSet<&str> {
        self.captures.iter().map(|c| c.label.app_name.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareOptions {
    /// Minutes kept from the start of each capture of dataset A / B.
    pub truncate_a: Option<f64>,
    pub truncate_b: Option<f64>,
    /// Packet scope for distributions, DNS and QUIC counts.
    pub scope: Scope,
    /// Packet scope for packets-per-minute.
    pub ppm_scope: Scope,
    /// Restrict dataset-level statistics to common apps.
    pub common_only: bool,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            truncate_a: None,
            truncate_b: None,
            scope: Scope::AppDataOnly,
            ppm_scope: Scope::AllPackets,
            common_only: true,
        }
    }
}

impl CompareOptions {
    pub fn truncate_both(minutes: f64) -> Self {
        CompareOptions {
            truncate_a: Some(minutes),
            truncate_b: Some(minutes),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CompareError {
    #[error("the datasets have no app in common")]
    NoCommonApps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum QuicBehavior {
    ConsistentBoth,
    AdoptedInB,
    /// QUIC in A, none in B.
    PresentInAOnly,
    AbsentBoth,
}

pub fn quic_behavior(count_a: u64, count_b: u64) -> QuicBehavior {
    match (count_a > 0, count_b > 0) {
        (true, true) => QuicBehavior::ConsistentBoth,
        (false, true) => QuicBehavior::AdoptedInB,
        (true, false) => QuicBehavior::PresentInAOnly,
        (false, false) => QuicBehavior::AbsentBoth,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PpmRow {
    pub app_name: String,
    pub ppm_a: f64,
    pub ppm_b: f64,
    pub ratio_b_over_a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EncryptionRow {
    pub app_name: String,
    pub version: TlsVersion,
    pub count_a: u64,
    pub count_b: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuicRow {
    pub app_name: String,
    pub count_a: u64,
    pub count_b: u64,
    pub behavior: QuicBehavior,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DnsEvolution {
    pub do53_count_a: u64,
    pub dot_count_a: u64,
    pub do53_count_b: u64,
    pub dot_count_b: u64,
    pub do53_pct_a: f64,
    pub dot_pct_a: f64,
    pub do53_pct_b: f64,
    pub dot_pct_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub common_apps: BTreeSet<String>,
    pub captures_a: usize,
    pub captures_b: usize,
    pub distribution_a: ProtocolDistribution,
    pub distribution_b: ProtocolDistribution,
    pub ppm_a: Vec<PpmRecord>,
    pub ppm_b: Vec<PpmRecord>,
    pub ppm_table: Vec<PpmRow>,
    pub mean_ppm_a: f64,
    pub mean_ppm_b: f64,
    pub ratio_a_over_b: Option<f64>,
    pub ratio_b_over_a: Option<f64>,
    pub encryption_a: EncryptionBreakdown,
    pub encryption_b: EncryptionBreakdown,
    pub encryption_bihistogram: Vec<EncryptionRow>,
    pub quic: Vec<QuicRow>,
    pub dns_evolution: DnsEvolution,
    pub sankey_a: FlowGraph,
    pub sankey_b: FlowGraph,
}

struct Prepared<'a> {
    captures: Vec<(&'a CaptureLabel, Vec<ClassifiedPacket>)>,
}

impl<'a> Prepared<'a> {
    fn new(input: &'a DatasetInput, keep: impl Fn(&str) -> bool, truncate: Option<f64>) -> Self {
        let mut captures: Vec<_> = input
            .captures
            .iter()
            .filter(|c| keep(&c.label.app_name))
            .map(|c| {
                let packets = match truncate {
                    Some(m) => truncate_packets(&c.packets, m),
                    None => c.packets.clone(),
                };
                (&c.label, packets)
            })
            .collect();
        captures.sort_by(|a, b| a.0.cmp(b.0));
        Prepared { captures }
    }

    fn packets(&self) -> impl Iterator<Item = &ClassifiedPacket> {
        self.captures.iter().flat_map(|(_, p)| p.iter())
    }

    fn ppm(&self, truncate: Option<f64>, scope: Scope) -> Vec<PpmRecord> {
        mean_ppm_per_app(self.captures.iter().map(|(label, packets)| {
            let mut duration = label.duration_s as f64;
            if let Some(m) = truncate {
                duration = duration.min(m * 60.0);
            }
            (label.app_name.as_str(), ppm_over(packets, Some(duration), scope))
        }))
    }

    fn per_app<K: Ord>(&self, scope: Scope, key: impl Fn(&ClassifiedPacket) -> Option<K>) -> BTreeMap<(&str, K), u64> {
        let mut out = BTreeMap::new();
        for (label, packets) in &self.captures {
            for p in packets.iter().filter(|p| scope.admits(p)) {
                if let Some(k) = key(p) {
                    *out.entry((label.app_name.as_str(), k)).or_default() += 1;
                }
            }
        }
        out
    }

    fn sankey(&self) -> FlowGraph {
        flow_graph(
            self.captures.iter().map(|(l, p)| (l.app_name.as_str(), p.as_slice())),
            GraphMode::Sankey3,
            DEFAULT_PORT_INTERVAL,
        )
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

fn tcp_encrypted_version(p: &ClassifiedPacket) -> Option<TlsVersion> {
    match p.protocol.tag {
        AppTag::Tls | AppTag::DoT if p.record.transport == Transport::Tcp => p.protocol.tls_version,
        _ => None,
    }
}

fn dns_counts<'a>(packets: impl Iterator<Item = &'a ClassifiedPacket>, scope: Scope) -> (u64, u64) {
    packets.filter(|p| scope.admits(p)).fold((0, 0), |(d53, dot), p| match p.protocol.tag {
        AppTag::Do53 => (d53 + 1, dot),
        AppTag::DoT => (d53, dot + 1),
        _ => (d53, dot),
    })
}

pub fn compare_datasets(
    a: &DatasetInput,
    b: &DatasetInput,
    options: &CompareOptions,
) -> Result<ComparisonReport, CompareError> {
    let common: BTreeSet<String> = a.apps().intersection(&b.apps()).map(|s| s.to_string()).collect();
    if common.is_empty() {
        return Err(CompareError::NoCommonApps);
    }
    let keep = |app: &str| !options.common_only || common.contains(app);
    let pa = Prepared::new(a, keep, options.truncate_a);
    let pb = Prepared::new(b, keep, options.truncate_b);

    let ppm_a = pa.ppm(options.truncate_a, options.ppm_scope);
    let ppm_b = pb.ppm(options.truncate_b, options.ppm_scope);
    let lookup = |recs: &[PpmRecord], app: &str| recs.iter().find(|r| r.app_name == app).map_or(0.0, |r| r.mean_ppm);
    let ppm_table = common
        .iter()
        .map(|app| {
            let (x, y) = (lookup(&ppm_a, app), lookup(&ppm_b, app));
            PpmRow {
                app_name: app.clone(),
                ppm_a: x,
                ppm_b: y,
                ratio_b_over_a: ratio(y, x),
            }
        })
        .collect();
    let mean_ppm_a = dataset_mean_ppm(&ppm_a);
    let mean_ppm_b = dataset_mean_ppm(&ppm_b);

    let enc_a = pa.per_app(Scope::AppDataOnly, tcp_encrypted_version);
    let enc_b = pb.per_app(Scope::AppDataOnly, tcp_encrypted_version);
    let mut encryption_bihistogram = Vec::new();
    for app in &common {
        for v in TlsVersion::ALL.iter().rev() {
            let count_a = enc_a.get(&(app.as_str(), *v)).copied().unwrap_or(0);
            let count_b = enc_b.get(&(app.as_str(), *v)).copied().unwrap_or(0);
            if count_a + count_b > 0 {
                encryption_bihistogram.push(EncryptionRow {
                    app_name: app.clone(),
                    version: *v,
                    count_a,
                    count_b,
                });
            }
        }
    }

    let is_quic = |p: &ClassifiedPacket| (p.protocol.tag == AppTag::Quic).then_some(());
    let quic_a = pa.per_app(options.scope, is_quic);
    let quic_b = pb.per_app(options.scope, is_quic);
    let quic = common
        .iter()
        .map(|app| {
            let count_a = quic_a.get(&(app.as_str(), ())).copied().unwrap_or(0);
            let count_b = quic_b.get(&(app.as_str(), ())).copied().unwrap_or(0);
            QuicRow {
                app_name: app.clone(),
                count_a,
                count_b,
                behavior: quic_behavior(count_a, count_b),
            }
        })
        .collect();

    let (do53_a, dot_a) = dns_counts(pa.packets(), options.scope);
    let (do53_b, dot_b) = dns_counts(pb.packets(), options.scope);
    let dns_evolution = DnsEvolution {
        do53_count_a: do53_a,
        dot_count_a: dot_a,
        do53_count_b: do53_b,
        dot_count_b: dot_b,
        do53_pct_a: pct(do53_a, do53_a + dot_a),
        dot_pct_a: pct(dot_a, do53_a + dot_a),
        do53_pct_b: pct(do53_b, do53_b + dot_b),
        dot_pct_b: pct(dot_b, do53_b + dot_b),
    };

    Ok(ComparisonReport {
        captures_a: pa.captures.len(),
        captures_b: pb.captures.len(),
        distribution_a: protocol_distribution(pa.packets(), options.scope),
        distribution_b: protocol_distribution(pb.packets(), options.scope),
        ppm_table,
        mean_ppm_a,
        mean_ppm_b,
        ratio_a_over_b: ratio(mean_ppm_a, mean_ppm_b),
        ratio_b_over_a: ratio(mean_ppm_b, mean_ppm_a),
        ppm_a,
        ppm_b,
        encryption_a: encryption_breakdown(pa.packets()),
        encryption_b: encryption_breakdown(pb.packets()),
        encryption_bihistogram,
        quic,
        dns_evolution,
        sankey_a: pa.sankey(),
        sankey_b: pb.sankey(),
        common_apps: common,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::pkt;
    use super::*;
    use crate::classify::AppProtocol;

    fn capture(app: &str, packets: Vec<ClassifiedPacket>) -> CaptureData {
        CaptureData {
            label: CaptureLabel::new(app, chrono::DateTime::UNIX_EPOCH, 60).unwrap(),
            packets,
        }
    }

    fn quic_pkts(n: usize) -> Vec<ClassifiedPacket> {
        (0..n).map(|i| pkt(i as f64, Transport::Udp, AppProtocol::QUIC, true)).collect()
    }

    #[test]
    fn common_apps_symmetric() {
        let a = DatasetInput {
            captures: ["a", "b", "c"].iter().map(|n| capture(n, quic_pkts(1))).collect(),
        };
        let b = DatasetInput {
            captures: ["b", "c", "d"].iter().map(|n| capture(n, quic_pkts(2))).collect(),
        };
        let ab = compare_datasets(&a, &b, &CompareOptions::default()).unwrap();
        let ba = compare_datasets(&b, &a, &CompareOptions::default()).unwrap();
        assert_eq!(ab.common_apps, ba.common_apps);
        assert_eq!(ab.common_apps.len(), 2);
        assert_eq!(ab.mean_ppm_a, ba.mean_ppm_b);
        assert_eq!(ab.ppm_table[0].ratio_b_over_a, Some(2.0));
        let d = DatasetInput {
            captures: vec![capture("z", quic_pkts(1))],
        };
        assert_eq!(compare_datasets(&a, &d, &CompareOptions::default()), Err(CompareError::NoCommonApps));
    }

    #[test]
    fn quic_matrix() {
        assert_eq!(quic_behavior(3, 4), QuicBehavior::ConsistentBoth);
        assert_eq!(quic_behavior(0, 4), QuicBehavior::AdoptedInB);
        assert_eq!(quic_behavior(3, 0), QuicBehavior::PresentInAOnly);
        assert_eq!(quic_behavior(0, 0), QuicBehavior::AbsentBoth);
    }
}
