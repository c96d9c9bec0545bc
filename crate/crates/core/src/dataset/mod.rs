//! Labeled dataset layout: filenames, manifests, truncation and background
//! attribution.

mod label;
mod manifest;

use std::collections::{HashMap, HashSet};
use std::net::{IpAddr, Ipv4Addr};

use serde::Serialize;

use crate::classify::{dns, http, AppTag, ClassifiedPacket, FlowKey};
use crate::ingest::PacketRecord;

pub use label::{
    parse_capture_filename, render_capture_filename, valid_app_name, CaptureLabel, FilenameError, LabelFormat,
    CAPTURE_SUFFIX, DEFAULT_DATE_PATTERN,
};
pub use manifest::{scan_dataset, scan_directory, DatasetManifest, EntryKind, ManifestEntry};

pub trait Timestamped {
    fn ts_ns(&self) -> u64;
}

impl Timestamped for PacketRecord {
    fn ts_ns(&self) -> u64 {
        self.ts_ns
    }
}

impl Timestamped for ClassifiedPacket {
    fn ts_ns(&self) -> u64 {
        self.record.ts_ns
    }
}

pub fn minutes_to_ns(minutes: f64) -> u64 {
    (minutes * 60.0 * 1e9).round() as u64
}

/// Keeps packets with `ts < first_ts + minutes`. The input is stably sorted
/// by timestamp first.
pub fn truncate_packets<T: Timestamped + Clone>(packets: &[T], minutes: f64) -> Vec<T> {
    let mut sorted = packets.to_vec();
    sorted.sort_by_key(Timestamped::ts_ns);
    let Some(first) = sorted.first().map(Timestamped::ts_ns) else {
        return sorted;
    };
    let end = first.saturating_add(minutes_to_ns(minutes));
    let keep = sorted.partition_point(|p| p.ts_ns() < end);
    sorted.truncate(keep);
    sorted
}

pub const CONNECTIVITY_HOSTS: [&str; 2] = ["connectivitycheck.gstatic.com", "www.google.com"];
pub const CONNECTIVITY_HTTP_HOST: &str = "connectivitycheck.gstatic.com";
pub const SYSTEM_RESOLVERS: [IpAddr; 2] = [
    IpAddr::V4(Ipv4Addr::new(8, 8, 8, 8)),
    IpAddr::V4(Ipv4Addr::new(8, 8, 4, 4)),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum BackgroundTag {
    ConnectivityHttp,
    ConnectivityDo53,
    SystemDot,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttributionMode {
    /// App capture: DoT is left to the app.
    #[default]
    App,
    /// Capture without any user app running.
    Baseline,
}

/// Tags every packet with the OS background activity it belongs to.
pub fn attribute_background(classified: &[ClassifiedPacket], mode: AttributionMode) -> Vec<BackgroundTag> {
    let mut http_flows: HashMap<FlowKey, bool> = HashMap::new();
    let mut dns_transactions: HashSet<(FlowKey, u16)> = HashSet::new();
    for p in classified {
        match p.protocol.tag {
            AppTag::Http if http::is_request(&p.record.payload) => {
                http_flows.entry(p.flow).or_insert_with(|| {
                    http::request_host(&p.record.payload).as_deref() == Some(CONNECTIVITY_HTTP_HOST)
                });
            }
            AppTag::Do53 => {
                if let Some((id, name)) = dns_query(&p.record) {
                    if CONNECTIVITY_HOSTS.contains(&name.as_str()) {
                        dns_transactions.insert((p.flow, id));
                    }
                }
            }
            _ => {}
        }
    }

    classified
        .iter()
        .map(|p| {
            let r = &p.record;
            if r.has_port(http::HTTP_PORT) && http_flows.get(&p.flow) == Some(&true) {
                return BackgroundTag::ConnectivityHttp;
            }
            if p.protocol.tag == AppTag::Do53 {
                let id = dns::dns_message(r).and_then(dns::parse_header).map(|h| h.id);
                if id.is_some_and(|id| dns_transactions.contains(&(p.flow, id))) {
                    return BackgroundTag::ConnectivityDo53;
                }
            }
            if mode == AttributionMode::Baseline
                && p.protocol.tag == AppTag::DoT
                && (SYSTEM_RESOLVERS.contains(&r.src_ip) || SYSTEM_RESOLVERS.contains(&r.dst_ip))
            {
                return BackgroundTag::SystemDot;
            }
            BackgroundTag::None
        })
        .collect()
}

fn dns_query(record: &PacketRecord) -> Option<(u16, String)> {
    let msg = dns::dns_message(record)?;
    let header = dns::parse_header(msg)?;
    Some((header.id, dns::first_qname(msg)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{classify_capture, tls::build};
    use crate::ingest::{TcpFlags, Transport};

    fn rec(ts_s: f64, src: &str, sport: u16, dst: &str, dport: u16, t: Transport, payload: Vec<u8>) -> PacketRecord {
        PacketRecord {
            ts_ns: (ts_s * 1e9) as u64,
            src_ip: src.parse().unwrap(),
            dst_ip: dst.parse().unwrap(),
            src_port: sport,
            dst_port: dport,
            transport: t,
            packet_len: 100,
            payload,
            tcp_flags: (t == Transport::Tcp).then_some(TcpFlags::ACK),
        }
    }

    #[test]
    fn truncation_is_half_open() {
        let p: Vec<_> = [0.0, 299.9, 300.0]
            .iter()
            .map(|&t| rec(t, "10.0.0.1", 1, "10.0.0.2", 2, Transport::Udp, vec![]))
            .collect();
        let t = truncate_packets(&p, 5.0);
        assert_eq!(t.len(), 2);
        assert_eq!(truncate_packets(&t, 5.0), t);
        assert!(truncate_packets::<PacketRecord>(&[], 5.0).is_empty());
    }

    #[test]
    fn truncation_sorts() {
        let p: Vec<_> = [400.0, 100.0, 0.0]
            .iter()
            .map(|&t| rec(t, "10.0.0.1", 1, "10.0.0.2", 2, Transport::Udp, vec![]))
            .collect();
        let t = truncate_packets(&p, 5.0);
        assert_eq!(t.iter().map(|p| p.ts_ns).collect::<Vec<_>>(), vec![0, 100_000_000_000]);
    }

    #[test]
    fn tags() {
        let c = "10.0.2.16";
        let get = b"GET /generate_204 HTTP/1.1\r\nHost: connectivitycheck.gstatic.com\r\n\r\n".to_vec();
        let packets = vec![
            rec(0.0, c, 40000, "142.250.184.3", 80, Transport::Tcp, get),
            rec(0.1, "142.250.184.3", 80, c, 40000, Transport::Tcp, vec![]),
            rec(0.2, c, 41000, "8.8.8.8", 53, Transport::Udp, dns::build::message(9, false, "www.google.com")),
            rec(0.3, "8.8.8.8", 53, c, 41000, Transport::Udp, dns::build::message(9, true, "www.google.com")),
            rec(0.4, c, 41001, "8.8.8.8", 53, Transport::Udp, dns::build::message(10, false, "example.org")),
            rec(0.5, c, 40001, "142.250.184.3", 443, Transport::Tcp, build::app_data(0x0303, &[0; 10])),
            rec(0.6, c, 40002, "8.8.4.4", 853, Transport::Tcp, build::app_data(0x0303, &[0; 10])),
        ];
        let classified = classify_capture(packets);
        use BackgroundTag::*;
        assert_eq!(
            attribute_background(&classified, AttributionMode::App),
            vec![ConnectivityHttp, ConnectivityHttp, ConnectivityDo53, ConnectivityDo53, None, None, None]
        );
        assert_eq!(attribute_background(&classified, AttributionMode::Baseline)[6], SystemDot);
    }
}
