//! Per-packet application protocol resolution.
//!
//! Resolution order for a packet with payload:
//!
//! 1. DNS by port: well-formed port-53 messages are Do53, TCP/853 is DoT.
//! 2. TCP payload that frames as TLS records is TLS, versioned from the
//!    flow's ServerHello, else the ClientHello hint, else "SSL".
//! 3. TCP/80 with an HTTP start line is HTTP.
//! 4. UDP matching QUIC header rules is QUIC.
//! 5. Everything else is OtherTCP / OtherUDP.
//!
//! Packets without payload inherit the last protocol of their flow and are
//! never application data. DoH and DoQ cannot be told apart from HTTPS and
//! QUIC without decryption and are classified as such.

pub mod dns;
pub mod http;
pub mod quic;
pub mod tls;

use std::collections::HashMap;
use std::fmt;
use std::net::IpAddr;

use serde::{Serialize, Serializer};

use crate::ingest::{PacketRecord, Transport};
use dns::DnsPort;
use tls::{HelloKind, HelloView, RecordFraming, TlsParseError};

pub use quic::{detect_quic, QuicInfo, QuicPacketType};
pub use tls::{parse_tls_records, resolve_tls_version, TlsRecordView, TlsVersion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum AppTag {
    #[serde(rename = "HTTP")]
    Http,
    Do53,
    DoT,
    #[serde(rename = "TLS")]
    Tls,
    #[serde(rename = "QUIC")]
    Quic,
    #[serde(rename = "OtherTCP")]
    OtherTcp,
    #[serde(rename = "OtherUDP")]
    OtherUdp,
}

/// Resolved application protocol; `tls_version` is set exactly for TLS and DoT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AppProtocol {
    pub tag: AppTag,
    pub tls_version: Option<TlsVersion>,
}

impl AppProtocol {
    pub const HTTP: AppProtocol = AppProtocol::plain(AppTag::Http);
    pub const DO53: AppProtocol = AppProtocol::plain(AppTag::Do53);
    pub const QUIC: AppProtocol = AppProtocol::plain(AppTag::Quic);
    pub const OTHER_TCP: AppProtocol = AppProtocol::plain(AppTag::OtherTcp);
    pub const OTHER_UDP: AppProtocol = AppProtocol::plain(AppTag::OtherUdp);

    const fn plain(tag: AppTag) -> Self {
        AppProtocol { tag, tls_version: None }
    }

    pub fn tls(version: TlsVersion) -> Self {
        AppProtocol {
            tag: AppTag::Tls,
            tls_version: Some(version),
        }
    }

    pub fn dot(version: TlsVersion) -> Self {
        AppProtocol {
            tag: AppTag::DoT,
            tls_version: Some(version),
        }
    }

    pub fn other(transport: Transport) -> Self {
        match transport {
            Transport::Tcp => AppProtocol::OTHER_TCP,
            Transport::Udp => AppProtocol::OTHER_UDP,
        }
    }

    pub fn category(&self) -> ProtocolCategory {
        match self.tag {
            AppTag::Http => ProtocolCategory::Http,
            AppTag::Do53 => ProtocolCategory::Do53,
            AppTag::DoT => ProtocolCategory::DoT,
            AppTag::Tls => ProtocolCategory::Tls(self.tls_version.unwrap_or(TlsVersion::UnknownSsl)),
            AppTag::Quic => ProtocolCategory::Quic,
            AppTag::OtherTcp => ProtocolCategory::OtherTcp,
            AppTag::OtherUdp => ProtocolCategory::OtherUdp,
        }
    }

    /// Encrypted in the Sankey sense: TLS-framed, QUIC or DoT.
    pub fn is_encrypted(&self) -> bool {
        matches!(self.tag, AppTag::Tls | AppTag::DoT | AppTag::Quic)
    }
}

impl fmt::Display for AppProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.tag, self.tls_version) {
            (AppTag::DoT, Some(v)) => write!(f, "DoT({v})"),
            _ => f.write_str(self.category().label()),
        }
    }
}

/// Statistics bucket: the TLS version replaces the TLS tag, DoT stays whole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolCategory {
    Http,
    Do53,
    DoT,
    Tls(TlsVersion),
    Quic,
    OtherTcp,
    OtherUdp,
}

impl ProtocolCategory {
    pub fn label(&self) -> &'static str {
        match self {
            ProtocolCategory::Http => "HTTP",
            ProtocolCategory::Do53 => "Do53",
            ProtocolCategory::DoT => "DoT",
            ProtocolCategory::Tls(v) => v.label(),
            ProtocolCategory::Quic => "QUIC",
            ProtocolCategory::OtherTcp => "OtherTCP",
            ProtocolCategory::OtherUdp => "OtherUDP",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Some(match s {
            "HTTP" => ProtocolCategory::Http,
            "Do53" => ProtocolCategory::Do53,
            "DoT" => ProtocolCategory::DoT,
            "QUIC" => ProtocolCategory::Quic,
            "OtherTCP" => ProtocolCategory::OtherTcp,
            "OtherUDP" => ProtocolCategory::OtherUdp,
            other => ProtocolCategory::Tls(TlsVersion::from_label(other)?),
        })
    }
}

impl fmt::Display for ProtocolCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for ProtocolCategory {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

pub type Endpoint = (IpAddr, u16);

/// Direction-independent flow identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub endpoint_lo: Endpoint,
    pub endpoint_hi: Endpoint,
    pub transport: Transport,
}

impl FlowKey {
    pub fn of(record: &PacketRecord) -> FlowKey {
        let a = (record.src_ip, record.src_port);
        let b = (record.dst_ip, record.dst_port);
        let (endpoint_lo, endpoint_hi) = if a <= b { (a, b) } else { (b, a) };
        FlowKey {
            endpoint_lo,
            endpoint_hi,
            transport: record.transport,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Sent by the endpoint that sent the flow's first packet.
    FromInitiator,
    ToInitiator,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifiedPacket {
    pub record: PacketRecord,
    pub protocol: AppProtocol,
    pub is_app_data: bool,
    pub flow: FlowKey,
    pub direction: Direction,
    /// Random of a ClientHello completed by this packet.
    pub client_random: Option<[u8; 32]>,
}

impl ClassifiedPacket {
    /// (client, server) endpoints, client being the flow initiator.
    pub fn client_server(&self) -> (Endpoint, Endpoint) {
        let src = (self.record.src_ip, self.record.src_port);
        let dst = (self.record.dst_ip, self.record.dst_port);
        match self.direction {
            Direction::FromInitiator => (src, dst),
            Direction::ToInitiator => (dst, src),
        }
    }
}

pub const REASSEMBLY_CAP: usize = 65_536;

#[derive(Debug, Default, Clone)]
struct ReassemblyBuffer {
    data: Vec<u8>,
    desync: bool,
}

/// Mutable per-flow classification state.
#[derive(Debug, Clone)]
pub struct FlowState {
    initiator: Endpoint,
    pub negotiated_tls: Option<TlsVersion>,
    pub client_hello_version_hint: Option<TlsVersion>,
    pub quic_seen: bool,
    pub client_random: Option<[u8; 32]>,
    last_protocol: Option<AppProtocol>,
    sslv2: bool,
    buffers: [ReassemblyBuffer; 2],
}

impl FlowState {
    fn new(initiator: Endpoint) -> Self {
        FlowState {
            initiator,
            negotiated_tls: None,
            client_hello_version_hint: None,
            quic_seen: false,
            client_random: None,
            last_protocol: None,
            sslv2: false,
            buffers: Default::default(),
        }
    }

    pub fn tls_version(&self) -> TlsVersion {
        self.negotiated_tls
            .or(self.client_hello_version_hint)
            .unwrap_or(TlsVersion::UnknownSsl)
    }

    pub fn desynced(&self) -> bool {
        self.buffers.iter().any(|b| b.desync)
    }

    fn observe_hello(&mut self, hello: &HelloView) -> Option<[u8; 32]> {
        match hello.kind {
            HelloKind::Client => {
                self.client_hello_version_hint = Some(resolve_tls_version(Some(hello), None));
                if hello.sslv2 {
                    self.sslv2 = true;
                }
                self.client_random = Some(hello.random);
                Some(hello.random)
            }
            HelloKind::Server => {
                if self.negotiated_tls.is_none() {
                    let v = resolve_tls_version(None, Some(hello));
                    self.negotiated_tls = Some(v);
                    self.sslv2 = v == TlsVersion::Sslv2;
                }
                None
            }
        }
    }
}

/// Outcome of feeding a TCP segment to the TLS reassembler.
struct TlsOutcome {
    app_data: bool,
    client_random: Option<[u8; 32]>,
}

/// Classifies the packets of one capture; owns the flow table.
#[derive(Debug, Default)]
pub struct Classifier {
    flows: HashMap<FlowKey, FlowState>,
}

impl Classifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn flow(&self, key: &FlowKey) -> Option<&FlowState> {
        self.flows.get(key)
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    pub fn classify_packet(&mut self, record: PacketRecord) -> ClassifiedPacket {
        let flow = FlowKey::of(&record);
        let state = self
            .flows
            .entry(flow)
            .or_insert_with(|| FlowState::new((record.src_ip, record.src_port)));
        let direction = if (record.src_ip, record.src_port) == state.initiator {
            Direction::FromInitiator
        } else {
            Direction::ToInitiator
        };
        let (protocol, is_app_data, client_random) = resolve(state, &record, direction);
        if !record.payload.is_empty() || state.last_protocol.is_none() {
            state.last_protocol = Some(protocol);
        }
        ClassifiedPacket {
            record,
            protocol,
            is_app_data,
            flow,
            direction,
            client_random,
        }
    }
}

fn resolve(
    state: &mut FlowState,
    record: &PacketRecord,
    direction: Direction,
) -> (AppProtocol, bool, Option<[u8; 32]>) {
    let port = dns::dns_port(record);

    if record.payload.is_empty() {
        let protocol = match (port, state.last_protocol) {
            (Some(DnsPort::DoT), _) => AppProtocol::dot(state.tls_version()),
            (_, Some(p)) => p,
            (_, None) => AppProtocol::other(record.transport),
        };
        return (protocol, false, None);
    }

    match port {
        Some(DnsPort::DoT) => {
            let outcome = feed_tls(state, record, direction);
            let (app, random) = outcome.map_or((false, None), |o| (o.app_data, o.client_random));
            return (AppProtocol::dot(state.tls_version()), app, random);
        }
        Some(DnsPort::Do53) => {
            if dns::do53_header(record).is_some() {
                return (AppProtocol::DO53, true, None);
            }
            if record.transport == Transport::Tcp && state.last_protocol == Some(AppProtocol::DO53) {
                return (AppProtocol::DO53, false, None);
            }
        }
        None => {}
    }

    match record.transport {
        Transport::Tcp => {
            if let Some(o) = feed_tls(state, record, direction) {
                return (AppProtocol::tls(state.tls_version()), o.app_data, o.client_random);
            }
            if record.has_port(http::HTTP_PORT)
                && (http::is_start_line(&record.payload) || state.last_protocol == Some(AppProtocol::HTTP))
            {
                return (AppProtocol::HTTP, true, None);
            }
            if matches!(state.last_protocol, Some(p) if p.tag == AppTag::Tls) {
                // Lost record sync on a TLS flow.
                return (AppProtocol::tls(state.tls_version()), false, None);
            }
            (AppProtocol::OTHER_TCP, false, None)
        }
        Transport::Udp => match detect_quic(&record.payload, state.quic_seen) {
            Some(q) => {
                if q.long_header {
                    state.quic_seen = true;
                }
                (AppProtocol::QUIC, q.is_app_data(), None)
            }
            None => (AppProtocol::OTHER_UDP, false, None),
        },
    }
}

/// Appends the segment to its direction's buffer and consumes complete
/// records. Returns `None` when the bytes do not frame as TLS.
fn feed_tls(state: &mut FlowState, record: &PacketRecord, direction: Direction) -> Option<TlsOutcome> {
    let idx = match direction {
        Direction::FromInitiator => 0,
        Direction::ToInitiator => 1,
    };
    let sslv2 = state.sslv2;
    let mut buf = std::mem::take(&mut state.buffers[idx]);
    if buf.data.len() + record.payload.len() > REASSEMBLY_CAP {
        buf.data.clear();
        buf.desync = true;
    }
    buf.data.extend_from_slice(&record.payload);

    let parsed = match tls::parse_records(&buf.data, sslv2) {
        Ok(p) => p,
        Err(TlsParseError::NotTls) | Err(TlsParseError::Desync(_)) => {
            let had_carry = buf.data.len() > record.payload.len();
            buf.data.clear();
            buf.desync |= had_carry;
            state.buffers[idx] = buf;
            return None;
        }
    };

    let mut outcome = TlsOutcome {
        app_data: parsed.records.iter().any(TlsRecordView::is_app_data),
        client_random: None,
    };
    if let Some(framing) = parsed.pending_framing() {
        outcome.app_data |= match framing {
            RecordFraming::Tls { content_type, .. } => content_type == tls::CONTENT_APPLICATION_DATA,
            RecordFraming::Sslv2 { msg_type } => sslv2 && !matches!(msg_type, 0 | 1 | 2 | 4),
        };
    }
    for hello in parsed.records.iter().filter_map(|r| r.hello.as_ref()) {
        if let Some(random) = state.observe_hello(hello) {
            outcome.client_random = Some(random);
        }
    }
    let remainder = if parsed.desync { Vec::new() } else { parsed.remainder.to_vec() };
    buf.desync |= parsed.desync;
    buf.data = remainder;
    state.buffers[idx] = buf;
    Some(outcome)
}

/// Classifies one capture with a fresh flow table; output order matches input.
pub fn classify_capture(packets: impl IntoIterator<Item = PacketRecord>) -> Vec<ClassifiedPacket> {
    let mut classifier = Classifier::new();
    packets.into_iter().map(|p| classifier.classify_packet(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::tls::build;
    use super::*;
    use crate::ingest::TcpFlags;

    fn tcp(src: &str, sport: u16, dst: &str, dport: u16, payload: Vec<u8>) -> PacketRecord {
        PacketRecord {
            ts_ns: 0,
            src_ip: src.parse().unwrap(),
            dst_ip: dst.parse().unwrap(),
            src_port: sport,
            dst_port: dport,
            transport: Transport::Tcp,
            packet_len: 60 + payload.len() as u32,
            payload,
            tcp_flags: Some(TcpFlags::ACK),
        }
    }

    fn udp(src: &str, sport: u16, dst: &str, dport: u16, payload: Vec<u8>) -> PacketRecord {
        PacketRecord {
            transport: Transport::Udp,
            tcp_flags: None,
            ..tcp(src, sport, dst, dport, payload)
        }
    }

    const C: &str = "10.0.2.16";
    const S: &str = "142.250.184.3";

    #[test]
    fn tls13_flow_and_pure_ack() {
        let mut c = Classifier::new();
        let sh = build::server_hello(0x0303, &[2; 32], Some(0x0304));
        let p1 = c.classify_packet(tcp(S, 443, C, 40000, sh));
        assert_eq!(p1.protocol, AppProtocol::tls(TlsVersion::Tls1_3));
        assert!(!p1.is_app_data);
        let p2 = c.classify_packet(tcp(C, 40000, S, 443, build::app_data(0x0303, &[0; 64])));
        assert_eq!(p2.protocol, AppProtocol::tls(TlsVersion::Tls1_3));
        assert!(p2.is_app_data);
        let ack = c.classify_packet(tcp(S, 443, C, 40000, vec![]));
        assert_eq!(ack.protocol, AppProtocol::tls(TlsVersion::Tls1_3));
        assert!(!ack.is_app_data);
    }

    #[test]
    fn record_split_across_segments() {
        let mut c = Classifier::new();
        let ad = build::app_data(0x0303, &[9; 300]);
        let a = c.classify_packet(tcp(C, 40000, S, 443, ad[..3].to_vec()));
        let b = c.classify_packet(tcp(C, 40000, S, 443, ad[3..100].to_vec()));
        let d = c.classify_packet(tcp(C, 40000, S, 443, ad[100..].to_vec()));
        for p in [&a, &b, &d] {
            assert_eq!(p.protocol.tag, AppTag::Tls);
            assert!(p.is_app_data);
        }
        assert_eq!(a.protocol.tls_version, Some(TlsVersion::UnknownSsl));
    }

    #[test]
    fn client_hello_hint_then_server_hello() {
        let mut c = Classifier::new();
        let ch = build::client_hello(0x0301, 0x0303, &[5; 32], Some(&[0x0304, 0x0303]), None);
        let p = c.classify_packet(tcp(C, 40001, S, 443, ch));
        assert_eq!(p.protocol, AppProtocol::tls(TlsVersion::Tls1_3));
        assert_eq!(p.client_random, Some([5; 32]));
        let sh = build::server_hello(0x0303, &[6; 32], None);
        let p = c.classify_packet(tcp(S, 443, C, 40001, sh));
        assert_eq!(p.protocol, AppProtocol::tls(TlsVersion::Tls1_2));
        // a second ServerHello cannot change the negotiated version
        let sh = build::server_hello(0x0303, &[6; 32], Some(0x0304));
        let p = c.classify_packet(tcp(S, 443, C, 40001, sh));
        assert_eq!(p.protocol, AppProtocol::tls(TlsVersion::Tls1_2));
    }

    #[test]
    fn ccs_and_alert_are_not_app_data() {
        let mut c = Classifier::new();
        let mut b = build::record(tls::CONTENT_CHANGE_CIPHER_SPEC, 0x0303, &[1]);
        b.extend_from_slice(&build::record(tls::CONTENT_ALERT, 0x0303, &[1, 0]));
        let p = c.classify_packet(tcp(C, 40002, S, 443, b));
        assert_eq!(p.protocol.tag, AppTag::Tls);
        assert!(!p.is_app_data);
    }

    #[test]
    fn sslv2_flow() {
        let mut c = Classifier::new();
        let p = c.classify_packet(tcp(C, 40003, S, 443, build::sslv2_client_hello(0x0002, &[3; 16])));
        assert_eq!(p.protocol, AppProtocol::tls(TlsVersion::Sslv2));
        assert!(!p.is_app_data);
        let p = c.classify_packet(tcp(S, 443, C, 40003, build::sslv2_server_hello(&[4; 16])));
        assert_eq!(p.protocol, AppProtocol::tls(TlsVersion::Sslv2));
        let p = c.classify_packet(tcp(C, 40003, S, 443, build::sslv2_data(&[0x33; 48])));
        assert_eq!(p.protocol, AppProtocol::tls(TlsVersion::Sslv2));
        assert!(p.is_app_data);
    }

    #[test]
    fn dns_rules() {
        let mut c = Classifier::new();
        let q = dns::build::message(7, false, "example.com");
        let p = c.classify_packet(udp(C, 40000, "8.8.8.8", 53, q));
        assert_eq!(p.protocol, AppProtocol::DO53);
        assert!(p.is_app_data);
        let p = c.classify_packet(udp(C, 40010, "8.8.8.8", 53, vec![1, 2, 3]));
        assert_eq!(p.protocol, AppProtocol::OTHER_UDP);
        assert!(!p.is_app_data);
    }

    #[test]
    fn dot_after_tls13_handshake() {
        let mut c = Classifier::new();
        let ch = build::client_hello(0x0301, 0x0303, &[1; 32], Some(&[0x0304]), Some("dns.google"));
        let sh = build::server_hello(0x0303, &[2; 32], Some(0x0304));
        let ad = build::app_data(0x0303, &[0; 80]);
        let g = "8.8.8.8";
        let syn = c.classify_packet(tcp(C, 50000, g, 853, vec![]));
        assert_eq!(syn.protocol, AppProtocol::dot(TlsVersion::UnknownSsl));
        c.classify_packet(tcp(C, 50000, g, 853, ch));
        c.classify_packet(tcp(g, 853, C, 50000, sh));
        let p = c.classify_packet(tcp(C, 50000, g, 853, ad));
        assert_eq!(p.protocol, AppProtocol::dot(TlsVersion::Tls1_3));
        assert!(p.is_app_data);
    }

    #[test]
    fn http_requires_port_and_start_line() {
        let mut c = Classifier::new();
        let get = b"GET /generate_204 HTTP/1.1\r\nHost: connectivitycheck.gstatic.com\r\n\r\n".to_vec();
        let p = c.classify_packet(tcp(C, 40020, S, 80, get.clone()));
        assert_eq!(p.protocol, AppProtocol::HTTP);
        assert!(p.is_app_data);
        let p = c.classify_packet(tcp(C, 40021, S, 80, vec![0x00, 0xff, 0x10]));
        assert_eq!(p.protocol, AppProtocol::OTHER_TCP);
        let p = c.classify_packet(tcp(C, 40022, S, 8000, get));
        assert_eq!(p.protocol, AppProtocol::OTHER_TCP);
    }

    #[test]
    fn quic_long_then_short() {
        let mut c = Classifier::new();
        let short = quic::build::short_header(&[1; 8], &[0; 30]);
        let early = c.classify_packet(udp(C, 40030, S, 443, short.clone()));
        assert_eq!(early.protocol, AppProtocol::OTHER_UDP);
        let init = quic::build::long_header(0, quic::QUIC_V1, &[1; 8], &[], &[0; 40]);
        let p = c.classify_packet(udp(C, 40030, S, 443, init));
        assert_eq!(p.protocol, AppProtocol::QUIC);
        assert!(!p.is_app_data);
        let p = c.classify_packet(udp(S, 443, C, 40030, short));
        assert_eq!(p.protocol, AppProtocol::QUIC);
        assert!(p.is_app_data);
        assert_eq!(p.direction, Direction::ToInitiator);
    }

    #[test]
    fn empty_payload_without_history() {
        let p = classify_capture([tcp(C, 1, S, 2, vec![])]);
        assert_eq!(p[0].protocol, AppProtocol::OTHER_TCP);
        assert!(classify_capture(Vec::new()).is_empty());
    }

    #[test]
    fn reassembly_overflow_resets() {
        let mut c = Classifier::new();
        let ad = build::app_data(0x0303, &[1; 16_000]);
        // keep feeding record prefixes so the carry grows past the cap
        let key = FlowKey::of(&tcp(C, 40040, S, 443, vec![]));
        for _ in 0..5 {
            c.classify_packet(tcp(C, 40040, S, 443, ad[..5].to_vec()));
            c.classify_packet(tcp(C, 40040, S, 443, vec![0x17; 15_000]));
        }
        let st = c.flow(&key).unwrap();
        assert!(st.buffers[0].data.len() <= REASSEMBLY_CAP);
    }
}
