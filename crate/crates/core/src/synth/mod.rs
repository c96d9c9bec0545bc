//! Deterministic synthetic captures and key logs from a JSON fixture spec.

pub mod presets;

use std::collections::BTreeSet;
use std::net::{IpAddr, Ipv4Addr};
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{dns, quic, tls::build};
use crate::dataset::{render_capture_filename, CaptureLabel, FilenameError};
use crate::ingest::{encode_packet, CaptureWriter, PacketRecord, TcpFlags, Transport, LINKTYPE_LINUX_SLL};
use crate::keylog::{keylog_filename_for, render_keylog, KeyLogEntry};

pub const CLIENT_IP: IpAddr = IpAddr::V4(Ipv4Addr::new(10, 0, 2, 16));
pub const CONNECTIVITY_HTTP_IP: IpAddr = IpAddr::V4(Ipv4Addr::new(142, 250, 184, 3));
const TLS_SERVERS: [IpAddr; 3] = [
    IpAddr::V4(Ipv4Addr::new(142, 250, 184, 3)),
    IpAddr::V4(Ipv4Addr::new(142, 250, 200, 138)),
    IpAddr::V4(Ipv4Addr::new(54, 192, 95, 45)),
];
const RESOLVERS: [IpAddr; 2] = [
    IpAddr::V4(Ipv4Addr::new(8, 8, 8, 8)),
    IpAddr::V4(Ipv4Addr::new(8, 8, 4, 4)),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Profile {
    Tls10,
    Tls12,
    Tls13,
    Ssl2,
    /// TLS records without a captured handshake.
    UnknownSsl,
    QuicV1,
    Do53,
    DoT,
    /// DoT negotiated at TLS 1.2.
    DoT12,
    ConnectivityHttp,
}

impl Profile {
    /// Non-app-data packets a flow of this profile carries besides its
    /// app-data packets (hellos or Initials).
    pub fn overhead_packets(self) -> u64 {
        match self {
            Profile::Tls10 | Profile::Tls12 | Profile::Tls13 | Profile::Ssl2 => 2,
            Profile::QuicV1 | Profile::DoT | Profile::DoT12 => 2,
            Profile::UnknownSsl | Profile::Do53 | Profile::ConnectivityHttp => 0,
        }
    }
}

fn default_rate() -> f64 {
    10.0
}

fn default_linktype() -> u32 {
    LINKTYPE_LINUX_SLL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    #[serde(alias = "protocol_profile")]
    pub profile: Profile,
    pub app_data_packets: u64,
    #[serde(default)]
    pub start_offset_s: f64,
    #[serde(default = "default_rate")]
    pub rate_pps: f64,
    /// Query names cycled through by Do53 flows.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub qnames: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server: Option<IpAddr>,
}

impl FlowSpec {
    pub fn new(profile: Profile, app_data_packets: u64, start_offset_s: f64, rate_pps: f64) -> Self {
        FlowSpec {
            profile,
            app_data_packets,
            start_offset_s,
            rate_pps,
            qnames: Vec::new(),
            server: None,
        }
    }

    pub fn total_packets(&self) -> u64 {
        self.app_data_packets + self.profile.overhead_packets()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureSpec {
    pub duration_s: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<DateTime<Utc>>,
    pub flows: Vec<FlowSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppSpec {
    pub app_name: String,
    pub captures: Vec<CaptureSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_linktype")]
    pub linktype: u32,
    pub apps: Vec<AppSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid fixture spec at `{path}`: {message}")]
    Spec { path: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn spec_error(path: impl Into<String>, message: impl Into<String>) -> SynthError {
    SynthError::Spec {
        path: path.into(),
        message: message.into(),
    }
}

/// First capture date used when a capture spec has none; further captures of
/// the same app follow at one-hour steps.
pub fn default_capture_date(index: usize) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 3, 14, 10, 15, 0).unwrap() + chrono::Duration::hours(index as i64)
}

impl FixtureSpec {
    pub fn from_json(text: &str) -> Result<FixtureSpec, SynthError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: FixtureSpec = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            spec_error(path, e.into_inner().to_string())
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixture specs serialize")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if ![1, 113, 276].contains(&self.linktype) {
            return Err(spec_error("linktype", "must be 1, 113 or 276"));
        }
        let mut stems = BTreeSet::new();
        for (ai, app) in self.apps.iter().enumerate() {
            for (ci, cap) in app.captures.iter().enumerate() {
                let at = format!("apps[{ai}].captures[{ci}]");
                let label = self.label(app, ci).map_err(|e| match e {
                    FilenameError::BadDuration => spec_error(format!("{at}.duration_s"), "must be at least 1"),
                    _ => spec_error(format!("apps[{ai}].app_name"), e.to_string()),
                })?;
                if !stems.insert(label.stem()) {
                    return Err(spec_error(at, format!("duplicate capture name {}", label.stem())));
                }
                for (fi, flow) in cap.flows.iter().enumerate() {
                    if !(flow.rate_pps.is_finite() && flow.rate_pps > 0.0) {
                        return Err(spec_error(format!("{at}.flows[{fi}].rate_pps"), "must be positive"));
                    }
                    if !(flow.start_offset_s.is_finite() && flow.start_offset_s >= 0.0) {
                        return Err(spec_error(format!("{at}.flows[{fi}].start_offset_s"), "must be non-negative"));
                    }
                    if flow.qnames.iter().any(|q| q.is_empty() || q.split('.').any(|l| l.is_empty() || l.len() > 63)) {
                        return Err(spec_error(format!("{at}.flows[{fi}].qnames"), "invalid domain name"));
                    }
                }
            }
        }
        Ok(())
    }

    fn label(&self, app: &AppSpec, index: usize) -> Result<CaptureLabel, FilenameError> {
        let cap = &app.captures[index];
        let date = cap.date.unwrap_or_else(|| default_capture_date(index));
        CaptureLabel::new(&app.app_name, date, cap.duration_s)
    }
}

#[derive(Debug, Clone)]
pub struct SynthCapture {
    pub label: CaptureLabel,
    pub pcap: Vec<u8>,
    pub keylog: String,
    pub packets: usize,
    pub flows: usize,
}

impl SynthCapture {
    pub fn capture_filename(&self) -> String {
        render_capture_filename(&self.label)
    }

    pub fn keylog_filename(&self) -> String {
        keylog_filename_for(&self.label)
    }
}

fn capture_rng(seed: u64, app: &str, index: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(app.as_bytes());
    h.update((index as u64).to_be_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

struct Emitted {
    ts_ns: u64,
    record: PacketRecord,
    seq: u32,
    ack: u32,
}

struct FlowWriter<'r> {
    rng: &'r mut ChaCha8Rng,
    client: (IpAddr, u16),
    server: (IpAddr, u16),
    transport: Transport,
    seq: [u32; 2],
    start_ns: u64,
    step_ns: f64,
    out: Vec<Emitted>,
}

impl FlowWriter<'_> {
    fn push(&mut self, from_client: bool, payload: Vec<u8>) {
        let ((src_ip, src_port), (dst_ip, dst_port)) = if from_client {
            (self.client, self.server)
        } else {
            (self.server, self.client)
        };
        let d = usize::from(!from_client);
        let (seq, ack) = (self.seq[d], self.seq[1 - d]);
        self.seq[d] = seq.wrapping_add(payload.len() as u32);
        let ts_ns = self.start_ns + (self.out.len() as f64 * self.step_ns).round() as u64;
        let tcp_flags = (self.transport == Transport::Tcp).then_some(TcpFlags::ACK | TcpFlags::PSH);
        self.out.push(Emitted {
            ts_ns,
            record: PacketRecord {
                ts_ns,
                src_ip,
                dst_ip,
                src_port,
                dst_port,
                transport: self.transport,
                packet_len: 0,
                payload,
                tcp_flags,
            },
            seq,
            ack,
        });
    }

    fn random_body(&mut self) -> Vec<u8> {
        let len = self.rng.random_range(16..=48);
        let mut b = vec![0u8; len];
        self.rng.fill_bytes(&mut b);
        b
    }

    fn random_array<const N: usize>(&mut self) -> [u8; N] {
        let mut a = [0u8; N];
        self.rng.fill_bytes(&mut a);
        a
    }
}

fn secret(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    let mut s = vec![0u8; len];
    rng.fill_bytes(&mut s);
    s
}

const TLS13_LABELS: [&str; 5] = [
    "CLIENT_HANDSHAKE_TRAFFIC_SECRET",
    "SERVER_HANDSHAKE_TRAFFIC_SECRET",
    "CLIENT_TRAFFIC_SECRET_0",
    "SERVER_TRAFFIC_SECRET_0",
    "EXPORTER_SECRET",
];

fn log_tls13(rng: &mut ChaCha8Rng, random: [u8; 32], keys: &mut Vec<KeyLogEntry>) {
    for label in TLS13_LABELS {
        keys.push(KeyLogEntry {
            label: label.to_string(),
            client_random: random,
            secret: secret(rng, 32),
        });
    }
}

fn log_client_random(rng: &mut ChaCha8Rng, random: [u8; 32], keys: &mut Vec<KeyLogEntry>) {
    keys.push(KeyLogEntry {
        label: "CLIENT_RANDOM".to_string(),
        client_random: random,
        secret: secret(rng, 48),
    });
}

fn emit_flow(w: &mut FlowWriter<'_>, flow: &FlowSpec, keys: &mut Vec<KeyLogEntry>) {
    let n = flow.app_data_packets;
    let alternate = |i: u64| i % 2 == 0;
    match flow.profile {
        Profile::Tls13 | Profile::DoT | Profile::Tls12 | Profile::DoT12 | Profile::Tls10 => {
            let random = w.random_array::<32>();
            let server_random = w.random_array::<32>();
            let sni = match flow.profile {
                Profile::DoT | Profile::DoT12 => "dns.google",
                _ => "www.googleapis.com",
            };
            let (legacy, offered, selected, record_version) = match flow.profile {
                Profile::Tls13 | Profile::DoT => (0x0303, Some(&[0x0304u16, 0x0303][..]), Some(0x0304), 0x0303),
                Profile::Tls10 => (0x0301, None, None, 0x0301),
                _ => (0x0303, None, None, 0x0303),
            };
            w.push(true, build::client_hello(0x0301, legacy, &random, offered, Some(sni)));
            w.push(false, build::server_hello(legacy, &server_random, selected));
            for i in 0..n {
                let body = w.random_body();
                w.push(alternate(i), build::app_data(record_version, &body));
            }
            if selected == Some(0x0304) {
                log_tls13(w.rng, random, keys);
            } else {
                log_client_random(w.rng, random, keys);
            }
        }
        Profile::Ssl2 => {
            let challenge = w.random_array::<16>();
            let connection_id = w.random_array::<16>();
            w.push(true, build::sslv2_client_hello(0x0002, &challenge));
            w.push(false, build::sslv2_server_hello(&connection_id));
            for i in 0..n {
                let mut body = w.random_body();
                // keep the first byte clear of the SSLv2 handshake message types
                if matches!(body[0], 0 | 1 | 2 | 4) {
                    body[0] |= 0x80;
                }
                w.push(alternate(i), build::sslv2_data(&body));
            }
            let mut random = [0u8; 32];
            random[16..].copy_from_slice(&challenge);
            log_client_random(w.rng, random, keys);
        }
        Profile::UnknownSsl => {
            for i in 0..n {
                let body = w.random_body();
                w.push(alternate(i), build::app_data(0x0303, &body));
            }
        }
        Profile::QuicV1 => {
            let dcid = w.random_array::<8>();
            let scid = w.random_array::<8>();
            let body = w.random_body();
            w.push(true, quic::build::long_header(0, quic::QUIC_V1, &dcid, &scid, &body));
            let body = w.random_body();
            w.push(false, quic::build::long_header(0, quic::QUIC_V1, &scid, &dcid, &body));
            for i in 0..n {
                let body = w.random_body();
                let cid = if alternate(i) { dcid } else { scid };
                w.push(alternate(i), quic::build::short_header(&cid, &body));
            }
        }
        Profile::Do53 => {
            let default_names = [crate::dataset::CONNECTIVITY_HTTP_HOST.to_string()];
            let names = if flow.qnames.is_empty() { &default_names[..] } else { &flow.qnames[..] };
            let mut id = 0u16;
            for i in 0..n {
                if alternate(i) {
                    id = w.rng.random();
                }
                let name = &names[(i / 2) as usize % names.len()];
                w.push(alternate(i), dns::build::message(id, !alternate(i), name));
            }
        }
        Profile::ConnectivityHttp => {
            let request = format!(
                "GET /generate_204 HTTP/1.1\r\nHost: {}\r\nUser-Agent: Dalvik/2.1.0 (Linux; U; Android 14)\r\nConnection: Keep-Alive\r\n\r\n",
                crate::dataset::CONNECTIVITY_HTTP_HOST
            );
            let response = "HTTP/1.1 204 No Content\r\nContent-Length: 0\r\n\r\n";
            for i in 0..n {
                let payload = if alternate(i) { request.as_bytes() } else { response.as_bytes() };
                w.push(alternate(i), payload.to_vec());
            }
        }
    }
}

fn server_for(profile: Profile, rng: &mut ChaCha8Rng, fixed: Option<IpAddr>) -> (IpAddr, u16, Transport) {
    let (pool, port, transport): (&[IpAddr], u16, Transport) = match profile {
        Profile::Do53 => (&RESOLVERS[..1], dns::DNS_PORT, Transport::Udp),
        Profile::DoT | Profile::DoT12 => (&RESOLVERS, dns::DOT_PORT, Transport::Tcp),
        Profile::ConnectivityHttp => (&[CONNECTIVITY_HTTP_IP], 80, Transport::Tcp),
        Profile::QuicV1 => (&TLS_SERVERS, 443, Transport::Udp),
        _ => (&TLS_SERVERS, 443, Transport::Tcp),
    };
    let ip = fixed.unwrap_or_else(|| pool[rng.random_range(0..pool.len())]);
    (ip, port, transport)
}

fn synth_capture(spec: &FixtureSpec, app: &AppSpec, index: usize) -> SynthCapture {
    let label = spec.label(app, index).expect("validated spec");
    let cap = &app.captures[index];
    let mut rng = capture_rng(spec.seed, &app.app_name, index);
    let base_ns = label.capture_date.timestamp() as u64 * 1_000_000_000;
    let mut next_port: u16 = 32_768 + rng.random_range(0..4096);
    let mut emitted = Vec::new();
    let mut keys = Vec::new();
    for flow in &cap.flows {
        let (ip, port, transport) = server_for(flow.profile, &mut rng, flow.server);
        let client_port = next_port;
        next_port = if next_port == u16::MAX { 32_768 } else { next_port + 1 };
        let seq = [rng.random(), rng.random()];
        let mut w = FlowWriter {
            rng: &mut rng,
            client: (CLIENT_IP, client_port),
            server: (ip, port),
            transport,
            seq,
            start_ns: base_ns + (flow.start_offset_s * 1e9).round() as u64,
            step_ns: 1e9 / flow.rate_pps,
            out: Vec::new(),
        };
        emit_flow(&mut w, flow, &mut keys);
        emitted.extend(w.out);
    }
    emitted.sort_by_key(|e| e.ts_ns);

    let writer = CaptureWriter::new(spec.linktype);
    let mut pcap = Vec::new();
    writer.write_header(&mut pcap);
    for e in &emitted {
        let frame = encode_packet(&e.record, spec.linktype, e.seq, e.ack);
        writer.write_record(&mut pcap, e.ts_ns, &frame, frame.len() as u32);
    }
    SynthCapture {
        label,
        pcap,
        keylog: render_keylog(&keys),
        packets: emitted.len(),
        flows: cap.flows.len(),
    }
}

/// Generates every capture of the spec, in spec order.
pub fn synthesize(spec: &FixtureSpec) -> Result<Vec<SynthCapture>, SynthError> {
    use rayon::prelude::*;
    spec.validate()?;
    let jobs: Vec<(&AppSpec, usize)> = spec
        .apps
        .iter()
        .flat_map(|a| (0..a.captures.len()).map(move |i| (a, i)))
        .collect();
    Ok(jobs.par_iter().map(|&(app, i)| synth_capture(spec, app, i)).collect())
}

/// Writes `<stem>.pcap` and `sslkeylog_<stem>.txt` per capture; returns the
/// written paths.
pub fn write_fixtures(spec: &FixtureSpec, out_dir: &Path) -> Result<Vec<PathBuf>, SynthError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut written = Vec::new();
    for cap in synthesize(spec)? {
        let pcap_path = out_dir.join(cap.capture_filename());
        std::fs::write(&pcap_path, &cap.pcap).map_err(io(&pcap_path))?;
        let key_path = out_dir.join(cap.keylog_filename());
        std::fs::write(&key_path, &cap.keylog).map_err(io(&key_path))?;
        written.push(pcap_path);
        written.push(key_path);
    }
    Ok(written)
}
