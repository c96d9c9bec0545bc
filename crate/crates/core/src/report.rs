//! Report envelope and per-packet feature rows shared by CLI commands.

use std::io;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::classify::{dns, http, quic, tls, AppTag, ClassifiedPacket};
use crate::ingest::{TcpFlags, Transport};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// The JSON schema every envelope validates against.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads a file and records its digest.
pub fn read_input(path: &Path) -> io::Result<(Vec<u8>, InputDigest)> {
    let bytes = std::fs::read(path)?;
    let digest = InputDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    };
    Ok((bytes, digest))
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportEnvelope<B> {
    pub report_schema: u32,
    pub tool_version: &'static str,
    pub command: String,
    pub inputs: Vec<InputDigest>,
    pub generated_at: String,
    pub body: B,
}

/// `SOURCE_DATE_EPOCH` pins the timestamp for reproducible builds of reports.
pub fn generation_time() -> DateTime<Utc> {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| DateTime::from_timestamp(secs, 0))
        .unwrap_or_else(Utc::now)
}

impl<B: Serialize> ReportEnvelope<B> {
    pub fn new(command: &str, mut inputs: Vec<InputDigest>, body: B) -> Self {
        inputs.sort_by(|a, b| a.path.cmp(&b.path));
        ReportEnvelope {
            report_schema: REPORT_SCHEMA_VERSION,
            tool_version: TOOL_VERSION,
            command: command.to_string(),
            inputs,
            generated_at: generation_time().to_rfc3339_opts(SecondsFormat::Secs, true),
            body,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// One row of the per-packet feature table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureRow {
    pub ts: f64,
    pub src_ip: String,
    pub dst_ip: String,
    pub src_port: u16,
    pub dst_port: u16,
    pub transport: Transport,
    pub app_protocol: String,
    pub info: String,
    pub length: u32,
    pub app_data: bool,
}

pub const FEATURE_COLUMNS: [&str; 10] = [
    "ts",
    "src_ip",
    "dst_ip",
    "src_port",
    "dst_port",
    "transport",
    "app_protocol",
    "info",
    "length",
    "app_data",
];

impl FeatureRow {
    pub fn of(p: &ClassifiedPacket) -> Self {
        let r = &p.record;
        FeatureRow {
            ts: r.ts_ns as f64 / 1e9,
            src_ip: r.src_ip.to_string(),
            dst_ip: r.dst_ip.to_string(),
            src_port: r.src_port,
            dst_port: r.dst_port,
            transport: r.transport,
            app_protocol: p.protocol.to_string(),
            info: packet_info(p),
            length: r.packet_len,
            app_data: p.is_app_data,
        }
    }

    pub fn csv_record(&self) -> [String; 10] {
        [
            format!("{:.6}", self.ts),
            self.src_ip.clone(),
            self.dst_ip.clone(),
            self.src_port.to_string(),
            self.dst_port.to_string(),
            self.transport.as_str().to_string(),
            self.app_protocol.clone(),
            self.info.clone(),
            self.length.to_string(),
            self.app_data.to_string(),
        ]
    }
}

fn tls_info(payload: &[u8]) -> Option<String> {
    let parsed = tls::parse_records(payload, true).ok()?;
    let mut names: Vec<&str> = parsed
        .records
        .iter()
        .map(|rec| match (rec.framing, rec.handshake_type()) {
            (_, Some(tls::HANDSHAKE_CLIENT_HELLO)) => "Client Hello",
            (_, Some(tls::HANDSHAKE_SERVER_HELLO)) => "Server Hello",
            (tls::RecordFraming::Tls { content_type, .. }, _) => match content_type {
                tls::CONTENT_CHANGE_CIPHER_SPEC => "Change Cipher Spec",
                tls::CONTENT_ALERT => "Alert",
                tls::CONTENT_HANDSHAKE => "Handshake",
                _ => "Application Data",
            },
            (tls::RecordFraming::Sslv2 { .. }, _) => "SSLv2 Record",
        })
        .collect();
    if !parsed.remainder.is_empty() {
        names.push("Continuation");
    }
    names.dedup();
    (!names.is_empty()).then(|| names.join(", "))
}

/// Short human-readable description of a packet, in the spirit of a
/// dissector's info column.
pub fn packet_info(p: &ClassifiedPacket) -> String {
    let r = &p.record;
    if r.payload.is_empty() {
        return match r.tcp_flags {
            Some(f) => format!("[{}]", flag_names(f)),
            None => "Empty datagram".into(),
        };
    }
    let described = match p.protocol.tag {
        AppTag::Tls | AppTag::DoT => tls_info(&r.payload),
        AppTag::Do53 => dns::dns_message(r).and_then(|m| {
            let h = dns::parse_header(m)?;
            let kind = if h.is_response() { "Standard query response" } else { "Standard query" };
            Some(match dns::first_qname(m) {
                Some(name) => format!("{kind} 0x{:04x} {name}", h.id),
                None => format!("{kind} 0x{:04x}", h.id),
            })
        }),
        AppTag::Http => std::str::from_utf8(&r.payload)
            .ok()
            .and_then(|s| s.lines().next())
            .map(str::to_string)
            .or_else(|| Some("Continuation".into())),
        AppTag::Quic => quic::detect_quic(&r.payload, true).map(|q| format!("{:?}", q.packet_type)),
        AppTag::OtherTcp | AppTag::OtherUdp => None,
    };
    described
        .or_else(|| http::request_host(&r.payload))
        .unwrap_or_else(|| format!("{} bytes payload", r.payload.len()))
}

fn flag_names(f: TcpFlags) -> String {
    let names: Vec<&str> = f.iter_names().map(|(n, _)| n).collect();
    names.join(", ")
}
