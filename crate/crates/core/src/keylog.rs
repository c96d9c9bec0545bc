//! NSS key log files (`SSLKEYLOGFILE`) and key coverage of captured flows.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::classify::{AppTag, ClassifiedPacket, FlowKey};
use crate::dataset::{CaptureLabel, FilenameError, LabelFormat};

pub const KEYLOG_PREFIX: &str = "sslkeylog_";
pub const KEYLOG_SUFFIX: &str = ".txt";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyLogEntry {
    pub label: String,
    pub client_random: [u8; 32],
    pub secret: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyIndex {
    pub by_random: BTreeMap<[u8; 32], Vec<KeyLogEntry>>,
    pub malformed_lines: usize,
}

impl KeyIndex {
    pub fn insert(&mut self, entry: KeyLogEntry) {
        self.by_random.entry(entry.client_random).or_default().push(entry);
    }

    pub fn contains(&self, random: &[u8; 32]) -> bool {
        self.by_random.contains_key(random)
    }

    pub fn entry_count(&self) -> usize {
        self.by_random.values().map(Vec::len).sum()
    }

    pub fn random_count(&self) -> usize {
        self.by_random.len()
    }

    /// Drops every line logged for `random`; returns how many were removed.
    pub fn remove_random(&mut self, random: &[u8; 32]) -> usize {
        self.by_random.remove(random).map_or(0, |v| v.len())
    }

    pub fn entries(&self) -> impl Iterator<Item = &KeyLogEntry> {
        self.by_random.values().flatten()
    }
}

fn parse_line(line: &str) -> Option<KeyLogEntry> {
    let mut fields = line.split_whitespace();
    let (label, random, secret) = (fields.next()?, fields.next()?, fields.next()?);
    if fields.next().is_some() {
        return None;
    }
    if !label.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_') {
        return None;
    }
    let client_random: [u8; 32] = hex::decode(random).ok()?.try_into().ok()?;
    let secret = hex::decode(secret).ok()?;
    if secret.is_empty() {
        return None;
    }
    Some(KeyLogEntry {
        label: label.to_string(),
        client_random,
        secret,
    })
}

/// Tolerant parse: comments and blank lines are ignored, anything else that
/// is not a well-formed `LABEL random secret` line is counted as malformed.
pub fn parse_keylog(text: &str) -> KeyIndex {
    let mut index = KeyIndex::default();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_line(line) {
            Some(entry) => index.insert(entry),
            None => index.malformed_lines += 1,
        }
    }
    index
}

pub fn render_keylog<'a>(entries: impl IntoIterator<Item = &'a KeyLogEntry>) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&e.label);
        out.push(' ');
        out.push_str(&hex::encode(e.client_random));
        out.push(' ');
        out.push_str(&hex::encode(&e.secret));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageReport {
    pub tls_flows: usize,
    pub flows_with_client_hello: usize,
    pub flows_without_client_hello: usize,
    pub flows_with_keys: usize,
    pub coverage_fraction: f64,
}

/// Client random of each TLS-framed flow (TLS or DoT), `None` for flows whose
/// ClientHello was not captured.
pub fn tls_flow_randoms(classified: &[ClassifiedPacket]) -> BTreeMap<FlowKey, Option<[u8; 32]>> {
    let mut flows: BTreeMap<FlowKey, Option<[u8; 32]>> = BTreeMap::new();
    let mut tls_flows = BTreeSet::new();
    for p in classified {
        if matches!(p.protocol.tag, AppTag::Tls | AppTag::DoT) {
            tls_flows.insert(p.flow);
        }
        if let Some(r) = p.client_random {
            flows.entry(p.flow).or_insert(Some(r));
        }
    }
    tls_flows
        .into_iter()
        .map(|f| (f, flows.get(&f).copied().flatten()))
        .collect()
}

pub fn key_coverage(classified: &[ClassifiedPacket], index: &KeyIndex) -> CoverageReport {
    let flows = tls_flow_randoms(classified);
    let with_hello: Vec<[u8; 32]> = flows.values().flatten().copied().collect();
    let with_keys = with_hello.iter().filter(|r| index.contains(r)).count();
    CoverageReport {
        tls_flows: flows.len(),
        flows_with_client_hello: with_hello.len(),
        flows_without_client_hello: flows.len() - with_hello.len(),
        flows_with_keys: with_keys,
        coverage_fraction: with_keys as f64 / with_hello.len().max(1) as f64,
    }
}

pub fn keylog_filename_for(label: &CaptureLabel) -> String {
    keylog_filename_with(label, &LabelFormat::default())
}

pub fn keylog_filename_with(label: &CaptureLabel, format: &LabelFormat) -> String {
    format!("{KEYLOG_PREFIX}{}{KEYLOG_SUFFIX}", format.render_stem(label))
}

pub fn parse_keylog_filename(name: &str, format: &LabelFormat) -> Result<CaptureLabel, FilenameError> {
    let stem = name
        .strip_prefix(KEYLOG_PREFIX)
        .and_then(|s| s.strip_suffix(KEYLOG_SUFFIX))
        .ok_or(FilenameError::BadExtension)?;
    format.parse_stem(stem)
}
