//! TLS record framing and hello-message dissection.
//!
//! Only what version resolution needs is decoded: record headers, the
//! ClientHello/ServerHello legacy version, the 32-byte random and the
//! `supported_versions` extension. SSLv2 records (2-byte header with the
//! MSB set) are recognized when they carry a well-formed hello, or
//! unconditionally once a flow is known to speak SSLv2.

use std::fmt;

use serde::{Serialize, Serializer};

pub const CONTENT_CHANGE_CIPHER_SPEC: u8 = 20;
pub const CONTENT_ALERT: u8 = 21;
pub const CONTENT_HANDSHAKE: u8 = 22;
pub const CONTENT_APPLICATION_DATA: u8 = 23;

pub const HANDSHAKE_CLIENT_HELLO: u8 = 1;
pub const HANDSHAKE_SERVER_HELLO: u8 = 2;

pub const EXT_SUPPORTED_VERSIONS: u16 = 0x002b;

/// Largest record length accepted before the stream is considered desynchronized.
pub const MAX_RECORD_LEN: usize = 16_708;

const SSLV2_CLIENT_HELLO: u8 = 1;
const SSLV2_SERVER_HELLO: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TlsVersion {
    /// TLS-framed traffic whose version could not be resolved.
    UnknownSsl,
    Sslv2,
    Sslv3,
    Tls1_0,
    Tls1_1,
    Tls1_2,
    Tls1_3,
}

impl TlsVersion {
    pub const ALL: [TlsVersion; 7] = [
        TlsVersion::UnknownSsl,
        TlsVersion::Sslv2,
        TlsVersion::Sslv3,
        TlsVersion::Tls1_0,
        TlsVersion::Tls1_1,
        TlsVersion::Tls1_2,
        TlsVersion::Tls1_3,
    ];

    pub fn from_wire(v: u16) -> Option<TlsVersion> {
        match v {
            0x0002 => Some(TlsVersion::Sslv2),
            0x0300 => Some(TlsVersion::Sslv3),
            0x0301 => Some(TlsVersion::Tls1_0),
            0x0302 => Some(TlsVersion::Tls1_1),
            0x0303 => Some(TlsVersion::Tls1_2),
            0x0304 => Some(TlsVersion::Tls1_3),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TlsVersion::UnknownSsl => "SSL",
            TlsVersion::Sslv2 => "SSLv2",
            TlsVersion::Sslv3 => "SSLv3",
            TlsVersion::Tls1_0 => "TLSv1",
            TlsVersion::Tls1_1 => "TLSv1.1",
            TlsVersion::Tls1_2 => "TLSv1.2",
            TlsVersion::Tls1_3 => "TLSv1.3",
        }
    }

    pub fn from_label(s: &str) -> Option<TlsVersion> {
        TlsVersion::ALL.into_iter().find(|v| v.label() == s)
    }
}

impl fmt::Display for TlsVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for TlsVersion {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HelloKind {
    Client,
    Server,
}

/// The parts of a ClientHello or ServerHello relevant to version resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HelloView {
    pub kind: HelloKind,
    pub legacy_version: u16,
    pub random: [u8; 32],
    /// Offered versions (ClientHello) or the single selected one (ServerHello).
    /// `None` when the extension is absent.
    pub supported_versions: Option<Vec<u16>>,
    pub sslv2: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFraming {
    Tls { content_type: u8, version: u16 },
    Sslv2 { msg_type: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TlsRecordView {
    pub framing: RecordFraming,
    /// Body length as announced by the record header.
    pub length: usize,
    pub hello: Option<HelloView>,
}

impl TlsRecordView {
    pub fn content_type(&self) -> Option<u8> {
        match self.framing {
            RecordFraming::Tls { content_type, .. } => Some(content_type),
            RecordFraming::Sslv2 { .. } => None,
        }
    }

    /// Handshake type of the first message in a handshake record.
    pub fn handshake_type(&self) -> Option<u8> {
        self.hello.as_ref().map(|h| match h.kind {
            HelloKind::Client => HANDSHAKE_CLIENT_HELLO,
            HelloKind::Server => HANDSHAKE_SERVER_HELLO,
        })
    }

    /// Whether the record carries application payload.
    pub fn is_app_data(&self) -> bool {
        match self.framing {
            RecordFraming::Tls { content_type, .. } => content_type == CONTENT_APPLICATION_DATA,
            RecordFraming::Sslv2 { msg_type } => !is_sslv2_handshake_type(msg_type),
        }
    }
}

fn is_sslv2_handshake_type(t: u8) -> bool {
    // error, client-hello, client-master-key, server-hello
    matches!(t, 0 | 1 | 2 | 4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum TlsParseError {
    #[error("payload is not TLS framed")]
    NotTls,
    #[error("record length {0} exceeds the TLS maximum")]
    Desync(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TlsParse<'a> {
    pub records: Vec<TlsRecordView>,
    /// Trailing partial record, to be prepended to the next segment.
    pub remainder: &'a [u8],
    /// Set when garbage followed at least one valid record; the rest of the
    /// input was discarded.
    pub desync: bool,
}

impl TlsParse<'_> {
    /// Content type of the partial record left in `remainder`, if known.
    pub fn pending_framing(&self) -> Option<RecordFraming> {
        let r = self.remainder;
        match r.first()? {
            t @ 20..=23 => Some(RecordFraming::Tls {
                content_type: *t,
                version: if r.len() >= 3 { u16::from_be_bytes([r[1], r[2]]) } else { 0 },
            }),
            b if b & 0x80 != 0 => Some(RecordFraming::Sslv2 {
                msg_type: r.get(2).copied().unwrap_or(0xff),
            }),
            _ => None,
        }
    }
}

/// Splits a TCP byte stream (one direction) into TLS records.
pub fn parse_tls_records(input: &[u8]) -> Result<TlsParse<'_>, TlsParseError> {
    parse_records(input, false)
}

/// Like [`parse_tls_records`], also accepting SSLv2 data records. Used once a
/// flow has been identified as SSLv2.
pub fn parse_records(input: &[u8], sslv2_flow: bool) -> Result<TlsParse<'_>, TlsParseError> {
    let mut records = Vec::new();
    let mut pos = 0;
    while pos < input.len() {
        let rest = &input[pos..];
        match rest[0] {
            20..=23 => {
                if rest.len() >= 2 && rest[1] != 0x03 {
                    return bail(input, records, TlsParseError::NotTls);
                }
                if rest.len() >= 3 && rest[2] > 0x04 {
                    return bail(input, records, TlsParseError::NotTls);
                }
                if rest.len() < 5 {
                    break;
                }
                let version = u16::from_be_bytes([rest[1], rest[2]]);
                let length = usize::from(u16::from_be_bytes([rest[3], rest[4]]));
                if length > MAX_RECORD_LEN {
                    return bail(input, records, TlsParseError::Desync(length));
                }
                if rest.len() < 5 + length {
                    break;
                }
                let body = &rest[5..5 + length];
                let hello = if rest[0] == CONTENT_HANDSHAKE {
                    parse_hello(body)
                } else {
                    None
                };
                records.push(TlsRecordView {
                    framing: RecordFraming::Tls {
                        content_type: rest[0],
                        version,
                    },
                    length,
                    hello,
                });
                pos += 5 + length;
            }
            b if b & 0x80 != 0 => {
                let plausible = sslv2_flow || sslv2_hello_prefix(rest);
                if !plausible {
                    return bail(input, records, TlsParseError::NotTls);
                }
                if rest.len() < 3 {
                    break;
                }
                let length = (usize::from(rest[0] & 0x7f) << 8) | usize::from(rest[1]);
                if length == 0 {
                    return bail(input, records, TlsParseError::NotTls);
                }
                if rest.len() < 2 + length {
                    break;
                }
                let body = &rest[2..2 + length];
                let hello = parse_sslv2_hello(body);
                if hello.is_none() && !sslv2_flow {
                    return bail(input, records, TlsParseError::NotTls);
                }
                records.push(TlsRecordView {
                    framing: RecordFraming::Sslv2 { msg_type: body[0] },
                    length,
                    hello,
                });
                pos += 2 + length;
            }
            _ => return bail(input, records, TlsParseError::NotTls),
        }
    }
    Ok(TlsParse {
        records,
        remainder: &input[pos..],
        desync: false,
    })
}

fn bail(input: &[u8], records: Vec<TlsRecordView>, err: TlsParseError) -> Result<TlsParse<'_>, TlsParseError> {
    if records.is_empty() {
        return Err(err);
    }
    Ok(TlsParse {
        records,
        remainder: &input[input.len()..],
        desync: true,
    })
}

/// Header-level check for the start of an SSLv2 ClientHello or ServerHello,
/// usable before the whole record has arrived.
fn sslv2_hello_prefix(r: &[u8]) -> bool {
    let Some(&msg) = r.get(2) else {
        return r.len() < 3;
    };
    let version_at = match msg {
        SSLV2_CLIENT_HELLO => 3,
        SSLV2_SERVER_HELLO => 5,
        _ => return false,
    };
    match (r.get(version_at), r.get(version_at + 1)) {
        (Some(&hi), Some(&lo)) => is_sslv2_era_version(u16::from_be_bytes([hi, lo])),
        _ => true,
    }
}

fn is_sslv2_era_version(v: u16) -> bool {
    v == 0x0002 || (0x0300..=0x0303).contains(&v)
}

fn parse_sslv2_hello(body: &[u8]) -> Option<HelloView> {
    let be = |i: usize| -> Option<usize> { Some(usize::from(u16::from_be_bytes([*body.get(i)?, *body.get(i + 1)?]))) };
    match *body.first()? {
        SSLV2_CLIENT_HELLO => {
            let version = be(1)? as u16;
            let specs = be(3)?;
            let sid = be(5)?;
            let challenge = be(7)?;
            if !is_sslv2_era_version(version)
                || specs % 3 != 0
                || !(sid == 0 || sid == 16)
                || !(16..=32).contains(&challenge)
                || 9 + specs + sid + challenge != body.len()
            {
                return None;
            }
            // The challenge becomes the right-aligned client random.
            let mut random = [0u8; 32];
            random[32 - challenge..].copy_from_slice(&body[body.len() - challenge..]);
            Some(HelloView {
                kind: HelloKind::Client,
                legacy_version: version,
                random,
                supported_versions: None,
                sslv2: true,
            })
        }
        SSLV2_SERVER_HELLO => {
            let version = be(3)? as u16;
            let cert = be(5)?;
            let specs = be(7)?;
            let conn_id = be(9)?;
            if !is_sslv2_era_version(version) || 11 + cert + specs + conn_id != body.len() {
                return None;
            }
            Some(HelloView {
                kind: HelloKind::Server,
                legacy_version: version,
                random: [0u8; 32],
                supported_versions: None,
                sslv2: true,
            })
        }
        _ => None,
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        Some(self.take(1)?[0])
    }

    fn u16(&mut self) -> Option<u16> {
        let b = self.take(2)?;
        Some(u16::from_be_bytes([b[0], b[1]]))
    }

    fn vec8(&mut self) -> Option<&'a [u8]> {
        let n = usize::from(self.u8()?);
        self.take(n)
    }

    fn vec16(&mut self) -> Option<&'a [u8]> {
        let n = usize::from(self.u16()?);
        self.take(n)
    }

    fn remaining(&self) -> usize {
        self.buf.len().saturating_sub(self.pos)
    }
}

/// Parses the first handshake message of a record body if it is a hello.
pub fn parse_hello(body: &[u8]) -> Option<HelloView> {
    let kind = match *body.first()? {
        HANDSHAKE_CLIENT_HELLO => HelloKind::Client,
        HANDSHAKE_SERVER_HELLO => HelloKind::Server,
        _ => return None,
    };
    let len = (usize::from(*body.get(1)?) << 16) | (usize::from(*body.get(2)?) << 8) | usize::from(*body.get(3)?);
    let msg = body.get(4..4 + len)?;
    let mut c = Cursor { buf: msg, pos: 0 };
    let legacy_version = c.u16()?;
    let mut random = [0u8; 32];
    random.copy_from_slice(c.take(32)?);
    c.vec8()?; // session id
    match kind {
        HelloKind::Client => {
            c.vec16()?; // cipher suites
            c.vec8()?; // compression methods
        }
        HelloKind::Server => {
            c.take(3)?; // cipher suite, compression method
        }
    }
    let mut supported_versions = None;
    if c.remaining() >= 2 {
        let mut exts = Cursor { buf: c.vec16()?, pos: 0 };
        while exts.remaining() >= 4 {
            let ext_type = exts.u16()?;
            let data = exts.vec16()?;
            if ext_type != EXT_SUPPORTED_VERSIONS {
                continue;
            }
            let versions = match kind {
                HelloKind::Client => {
                    let list = Cursor { buf: data, pos: 0 }.vec8()?;
                    list.chunks_exact(2)
                        .map(|p| u16::from_be_bytes([p[0], p[1]]))
                        .collect()
                }
                HelloKind::Server if data.len() == 2 => vec![u16::from_be_bytes([data[0], data[1]])],
                HelloKind::Server => return None,
            };
            supported_versions = Some(versions);
        }
    }
    Some(HelloView {
        kind,
        legacy_version,
        random,
        supported_versions,
        sslv2: false,
    })
}

fn is_grease(v: u16) -> bool {
    v & 0x0f0f == 0x0a0a && v >> 8 == v & 0xff
}

/// Version announced by a hello on its own.
fn hello_version(h: &HelloView) -> TlsVersion {
    if h.sslv2 && h.kind == HelloKind::Client {
        return TlsVersion::Sslv2;
    }
    match &h.supported_versions {
        Some(list) => match h.kind {
            HelloKind::Server => list.first().copied().and_then(TlsVersion::from_wire),
            HelloKind::Client => list
                .iter()
                .filter(|v| !is_grease(**v))
                .filter_map(|v| TlsVersion::from_wire(*v))
                .max(),
        },
        None => TlsVersion::from_wire(h.legacy_version),
    }
    .unwrap_or(TlsVersion::UnknownSsl)
}

/// Resolves the negotiated version: ServerHello (extension first, then the
/// legacy field) wins over the ClientHello hint.
pub fn resolve_tls_version(client_hello: Option<&HelloView>, server_hello: Option<&HelloView>) -> TlsVersion {
    match (server_hello, client_hello) {
        (Some(sh), _) => hello_version(sh),
        (None, Some(ch)) => hello_version(ch),
        (None, None) => TlsVersion::UnknownSsl,
    }
}

/// Byte-level builders shared by the fixture synthesizer and tests.
pub mod build {
    use super::*;

    pub fn record(content_type: u8, version: u16, body: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + body.len());
        out.push(content_type);
        out.extend_from_slice(&version.to_be_bytes());
        out.extend_from_slice(&(body.len() as u16).to_be_bytes());
        out.extend_from_slice(body);
        out
    }

    fn handshake(msg_type: u8, msg: &[u8]) -> Vec<u8> {
        let mut out = vec![msg_type];
        let len = msg.len() as u32;
        out.extend_from_slice(&len.to_be_bytes()[1..]);
        out.extend_from_slice(msg);
        out
    }

    fn extension(ext_type: u16, data: &[u8]) -> Vec<u8> {
        let mut out = ext_type.to_be_bytes().to_vec();
        out.extend_from_slice(&(data.len() as u16).to_be_bytes());
        out.extend_from_slice(data);
        out
    }

    fn server_name_ext(host: &str) -> Vec<u8> {
        let mut entry = vec![0u8];
        entry.extend_from_slice(&(host.len() as u16).to_be_bytes());
        entry.extend_from_slice(host.as_bytes());
        let mut data = (entry.len() as u16).to_be_bytes().to_vec();
        data.extend_from_slice(&entry);
        extension(0x0000, &data)
    }

    /// A ClientHello handshake record.
    pub fn client_hello(
        record_version: u16,
        legacy_version: u16,
        random: &[u8; 32],
        supported_versions: Option<&[u16]>,
        sni: Option<&str>,
    ) -> Vec<u8> {
        let mut msg = legacy_version.to_be_bytes().to_vec();
        msg.extend_from_slice(random);
        msg.push(32);
        msg.extend_from_slice(&[0x5a; 32]);
        let suites: &[u16] = &[0x1301, 0x1302, 0x1303, 0xc02b, 0xc02f, 0xc02c, 0xc030];
        msg.extend_from_slice(&((suites.len() * 2) as u16).to_be_bytes());
        for s in suites {
            msg.extend_from_slice(&s.to_be_bytes());
        }
        msg.extend_from_slice(&[1, 0]);
        let mut exts = Vec::new();
        if let Some(host) = sni {
            exts.extend_from_slice(&server_name_ext(host));
        }
        exts.extend_from_slice(&extension(0x000a, &[0, 4, 0, 0x1d, 0, 0x17]));
        if let Some(versions) = supported_versions {
            let mut data = vec![(versions.len() * 2) as u8];
            for v in versions {
                data.extend_from_slice(&v.to_be_bytes());
            }
            exts.extend_from_slice(&extension(EXT_SUPPORTED_VERSIONS, &data));
        }
        msg.extend_from_slice(&(exts.len() as u16).to_be_bytes());
        msg.extend_from_slice(&exts);
        record(CONTENT_HANDSHAKE, record_version, &handshake(HANDSHAKE_CLIENT_HELLO, &msg))
    }

    /// A ServerHello handshake record.
    pub fn server_hello(legacy_version: u16, random: &[u8; 32], selected_version: Option<u16>) -> Vec<u8> {
        let mut msg = legacy_version.to_be_bytes().to_vec();
        msg.extend_from_slice(random);
        msg.push(32);
        msg.extend_from_slice(&[0x5a; 32]);
        let suite: u16 = if selected_version == Some(0x0304) { 0x1301 } else { 0xc02f };
        msg.extend_from_slice(&suite.to_be_bytes());
        msg.push(0);
        let mut exts = Vec::new();
        if let Some(v) = selected_version {
            exts.extend_from_slice(&extension(EXT_SUPPORTED_VERSIONS, &v.to_be_bytes()));
            exts.extend_from_slice(&extension(0x0033, &[0, 0x1d, 0, 4, 1, 2, 3, 4]));
        }
        if !exts.is_empty() {
            msg.extend_from_slice(&(exts.len() as u16).to_be_bytes());
            msg.extend_from_slice(&exts);
        }
        let record_version = legacy_version.min(0x0303);
        record(CONTENT_HANDSHAKE, record_version, &handshake(HANDSHAKE_SERVER_HELLO, &msg))
    }

    pub fn app_data(version: u16, body: &[u8]) -> Vec<u8> {
        record(CONTENT_APPLICATION_DATA, version, body)
    }

    fn sslv2_record(body: &[u8]) -> Vec<u8> {
        let len = body.len() as u16 | 0x8000;
        let mut out = len.to_be_bytes().to_vec();
        out.extend_from_slice(body);
        out
    }

    /// SSLv2 CLIENT-HELLO with a 16..=32 byte challenge.
    pub fn sslv2_client_hello(version: u16, challenge: &[u8]) -> Vec<u8> {
        let specs: [u8; 6] = [0x01, 0x00, 0x80, 0x07, 0x00, 0xc0];
        let mut body = vec![SSLV2_CLIENT_HELLO];
        body.extend_from_slice(&version.to_be_bytes());
        body.extend_from_slice(&(specs.len() as u16).to_be_bytes());
        body.extend_from_slice(&0u16.to_be_bytes());
        body.extend_from_slice(&(challenge.len() as u16).to_be_bytes());
        body.extend_from_slice(&specs);
        body.extend_from_slice(challenge);
        sslv2_record(&body)
    }

    pub fn sslv2_server_hello(connection_id: &[u8]) -> Vec<u8> {
        let cert = [0x30u8; 24];
        let specs = [0x01u8, 0x00, 0x80];
        let mut body = vec![SSLV2_SERVER_HELLO, 0, 1];
        body.extend_from_slice(&0x0002u16.to_be_bytes());
        body.extend_from_slice(&(cert.len() as u16).to_be_bytes());
        body.extend_from_slice(&(specs.len() as u16).to_be_bytes());
        body.extend_from_slice(&(connection_id.len() as u16).to_be_bytes());
        body.extend_from_slice(&cert);
        body.extend_from_slice(&specs);
        body.extend_from_slice(connection_id);
        sslv2_record(&body)
    }

    /// An encrypted SSLv2 data record. The first body byte is chosen outside
    /// the cleartext handshake message types.
    pub fn sslv2_data(body: &[u8]) -> Vec<u8> {
        let mut b = body.to_vec();
        if let Some(first) = b.first_mut() {
            if is_sslv2_handshake_type(*first) {
                *first |= 0x10;
            }
        }
        sslv2_record(&b)
    }
}
