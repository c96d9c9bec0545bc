//! QUIC header detection (RFC 8999 invariants, RFC 9000 / RFC 9369 types).

use serde::Serialize;

pub const QUIC_V1: u32 = 0x0000_0001;
pub const QUIC_V2: u32 = 0x6b33_43cf;
const DRAFTS: std::ops::RangeInclusive<u32> = 0xff00_001d..=0xff00_0020;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QuicPacketType {
    VersionNegotiation,
    Initial,
    ZeroRtt,
    Handshake,
    Retry,
    OneRtt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuicInfo {
    pub long_header: bool,
    pub version: Option<u32>,
    pub packet_type: QuicPacketType,
}

impl QuicInfo {
    /// 1-RTT and 0-RTT packets carry application data.
    pub fn is_app_data(&self) -> bool {
        matches!(self.packet_type, QuicPacketType::OneRtt | QuicPacketType::ZeroRtt)
    }
}

pub fn is_known_version(v: u32) -> bool {
    v == QUIC_V1 || v == QUIC_V2 || DRAFTS.contains(&v)
}

/// Detects a QUIC packet in a UDP payload. Short headers are only accepted
/// on flows that already carried a long-header packet.
pub fn detect_quic(payload: &[u8], flow_quic_seen: bool) -> Option<QuicInfo> {
    let first = *payload.first()?;
    if first & 0x40 == 0 {
        return None;
    }
    if first & 0x80 == 0 {
        return flow_quic_seen.then_some(QuicInfo {
            long_header: false,
            version: None,
            packet_type: QuicPacketType::OneRtt,
        });
    }
    if payload.len() < 7 {
        return None;
    }
    let version = u32::from_be_bytes([payload[1], payload[2], payload[3], payload[4]]);
    let type_bits = (first >> 4) & 0x03;
    let packet_type = if version == 0 {
        QuicPacketType::VersionNegotiation
    } else if !is_known_version(version) {
        return None;
    } else if version == QUIC_V2 {
        match type_bits {
            0 => QuicPacketType::Retry,
            1 => QuicPacketType::Initial,
            2 => QuicPacketType::ZeroRtt,
            _ => QuicPacketType::Handshake,
        }
    } else {
        match type_bits {
            0 => QuicPacketType::Initial,
            1 => QuicPacketType::ZeroRtt,
            2 => QuicPacketType::Handshake,
            _ => QuicPacketType::Retry,
        }
    };
    Some(QuicInfo {
        long_header: true,
        version: Some(version),
        packet_type,
    })
}

pub mod build {
    /// A v1 long-header packet of the given type bits with an opaque body.
    pub fn long_header(type_bits: u8, version: u32, dcid: &[u8], scid: &[u8], body: &[u8]) -> Vec<u8> {
        let mut out = vec![0xc0 | ((type_bits & 0x03) << 4) | 0x01];
        out.extend_from_slice(&version.to_be_bytes());
        out.push(dcid.len() as u8);
        out.extend_from_slice(dcid);
        out.push(scid.len() as u8);
        out.extend_from_slice(scid);
        if type_bits == 0 {
            out.push(0); // token length
        }
        let len = (body.len() as u16) | 0x4000; // 2-byte varint
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(body);
        out
    }

    pub fn short_header(dcid: &[u8], body: &[u8]) -> Vec<u8> {
        let mut out = vec![0x41];
        out.extend_from_slice(dcid);
        out.extend_from_slice(body);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn v1_long_header() {
        let p = [0xc3, 0, 0, 0, 1, 8, 1, 2, 3, 4, 5, 6, 7, 8, 0];
        let q = detect_quic(&p, false).unwrap();
        assert!(q.long_header);
        assert_eq!(q.version, Some(QUIC_V1));
        assert_eq!(q.packet_type, QuicPacketType::Initial);
        assert!(!q.is_app_data());
    }

    #[test]
    fn short_header_gated_on_flow() {
        let p = [0x45, 1, 2, 3, 4, 5, 6, 7, 8];
        assert_eq!(detect_quic(&p, false), None);
        let q = detect_quic(&p, true).unwrap();
        assert!(!q.long_header);
        assert!(q.is_app_data());
    }

    #[test]
    fn dns_query_is_not_quic() {
        // transaction id 0x1a2b, flags 0x0100
        let p = [0x1a, 0x2b, 0x01, 0x00, 0, 1, 0, 0, 0, 0, 0, 0];
        assert_eq!(detect_quic(&p, false), None);
        assert_eq!(detect_quic(&p, true), None);
    }

    #[test]
    fn unknown_version_and_short_input() {
        assert_eq!(detect_quic(&[0xc0, 0x12, 0x34, 0x56, 0x78, 0, 0], false), None);
        assert_eq!(detect_quic(&[0xc0, 0, 0, 0, 1, 0], false), None);
    }

    #[test]
    fn zero_rtt_is_app_data() {
        let v1 = build::long_header(1, QUIC_V1, &[1; 8], &[], &[0; 20]);
        assert!(detect_quic(&v1, false).unwrap().is_app_data());
        let v2 = build::long_header(2, QUIC_V2, &[1; 8], &[], &[0; 20]);
        assert_eq!(detect_quic(&v2, false).unwrap().packet_type, QuicPacketType::ZeroRtt);
    }

    #[test]
    fn version_negotiation() {
        let p = [0xc0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1];
        assert_eq!(
            detect_quic(&p, false).unwrap().packet_type,
            QuicPacketType::VersionNegotiation
        );
    }
}
