//! Just enough DNS to validate a message header and read the first question.

use crate::ingest::{PacketRecord, Transport};

pub const DNS_PORT: u16 = 53;
pub const DOT_PORT: u16 = 853;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DnsHeader {
    pub id: u16,
    pub flags: u16,
    pub qdcount: u16,
    pub ancount: u16,
}

impl DnsHeader {
    pub fn is_response(&self) -> bool {
        self.flags & 0x8000 != 0
    }

    pub fn well_formed(&self) -> bool {
        self.qdcount >= 1 || self.is_response()
    }
}

/// Which DNS family a packet belongs to by its ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DnsPort {
    Do53,
    DoT,
}

pub fn dns_port(record: &PacketRecord) -> Option<DnsPort> {
    if record.transport == Transport::Tcp && record.has_port(DOT_PORT) {
        Some(DnsPort::DoT)
    } else if record.has_port(DNS_PORT) {
        Some(DnsPort::Do53)
    } else {
        None
    }
}

/// The DNS message inside a port-53 payload (TCP messages carry a length prefix).
pub fn dns_message(record: &PacketRecord) -> Option<&[u8]> {
    match record.transport {
        Transport::Udp => Some(&record.payload),
        Transport::Tcp => record.payload.get(2..),
    }
}

pub fn parse_header(msg: &[u8]) -> Option<DnsHeader> {
    if msg.len() < 12 {
        return None;
    }
    let be = |i: usize| u16::from_be_bytes([msg[i], msg[i + 1]]);
    Some(DnsHeader {
        id: be(0),
        flags: be(2),
        qdcount: be(4),
        ancount: be(6),
    })
}

/// Well-formed Do53 header of a packet, if it has one.
pub fn do53_header(record: &PacketRecord) -> Option<DnsHeader> {
    if !record.has_port(DNS_PORT) {
        return None;
    }
    parse_header(dns_message(record)?).filter(DnsHeader::well_formed)
}

/// Name of the first question, lower-cased, without the trailing dot.
pub fn first_qname(msg: &[u8]) -> Option<String> {
    let header = parse_header(msg)?;
    if header.qdcount == 0 {
        return None;
    }
    let mut pos = 12;
    let mut labels: Vec<String> = Vec::new();
    let mut jumps = 0;
    loop {
        let len = *msg.get(pos)?;
        match len {
            0 => break,
            l if l & 0xc0 == 0xc0 => {
                jumps += 1;
                if jumps > 8 {
                    return None;
                }
                pos = (usize::from(l & 0x3f) << 8) | usize::from(*msg.get(pos + 1)?);
            }
            l if l & 0xc0 == 0 => {
                let label = msg.get(pos + 1..pos + 1 + usize::from(l))?;
                labels.push(String::from_utf8_lossy(label).to_ascii_lowercase());
                pos += 1 + usize::from(l);
            }
            _ => return None,
        }
    }
    Some(labels.join("."))
}

pub mod build {
    /// A query (or response echoing the question) for an A record.
    pub fn message(id: u16, response: bool, qname: &str) -> Vec<u8> {
        let flags: u16 = if response { 0x8180 } else { 0x0100 };
        let mut out = Vec::with_capacity(32 + qname.len());
        out.extend_from_slice(&id.to_be_bytes());
        out.extend_from_slice(&flags.to_be_bytes());
        out.extend_from_slice(&1u16.to_be_bytes());
        out.extend_from_slice(&u16::from(response).to_be_bytes());
        out.extend_from_slice(&[0, 0, 0, 0]);
        for label in qname.split('.').filter(|l| !l.is_empty()) {
            out.push(label.len() as u8);
            out.extend_from_slice(label.as_bytes());
        }
        out.push(0);
        out.extend_from_slice(&[0, 1, 0, 1]);
        if response {
            out.extend_from_slice(&[0xc0, 0x0c, 0, 1, 0, 1, 0, 0, 0x01, 0x2c, 0, 4, 142, 250, 184, 3]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_name() {
        let q = build::message(0x1234, false, "connectivitycheck.gstatic.com");
        let h = parse_header(&q).unwrap();
        assert_eq!(h.id, 0x1234);
        assert!(h.well_formed());
        assert!(!h.is_response());
        assert_eq!(first_qname(&q).as_deref(), Some("connectivitycheck.gstatic.com"));
        let r = build::message(0x1234, true, "www.google.com");
        assert!(parse_header(&r).unwrap().is_response());
        assert_eq!(first_qname(&r).as_deref(), Some("www.google.com"));
    }

    #[test]
    fn short_or_empty() {
        assert_eq!(parse_header(&[1, 2, 3]), None);
        let h = parse_header(&[0u8; 12]).unwrap();
        assert!(!h.well_formed());
    }

    #[test]
    fn compression_loop_terminates() {
        let mut m = build::message(1, false, "a.b");
        m.truncate(12);
        m.extend_from_slice(&[0xc0, 12]);
        assert_eq!(first_qname(&m), None);
    }
}
