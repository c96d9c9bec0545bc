use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use serde::Serialize;

use super::pcap::{RawFrame, LINKTYPE_ETHERNET, LINKTYPE_LINUX_SLL, LINKTYPE_LINUX_SLL2};
use super::IngestError;

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86dd;
const ETHERTYPE_VLAN: u16 = 0x8100;

const IPPROTO_TCP: u8 = 6;
const IPPROTO_UDP: u8 = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Transport {
    #[serde(rename = "TCP")]
    Tcp,
    #[serde(rename = "UDP")]
    Udp,
}

impl Transport {
    pub fn as_str(self) -> &'static str {
        match self {
            Transport::Tcp => "TCP",
            Transport::Udp => "UDP",
        }
    }
}

bitflags::bitflags! {
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
    pub struct TcpFlags: u16 {
        const FIN = 0x001;
        const SYN = 0x002;
        const RST = 0x004;
        const PSH = 0x008;
        const ACK = 0x010;
        const URG = 0x020;
        const ECE = 0x040;
        const CWR = 0x080;
        const NS  = 0x100;
    }
}

/// One decoded TCP or UDP packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    pub ts_ns: u64,
    pub src_ip: IpAddr,
    pub dst_ip: IpAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub transport: Transport,
    /// Original on-the-wire frame length.
    pub packet_len: u32,
    /// Transport payload; shorter than announced when the frame was cut by snaplen.
    pub payload: Vec<u8>,
    pub tcp_flags: Option<TcpFlags>,
}

impl PacketRecord {
    pub fn ip_version(&self) -> u8 {
        match self.src_ip {
            IpAddr::V4(_) => 4,
            IpAddr::V6(_) => 6,
        }
    }

    pub fn has_port(&self, port: u16) -> bool {
        self.src_port == port || self.dst_port == port
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NonIp,
    OtherIpProtocol,
    Fragment,
    UnknownExtensionHeader,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Packet(PacketRecord),
    Skip(SkipReason),
}

fn be16(b: &[u8], at: usize) -> Option<u16> {
    Some(u16::from_be_bytes([*b.get(at)?, *b.get(at + 1)?]))
}

/// Decodes the link, network and transport layers of one frame.
pub fn decode_frame(frame: &RawFrame, linktype_id: u32) -> Result<Decoded, IngestError> {
    let bytes = &frame.frame_bytes[..];
    let (ethertype, l3) = match linktype_id {
        LINKTYPE_ETHERNET => {
            let mut ethertype = be16(bytes, 12).ok_or(IngestError::MalformedHeader("ethernet"))?;
            let mut off = 14;
            if ethertype == ETHERTYPE_VLAN {
                ethertype = be16(bytes, 16).ok_or(IngestError::MalformedHeader("vlan"))?;
                off = 18;
            }
            (ethertype, off)
        }
        LINKTYPE_LINUX_SLL => {
            let ethertype = be16(bytes, 14).ok_or(IngestError::MalformedHeader("sll"))?;
            (ethertype, 16)
        }
        LINKTYPE_LINUX_SLL2 => {
            if bytes.len() < 20 {
                return Err(IngestError::MalformedHeader("sll2"));
            }
            (be16(bytes, 0).unwrap_or_default(), 20)
        }
        other => return Err(IngestError::UnsupportedLinkType(other)),
    };
    let (ethertype, l3) = if ethertype == ETHERTYPE_VLAN && linktype_id != LINKTYPE_ETHERNET {
        (
            be16(bytes, l3 + 2).ok_or(IngestError::MalformedHeader("vlan"))?,
            l3 + 4,
        )
    } else {
        (ethertype, l3)
    };
    let ip = &bytes[l3.min(bytes.len())..];
    match ethertype {
        ETHERTYPE_IPV4 => decode_ipv4(frame, ip),
        ETHERTYPE_IPV6 => decode_ipv6(frame, ip),
        _ => Ok(Decoded::Skip(SkipReason::NonIp)),
    }
}

fn decode_ipv4(frame: &RawFrame, ip: &[u8]) -> Result<Decoded, IngestError> {
    if ip.len() < 20 || ip[0] >> 4 != 4 {
        return Err(IngestError::MalformedHeader("ipv4"));
    }
    let ihl = usize::from(ip[0] & 0x0f) * 4;
    if ihl < 20 || ip.len() < ihl {
        return Err(IngestError::MalformedHeader("ipv4"));
    }
    let total_len = usize::from(be16(ip, 2).unwrap_or_default());
    let frag = be16(ip, 6).unwrap_or_default();
    if frag & 0x1fff != 0 {
        return Ok(Decoded::Skip(SkipReason::Fragment));
    }
    let proto = ip[9];
    let src = IpAddr::V4(Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]));
    let dst = IpAddr::V4(Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]));
    // total_len may exceed what was captured (snaplen) or be zero (TSO).
    let end = if total_len >= ihl { total_len.min(ip.len()) } else { ip.len() };
    decode_transport(frame, proto, src, dst, &ip[ihl..end])
}

fn decode_ipv6(frame: &RawFrame, ip: &[u8]) -> Result<Decoded, IngestError> {
    if ip.len() < 40 || ip[0] >> 4 != 6 {
        return Err(IngestError::MalformedHeader("ipv6"));
    }
    let payload_len = usize::from(be16(ip, 4).unwrap_or_default());
    let mut next = ip[6];
    let mut src = [0u8; 16];
    let mut dst = [0u8; 16];
    src.copy_from_slice(&ip[8..24]);
    dst.copy_from_slice(&ip[24..40]);
    let end = if payload_len == 0 {
        ip.len()
    } else {
        (40 + payload_len).min(ip.len())
    };
    let mut off = 40;
    loop {
        match next {
            IPPROTO_TCP | IPPROTO_UDP => break,
            // hop-by-hop, routing, destination options
            0 | 43 | 60 => {
                let len = ip
                    .get(off + 1)
                    .map(|l| (usize::from(*l) + 1) * 8)
                    .ok_or(IngestError::MalformedHeader("ipv6 extension"))?;
                next = ip[off];
                off += len;
            }
            44 => {
                let hdr = ip
                    .get(off..off + 8)
                    .ok_or(IngestError::MalformedHeader("ipv6 fragment"))?;
                if u16::from_be_bytes([hdr[2], hdr[3]]) >> 3 != 0 {
                    return Ok(Decoded::Skip(SkipReason::Fragment));
                }
                next = hdr[0];
                off += 8;
            }
            // authentication header, length in 4-octet units minus 2
            51 => {
                let len = ip
                    .get(off + 1)
                    .map(|l| (usize::from(*l) + 2) * 4)
                    .ok_or(IngestError::MalformedHeader("ipv6 extension"))?;
                next = ip[off];
                off += len;
            }
            // no next header, ICMPv6, ESP, ...
            58 | 59 => return Ok(Decoded::Skip(SkipReason::OtherIpProtocol)),
            _ => return Ok(Decoded::Skip(SkipReason::UnknownExtensionHeader)),
        }
        if off > end {
            return Err(IngestError::MalformedHeader("ipv6 extension"));
        }
    }
    decode_transport(
        frame,
        next,
        IpAddr::V6(Ipv6Addr::from(src)),
        IpAddr::V6(Ipv6Addr::from(dst)),
        &ip[off..end],
    )
}

fn decode_transport(
    frame: &RawFrame,
    proto: u8,
    src_ip: IpAddr,
    dst_ip: IpAddr,
    seg: &[u8],
) -> Result<Decoded, IngestError> {
    let (transport, src_port, dst_port, payload, tcp_flags) = match proto {
        IPPROTO_TCP => {
            if seg.len() < 20 {
                return Err(IngestError::MalformedHeader("tcp"));
            }
            let data_off = usize::from(seg[12] >> 4) * 4;
            if data_off < 20 || seg.len() < data_off {
                return Err(IngestError::MalformedHeader("tcp"));
            }
            let flags = TcpFlags::from_bits_truncate(u16::from_be_bytes([seg[12] & 0x01, seg[13]]));
            (
                Transport::Tcp,
                be16(seg, 0).unwrap_or_default(),
                be16(seg, 2).unwrap_or_default(),
                &seg[data_off..],
                Some(flags),
            )
        }
        IPPROTO_UDP => {
            if seg.len() < 8 {
                return Err(IngestError::MalformedHeader("udp"));
            }
            let udp_len = usize::from(be16(seg, 4).unwrap_or_default());
            let end = if udp_len >= 8 { udp_len.min(seg.len()) } else { seg.len() };
            (
                Transport::Udp,
                be16(seg, 0).unwrap_or_default(),
                be16(seg, 2).unwrap_or_default(),
                &seg[8..end],
                None,
            )
        }
        _ => return Ok(Decoded::Skip(SkipReason::OtherIpProtocol)),
    };
    Ok(Decoded::Packet(PacketRecord {
        ts_ns: frame.ts_ns,
        src_ip,
        dst_ip,
        src_port,
        dst_port,
        transport,
        packet_len: frame.original_len,
        payload: payload.to_vec(),
        tcp_flags,
    }))
}

/// Builds the frame bytes for a packet record. Inverse of [`decode_frame`]
/// for every record it produced; TCP sequence numbers are taken from `seq`.
pub fn encode_packet(record: &PacketRecord, linktype_id: u32, seq: u32, ack: u32) -> Vec<u8> {
    let mut l4 = Vec::with_capacity(20 + record.payload.len());
    l4.extend_from_slice(&record.src_port.to_be_bytes());
    l4.extend_from_slice(&record.dst_port.to_be_bytes());
    let proto = match record.transport {
        Transport::Tcp => {
            let flags = record.tcp_flags.unwrap_or(TcpFlags::ACK).bits();
            l4.extend_from_slice(&seq.to_be_bytes());
            l4.extend_from_slice(&ack.to_be_bytes());
            l4.push(0x50 | (flags >> 8) as u8);
            l4.push(flags as u8);
            l4.extend_from_slice(&65535u16.to_be_bytes());
            l4.extend_from_slice(&[0, 0, 0, 0]); // checksum, urgent
            IPPROTO_TCP
        }
        Transport::Udp => {
            l4.extend_from_slice(&((8 + record.payload.len()) as u16).to_be_bytes());
            l4.extend_from_slice(&[0, 0]);
            IPPROTO_UDP
        }
    };
    l4.extend_from_slice(&record.payload);

    let (ethertype, mut l3) = match (record.src_ip, record.dst_ip) {
        (IpAddr::V4(s), IpAddr::V4(d)) => {
            let mut h = Vec::with_capacity(20 + l4.len());
            h.extend_from_slice(&[0x45, 0]);
            h.extend_from_slice(&((20 + l4.len()) as u16).to_be_bytes());
            h.extend_from_slice(&[0, 0, 0x40, 0, 64, proto, 0, 0]);
            h.extend_from_slice(&s.octets());
            h.extend_from_slice(&d.octets());
            let sum = ipv4_checksum(&h);
            h[10..12].copy_from_slice(&sum.to_be_bytes());
            (ETHERTYPE_IPV4, h)
        }
        (s, d) => {
            let s = to_v6(s);
            let d = to_v6(d);
            let mut h = Vec::with_capacity(40 + l4.len());
            h.extend_from_slice(&[0x60, 0, 0, 0]);
            h.extend_from_slice(&(l4.len() as u16).to_be_bytes());
            h.extend_from_slice(&[proto, 64]);
            h.extend_from_slice(&s.octets());
            h.extend_from_slice(&d.octets());
            (ETHERTYPE_IPV6, h)
        }
    };
    l3.extend_from_slice(&l4);

    let mut frame = Vec::with_capacity(20 + l3.len());
    match linktype_id {
        LINKTYPE_LINUX_SLL => {
            frame.extend_from_slice(&[0, 4, 0, 1, 0, 6]); // outgoing, ARPHRD_ETHER
            frame.extend_from_slice(&[0x02, 0x42, 0xac, 0x11, 0, 0x02, 0, 0]);
            frame.extend_from_slice(&ethertype.to_be_bytes());
        }
        LINKTYPE_LINUX_SLL2 => {
            frame.extend_from_slice(&ethertype.to_be_bytes());
            frame.extend_from_slice(&[0, 0, 0, 0, 0, 2, 0, 1, 4, 6]);
            frame.extend_from_slice(&[0x02, 0x42, 0xac, 0x11, 0, 0x02, 0, 0]);
        }
        _ => {
            frame.extend_from_slice(&[0x02, 0x42, 0xac, 0x11, 0, 0x01]);
            frame.extend_from_slice(&[0x02, 0x42, 0xac, 0x11, 0, 0x02]);
            frame.extend_from_slice(&ethertype.to_be_bytes());
        }
    }
    frame.extend_from_slice(&l3);
    frame
}

fn to_v6(ip: IpAddr) -> Ipv6Addr {
    match ip {
        IpAddr::V4(v4) => v4.to_ipv6_mapped(),
        IpAddr::V6(v6) => v6,
    }
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header
        .chunks(2)
        .map(|c| u32::from(u16::from_be_bytes([c[0], *c.get(1).unwrap_or(&0)])))
        .sum();
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}
