#![allow(dead_code)]

pub mod props;

use std::net::{IpAddr, Ipv4Addr};

use apptraffic::analytics::{CaptureData, DatasetInput};
use apptraffic::classify::{classify_capture, AppProtocol, ClassifiedPacket, Direction, FlowKey};
use apptraffic::ingest::{load_capture, PacketRecord, TcpFlags, Transport};
use apptraffic::synth::{synthesize, FixtureSpec, SynthCapture};

pub fn classify_bytes(pcap: &[u8]) -> Vec<ClassifiedPacket> {
    classify_capture(load_capture(pcap).expect("synthesized capture decodes").packets)
}

pub fn dataset(captures: &[SynthCapture]) -> DatasetInput {
    DatasetInput {
        captures: captures
            .iter()
            .map(|c| CaptureData {
                label: c.label.clone(),
                packets: classify_bytes(&c.pcap),
            })
            .collect(),
    }
}

pub fn dataset_from_spec(spec: &FixtureSpec) -> DatasetInput {
    dataset(&synthesize(spec).expect("spec is valid"))
}

/// A classified packet with the given tag, for analytics tests that do not
/// need real payloads.
pub fn fake_packet(ts_ns: u64, transport: Transport, protocol: AppProtocol, is_app_data: bool, port: u16) -> ClassifiedPacket {
    let record = PacketRecord {
        ts_ns,
        src_ip: IpAddr::V4(Ipv4Addr::new(10, 0, 2, 16)),
        dst_ip: IpAddr::V4(Ipv4Addr::new(192, 0, 2, 1)),
        src_port: 40_000,
        dst_port: port,
        transport,
        packet_len: 100,
        payload: Vec::new(),
        tcp_flags: (transport == Transport::Tcp).then_some(TcpFlags::ACK),
    };
    ClassifiedPacket {
        flow: FlowKey::of(&record),
        record,
        protocol,
        is_app_data,
        direction: Direction::FromInitiator,
        client_random: None,
    }
}

/// Removes one extension from a single-record ServerHello or ClientHello and
/// fixes up the record, handshake and extension-block lengths. Every other
/// byte is left as it was.
pub fn strip_extension(record: &[u8], ext_type: u16) -> Vec<u8> {
    let body = &record[5..];
    assert!(body[0] == 1 || body[0] == 2, "not a hello");
    let client = body[0] == 1;
    let msg = &body[4..];
    // version + random + session id
    let mut at = 2 + 32;
    at += 1 + msg[at] as usize;
    if client {
        at += 2 + u16::from_be_bytes([msg[at], msg[at + 1]]) as usize;
        at += 1 + msg[at] as usize;
    } else {
        at += 3;
    }
    let ext_block = at;
    let ext_len = u16::from_be_bytes([msg[at], msg[at + 1]]) as usize;
    let mut exts = Vec::new();
    let mut i = at + 2;
    while i < ext_block + 2 + ext_len {
        let t = u16::from_be_bytes([msg[i], msg[i + 1]]);
        let len = u16::from_be_bytes([msg[i + 2], msg[i + 3]]) as usize;
        if t != ext_type {
            exts.extend_from_slice(&msg[i..i + 4 + len]);
        }
        i += 4 + len;
    }
    let mut new_msg = msg[..ext_block].to_vec();
    new_msg.extend_from_slice(&(exts.len() as u16).to_be_bytes());
    new_msg.extend_from_slice(&exts);
    let mut out = record[..3].to_vec();
    out.extend_from_slice(&((new_msg.len() + 4) as u16).to_be_bytes());
    out.push(body[0]);
    out.extend_from_slice(&(new_msg.len() as u32).to_be_bytes()[1..]);
    out.extend_from_slice(&new_msg);
    out
}

/// Classifies a four-packet TCP flow: ClientHello, ServerHello, then one
/// app-data record each way.
pub fn handshake_flow(client_hello: &[u8], server_hello: &[u8], port: u16) -> Vec<ClassifiedPacket> {
    use apptraffic::classify::tls::build;
    let client = IpAddr::V4(Ipv4Addr::new(10, 0, 2, 16));
    let server = IpAddr::V4(Ipv4Addr::new(203, 0, 113, 7));
    let mk = |i: u64, up: bool, payload: Vec<u8>| PacketRecord {
        ts_ns: 1_000_000_000 + i * 1_000_000,
        src_ip: if up { client } else { server },
        dst_ip: if up { server } else { client },
        src_port: if up { 51_000 } else { port },
        dst_port: if up { port } else { 51_000 },
        transport: Transport::Tcp,
        packet_len: 54 + payload.len() as u32,
        payload,
        tcp_flags: Some(TcpFlags::ACK | TcpFlags::PSH),
    };
    classify_capture(vec![
        mk(0, true, client_hello.to_vec()),
        mk(1, false, server_hello.to_vec()),
        mk(2, true, build::app_data(0x0303, &[0x42; 64])),
        mk(3, false, build::app_data(0x0303, &[0x24; 200])),
    ])
}
