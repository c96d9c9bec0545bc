//! Capture ingestion: classic pcap files down to TCP/UDP packet records.

mod decode;
mod pcap;

use std::collections::BTreeMap;

pub use decode::{decode_frame, encode_packet, Decoded, PacketRecord, SkipReason, TcpFlags, Transport};
pub use pcap::{
    read_capture, ByteOrder, CaptureReader, CaptureStream, CaptureWriter, RawFrame, TsResolution,
    LINKTYPE_ETHERNET, LINKTYPE_LINUX_SLL, LINKTYPE_LINUX_SLL2, MAGIC_MICROS, MAGIC_NANOS,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("not a classic pcap file (magic {magic:#010x}){}", if *.pcapng { ", pcapng is not supported" } else { "" })]
    UnknownMagic { magic: u32, pcapng: bool },
    #[error("pcap global header is truncated")]
    TruncatedHeader,
    #[error("pcap record truncated after {frames_read} complete frames")]
    TruncatedFrame { frames_read: usize },
    #[error("unsupported link-layer type {0}")]
    UnsupportedLinkType(u32),
    #[error("malformed {0} header")]
    MalformedHeader(&'static str),
}

/// Packets decoded from one capture plus what was dropped on the way.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecodedCapture {
    pub packets: Vec<PacketRecord>,
    pub skipped: BTreeMap<SkipReason, usize>,
    pub malformed: usize,
}

impl DecodedCapture {
    pub fn skipped_total(&self) -> usize {
        self.skipped.values().sum()
    }

    pub fn frames_total(&self) -> usize {
        self.packets.len() + self.skipped_total() + self.malformed
    }
}

/// Decodes every frame of a stream. Only an unsupported link type aborts;
/// malformed frames are tallied.
pub fn decode_stream(stream: &CaptureStream) -> Result<DecodedCapture, IngestError> {
    let mut out = DecodedCapture::default();
    for frame in &stream.frames {
        match decode_frame(frame, stream.linktype_id) {
            Ok(Decoded::Packet(p)) => out.packets.push(p),
            Ok(Decoded::Skip(reason)) => *out.skipped.entry(reason).or_default() += 1,
            Err(IngestError::MalformedHeader(_)) => out.malformed += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// `read_capture` followed by `decode_stream`.
pub fn load_capture(bytes: &[u8]) -> Result<DecodedCapture, IngestError> {
    decode_stream(&read_capture(bytes)?)
}
