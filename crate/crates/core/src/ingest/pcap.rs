//! Classic libpcap file format.
//!
//! Layout: a 24-byte global header followed by records, each a 16-byte
//! record header and `incl_len` bytes of frame data. The magic number fixes
//! both the byte order and the timestamp resolution of the whole file.
//! pcapng is deliberately not accepted.

use super::IngestError;

pub const MAGIC_MICROS: u32 = 0xa1b2_c3d4;
pub const MAGIC_NANOS: u32 = 0xa1b2_3c4d;
const MAGIC_PCAPNG: u32 = 0x0a0d_0d0a;

pub const GLOBAL_HEADER_LEN: usize = 24;
pub const RECORD_HEADER_LEN: usize = 16;

pub const LINKTYPE_ETHERNET: u32 = 1;
pub const LINKTYPE_LINUX_SLL: u32 = 113;
pub const LINKTYPE_LINUX_SLL2: u32 = 276;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ByteOrder {
    Little,
    Big,
}

impl ByteOrder {
    fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        match self {
            ByteOrder::Little => u32::from_le_bytes(a),
            ByteOrder::Big => u32::from_be_bytes(a),
        }
    }

    fn put_u16(self, out: &mut Vec<u8>, v: u16) {
        match self {
            ByteOrder::Little => out.extend_from_slice(&v.to_le_bytes()),
            ByteOrder::Big => out.extend_from_slice(&v.to_be_bytes()),
        }
    }

    fn put_u32(self, out: &mut Vec<u8>, v: u32) {
        match self {
            ByteOrder::Little => out.extend_from_slice(&v.to_le_bytes()),
            ByteOrder::Big => out.extend_from_slice(&v.to_be_bytes()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TsResolution {
    Microsecond,
    Nanosecond,
}

/// One captured frame with its timestamp normalized to nanoseconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    pub ts_ns: u64,
    pub linktype_id: u32,
    pub captured_len: u32,
    pub original_len: u32,
    pub frame_bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureStream {
    pub byte_order: ByteOrder,
    pub ts_resolution: TsResolution,
    pub linktype_id: u32,
    pub snaplen: u32,
    pub frames: Vec<RawFrame>,
}

#[derive(Debug, Clone, Copy)]
struct GlobalHeader {
    byte_order: ByteOrder,
    ts_resolution: TsResolution,
    snaplen: u32,
    linktype_id: u32,
}

fn parse_global_header(bytes: &[u8]) -> Result<GlobalHeader, IngestError> {
    if bytes.len() < 4 {
        return Err(IngestError::TruncatedHeader);
    }
    let le = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let (byte_order, ts_resolution) = match le {
        MAGIC_MICROS => (ByteOrder::Little, TsResolution::Microsecond),
        MAGIC_NANOS => (ByteOrder::Little, TsResolution::Nanosecond),
        m if m.swap_bytes() == MAGIC_MICROS => (ByteOrder::Big, TsResolution::Microsecond),
        m if m.swap_bytes() == MAGIC_NANOS => (ByteOrder::Big, TsResolution::Nanosecond),
        MAGIC_PCAPNG => return Err(IngestError::UnknownMagic { magic: le, pcapng: true }),
        other => return Err(IngestError::UnknownMagic { magic: other, pcapng: false }),
    };
    if bytes.len() < GLOBAL_HEADER_LEN {
        return Err(IngestError::TruncatedHeader);
    }
    Ok(GlobalHeader {
        byte_order,
        ts_resolution,
        snaplen: byte_order.u32(&bytes[16..20]),
        // Upper 16 bits carry FCS flags in newer writers.
        linktype_id: byte_order.u32(&bytes[20..24]) & 0xffff,
    })
}

/// Streaming reader over an in-memory capture.
pub struct CaptureReader<'a> {
    header: GlobalHeader,
    rest: &'a [u8],
    frames_read: usize,
    failed: bool,
}

impl<'a> CaptureReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self, IngestError> {
        let header = parse_global_header(bytes)?;
        Ok(CaptureReader {
            header,
            rest: &bytes[GLOBAL_HEADER_LEN..],
            frames_read: 0,
            failed: false,
        })
    }

    pub fn byte_order(&self) -> ByteOrder {
        self.header.byte_order
    }

    pub fn ts_resolution(&self) -> TsResolution {
        self.header.ts_resolution
    }

    pub fn linktype_id(&self) -> u32 {
        self.header.linktype_id
    }

    pub fn snaplen(&self) -> u32 {
        self.header.snaplen
    }
}

impl Iterator for CaptureReader<'_> {
    type Item = Result<RawFrame, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.rest.is_empty() {
            return None;
        }
        let truncated = IngestError::TruncatedFrame {
            frames_read: self.frames_read,
        };
        if self.rest.len() < RECORD_HEADER_LEN {
            self.failed = true;
            return Some(Err(truncated));
        }
        let bo = self.header.byte_order;
        let ts_sec = u64::from(bo.u32(&self.rest[0..4]));
        let ts_frac = u64::from(bo.u32(&self.rest[4..8]));
        let incl_len = bo.u32(&self.rest[8..12]);
        let orig_len = bo.u32(&self.rest[12..16]);
        let body = &self.rest[RECORD_HEADER_LEN..];
        if (body.len() as u64) < u64::from(incl_len) {
            self.failed = true;
            return Some(Err(truncated));
        }
        let (frame, rest) = body.split_at(incl_len as usize);
        self.rest = rest;
        self.frames_read += 1;

        let ts_ns = match self.header.ts_resolution {
            TsResolution::Microsecond => ts_sec * 1_000_000_000 + ts_frac * 1_000,
            TsResolution::Nanosecond => ts_sec * 1_000_000_000 + ts_frac,
        };
        Some(Ok(RawFrame {
            ts_ns,
            linktype_id: self.header.linktype_id,
            captured_len: incl_len,
            // Some writers leave orig_len smaller than incl_len; keep the
            // record consistent instead of rejecting it.
            original_len: orig_len.max(incl_len),
            frame_bytes: frame.to_vec(),
        }))
    }
}

/// Reads a whole classic-pcap capture.
///
/// A record cut short by the end of the input is reported as
/// [`IngestError::TruncatedFrame`] carrying the number of complete frames.
pub fn read_capture(bytes: &[u8]) -> Result<CaptureStream, IngestError> {
    let reader = CaptureReader::new(bytes)?;
    let byte_order = reader.byte_order();
    let ts_resolution = reader.ts_resolution();
    let linktype_id = reader.linktype_id();
    let snaplen = reader.snaplen();
    let frames = reader.collect::<Result<Vec<_>, _>>()?;
    Ok(CaptureStream {
        byte_order,
        ts_resolution,
        linktype_id,
        snaplen,
        frames,
    })
}

/// Writes frames as a classic pcap file.
#[derive(Debug, Clone)]
pub struct CaptureWriter {
    pub byte_order: ByteOrder,
    pub ts_resolution: TsResolution,
    pub linktype_id: u32,
    pub snaplen: u32,
}

impl CaptureWriter {
    pub fn new(linktype_id: u32) -> Self {
        CaptureWriter {
            byte_order: ByteOrder::Little,
            ts_resolution: TsResolution::Microsecond,
            linktype_id,
            snaplen: 262_144,
        }
    }

    pub fn write_header(&self, out: &mut Vec<u8>) {
        let magic = match self.ts_resolution {
            TsResolution::Microsecond => MAGIC_MICROS,
            TsResolution::Nanosecond => MAGIC_NANOS,
        };
        let bo = self.byte_order;
        bo.put_u32(out, magic);
        bo.put_u16(out, 2);
        bo.put_u16(out, 4);
        bo.put_u32(out, 0); // thiszone
        bo.put_u32(out, 0); // sigfigs
        bo.put_u32(out, self.snaplen);
        bo.put_u32(out, self.linktype_id);
    }

    /// Appends one record. Timestamps are truncated to the file resolution.
    pub fn write_record(&self, out: &mut Vec<u8>, ts_ns: u64, frame: &[u8], original_len: u32) {
        let bo = self.byte_order;
        let secs = ts_ns / 1_000_000_000;
        let frac = ts_ns % 1_000_000_000;
        let frac = match self.ts_resolution {
            TsResolution::Microsecond => frac / 1_000,
            TsResolution::Nanosecond => frac,
        };
        bo.put_u32(out, secs as u32);
        bo.put_u32(out, frac as u32);
        bo.put_u32(out, frame.len() as u32);
        bo.put_u32(out, original_len.max(frame.len() as u32));
        out.extend_from_slice(frame);
    }

    pub fn write_all<'f>(&self, frames: impl IntoIterator<Item = (u64, &'f [u8])>) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_header(&mut out);
        for (ts, frame) in frames {
            self.write_record(&mut out, ts, frame, frame.len() as u32);
        }
        out
    }
}
