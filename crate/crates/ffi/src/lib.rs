//! C ABI over the `apptraffic` library.
//!
//! Objects are opaque handles created by `*_open`/`*_parse` functions and
//! released with the matching `*_free`. Every fallible function returns an
//! [`ApptrafficStatus`]; on failure a description is available from
//! [`apptraffic_last_error`] on the same thread. Strings returned through
//! out-parameters are owned by the caller and released with
//! [`apptraffic_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use apptraffic::analytics::{protocol_distribution, temporal_histogram, Scope};
use apptraffic::classify::{classify_capture, AppTag, ClassifiedPacket, ProtocolCategory, TlsVersion};
use apptraffic::ingest::{load_capture, Transport};
use apptraffic::keylog::{key_coverage, parse_keylog, KeyIndex};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApptrafficStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    OutOfRange = 5,
    InvalidArgument = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApptrafficTransport {
    Tcp = 6,
    Udp = 17,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApptrafficProtocol {
    Http = 0,
    Do53 = 1,
    Dot = 2,
    Tls = 3,
    Quic = 4,
    OtherTcp = 5,
    OtherUdp = 6,
}

/// `None` for protocols that carry no TLS version.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApptrafficTlsVersion {
    None = 0,
    UnknownSsl = 1,
    Sslv2 = 2,
    Sslv3 = 3,
    Tls10 = 4,
    Tls11 = 5,
    Tls12 = 6,
    Tls13 = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApptrafficPacketInfo {
    pub ts_ns: u64,
    pub packet_len: u32,
    pub payload_len: u32,
    pub src_port: u16,
    pub dst_port: u16,
    pub transport: ApptrafficTransport,
    pub protocol: ApptrafficProtocol,
    pub tls_version: ApptrafficTlsVersion,
    pub is_app_data: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApptrafficCoverage {
    pub tls_flows: u64,
    pub flows_with_client_hello: u64,
    pub flows_without_client_hello: u64,
    pub flows_with_keys: u64,
    pub coverage_fraction: f64,
}

/// A decoded and classified capture.
pub struct ApptrafficCapture {
    packets: Vec<ClassifiedPacket>,
    skipped: u64,
    malformed: u64,
}

/// Parsed NSS key log.
pub struct ApptrafficKeyIndex {
    index: KeyIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: ApptrafficStatus, msg: impl Into<String>) -> ApptrafficStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> ApptrafficStatus) -> ApptrafficStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(ApptrafficStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, ApptrafficStatus> {
    if p.is_null() {
        return Err(fail(ApptrafficStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(ApptrafficStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn bytes_arg<'a>(data: *const u8, len: usize) -> Result<&'a [u8], ApptrafficStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(fail(ApptrafficStatus::NullArgument, "data is null"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($p:expr, $what:literal) => {
        if $p.is_null() {
            return fail(ApptrafficStatus::NullArgument, concat!($what, " is null"));
        }
    };
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn apptraffic_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn apptraffic_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn capture_from(bytes: &[u8]) -> Result<ApptrafficCapture, ApptrafficStatus> {
    let decoded = load_capture(bytes).map_err(|e| fail(ApptrafficStatus::Parse, e.to_string()))?;
    Ok(ApptrafficCapture {
        skipped: decoded.skipped_total() as u64,
        malformed: decoded.malformed as u64,
        packets: classify_capture(decoded.packets),
    })
}

unsafe fn store_capture(cap: ApptrafficCapture, out: *mut *mut ApptrafficCapture) -> ApptrafficStatus {
    *out = Box::into_raw(Box::new(cap));
    ApptrafficStatus::Ok
}

/// Reads, decodes and classifies a pcap file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn apptraffic_capture_open(
    path: *const c_char,
    out: *mut *mut ApptrafficCapture,
) -> ApptrafficStatus {
    guard(|| {
        non_null!(out, "out");
        *out = ptr::null_mut();
        let path = try_status!(str_arg(path, "path"));
        let bytes = match std::fs::read(Path::new(path)) {
            Ok(b) => b,
            Err(e) => return fail(ApptrafficStatus::Io, format!("{path}: {e}")),
        };
        let cap = try_status!(capture_from(&bytes));
        store_capture(cap, out)
    })
}

/// Decodes and classifies an in-memory pcap file.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn apptraffic_capture_from_bytes(
    data: *const u8,
    len: usize,
    out: *mut *mut ApptrafficCapture,
) -> ApptrafficStatus {
    guard(|| {
        non_null!(out, "out");
        *out = ptr::null_mut();
        let bytes = try_status!(bytes_arg(data, len));
        let cap = try_status!(capture_from(bytes));
        store_capture(cap, out)
    })
}

/// # Safety
/// `capture` must come from `apptraffic_capture_open*` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn apptraffic_capture_free(capture: *mut ApptrafficCapture) {
    if !capture.is_null() {
        drop(Box::from_raw(capture));
    }
}

/// Number of TCP/UDP packets, plus frames skipped (non-IP, fragments...) and
/// malformed frames.
///
/// # Safety
/// `capture` must be a live handle; out-pointers may be null to ignore.
#[no_mangle]
pub unsafe extern "C" fn apptraffic_capture_counts(
    capture: *const ApptrafficCapture,
    packets: *mut u64,
    skipped: *mut u64,
    malformed: *mut u64,
) -> ApptrafficStatus {
    guard(|| {
        non_null!(capture, "capture");
        let c = &*capture;
        for (p, v) in [(packets, c.packets.len() as u64), (skipped, c.skipped), (malformed, c.malformed)] {
            if !p.is_null() {
                *p = v;
            }
        }
        ApptrafficStatus::Ok
    })
}

fn tls_code(v: Option<TlsVersion>) -> ApptrafficTlsVersion {
    match v {
        None => ApptrafficTlsVersion::None,
        Some(TlsVersion::UnknownSsl) => ApptrafficTlsVersion::UnknownSsl,
        Some(TlsVersion::Sslv2) => ApptrafficTlsVersion::Sslv2,
        Some(TlsVersion::Sslv3) => ApptrafficTlsVersion::Sslv3,
        Some(TlsVersion::Tls1_0) => ApptrafficTlsVersion::Tls10,
        Some(TlsVersion::Tls1_1) => ApptrafficTlsVersion::Tls11,
        Some(TlsVersion::Tls1_2) => ApptrafficTlsVersion::Tls12,
        Some(TlsVersion::Tls1_3) => ApptrafficTlsVersion::Tls13,
    }
}

fn protocol_code(tag: AppTag) -> ApptrafficProtocol {
    match tag {
        AppTag::Http => ApptrafficProtocol::Http,
        AppTag::Do53 => ApptrafficProtocol::Do53,
        AppTag::DoT => ApptrafficProtocol::Dot,
        AppTag::Tls => ApptrafficProtocol::Tls,
        AppTag::Quic => ApptrafficProtocol::Quic,
        AppTag::OtherTcp => ApptrafficProtocol::OtherTcp,
        AppTag::OtherUdp => ApptrafficProtocol::OtherUdp,
    }
}

/// Classification of packet `index` (capture order).
///
/// # Safety
/// `capture` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn apptraffic_capture_packet(
    capture: *const ApptrafficCapture,
    index: usize,
    out: *mut ApptrafficPacketInfo,
) -> ApptrafficStatus {
    guard(|| {
        non_null!(capture, "capture");
        non_null!(out, "out");
        let Some(p) = (&*capture).packets.get(index) else {
            return fail(ApptrafficStatus::OutOfRange, format!("packet index {index} out of range"));
        };
        let r = &p.record;
        *out = ApptrafficPacketInfo {
            ts_ns: r.ts_ns,
            packet_len: r.packet_len,
            payload_len: r.payload.len() as u32,
            src_port: r.src_port,
            dst_port: r.dst_port,
            transport: match r.transport {
                Transport::Tcp => ApptrafficTransport::Tcp,
                Transport::Udp => ApptrafficTransport::Udp,
            },
            protocol: protocol_code(p.protocol.tag),
            tls_version: tls_code(p.protocol.tls_version),
            is_app_data: p.is_app_data,
        };
        ApptrafficStatus::Ok
    })
}

/// Packets in a distribution bucket such as ("TCP", "TLSv1.3") or ("UDP", "Do53").
///
/// # Safety
/// `capture` must be a live handle, `category` a NUL-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn apptraffic_capture_category_count(
    capture: *const ApptrafficCapture,
    transport: ApptrafficTransport,
    category: *const c_char,
    app_data_only: bool,
    out: *mut u64,
) -> ApptrafficStatus {
    guard(|| {
        non_null!(capture, "capture");
        non_null!(out, "out");
        let label = try_status!(str_arg(category, "category"));
        let Some(category) = ProtocolCategory::from_label(label) else {
            return fail(ApptrafficStatus::InvalidArgument, format!("unknown category {label}"));
        };
        let transport = match transport {
            ApptrafficTransport::Tcp => Transport::Tcp,
            ApptrafficTransport::Udp => Transport::Udp,
        };
        let scope = if app_data_only { Scope::AppDataOnly } else { Scope::AllPackets };
        *out = protocol_distribution(&(*capture).packets, scope).count(transport, category);
        ApptrafficStatus::Ok
    })
}

fn owned_string(s: String, out: *mut *mut c_char) -> ApptrafficStatus {
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            ApptrafficStatus::Ok
        }
        Err(_) => fail(ApptrafficStatus::InvalidArgument, "report contains NUL"),
    }
}

/// JSON object with the protocol distribution and temporal histogram.
/// Release the string with `apptraffic_string_free`.
///
/// # Safety
/// `capture` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn apptraffic_capture_summary_json(
    capture: *const ApptrafficCapture,
    app_data_only: bool,
    bin_width_s: f64,
    out: *mut *mut c_char,
) -> ApptrafficStatus {
    guard(|| {
        non_null!(capture, "capture");
        non_null!(out, "out");
        *out = ptr::null_mut();
        if !(bin_width_s.is_finite() && bin_width_s > 0.0) {
            return fail(ApptrafficStatus::InvalidArgument, "bin width must be positive");
        }
        let packets = &(*capture).packets;
        let scope = if app_data_only { Scope::AppDataOnly } else { Scope::AllPackets };
        let body = serde_json::json!({
            "distribution": protocol_distribution(packets, scope),
            "histogram": temporal_histogram(packets, bin_width_s),
        });
        owned_string(body.to_string(), out)
    })
}

/// # Safety
/// `s` must come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn apptraffic_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses NSS key log text. Malformed lines are counted, not fatal.
///
/// # Safety
/// `text` must point to `len` readable bytes and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn apptraffic_keylog_parse(
    text: *const u8,
    len: usize,
    out: *mut *mut ApptrafficKeyIndex,
) -> ApptrafficStatus {
    guard(|| {
        non_null!(out, "out");
        *out = ptr::null_mut();
        let bytes = try_status!(bytes_arg(text, len));
        let index = parse_keylog(&String::from_utf8_lossy(bytes));
        *out = Box::into_raw(Box::new(ApptrafficKeyIndex { index }));
        ApptrafficStatus::Ok
    })
}

/// # Safety
/// `index` must be a live handle; out-pointers may be null to ignore.
#[no_mangle]
pub unsafe extern "C" fn apptraffic_keylog_counts(
    index: *const ApptrafficKeyIndex,
    entries: *mut u64,
    malformed_lines: *mut u64,
) -> ApptrafficStatus {
    guard(|| {
        non_null!(index, "index");
        let i = &(*index).index;
        if !entries.is_null() {
            *entries = i.entry_count() as u64;
        }
        if !malformed_lines.is_null() {
            *malformed_lines = i.malformed_lines as u64;
        }
        ApptrafficStatus::Ok
    })
}

/// # Safety
/// `index` must come from `apptraffic_keylog_parse` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn apptraffic_keylog_free(index: *mut ApptrafficKeyIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Share of the capture's TLS flows with a ClientHello whose random is logged.
///
/// # Safety
/// Both handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn apptraffic_key_coverage(
    capture: *const ApptrafficCapture,
    index: *const ApptrafficKeyIndex,
    out: *mut ApptrafficCoverage,
) -> ApptrafficStatus {
    guard(|| {
        non_null!(capture, "capture");
        non_null!(index, "index");
        non_null!(out, "out");
        let c = key_coverage(&(*capture).packets, &(*index).index);
        *out = ApptrafficCoverage {
            tls_flows: c.tls_flows as u64,
            flows_with_client_hello: c.flows_with_client_hello as u64,
            flows_without_client_hello: c.flows_without_client_hello as u64,
            flows_with_keys: c.flows_with_keys as u64,
            coverage_fraction: c.coverage_fraction,
        };
        ApptrafficStatus::Ok
    })
}
