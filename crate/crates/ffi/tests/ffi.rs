use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use apptraffic::synth::{presets, synthesize};
use apptraffic_ffi::*;

fn background() -> (Vec<u8>, String) {
    let cap = synthesize(&presets::background()).unwrap().remove(0);
    (cap.pcap, cap.keylog)
}

fn open(bytes: &[u8]) -> *mut ApptrafficCapture {
    let mut cap = ptr::null_mut();
    let status = unsafe { apptraffic_capture_from_bytes(bytes.as_ptr(), bytes.len(), &mut cap) };
    assert_eq!(status, ApptrafficStatus::Ok);
    assert!(!cap.is_null());
    cap
}

fn last_error() -> String {
    let p = apptraffic_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn background_counts_through_the_c_abi() {
    let (pcap, _) = background();
    let cap = open(&pcap);
    let mut packets = 0;
    let status = unsafe { apptraffic_capture_counts(cap, &mut packets, ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(status, ApptrafficStatus::Ok);
    assert_eq!(packets, 526);
    for (transport, label, expected) in [
        (ApptrafficTransport::Udp, "Do53", 14),
        (ApptrafficTransport::Tcp, "HTTP", 4),
        (ApptrafficTransport::Tcp, "TLSv1.3", 489),
        (ApptrafficTransport::Tcp, "DoT", 19),
    ] {
        let label = CString::new(label).unwrap();
        let mut n = 0;
        let status = unsafe { apptraffic_capture_category_count(cap, transport, label.as_ptr(), false, &mut n) };
        assert_eq!(status, ApptrafficStatus::Ok);
        assert_eq!(n, expected);
    }
    unsafe { apptraffic_capture_free(cap) };
}

#[test]
fn packet_accessor_and_bounds() {
    let (pcap, _) = background();
    let cap = open(&pcap);
    let mut info = std::mem::MaybeUninit::<ApptrafficPacketInfo>::uninit();
    assert_eq!(unsafe { apptraffic_capture_packet(cap, 0, info.as_mut_ptr()) }, ApptrafficStatus::Ok);
    let info = unsafe { info.assume_init() };
    assert_eq!(info.transport, ApptrafficTransport::Udp);
    assert_eq!(info.protocol, ApptrafficProtocol::Do53);
    assert_eq!(info.tls_version, ApptrafficTlsVersion::None);
    assert!(info.is_app_data);
    let mut other = info;
    let status = unsafe { apptraffic_capture_packet(cap, 10_000, &mut other) };
    assert_eq!(status, ApptrafficStatus::OutOfRange);
    assert!(last_error().contains("out of range"));
    unsafe { apptraffic_capture_free(cap) };
}

#[test]
fn summary_json_round_trips() {
    let (pcap, _) = background();
    let cap = open(&pcap);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { apptraffic_capture_summary_json(cap, false, 10.0, &mut s) }, ApptrafficStatus::Ok);
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { apptraffic_string_free(s) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["distribution"]["total"], 526);
    let bins = v["histogram"]["bin_count"].as_u64().unwrap();
    assert!(bins > 0 && bins <= 30);
    let status = unsafe { apptraffic_capture_summary_json(cap, false, 0.0, &mut s) };
    assert_eq!(status, ApptrafficStatus::InvalidArgument);
    assert!(s.is_null());
    unsafe { apptraffic_capture_free(cap) };
}

#[test]
fn keylog_coverage() {
    let (pcap, keylog) = background();
    let cap = open(&pcap);
    let mut index = ptr::null_mut();
    let text = format!("{keylog}garbage line\n");
    assert_eq!(unsafe { apptraffic_keylog_parse(text.as_ptr(), text.len(), &mut index) }, ApptrafficStatus::Ok);
    let (mut entries, mut bad) = (0, 0);
    unsafe { apptraffic_keylog_counts(index, &mut entries, &mut bad) };
    assert_eq!((entries, bad), (30, 1));
    let mut cov = ApptrafficCoverage {
        tls_flows: 0,
        flows_with_client_hello: 0,
        flows_without_client_hello: 0,
        flows_with_keys: 0,
        coverage_fraction: 0.0,
    };
    assert_eq!(unsafe { apptraffic_key_coverage(cap, index, &mut cov) }, ApptrafficStatus::Ok);
    assert_eq!(cov.flows_with_client_hello, 6);
    assert_eq!(cov.coverage_fraction, 1.0);
    unsafe {
        apptraffic_keylog_free(index);
        apptraffic_capture_free(cap);
    }
}

#[test]
fn errors_are_reported_not_raised() {
    let mut cap = ptr::null_mut();
    let pcapng = [0x0a, 0x0d, 0x0d, 0x0a, 0, 0, 0, 0];
    let status = unsafe { apptraffic_capture_from_bytes(pcapng.as_ptr(), pcapng.len(), &mut cap) };
    assert_eq!(status, ApptrafficStatus::Parse);
    assert!(cap.is_null());
    assert!(last_error().contains("pcapng"));

    let status = unsafe { apptraffic_capture_from_bytes(ptr::null(), 4, &mut cap) };
    assert_eq!(status, ApptrafficStatus::NullArgument);
    let status = unsafe { apptraffic_capture_open(ptr::null(), &mut cap) };
    assert_eq!(status, ApptrafficStatus::NullArgument);

    let missing = CString::new("/nonexistent/capture.pcap").unwrap();
    let status = unsafe { apptraffic_capture_open(missing.as_ptr(), &mut cap) };
    assert_eq!(status, ApptrafficStatus::Io);

    let bad_utf8 = [0xffu8, 0xfe, 0];
    let status = unsafe { apptraffic_capture_open(bad_utf8.as_ptr().cast(), &mut cap) };
    assert_eq!(status, ApptrafficStatus::InvalidUtf8);

    unsafe {
        apptraffic_capture_free(ptr::null_mut());
        apptraffic_keylog_free(ptr::null_mut());
        apptraffic_string_free(ptr::null_mut());
    }
}

#[test]
fn open_from_file() {
    let (pcap, _) = background();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bg.pcap");
    std::fs::write(&path, pcap).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut cap = ptr::null_mut();
    assert_eq!(unsafe { apptraffic_capture_open(cpath.as_ptr(), &mut cap) }, ApptrafficStatus::Ok);
    unsafe { apptraffic_capture_free(cap) };
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(apptraffic_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/apptraffic.h");
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let available = Command::new(compiler).arg("--version").output().is_ok_and(|o| o.status.success());
        if !available {
            eprintln!("{compiler} not found, skipping header check");
            continue;
        }
        let out = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, header])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    let available = Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success());
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().and_then(|d| d.parent()).unwrap().join("libapptraffic_ffi.a");
    if !available || !lib.exists() {
        eprintln!("cc or {} not found, skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let prog = dir.path().join("smoke");
    let manifest = env!("CARGO_MANIFEST_DIR");
    let out = Command::new("cc")
        .arg(format!("{manifest}/tests/c/smoke.c"))
        .arg(format!("-I{manifest}/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&prog)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let (pcap, _) = background();
    let capture = dir.path().join("bg.pcap");
    std::fs::write(&capture, pcap).unwrap();
    let run = Command::new(&prog).arg(&capture).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "526 489 14");
}
