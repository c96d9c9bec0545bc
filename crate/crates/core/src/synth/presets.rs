//! Fixture specs calibrated to published dataset statistics.

use super::{AppSpec, CaptureSpec, FixtureSpec, FlowSpec, Profile};
use crate::ingest::LINKTYPE_LINUX_SLL;

pub const PRESET_NAMES: [&str; 5] = ["background", "evolution-a", "evolution-b", "ppm-a", "ppm-b"];

pub fn by_name(name: &str) -> Option<FixtureSpec> {
    Some(match name {
        "background" => background(),
        "evolution-a" => evolution_a(),
        "evolution-b" => evolution_b(),
        "ppm-a" => ppm_a(),
        "ppm-b" => ppm_b(),
        _ => return None,
    })
}

fn spec(apps: Vec<AppSpec>) -> FixtureSpec {
    FixtureSpec {
        seed: 2025,
        linktype: LINKTYPE_LINUX_SLL,
        apps,
    }
}

fn app(name: &str, duration_s: u64, flows: Vec<FlowSpec>) -> AppSpec {
    AppSpec {
        app_name: name.to_string(),
        captures: vec![CaptureSpec {
            duration_s,
            date: None,
            flows,
        }],
    }
}

fn flow(profile: Profile, n: u64, start: f64, rate: f64) -> FlowSpec {
    FlowSpec::new(profile, n, start, rate)
}

fn dns(n: u64, start: f64, names: &[&str]) -> FlowSpec {
    FlowSpec {
        qnames: names.iter().map(|s| s.to_string()).collect(),
        ..FlowSpec::new(Profile::Do53, n, start, 4.0)
    }
}

/// Five minutes of an idle device: connectivity checks over HTTP and Do53
/// early on, Google services over TLS 1.3, DoT to the public resolver late.
pub fn background() -> FixtureSpec {
    spec(vec![app(
        "android.background",
        300,
        vec![
            dns(8, 0.5, &["connectivitycheck.gstatic.com"]),
            dns(6, 2.0, &["www.google.com"]),
            flow(Profile::ConnectivityHttp, 4, 1.0, 4.0),
            flow(Profile::Tls13, 150, 3.0, 5.0),
            flow(Profile::Tls13, 120, 20.0, 4.0),
            flow(Profile::Tls13, 100, 60.0, 2.0),
            flow(Profile::Tls13, 111, 120.0, 1.0),
            flow(Profile::DoT, 2, 210.0, 2.0),
            flow(Profile::DoT, 13, 250.0, 2.0),
        ],
    )])
}

const EVOLUTION_DURATION_S: u64 = 300;
const EVOLUTION_RATE: f64 = 50.0;

fn evo(name: &str, flows: &[(Profile, u64)]) -> AppSpec {
    let flows = flows
        .iter()
        .enumerate()
        .map(|(i, &(p, n))| flow(p, n, i as f64 * 2.0, EVOLUTION_RATE))
        .collect();
    app(name, EVOLUTION_DURATION_S, flows)
}

/// Older dataset of the encryption/DNS evolution pair. Over the common apps
/// its TCP-encrypted app data splits 67/777/142/14 (TLS 1.3 / TLS 1.2 incl.
/// DoT / SSL / SSLv2) and its DNS 910 Do53 to 90 DoT.
pub fn evolution_a() -> FixtureSpec {
    use Profile::*;
    spec(vec![
        evo("com.facebook.katana", &[(Tls13, 67), (Tls12, 300), (UnknownSsl, 142)]),
        evo("com.instagram.android", &[(Tls12, 200), (Ssl2, 14)]),
        evo("com.reddit.frontpage", &[(Tls12, 187), (DoT12, 90), (Do53, 500)]),
        evo("com.chess", &[(Do53, 410), (QuicV1, 50)]),
        evo("com.ted.android", &[(QuicV1, 30)]),
        evo("app.sachnoi", &[]),
        evo("com.legacy.onlyina", &[(Do53, 5000), (Tls10, 3000), (QuicV1, 500)]),
    ])
}

/// Newer dataset of the pair: TCP-encrypted 9000/960/40 (TLS 1.3 incl. DoT /
/// TLS 1.2 / TLS 1.0) and DNS 189 Do53 to 811 DoT.
pub fn evolution_b() -> FixtureSpec {
    use Profile::*;
    spec(vec![
        evo("com.facebook.katana", &[(Tls13, 4000), (Tls12, 500)]),
        evo("com.instagram.android", &[(Tls13, 3000), (QuicV1, 400)]),
        evo("com.reddit.frontpage", &[(Tls13, 1189), (DoT, 811), (Tls12, 460), (Do53, 189)]),
        evo("com.chess", &[(QuicV1, 200), (Tls10, 40)]),
        evo("com.ted.android", &[]),
        evo("app.sachnoi", &[]),
        evo("com.newer.onlyinb", &[(Do53, 3000), (Tls12, 2000)]),
    ])
}

/// Table rows: (app, newer-dataset ppm, older-dataset ppm).
pub const PPM_TABLE: [(&str, u64, u64); 10] = [
    ("app.sachnoi", 2278, 5626),
    ("com.facebook.katana", 20310, 6385),
    ("com.instagram.android", 8081, 10547),
    ("com.reddit.frontpage", 4047, 18142),
    ("com.skype.raider", 1588, 71584),
    ("com.soundcloud.android", 7988, 3424),
    ("com.spotify.music", 2248, 2443),
    ("fm.castbox.audiobook.radio.podcast", 3166, 14728),
    ("myradio.radio.fmradio.liveradio.radiostation", 3583, 24067),
    ("vn.vtv.vtvgo", 4516, 50444),
];
pub const PPM_CHESS: (&str, u64, u64) = ("com.chess", 7530, 1000);
pub const PPM_COMMON_APPS: usize = 50;
pub const PPM_MEAN_NEWER: u64 = 4019;
pub const PPM_MEAN_OLDER: u64 = 21288;

/// One capture of `ppm` packets per minute with no handshake overhead.
fn rate_app(name: &str, ppm: u64, duration_s: u64) -> AppSpec {
    let n = ppm * duration_s / 60;
    let rate = n.max(1) as f64 / duration_s as f64;
    app(name, duration_s, vec![flow(Profile::UnknownSsl, n, 0.0, rate)])
}

/// Fills the remaining common apps so the unweighted per-app mean is exactly
/// `mean`. All but the last filler use 6 s captures to keep packet counts low.
fn ppm_dataset(pick: impl Fn(&(&str, u64, u64)) -> u64, mean: u64) -> FixtureSpec {
    let fixed: Vec<(&str, u64)> = PPM_TABLE
        .iter()
        .chain(std::iter::once(&PPM_CHESS))
        .map(|r| (r.0, pick(r)))
        .collect();
    let fillers = (PPM_COMMON_APPS - fixed.len()) as u64;
    let remaining = mean * PPM_COMMON_APPS as u64 - fixed.iter().map(|r| r.1).sum::<u64>();
    let each = remaining / fillers / 10 * 10;
    let mut apps: Vec<AppSpec> = fixed.iter().map(|&(name, ppm)| rate_app(name, ppm, 60)).collect();
    for i in 0..fillers {
        let name = format!("com.fixture.filler{i:02}");
        if i + 1 == fillers {
            apps.push(rate_app(&name, remaining - each * (fillers - 1), 60));
        } else {
            apps.push(rate_app(&name, each, 6));
        }
    }
    spec(apps)
}

pub fn ppm_a() -> FixtureSpec {
    ppm_dataset(|r| r.2, PPM_MEAN_OLDER)
}

pub fn ppm_b() -> FixtureSpec {
    ppm_dataset(|r| r.1, PPM_MEAN_NEWER)
}
