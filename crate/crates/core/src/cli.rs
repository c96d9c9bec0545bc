//! `apptraffic` command-line interface.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::analytics::{
    compare_datasets, dataset_mean_ppm, histogram_between, mean_ppm_per_app, ppm_over, protocol_distribution,
    temporal_histogram, CaptureData, CompareError, CompareOptions, DatasetInput, PpmRecord, ProtocolDistribution,
    Scope, TemporalHistogram, DEFAULT_BIN_WIDTH_S,
};
use crate::classify::{classify_capture, ClassifiedPacket};
use crate::dataset::{
    attribute_background, parse_capture_filename, scan_directory, truncate_packets, AttributionMode, BackgroundTag,
    CaptureLabel, DatasetManifest, LabelFormat,
};
use crate::ingest::{decode_stream, read_capture, IngestError, SkipReason};
use crate::keylog::{key_coverage, parse_keylog, CoverageReport};
use crate::report::{read_input, FeatureRow, InputDigest, ReportEnvelope, FEATURE_COLUMNS};
use crate::synth::{presets, write_fixtures, FixtureSpec, SynthError};

pub const OUT_DIR_ENV: &str = "APPTRAFFIC_OUT_DIR";

pub const EXIT_IO: u8 = 2;
pub const EXIT_DOMAIN: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "apptraffic", version, about = "Classify and compare labeled mobile app traffic captures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-packet features, protocol distribution and temporal histogram of one capture.
    Analyze(AnalyzeArgs),
    /// Labeled dataset directories.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Compare two dataset directories over their common apps.
    Compare(CompareArgs),
    /// Fraction of TLS flows whose ClientHello random appears in a key log.
    Keycov(KeycovArgs),
    /// Attribute background OS traffic in a capture.
    Baseline(BaselineArgs),
    /// Generate labeled captures and key logs from a fixture spec.
    Synth(SynthArgs),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Pair captures with key logs and report naming problems.
    Scan(ScanArgs),
    /// Per-app packet rates and the dataset protocol distribution.
    Stats(StatsArgs),
}

#[derive(Debug, Args, Clone)]
pub struct OutputArgs {
    /// Write the JSON report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
    /// Also write the command's CSV table here.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct FormatArgs {
    /// strftime pattern of the date field in file names.
    #[arg(long, value_name = "PATTERN", default_value = crate::dataset::DEFAULT_DATE_PATTERN)]
    pub date_format: String,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub capture: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub keylog: Option<PathBuf>,
    /// Count only packets carrying application data.
    #[arg(long)]
    pub app_data_only: bool,
    /// Histogram bin width in seconds.
    #[arg(long, value_name = "SECONDS", default_value_t = DEFAULT_BIN_WIDTH_S, value_parser = positive_f64)]
    pub bins: f64,
    #[arg(long, value_name = "MINUTES", value_parser = positive_f64)]
    pub truncate_min: Option<f64>,
    /// Omit the per-packet feature table from the JSON body.
    #[arg(long)]
    pub summary_only: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    pub dir: PathBuf,
    #[command(flatten)]
    pub format: FormatArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    All,
    AppData,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Scope {
        match s {
            ScopeArg::All => Scope::AllPackets,
            ScopeArg::AppData => Scope::AppDataOnly,
        }
    }
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub dir: PathBuf,
    #[arg(long, value_name = "MINUTES", value_parser = positive_f64)]
    pub truncate_min: Option<f64>,
    /// Packets counted by the protocol distribution.
    #[arg(long, value_enum, default_value_t = ScopeArg::AppData)]
    pub scope: ScopeArg,
    /// Packets counted by packets-per-minute.
    #[arg(long, value_enum, default_value_t = ScopeArg::All)]
    pub ppm_scope: ScopeArg,
    #[command(flatten)]
    pub format: FormatArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Older dataset.
    pub dir_a: PathBuf,
    /// Newer dataset.
    pub dir_b: PathBuf,
    /// Minutes kept from the start of every capture of both datasets.
    #[arg(long, value_name = "MINUTES", value_parser = positive_f64)]
    pub truncate_min: Option<f64>,
    /// Overrides --truncate-min for dataset A.
    #[arg(long, value_name = "MINUTES", value_parser = positive_f64)]
    pub truncate_min_a: Option<f64>,
    /// Overrides --truncate-min for dataset B.
    #[arg(long, value_name = "MINUTES", value_parser = positive_f64)]
    pub truncate_min_b: Option<f64>,
    /// Restrict dataset-level statistics to apps present in both datasets.
    #[arg(long, value_name = "BOOL", default_value_t = true, action = clap::ArgAction::Set)]
    pub common_only: bool,
    #[arg(long, value_enum, default_value_t = ScopeArg::AppData)]
    pub scope: ScopeArg,
    #[arg(long, value_enum, default_value_t = ScopeArg::All)]
    pub ppm_scope: ScopeArg,
    #[command(flatten)]
    pub format: FormatArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct KeycovArgs {
    pub capture: PathBuf,
    pub keylog: PathBuf,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    pub capture: PathBuf,
    #[arg(long, value_name = "SECONDS", default_value_t = DEFAULT_BIN_WIDTH_S, value_parser = positive_f64)]
    pub bins: f64,
    /// Treat the capture as an app capture: DoT is not attributed to the OS.
    #[arg(long)]
    pub app_mode: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Fixture spec (JSON).
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    pub spec: Option<PathBuf>,
    /// Built-in calibrated spec instead of a file.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(presets::PRESET_NAMES))]
    pub preset: Option<String>,
    /// Output directory; defaults to $APPTRAFFIC_OUT_DIR.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print the resolved spec instead of generating files.
    #[arg(long)]
    pub emit_spec: bool,
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => EXIT_IO,
            CliError::Domain(_) => EXIT_DOMAIN,
            CliError::Usage(_) => EXIT_USAGE,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn ingest_err(path: &Path, e: IngestError) -> CliError {
    CliError::Domain(format!("{}: {e}", path.display()))
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Spec { .. } => CliError::Usage(e.to_string()),
            SynthError::Io { .. } => CliError::Io(e.to_string()),
        }
    }
}

/// Parses arguments and runs; the returned code is the process exit status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("apptraffic: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Dataset(DatasetCommand::Scan(a)) => cmd_dataset_scan(a),
        Command::Dataset(DatasetCommand::Stats(a)) => cmd_dataset_stats(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Keycov(a) => cmd_keycov(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Relative output paths are placed under $APPTRAFFIC_OUT_DIR when it is set.
fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let path = resolve_out(path);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))
}

fn emit<B: Serialize>(
    out: &OutputArgs,
    envelope: &ReportEnvelope<B>,
    csv: Option<(&[&str], Vec<Vec<String>>)>,
) -> Result<(), CliError> {
    let json = envelope.to_json();
    match &out.json {
        Some(path) => write_file(path, json.as_bytes())?,
        None if out.csv.is_none() => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(json.as_bytes())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))?;
        }
        None => {}
    }
    if let (Some(path), Some((header, rows))) = (&out.csv, csv) {
        write_file(path, &render_csv(header, &rows)?)?;
    }
    Ok(())
}

pub fn render_csv(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Io(format!("csv: {e}"));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::Io(format!("csv: {e}")))
}

#[derive(Debug, Clone, Serialize)]
pub struct CaptureSummary {
    pub path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<CaptureLabel>,
    pub linktype: u32,
    pub frames: usize,
    pub packets: usize,
    pub skipped: BTreeMap<String, usize>,
    pub malformed: usize,
}

struct LoadedCapture {
    summary: CaptureSummary,
    digest: InputDigest,
    packets: Vec<ClassifiedPacket>,
}

fn skip_name(r: SkipReason) -> &'static str {
    match r {
        SkipReason::NonIp => "non_ip",
        SkipReason::OtherIpProtocol => "other_ip_protocol",
        SkipReason::Fragment => "fragment",
        SkipReason::UnknownExtensionHeader => "unknown_extension_header",
    }
}

fn load(path: &Path, label: Option<CaptureLabel>) -> Result<LoadedCapture, CliError> {
    let (bytes, digest) = read_input(path).map_err(|e| io_err(path, e))?;
    let stream = read_capture(&bytes).map_err(|e| ingest_err(path, e))?;
    let decoded = decode_stream(&stream).map_err(|e| ingest_err(path, e))?;
    let label = label.or_else(|| path.file_name()?.to_str().and_then(|n| parse_capture_filename(n).ok()));
    let summary = CaptureSummary {
        path: path.display().to_string(),
        label,
        linktype: stream.linktype_id,
        frames: decoded.frames_total(),
        packets: decoded.packets.len(),
        skipped: decoded.skipped.iter().map(|(r, n)| (skip_name(*r).to_string(), *n)).collect(),
        malformed: decoded.malformed,
    };
    Ok(LoadedCapture {
        summary,
        digest,
        packets: classify_capture(decoded.packets),
    })
}

fn load_keylog(path: &Path) -> Result<(crate::keylog::KeyIndex, InputDigest), CliError> {
    let (bytes, digest) = read_input(path).map_err(|e| io_err(path, e))?;
    Ok((parse_keylog(&String::from_utf8_lossy(&bytes)), digest))
}

#[derive(Debug, Serialize)]
pub struct KeyCoverageBody {
    #[serde(flatten)]
    pub coverage: CoverageReport,
    pub keylog_entries: usize,
    pub keylog_malformed_lines: usize,
}

#[derive(Debug, Serialize)]
pub struct AnalyzeBody {
    pub capture: CaptureSummary,
    pub truncate_min: Option<f64>,
    pub packets_per_minute: f64,
    pub distribution: ProtocolDistribution,
    pub histogram: TemporalHistogram,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key_coverage: Option<KeyCoverageBody>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<FeatureRow>>,
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let loaded = load(&a.capture, None)?;
    let mut inputs = vec![loaded.digest];
    let packets = match a.truncate_min {
        Some(m) => truncate_packets(&loaded.packets, m),
        None => loaded.packets,
    };
    let scope = if a.app_data_only { Scope::AppDataOnly } else { Scope::AllPackets };
    let key_coverage = match &a.keylog {
        Some(path) => {
            let (index, digest) = load_keylog(path)?;
            inputs.push(digest);
            Some(KeyCoverageBody {
                coverage: key_coverage(&packets, &index),
                keylog_entries: index.entry_count(),
                keylog_malformed_lines: index.malformed_lines,
            })
        }
        None => None,
    };
    let duration = loaded.summary.label.as_ref().map(|l| {
        let d = l.duration_s as f64;
        a.truncate_min.map_or(d, |m| d.min(m * 60.0))
    });
    let features: Vec<FeatureRow> = packets.iter().filter(|p| scope.admits(p)).map(FeatureRow::of).collect();
    let csv_rows = a
        .out
        .csv
        .as_ref()
        .map(|_| features.iter().map(|f| f.csv_record().to_vec()).collect::<Vec<_>>());
    let body = AnalyzeBody {
        capture: loaded.summary,
        truncate_min: a.truncate_min,
        packets_per_minute: ppm_over(&packets, duration, Scope::AllPackets),
        distribution: protocol_distribution(&packets, scope),
        histogram: temporal_histogram(&packets, a.bins),
        key_coverage,
        features: (!a.summary_only).then_some(features),
    };
    let env = ReportEnvelope::new("analyze", inputs, body);
    emit(&a.out, &env, csv_rows.map(|rows| (&FEATURE_COLUMNS[..], rows)))
}

fn label_format(f: &FormatArgs) -> Result<LabelFormat, CliError> {
    LabelFormat::new(&f.date_format)
        .ok_or_else(|| CliError::Usage(format!("date format `{}` cannot round-trip timestamps", f.date_format)))
}

fn scan(dir: &Path, format: &LabelFormat) -> Result<DatasetManifest, CliError> {
    scan_directory(dir, format).map_err(|e| io_err(dir, e))
}

#[derive(Debug, Serialize)]
pub struct ScanBody {
    pub dir: String,
    pub date_format: String,
    pub manifest: DatasetManifest,
}

fn cmd_dataset_scan(a: ScanArgs) -> Result<(), CliError> {
    let format = label_format(&a.format)?;
    let manifest = scan(&a.dir, &format)?;
    let rows = manifest
        .entries
        .iter()
        .map(|e| {
            vec![
                e.label.app_name.clone(),
                format.render_stem(&e.label),
                e.label.duration_s.to_string(),
                e.capture_path.display().to_string(),
                e.keylog_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    let body = ScanBody {
        dir: a.dir.display().to_string(),
        date_format: format.pattern().to_string(),
        manifest,
    };
    let env = ReportEnvelope::new("dataset scan", Vec::new(), body);
    emit(&a.out, &env, Some((&["app", "stem", "duration_s", "capture", "keylog"], rows)))
}

/// Loads and classifies every manifest entry in parallel; results are in
/// manifest order (app name, then capture date).
fn load_dataset(manifest: &DatasetManifest) -> Result<(Vec<CaptureData>, Vec<InputDigest>), CliError> {
    let loaded: Vec<LoadedCapture> = manifest
        .entries
        .par_iter()
        .map(|e| load(&e.capture_path, Some(e.label.clone())))
        .collect::<Result<_, _>>()?;
    let mut digests = Vec::new();
    let mut captures = Vec::new();
    for (entry, l) in manifest.entries.iter().zip(loaded) {
        digests.push(l.digest);
        captures.push(CaptureData {
            label: entry.label.clone(),
            packets: l.packets,
        });
    }
    Ok((captures, digests))
}

#[derive(Debug, Serialize)]
pub struct ManifestSummary {
    pub apps: usize,
    pub entries: usize,
    pub with_keylog: usize,
    pub unpaired_keylogs: usize,
    pub unparseable: usize,
}

impl ManifestSummary {
    fn of(m: &DatasetManifest) -> Self {
        ManifestSummary {
            apps: m.apps.len(),
            entries: m.entries.len(),
            with_keylog: m.entries.iter().filter(|e| e.keylog_path.is_some()).count(),
            unpaired_keylogs: m.unpaired_keylogs.len(),
            unparseable: m.unparseable.len(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct StatsBody {
    pub dir: String,
    pub manifest: ManifestSummary,
    pub truncate_min: Option<f64>,
    pub ppm_scope: Scope,
    pub packets: u64,
    pub ppm: Vec<PpmRecord>,
    pub mean_ppm: f64,
    pub distribution: ProtocolDistribution,
}

fn cmd_dataset_stats(a: StatsArgs) -> Result<(), CliError> {
    let format = label_format(&a.format)?;
    let manifest = scan(&a.dir, &format)?;
    if manifest.entries.is_empty() {
        return Err(CliError::Domain(format!("{}: no labeled captures found", a.dir.display())));
    }
    let (captures, digests) = load_dataset(&manifest)?;
    let ppm_scope = Scope::from(a.ppm_scope);
    let mut distribution = ProtocolDistribution::new(a.scope.into());
    let mut per_capture = Vec::new();
    let mut packets = 0u64;
    for c in &captures {
        let kept = match a.truncate_min {
            Some(m) => truncate_packets(&c.packets, m),
            None => c.packets.clone(),
        };
        let mut duration = c.label.duration_s as f64;
        if let Some(m) = a.truncate_min {
            duration = duration.min(m * 60.0);
        }
        packets += kept.len() as u64;
        per_capture.push((c.label.app_name.as_str(), ppm_over(&kept, Some(duration), ppm_scope)));
        kept.iter().for_each(|p| distribution.add(p));
    }
    let ppm = mean_ppm_per_app(per_capture);
    let rows = ppm
        .iter()
        .map(|r| vec![r.app_name.clone(), format!("{:.3}", r.mean_ppm), r.captures_used.to_string()])
        .collect();
    let body = StatsBody {
        dir: a.dir.display().to_string(),
        manifest: ManifestSummary::of(&manifest),
        truncate_min: a.truncate_min,
        ppm_scope,
        packets,
        mean_ppm: dataset_mean_ppm(&ppm),
        ppm,
        distribution,
    };
    let env = ReportEnvelope::new("dataset stats", digests, body);
    emit(&a.out, &env, Some((&["app", "mean_ppm", "captures"], rows)))
}

#[derive(Debug, Serialize)]
pub struct CompareBody {
    pub dir_a: String,
    pub dir_b: String,
    pub truncate_min_a: Option<f64>,
    pub truncate_min_b: Option<f64>,
    pub common_only: bool,
    pub scope: Scope,
    pub ppm_scope: Scope,
    pub manifest_a: ManifestSummary,
    pub manifest_b: ManifestSummary,
    pub report: crate::analytics::ComparisonReport,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

fn cmd_compare(a: CompareArgs) -> Result<(), CliError> {
    let format = label_format(&a.format)?;
    let ma = scan(&a.dir_a, &format)?;
    let mb = scan(&a.dir_b, &format)?;
    let (ca, mut digests) = load_dataset(&ma)?;
    let (cb, db) = load_dataset(&mb)?;
    digests.extend(db);
    let options = CompareOptions {
        truncate_a: a.truncate_min_a.or(a.truncate_min),
        truncate_b: a.truncate_min_b.or(a.truncate_min),
        scope: a.scope.into(),
        ppm_scope: a.ppm_scope.into(),
        common_only: a.common_only,
    };
    let report = compare_datasets(&DatasetInput { captures: ca }, &DatasetInput { captures: cb }, &options)
        .map_err(|e: CompareError| CliError::Domain(e.to_string()))?;
    let rows = report
        .ppm_table
        .iter()
        .map(|r| {
            vec![
                r.app_name.clone(),
                format!("{:.3}", r.ppm_a),
                format!("{:.3}", r.ppm_b),
                fmt_opt(r.ratio_b_over_a),
            ]
        })
        .collect();
    let body = CompareBody {
        dir_a: a.dir_a.display().to_string(),
        dir_b: a.dir_b.display().to_string(),
        truncate_min_a: options.truncate_a,
        truncate_min_b: options.truncate_b,
        common_only: options.common_only,
        scope: options.scope,
        ppm_scope: options.ppm_scope,
        manifest_a: ManifestSummary::of(&ma),
        manifest_b: ManifestSummary::of(&mb),
        report,
    };
    let env = ReportEnvelope::new("compare", digests, body);
    emit(&a.out, &env, Some((&["app", "ppm_a", "ppm_b", "ratio"], rows)))
}

#[derive(Debug, Serialize)]
pub struct KeycovBody {
    pub capture: CaptureSummary,
    #[serde(flatten)]
    pub coverage: KeyCoverageBody,
}

fn cmd_keycov(a: KeycovArgs) -> Result<(), CliError> {
    let loaded = load(&a.capture, None)?;
    let (index, digest) = load_keylog(&a.keylog)?;
    let coverage = KeyCoverageBody {
        coverage: key_coverage(&loaded.packets, &index),
        keylog_entries: index.entry_count(),
        keylog_malformed_lines: index.malformed_lines,
    };
    let c = &coverage.coverage;
    let row = vec![
        c.tls_flows.to_string(),
        c.flows_with_client_hello.to_string(),
        c.flows_without_client_hello.to_string(),
        c.flows_with_keys.to_string(),
        format!("{:.6}", c.coverage_fraction),
    ];
    let body = KeycovBody {
        capture: loaded.summary,
        coverage,
    };
    let env = ReportEnvelope::new("keycov", vec![loaded.digest, digest], body);
    let header = ["tls_flows", "flows_with_client_hello", "flows_without_client_hello", "flows_with_keys", "coverage"];
    emit(&a.out, &env, Some((&header, vec![row])))
}

#[derive(Debug, Serialize)]
pub struct BaselineBody {
    pub capture: CaptureSummary,
    pub mode: &'static str,
    pub tags: BTreeMap<BackgroundTag, u64>,
    pub histogram: TemporalHistogram,
    pub tagged_histogram: TemporalHistogram,
}

fn cmd_baseline(a: BaselineArgs) -> Result<(), CliError> {
    let loaded = load(&a.capture, None)?;
    let mode = if a.app_mode { AttributionMode::App } else { AttributionMode::Baseline };
    let tags = attribute_background(&loaded.packets, mode);
    let mut tally: BTreeMap<BackgroundTag, u64> = [
        BackgroundTag::ConnectivityHttp,
        BackgroundTag::ConnectivityDo53,
        BackgroundTag::SystemDot,
        BackgroundTag::None,
    ]
    .into_iter()
    .map(|t| (t, 0))
    .collect();
    for t in &tags {
        *tally.entry(*t).or_default() += 1;
    }
    let packets = &loaded.packets;
    let t0 = packets.iter().map(|p| p.record.ts_ns).min().unwrap_or(0);
    let t_end = packets.iter().map(|p| p.record.ts_ns).max().unwrap_or(0);
    let tagged = packets
        .iter()
        .zip(&tags)
        .filter(|(p, t)| p.is_app_data && **t != BackgroundTag::None)
        .map(|(p, _)| p);
    let tagged_histogram = histogram_between(tagged, a.bins, t0, t_end, !packets.is_empty());
    let rows = tally.iter().map(|(t, n)| vec![format!("{t:?}"), n.to_string()]).collect();
    let body = BaselineBody {
        histogram: temporal_histogram(packets, a.bins),
        tagged_histogram,
        capture: loaded.summary,
        mode: if a.app_mode { "app" } else { "baseline" },
        tags: tally,
    };
    let env = ReportEnvelope::new("baseline", vec![loaded.digest], body);
    emit(&a.out, &env, Some((&["tag", "packets"], rows)))
}

#[derive(Debug, Serialize)]
pub struct SynthBody {
    pub out_dir: String,
    pub seed: u64,
    pub files: Vec<InputDigest>,
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    let (mut spec, mut inputs) = match (&a.spec, &a.preset) {
        (Some(path), _) => {
            let (bytes, digest) = read_input(path).map_err(|e| io_err(path, e))?;
            let text = String::from_utf8(bytes)
                .map_err(|_| CliError::Usage(format!("{}: spec is not UTF-8", path.display())))?;
            (FixtureSpec::from_json(&text)?, vec![digest])
        }
        (None, Some(name)) => (
            presets::by_name(name).ok_or_else(|| CliError::Usage(format!("unknown preset {name}")))?,
            Vec::new(),
        ),
        (None, None) => return Err(CliError::Usage("a spec file or --preset is required".into())),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if a.emit_spec {
        let text = spec.to_json() + "\n";
        return match &a.json {
            Some(p) => write_file(p, text.as_bytes()),
            None => std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Io(format!("stdout: {e}"))),
        };
    }
    let out_dir = a
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .ok_or_else(|| CliError::Usage(format!("--out is required when {OUT_DIR_ENV} is unset")))?;
    let written = write_fixtures(&spec, &out_dir)?;
    let mut files = Vec::new();
    for path in &written {
        let (_, digest) = read_input(path).map_err(|e| io_err(path, e))?;
        files.push(digest);
    }
    inputs.sort_by(|x, y| x.path.cmp(&y.path));
    let body = SynthBody {
        out_dir: out_dir.display().to_string(),
        seed: spec.seed,
        files,
    };
    let env = ReportEnvelope::new("synth", inputs, body);
    let out = OutputArgs { json: a.json, csv: None };
    emit(&out, &env, None)
}
