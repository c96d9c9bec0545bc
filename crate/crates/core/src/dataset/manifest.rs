//! Pairing of captures with their key logs in a flat dataset directory.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::label::{CaptureLabel, LabelFormat, CAPTURE_SUFFIX};
use crate::keylog::{parse_keylog_filename, KEYLOG_PREFIX, KEYLOG_SUFFIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntryKind {
    File,
    Directory,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub label: CaptureLabel,
    pub capture_path: PathBuf,
    pub keylog_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub apps: BTreeSet<String>,
    pub unpaired_keylogs: Vec<PathBuf>,
    pub unparseable: Vec<PathBuf>,
}

impl DatasetManifest {
    pub fn entries_for<'a>(&'a self, app: &'a str) -> impl Iterator<Item = &'a ManifestEntry> + 'a {
        self.entries.iter().filter(move |e| e.label.app_name == app)
    }
}

fn file_name(path: &Path) -> Option<&str> {
    path.file_name()?.to_str()
}

/// Builds a manifest from a directory listing. Files that are neither
/// captures nor key logs are ignored; names that look like either but do not
/// parse land in `unparseable`.
pub fn scan_dataset(listing: &[(PathBuf, EntryKind)], format: &LabelFormat) -> DatasetManifest {
    let mut captures: BTreeMap<String, (CaptureLabel, PathBuf)> = BTreeMap::new();
    let mut keylogs: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut manifest = DatasetManifest::default();

    for (path, kind) in listing {
        if *kind != EntryKind::File {
            continue;
        }
        let Some(name) = file_name(path) else {
            if path.extension().is_some_and(|e| e == "pcap") {
                manifest.unparseable.push(path.clone());
            }
            continue;
        };
        if name.ends_with(CAPTURE_SUFFIX) {
            match format.parse_filename(name) {
                Ok(label) => {
                    captures.insert(format.render_stem(&label), (label, path.clone()));
                }
                Err(_) => manifest.unparseable.push(path.clone()),
            }
        } else if name.starts_with(KEYLOG_PREFIX) && name.ends_with(KEYLOG_SUFFIX) {
            match parse_keylog_filename(name, format) {
                Ok(label) => {
                    keylogs.insert(format.render_stem(&label), path.clone());
                }
                Err(_) => manifest.unparseable.push(path.clone()),
            }
        }
    }

    for (stem, (label, capture_path)) in captures {
        manifest.apps.insert(label.app_name.clone());
        manifest.entries.push(ManifestEntry {
            label,
            capture_path,
            keylog_path: keylogs.remove(&stem),
        });
    }
    manifest.unpaired_keylogs = keylogs.into_values().collect();
    manifest.unparseable.sort();
    manifest
}

/// Lists a directory (non-recursively) and scans it.
pub fn scan_directory(dir: &Path, format: &LabelFormat) -> io::Result<DatasetManifest> {
    let mut listing = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let ft = entry.file_type()?;
        let kind = if ft.is_file() {
            EntryKind::File
        } else if ft.is_dir() {
            EntryKind::Directory
        } else {
            EntryKind::Other
        };
        listing.push((entry.path(), kind));
    }
    listing.sort();
    Ok(scan_dataset(&listing, format))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(name: &str) -> (PathBuf, EntryKind) {
        (PathBuf::from("/data").join(name), EntryKind::File)
    }

    #[test]
    fn pairs_by_stem() {
        let listing = [
            f("com.a_20250314T101500Z_300.pcap"),
            f("com.b_20250314T101500Z_300.pcap"),
            f("sslkeylog_com.a_20250314T101500Z_300.txt"),
            f("notes.txt"),
        ];
        let m = scan_dataset(&listing, &LabelFormat::default());
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries.iter().filter(|e| e.keylog_path.is_some()).count(), 1);
        assert!(m.unpaired_keylogs.is_empty());
        assert_eq!(m.apps.len(), 2);
    }

    #[test]
    fn reports_problems() {
        let listing = [
            f("sslkeylog_com.a_20250314T101500Z_300.txt"),
            f("broken.pcap"),
            (PathBuf::from("/data/x_20250314T101500Z_3.pcap"), EntryKind::Directory),
        ];
        let m = scan_dataset(&listing, &LabelFormat::default());
        assert_eq!(m.unpaired_keylogs.len(), 1);
        assert_eq!(m.unparseable, vec![PathBuf::from("/data/broken.pcap")]);
        assert!(m.entries.is_empty());
    }

    #[test]
    fn eighty_apps_four_captures() {
        let listing: Vec<_> = (0..80)
            .flat_map(|a| (0..4).map(move |c| f(&format!("com.app{a}_2025031{c}T101500Z_300.pcap"))))
            .collect();
        let m = scan_dataset(&listing, &LabelFormat::default());
        assert_eq!((m.apps.len(), m.entries.len()), (80, 320));
    }
}
