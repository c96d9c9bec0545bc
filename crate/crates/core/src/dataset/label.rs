//! `<app>_<date>_<duration>.pcap` capture filenames.

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

pub const CAPTURE_SUFFIX: &str = ".pcap";
pub const DEFAULT_DATE_PATTERN: &str = "%Y%m%dT%H%M%SZ";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CaptureLabel {
    pub app_name: String,
    pub capture_date: DateTime<Utc>,
    pub duration_s: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FilenameError {
    #[error("file name does not have the expected extension")]
    BadExtension,
    #[error("date field missing or not in the configured format")]
    BadDate,
    #[error("duration field is not a positive integer")]
    BadDuration,
    #[error("app name is empty or contains a path separator")]
    BadAppName,
}

/// Date pattern (chrono strftime syntax) used in the middle filename field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelFormat {
    pattern: String,
    date_underscores: usize,
}

impl Default for LabelFormat {
    fn default() -> Self {
        LabelFormat::new(DEFAULT_DATE_PATTERN).expect("default pattern is valid")
    }
}

impl LabelFormat {
    /// Fails when the pattern cannot round-trip a whole-second timestamp.
    pub fn new(pattern: &str) -> Option<Self> {
        let mut format = LabelFormat {
            pattern: pattern.to_string(),
            date_underscores: 0,
        };
        let probe = Utc.with_ymd_and_hms(2001, 2, 3, 4, 5, 6).single()?;
        let rendered = format.render_date(&probe)?;
        format.date_underscores = rendered.matches('_').count();
        if rendered.contains('/') || format.parse_date(&rendered)? != probe {
            return None;
        }
        Some(format)
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    fn render_date(&self, date: &DateTime<Utc>) -> Option<String> {
        use std::fmt::Write;
        let mut s = String::new();
        write!(s, "{}", date.format(&self.pattern)).ok()?;
        Some(s)
    }

    fn parse_date(&self, s: &str) -> Option<DateTime<Utc>> {
        let date = NaiveDateTime::parse_from_str(s, &self.pattern).ok()?.and_utc();
        // reject non-canonical spellings so render(parse(name)) == name
        (self.render_date(&date)? == s).then_some(date)
    }

    pub fn render_stem(&self, label: &CaptureLabel) -> String {
        let date = self.render_date(&label.capture_date).unwrap_or_default();
        format!("{}_{}_{}", label.app_name, date, label.duration_s)
    }

    pub fn render_filename(&self, label: &CaptureLabel) -> String {
        format!("{}{CAPTURE_SUFFIX}", self.render_stem(label))
    }

    /// Splits from the right: duration, then the date, then the app name,
    /// which keeps any underscores of its own.
    pub fn parse_stem(&self, stem: &str) -> Result<CaptureLabel, FilenameError> {
        let mut parts = stem.rsplitn(self.date_underscores + 3, '_').collect::<Vec<_>>();
        if parts.len() < self.date_underscores + 3 {
            return Err(FilenameError::BadDate);
        }
        let app_name = parts.pop().unwrap_or_default();
        let duration = parts[0];
        parts.remove(0);
        parts.reverse();
        let date = self.parse_date(&parts.join("_")).ok_or(FilenameError::BadDate)?;
        let duration_s = parse_duration(duration).ok_or(FilenameError::BadDuration)?;
        if !valid_app_name(app_name) {
            return Err(FilenameError::BadAppName);
        }
        Ok(CaptureLabel {
            app_name: app_name.to_string(),
            capture_date: date,
            duration_s,
        })
    }

    pub fn parse_filename(&self, name: &str) -> Result<CaptureLabel, FilenameError> {
        let stem = name.strip_suffix(CAPTURE_SUFFIX).ok_or(FilenameError::BadExtension)?;
        self.parse_stem(stem)
    }
}

fn parse_duration(s: &str) -> Option<u64> {
    if s.is_empty() || s.starts_with('0') || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

pub fn valid_app_name(name: &str) -> bool {
    !name.is_empty() && !name.contains(['/', '\\', '\0'])
}

impl CaptureLabel {
    /// Validated constructor; sub-second precision is dropped.
    pub fn new(app_name: &str, capture_date: DateTime<Utc>, duration_s: u64) -> Result<Self, FilenameError> {
        if !valid_app_name(app_name) {
            return Err(FilenameError::BadAppName);
        }
        if duration_s < 1 {
            return Err(FilenameError::BadDuration);
        }
        let capture_date = DateTime::from_timestamp(capture_date.timestamp(), 0).ok_or(FilenameError::BadDate)?;
        Ok(CaptureLabel {
            app_name: app_name.to_string(),
            capture_date,
            duration_s,
        })
    }

    pub fn stem(&self) -> String {
        LabelFormat::default().render_stem(self)
    }
}

pub fn parse_capture_filename(name: &str) -> Result<CaptureLabel, FilenameError> {
    LabelFormat::default().parse_filename(name)
}

pub fn render_capture_filename(label: &CaptureLabel) -> String {
    LabelFormat::default().render_filename(label)
}
