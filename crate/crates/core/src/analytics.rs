//! Events, summary statistics and the contact distribution, plus their CSV/JSON exports.
//!
//! Durations are counted in whole frames and scaled by the frame duration once.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filters::{FilterSignal, SignalKind};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("signals have different lengths")]
    LengthMismatch,
    #[error("`{0}` is not a boolean signal")]
    NotBoolean(String),
    #[error("import: {0}")]
    Import(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub start_frame: usize,
    /// Inclusive.
    pub end_frame: usize,
    pub duration_s: f64,
}

impl Event {
    pub fn frames(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }
}

fn frames_to_s(frames: usize, frame_duration_us: i64) -> f64 {
    (frames as i64 * frame_duration_us) as f64 / 1e6
}

fn require_boolean(signal: &FilterSignal) -> Result<(), AnalyticsError> {
    match signal.kind {
        SignalKind::Boolean => Ok(()),
        SignalKind::Continuous => Err(AnalyticsError::NotBoolean(signal.name.clone())),
    }
}

/// Maximal runs of valid, true frames. Invalid frames end a run.
pub fn extract_events(signal: &FilterSignal, frame_duration_us: i64) -> Result<Vec<Event>, AnalyticsError> {
    require_boolean(signal)?;
    let mut events = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..=signal.len() {
        let on = i < signal.len() && signal.is_true(i);
        match (on, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                events.push(Event {
                    start_frame: s,
                    end_frame: i - 1,
                    duration_s: frames_to_s(i - s, frame_duration_us),
                });
                start = None;
            }
            _ => {}
        }
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SignalSummary {
    pub n_events: usize,
    pub total_true_s: f64,
    pub mean_duration_s: f64,
    pub median_duration_s: f64,
    pub true_fraction_of_valid: f64,
    pub valid_fraction_of_all: f64,
}

pub fn summarize(signal: &FilterSignal, frame_duration_us: i64) -> Result<SignalSummary, AnalyticsError> {
    let events = extract_events(signal, frame_duration_us)?;
    let valid = signal.valid_count();
    let true_frames: usize = events.iter().map(Event::frames).sum();
    if events.is_empty() {
        return Ok(SignalSummary {
            valid_fraction_of_all: ratio(valid, signal.len()),
            ..Default::default()
        });
    }
    let mut lens: Vec<usize> = events.iter().map(Event::frames).collect();
    lens.sort_unstable();
    let n = lens.len();
    // median in half-frames to stay in integers
    let median_half_frames = if n % 2 == 1 {
        2 * lens[n / 2]
    } else {
        lens[n / 2 - 1] + lens[n / 2]
    };
    Ok(SignalSummary {
        n_events: n,
        total_true_s: frames_to_s(true_frames, frame_duration_us),
        mean_duration_s: (true_frames as i64 * frame_duration_us) as f64 / n as f64 / 1e6,
        median_duration_s: (median_half_frames as i64 * frame_duration_us) as f64 / 2e6,
        true_fraction_of_valid: ratio(true_frames, valid),
        valid_fraction_of_all: ratio(valid, signal.len()),
    })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactCategory {
    MutualEye,
    OneWayA,
    OneWayB,
    MutualFaceOnly,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub mutual_eye: usize,
    pub one_way_a: usize,
    pub one_way_b: usize,
    pub mutual_face_only: usize,
    pub none: usize,
}

impl CategoryCounts {
    pub fn total(&self) -> usize {
        self.mutual_eye + self.one_way_a + self.one_way_b + self.mutual_face_only + self.none
    }

    fn bump(&mut self, c: ContactCategory) {
        match c {
            ContactCategory::MutualEye => self.mutual_eye += 1,
            ContactCategory::OneWayA => self.one_way_a += 1,
            ContactCategory::OneWayB => self.one_way_b += 1,
            ContactCategory::MutualFaceOnly => self.mutual_face_only += 1,
            ContactCategory::None => self.none += 1,
        }
    }
}

/// Five-way breakdown of valid frames, plus the share of frames that were invalid.
///
/// Category fractions are over valid frames and sum to 1 whenever there is at
/// least one valid frame; with none they are all 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactDistribution {
    pub mutual_eye: f64,
    pub one_way_a: f64,
    pub one_way_b: f64,
    pub mutual_face_only: f64,
    pub none: f64,
    pub invalid_fraction: f64,
    pub counts: CategoryCounts,
    pub valid_frames: usize,
    pub total_frames: usize,
}

impl ContactDistribution {
    pub fn fraction_sum(&self) -> f64 {
        self.mutual_eye + self.one_way_a + self.one_way_b + self.mutual_face_only + self.none
    }
}

pub fn classify(eye_a: bool, eye_b: bool, face_a: bool, face_b: bool) -> ContactCategory {
    match (eye_a, eye_b) {
        (true, true) => ContactCategory::MutualEye,
        (true, false) => ContactCategory::OneWayA,
        (false, true) => ContactCategory::OneWayB,
        (false, false) if face_a && face_b => ContactCategory::MutualFaceOnly,
        _ => ContactCategory::None,
    }
}

/// Per-frame category; `None` where any of the four signals is invalid.
pub fn categorize(
    eye_a: &FilterSignal,
    eye_b: &FilterSignal,
    face_a: &FilterSignal,
    face_b: &FilterSignal,
) -> Result<Vec<Option<ContactCategory>>, AnalyticsError> {
    let n = eye_a.len();
    if [eye_b, face_a, face_b].iter().any(|s| s.len() != n) {
        return Err(AnalyticsError::LengthMismatch);
    }
    for s in [eye_a, eye_b, face_a, face_b] {
        require_boolean(s)?;
    }
    Ok((0..n)
        .map(|i| {
            let all_valid = eye_a.valid[i] && eye_b.valid[i] && face_a.valid[i] && face_b.valid[i];
            all_valid.then(|| {
                classify(eye_a.is_true(i), eye_b.is_true(i), face_a.is_true(i), face_b.is_true(i))
            })
        })
        .collect())
}

pub fn contact_distribution(
    eye_a: &FilterSignal,
    eye_b: &FilterSignal,
    face_a: &FilterSignal,
    face_b: &FilterSignal,
) -> Result<ContactDistribution, AnalyticsError> {
    let per_frame = categorize(eye_a, eye_b, face_a, face_b)?;
    Ok(distribution_from_categories(&per_frame))
}

pub fn distribution_from_categories(per_frame: &[Option<ContactCategory>]) -> ContactDistribution {
    let mut counts = CategoryCounts::default();
    for c in per_frame.iter().flatten() {
        counts.bump(*c);
    }
    let valid = counts.total();
    let total = per_frame.len();
    ContactDistribution {
        mutual_eye: ratio(counts.mutual_eye, valid),
        one_way_a: ratio(counts.one_way_a, valid),
        one_way_b: ratio(counts.one_way_b, valid),
        mutual_face_only: ratio(counts.mutual_face_only, valid),
        none: ratio(counts.none, valid),
        invalid_fraction: ratio(total - valid, total),
        counts,
        valid_frames: valid,
        total_frames: total,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(format!("unknown format `{other}` (csv|json)")),
        }
    }
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("plain data always serializes");
    out.push(b'\n');
    out
}

/// `start_frame,end_frame,duration_s`, or a JSON array of the same objects.
pub fn export_events(events: &[Event], format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Csv => {
            let mut out = String::from("start_frame,end_frame,duration_s\n");
            for e in events {
                let _ = writeln!(out, "{},{},{:?}", e.start_frame, e.end_frame, e.duration_s);
            }
            out.into_bytes()
        }
        ExportFormat::Json => json(&events),
    }
}

#[derive(Serialize, Deserialize)]
struct SignalRow {
    frame: usize,
    value: f64,
    valid: u8,
}

#[derive(Serialize, Deserialize)]
struct SignalDoc {
    name: String,
    kind: SignalKind,
    frames: Vec<SignalRow>,
}

/// `frame,value,valid` rows, or a JSON object with name, kind and the same rows.
pub fn export_signal(signal: &FilterSignal, format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Csv => {
            let mut out = String::with_capacity(16 + signal.len() * 12);
            out.push_str("frame,value,valid\n");
            for i in 0..signal.len() {
                let _ = writeln!(out, "{},{},{}", i, signal.values[i], u8::from(signal.valid[i]));
            }
            out.into_bytes()
        }
        ExportFormat::Json => json(&SignalDoc {
            name: signal.name.clone(),
            kind: signal.kind,
            frames: (0..signal.len())
                .map(|i| SignalRow {
                    frame: i,
                    value: signal.values[i],
                    valid: u8::from(signal.valid[i]),
                })
                .collect(),
        }),
    }
}

pub fn export_summary(summary: &SignalSummary) -> Vec<u8> {
    json(summary)
}

pub fn export_distribution(dist: &ContactDistribution) -> Vec<u8> {
    json(dist)
}

pub fn import_events(bytes: &[u8], format: ExportFormat) -> Result<Vec<Event>, AnalyticsError> {
    match format {
        ExportFormat::Csv => csv::Reader::from_reader(bytes)
            .deserialize::<Event>()
            .collect::<Result<_, _>>()
            .map_err(|e| AnalyticsError::Import(e.to_string())),
        ExportFormat::Json => {
            serde_json::from_slice(bytes).map_err(|e| AnalyticsError::Import(e.to_string()))
        }
    }
}

/// Rebuilds a signal from either export. CSV carries no name or kind; it comes back as boolean
/// when every value is 0 or 1.
pub fn import_signal(bytes: &[u8], format: ExportFormat, name: &str) -> Result<FilterSignal, AnalyticsError> {
    let (name, kind, rows) = match format {
        ExportFormat::Csv => {
            let rows: Vec<SignalRow> = csv::Reader::from_reader(bytes)
                .deserialize()
                .collect::<Result<_, _>>()
                .map_err(|e| AnalyticsError::Import(e.to_string()))?;
            let kind = if rows.iter().all(|r| r.value == 0.0 || r.value == 1.0) {
                SignalKind::Boolean
            } else {
                SignalKind::Continuous
            };
            (name.to_string(), kind, rows)
        }
        ExportFormat::Json => {
            let doc: SignalDoc =
                serde_json::from_slice(bytes).map_err(|e| AnalyticsError::Import(e.to_string()))?;
            (doc.name, doc.kind, doc.frames)
        }
    };
    if rows.iter().enumerate().any(|(i, r)| r.frame != i) {
        return Err(AnalyticsError::Import("frames are not contiguous from 0".into()));
    }
    Ok(FilterSignal::new(
        name,
        kind,
        rows.iter().map(|r| r.value).collect(),
        rows.iter().map(|r| r.valid == 1).collect(),
    ))
}
