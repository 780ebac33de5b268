//! Per-frame face-analysis CSV in the OpenFace column convention.
//!
//! Required columns: `frame` (1-based), `face_id`, `timestamp`, `confidence`,
//! `success`, `x_0..x_67`, `y_0..y_67`. Any `AUnn_r` (intensity, 0-5) and
//! `AUnn_c` (presence, 0/1) columns are picked up. Other columns are ignored.
//! Header and cells may be padded with spaces, as OpenFace writes them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{IngestError, LANDMARK_COUNT};
use crate::geometry::PixelPoint;

pub const AU_INTENSITY_MAX: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceFrame {
    /// 0-based decode ordinal.
    pub frame_number: usize,
    pub face_id: u32,
    pub timestamp_s: f64,
    pub success: bool,
    pub confidence: f64,
    pub landmarks: Vec<PixelPoint>,
    pub au_intensity: BTreeMap<u8, f64>,
    pub au_presence: BTreeMap<u8, u8>,
}

impl FaceFrame {
    /// An undetected face with no landmarks or AUs.
    pub fn empty(frame_number: usize) -> Self {
        Self {
            frame_number,
            face_id: 0,
            timestamp_s: 0.0,
            success: false,
            confidence: 0.0,
            landmarks: Vec::new(),
            au_intensity: BTreeMap::new(),
            au_presence: BTreeMap::new(),
        }
    }
}

/// Parsed face CSV plus the AU columns it declared.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FaceTable {
    pub frames: Vec<FaceFrame>,
    pub intensity_ids: Vec<u8>,
    pub presence_ids: Vec<u8>,
}

impl FaceTable {
    /// Frame lookup by 0-based frame number. Frames are sorted and unique.
    pub fn get(&self, frame_number: usize) -> Option<&FaceFrame> {
        self.frames
            .binary_search_by_key(&frame_number, |f| f.frame_number)
            .ok()
            .map(|i| &self.frames[i])
    }
}

struct Columns {
    frame: usize,
    face_id: usize,
    timestamp: usize,
    confidence: usize,
    success: usize,
    xs: Vec<usize>,
    ys: Vec<usize>,
    intensity: Vec<(u8, usize)>,
    presence: Vec<(u8, usize)>,
}

fn au_column(name: &str) -> Option<(u8, char)> {
    let rest = name.strip_prefix("AU")?;
    let (num, kind) = rest.split_once('_')?;
    let id = num.parse::<u8>().ok()?;
    match kind {
        "r" => Some((id, 'r')),
        "c" => Some((id, 'c')),
        _ => None,
    }
}

impl Columns {
    fn from_header(header: &csv::StringRecord) -> Result<Self, IngestError> {
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, name) in header.iter().enumerate() {
            index.entry(name).or_insert(i);
        }
        let find = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
        };
        let mut intensity = Vec::new();
        let mut presence = Vec::new();
        for (i, name) in header.iter().enumerate() {
            match au_column(name) {
                Some((id, 'r')) => intensity.push((id, i)),
                Some((id, _)) => presence.push((id, i)),
                None => {}
            }
        }
        intensity.sort_unstable();
        intensity.dedup_by_key(|c| c.0);
        presence.sort_unstable();
        presence.dedup_by_key(|c| c.0);
        Ok(Self {
            frame: find("frame")?,
            face_id: find("face_id")?,
            timestamp: find("timestamp")?,
            confidence: find("confidence")?,
            success: find("success")?,
            xs: (0..LANDMARK_COUNT)
                .map(|i| find(&format!("x_{i}")))
                .collect::<Result<_, _>>()?,
            ys: (0..LANDMARK_COUNT)
                .map(|i| find(&format!("y_{i}")))
                .collect::<Result<_, _>>()?,
            intensity,
            presence,
        })
    }
}

struct Row<'a> {
    record: &'a csv::StringRecord,
    header: &'a csv::StringRecord,
    line: u64,
}

impl Row<'_> {
    fn num(&self, col: usize) -> Result<f64, IngestError> {
        let cell = &self.record[col];
        cell.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| IngestError::BadCell {
                line: self.line,
                column: self.header[col].to_string(),
                value: cell.to_string(),
            })
    }
}

pub fn parse_face_csv(input: &[u8]) -> Result<FaceTable, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader.headers().map_err(csv_error)?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(IngestError::MissingColumn("frame".into()));
    }
    let cols = Columns::from_header(&header)?;

    let mut by_frame: BTreeMap<usize, FaceFrame> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => return Err(csv_error(e)),
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(IngestError::RowArity {
                line,
                expected: header.len(),
                found: record.len(),
            });
        }
        let row = Row {
            record: &record,
            header: &header,
            line,
        };

        let frame_1based = row.num(cols.frame)?;
        if frame_1based < 1.0 || frame_1based.fract() != 0.0 {
            return Err(IngestError::BadCell {
                line,
                column: "frame".into(),
                value: record[cols.frame].to_string(),
            });
        }
        let face = FaceFrame {
            frame_number: frame_1based as usize - 1,
            face_id: row.num(cols.face_id)?.max(0.0) as u32,
            timestamp_s: row.num(cols.timestamp)?,
            success: row.num(cols.success)? >= 0.5,
            confidence: row.num(cols.confidence)?.clamp(0.0, 1.0),
            landmarks: cols
                .xs
                .iter()
                .zip(&cols.ys)
                .map(|(&x, &y)| Ok(PixelPoint::new(row.num(x)?, row.num(y)?)))
                .collect::<Result<_, IngestError>>()?,
            au_intensity: cols
                .intensity
                .iter()
                .map(|&(id, c)| Ok((id, row.num(c)?.clamp(0.0, AU_INTENSITY_MAX))))
                .collect::<Result<_, IngestError>>()?,
            au_presence: cols
                .presence
                .iter()
                .map(|&(id, c)| Ok((id, u8::from(row.num(c)? >= 0.5))))
                .collect::<Result<_, IngestError>>()?,
        };

        // Several faces in one frame: keep the best detection.
        match by_frame.get(&face.frame_number) {
            Some(existing) if rank(existing) >= rank(&face) => {}
            _ => {
                by_frame.insert(face.frame_number, face);
            }
        }
    }

    Ok(FaceTable {
        frames: by_frame.into_values().collect(),
        intensity_ids: cols.intensity.iter().map(|c| c.0).collect(),
        presence_ids: cols.presence.iter().map(|c| c.0).collect(),
    })
}

fn rank(f: &FaceFrame) -> (bool, f64) {
    (f.success, f.confidence)
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map_or(0, |p| p.line());
    IngestError::Csv {
        line,
        message: e.to_string(),
    }
}

/// Serializes in OpenFace layout. Frames without landmarks are written with zeros.
pub fn write_face_csv(table: &FaceTable) -> String {
    let mut out = String::with_capacity(64 + table.frames.len() * 1800);
    out.push_str("frame, face_id, timestamp, confidence, success");
    for i in 0..LANDMARK_COUNT {
        let _ = write!(out, ", x_{i}");
    }
    for i in 0..LANDMARK_COUNT {
        let _ = write!(out, ", y_{i}");
    }
    for id in &table.intensity_ids {
        let _ = write!(out, ", AU{id:02}_r");
    }
    for id in &table.presence_ids {
        let _ = write!(out, ", AU{id:02}_c");
    }
    out.push('\n');

    let zero = PixelPoint::default();
    for f in &table.frames {
        let _ = write!(
            out,
            "{}, {}, {:?}, {:?}, {}",
            f.frame_number + 1,
            f.face_id,
            f.timestamp_s,
            f.confidence,
            u8::from(f.success)
        );
        let lm = |i: usize| f.landmarks.get(i).copied().unwrap_or(zero);
        for i in 0..LANDMARK_COUNT {
            let _ = write!(out, ", {:?}", lm(i).x);
        }
        for i in 0..LANDMARK_COUNT {
            let _ = write!(out, ", {:?}", lm(i).y);
        }
        for id in &table.intensity_ids {
            let _ = write!(out, ", {:?}", f.au_intensity.get(id).copied().unwrap_or(0.0));
        }
        for id in &table.presence_ids {
            let _ = write!(out, ", {}", f.au_presence.get(id).copied().unwrap_or(0));
        }
        out.push('\n');
    }
    out
}
