//! Parsing of the per-recording input files and the session manifest.

mod face;
mod frames;
mod gaze;
mod manifest;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use face::{parse_face_csv, write_face_csv, FaceFrame, FaceTable, AU_INTENSITY_MAX};
pub use frames::{parse_frame_index, write_frame_index, FrameIndex, FramePts, DURATION_TOLERANCE_US};
pub use gaze::{
    parse_gaze_stream, write_gaze_stream, GazeSample, GazeStream, SyncSignal, Validity,
    CLOCK_REGRESSION_TOLERANCE_US,
};
pub use manifest::{RecordingEntry, SessionManifest, DEFAULT_FPS};

use crate::exec::Execution;

pub const LANDMARK_COUNT: usize = 68;

/// Share of detected faces allowed to have landmarks off-scene before a warning is raised.
pub const SCENE_MISMATCH_WARN_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("stream contains no valid records")]
    EmptyStream,
    #[error("line {line}: clock went back from {previous} to {ts} µs")]
    NonMonotonicClock { line: usize, ts: i64, previous: i64 },
    #[error("sync record {index}: video or presentation clock goes backwards")]
    InvalidSyncSequence { index: usize },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: expected {expected} cells, found {found}")]
    RowArity { line: u64, expected: usize, found: usize },
    #[error("line {line}: column `{column}` has unparseable value {value:?}")]
    BadCell { line: u64, column: String, value: String },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("frame index is empty")]
    EmptyIndex,
    #[error("frame row {row}: pts_end must exceed pts_begin")]
    InvalidSpan { row: usize },
    #[error("frame row {row}: presentation span overlaps its predecessor")]
    OverlappingPts { row: usize },
    #[error("frame row {row}: duration {found} µs differs from {expected} µs")]
    InconsistentDuration { row: usize, expected: i64, found: i64 },
    #[error("face frame {frame} outside the {frames}-frame video")]
    FaceFrameOutOfRange { frame: usize, frames: usize },
    #[error("invalid scene size {width}x{height}")]
    InvalidScene { width: u32, height: u32 },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<IngestError>,
    },
}

impl IngestError {
    pub fn in_file(self, path: &Path) -> IngestError {
        match self {
            e @ (IngestError::Io { .. } | IngestError::File { .. }) => e,
            e => IngestError::File {
                path: path.to_path_buf(),
                source: Box::new(e),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSize {
    pub width: u32,
    pub height: u32,
}

impl SceneSize {
    pub fn contains(&self, p: crate::geometry::PixelPoint) -> bool {
        (0.0..=f64::from(self.width)).contains(&p.x) && (0.0..=f64::from(self.height)).contains(&p.y)
    }
}

/// Everything recorded by one participant's headset.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingBundle {
    pub participant_id: String,
    pub gaze: Vec<GazeSample>,
    pub sync_signals: Vec<SyncSignal>,
    pub frames: FrameIndex,
    /// The partner's face as seen by this participant's scene camera.
    pub partner_faces: FaceTable,
    pub scene: SceneSize,
    pub malformed_gaze_lines: usize,
    pub frame_images: Option<PathBuf>,
}

impl RecordingBundle {
    pub fn new(
        participant_id: impl Into<String>,
        stream: GazeStream,
        frames: FrameIndex,
        partner_faces: FaceTable,
        scene: SceneSize,
    ) -> Result<Self, IngestError> {
        if scene.width == 0 || scene.height == 0 {
            return Err(IngestError::InvalidScene {
                width: scene.width,
                height: scene.height,
            });
        }
        if let Some(f) = partner_faces
            .frames
            .iter()
            .find(|f| f.frame_number >= frames.len())
        {
            return Err(IngestError::FaceFrameOutOfRange {
                frame: f.frame_number,
                frames: frames.len(),
            });
        }
        Ok(Self {
            participant_id: participant_id.into(),
            gaze: stream.samples,
            sync_signals: stream.sync_signals,
            frames,
            partner_faces,
            scene,
            malformed_gaze_lines: stream.malformed_lines,
            frame_images: None,
        })
    }

    /// Fraction of detected faces with at least one landmark outside the scene.
    pub fn off_scene_fraction(&self) -> f64 {
        let detected: Vec<&FaceFrame> =
            self.partner_faces.frames.iter().filter(|f| f.success).collect();
        if detected.is_empty() {
            return 0.0;
        }
        let off = detected
            .iter()
            .filter(|f| f.landmarks.iter().any(|p| !self.scene.contains(*p)))
            .count();
        off as f64 / detected.len() as f64
    }

    /// The three files in their on-disk formats: gaze stream, face CSV, frame index.
    pub fn to_files(&self) -> (String, String, String) {
        (
            write_gaze_stream(&self.gaze, &self.sync_signals),
            write_face_csv(&self.partner_faces),
            write_frame_index(&self.frames),
        )
    }
}

/// Both recordings of a session, validated and paired.
#[derive(Debug, Clone)]
pub struct DyadSession {
    pub recordings: [RecordingBundle; 2],
    pub alignment_offset_us: i64,
    pub fps_nominal: f64,
    pub warnings: Vec<String>,
}

fn read(path: &Path) -> Result<Vec<u8>, IngestError> {
    std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_recording(entry: &RecordingEntry, exec: Execution) -> Result<RecordingBundle, IngestError> {
    let parse_gaze = || {
        read(&entry.gaze).and_then(|b| parse_gaze_stream(&b).map_err(|e| e.in_file(&entry.gaze)))
    };
    let parse_faces = || {
        read(&entry.faces).and_then(|b| parse_face_csv(&b).map_err(|e| e.in_file(&entry.faces)))
    };
    let parse_frames = || {
        read(&entry.frames)
            .and_then(|b| parse_frame_index(&b).map_err(|e| e.in_file(&entry.frames)))
    };
    let (gaze, (faces, frames)) = exec.join(parse_gaze, || exec.join(parse_faces, parse_frames));
    let scene = SceneSize {
        width: entry.scene_width,
        height: entry.scene_height,
    };
    let mut bundle = RecordingBundle::new(&entry.participant, gaze?, frames?, faces?, scene)
        .map_err(|e| e.in_file(&entry.faces))?;
    bundle.frame_images = entry.frame_images.clone();
    Ok(bundle)
}

pub fn load_session(manifest: &SessionManifest, exec: Execution) -> Result<DyadSession, IngestError> {
    manifest.validate()?;
    let (a, b) = exec.join(
        || load_recording(&manifest.recording_a, exec),
        || load_recording(&manifest.recording_b, exec),
    );
    let recordings = [a?, b?];

    let mut warnings = Vec::new();
    for r in &recordings {
        let off = r.off_scene_fraction();
        if off > SCENE_MISMATCH_WARN_FRACTION {
            warnings.push(format!(
                "{}: {:.1}% of detected faces have landmarks outside the {}x{} scene",
                r.participant_id,
                off * 100.0,
                r.scene.width,
                r.scene.height
            ));
        }
        if r.malformed_gaze_lines > 0 {
            warnings.push(format!(
                "{}: skipped {} malformed gaze lines",
                r.participant_id, r.malformed_gaze_lines
            ));
        }
        let fps = 1e6 / r.frames.frame_duration_us as f64;
        if ((fps - manifest.fps_nominal) / manifest.fps_nominal).abs() > 0.01 {
            warnings.push(format!(
                "{}: frame index runs at {fps:.3} fps, manifest says {}",
                r.participant_id, manifest.fps_nominal
            ));
        }
    }

    Ok(DyadSession {
        recordings,
        alignment_offset_us: manifest.alignment_offset_us,
        fps_nominal: manifest.fps_nominal,
        warnings,
    })
}

pub fn load_session_from_path(path: &Path, exec: Execution) -> Result<DyadSession, IngestError> {
    load_session(&SessionManifest::from_path(path)?, exec)
}
