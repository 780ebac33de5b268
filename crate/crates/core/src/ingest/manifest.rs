//! Dyad session manifest (TOML).
//!
//! ```toml
//! fps_nominal = 25.0          # optional, default 25
//! alignment_offset_us = 0     # B's video start on A's timeline, µs
//!
//! [recording_a]
//! participant = "A"
//! gaze = "a_gaze.jsonl"       # A's gaze stream
//! faces = "a_faces.csv"       # B's face as seen by A's scene camera
//! frames = "a_frames.csv"     # A's scene-video frame index
//! scene_width = 1920
//! scene_height = 1080
//! frame_images = "frames_a"   # optional
//!
//! [recording_b]
//! # same keys
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::IngestError;

pub const DEFAULT_FPS: f64 = 25.0;

fn default_fps() -> f64 {
    DEFAULT_FPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingEntry {
    pub participant: String,
    pub gaze: PathBuf,
    pub faces: PathBuf,
    pub frames: PathBuf,
    pub scene_width: u32,
    pub scene_height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_images: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionManifest {
    #[serde(default = "default_fps")]
    pub fps_nominal: f64,
    #[serde(default)]
    pub alignment_offset_us: i64,
    pub recording_a: RecordingEntry,
    pub recording_b: RecordingEntry,
}

impl SessionManifest {
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let m: SessionManifest =
            toml::from_str(text).map_err(|e| IngestError::Manifest(e.message().to_string()))?;
        m.validate()?;
        Ok(m)
    }

    /// Reads the manifest and rewrites its relative paths against the manifest's directory.
    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut m = Self::parse(&text).map_err(|e| e.in_file(path))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for r in [&mut m.recording_a, &mut m.recording_b] {
            r.gaze = base.join(&r.gaze);
            r.faces = base.join(&r.faces);
            r.frames = base.join(&r.frames);
            if let Some(dir) = &r.frame_images {
                r.frame_images = Some(base.join(dir));
            }
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.fps_nominal.is_finite() && self.fps_nominal > 0.0) {
            return Err(IngestError::Manifest(format!(
                "fps_nominal must be positive, got {}",
                self.fps_nominal
            )));
        }
        for r in [&self.recording_a, &self.recording_b] {
            if r.scene_width == 0 || r.scene_height == 0 {
                return Err(IngestError::InvalidScene {
                    width: r.scene_width,
                    height: r.scene_height,
                });
            }
        }
        if self.recording_a.participant == self.recording_b.participant {
            return Err(IngestError::Manifest(
                "the two recordings need distinct participant ids".into(),
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest always serializes")
    }
}
