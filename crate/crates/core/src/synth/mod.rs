//! Synthetic dyad sessions with known ground truth.
//!
//! A [`SessionScript`] says what each participant looks at and when.
//! [`generate`] renders it into the ingest formats; [`oracle_labels`] derives
//! the per-frame signals an analysis of those files has to reproduce.
//!
//! Script files are TOML. Times are seconds on A's video timeline, and every
//! interval is snapped to whole frames (`round(t * fps)`).
//!
//! ```toml
//! seed = 7
//! duration_s = 60.0
//! fps = 25.0              # default 25
//! gaze_rate_hz = 50.0     # default 50, at least fps
//! jitter_us = 4000.0      # Gaussian clock noise, default 0
//! drift_ppm = 0.0         # tracker clock rate error, default 0
//! offset_us = 0           # B's video start on A's timeline
//! scene_width = 1088      # default 1088 x 1080
//! scene_height = 1080
//!
//! [a]
//! id = "A"
//! default_state = "away"  # eyes | face | away
//! dropped_frames = [120]  # frames missing from this scene video
//! states = [{ state = "eyes", start_s = 2.0, end_s = 2.36 }]
//! gaze_lost = [{ start_s = 10.0, end_s = 11.0 }]
//! face_lost = [{ start_s = 20.0, end_s = 21.0 }]  # A's face, undetected by B's camera
//! au_bursts = [{ au = 12, start_s = 5.0, end_s = 7.0, intensity = 2.5 }]
//!
//! [b]
//! id = "B"
//! ```

pub mod template;

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filters::FilterSignal;
use crate::geometry::PixelPoint;
use crate::ingest::{
    DyadSession, FaceFrame, FaceTable, FrameIndex, FramePts, GazeSample, GazeStream,
    RecordingBundle, RecordingEntry, SceneSize, SessionManifest, SyncSignal, LANDMARK_COUNT,
};

/// AU intensity columns written, as OpenFace does.
pub const INTENSITY_AUS: [u8; 17] = [1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17, 20, 23, 25, 26, 45];
/// AU presence columns written.
pub const PRESENCE_AUS: [u8; 18] = [1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17, 20, 23, 25, 26, 28, 45];

pub const PTS_ORIGIN_US: i64 = 90_000;
pub const SYNC_PERIOD_US: i64 = 1_000_000;
pub const MANIFEST_FILE: &str = "session.toml";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, SynthError> {
    Err(SynthError::InvalidScript(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GazeState {
    Eyes,
    Face,
    #[default]
    Away,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateInterval {
    pub state: GazeState,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuBurst {
    pub au: u8,
    pub start_s: f64,
    pub end_s: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticipantScript {
    /// Empty means "A" or "B" by slot.
    pub id: String,
    pub default_state: GazeState,
    pub dropped_frames: Vec<usize>,
    pub states: Vec<StateInterval>,
    pub gaze_lost: Vec<Interval>,
    pub face_lost: Vec<Interval>,
    pub au_bursts: Vec<AuBurst>,
}

impl ParticipantScript {
    pub fn with_state(mut self, state: GazeState, start_s: f64, end_s: f64) -> Self {
        self.states.push(StateInterval { state, start_s, end_s });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionScript {
    pub seed: u64,
    pub duration_s: f64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default = "default_gaze_rate")]
    pub gaze_rate_hz: f64,
    #[serde(default)]
    pub jitter_us: f64,
    #[serde(default)]
    pub drift_ppm: f64,
    #[serde(default)]
    pub offset_us: i64,
    #[serde(default = "default_width")]
    pub scene_width: u32,
    #[serde(default = "default_height")]
    pub scene_height: u32,
    #[serde(default)]
    pub a: ParticipantScript,
    #[serde(default)]
    pub b: ParticipantScript,
}

fn default_fps() -> f64 {
    25.0
}
fn default_gaze_rate() -> f64 {
    50.0
}
fn default_width() -> u32 {
    1088
}
fn default_height() -> u32 {
    1080
}

impl SessionScript {
    /// Both participants looking away for the whole session, no noise.
    pub fn new(seed: u64, duration_s: f64) -> Self {
        Self {
            seed,
            duration_s,
            fps: default_fps(),
            gaze_rate_hz: default_gaze_rate(),
            jitter_us: 0.0,
            drift_ppm: 0.0,
            offset_us: 0,
            scene_width: default_width(),
            scene_height: default_height(),
            a: ParticipantScript::default(),
            b: ParticipantScript::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let script: Self =
            toml::from_str(text).map_err(|e| SynthError::InvalidScript(e.message().to_string()))?;
        script.validate()?;
        Ok(script)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("script always serializes")
    }

    pub fn frame_duration_us(&self) -> i64 {
        (1e6 / self.fps).round() as i64
    }

    pub fn gaze_period_us(&self) -> i64 {
        (1e6 / self.gaze_rate_hz).round() as i64
    }

    /// Frames in each recording's scene video.
    pub fn frame_count(&self) -> usize {
        (self.duration_s * 1e6 / self.frame_duration_us() as f64).round() as usize
    }

    /// Whole frames B's video starts after A's.
    pub fn shift_frames(&self) -> i64 {
        (self.offset_us as f64 / self.frame_duration_us() as f64).round() as i64
    }

    /// Frames of A's timeline that both videos cover.
    pub fn aligned_range(&self) -> Range<usize> {
        let n = self.frame_count() as i64;
        let s = self.shift_frames();
        let start = s.max(0);
        let end = n.min(n + s).max(start);
        start as usize..end as usize
    }

    pub fn participant(&self, slot: usize) -> &ParticipantScript {
        if slot == 0 {
            &self.a
        } else {
            &self.b
        }
    }

    pub fn participant_id(&self, slot: usize) -> String {
        match self.participant(slot).id.as_str() {
            "" => ["A", "B"][slot].to_string(),
            id => id.to_string(),
        }
    }

    fn frames_of(&self, start_s: f64, end_s: f64) -> Range<usize> {
        let f = self.frame_duration_us() as f64;
        let at = |t: f64| (t * 1e6 / f).round() as usize;
        at(start_s)..at(end_s)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return invalid(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if !(self.fps.is_finite() && self.fps > 0.0 && self.fps <= 1e6) {
            return invalid(format!("fps out of range: {}", self.fps));
        }
        if !(self.gaze_rate_hz.is_finite() && self.gaze_rate_hz > 0.0 && self.gaze_rate_hz <= 1e5) {
            return invalid(format!("gaze_rate_hz out of range: {}", self.gaze_rate_hz));
        }
        if self.gaze_period_us() > self.frame_duration_us() {
            return invalid("gaze_rate_hz must be at least fps so every frame gets a sample");
        }
        if !(self.jitter_us.is_finite() && self.jitter_us >= 0.0) {
            return invalid(format!("jitter_us must be non-negative, got {}", self.jitter_us));
        }
        if !(self.drift_ppm.is_finite() && self.drift_ppm.abs() <= 1000.0) {
            return invalid(format!("drift_ppm must be within ±1000, got {}", self.drift_ppm));
        }
        if self.scene_width < 64 || self.scene_height < 64 || self.scene_width * 4 < self.scene_height * 3 {
            return invalid(format!(
                "scene {}x{} is too small or too narrow",
                self.scene_width, self.scene_height
            ));
        }
        let n = self.frame_count();
        if n < 2 {
            return invalid("session is shorter than two frames");
        }
        if self.aligned_range().is_empty() {
            return invalid(format!("offset_us {} leaves no overlap", self.offset_us));
        }
        if self.participant_id(0) == self.participant_id(1) {
            return invalid("participant ids must differ");
        }
        for slot in 0..2 {
            self.validate_participant(slot)?;
        }
        Ok(())
    }

    fn validate_participant(&self, slot: usize) -> Result<(), SynthError> {
        let p = self.participant(slot);
        let who = self.participant_id(slot);
        let check = |what: &str, start: f64, end: f64| -> Result<Range<usize>, SynthError> {
            if !(start.is_finite() && end.is_finite() && 0.0 <= start && start < end && end <= self.duration_s) {
                return invalid(format!("{who}: {what} [{start}, {end}) is outside the session"));
            }
            let r = self.frames_of(start, end);
            if r.is_empty() {
                return invalid(format!("{who}: {what} [{start}, {end}) is shorter than a frame"));
            }
            Ok(r)
        };
        let disjoint = |what: &str, mut ranges: Vec<Range<usize>>| -> Result<(), SynthError> {
            ranges.sort_by_key(|r| r.start);
            if ranges.windows(2).any(|w| w[1].start < w[0].end) {
                return invalid(format!("{who}: {what} intervals overlap"));
            }
            Ok(())
        };

        let states = p
            .states
            .iter()
            .map(|s| check("state", s.start_s, s.end_s))
            .collect::<Result<_, _>>()?;
        disjoint("state", states)?;
        let lost = p.gaze_lost.iter().map(|i| check("gaze_lost", i.start_s, i.end_s)).collect::<Result<_, _>>()?;
        disjoint("gaze_lost", lost)?;
        let lost = p.face_lost.iter().map(|i| check("face_lost", i.start_s, i.end_s)).collect::<Result<_, _>>()?;
        disjoint("face_lost", lost)?;

        let mut bursts: BTreeMap<u8, Vec<Range<usize>>> = BTreeMap::new();
        for b in &p.au_bursts {
            if !PRESENCE_AUS.contains(&b.au) {
                return invalid(format!("{who}: AU{:02} is not an OpenFace action unit", b.au));
            }
            if !(b.intensity.is_finite() && (0.0..=5.0).contains(&b.intensity)) {
                return invalid(format!("{who}: AU{:02} intensity {} is outside 0-5", b.au, b.intensity));
            }
            bursts.entry(b.au).or_default().push(check("au burst", b.start_s, b.end_s)?);
        }
        for (au, ranges) in bursts {
            disjoint(&format!("AU{au:02} burst"), ranges)?;
        }

        let n = self.frame_count();
        let mut dropped = p.dropped_frames.clone();
        dropped.sort_unstable();
        if dropped.windows(2).any(|w| w[0] == w[1]) {
            return invalid(format!("{who}: dropped_frames has duplicates"));
        }
        if let Some(k) = dropped.iter().find(|&&k| k == 0 || k + 1 >= n) {
            return invalid(format!("{who}: cannot drop frame {k}, the first and last frames must stay"));
        }
        Ok(())
    }
}

/// One participant's script resolved to frames of A's timeline, `0..n`.
struct Timeline {
    states: Vec<GazeState>,
    default_state: GazeState,
    gaze_lost: Vec<bool>,
    face_lost: Vec<bool>,
    /// Burst intensity per AU and frame.
    bursts: BTreeMap<u8, Vec<Option<f64>>>,
    dropped: Vec<bool>,
}

impl Timeline {
    fn new(script: &SessionScript, slot: usize) -> Self {
        let p = script.participant(slot);
        let n = script.frame_count();
        let mut states = vec![p.default_state; n];
        for s in &p.states {
            states[script.frames_of(s.start_s, s.end_s)].fill(s.state);
        }
        let mark = |intervals: &[Interval]| {
            let mut v = vec![false; n];
            for i in intervals {
                v[script.frames_of(i.start_s, i.end_s)].fill(true);
            }
            v
        };
        let mut bursts: BTreeMap<u8, Vec<Option<f64>>> = BTreeMap::new();
        for b in &p.au_bursts {
            bursts.entry(b.au).or_insert_with(|| vec![None; n])[script.frames_of(b.start_s, b.end_s)]
                .fill(Some(b.intensity));
        }
        let mut dropped = vec![false; n];
        for &k in &p.dropped_frames {
            dropped[k] = true;
        }
        Self {
            states,
            default_state: p.default_state,
            gaze_lost: mark(&p.gaze_lost),
            face_lost: mark(&p.face_lost),
            bursts,
            dropped,
        }
    }

    fn get<T: Copy>(v: &[T], c: i64, default: T) -> T {
        usize::try_from(c).ok().and_then(|c| v.get(c).copied()).unwrap_or(default)
    }

    fn state(&self, c: i64) -> GazeState {
        Self::get(&self.states, c, self.default_state)
    }

    fn gaze_lost(&self, c: i64) -> bool {
        Self::get(&self.gaze_lost, c, false)
    }

    fn face_lost(&self, c: i64) -> bool {
        Self::get(&self.face_lost, c, false)
    }

    fn burst(&self, au: u8, c: i64) -> Option<f64> {
        self.bursts.get(&au).and_then(|v| Self::get(v, c, None))
    }

    /// Own-recording frame `k` missing from the scene video.
    fn dropped(&self, k: i64) -> bool {
        Self::get(&self.dropped, k, false)
    }
}

/// Where the partner's face sits in one scene camera over time.
struct Camera {
    width: f64,
    height: f64,
    phase: [f64; 3],
}

impl Camera {
    fn face_at(&self, t_s: f64) -> (PixelPoint, f64) {
        let center = PixelPoint::new(
            self.width / 2.0 + 0.1 * self.width * (TAU * t_s / 17.0 + self.phase[0]).sin(),
            self.height / 2.0 + 0.05 * self.height * (TAU * t_s / 23.0 + self.phase[1]).sin(),
        );
        let scale = 0.2 * self.height * (1.0 + 0.1 * (TAU * t_s / 29.0 + self.phase[2]).sin());
        (center, scale)
    }
}

/// Random gaze-target choices shared by every frame of a state run.
#[derive(Clone, Copy)]
struct FrameDraw {
    eye: usize,
    away_side: f64,
    away_dx: f64,
    away_dy: f64,
}

fn disc(rng: &mut ChaCha8Rng, radius: f64) -> (f64, f64) {
    let a = rng.random_range(0.0..TAU);
    let r = radius * rng.random::<f64>().sqrt();
    (r * a.cos(), r * a.sin())
}

struct Jitter {
    normal: Option<Normal<f64>>,
    bound: f64,
}

impl Jitter {
    fn new(sigma: f64, period_us: i64) -> Self {
        Self {
            normal: (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma")),
            bound: (3.0 * sigma).min((period_us / 2 - 1) as f64),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> i64 {
        match &self.normal {
            Some(n) => n.sample(rng).clamp(-self.bound, self.bound).round() as i64,
            None => 0,
        }
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Generated files in memory plus per-sample truth.
#[derive(Debug, Clone)]
pub struct SyntheticSession {
    pub script: SessionScript,
    pub recordings: [RecordingBundle; 2],
    /// True scene-video frame of every gaze sample, in its own recording's numbering.
    pub sample_truth: [Vec<usize>; 2],
}

pub fn generate(script: &SessionScript) -> Result<SyntheticSession, SynthError> {
    script.validate()?;
    let timelines = [Timeline::new(script, 0), Timeline::new(script, 1)];
    let (a, ta) = render(script, 0, &timelines)?;
    let (b, tb) = render(script, 1, &timelines)?;
    Ok(SyntheticSession {
        script: script.clone(),
        recordings: [a, b],
        sample_truth: [ta, tb],
    })
}

fn render(
    script: &SessionScript,
    slot: usize,
    timelines: &[Timeline; 2],
) -> Result<(RecordingBundle, Vec<usize>), SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed ^ (slot as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let own = &timelines[slot];
    let partner = &timelines[1 - slot];
    let n = script.frame_count();
    let f_dur = script.frame_duration_us();
    let period = script.gaze_period_us();
    let shift = if slot == 0 { 0 } else { script.shift_frames() };
    let (w, h) = (f64::from(script.scene_width), f64::from(script.scene_height));
    let video_end = n as i64 * f_dur;

    let dev_start: i64 = rng.random_range(1i64 << 40..1i64 << 41);
    let drift = script.drift_ppm * 1e-6;
    let device = |v: i64| dev_start + v + (v as f64 * drift).round() as i64;
    let jitter = Jitter::new(script.jitter_us, period);
    let camera = Camera {
        width: w,
        height: h,
        phase: [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)],
    };
    let frame_time = |k: usize| (k as i64 * f_dur) as f64 / 1e6;

    // one draw per run of equal state, so neighbouring frames agree on the target
    let mut draws: Vec<FrameDraw> = Vec::with_capacity(n);
    for k in 0..n {
        let c = k as i64 + shift;
        if k > 0 && own.state(c) == own.state(c - 1) {
            draws.push(draws[k - 1]);
            continue;
        }
        draws.push(FrameDraw {
            eye: rng.random_range(0..2),
            away_side: if rng.random::<bool>() { 1.0 } else { -1.0 },
            away_dx: rng.random_range(0.8..1.2),
            away_dy: rng.random_range(-0.3..0.5),
        });
    }

    // scene video and the partner's face in it
    let mut frame_rows = Vec::with_capacity(n);
    let mut faces = Vec::with_capacity(n);
    for k in (0..n).filter(|&k| !own.dropped(k as i64)) {
        let ordinal = frame_rows.len();
        let begin = PTS_ORIGIN_US + k as i64 * f_dur;
        frame_rows.push(FramePts {
            frame_seq: ordinal as u64,
            pts_begin: begin,
            pts_end: begin + f_dur,
        });
        let c = k as i64 + shift;
        let mut face = if partner.face_lost(c) {
            let mut f = FaceFrame::empty(ordinal);
            f.landmarks = vec![PixelPoint::default(); LANDMARK_COUNT];
            f.au_intensity = INTENSITY_AUS.iter().map(|&id| (id, 0.0)).collect();
            f.au_presence = PRESENCE_AUS.iter().map(|&id| (id, 0)).collect();
            f
        } else {
            let (center, scale) = camera.face_at(frame_time(k));
            let mut f = template::canonical_face(center, scale);
            for &id in &INTENSITY_AUS {
                let v = partner.burst(id, c).unwrap_or_else(|| round2(rng.random_range(0.0..0.5)));
                f.au_intensity.insert(id, v);
            }
            for &id in &PRESENCE_AUS {
                f.au_presence.insert(id, u8::from(partner.burst(id, c).is_some()));
            }
            f
        };
        face.frame_number = ordinal;
        face.timestamp_s = frame_time(k);
        faces.push(face);
    }

    let sync_signals: Vec<SyncSignal> = (0..=video_end / SYNC_PERIOD_US)
        .map(|j| {
            let v = j * SYNC_PERIOD_US;
            SyncSignal {
                device_ts: device(v) + jitter.sample(&mut rng),
                video_ts: v,
                pts_begin: PTS_ORIGIN_US + v,
                pts_end: PTS_ORIGIN_US + v + f_dur,
            }
        })
        .collect();

    let phase = rng.random_range(period / 20..=period - period / 20);
    let mut samples = Vec::new();
    let mut truth = Vec::new();
    let mut v = phase;
    while v < video_end {
        let k = (v / f_dur) as usize;
        let c = k as i64 + shift;
        let ts = device(v) + jitter.sample(&mut rng);
        if own.gaze_lost(c) {
            samples.push(GazeSample::new(ts, [0.0, 0.0], false));
        } else {
            let (center, scale) = camera.face_at(frame_time(k));
            let d = draws[k];
            let unit = match own.state(c) {
                GazeState::Eyes => {
                    let (dx, dy) = disc(&mut rng, 0.03);
                    let e = template::EYE_CENTERS[d.eye];
                    (e.0 + dx, e.1 + dy)
                }
                GazeState::Face => {
                    let (dx, dy) = disc(&mut rng, 0.05);
                    (template::NOSE_TIP.0 + dx, template::NOSE_TIP.1 + dy)
                }
                GazeState::Away => {
                    let (dx, dy) = disc(&mut rng, 0.05);
                    let off = template::HALF_WIDTH + d.away_dx + dx;
                    let side = if (center.x + d.away_side * off * scale - w / 2.0).abs() < w / 2.0 - 1.0 {
                        d.away_side
                    } else {
                        -d.away_side
                    };
                    (side * off, d.away_dy + dy)
                }
            };
            let p = template::to_pixels(center, scale, unit);
            let norm = [(p.x / w).clamp(0.0, 1.0), (p.y / h).clamp(0.0, 1.0)];
            samples.push(GazeSample::new(ts, norm, true));
        }
        truth.push(k);
        v += period;
    }

    let frames = FrameIndex::new(frame_rows).map_err(|e| SynthError::InvalidScript(e.to_string()))?;
    let table = FaceTable {
        frames: faces,
        intensity_ids: INTENSITY_AUS.to_vec(),
        presence_ids: PRESENCE_AUS.to_vec(),
    };
    let stream = GazeStream {
        samples,
        sync_signals,
        malformed_lines: 0,
    };
    let scene = SceneSize {
        width: script.scene_width,
        height: script.scene_height,
    };
    let bundle = RecordingBundle::new(script.participant_id(slot), stream, frames, table, scene)
        .map_err(|e| SynthError::InvalidScript(e.to_string()))?;
    Ok((bundle, truth))
}

const FILE_STEMS: [&str; 2] = ["a", "b"];

impl SyntheticSession {
    /// The session as [`crate::ingest::load_session`] would return it from the written files.
    pub fn dyad(&self) -> DyadSession {
        DyadSession {
            recordings: self.recordings.clone(),
            alignment_offset_us: self.script.offset_us,
            fps_nominal: self.script.fps,
            warnings: Vec::new(),
        }
    }

    /// Manifest with paths relative to its own directory.
    pub fn manifest(&self) -> SessionManifest {
        let entry = |slot: usize| {
            let stem = FILE_STEMS[slot];
            let r = &self.recordings[slot];
            RecordingEntry {
                participant: r.participant_id.clone(),
                gaze: format!("{stem}_gaze.jsonl").into(),
                faces: format!("{stem}_faces.csv").into(),
                frames: format!("{stem}_frames.csv").into(),
                scene_width: r.scene.width,
                scene_height: r.scene.height,
                frame_images: None,
            }
        };
        SessionManifest {
            fps_nominal: self.script.fps,
            alignment_offset_us: self.script.offset_us,
            recording_a: entry(0),
            recording_b: entry(1),
        }
    }

    /// File name and contents of all seven files.
    pub fn files(&self) -> Vec<(String, String)> {
        let manifest = self.manifest();
        let mut out = Vec::with_capacity(7);
        for (r, e) in self.recordings.iter().zip([&manifest.recording_a, &manifest.recording_b]) {
            let (gaze, faces, frames) = r.to_files();
            out.push((e.gaze.display().to_string(), gaze));
            out.push((e.faces.display().to_string(), faces));
            out.push((e.frames.display().to_string(), frames));
        }
        out.push((MANIFEST_FILE.to_string(), manifest.to_toml()));
        out
    }

    /// Writes the files into `dir` and returns the manifest path.
    pub fn write_files(&self, dir: &Path) -> Result<PathBuf, SynthError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| SynthError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        for (name, contents) in self.files() {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(io(&path))?;
        }
        Ok(dir.join(MANIFEST_FILE))
    }
}

/// Reference signals over the aligned frames, indexed like the analyzer's output.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleLabels {
    pub eye: [FilterSignal; 2],
    pub face: [FilterSignal; 2],
    pub mutual: FilterSignal,
    /// Presence of each AU a participant's script bursts, on that participant's own face.
    pub au: [BTreeMap<u8, FilterSignal>; 2],
}

pub fn oracle_labels(script: &SessionScript) -> Result<OracleLabels, SynthError> {
    script.validate()?;
    let tl = [Timeline::new(script, 0), Timeline::new(script, 1)];
    let shifts = [0, script.shift_frames()];
    let range = script.aligned_range();
    let common: Vec<i64> = range.map(|c| c as i64).collect();

    let mut eye = Vec::with_capacity(2);
    let mut face = Vec::with_capacity(2);
    let mut au = Vec::with_capacity(2);
    for x in 0..2 {
        let p = 1 - x;
        let own_frame = |slot: usize, c: i64| c - shifts[slot];
        let valid: Vec<bool> = common
            .iter()
            .map(|&c| !tl[x].dropped(own_frame(x, c)) && !tl[x].gaze_lost(c) && !tl[p].face_lost(c))
            .collect();
        let states: Vec<GazeState> = common.iter().map(|&c| tl[x].state(c)).collect();
        let who = ["A", "B"][x];
        eye.push(FilterSignal::from_bools(
            format!("eye({who})"),
            &states.iter().map(|s| *s == GazeState::Eyes).collect::<Vec<_>>(),
            valid.clone(),
        ));
        face.push(FilterSignal::from_bools(
            format!("face({who})"),
            &states.iter().map(|s| *s != GazeState::Away).collect::<Vec<_>>(),
            valid,
        ));

        let visible: Vec<bool> = common
            .iter()
            .map(|&c| !tl[p].dropped(own_frame(p, c)) && !tl[x].face_lost(c))
            .collect();
        let mut map = BTreeMap::new();
        for &id in tl[x].bursts.keys() {
            let values: Vec<bool> = common.iter().map(|&c| tl[x].burst(id, c).is_some()).collect();
            map.insert(
                id,
                FilterSignal::from_bools(format!("au({who}, AU{id:02}, c)"), &values, visible.clone()),
            );
        }
        au.push(map);
    }

    let [ea, eb]: [FilterSignal; 2] = eye.try_into().expect("two participants");
    let mutual_values: Vec<bool> = (0..ea.len()).map(|i| ea.is_true(i) && eb.is_true(i)).collect();
    let mutual_valid: Vec<bool> = ea.valid.iter().zip(&eb.valid).map(|(a, b)| *a && *b).collect();
    let mutual = FilterSignal::from_bools("mutual(eye(A), eye(B))", &mutual_values, mutual_valid);
    Ok(OracleLabels {
        eye: [ea, eb],
        face: face.try_into().expect("two participants"),
        mutual,
        au: au.try_into().expect("two participants"),
    })
}

/// Frames per category in [`distribution_fixture`]: mutual eye, one-way A,
/// one-way B, mutual face only, none, and frames with A's gaze lost.
pub const DISTRIBUTION_FRAMES: [usize; 6] = [5800, 8700, 2900, 7250, 4350, 1000];

/// A 20-minute zero-jitter session whose 29000 valid frames split 20/30/10/25/15 %
/// across mutual eye contact, one-way A, one-way B, mutual face-only and none.
/// Categories are laid out in two rounds of whole-second blocks.
pub fn distribution_fixture(seed: u64) -> SessionScript {
    use GazeState::{Away, Eyes, Face};
    let mut script = SessionScript::new(seed, 1200.0);
    let pattern = [(Eyes, Eyes), (Eyes, Face), (Away, Eyes), (Face, Face), (Face, Away)];
    let mut t = 0.0;
    for _round in 0..2 {
        for (i, &(sa, sb)) in pattern.iter().enumerate() {
            let secs = DISTRIBUTION_FRAMES[i] as f64 / 25.0 / 2.0;
            script.a = std::mem::take(&mut script.a).with_state(sa, t, t + secs);
            script.b = std::mem::take(&mut script.b).with_state(sb, t, t + secs);
            t += secs;
        }
        let secs = DISTRIBUTION_FRAMES[5] as f64 / 25.0 / 2.0;
        script.a.gaze_lost.push(Interval { start_s: t, end_s: t + secs });
        t += secs;
    }
    script
}
