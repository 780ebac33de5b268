//! Frame numbering from presentation timestamps, tracker-to-video clock
//! mapping, gaze-to-frame assignment, and cross-recording alignment.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::geometry::PixelPoint;
use crate::ingest::{
    DyadSession, FaceFrame, FaceTable, FrameIndex, GazeSample, RecordingBundle, SceneSize,
    SyncSignal, DURATION_TOLERANCE_US,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyncError {
    #[error("frame ends before the first valid frame ({f_ptse} < {ff_ptse})")]
    NegativeSpan { f_ptse: i64, ff_ptse: i64 },
    #[error("frame duration must be positive")]
    ZeroDuration,
    #[error("no sync signals to build a clock map from")]
    EmptySignals,
    #[error("sync anchor {index} moves a clock backwards")]
    NonMonotonicAnchors { index: usize },
    #[error("recordings do not overlap after shifting by {shift} frames")]
    NoOverlap { shift: i64 },
    #[error("recordings disagree on frame duration: {a} vs {b} µs")]
    FrameDurationMismatch { a: i64, b: i64 },
}

/// Result of mapping a presentation end time to a frame ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameNumber {
    pub index: u64,
    /// The span was more than a quarter frame away from a whole number of frames.
    pub drift: bool,
}

/// `(f_ptse - ff_ptse) / f_dur`, rounded half up.
pub fn frame_number(f_ptse: i64, ff_ptse: i64, f_dur: i64) -> Result<FrameNumber, SyncError> {
    if f_dur <= 0 {
        return Err(SyncError::ZeroDuration);
    }
    if f_ptse < ff_ptse {
        return Err(SyncError::NegativeSpan { f_ptse, ff_ptse });
    }
    let span = i128::from(f_ptse) - i128::from(ff_ptse);
    let dur = i128::from(f_dur);
    let index = (2 * span + dur) / (2 * dur);
    let residual = (span - index * dur).abs();
    Ok(FrameNumber {
        index: index as u64,
        drift: 4 * residual > dur,
    })
}

/// Piecewise-linear map over strictly increasing `xs`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Piecewise {
    xs: Vec<i64>,
    ys: Vec<i64>,
}

impl Piecewise {
    fn new(points: impl Iterator<Item = (i64, i64)>) -> Result<Self, SyncError> {
        let mut xs: Vec<i64> = Vec::new();
        let mut ys: Vec<i64> = Vec::new();
        for (i, (x, y)) in points.enumerate() {
            if let (Some(&lx), Some(&ly)) = (xs.last(), ys.last()) {
                if x < lx || y < ly {
                    return Err(SyncError::NonMonotonicAnchors { index: i });
                }
                if x == lx {
                    continue;
                }
            }
            xs.push(x);
            ys.push(y);
        }
        if xs.is_empty() {
            return Err(SyncError::EmptySignals);
        }
        Ok(Self { xs, ys })
    }

    fn eval(&self, x: i64) -> i64 {
        if self.xs.len() == 1 {
            return self.ys[0] + (x - self.xs[0]);
        }
        let last = self.xs.len() - 2;
        let seg = self.xs.partition_point(|&ax| ax <= x).saturating_sub(1).min(last);
        let (x0, x1) = (i128::from(self.xs[seg]), i128::from(self.xs[seg + 1]));
        let (y0, y1) = (i128::from(self.ys[seg]), i128::from(self.ys[seg + 1]));
        let y = y0 + ((i128::from(x) - x0) * (y1 - y0)).div_euclid(x1 - x0);
        y as i64
    }
}

/// Tracker clock → video clock → presentation clock.
///
/// Each sync record's `vts` is taken to be the video time at which the frame
/// `[ptsb, ptse)` starts, so the video→presentation anchors are `(vts, ptsb)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClockMap {
    anchors: Vec<SyncSignal>,
    device_to_video: Piecewise,
    video_to_pts: Piecewise,
}

impl ClockMap {
    pub fn anchors(&self) -> &[SyncSignal] {
        &self.anchors
    }

    pub fn device_to_video(&self, device_ts: i64) -> i64 {
        self.device_to_video.eval(device_ts)
    }

    pub fn video_to_pts(&self, video_ts: i64) -> i64 {
        self.video_to_pts.eval(video_ts)
    }

    pub fn device_to_pts(&self, device_ts: i64) -> i64 {
        self.video_to_pts(self.device_to_video(device_ts))
    }
}

pub fn build_clock_map(signals: &[SyncSignal]) -> Result<ClockMap, SyncError> {
    if signals.is_empty() {
        return Err(SyncError::EmptySignals);
    }
    let mut anchors = signals.to_vec();
    anchors.sort_by_key(|s| s.device_ts);
    Ok(ClockMap {
        device_to_video: Piecewise::new(anchors.iter().map(|s| (s.device_ts, s.video_ts)))?,
        video_to_pts: Piecewise::new(anchors.iter().map(|s| (s.video_ts, s.pts_begin)))?,
        anchors,
    })
}

/// How the (usually two) gaze samples falling into one frame become one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazeReduction {
    #[default]
    Mean,
    NearestMidpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SyncConfig {
    #[serde(default)]
    pub reduction: GazeReduction,
    #[serde(default)]
    pub execution: Execution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncedFrame {
    pub frame_idx: usize,
    /// Frame number within the source recording, before cross-recording alignment.
    pub source_idx: usize,
    pub gaze_px: Option<PixelPoint>,
    /// Index into the track's face table.
    pub face: Option<u32>,
}

impl SyncedFrame {
    fn empty(idx: usize) -> Self {
        Self {
            frame_idx: idx,
            source_idx: idx,
            gaze_px: None,
            face: None,
        }
    }

    pub fn gaze_valid(&self) -> bool {
        self.gaze_px.is_some()
    }
}

/// Frame numbers of every entry in the index, relative to the first frame.
pub fn frame_numbers(frames: &FrameIndex) -> Vec<FrameNumber> {
    let first = frames.frames[0].pts_end;
    frames
        .frames
        .iter()
        .map(|f| {
            frame_number(f.pts_end, first, frames.frame_duration_us)
                .expect("validated index is sorted with positive duration")
        })
        .collect()
}

/// Frame number each sample lands in, or `None` outside the video.
pub fn sample_frames(
    gaze: &[GazeSample],
    map: &ClockMap,
    frames: &FrameIndex,
    exec: Execution,
) -> Vec<Option<usize>> {
    let numbers = frame_numbers(frames);
    exec.map_slice(gaze, |s| {
        frames
            .locate(map.device_to_pts(s.device_ts))
            .map(|pos| numbers[pos].index as usize)
    })
}

pub fn assign_gaze_to_frames(
    gaze: &[GazeSample],
    map: &ClockMap,
    frames: &FrameIndex,
    scene: SceneSize,
    reduction: GazeReduction,
    exec: Execution,
) -> Vec<SyncedFrame> {
    if frames.is_empty() {
        return Vec::new();
    }
    let numbers = frame_numbers(frames);
    let len = numbers.last().map_or(0, |n| n.index as usize + 1);
    let mut out: Vec<SyncedFrame> = (0..len).map(SyncedFrame::empty).collect();

    let located = exec.map_slice(gaze, |s| {
        if !s.is_valid() {
            return None;
        }
        let pts = map.device_to_pts(s.device_ts);
        frames.locate(pts).map(|pos| (pos, pts))
    });

    // (sum_x, sum_y, n) for Mean; (best distance, x, y) for NearestMidpoint
    let mut acc = vec![(0.0f64, 0.0f64, 0u32); frames.len()];
    let mut best: Vec<Option<(i64, [f64; 2])>> = vec![None; frames.len()];
    for (s, loc) in gaze.iter().zip(located) {
        let Some((pos, pts)) = loc else { continue };
        match reduction {
            GazeReduction::Mean => {
                let a = &mut acc[pos];
                a.0 += s.gaze_norm[0];
                a.1 += s.gaze_norm[1];
                a.2 += 1;
            }
            GazeReduction::NearestMidpoint => {
                let f = frames.frames[pos];
                let d = (2 * pts - f.pts_begin - f.pts_end).abs();
                if best[pos].is_none_or(|(bd, _)| d < bd) {
                    best[pos] = Some((d, s.gaze_norm));
                }
            }
        }
    }

    let (w, h) = (f64::from(scene.width), f64::from(scene.height));
    for (pos, n) in numbers.iter().enumerate() {
        let norm = match reduction {
            GazeReduction::Mean => {
                let (sx, sy, k) = acc[pos];
                (k > 0).then(|| [sx / f64::from(k), sy / f64::from(k)])
            }
            GazeReduction::NearestMidpoint => best[pos].map(|(_, g)| g),
        };
        let slot = &mut out[n.index as usize];
        slot.source_idx = n.index as usize;
        slot.gaze_px = norm.map(|[x, y]| PixelPoint::new(x * w, y * h));
    }
    out
}

/// One participant's frame-indexed gaze plus the partner face it was aimed at.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantTrack {
    pub participant_id: String,
    pub frames: Vec<SyncedFrame>,
    pub faces: FaceTable,
    pub scene: SceneSize,
    pub frame_images: Option<PathBuf>,
    /// Frames whose PTS sat more than a quarter frame off the nominal grid.
    pub drift_warnings: usize,
}

impl ParticipantTrack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Partner face at aligned frame `i`, if one was recorded.
    pub fn face(&self, i: usize) -> Option<&FaceFrame> {
        let idx = self.frames.get(i)?.face?;
        self.faces.frames.get(idx as usize)
    }
}

pub fn synchronize_recording(
    bundle: &RecordingBundle,
    cfg: &SyncConfig,
) -> Result<ParticipantTrack, SyncError> {
    let map = build_clock_map(&bundle.sync_signals)?;
    let mut frames = assign_gaze_to_frames(
        &bundle.gaze,
        &map,
        &bundle.frames,
        bundle.scene,
        cfg.reduction,
        cfg.execution,
    );
    let numbers = frame_numbers(&bundle.frames);
    for (i, face) in bundle.partner_faces.frames.iter().enumerate() {
        if let Some(n) = numbers.get(face.frame_number) {
            frames[n.index as usize].face = Some(i as u32);
        }
    }
    Ok(ParticipantTrack {
        participant_id: bundle.participant_id.clone(),
        frames,
        faces: bundle.partner_faces.clone(),
        scene: bundle.scene,
        frame_images: bundle.frame_images.clone(),
        drift_warnings: numbers.iter().filter(|n| n.drift).count(),
    })
}

/// Both participants on one frame axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncedSession {
    pub tracks: [ParticipantTrack; 2],
    pub fps: f64,
    pub frame_duration_us: i64,
    /// Frames B was shifted by to land on A's timeline.
    pub shift_frames: i64,
}

impl SyncedSession {
    pub fn len(&self) -> usize {
        self.tracks[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Slot (0 for A, 1 for B) of a participant named either by slot letter or by id.
    pub fn slot(&self, participant: &str) -> Option<usize> {
        match participant {
            "A" => Some(0),
            "B" => Some(1),
            p => self.tracks.iter().position(|t| t.participant_id == p),
        }
    }
}

pub fn align_recordings(
    a: ParticipantTrack,
    b: ParticipantTrack,
    offset_us: i64,
    f_dur: i64,
) -> Result<SyncedSession, SyncError> {
    if f_dur <= 0 {
        return Err(SyncError::ZeroDuration);
    }
    let shift = (offset_us as f64 / f_dur as f64).round() as i64;
    // A frame `k` pairs with B frame `k - shift`.
    let start = shift.max(0);
    let end = (a.len() as i64).min(b.len() as i64 + shift);
    if end <= start {
        return Err(SyncError::NoOverlap { shift });
    }
    let trim = |mut t: ParticipantTrack, from: i64| {
        let from = from as usize;
        let n = (end - start) as usize;
        t.frames = t.frames.drain(from..from + n).collect();
        for (i, f) in t.frames.iter_mut().enumerate() {
            f.frame_idx = i;
        }
        t
    };
    Ok(SyncedSession {
        tracks: [trim(a, start), trim(b, start - shift)],
        fps: 1e6 / f_dur as f64,
        frame_duration_us: f_dur,
        shift_frames: shift,
    })
}

pub fn synchronize(session: &DyadSession, cfg: &SyncConfig) -> Result<SyncedSession, SyncError> {
    let [ra, rb] = &session.recordings;
    let (da, db) = (ra.frames.frame_duration_us, rb.frames.frame_duration_us);
    if (da - db).abs() > DURATION_TOLERANCE_US {
        return Err(SyncError::FrameDurationMismatch { a: da, b: db });
    }
    let (a, b) = cfg.execution.join(
        || synchronize_recording(ra, cfg),
        || synchronize_recording(rb, cfg),
    );
    align_recordings(a?, b?, session.alignment_offset_us, da)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{FramePts, GazeStream};
    use proptest::prelude::*;

    #[test]
    fn frame_number_examples() {
        assert_eq!(
            frame_number(130000, 130000, 40000).unwrap(),
            FrameNumber { index: 0, drift: false }
        );
        assert_eq!(frame_number(530000, 130000, 40000).unwrap().index, 10);
        // 100500 / 40000 = 2.51 rounds to 3; 19500 µs off the grid is drift
        assert_eq!(
            frame_number(230500, 130000, 40000).unwrap(),
            FrameNumber { index: 3, drift: true }
        );
        // 120500 / 40000 = 3.01, 500 µs residual
        assert_eq!(
            frame_number(250500, 130000, 40000).unwrap(),
            FrameNumber { index: 3, drift: false }
        );
        assert_eq!(frame_number(10, 20, 40000), Err(SyncError::NegativeSpan { f_ptse: 10, ff_ptse: 20 }));
        assert_eq!(frame_number(10, 0, 0), Err(SyncError::ZeroDuration));
    }

    fn anchor(device_ts: i64, video_ts: i64) -> SyncSignal {
        SyncSignal { device_ts, video_ts, pts_begin: video_ts + 90000, pts_end: video_ts + 130000 }
    }

    #[test]
    fn single_anchor_is_an_offset() {
        let m = build_clock_map(&[anchor(0, 0)]).unwrap();
        assert_eq!(m.device_to_video(20000), 20000);
        let m = build_clock_map(&[anchor(1_000_000, 0)]).unwrap();
        assert_eq!(m.device_to_video(1_020_000), 20000);
        assert_eq!(m.device_to_pts(1_020_000), 110000);
    }

    #[test]
    fn interpolation_and_extrapolation() {
        let m = build_clock_map(&[anchor(0, 0), anchor(1_000_000, 999_000)]).unwrap();
        assert_eq!(m.device_to_video(500_000), 499_500);
        assert_eq!(m.device_to_video(-1_000_000), -999_000);
        assert_eq!(m.device_to_video(2_000_000), 1_998_000);
        assert!(matches!(build_clock_map(&[]), Err(SyncError::EmptySignals)));
        assert!(matches!(
            build_clock_map(&[anchor(0, 10), anchor(5, 0)]),
            Err(SyncError::NonMonotonicAnchors { index: 1 })
        ));
    }

    fn index(n: i64, origin: i64) -> FrameIndex {
        FrameIndex::new(
            (0..n)
                .map(|k| FramePts { frame_seq: k as u64, pts_begin: origin + k * 40000, pts_end: origin + (k + 1) * 40000 })
                .collect(),
        )
        .unwrap()
    }

    const HD: SceneSize = SceneSize { width: 1920, height: 1080 };

    #[test]
    fn two_samples_per_frame_average() {
        let map = build_clock_map(&[anchor(0, 0)]).unwrap();
        let frames = index(3, 90000);
        let gaze: Vec<GazeSample> = (0..6)
            .map(|i| GazeSample::new(5000 + i * 20000, [0.5, 0.5], true))
            .collect();
        let out = assign_gaze_to_frames(&gaze, &map, &frames, HD, GazeReduction::Mean, Execution::Sequential);
        assert_eq!(out.len(), 3);
        for f in &out {
            assert_eq!(f.gaze_px, Some(PixelPoint::new(960.0, 540.0)));
        }
    }

    #[test]
    fn invalid_samples_excluded() {
        let map = build_clock_map(&[anchor(0, 0)]).unwrap();
        let frames = index(2, 90000);
        let gaze = vec![
            GazeSample::new(5000, [0.25, 0.5], true),
            GazeSample::new(25000, [0.9, 0.9], false),
            GazeSample::new(45000, [0.9, 0.9], false),
        ];
        let out = assign_gaze_to_frames(&gaze, &map, &frames, HD, GazeReduction::Mean, Execution::Parallel);
        assert_eq!(out[0].gaze_px, Some(PixelPoint::new(480.0, 540.0)));
        assert!(!out[1].gaze_valid());
    }

    #[test]
    fn nearest_midpoint_picks_one_sample() {
        let map = build_clock_map(&[anchor(0, 0)]).unwrap();
        let frames = index(1, 90000);
        let gaze = vec![
            GazeSample::new(2000, [0.1, 0.1], true),
            GazeSample::new(22000, [0.5, 0.5], true),
        ];
        let out = assign_gaze_to_frames(&gaze, &map, &frames, HD, GazeReduction::NearestMidpoint, Execution::Sequential);
        assert_eq!(out[0].gaze_px, Some(PixelPoint::new(960.0, 540.0)));
    }

    #[test]
    fn dropped_frame_leaves_a_gap() {
        let mut frames = index(4, 0).frames;
        frames.remove(2);
        let frames = FrameIndex::new(frames).unwrap();
        let numbers: Vec<u64> = frame_numbers(&frames).iter().map(|n| n.index).collect();
        assert_eq!(numbers, vec![0, 1, 3]);
        let map = build_clock_map(&[SyncSignal { device_ts: 0, video_ts: 0, pts_begin: 0, pts_end: 40000 }]).unwrap();
        let gaze: Vec<GazeSample> = (0..8).map(|i| GazeSample::new(i * 20000 + 1, [0.5, 0.5], true)).collect();
        let out = assign_gaze_to_frames(&gaze, &map, &frames, HD, GazeReduction::Mean, Execution::Sequential);
        assert_eq!(out.len(), 4);
        assert!(out[2].gaze_px.is_none());
        assert!(out[3].gaze_px.is_some());
    }

    fn track(n: usize, tag: f64) -> ParticipantTrack {
        ParticipantTrack {
            participant_id: "X".into(),
            frames: (0..n)
                .map(|i| SyncedFrame { frame_idx: i, source_idx: i, gaze_px: Some(PixelPoint::new(i as f64, tag)), face: None })
                .collect(),
            faces: FaceTable::default(),
            scene: HD,
            frame_images: None,
            drift_warnings: 0,
        }
    }

    #[test]
    fn alignment_shifts_and_trims() {
        let s = align_recordings(track(10, 0.0), track(10, 1.0), 0, 40000).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s.tracks[1].frames[3].source_idx, 3);

        let s = align_recordings(track(10, 0.0), track(10, 1.0), 80000, 40000).unwrap();
        assert_eq!(s.shift_frames, 2);
        assert_eq!(s.len(), 8);
        assert_eq!(s.tracks[0].frames[0].source_idx, 2);
        assert_eq!(s.tracks[1].frames[0].source_idx, 0);
        assert_eq!(s.tracks[1].frames[7].frame_idx, 7);

        let s = align_recordings(track(10, 0.0), track(10, 1.0), -80000, 40000).unwrap();
        assert_eq!(s.tracks[0].frames[0].source_idx, 0);
        assert_eq!(s.tracks[1].frames[0].source_idx, 2);

        assert_eq!(
            align_recordings(track(10, 0.0), track(10, 1.0), 400000, 40000).unwrap_err(),
            SyncError::NoOverlap { shift: 10 }
        );
    }

    #[test]
    fn session_sync_from_bundles() {
        let map_signals = vec![anchor(1_000_000, 0)];
        let stream = GazeStream {
            samples: (0..10).map(|i| GazeSample::new(1_005_000 + i * 20000, [0.5, 0.25], true)).collect(),
            sync_signals: map_signals,
            malformed_lines: 0,
        };
        let faces = FaceTable { frames: vec![FaceFrame::empty(1)], ..Default::default() };
        let bundle = RecordingBundle::new("P", stream, index(5, 90000), faces, HD).unwrap();
        let t = synchronize_recording(&bundle, &SyncConfig::default()).unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(t.frames[0].gaze_px, Some(PixelPoint::new(960.0, 270.0)));
        assert!(t.face(0).is_none());
        assert_eq!(t.face(1).map(|f| f.frame_number), Some(1));
    }

    proptest! {
        #[test]
        fn frame_number_exact_on_grid(ff in -1_000_000i64..1_000_000, dur in 1i64..100_000, k in 0i64..100_000) {
            let r = frame_number(ff + k * dur, ff, dur).unwrap();
            prop_assert_eq!(r, FrameNumber { index: k as u64, drift: false });
        }

        #[test]
        fn frame_number_monotone(ff in 0i64..1000, a in 0i64..10_000_000, b in 0i64..10_000_000, dur in 1i64..100_000) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(frame_number(ff + lo, ff, dur).unwrap().index <= frame_number(ff + hi, ff, dur).unwrap().index);
        }

        #[test]
        fn clock_map_reproduces_anchors_and_preserves_order(
            steps in prop::collection::vec((1i64..2_000_000, 0i64..2_000_000), 1..20),
            q1 in -5_000_000i64..50_000_000, q2 in -5_000_000i64..50_000_000,
        ) {
            let mut d = 0i64;
            let mut v = 0i64;
            let anchors: Vec<SyncSignal> = steps.iter().map(|&(dd, dv)| {
                d += dd;
                v += dv;
                SyncSignal { device_ts: d, video_ts: v, pts_begin: v + 7, pts_end: v + 40007 }
            }).collect();
            let m = build_clock_map(&anchors).unwrap();
            for a in &anchors {
                prop_assert_eq!(m.device_to_video(a.device_ts), a.video_ts);
            }
            let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            prop_assert!(m.device_to_pts(lo) <= m.device_to_pts(hi));
        }

        #[test]
        fn each_valid_sample_lands_in_one_frame(ts in prop::collection::btree_set(0i64..2_000_000, 1..200)) {
            let map = build_clock_map(&[anchor(0, 0)]).unwrap();
            let frames = index(40, 90000);
            let gaze: Vec<GazeSample> = ts.iter().map(|&t| GazeSample::new(t, [0.5, 0.5], true)).collect();
            let per_sample = sample_frames(&gaze, &map, &frames, Execution::Parallel);
            let inside = per_sample.iter().filter(|f| f.is_some()).count();
            let expected = ts.iter().filter(|&&t| t < 40 * 40000).count();
            prop_assert_eq!(inside, expected);
            for (&t, f) in ts.iter().zip(&per_sample) {
                if let Some(f) = f {
                    prop_assert_eq!(*f as i64, t / 40000);
                }
            }
        }
    }
}
