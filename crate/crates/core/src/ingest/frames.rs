//! Frame-index sidecar: one row per decoded video frame with its
//! presentation span, `frame_seq,pts_begin,pts_end`, integer µs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::IngestError;

/// Allowed spread of per-frame durations, µs.
pub const DURATION_TOLERANCE_US: i64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePts {
    pub frame_seq: u64,
    pub pts_begin: i64,
    pub pts_end: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameIndex {
    pub frames: Vec<FramePts>,
    /// Display duration of one frame, µs.
    pub frame_duration_us: i64,
}

impl FrameIndex {
    /// Validates ordering, overlap and duration consistency; frames are sorted by `pts_begin`.
    pub fn new(mut frames: Vec<FramePts>) -> Result<Self, IngestError> {
        if frames.is_empty() {
            return Err(IngestError::EmptyIndex);
        }
        frames.sort_by_key(|f| f.pts_begin);
        for (row, f) in frames.iter().enumerate() {
            if f.pts_end <= f.pts_begin {
                return Err(IngestError::InvalidSpan { row });
            }
        }
        for (row, w) in frames.windows(2).enumerate() {
            if w[1].pts_begin < w[0].pts_end {
                return Err(IngestError::OverlappingPts { row: row + 1 });
            }
        }
        let durations = frames.iter().map(|f| f.pts_end - f.pts_begin);
        let (min, max) = durations
            .clone()
            .fold((i64::MAX, i64::MIN), |(lo, hi), d| (lo.min(d), hi.max(d)));
        if max - min > DURATION_TOLERANCE_US {
            let first = frames[0].pts_end - frames[0].pts_begin;
            let row = frames
                .iter()
                .position(|f| ((f.pts_end - f.pts_begin) - first).abs() > DURATION_TOLERANCE_US)
                .unwrap_or(0);
            return Err(IngestError::InconsistentDuration {
                row,
                expected: first,
                found: frames[row].pts_end - frames[row].pts_begin,
            });
        }
        let total: i128 = durations.map(i128::from).sum();
        let n = frames.len() as i128;
        let frame_duration_us = ((total + n / 2) / n) as i64;
        Ok(Self {
            frames,
            frame_duration_us,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Position of the frame whose `[pts_begin, pts_end)` contains `pts`.
    pub fn locate(&self, pts: i64) -> Option<usize> {
        let i = self.frames.partition_point(|f| f.pts_begin <= pts);
        let f = self.frames.get(i.checked_sub(1)?)?;
        (pts < f.pts_end).then_some(i - 1)
    }
}

#[derive(Deserialize)]
struct Row {
    frame_seq: u64,
    pts_begin: i64,
    pts_end: i64,
}

pub fn parse_frame_index(input: &[u8]) -> Result<FrameIndex, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader.headers().map_err(|e| IngestError::Csv {
        line: 1,
        message: e.to_string(),
    })?;
    for required in ["frame_seq", "pts_begin", "pts_end"] {
        if !header.iter().any(|h| h == required) {
            return Err(IngestError::MissingColumn(required.into()));
        }
    }
    let frames = reader
        .deserialize::<Row>()
        .map(|r| {
            r.map(|r| FramePts {
                frame_seq: r.frame_seq,
                pts_begin: r.pts_begin,
                pts_end: r.pts_end,
            })
            .map_err(|e| IngestError::Csv {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    FrameIndex::new(frames)
}

pub fn write_frame_index(index: &FrameIndex) -> String {
    let mut out = String::with_capacity(32 + index.frames.len() * 24);
    out.push_str("frame_seq,pts_begin,pts_end\n");
    for f in &index.frames {
        let _ = writeln!(out, "{},{},{}", f.frame_seq, f.pts_begin, f.pts_end);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duration_from_two_rows() {
        let idx = parse_frame_index(b"frame_seq,pts_begin,pts_end\n0,90000,130000\n1,130000,170000\n")
            .unwrap();
        assert_eq!(idx.frame_duration_us, 40000);
        assert_eq!(idx.len(), 2);
    }

    #[test]
    fn overlapping_spans() {
        let r = parse_frame_index(b"frame_seq,pts_begin,pts_end\n0,90000,130000\n1,120000,160000\n");
        assert!(matches!(r, Err(IngestError::OverlappingPts { row: 1 })));
    }

    #[test]
    fn inconsistent_duration() {
        let r = parse_frame_index(b"frame_seq,pts_begin,pts_end\n0,0,40000\n1,40000,80002\n");
        assert!(matches!(
            r,
            Err(IngestError::InconsistentDuration { row: 1, expected: 40000, found: 40002 })
        ));
        // one microsecond of rounding is fine
        let ok = parse_frame_index(b"frame_seq,pts_begin,pts_end\n0,0,33366\n1,33366,66733\n2,66733,100099\n")
            .unwrap();
        assert_eq!(ok.frame_duration_us, 33366);
    }

    #[test]
    fn header_and_empty_errors() {
        assert!(matches!(
            parse_frame_index(b"seq,pts_begin,pts_end\n"),
            Err(IngestError::MissingColumn(c)) if c == "frame_seq"
        ));
        assert!(matches!(
            parse_frame_index(b"frame_seq,pts_begin,pts_end\n"),
            Err(IngestError::EmptyIndex)
        ));
        assert!(matches!(
            parse_frame_index(b"frame_seq,pts_begin,pts_end\n0,10,10\n"),
            Err(IngestError::InvalidSpan { row: 0 })
        ));
        assert!(matches!(
            parse_frame_index(b"frame_seq,pts_begin,pts_end\n0,x,10\n"),
            Err(IngestError::Csv { .. })
        ));
    }

    #[test]
    fn locate_half_open() {
        let idx = FrameIndex::new(vec![
            FramePts { frame_seq: 0, pts_begin: 0, pts_end: 40 },
            FramePts { frame_seq: 1, pts_begin: 40, pts_end: 80 },
            FramePts { frame_seq: 2, pts_begin: 120, pts_end: 160 },
        ])
        .unwrap();
        assert_eq!(idx.locate(-1), None);
        assert_eq!(idx.locate(0), Some(0));
        assert_eq!(idx.locate(39), Some(0));
        assert_eq!(idx.locate(40), Some(1));
        assert_eq!(idx.locate(100), None);
        assert_eq!(idx.locate(159), Some(2));
        assert_eq!(idx.locate(160), None);
    }

    proptest! {
        #[test]
        fn generated_index_spans_n_frames(n in 1usize..5000, origin in 0i64..1_000_000) {
            let frames = (0..n as i64)
                .map(|k| FramePts { frame_seq: k as u64, pts_begin: origin + k * 40000, pts_end: origin + (k + 1) * 40000 })
                .collect();
            let idx = FrameIndex::new(frames).unwrap();
            let text = write_frame_index(&idx);
            let back = parse_frame_index(text.as_bytes()).unwrap();
            prop_assert_eq!(&back, &idx);
            prop_assert_eq!(back.frames[n - 1].pts_end - back.frames[0].pts_begin, n as i64 * 40000);
        }

        #[test]
        fn never_panics(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
            let _ = parse_frame_index(&bytes);
        }
    }
}
