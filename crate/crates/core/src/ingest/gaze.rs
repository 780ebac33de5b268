//! Line-delimited gaze stream.
//!
//! Each line is one JSON object. Gaze records carry `ts`, `gp` and `v`;
//! sync records carry `ts`, `vts`, `ptsb` and `ptse`. Unknown keys are ignored.
//!
//! ```text
//! {"ts":1000,"gp":[0.5,0.5],"v":1}
//! {"ts":1000,"vts":0,"ptsb":90000,"ptse":130000}
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::IngestError;

/// Backwards clock steps up to this size are reordered instead of rejected.
pub const CLOCK_REGRESSION_TOLERANCE_US: i64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Validity {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    /// Tracker clock, µs.
    pub device_ts: i64,
    /// Scene-camera-normalized gaze point.
    pub gaze_norm: [f64; 2],
    pub validity: Validity,
}

impl GazeSample {
    /// Builds a sample, demoting it to `Invalid` if the coordinates leave the unit square.
    pub fn new(device_ts: i64, gaze_norm: [f64; 2], valid: bool) -> Self {
        let in_range = gaze_norm.iter().all(|c| (0.0..=1.0).contains(c));
        let validity = if valid && in_range {
            Validity::Valid
        } else {
            Validity::Invalid
        };
        Self {
            device_ts,
            gaze_norm,
            validity,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.validity == Validity::Valid
    }
}

/// Periodic clock correspondence emitted by the tracker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncSignal {
    pub device_ts: i64,
    pub video_ts: i64,
    pub pts_begin: i64,
    pub pts_end: i64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GazeStream {
    pub samples: Vec<GazeSample>,
    pub sync_signals: Vec<SyncSignal>,
    /// Lines that were not valid records, plus duplicate timestamps that were dropped.
    pub malformed_lines: usize,
}

#[derive(Deserialize)]
struct RawRecord {
    ts: Option<i64>,
    gp: Option<[f64; 2]>,
    v: Option<u8>,
    vts: Option<i64>,
    ptsb: Option<i64>,
    ptse: Option<i64>,
}

enum Record {
    Gaze(GazeSample),
    Sync(SyncSignal),
}

fn classify(line: &[u8]) -> Option<Record> {
    let raw: RawRecord = serde_json::from_slice(line).ok()?;
    let ts = raw.ts?;
    match (raw.gp, raw.v, raw.vts, raw.ptsb, raw.ptse) {
        (Some(gp), Some(v @ (0 | 1)), None, None, None) => {
            Some(Record::Gaze(GazeSample::new(ts, gp, v == 1)))
        }
        (None, None, Some(vts), Some(ptsb), Some(ptse)) if ptse > ptsb => {
            Some(Record::Sync(SyncSignal {
                device_ts: ts,
                video_ts: vts,
                pts_begin: ptsb,
                pts_end: ptse,
            }))
        }
        _ => None,
    }
}

/// Running order check for one record kind.
struct ClockGuard {
    latest: Option<i64>,
}

impl ClockGuard {
    fn check(&mut self, ts: i64, line: usize) -> Result<(), IngestError> {
        if let Some(latest) = self.latest {
            if ts < latest - CLOCK_REGRESSION_TOLERANCE_US {
                return Err(IngestError::NonMonotonicClock {
                    line,
                    ts,
                    previous: latest,
                });
            }
        }
        self.latest = Some(self.latest.map_or(ts, |l| l.max(ts)));
        Ok(())
    }
}

pub fn parse_gaze_stream(input: &[u8]) -> Result<GazeStream, IngestError> {
    let mut out = GazeStream::default();
    let mut gaze_clock = ClockGuard { latest: None };
    let mut sync_clock = ClockGuard { latest: None };

    for (idx, line) in input.split(|&b| b == b'\n').enumerate() {
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        match classify(line) {
            Some(Record::Gaze(s)) => {
                gaze_clock.check(s.device_ts, idx + 1)?;
                out.samples.push(s);
            }
            Some(Record::Sync(s)) => {
                sync_clock.check(s.device_ts, idx + 1)?;
                out.sync_signals.push(s);
            }
            None => out.malformed_lines += 1,
        }
    }

    if out.samples.is_empty() && out.sync_signals.is_empty() {
        return Err(IngestError::EmptyStream);
    }

    out.samples.sort_by_key(|s| s.device_ts);
    let before = out.samples.len();
    out.samples.dedup_by_key(|s| s.device_ts);
    out.malformed_lines += before - out.samples.len();

    out.sync_signals.sort_by_key(|s| s.device_ts);
    let before = out.sync_signals.len();
    out.sync_signals.dedup_by_key(|s| s.device_ts);
    out.malformed_lines += before - out.sync_signals.len();

    for (i, w) in out.sync_signals.windows(2).enumerate() {
        if w[1].video_ts < w[0].video_ts || w[1].pts_begin < w[0].pts_begin {
            return Err(IngestError::InvalidSyncSequence { index: i + 1 });
        }
    }
    Ok(out)
}

/// Writes both record kinds merged by timestamp; sync records go first on ties.
pub fn write_gaze_stream(samples: &[GazeSample], sync_signals: &[SyncSignal]) -> String {
    let mut out = String::with_capacity(samples.len() * 48 + sync_signals.len() * 64);
    let (mut i, mut j) = (0, 0);
    while i < samples.len() || j < sync_signals.len() {
        let take_sync = match (samples.get(i), sync_signals.get(j)) {
            (Some(g), Some(s)) => s.device_ts <= g.device_ts,
            (None, Some(_)) => true,
            _ => false,
        };
        if take_sync {
            let s = &sync_signals[j];
            let _ = writeln!(
                out,
                r#"{{"ts":{},"vts":{},"ptsb":{},"ptse":{}}}"#,
                s.device_ts, s.video_ts, s.pts_begin, s.pts_end
            );
            j += 1;
        } else {
            let g = &samples[i];
            let _ = writeln!(
                out,
                r#"{{"ts":{},"gp":[{:?},{:?}],"v":{}}}"#,
                g.device_ts,
                g.gaze_norm[0],
                g.gaze_norm[1],
                u8::from(g.is_valid())
            );
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn centre_sample() {
        let s = parse_gaze_stream(br#"{"ts":1000,"gp":[0.5,0.5],"v":1}"#).unwrap();
        assert_eq!(
            s.samples,
            vec![GazeSample {
                device_ts: 1000,
                gaze_norm: [0.5, 0.5],
                validity: Validity::Valid
            }]
        );
    }

    #[test]
    fn out_of_range_is_coerced_invalid() {
        let s = parse_gaze_stream(br#"{"ts":2000,"gp":[1.5,0.5],"v":1}"#).unwrap();
        assert_eq!(s.samples[0].validity, Validity::Invalid);
        assert_eq!(s.samples[0].gaze_norm, [1.5, 0.5]);
    }

    #[test]
    fn sync_record_and_malformed_lines() {
        let input = b"{\"ts\":10,\"vts\":0,\"ptsb\":90000,\"ptse\":130000}\r\n\
                      garbage\n\
                      {\"ts\":20,\"gp\":[0.1,0.2],\"v\":3}\n\
                      {\"ts\":30,\"vts\":0,\"ptsb\":5,\"ptse\":5}\n\
                      \n\
                      {\"ts\":40,\"gp\":[0.1,0.2],\"v\":0}\n";
        let s = parse_gaze_stream(input).unwrap();
        assert_eq!(s.sync_signals.len(), 1);
        assert_eq!(s.sync_signals[0].pts_end, 130000);
        assert_eq!(s.samples.len(), 1);
        assert_eq!(s.samples[0].validity, Validity::Invalid);
        assert_eq!(s.malformed_lines, 3);
    }

    #[test]
    fn empty_stream() {
        assert!(matches!(parse_gaze_stream(b""), Err(IngestError::EmptyStream)));
        assert!(matches!(parse_gaze_stream(b"nope\n{}"), Err(IngestError::EmptyStream)));
    }

    #[test]
    fn small_regressions_are_reordered_large_are_fatal() {
        let ok = b"{\"ts\":5000,\"gp\":[0.1,0.1],\"v\":1}\n{\"ts\":4500,\"gp\":[0.2,0.2],\"v\":1}\n";
        let s = parse_gaze_stream(ok).unwrap();
        assert_eq!(s.samples[0].device_ts, 4500);
        assert_eq!(s.samples[1].device_ts, 5000);

        let bad = b"{\"ts\":5000,\"gp\":[0.1,0.1],\"v\":1}\n{\"ts\":3000,\"gp\":[0.2,0.2],\"v\":1}\n";
        assert!(matches!(
            parse_gaze_stream(bad),
            Err(IngestError::NonMonotonicClock { line: 2, ts: 3000, previous: 5000 })
        ));
    }

    #[test]
    fn duplicate_timestamps_dropped() {
        let input = b"{\"ts\":1,\"gp\":[0.1,0.1],\"v\":1}\n{\"ts\":1,\"gp\":[0.2,0.2],\"v\":1}\n";
        let s = parse_gaze_stream(input).unwrap();
        assert_eq!(s.samples.len(), 1);
        assert_eq!(s.samples[0].gaze_norm, [0.1, 0.1]);
        assert_eq!(s.malformed_lines, 1);
    }

    #[test]
    fn regressing_video_clock_rejected() {
        let input = b"{\"ts\":1,\"vts\":100,\"ptsb\":0,\"ptse\":10}\n{\"ts\":2,\"vts\":50,\"ptsb\":0,\"ptse\":10}\n";
        assert!(matches!(
            parse_gaze_stream(input),
            Err(IngestError::InvalidSyncSequence { index: 1 })
        ));
    }

    fn arb_stream() -> impl Strategy<Value = (Vec<GazeSample>, Vec<SyncSignal>)> {
        let gaze = prop::collection::btree_map(
            0i64..10_000_000,
            ((-0.5..1.5f64), (-0.5..1.5f64), any::<bool>()),
            0..50,
        )
        .prop_map(|m| {
            m.into_iter()
                .map(|(ts, (x, y, v))| GazeSample::new(ts, [x, y], v))
                .collect::<Vec<_>>()
        });
        let sync = prop::collection::btree_set(0i64..10_000_000, 0..10).prop_map(|ts| {
            ts.into_iter()
                .enumerate()
                .map(|(k, t)| {
                    let k = k as i64;
                    SyncSignal {
                        device_ts: t,
                        video_ts: k * 1_000_000,
                        pts_begin: 90_000 + k * 1_000_000,
                        pts_end: 130_000 + k * 1_000_000,
                    }
                })
                .collect::<Vec<_>>()
        });
        (gaze, sync)
    }

    proptest! {
        #[test]
        fn write_parse_round_trip((gaze, sync) in arb_stream()) {
            prop_assume!(!gaze.is_empty() || !sync.is_empty());
            let text = write_gaze_stream(&gaze, &sync);
            let parsed = parse_gaze_stream(text.as_bytes()).unwrap();
            prop_assert_eq!(parsed.malformed_lines, 0);
            prop_assert_eq!(parsed.samples, gaze);
            prop_assert_eq!(parsed.sync_signals, sync);
        }

        #[test]
        fn never_panics(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
            let _ = parse_gaze_stream(&bytes);
        }
    }
}
