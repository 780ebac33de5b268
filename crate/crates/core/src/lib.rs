//! Eye-contact analysis for two conversing participants wearing head-mounted
//! eye trackers.
//!
//! Each participant's recording (gaze stream, scene-video frame index and the
//! partner's facial landmarks) is [`ingest`]ed, put on a common frame axis by
//! [`sync`], and queried with boolean filter expressions ([`filters`]) whose
//! results [`analytics`] turns into events and contact statistics.
//! [`synth`] generates sessions with known ground truth.

pub mod analytics;
pub mod exec;
pub mod filters;
pub mod geometry;
pub mod ingest;
pub mod sync;
pub mod synth;

pub use exec::Execution;
