//! Per-frame filter signals over a synchronized session and the combinators
//! that compose them.
//!
//! Frames that are invalid in any operand stay invalid in the result and
//! carry value 0. Nothing here treats "invalid" as "false".

mod emotion;
mod expr;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use emotion::EmotionTable;
pub use expr::{parse_filter_expr, AuMode, ExprError, FilterExpr, DEFAULT_SMOOTH_GAP, DEFAULT_SMOOTH_MIN};

use crate::exec::Execution;
use crate::geometry::{self, contact_score, PixelPoint};
use crate::ingest::FaceFrame;
use crate::sync::SyncedSession;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("unknown participant `{0}`")]
    UnknownParticipant(String),
    #[error("AU{au:02} is not available for {participant}")]
    UnknownAu { au: u8, participant: String },
    #[error("unknown emotion `{0}`")]
    UnknownEmotion(String),
    #[error("signals have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("`{0}` needs boolean signals")]
    NotBoolean(String),
    #[error("config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Boolean,
    Continuous,
}

/// A named per-frame signal with a validity mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSignal {
    pub name: String,
    pub kind: SignalKind,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl FilterSignal {
    /// Invalid entries are zeroed.
    pub fn new(name: impl Into<String>, kind: SignalKind, mut values: Vec<f64>, valid: Vec<bool>) -> Self {
        assert_eq!(values.len(), valid.len(), "values and validity mask differ in length");
        for (v, ok) in values.iter_mut().zip(&valid) {
            if !ok {
                *v = 0.0;
            }
        }
        Self {
            name: name.into(),
            kind,
            values,
            valid,
        }
    }

    pub fn from_bools(name: impl Into<String>, values: &[bool], valid: Vec<bool>) -> Self {
        Self::new(
            name,
            SignalKind::Boolean,
            values.iter().map(|&b| f64::from(u8::from(b))).collect(),
            valid,
        )
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Frame `i` is valid and true (value 1 for boolean, > 0 for continuous).
    pub fn is_true(&self, i: usize) -> bool {
        self.valid[i] && self.values[i] > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn true_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_true(i)).count()
    }

    fn require_boolean(&self, op: &str) -> Result<(), FilterError> {
        match self.kind {
            SignalKind::Boolean => Ok(()),
            SignalKind::Continuous => Err(FilterError::NotBoolean(op.to_string())),
        }
    }
}

/// Thresholds and ROI parameters. Loadable from TOML; missing keys take defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub eye_margin: f64,
    pub d_max: f64,
    pub face_threshold: f64,
    pub eye_threshold: f64,
    pub au_intensity_threshold: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            eye_margin: geometry::DEFAULT_EYE_MARGIN,
            d_max: geometry::DEFAULT_D_MAX,
            face_threshold: 1.0,
            eye_threshold: 1.0,
            au_intensity_threshold: 1.0,
            execution: Execution::default(),
        }
    }
}

impl FilterConfig {
    pub fn from_toml(text: &str) -> Result<Self, FilterError> {
        let cfg: FilterConfig =
            toml::from_str(text).map_err(|e| FilterError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |what: &str, v: f64| Err(FilterError::Config(format!("{what} out of range: {v}")));
        if !(self.eye_margin >= 1.0 && self.eye_margin.is_finite()) {
            return bad("eye_margin", self.eye_margin);
        }
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            return bad("d_max", self.d_max);
        }
        for (what, v) in [("face_threshold", self.face_threshold), ("eye_threshold", self.eye_threshold)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(what, v);
            }
        }
        if !(0.0..=5.0).contains(&self.au_intensity_threshold) {
            return bad("au_intensity_threshold", self.au_intensity_threshold);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Region {
    Face,
    Eyes,
}

fn slot(session: &SyncedSession, who: &str) -> Result<usize, FilterError> {
    session
        .slot(who)
        .ok_or_else(|| FilterError::UnknownParticipant(who.to_string()))
}

fn region_score(gaze: PixelPoint, face: &FaceFrame, region: Region, cfg: &FilterConfig) -> Option<f64> {
    match region {
        Region::Face => {
            let poly = geometry::face_polygon(face).ok()?;
            Some(contact_score(gaze, &poly, cfg.d_max))
        }
        Region::Eyes => {
            let (l, r) = geometry::eye_polygons(face, cfg.eye_margin).ok()?;
            Some(contact_score(gaze, &l, cfg.d_max).max(contact_score(gaze, &r, cfg.d_max)))
        }
    }
}

/// Contact score per frame; `None` where gaze or the partner's face is missing.
fn contact_scores(
    session: &SyncedSession,
    slot: usize,
    region: Region,
    cfg: &FilterConfig,
) -> Vec<Option<f64>> {
    let track = &session.tracks[slot];
    cfg.execution.map_range(track.len(), |i| {
        let gaze = track.frames[i].gaze_px?;
        let face = track.face(i).filter(|f| f.success)?;
        region_score(gaze, face, region, cfg)
    })
}

fn contact_signal(
    name: String,
    session: &SyncedSession,
    slot: usize,
    region: Region,
    threshold: Option<f64>,
    cfg: &FilterConfig,
) -> FilterSignal {
    let scores = contact_scores(session, slot, region, cfg);
    let valid = scores.iter().map(Option::is_some).collect();
    match threshold {
        Some(t) => {
            let values = scores
                .iter()
                .map(|s| f64::from(u8::from(s.is_some_and(|s| s >= t))))
                .collect();
            FilterSignal::new(name, SignalKind::Boolean, values, valid)
        }
        None => FilterSignal::new(
            name,
            SignalKind::Continuous,
            scores.iter().map(|s| s.unwrap_or(0.0)).collect(),
            valid,
        ),
    }
}

/// Gaze of `participant` on the partner's face region.
pub fn eval_face_contact(
    session: &SyncedSession,
    participant: &str,
    threshold: f64,
    cfg: &FilterConfig,
) -> Result<FilterSignal, FilterError> {
    let s = slot(session, participant)?;
    Ok(contact_signal(
        format!("face({participant})"),
        session,
        s,
        Region::Face,
        Some(threshold),
        cfg,
    ))
}

/// Gaze of `participant` on either of the partner's eye regions.
pub fn eval_eye_contact(
    session: &SyncedSession,
    participant: &str,
    threshold: f64,
    cfg: &FilterConfig,
) -> Result<FilterSignal, FilterError> {
    let s = slot(session, participant)?;
    Ok(contact_signal(
        format!("eye({participant})"),
        session,
        s,
        Region::Eyes,
        Some(threshold),
        cfg,
    ))
}

fn zip_signals(
    name: String,
    a: &FilterSignal,
    b: &FilterSignal,
    kind: SignalKind,
    op: impl Fn(f64, f64) -> f64,
) -> Result<FilterSignal, FilterError> {
    if a.len() != b.len() {
        return Err(FilterError::LengthMismatch(a.len(), b.len()));
    }
    let valid: Vec<bool> = a.valid.iter().zip(&b.valid).map(|(x, y)| *x && *y).collect();
    let values = a.values.iter().zip(&b.values).map(|(x, y)| op(*x, *y)).collect();
    Ok(FilterSignal::new(name, kind, values, valid))
}

/// Both signals true on frames valid in both.
pub fn eval_mutual(a: &FilterSignal, b: &FilterSignal) -> Result<FilterSignal, FilterError> {
    a.require_boolean("mutual")?;
    b.require_boolean("mutual")?;
    zip_signals(format!("mutual({}, {})", a.name, b.name), a, b, SignalKind::Boolean, f64::min)
}

/// Pointwise minimum. Boolean when both operands are.
pub fn and(a: &FilterSignal, b: &FilterSignal) -> Result<FilterSignal, FilterError> {
    let kind = if a.kind == SignalKind::Boolean && b.kind == SignalKind::Boolean {
        SignalKind::Boolean
    } else {
        SignalKind::Continuous
    };
    zip_signals(format!("{} & {}", a.name, b.name), a, b, kind, f64::min)
}

pub fn or(a: &FilterSignal, b: &FilterSignal) -> Result<FilterSignal, FilterError> {
    a.require_boolean("|")?;
    b.require_boolean("|")?;
    zip_signals(format!("{} | {}", a.name, b.name), a, b, SignalKind::Boolean, f64::max)
}

pub fn not(a: &FilterSignal) -> Result<FilterSignal, FilterError> {
    a.require_boolean("!")?;
    Ok(FilterSignal::new(
        format!("!{}", a.name),
        SignalKind::Boolean,
        a.values.iter().map(|v| 1.0 - v).collect(),
        a.valid.clone(),
    ))
}

/// Fills false gaps of at most `merge_gap` frames between true runs, then
/// drops true runs shorter than `min_duration`. Invalid frames are never
/// filled and end runs.
pub fn smooth(signal: &FilterSignal, merge_gap: usize, min_duration: usize) -> Result<FilterSignal, FilterError> {
    signal.require_boolean("smooth")?;
    let n = signal.len();
    let mut on: Vec<bool> = (0..n).map(|i| signal.is_true(i)).collect();

    let mut last_true: Option<usize> = None;
    for i in 0..n {
        if !signal.valid[i] {
            last_true = None;
            continue;
        }
        if on[i] {
            if let Some(k) = last_true {
                let gap = i - k - 1;
                if gap > 0 && gap <= merge_gap {
                    on[k + 1..i].fill(true);
                }
            }
            last_true = Some(i);
        }
    }

    let mut i = 0;
    while i < n {
        if !on[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && on[i] {
            i += 1;
        }
        if i - start < min_duration {
            on[start..i].fill(false);
        }
    }

    Ok(FilterSignal::from_bools(
        format!("smooth({}, {merge_gap}, {min_duration})", signal.name),
        &on,
        signal.valid.clone(),
    ))
}

fn au_ids(session: &SyncedSession, source: usize, mode: AuMode) -> &[u8] {
    let faces = &session.tracks[source].faces;
    match mode {
        AuMode::Presence => &faces.presence_ids,
        AuMode::Intensity => &faces.intensity_ids,
    }
}

/// Action unit of `participant`'s own face.
///
/// A participant's face is recorded by the partner's scene camera, so the
/// data comes from the other track. Valid wherever that face was detected.
pub fn eval_au(
    session: &SyncedSession,
    participant: &str,
    au: u8,
    mode: AuMode,
    threshold: f64,
    cfg: &FilterConfig,
) -> Result<FilterSignal, FilterError> {
    let own = slot(session, participant)?;
    let source = 1 - own;
    if !au_ids(session, source, mode).contains(&au) {
        return Err(FilterError::UnknownAu {
            au,
            participant: participant.to_string(),
        });
    }
    let track = &session.tracks[source];
    let per_frame = cfg.execution.map_range(track.len(), |i| {
        let face = track.face(i).filter(|f| f.success)?;
        Some(match mode {
            AuMode::Presence => face.au_presence.get(&au).copied().unwrap_or(0) == 1,
            AuMode::Intensity => face.au_intensity.get(&au).copied().unwrap_or(0.0) >= threshold,
        })
    });
    let valid = per_frame.iter().map(Option::is_some).collect();
    let values: Vec<bool> = per_frame.iter().map(|v| v.unwrap_or(false)).collect();
    let m = match mode {
        AuMode::Presence => "c",
        AuMode::Intensity => "r",
    };
    Ok(FilterSignal::from_bools(format!("au({participant}, AU{au:02}, {m})"), &values, valid))
}

/// Conjunction of the presence signals of every AU listed for `name`.
pub fn eval_emotion(
    session: &SyncedSession,
    participant: &str,
    name: &str,
    table: &EmotionTable,
    cfg: &FilterConfig,
) -> Result<FilterSignal, FilterError> {
    let aus = table
        .get(name)
        .ok_or_else(|| FilterError::UnknownEmotion(name.to_string()))?;
    let mut acc: Option<FilterSignal> = None;
    for &au in aus {
        let s = eval_au(session, participant, au, AuMode::Presence, 0.0, cfg)?;
        acc = Some(match acc {
            None => s,
            Some(prev) => and(&prev, &s)?,
        });
    }
    let mut out = acc.ok_or_else(|| FilterError::UnknownEmotion(name.to_string()))?;
    out.name = format!("emotion({participant}, {name})");
    Ok(out)
}

/// Evaluates expressions over one session, caching results by normalized text.
///
/// Shareable across threads; distinct expressions may be evaluated concurrently.
pub struct FilterEngine {
    session: Arc<SyncedSession>,
    config: FilterConfig,
    emotions: EmotionTable,
    cache: Mutex<HashMap<String, Arc<FilterSignal>>>,
}

impl FilterEngine {
    pub fn new(session: Arc<SyncedSession>, config: FilterConfig, emotions: EmotionTable) -> Self {
        Self {
            session,
            config,
            emotions,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn session(&self) -> &Arc<SyncedSession> {
        &self.session
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn cached(&self, normalized: &str) -> Option<Arc<FilterSignal>> {
        self.cache.lock().expect("cache poisoned").get(normalized).cloned()
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().expect("cache poisoned").len()
    }

    pub fn eval_text(&self, text: &str) -> Result<Arc<FilterSignal>, FilterError> {
        self.eval(&parse_filter_expr(text)?)
    }

    pub fn eval(&self, expr: &FilterExpr) -> Result<Arc<FilterSignal>, FilterError> {
        let key = expr.normalized();
        if let Some(hit) = self.cached(&key) {
            return Ok(hit);
        }
        let mut signal = self.compute(expr)?;
        signal.name = key.clone();
        let mut cache = self.cache.lock().expect("cache poisoned");
        Ok(cache.entry(key).or_insert_with(|| Arc::new(signal)).clone())
    }

    /// One result per expression, evaluated in parallel when enabled.
    pub fn eval_many(&self, exprs: &[FilterExpr]) -> Vec<Result<Arc<FilterSignal>, FilterError>> {
        self.config.execution.map_slice(exprs, |e| self.eval(e))
    }

    fn pair(&self, a: &FilterExpr, b: &FilterExpr) -> Result<(Arc<FilterSignal>, Arc<FilterSignal>), FilterError> {
        let (ra, rb) = self.config.execution.join(|| self.eval(a), || self.eval(b));
        Ok((ra?, rb?))
    }

    fn compute(&self, expr: &FilterExpr) -> Result<FilterSignal, FilterError> {
        let s = &*self.session;
        let cfg = &self.config;
        match expr {
            FilterExpr::Face { who, threshold } => {
                let slot = slot(s, who)?;
                Ok(contact_signal(
                    String::new(),
                    s,
                    slot,
                    Region::Face,
                    Some(threshold.unwrap_or(cfg.face_threshold)),
                    cfg,
                ))
            }
            FilterExpr::Eye { who, threshold } => {
                let slot = slot(s, who)?;
                Ok(contact_signal(
                    String::new(),
                    s,
                    slot,
                    Region::Eyes,
                    Some(threshold.unwrap_or(cfg.eye_threshold)),
                    cfg,
                ))
            }
            FilterExpr::FaceScore { who } => Ok(contact_signal(String::new(), s, slot(s, who)?, Region::Face, None, cfg)),
            FilterExpr::EyeScore { who } => Ok(contact_signal(String::new(), s, slot(s, who)?, Region::Eyes, None, cfg)),
            FilterExpr::Au { who, au, mode, threshold } => eval_au(
                s,
                who,
                *au,
                *mode,
                threshold.unwrap_or(cfg.au_intensity_threshold),
                cfg,
            ),
            FilterExpr::Emotion { who, name } => eval_emotion(s, who, name, &self.emotions, cfg),
            FilterExpr::Not(e) => not(&*self.eval(e)?),
            FilterExpr::And(a, b) => {
                let (a, b) = self.pair(a, b)?;
                and(&a, &b)
            }
            FilterExpr::Or(a, b) => {
                let (a, b) = self.pair(a, b)?;
                or(&a, &b)
            }
            FilterExpr::Mutual(a, b) => {
                let (a, b) = self.pair(a, b)?;
                eval_mutual(&a, &b)
            }
            FilterExpr::Smooth { inner, gap, min } => smooth(&*self.eval(inner)?, *gap, *min),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(bits: &str) -> FilterSignal {
        // T = true, F = false, . = invalid
        let values: Vec<bool> = bits.chars().map(|c| c == 'T').collect();
        let valid = bits.chars().map(|c| c != '.').collect();
        FilterSignal::from_bools(bits, &values, valid)
    }

    fn bits(s: &FilterSignal) -> String {
        (0..s.len())
            .map(|i| match (s.valid[i], s.values[i] > 0.0) {
                (false, _) => '.',
                (true, true) => 'T',
                (true, false) => 'F',
            })
            .collect()
    }

    #[test]
    fn mutual_truth_table() {
        assert_eq!(bits(&eval_mutual(&sig("TTF.T"), &sig("TFT..")).unwrap()), "TFF..");
        assert!(matches!(eval_mutual(&sig("TT"), &sig("T")), Err(FilterError::LengthMismatch(2, 1))));
        let cont = FilterSignal::new("c", SignalKind::Continuous, vec![0.5], vec![true]);
        assert!(matches!(eval_mutual(&cont, &sig("T")), Err(FilterError::NotBoolean(_))));
    }

    #[test]
    fn combinators() {
        assert_eq!(bits(&or(&sig("TFF."), &sig("FFT.")).unwrap()), "TFT.");
        assert_eq!(bits(&not(&sig("TF.")).unwrap()), "FT.");
        let cont = FilterSignal::new("c", SignalKind::Continuous, vec![0.5, 0.25, 0.9], vec![true, true, false]);
        let m = and(&cont, &sig("TFT")).unwrap();
        assert_eq!(m.kind, SignalKind::Continuous);
        assert_eq!(m.values, vec![0.5, 0.0, 0.0]);
        assert!(not(&cont).is_err());
    }

    #[test]
    fn smooth_examples() {
        assert_eq!(bits(&smooth(&sig("TTFTT"), 1, 1).unwrap()), "TTTTT");
        assert_eq!(bits(&smooth(&sig("FFTFF"), 0, 2).unwrap()), "FFFFF");
        // invalid frames are barriers
        assert_eq!(bits(&smooth(&sig("TT.TT"), 2, 1).unwrap()), "TT.TT");
        assert_eq!(bits(&smooth(&sig("TFFFT"), 2, 1).unwrap()), "TFFFT");
        assert_eq!(bits(&smooth(&sig("FTFFTFT"), 2, 2).unwrap()), "FTTTTTT");
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = FilterConfig::from_toml("d_max = 50.0").unwrap();
        assert_eq!(cfg.d_max, 50.0);
        assert_eq!(cfg.eye_margin, 1.5);
        assert!(FilterConfig::from_toml("eye_margin = 0.5").is_err());
        assert!(FilterConfig::from_toml("bogus = 1").is_err());
    }

    /// String-rewriting reference for `smooth` over fully valid signals.
    fn smooth_oracle(s: &str, gap: usize, min: usize) -> String {
        let mut out = s.to_string();
        for g in 1..=gap {
            let pat = format!("T{}T", "F".repeat(g));
            let fill = "T".repeat(g + 2);
            // overlapping matches: rescan until fixed point
            loop {
                match out.find(&pat) {
                    Some(i) if gap_allowed(s, i, g) => out.replace_range(i..i + g + 2, &fill),
                    _ => break,
                }
            }
        }
        let mut result = String::new();
        for run in split_runs(&out) {
            if run.starts_with('T') && run.len() < min {
                result.push_str(&"F".repeat(run.len()));
            } else {
                result.push_str(run);
            }
        }
        result
    }

    /// Only gaps that were gaps in the input may be filled.
    fn gap_allowed(orig: &str, i: usize, g: usize) -> bool {
        orig[i + 1..i + 1 + g].chars().all(|c| c == 'F')
    }

    fn split_runs(s: &str) -> Vec<&str> {
        let mut runs = Vec::new();
        let b = s.as_bytes();
        let mut start = 0;
        for i in 1..=b.len() {
            if i == b.len() || b[i] != b[start] {
                runs.push(&s[start..i]);
                start = i;
            }
        }
        runs
    }

    #[test]
    fn smooth_matches_oracle_exhaustively() {
        for mask in 0u32..(1 << 10) {
            let s: String = (0..10).map(|i| if mask >> i & 1 == 1 { 'T' } else { 'F' }).collect();
            for gap in 0..4 {
                for min in 1..4 {
                    assert_eq!(
                        bits(&smooth(&sig(&s), gap, min).unwrap()),
                        smooth_oracle(&s, gap, min),
                        "{s} gap={gap} min={min}"
                    );
                }
            }
        }
    }

    fn arb_sig(len: usize) -> impl Strategy<Value = FilterSignal> {
        prop::collection::vec(prop_oneof![Just('T'), Just('F'), Just('.')], len)
            .prop_map(|c| sig(&c.into_iter().collect::<String>()))
    }

    proptest! {
        #[test]
        fn smooth_idempotent(s in arb_sig(60), g in 0usize..5, m in 1usize..5) {
            let once = smooth(&s, g, m).unwrap();
            let twice = smooth(&once, g, m).unwrap();
            prop_assert_eq!(bits(&once), bits(&twice));
        }
    }
}
