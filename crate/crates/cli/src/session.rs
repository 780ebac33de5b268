use std::path::PathBuf;
use std::sync::Arc;

use eyecontact_core::filters::{EmotionTable, FilterConfig, FilterEngine};
use eyecontact_core::ingest::load_session_from_path;
use eyecontact_core::sync::{synchronize, GazeReduction, SyncConfig};
use eyecontact_core::Execution;

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct SessionOptions {
    pub manifest: PathBuf,
    /// TOML with geometry and threshold overrides.
    pub config: Option<PathBuf>,
    /// TOML with extra emotion rows.
    pub emotions: Option<PathBuf>,
    pub reduction: GazeReduction,
    pub execution: Execution,
}

impl SessionOptions {
    pub fn new(manifest: impl Into<PathBuf>) -> Self {
        Self {
            manifest: manifest.into(),
            config: None,
            emotions: None,
            reduction: GazeReduction::default(),
            execution: Execution::default(),
        }
    }
}

pub struct LoadedSession {
    pub engine: Arc<FilterEngine>,
    pub warnings: Vec<String>,
}

pub fn load(opts: &SessionOptions) -> Result<LoadedSession, CliError> {
    let mut config = match &opts.config {
        Some(path) => FilterConfig::from_toml(&std::fs::read_to_string(path)?)?,
        None => FilterConfig::default(),
    };
    config.execution = opts.execution;
    let emotions = match &opts.emotions {
        Some(path) => EmotionTable::with_overrides(&std::fs::read_to_string(path)?)?,
        None => EmotionTable::default(),
    };
    let dyad = load_session_from_path(&opts.manifest, opts.execution)?;
    let synced = synchronize(
        &dyad,
        &SyncConfig {
            reduction: opts.reduction,
            execution: opts.execution,
        },
    )?;
    let mut warnings = dyad.warnings;
    for t in &synced.tracks {
        if t.drift_warnings > 0 {
            warnings.push(format!(
                "{}: {} frames sit more than a quarter frame off the PTS grid",
                t.participant_id, t.drift_warnings
            ));
        }
    }
    Ok(LoadedSession {
        engine: Arc::new(FilterEngine::new(Arc::new(synced), config, emotions)),
        warnings,
    })
}
