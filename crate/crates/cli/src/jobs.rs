//! Filter jobs: submitted expressions evaluated in the background and polled for.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use eyecontact_core::filters::{FilterEngine, FilterExpr, FilterSignal};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_finished(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JobInfo {
    pub job_id: u64,
    pub expr: String,
    pub normalized: String,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

#[derive(Debug)]
struct Job {
    info: JobInfo,
    result: Option<Arc<FilterSignal>>,
}

#[derive(Debug, Default)]
struct Registry {
    jobs: Vec<Job>,
    by_normalized: HashMap<String, u64>,
}

/// Outcome of [`JobRegistry::submit`].
#[derive(Debug, Clone)]
pub enum Submission {
    Created(JobInfo),
    Duplicate(JobInfo),
}

/// The service's only mutable state. Ids start at 1 and are never reused.
#[derive(Debug, Default, Clone)]
pub struct JobRegistry {
    inner: Arc<Mutex<Registry>>,
}

impl JobRegistry {
    fn lock(&self) -> MutexGuard<'_, Registry> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Registers `expr` unless an equivalent expression is already known.
    pub fn submit(&self, text: &str, expr: &FilterExpr) -> Submission {
        let normalized = expr.normalized();
        let mut reg = self.lock();
        if let Some(&id) = reg.by_normalized.get(&normalized) {
            return Submission::Duplicate(reg.jobs[id as usize - 1].info.clone());
        }
        let id = reg.jobs.len() as u64 + 1;
        let info = JobInfo {
            job_id: id,
            expr: text.to_string(),
            normalized: normalized.clone(),
            status: JobStatus::Pending,
            error: None,
            wall_ms: None,
        };
        reg.jobs.push(Job { info: info.clone(), result: None });
        reg.by_normalized.insert(normalized, id);
        Submission::Created(info)
    }

    pub fn info(&self, id: u64) -> Option<JobInfo> {
        let reg = self.lock();
        let idx = usize::try_from(id).ok()?.checked_sub(1)?;
        reg.jobs.get(idx).map(|j| j.info.clone())
    }

    /// Status plus the signal once done.
    pub fn result(&self, id: u64) -> Option<(JobInfo, Option<Arc<FilterSignal>>)> {
        let reg = self.lock();
        let idx = usize::try_from(id).ok()?.checked_sub(1)?;
        reg.jobs.get(idx).map(|j| (j.info.clone(), j.result.clone()))
    }

    pub fn len(&self) -> usize {
        self.lock().jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn advance(&self, id: u64, to: JobStatus, finish: impl FnOnce(&mut Job)) {
        let mut reg = self.lock();
        let job = &mut reg.jobs[id as usize - 1];
        let from = job.info.status;
        assert!(
            matches!(
                (from, to),
                (JobStatus::Pending, JobStatus::Running)
                    | (JobStatus::Running, JobStatus::Done | JobStatus::Failed)
            ),
            "job {id} cannot go from {from:?} to {to:?}"
        );
        job.info.status = to;
        finish(job);
    }

    /// Evaluates job `id` on the calling thread.
    pub fn run(&self, id: u64, engine: &FilterEngine, expr: &FilterExpr) {
        self.advance(id, JobStatus::Running, |_| {});
        let started = Instant::now();
        let outcome = engine.eval(expr);
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        match outcome {
            Ok(signal) => self.advance(id, JobStatus::Done, |j| {
                j.info.wall_ms = Some(wall_ms);
                j.result = Some(signal);
            }),
            Err(e) => self.advance(id, JobStatus::Failed, |j| {
                j.info.wall_ms = Some(wall_ms);
                j.info.error = Some(e.to_string());
            }),
        }
    }
}
