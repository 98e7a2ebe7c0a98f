//! Background jobs for long computations, with cancellation and polling.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::Value;
use tokio::sync::watch;
use uuid::Uuid;

use crate::error::{ApiError, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum JobState {
    Running,
    Done { result: Value },
    Failed { error: ApiError },
    Cancelled,
}

impl JobState {
    pub fn is_finished(&self) -> bool {
        !matches!(self, JobState::Running)
    }
}

pub struct Job {
    pub id: Uuid,
    pub kind: String,
    pub started: Instant,
    cancel: Arc<AtomicBool>,
    state: watch::Sender<JobState>,
    finished_at: Mutex<Option<Instant>>,
}

impl Job {
    pub fn state(&self) -> JobState {
        self.state.borrow().clone()
    }

    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::Relaxed);
    }

    /// Waits up to `limit` for the job to finish and returns its state.
    pub async fn wait(&self, limit: Duration) -> JobState {
        let mut rx = self.state.subscribe();
        let _ = tokio::time::timeout(limit, rx.wait_for(JobState::is_finished)).await;
        self.state()
    }

    fn finish(&self, state: JobState) {
        *self.finished_at.lock().unwrap() = Some(Instant::now());
        self.state.send_replace(state);
    }
}

#[derive(Serialize)]
pub struct JobView {
    pub id: Uuid,
    pub kind: String,
    pub elapsed_ms: u64,
    #[serde(flatten)]
    pub state: JobState,
}

impl JobView {
    pub fn of(job: &Job) -> Self {
        Self {
            id: job.id,
            kind: job.kind.clone(),
            elapsed_ms: job.started.elapsed().as_millis() as u64,
            state: job.state(),
        }
    }
}

/// Finished jobs are kept for `retention` and then dropped on the next spawn.
pub struct JobStore {
    jobs: RwLock<HashMap<Uuid, Arc<Job>>>,
    retention: Duration,
}

impl JobStore {
    pub fn new(retention: Duration) -> Self {
        Self { jobs: RwLock::new(HashMap::new()), retention }
    }

    /// Runs `f` on the blocking pool. `f` should poll the flag it is given
    /// and return `Cancelled` once it is set.
    pub fn spawn<F>(&self, kind: &str, f: F) -> Arc<Job>
    where
        F: FnOnce(&AtomicBool) -> Result<Value> + Send + 'static,
    {
        self.prune();
        let (tx, _) = watch::channel(JobState::Running);
        let job = Arc::new(Job {
            id: Uuid::new_v4(),
            kind: kind.to_string(),
            started: Instant::now(),
            cancel: Arc::new(AtomicBool::new(false)),
            state: tx,
            finished_at: Mutex::new(None),
        });
        self.jobs.write().unwrap().insert(job.id, job.clone());
        let runner = job.clone();
        tokio::task::spawn_blocking(move || {
            let out = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| f(&runner.cancel)));
            let state = match out {
                Ok(Ok(result)) => JobState::Done { result },
                Ok(Err(Error::Core(concordance_core::Error::Cancelled))) => JobState::Cancelled,
                Ok(Err(e)) => JobState::Failed { error: ApiError::from(&e) },
                Err(_) => JobState::Failed {
                    error: ApiError::new(500, "internal", "computation panicked", Value::Null),
                },
            };
            runner.finish(state);
        });
        job
    }

    pub fn get(&self, id: Uuid) -> Result<Arc<Job>> {
        self.jobs.read().unwrap().get(&id).cloned().ok_or_else(|| Error::UnknownJob(id.to_string()))
    }

    pub fn remove(&self, id: Uuid) -> Option<Arc<Job>> {
        self.jobs.write().unwrap().remove(&id)
    }

    pub fn len(&self) -> usize {
        self.jobs.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn prune(&self) {
        let retention = self.retention;
        self.jobs
            .write()
            .unwrap()
            .retain(|_, j| j.finished_at.lock().unwrap().is_none_or(|t| t.elapsed() < retention));
    }
}
