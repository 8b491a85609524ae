//! Job records, the worker pool and atomic artifact writes.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::http::StatusCode;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use viab_core::artifact::{self, SolveArtifacts};
use viab_core::grid::CellSet;
use viab_core::par::{self, Execution};
use viab_core::scenario::{Scenario, ScenarioFile};
use viab_core::solver::{RegulationMap, SweepObserver};
use viab_core::Error;

use crate::{ApiError, Config};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running {
        iteration: usize,
        cells_remaining: usize,
        /// Cells removed by the last sweep.
        removed: usize,
    },
    Done {
        kernel_cells: usize,
        empty: bool,
    },
    Failed {
        reason: String,
    },
    Cancelled,
}

impl JobState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, JobState::Done { .. } | JobState::Failed { .. } | JobState::Cancelled)
    }

    fn rank(&self) -> u8 {
        match self {
            JobState::Queued => 0,
            JobState::Running { .. } => 1,
            _ => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub scenario: String,
    pub scenario_hash: String,
    #[serde(flatten)]
    pub state: JobState,
    /// Artifact file names, present once the job is done.
    pub artifacts: Vec<String>,
}

type Solved = Arc<(CellSet, RegulationMap)>;

struct Job {
    record: JobRecord,
    scenario: Arc<Scenario>,
    cancel: Arc<AtomicBool>,
    solved: Option<Solved>,
}

pub(crate) struct Registry {
    config: Config,
    jobs: Mutex<BTreeMap<u64, Job>>,
    scenarios: Mutex<HashMap<String, ScenarioFile>>,
    next_id: AtomicU64,
    permits: Arc<Semaphore>,
}

fn parse_id(id: &str) -> Option<u64> {
    id.parse().ok()
}

impl Registry {
    pub(crate) fn new(config: Config) -> Self {
        let permits = Arc::new(Semaphore::new(config.workers.max(1)));
        Self {
            config,
            jobs: Mutex::new(BTreeMap::new()),
            scenarios: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            permits,
        }
    }

    pub(crate) fn remember(&self, hash: String, file: ScenarioFile) {
        self.scenarios.lock().unwrap().insert(hash, file);
    }

    pub(crate) fn recall(&self, hash: &str) -> Option<ScenarioFile> {
        self.scenarios.lock().unwrap().get(hash).cloned()
    }

    pub(crate) fn job_dir(&self, id: &str) -> PathBuf {
        self.config.data_dir.join("jobs").join(id)
    }

    pub(crate) fn record(&self, id: &str) -> Option<JobRecord> {
        let jobs = self.jobs.lock().unwrap();
        jobs.get(&parse_id(id)?).map(|j| j.record.clone())
    }

    /// Scenario, kernel and regulation map of a finished job.
    pub(crate) fn solved(&self, id: &str) -> Result<(Arc<Scenario>, Option<Solved>), ApiError> {
        let jobs = self.jobs.lock().unwrap();
        let job = parse_id(id).and_then(|n| jobs.get(&n)).ok_or_else(|| ApiError::not_found(id))?;
        match &job.solved {
            Some(s) => Ok((job.scenario.clone(), Some(s.clone()))),
            None => Err(ApiError::new(StatusCode::CONFLICT, format!("job `{id}` has no kernel"))),
        }
    }

    /// Moves a job forward; terminal states never change.
    fn transition(&self, id: u64, next: JobState) {
        let mut jobs = self.jobs.lock().unwrap();
        if let Some(job) = jobs.get_mut(&id) {
            let current = &job.record.state;
            if !current.is_terminal() && next.rank() >= current.rank() {
                job.record.state = next;
            }
        }
    }

    pub(crate) fn submit(this: &Arc<Self>, scenario: Scenario) -> JobRecord {
        let id = this.next_id.fetch_add(1, Ordering::Relaxed);
        let record = JobRecord {
            id: id.to_string(),
            scenario: scenario.file.name.clone(),
            scenario_hash: scenario.hash.clone(),
            state: JobState::Queued,
            artifacts: Vec::new(),
        };
        let scenario = Arc::new(scenario);
        let cancel = Arc::new(AtomicBool::new(false));
        this.jobs.lock().unwrap().insert(
            id,
            Job { record: record.clone(), scenario: scenario.clone(), cancel: cancel.clone(), solved: None },
        );
        let reg = this.clone();
        tokio::spawn(async move { reg.run(id, scenario, cancel).await });
        record
    }

    async fn run(self: Arc<Self>, id: u64, scenario: Arc<Scenario>, cancel: Arc<AtomicBool>) {
        let Ok(_permit) = self.permits.clone().acquire_owned().await else {
            return;
        };
        if cancel.load(Ordering::SeqCst) {
            self.transition(id, JobState::Cancelled);
            return;
        }
        let cells = scenario.constraint.count();
        self.transition(id, JobState::Running { iteration: 0, cells_remaining: cells, removed: 0 });
        let reg = self.clone();
        let threads = self.config.threads;
        let outcome = tokio::task::spawn_blocking(move || {
            let observer = Progress { registry: &reg, id, cancel: &cancel };
            let (report, artifacts) =
                par::with_threads(threads, || artifact::solve(&scenario, Execution::Parallel, &observer))?;
            if cancel.load(Ordering::SeqCst) {
                return Err(Error::Cancelled);
            }
            let names = write_atomically(&reg.config.data_dir, id, &artifacts)?;
            Ok((report, names))
        })
        .await;
        match outcome {
            Ok(Ok((report, names))) => {
                let mut jobs = self.jobs.lock().unwrap();
                if let Some(job) = jobs.get_mut(&id) {
                    job.solved = Some(Arc::new((report.kernel.clone(), report.regulation)));
                    job.record.artifacts = names;
                    job.record.state = JobState::Done { kernel_cells: report.kernel.count(), empty: report.empty };
                }
            }
            Ok(Err(Error::Cancelled)) => self.transition(id, JobState::Cancelled),
            Ok(Err(e)) => self.transition(id, JobState::Failed { reason: e.to_string() }),
            Err(e) => self.transition(id, JobState::Failed { reason: e.to_string() }),
        }
    }

    /// Requests cancellation. Queued jobs end at once; running jobs stop
    /// at their next sweep.
    pub(crate) fn cancel(&self, id: &str) -> Option<JobRecord> {
        let n = parse_id(id)?;
        let mut jobs = self.jobs.lock().unwrap();
        let job = jobs.get_mut(&n)?;
        if !job.record.state.is_terminal() {
            job.cancel.store(true, Ordering::SeqCst);
            if job.record.state == JobState::Queued {
                job.record.state = JobState::Cancelled;
            }
        }
        Some(job.record.clone())
    }
}

struct Progress<'a> {
    registry: &'a Registry,
    id: u64,
    cancel: &'a AtomicBool,
}

impl SweepObserver for Progress<'_> {
    fn on_sweep(&self, iteration: usize, removed: usize, remaining: usize) -> bool {
        if self.cancel.load(Ordering::SeqCst) {
            return false;
        }
        self.registry.transition(self.id, JobState::Running { iteration, cells_remaining: remaining, removed });
        true
    }
}

/// Writes every artifact into a hidden directory, then renames it into
/// place so readers never see a partial set.
fn write_atomically(data_dir: &Path, id: u64, artifacts: &SolveArtifacts) -> viab_core::Result<Vec<String>> {
    let jobs = data_dir.join("jobs");
    let staging = jobs.join(format!(".{id}.partial"));
    std::fs::create_dir_all(&staging)?;
    let mut names = Vec::new();
    for (name, contents) in artifacts.files() {
        std::fs::write(staging.join(name), contents)?;
        names.push(name.to_string());
    }
    std::fs::rename(&staging, jobs.join(id.to_string()))?;
    Ok(names)
}
