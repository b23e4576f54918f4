//! Session state, assignment jobs and the results view served to clients.

use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use edtm_core::assignment::{BatchSchedule, Clustering};
use edtm_core::corpus::{Document, LabelSpec};
use edtm_core::error::StageExt;
use edtm_core::format::write_atomic;
use edtm_core::harness::{cluster_records, gold_clustering, write_outcome, CostSource, Mode, Prepared, RunOutcome};
use edtm_core::metrics::{evaluate, MetricsReport};
use edtm_core::ot::{SolverConfig, TransportPlan};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobStatus {
    Idle,
    Running {
        job: String,
    },
    Done {
        job: String,
    },
    Failed {
        job: String,
        stage: Option<String>,
        message: String,
    },
}

/// Persisted session header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub name: Option<String>,
    pub created_ms: u64,
    pub documents: usize,
    pub has_gold: bool,
    pub costs: CostSource,
    /// 0 until labels are first accepted.
    pub label_version: u64,
    /// Jobs started so far; the next job is `job-{jobs + 1}`.
    pub jobs: u64,
    pub status: JobStatus,
    /// Job whose results are currently served.
    pub results_job: Option<String>,
}

/// Resolved assignment settings for one job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignSettings {
    pub mode: Mode,
    pub schedule: BatchSchedule,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub label_version: u64,
    pub settings: AssignSettings,
    pub state: JobState,
    pub stage: Option<String>,
    pub message: Option<String>,
    pub started_ms: u64,
    pub finished_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDocument {
    pub id: String,
    pub text: String,
    /// Row mass of the transport plan.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelGroup {
    pub label_id: String,
    pub name: String,
    pub documents: Vec<ScoredDocument>,
}

/// Clusters produced by one finished job. Never modified once written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsView {
    pub job: String,
    pub label_version: u64,
    pub settings: AssignSettings,
    pub assigned_fraction: f64,
    /// One group per label, in label order.
    pub groups: Vec<LabelGroup>,
    pub unassigned: Vec<ScoredDocument>,
    pub metrics: Option<MetricsReport>,
}

/// Documents by descending confidence, lower index first on ties.
fn ranked(docs: &[Document], confidence: &[f64], members: impl Iterator<Item = usize>) -> Vec<ScoredDocument> {
    let mut idx: Vec<usize> = members.collect();
    idx.sort_by(|&a, &b| confidence[b].total_cmp(&confidence[a]).then(a.cmp(&b)));
    idx.into_iter()
        .map(|i| ScoredDocument {
            id: docs[i].id.clone(),
            text: docs[i].text.clone(),
            confidence: confidence[i],
        })
        .collect()
}

pub fn results_view(
    input: &JobInput,
    docs: &[Document],
    labels: &[LabelSpec],
    plan: &TransportPlan,
    clustering: &Clustering,
    metrics: Option<MetricsReport>,
) -> ResultsView {
    let confidence = plan.row_sums().to_vec();
    let members = |target: Option<usize>| {
        clustering
            .assignments
            .iter()
            .enumerate()
            .filter(move |(_, a)| **a == target)
            .map(|(i, _)| i)
    };
    ResultsView {
        job: input.job.clone(),
        label_version: input.label_version,
        settings: input.settings.clone(),
        assigned_fraction: clustering.assigned_fraction(),
        groups: labels
            .iter()
            .enumerate()
            .map(|(j, l)| LabelGroup {
                label_id: l.id.clone(),
                name: l.name.clone(),
                documents: ranked(docs, &confidence, members(Some(j))),
            })
            .collect(),
        unassigned: ranked(docs, &confidence, members(None)),
        metrics,
    }
}

/// Inputs captured when a job starts; later label edits do not affect it.
pub struct JobInput {
    pub job: String,
    pub label_version: u64,
    pub settings: AssignSettings,
    pub docs: Arc<Vec<Document>>,
    pub labels: Arc<Vec<LabelSpec>>,
    pub costs: CostSource,
}

/// Run the pipeline and publish artifacts into `job_dir`. Artifacts are
/// staged in a sibling directory and renamed into place on success.
pub fn execute(input: &JobInput, job_dir: &Path) -> edtm_core::Result<ResultsView> {
    let prepared = Prepared::new(input.docs.to_vec(), input.labels.to_vec(), &input.costs)?;
    let all: Vec<usize> = (0..prepared.labels.len()).collect();
    let s = &input.settings;
    let (plan, clustering) = prepared.assign(&all, s.mode, &s.schedule, &s.solver)?;
    let metrics = gold_clustering(&prepared.docs, &prepared.labels)
        .map(|gold| evaluate(&clustering, &gold))
        .transpose()
        .stage("evaluation")?;
    let view = results_view(
        input,
        &prepared.docs,
        &prepared.labels,
        &plan,
        &clustering,
        metrics.clone(),
    );
    let outcome = RunOutcome {
        records: cluster_records(&prepared.docs, &prepared.labels, &clustering),
        plan: Some(plan),
        clustering,
        report: metrics,
    };
    publish(job_dir, &outcome, &view).stage("output")?;
    Ok(view)
}

fn publish(job_dir: &Path, outcome: &RunOutcome, view: &ResultsView) -> edtm_core::Result<()> {
    let staging = staging_dir(job_dir);
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    write_outcome(&staging, outcome)?;
    write_atomic(&staging.join("results.json"), &serde_json::to_vec_pretty(view)?)?;
    std::fs::rename(&staging, job_dir)?;
    Ok(())
}

pub fn staging_dir(job_dir: &Path) -> std::path::PathBuf {
    let name = job_dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    job_dir.with_file_name(format!(".{name}.partial"))
}

/// Mutable part of a session, guarded by one lock that is never held
/// across I/O waits longer than a small JSON write.
pub struct SessionState {
    pub meta: SessionMeta,
    pub labels: Arc<Vec<LabelSpec>>,
    pub jobs: Vec<JobRecord>,
    pub results: Option<Arc<ResultsView>>,
}

pub struct Session {
    pub docs: Arc<Vec<Document>>,
    state: Mutex<SessionState>,
}

impl Session {
    pub fn new(docs: Vec<Document>, state: SessionState) -> Self {
        Session {
            docs: Arc::new(docs),
            state: Mutex::new(state),
        }
    }

    pub fn lock(&self) -> MutexGuard<'_, SessionState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
