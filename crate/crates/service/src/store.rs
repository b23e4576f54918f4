//! On-disk layout, one directory per session:
//!
//! ```text
//! sessions/{id}/session.json
//! sessions/{id}/corpus.jsonl
//! sessions/{id}/labels/v{n}.json
//! sessions/{id}/jobs/{job}.json        job record
//! sessions/{id}/jobs/{job}/            plan.edtm, clustering.jsonl, report.json, results.json
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use edtm_core::corpus::{load_corpus, write_corpus, Document, LabelSpec};
use edtm_core::format::write_atomic;
use edtm_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::session::{now_ms, staging_dir, JobRecord, JobState, JobStatus, ResultsView, SessionMeta, SessionState};

pub const INTERRUPTED: &str = "interrupted by service restart";

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_atomic(path, &serde_json::to_vec_pretty(value)?)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&std::fs::read(path)?).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

impl Store {
    pub fn open(data_dir: &Path) -> Result<Self> {
        let root = data_dir.join("sessions");
        std::fs::create_dir_all(&root)?;
        Ok(Store { root })
    }

    pub fn session_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn job_dir(&self, id: &str, job: &str) -> PathBuf {
        self.session_dir(id).join("jobs").join(job)
    }

    pub fn create(&self, meta: &SessionMeta, docs: &[Document]) -> Result<()> {
        let dir = self.session_dir(&meta.id);
        std::fs::create_dir_all(dir.join("labels"))?;
        std::fs::create_dir_all(dir.join("jobs"))?;
        write_corpus(&dir.join("corpus.jsonl"), docs)?;
        self.save_meta(meta)
    }

    pub fn save_meta(&self, meta: &SessionMeta) -> Result<()> {
        write_json(&self.session_dir(&meta.id).join("session.json"), meta)
    }

    pub fn save_labels(&self, id: &str, version: u64, labels: &[LabelSpec]) -> Result<()> {
        write_json(&self.session_dir(id).join("labels").join(format!("v{version}.json")), &labels)
    }

    pub fn save_job(&self, id: &str, record: &JobRecord) -> Result<()> {
        write_json(&self.session_dir(id).join("jobs").join(format!("{}.json", record.id)), record)
    }

    /// Load every session. Jobs that were running when the service stopped
    /// are marked failed and their staging directories removed.
    pub fn load_all(&self) -> Result<Vec<(Vec<Document>, SessionState)>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.root)? {
            let dir = entry?.path();
            if dir.join("session.json").is_file() {
                out.push(self.load(&dir)?);
            }
        }
        out.sort_by(|a, b| (a.1.meta.created_ms, &a.1.meta.id).cmp(&(b.1.meta.created_ms, &b.1.meta.id)));
        Ok(out)
    }

    fn load(&self, dir: &Path) -> Result<(Vec<Document>, SessionState)> {
        let mut meta: SessionMeta = read_json(&dir.join("session.json"))?;
        let docs = load_corpus(&dir.join("corpus.jsonl"))?;
        let labels: Vec<LabelSpec> = if meta.label_version == 0 {
            Vec::new()
        } else {
            read_json(&dir.join("labels").join(format!("v{}.json", meta.label_version)))?
        };

        let mut jobs: Vec<JobRecord> = Vec::new();
        for entry in std::fs::read_dir(dir.join("jobs"))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                jobs.push(read_json(&path)?);
            }
        }
        jobs.sort_by_key(|j| job_number(&j.id));

        for job in jobs.iter_mut().filter(|j| j.state == JobState::Running) {
            job.state = JobState::Failed;
            job.message = Some(INTERRUPTED.into());
            job.finished_ms = Some(now_ms());
            let staging = staging_dir(&self.job_dir(&meta.id, &job.id));
            if staging.exists() {
                std::fs::remove_dir_all(staging)?;
            }
            self.save_job(&meta.id, job)?;
        }
        if let JobStatus::Running { job } = &meta.status {
            meta.status = JobStatus::Failed {
                job: job.clone(),
                stage: None,
                message: INTERRUPTED.into(),
            };
            self.save_meta(&meta)?;
        }

        let results = match &meta.results_job {
            Some(job) => Some(Arc::new(read_json::<ResultsView>(
                &self.job_dir(&meta.id, job).join("results.json"),
            )?)),
            None => None,
        };
        Ok((
            docs,
            SessionState {
                meta,
                labels: Arc::new(labels),
                jobs,
                results,
            },
        ))
    }
}

fn job_number(id: &str) -> u64 {
    id.strip_prefix("job-").and_then(|n| n.parse().ok()).unwrap_or(u64::MAX)
}
