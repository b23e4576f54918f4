//! End-to-end experiment pipeline: load inputs, build costs, assign, harden,
//! evaluate, and write run artifacts.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{
    batched_assign, harden_complete, harden_partial, nearest_label, BatchSchedule, Clustering,
};
use crate::corpus::{self, render_label, validate_labels, Document, LabelSpec};
use crate::costs::{
    ce_costs, l2_costs, seed_doc_label_embeddings, EmbeddingMatrix, ScoreMatrix,
    DEFAULT_SEED_DOCS,
};
use crate::error::{Error, Result, StageExt};
use crate::format::{self, ClusterRecord};
use crate::metrics::{evaluate, MetricsReport};
use crate::ot::{validate_mass, CostMatrix, SolverConfig, TransportPlan};
use crate::provider::{read_matrix_f64, EmbeddingProvider, ProviderConfig};

/// Where the cost matrix comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CostSource {
    /// Euclidean distance between document and rendered-label embeddings.
    L2 {
        documents: ProviderConfig,
        labels: ProviderConfig,
    },
    /// Normalized relevance scores from a matrix file, documents × labels.
    Ce { scores: PathBuf },
    /// Label vectors are means of their seed documents' embeddings.
    SeedDoc {
        documents: ProviderConfig,
        #[serde(default = "default_seed_docs")]
        k: usize,
    },
}

impl CostSource {
    /// Make relative file paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let provider = |p: &mut ProviderConfig| match p {
            ProviderConfig::File { path } => resolve(base, path),
            ProviderConfig::Remote(r) => {
                if let Some(dir) = r.cache_dir.as_mut() {
                    resolve(base, dir)
                }
            }
        };
        match self {
            CostSource::L2 { documents, labels } => {
                provider(documents);
                provider(labels);
            }
            CostSource::Ce { scores } => resolve(base, scores),
            CostSource::SeedDoc { documents, .. } => provider(documents),
        }
    }
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

fn default_seed_docs() -> usize {
    DEFAULT_SEED_DOCS
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mode {
    #[default]
    Complete,
    Partial { p: f64 },
}

impl Mode {
    pub fn mass(&self) -> Option<f64> {
        match self {
            Mode::Complete => None,
            Mode::Partial { p } => Some(*p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmissionSpec {
    /// Labels to drop, one per run (cycled). Empty means a seeded random
    /// pick among the `candidates` most frequent gold labels.
    pub labels: Vec<String>,
    pub repeats: usize,
    pub seed: u64,
    pub candidates: usize,
}

impl Default for OmissionSpec {
    fn default() -> Self {
        OmissionSpec {
            labels: Vec::new(),
            repeats: 3,
            seed: 0,
            candidates: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    pub labels: PathBuf,
    pub costs: CostSource,
    #[serde(default)]
    pub schedule: BatchSchedule,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub omission: OmissionSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parse a JSON config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            serde_json::from_slice(&std::fs::read(path)?).map_err(|e| {
                Error::config(format!("{}: {e}", path.display()))
            })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.corpus);
        resolve(base, &mut self.labels);
        if let Some(out) = self.output_dir.as_mut() {
            resolve(base, out);
        }
        self.costs.resolve_paths(base);
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.solver.validate()?;
        if self.solver.mass_p.is_some() {
            return Err(Error::config("set partial mass through mode, not solver.mass_p"));
        }
        if let Some(p) = self.mode.mass() {
            validate_mass(p).map_err(|e| Error::config(e.to_string()))?;
        }
        for path in [&self.corpus, &self.labels] {
            if !path.exists() {
                return Err(Error::config(format!("{} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

/// Inputs from which the cost matrix for any label subset can be built.
#[derive(Debug, Clone)]
pub enum CostInputs {
    Embeddings {
        docs: EmbeddingMatrix,
        labels: EmbeddingMatrix,
    },
    Scores(ScoreMatrix),
}

impl CostInputs {
    /// Fetch embeddings or scores for `docs` × `labels`.
    pub fn fetch(source: &CostSource, docs: &[Document], labels: &[LabelSpec]) -> Result<Self> {
        match source {
            CostSource::L2 {
                documents,
                labels: label_provider,
            } => {
                let doc_emb = fetch_docs(documents, docs)?;
                let texts = labels.iter().map(render_label).collect::<Result<Vec<_>>>()?;
                let label_emb = EmbeddingProvider::new(label_provider.clone())?.fetch(&texts)?;
                Ok(CostInputs::Embeddings {
                    docs: doc_emb,
                    labels: label_emb,
                })
            }
            CostSource::SeedDoc { documents, k } => {
                let doc_emb = fetch_docs(documents, docs)?;
                let ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
                let label_emb = seed_doc_label_embeddings(&doc_emb, &ids, labels, *k)?;
                Ok(CostInputs::Embeddings {
                    docs: doc_emb,
                    labels: label_emb,
                })
            }
            CostSource::Ce { scores } => {
                let s = ScoreMatrix::new(read_matrix_f64(scores)?)?;
                if s.values().dim() != (docs.len(), labels.len()) {
                    return Err(Error::provider(format!(
                        "score matrix is {:?} but there are {} documents and {} labels",
                        s.values().dim(),
                        docs.len(),
                        labels.len()
                    )));
                }
                Ok(CostInputs::Scores(s))
            }
        }
    }

    /// Costs against the given label columns, in that order.
    pub fn costs(&self, label_subset: &[usize]) -> Result<CostMatrix> {
        match self {
            CostInputs::Embeddings { docs, labels } => l2_costs(docs, &labels.select(label_subset)),
            CostInputs::Scores(s) => ce_costs(&s.select_cols(label_subset)),
        }
    }
}

fn fetch_docs(provider: &ProviderConfig, docs: &[Document]) -> Result<EmbeddingMatrix> {
    let texts: Vec<String> = docs.iter().map(Document::rendered_text).collect();
    EmbeddingProvider::new(provider.clone())?.fetch(&texts)
}

/// Gold labels as a clustering over label indices. Gold values that match
/// no spec id get indices past the specs. `None` if no document has gold.
pub fn gold_clustering(docs: &[Document], labels: &[LabelSpec]) -> Option<Clustering> {
    if docs.iter().all(|d| d.gold_label.is_none()) {
        return None;
    }
    let mut index: HashMap<&str, usize> =
        labels.iter().enumerate().map(|(i, l)| (l.id.as_str(), i)).collect();
    let assignments = docs
        .iter()
        .map(|d| {
            d.gold_label.as_deref().map(|g| {
                let next = index.len();
                *index.entry(g).or_insert(next)
            })
        })
        .collect();
    Some(Clustering::new(assignments))
}

/// Clustering records with document and label ids.
pub fn cluster_records(
    docs: &[Document],
    labels: &[LabelSpec],
    clustering: &Clustering,
) -> Vec<ClusterRecord> {
    docs.iter()
        .zip(&clustering.assignments)
        .map(|(d, a)| ClusterRecord {
            id: d.id.clone(),
            label: a.map(|j| labels[j].id.clone()),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub plan: Option<TransportPlan>,
    /// Indices into the full label list.
    pub clustering: Clustering,
    pub records: Vec<ClusterRecord>,
    pub report: Option<MetricsReport>,
}

/// Loaded corpus, labels and cost inputs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub docs: Vec<Document>,
    pub labels: Vec<LabelSpec>,
    pub inputs: CostInputs,
}

impl Prepared {
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        config.validate().stage("config")?;
        let docs = corpus::load_corpus(&config.corpus).stage("corpus")?;
        let labels = corpus::load_labels(&config.labels).stage("labels")?;
        Self::new(docs, labels, &config.costs)
    }

    pub fn new(docs: Vec<Document>, labels: Vec<LabelSpec>, source: &CostSource) -> Result<Self> {
        let ids: HashSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
        validate_labels(&labels, Some(&ids)).stage("labels")?;
        let inputs = CostInputs::fetch(source, &docs, &labels).stage("provider")?;
        Ok(Prepared {
            docs,
            labels,
            inputs,
        })
    }

    pub fn gold(&self) -> Option<Clustering> {
        gold_clustering(&self.docs, &self.labels)
    }

    /// Batched assignment over a subset of labels, hardened per `mode`.
    /// The returned clustering uses indices into the full label list.
    pub fn assign(
        &self,
        label_subset: &[usize],
        mode: Mode,
        schedule: &BatchSchedule,
        solver: &SolverConfig,
    ) -> Result<(TransportPlan, Clustering)> {
        let cost = self.inputs.costs(label_subset).stage("costs")?;
        let cfg = SolverConfig {
            mass_p: mode.mass(),
            ..*solver
        };
        let plan = batched_assign(&cost, schedule, &cfg).stage("assignment")?;
        let local = match mode {
            Mode::Complete => harden_complete(&plan),
            Mode::Partial { p } => harden_partial(&plan, p),
        }
        .stage("hardening")?;
        let clustering = Clustering::new(
            local
                .assignments
                .iter()
                .map(|a| a.map(|j| label_subset[j]))
                .collect(),
        );
        Ok((plan, clustering))
    }

    fn outcome(&self, plan: Option<TransportPlan>, clustering: Clustering) -> Result<RunOutcome> {
        let report = self
            .gold()
            .map(|gold| evaluate(&clustering, &gold))
            .transpose()
            .stage("evaluation")?;
        Ok(RunOutcome {
            plan,
            records: cluster_records(&self.docs, &self.labels, &clustering),
            clustering,
            report,
        })
    }

    fn all_labels(&self) -> Vec<usize> {
        (0..self.labels.len()).collect()
    }
}

pub fn run_assign(config: &ExperimentConfig) -> Result<RunOutcome> {
    let prepared = Prepared::load(config)?;
    let (plan, clustering) = prepared.assign(
        &prepared.all_labels(),
        config.mode,
        &config.schedule,
        &config.solver,
    )?;
    let outcome = prepared.outcome(Some(plan), clustering)?;
    if let Some(dir) = &config.output_dir {
        write_outcome(dir, &outcome).stage("output")?;
    }
    Ok(outcome)
}

pub fn run_nn_baseline(config: &ExperimentConfig) -> Result<RunOutcome> {
    let prepared = Prepared::load(config)?;
    let cost = prepared.inputs.costs(&prepared.all_labels()).stage("costs")?;
    let outcome = prepared.outcome(None, nearest_label(&cost))?;
    if let Some(dir) = &config.output_dir {
        write_outcome(dir, &outcome).stage("output")?;
    }
    Ok(outcome)
}

/// Full cost matrix for every document and label.
pub fn run_costs(config: &ExperimentConfig) -> Result<CostMatrix> {
    let prepared = Prepared::load(config)?;
    let cost = prepared.inputs.costs(&prepared.all_labels()).stage("costs")?;
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir)?;
        format::write_matrix_f64(&dir.join("costs.edtm"), &cost.view().to_owned()).stage("output")?;
    }
    Ok(cost)
}

pub fn write_outcome(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    if let Some(plan) = &outcome.plan {
        format::write_matrix_f64(&dir.join("plan.edtm"), &plan.values)?;
    }
    format::write_clustering(&dir.join("clustering.jsonl"), &outcome.records)?;
    if let Some(report) = &outcome.report {
        format::write_atomic(
            &dir.join("report.json"),
            serde_json::to_string_pretty(report)?.as_bytes(),
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmissionRun {
    pub omitted: String,
    pub p: f64,
    pub report: MetricsReport,
}

/// Metric means over omission runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub purity: f64,
    pub inverse_purity: f64,
    pub p1: f64,
    pub mi_nats: f64,
    pub assigned_fraction: f64,
    pub n_evaluated: f64,
}

impl MeanMetrics {
    fn of(reports: &[&MetricsReport]) -> Self {
        let k = reports.len() as f64;
        let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / k;
        MeanMetrics {
            purity: mean(|r| r.purity),
            inverse_purity: mean(|r| r.inverse_purity),
            p1: mean(|r| r.p1),
            mi_nats: mean(|r| r.mi_nats),
            assigned_fraction: mean(|r| r.assigned_fraction),
            n_evaluated: mean(|r| r.n_evaluated as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmissionReport {
    pub runs: Vec<OmissionRun>,
    pub mean: MeanMetrics,
}

/// Labels to drop for each run: explicit ones cycled, or seeded picks
/// among the most frequent gold labels.
pub fn omission_choices(
    spec: &OmissionSpec,
    labels: &[LabelSpec],
    gold: &Clustering,
) -> Result<Vec<usize>> {
    let mut freq = vec![0usize; labels.len()];
    for j in gold.assignments.iter().flatten() {
        if *j < labels.len() {
            freq[*j] += 1;
        }
    }
    if spec.repeats == 0 {
        return Err(Error::config("omission repeats must be at least 1"));
    }
    if !spec.labels.is_empty() {
        let chosen = spec
            .labels
            .iter()
            .map(|id| {
                let j = labels.iter().position(|l| &l.id == id).ok_or_else(|| {
                    Error::config(format!("omitted label {id:?} is not among the labels"))
                })?;
                if freq[j] == 0 {
                    return Err(Error::config(format!(
                        "omitted label {id:?} does not occur in the gold labels"
                    )));
                }
                Ok(j)
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok((0..spec.repeats).map(|r| chosen[r % chosen.len()]).collect());
    }
    let mut ranked: Vec<usize> = (0..labels.len()).filter(|&j| freq[j] > 0).collect();
    ranked.sort_by(|&x, &y| freq[y].cmp(&freq[x]).then(x.cmp(&y)));
    ranked.truncate(spec.candidates.max(1));
    if ranked.is_empty() {
        return Err(Error::config("no label occurs in the gold labels"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((0..spec.repeats)
        .map(|_| *ranked.choose(&mut rng).expect("non-empty"))
        .collect())
}

/// Drop one label per run, assign the remaining mass `1 - freq / n`
/// partially, and score the assigned documents.
pub fn run_label_omission(config: &ExperimentConfig) -> Result<OmissionReport> {
    let prepared = Prepared::load(config)?;
    if prepared.labels.len() < 2 {
        return Err(Error::config("label omission needs at least two labels"));
    }
    let gold = prepared
        .gold()
        .ok_or_else(|| Error::config("label omission needs gold labels"))?;
    let choices = omission_choices(&config.omission, &prepared.labels, &gold)?;
    let n = prepared.docs.len();

    let mut runs = Vec::with_capacity(choices.len());
    for (r, &omit) in choices.iter().enumerate() {
        let freq = gold.assignments.iter().filter(|a| **a == Some(omit)).count();
        let p = 1.0 - freq as f64 / n as f64;
        let kept: Vec<usize> = (0..prepared.labels.len()).filter(|&j| j != omit).collect();
        let (plan, clustering) =
            prepared.assign(&kept, Mode::Partial { p }, &config.schedule, &config.solver)?;
        let report = evaluate(&clustering, &gold).stage("evaluation")?;
        if let Some(dir) = &config.output_dir {
            let outcome = RunOutcome {
                plan: Some(plan),
                records: cluster_records(&prepared.docs, &prepared.labels, &clustering),
                clustering,
                report: Some(report.clone()),
            };
            write_outcome(&dir.join(format!("omit-{r}")), &outcome).stage("output")?;
        }
        runs.push(OmissionRun {
            omitted: prepared.labels[omit].id.clone(),
            p,
            report,
        });
    }
    let mean = MeanMetrics::of(&runs.iter().map(|r| &r.report).collect::<Vec<_>>());
    let report = OmissionReport { runs, mean };
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir)?;
        format::write_atomic(
            &dir.join("omission.json"),
            serde_json::to_string_pretty(&report)?.as_bytes(),
        )
        .stage("output")?;
    }
    Ok(report)
}
