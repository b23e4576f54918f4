use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use edtm_core::assignment::Clustering;
use edtm_core::corpus::parse_corpus;
use edtm_core::format::{parse_clustering, ClusterRecord};
use edtm_core::harness::{
    run_assign, run_costs, run_label_omission, run_nn_baseline, CostSource, ExperimentConfig,
    Mode, OmissionSpec, RunOutcome,
};
use edtm_core::metrics::evaluate;
use edtm_core::provider::{ProviderConfig, RemoteConfig};

const DEFAULT_RUN_DIR: &str = "edtm-run";

#[derive(Parser)]
#[command(name = "edtm", version, about = "Topic assignment with entropic optimal transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Batched transport assignment, hardened to a clustering.
    Assign(RunArgs),
    /// Greedy nearest-label baseline.
    Nn(RunArgs),
    /// Label-omission experiment with partial assignment.
    Omit(OmitArgs),
    /// Score a clustering file against gold labels.
    Metrics(MetricsArgs),
    /// Write the document × label cost matrix.
    Costs(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CostKind {
    L2,
    Ce,
    SeedDoc,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum)]
    cost: Option<CostKind>,
    /// Document embedding matrix file.
    #[arg(long)]
    doc_embeddings: Option<PathBuf>,
    /// Label embedding matrix file, rows in label order.
    #[arg(long)]
    label_embeddings: Option<PathBuf>,
    /// Remote embedding endpoint, used instead of embedding files.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Relevance score matrix file for `--cost ce`.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Seed documents averaged per label for `--cost seed-doc`.
    #[arg(long)]
    seed_docs: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Batch shuffling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Assign only this fraction of the mass.
    #[arg(long, conflicts_with = "complete")]
    partial: Option<f64>,
    #[arg(long)]
    complete: bool,
    /// Run directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OmitArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Label id to drop; repeat to cycle through several.
    #[arg(long = "omit")]
    omit: Vec<String>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Seed for picking labels to drop.
    #[arg(long)]
    omit_seed: Option<u64>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Clustering JSONL (`{"id", "label"}` per line).
    #[arg(long)]
    pred: PathBuf,
    /// Corpus JSONL with `gold_label`, or a clustering JSONL.
    #[arg(long)]
    gold: PathBuf,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Assign(args) => print_outcome(&run_assign(&build_config(&args)?)?),
        Command::Nn(args) => print_outcome(&run_nn_baseline(&build_config(&args)?)?),
        Command::Costs(args) => {
            let cfg = build_config(&args)?;
            let cost = run_costs(&cfg)?;
            let (n, m) = cost.dim();
            let path = cfg.output_dir.unwrap_or_default().join("costs.edtm");
            println!("{}", serde_json::json!({"rows": n, "cols": m, "path": path}));
            Ok(())
        }
        Command::Omit(args) => {
            let mut cfg = build_config(&args.run)?;
            if !args.omit.is_empty() {
                cfg.omission.labels = args.omit;
            }
            if let Some(r) = args.repeats {
                cfg.omission.repeats = r;
            }
            if let Some(s) = args.omit_seed {
                cfg.omission.seed = s;
            }
            let report = run_label_omission(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Metrics(args) => metrics(&args),
    }
}

fn print_outcome(outcome: &RunOutcome) -> Result<()> {
    match &outcome.report {
        Some(report) => println!("{}", serde_json::to_string_pretty(report)?),
        None => println!(
            "{}",
            serde_json::json!({
                "assigned_fraction": outcome.clustering.assigned_fraction(),
                "documents": outcome.clustering.len(),
            })
        ),
    }
    if let Some(plan) = &outcome.plan {
        if !plan.converged {
            eprintln!(
                "warning: solver stopped at residual {:.3e} after {} iterations",
                plan.residual, plan.iterations
            );
        }
    }
    Ok(())
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig {
            corpus: args.corpus.clone().context("--corpus is required without --config")?,
            labels: args.labels.clone().context("--labels is required without --config")?,
            costs: cost_source(args)?.context("--cost is required without --config")?,
            schedule: Default::default(),
            solver: Default::default(),
            mode: Mode::Complete,
            omission: OmissionSpec::default(),
            output_dir: None,
        },
    };
    if args.config.is_some() {
        if let Some(c) = &args.corpus {
            cfg.corpus = c.clone();
        }
        if let Some(l) = &args.labels {
            cfg.labels = l.clone();
        }
        if let Some(source) = cost_source(args)? {
            cfg.costs = source;
        }
    }
    if let Some(v) = args.lambda {
        cfg.solver.lambda = v;
    }
    if let Some(v) = args.tolerance {
        cfg.solver.tolerance = v;
    }
    if let Some(v) = args.max_iters {
        cfg.solver.max_iters = v;
    }
    if let Some(v) = args.batch_size {
        cfg.schedule.batch_size = v;
    }
    if let Some(v) = args.epochs {
        cfg.schedule.epochs = v;
    }
    if let Some(v) = args.seed {
        cfg.schedule.shuffle_seed = v;
    }
    if let Some(p) = args.partial {
        cfg.mode = Mode::Partial { p };
    }
    if args.complete {
        cfg.mode = Mode::Complete;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    if cfg.output_dir.is_none() {
        cfg.output_dir = Some(PathBuf::from(DEFAULT_RUN_DIR));
    }
    Ok(cfg)
}

fn cost_source(args: &RunArgs) -> Result<Option<CostSource>> {
    let Some(kind) = args.cost else {
        return Ok(None);
    };
    let provider = |file: &Option<PathBuf>, what: &str| -> Result<ProviderConfig> {
        if let Some(endpoint) = &args.endpoint {
            let mut remote = RemoteConfig::new(endpoint.clone());
            remote.cache_dir = args.cache_dir.clone();
            return Ok(ProviderConfig::Remote(remote));
        }
        let path = file
            .clone()
            .ok_or_else(|| anyhow!("--{what} or --endpoint is required"))?;
        Ok(ProviderConfig::File { path })
    };
    Ok(Some(match kind {
        CostKind::L2 => CostSource::L2 {
            documents: provider(&args.doc_embeddings, "doc-embeddings")?,
            labels: provider(&args.label_embeddings, "label-embeddings")?,
        },
        CostKind::SeedDoc => CostSource::SeedDoc {
            documents: provider(&args.doc_embeddings, "doc-embeddings")?,
            k: args.seed_docs.unwrap_or(edtm_core::costs::DEFAULT_SEED_DOCS),
        },
        CostKind::Ce => CostSource::Ce {
            scores: args.scores.clone().context("--scores is required for --cost ce")?,
        },
    }))
}

/// Index string labels in order of first appearance.
fn index_labels<'a>(labels: impl Iterator<Item = Option<&'a str>>) -> Vec<Option<usize>> {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    labels
        .map(|l| {
            l.map(|s| {
                let next = ids.len();
                *ids.entry(s).or_insert(next)
            })
        })
        .collect()
}

fn metrics(args: &MetricsArgs) -> Result<()> {
    let pred = parse_clustering(&std::fs::read_to_string(&args.pred)?)?;
    let gold_text = std::fs::read_to_string(&args.gold)?;
    let gold: Vec<ClusterRecord> = match parse_clustering(&gold_text) {
        Ok(records) => records,
        Err(_) => parse_corpus(&gold_text)?
            .into_iter()
            .map(|d| ClusterRecord {
                id: d.id,
                label: d.gold_label,
            })
            .collect(),
    };
    let gold_by_id: HashMap<&str, Option<&str>> =
        gold.iter().map(|r| (r.id.as_str(), r.label.as_deref())).collect();
    if gold_by_id.len() != pred.len() {
        bail!(
            "prediction has {} documents but gold has {}",
            pred.len(),
            gold_by_id.len()
        );
    }
    let aligned = pred
        .iter()
        .map(|r| {
            gold_by_id
                .get(r.id.as_str())
                .copied()
                .ok_or_else(|| anyhow!("document {:?} has no gold entry", r.id))
        })
        .collect::<Result<Vec<_>>>()?;
    let p = Clustering::new(index_labels(pred.iter().map(|r| r.label.as_deref())));
    let g = Clustering::new(index_labels(aligned.into_iter()));
    println!("{}", serde_json::to_string_pretty(&evaluate(&p, &g)?)?);
    Ok(())
}
