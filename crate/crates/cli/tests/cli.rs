use std::path::Path;
use std::process::{Command, Output};

use edtm_core::corpus::{write_corpus, Document, LabelSpec};
use edtm_core::format::{read_clustering, read_matrix, write_clustering, write_matrix, ClusterRecord};
use edtm_testkit::fixtures;
use ndarray::Array2;
use serde_json::Value;

fn edtm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edtm"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn json_out(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn to_f32(rows: &[Vec<f64>]) -> Array2<f32> {
    Array2::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j] as f32)
}

/// Corpus, labels and embedding files for three 20-point clusters.
fn fixture(dir: &Path) -> Vec<usize> {
    let data = fixtures::gaussian_clusters(&[20, 20, 20], 4, 10.0, 1.0, 77);
    let docs: Vec<Document> = data
        .labels
        .iter()
        .enumerate()
        .map(|(i, c)| Document {
            id: format!("d{i}"),
            text: format!("text {i}"),
            gold_label: Some(format!("g{c}")),
        })
        .collect();
    write_corpus(&dir.join("corpus.jsonl"), &docs).unwrap();
    let labels: Vec<LabelSpec> = (0..3).map(|c| LabelSpec::named(format!("g{c}"), format!("group {c}"))).collect();
    std::fs::write(dir.join("labels.json"), serde_json::to_vec(&labels).unwrap()).unwrap();
    write_matrix(&dir.join("docs.edtm"), &to_f32(&data.points)).unwrap();
    write_matrix(&dir.join("labels.edtm"), &to_f32(&data.centroids)).unwrap();
    data.labels
}

const FLAGS: [&str; 10] = [
    "--corpus",
    "corpus.jsonl",
    "--labels",
    "labels.json",
    "--cost",
    "l2",
    "--doc-embeddings",
    "docs.edtm",
    "--label-embeddings",
    "labels.edtm",
];

fn with(extra: &[&'static str]) -> Vec<&'static str> {
    let mut v = FLAGS.to_vec();
    v.extend_from_slice(extra);
    v
}

#[test]
fn assign_from_flags_writes_the_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let mut args = vec!["assign"];
    args.extend(with(&["--partial", "0.5", "--batch-size", "16", "--out", "run"]));
    let report = json_out(&edtm(dir.path(), &args));
    assert_eq!(report["n_evaluated"], 30);
    assert_eq!(report["assigned_fraction"], 0.5);
    assert_eq!(report["p1"], 1.0);
    let run = dir.path().join("run");
    assert_eq!(read_matrix(&run.join("plan.edtm")).unwrap().dim(), (60, 3));
    assert_eq!(read_clustering(&run.join("clustering.jsonl")).unwrap().len(), 60);
}

#[test]
fn default_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let mut args = vec!["nn"];
    args.extend(with(&[]));
    let report = json_out(&edtm(dir.path(), &args));
    assert_eq!(report["p1"], 1.0);
    assert!(dir.path().join("edtm-run/clustering.jsonl").exists());
    assert!(!dir.path().join("edtm-run/plan.edtm").exists());
}

#[test]
fn costs_subcommand_writes_the_matrix() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let mut args = vec!["costs"];
    args.extend(with(&["--out", "c"]));
    let out = json_out(&edtm(dir.path(), &args));
    assert_eq!(out["rows"], 60);
    assert_eq!(out["cols"], 3);
    assert_eq!(read_matrix(&dir.path().join("c/costs.edtm")).unwrap().dim(), (60, 3));
}

#[test]
fn metrics_against_corpus_or_clustering() {
    let dir = tempfile::tempdir().unwrap();
    let gold = fixture(dir.path());
    // Shift every prediction to another label name: still a perfect partition.
    let records: Vec<ClusterRecord> = gold
        .iter()
        .enumerate()
        .map(|(i, c)| ClusterRecord {
            id: format!("d{i}"),
            label: (i % 2 == 0).then(|| format!("x{}", (c + 1) % 3)),
        })
        .collect();
    write_clustering(&dir.path().join("pred.jsonl"), &records).unwrap();
    let report = json_out(&edtm(dir.path(), &["metrics", "--pred", "pred.jsonl", "--gold", "corpus.jsonl"]));
    assert_eq!(report["p1"], 1.0);
    assert_eq!(report["n_evaluated"], 30);
    assert_eq!(report["assigned_fraction"], 0.5);

    let gold_records: Vec<ClusterRecord> = gold
        .iter()
        .enumerate()
        .map(|(i, c)| ClusterRecord {
            id: format!("d{i}"),
            label: Some(format!("g{c}")),
        })
        .collect();
    write_clustering(&dir.path().join("gold.jsonl"), &gold_records[..59]).unwrap();
    let out = edtm(dir.path(), &["metrics", "--pred", "pred.jsonl", "--gold", "gold.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("60"));
}

#[test]
fn omission_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let mut args = vec!["omit"];
    args.extend(with(&["--omit", "g1", "--repeats", "2"]));
    let report = json_out(&edtm(dir.path(), &args));
    let runs = report["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    for run in runs {
        assert_eq!(run["omitted"], "g1");
        assert!((run["p"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let out = edtm(dir.path(), &["assign", "--corpus", "corpus.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--labels"));

    let mut args = vec!["assign"];
    args.extend(with(&["--partial", "1.5"]));
    let out = edtm(dir.path(), &args);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));

    let mut args = vec!["assign"];
    args.extend(with(&["--partial", "0.5", "--complete"]));
    assert!(!edtm(dir.path(), &args).status.success());

    std::fs::remove_file(dir.path().join("labels.edtm")).unwrap();
    let mut args = vec!["assign"];
    args.extend(with(&[]));
    let out = edtm(dir.path(), &args);
    assert!(String::from_utf8_lossy(&out.stderr).contains("provider"), "{}", String::from_utf8_lossy(&out.stderr));
}
