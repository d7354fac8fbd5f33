//! End-to-end tests of the `ingrex` binary: every subcommand, exit
//! codes, and output determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ingrex"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn assert_failure(out: &Output) {
    assert!(
        !out.status.success(),
        "expected failure\nstdout: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(!out.stderr.is_empty(), "failures must explain themselves on stderr");
}

fn vocab_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/ingredients.txt")
}

fn write(dir: &TempDir, name: &str, content: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, content).unwrap();
    path
}

const SAMPLE_XML: &str = r#"<corpus>
  <recipe id="r1">
    <text>Add sugar and flour.</text>
    <annotation start="4" end="9" surface="sugar"/>
    <annotation start="14" end="19" surface="pepper"/>
  </recipe>
</corpus>"#;

#[test]
fn ingest_xml_writes_normalized_records_and_reports_defects() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "corpus.xml", SAMPLE_XML);
    let output = dir.path().join("corpus.jsonl");
    let out = run(&[
        "ingest",
        input.to_str().unwrap(),
        "--format",
        "xml",
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_success(&out);
    // The surface mismatch is a diagnostic, not data.
    assert!(String::from_utf8_lossy(&out.stderr).contains("pepper"));
    let records = fs::read_to_string(&output).unwrap();
    assert_eq!(records.lines().count(), 1);
    assert!(records.contains("\"source\":\"corpus\""));
    assert!(records.contains("[4,9,\"ING\"]"));
}

#[test]
fn ingest_malformed_xml_fails() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "bad.xml", "<corpus><recipe id=");
    let out = run(&[
        "ingest",
        input.to_str().unwrap(),
        "--format",
        "xml",
        "--output",
        dir.path().join("out.jsonl").to_str().unwrap(),
    ]);
    assert_failure(&out);
}

#[test]
fn ingest_empty_file_succeeds_with_zero_records() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "empty.xml", "<corpus></corpus>");
    let output = dir.path().join("out.jsonl");
    let out = run(&[
        "ingest",
        input.to_str().unwrap(),
        "--format",
        "xml",
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_success(&out);
    assert_eq!(fs::read_to_string(&output).unwrap(), "");
}

#[test]
fn stats_prints_counts_and_top_k() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "docs.jsonl",
        "{\"id\":\"a\",\"text\":\"Salt and salt\",\"spans\":[[0,4,\"ING\"],[9,13,\"ING\"]]}\n",
    );
    let out = run(&["stats", input.to_str().unwrap(), "--top-k", "2"]);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("documents: 1"));
    assert!(stdout.contains("spans: 2"));
    assert!(stdout.contains("salt\t2"));

    let header_only = run(&["stats", input.to_str().unwrap(), "--top-k", "0"]);
    assert_success(&header_only);
    assert!(!String::from_utf8_lossy(&header_only.stdout).contains("salt\t"));
}

#[test]
fn stats_missing_file_fails() {
    assert_failure(&run(&["stats", "/nonexistent/path.jsonl"]));
}

fn ten_records() -> String {
    (0..10)
        .map(|i| {
            format!("{{\"id\":\"d{i}\",\"text\":\"Show me bacon recipes\",\"spans\":[[8,13,\"ING\"]]}}\n")
        })
        .collect()
}

#[test]
fn split_produces_801010_files_deterministically() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "docs.jsonl", &ten_records());
    let out_dir = dir.path().join("splits");
    let args = [
        "split",
        input.to_str().unwrap(),
        "--ratios",
        "80/10/10",
        "--seed",
        "7",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ];
    assert_success(&run(&args));
    let first: Vec<String> = ["train", "eval", "test"]
        .iter()
        .map(|n| fs::read_to_string(out_dir.join(format!("{n}.jsonl"))).unwrap())
        .collect();
    assert_eq!(first[0].lines().count(), 8);
    assert_eq!(first[1].lines().count(), 1);
    assert_eq!(first[2].lines().count(), 1);

    assert_success(&run(&args));
    let second: Vec<String> = ["train", "eval", "test"]
        .iter()
        .map(|n| fs::read_to_string(out_dir.join(format!("{n}.jsonl"))).unwrap())
        .collect();
    assert_eq!(first, second);
}

#[test]
fn split_rejects_bad_ratios() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "docs.jsonl", &ten_records());
    let out = run(&[
        "split",
        input.to_str().unwrap(),
        "--ratios",
        "80/10/20",
        "--out-dir",
        dir.path().join("splits").to_str().unwrap(),
    ]);
    assert_failure(&out);
}

#[test]
fn generate_builtin_templates() {
    let dir = TempDir::new().unwrap();
    let output = dir.path().join("gen.jsonl");
    let out = run(&[
        "generate",
        "--vocab",
        vocab_path().to_str().unwrap(),
        "--n",
        "500",
        "--seed",
        "42",
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_success(&out);
    let first = fs::read_to_string(&output).unwrap();
    assert_eq!(first.lines().count(), 500);

    // Same seed, byte-identical output.
    assert_success(&run(&[
        "generate",
        "--vocab",
        vocab_path().to_str().unwrap(),
        "--n",
        "500",
        "--seed",
        "42",
        "--output",
        output.to_str().unwrap(),
    ]));
    assert_eq!(first, fs::read_to_string(&output).unwrap());
}

#[test]
fn generate_n_zero_writes_empty_file() {
    let dir = TempDir::new().unwrap();
    let output = dir.path().join("gen.jsonl");
    assert_success(&run(&[
        "generate",
        "--vocab",
        vocab_path().to_str().unwrap(),
        "--n",
        "0",
        "--output",
        output.to_str().unwrap(),
    ]));
    assert_eq!(fs::read_to_string(&output).unwrap(), "");
}

#[test]
fn generate_multislot_with_tiny_vocab_fails() {
    let dir = TempDir::new().unwrap();
    let templates = write(&dir, "templates.txt", "{ing} and {ing} stew\n");
    let vocab = write(&dir, "vocab.txt", "bacon\n");
    let out = run(&[
        "generate",
        "--templates",
        templates.to_str().unwrap(),
        "--vocab",
        vocab.to_str().unwrap(),
        "--n",
        "1",
        "--output",
        dir.path().join("gen.jsonl").to_str().unwrap(),
    ]);
    assert_failure(&out);
}

/// Generates a corpus, trains on it, tags it, and checks eval output.
#[test]
fn train_tag_eval_pipeline() {
    let dir = TempDir::new().unwrap();
    let gen = dir.path().join("gen.jsonl");
    assert_success(&run(&[
        "generate",
        "--vocab",
        vocab_path().to_str().unwrap(),
        "--n",
        "120",
        "--seed",
        "9",
        "--output",
        gen.to_str().unwrap(),
    ]));

    let model = dir.path().join("model.json");
    let out = run(&[
        "train",
        gen.to_str().unwrap(),
        "--epochs",
        "5",
        "--seed",
        "1",
        "--model",
        model.to_str().unwrap(),
    ]);
    assert_success(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch 1:"));
    assert!(model.exists());

    let pred = dir.path().join("pred.jsonl");
    assert_success(&run(&[
        "tag",
        gen.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--output",
        pred.to_str().unwrap(),
    ]));
    assert_eq!(
        fs::read_to_string(&pred).unwrap().lines().count(),
        120,
        "one record per input document"
    );

    let out = run(&["eval", "--pred", pred.to_str().unwrap(), "--gold", gen.to_str().unwrap()]);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("entity"), "missing entity row: {stdout}");
    assert!(stdout.contains("token"));
}

#[test]
fn train_on_empty_file_fails() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "empty.jsonl", "");
    let out = run(&[
        "train",
        input.to_str().unwrap(),
        "--model",
        dir.path().join("model.json").to_str().unwrap(),
    ]);
    assert_failure(&out);
}

#[test]
fn tag_with_missing_model_fails() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "docs.jsonl", &ten_records());
    let out = run(&[
        "tag",
        input.to_str().unwrap(),
        "--model",
        "/nonexistent/model.json",
        "--output",
        dir.path().join("pred.jsonl").to_str().unwrap(),
    ]);
    assert_failure(&out);
}

#[test]
fn tag_gazetteer_reproduces_gold_on_generated_data() {
    let dir = TempDir::new().unwrap();
    let gen = dir.path().join("gen.jsonl");
    assert_success(&run(&[
        "generate",
        "--vocab",
        vocab_path().to_str().unwrap(),
        "--n",
        "80",
        "--seed",
        "3",
        "--output",
        gen.to_str().unwrap(),
    ]));
    let pred = dir.path().join("pred.jsonl");
    assert_success(&run(&[
        "tag",
        gen.to_str().unwrap(),
        "--gazetteer",
        "--vocab",
        vocab_path().to_str().unwrap(),
        "--output",
        pred.to_str().unwrap(),
    ]));
    let out = run(&["eval", "--pred", pred.to_str().unwrap(), "--gold", gen.to_str().unwrap()]);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("entity   80      0       0"),
        "gazetteer should be exact here: {stdout}"
    );
}

#[test]
fn eval_identity_is_perfect() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "docs.jsonl", &ten_records());
    let report = dir.path().join("report.json");
    let out = run(&[
        "eval",
        "--pred",
        input.to_str().unwrap(),
        "--gold",
        input.to_str().unwrap(),
        "--json",
        report.to_str().unwrap(),
    ]);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("1.0000     1.0000   1.0000"), "{stdout}");
    let json = fs::read_to_string(&report).unwrap();
    assert!(json.contains("\"f1\": 1.0"));
}

#[test]
fn eval_mismatched_ids_fail() {
    let dir = TempDir::new().unwrap();
    let gold = write(&dir, "gold.jsonl", "{\"id\":\"a\",\"text\":\"salt\",\"spans\":[]}\n");
    let pred = write(&dir, "pred.jsonl", "{\"id\":\"b\",\"text\":\"salt\",\"spans\":[]}\n");
    let out =
        run(&["eval", "--pred", pred.to_str().unwrap(), "--gold", gold.to_str().unwrap()]);
    assert_failure(&out);
}
