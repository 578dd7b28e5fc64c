use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn seekqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seekqa"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = seekqa(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_suite(dir: &Path, seed: &str) {
    ok(&[
        "synth",
        "--seed",
        seed,
        "--train-questions",
        "20",
        "--dev-questions",
        "10",
        "--out",
        s(dir),
    ]);
}

#[test]
fn synth_then_train_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let mut models = Vec::new();
    for run in ["a", "b"] {
        let data = tmp.path().join(run);
        small_suite(&data, "7");
        let model = tmp.path().join(format!("{run}.model"));
        ok(&[
            "train",
            "--data",
            s(&data),
            "--seed",
            "7",
            "--epochs",
            "2",
            "--out",
            s(&model),
        ]);
        models.push(fs::read(&model).unwrap());
        assert!(tmp.path().join(format!("{run}.log.csv")).exists());
    }
    assert_eq!(models[0], models[1]);
    assert_eq!(
        fs::read(tmp.path().join("a/corpus.jsonl")).unwrap(),
        fs::read(tmp.path().join("b/corpus.jsonl")).unwrap()
    );
}

#[test]
fn eval_without_model_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    small_suite(tmp.path(), "1");
    let out = seekqa(&[
        "eval",
        "--data",
        s(tmp.path()),
        "--out",
        s(&tmp.path().join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_and_subcommand_exit_one() {
    for args in [
        &["--frobnicate"][..],
        &["teleport"],
        &["eval", "--step-limit", "many"],
    ] {
        let out = seekqa(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn missing_input_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = seekqa(&[
        "index-sparse",
        "--corpus",
        s(&tmp.path().join("absent.jsonl")),
        "--out",
        s(&tmp.path().join("x.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_strategies_writes_one_row_per_strategy() {
    let tmp = tempfile::tempdir().unwrap();
    small_suite(tmp.path(), "3");
    let model = tmp.path().join("m.model");
    ok(&[
        "train",
        "--data",
        s(tmp.path()),
        "--epochs",
        "1",
        "--out",
        s(&model),
    ]);
    let report = tmp.path().join("cmp.json");
    ok(&[
        "compare-strategies",
        "--data",
        s(tmp.path()),
        "--model",
        s(&model),
        "--strategy",
        "f_s^t,(f_s|f_d|f_l)",
        "--step-limit",
        "20",
        "--out",
        s(&report),
    ]);
    let rows: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for key in ["p_em", "ans_em", "ans_f1", "read_mean", "recovery"] {
        assert!(rows[0].get(key).is_some(), "{key}");
    }
    let table = fs::read_to_string(report.with_extension("txt")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().nth(1).unwrap().starts_with("f_s^t"));

    let sweep = tmp.path().join("sweep.json");
    ok(&[
        "eval",
        "--data",
        s(tmp.path()),
        "--model",
        s(&model),
        "--step-limit-sweep",
        "1,5,20",
        "--out",
        s(&sweep),
    ]);
    let rows: Value = serde_json::from_str(&fs::read_to_string(&sweep).unwrap()).unwrap();
    let reads: Vec<f64> = rows
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["read_mean"].as_f64().unwrap())
        .collect();
    assert_eq!(reads.len(), 3);
    assert!(
        reads[0] <= 1.0 && reads.windows(2).all(|w| w[0] <= w[1]),
        "{reads:?}"
    );
}

#[test]
fn oracle_traces_reach_the_gold_evidence() {
    let tmp = tempfile::tempdir().unwrap();
    small_suite(tmp.path(), "5");
    let traces = tmp.path().join("oracle.jsonl");
    ok(&["oracle-trace", "--data", s(tmp.path()), "--out", s(&traces)]);
    let dev: Vec<Value> = fs::read_to_string(tmp.path().join("dev.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let lines: Vec<Value> = fs::read_to_string(&traces)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), dev.len());
    for (t, q) in lines.iter().zip(&dev) {
        assert_eq!(t["qid"], q["id"]);
        assert_eq!(t["answer"], q["answer"]);
        assert!(t["steps"][0].get("oracle_costs").is_some());
    }
}

#[test]
fn ingest_and_index_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    small_suite(tmp.path(), "2");
    let corpus = tmp.path().join("corpus.jsonl");
    let again = tmp.path().join("again.jsonl");
    ok(&["ingest", "--corpus", s(&corpus), "--out", s(&again)]);
    assert_eq!(fs::read(&corpus).unwrap(), fs::read(&again).unwrap());

    let stats = tmp.path().join("sparse.json");
    ok(&["index-sparse", "--corpus", s(&again), "--out", s(&stats)]);
    let stats: Value = serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
    let n = stats["passages"].as_u64().unwrap() as usize;
    assert_eq!(n, fs::read_to_string(&corpus).unwrap().lines().count());

    let emb = tmp.path().join("emb.txt");
    ok(&[
        "index-dense",
        "--corpus",
        s(&again),
        "--dim",
        "64",
        "--out",
        s(&emb),
    ]);
    let text = fs::read_to_string(&emb).unwrap();
    assert_eq!(text.lines().next().unwrap(), format!("d_e=64 count={n}"));
    assert_eq!(text.lines().count(), n + 1);
    assert!(text
        .lines()
        .skip(1)
        .all(|l| l.split_whitespace().count() == 65));
}
