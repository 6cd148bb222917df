mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mathgcl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mathgcl")).current_dir(dir).args(args).env("MATHGCL_LOG", "warn").output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("{e}: {text}"))
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = mathgcl(dir, args);
    assert!(out.status.success(), "{args:?}: {}\n{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    stdout_json(&out)
}

fn fails(dir: &Path, args: &[&str]) -> Value {
    let out = mathgcl(dir, args);
    assert_eq!(out.status.code(), Some(1), "{args:?}");
    stdout_json(&out)["error"].clone()
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_2() {
    let out = mathgcl(Path::new("."), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = mathgcl(Path::new("."), &["query"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn staged_commands_chain_into_a_query() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    common::write_small_config(dir);

    let parsed = ok(dir, &["parse", "--corpus", "corpus.jsonl", "--layout", "both", "--out", "graphs.jsonl"]);
    assert_eq!(parsed["records"], 40);
    let tokens = ok(dir, &["train-tokens", "--graphs", "graphs.jsonl", "--out", "t.table", "--dim", "16", "--buckets", "256", "--epochs", "1"]);
    assert_eq!(tokens["dim"], 16);
    for (layout, model) in [("opt", "bgrl"), ("slt", "graphcl")] {
        let ckpt = format!("{layout}.ckpt");
        let trained = ok(
            dir,
            &["train-gcl", "--model", model, "--graphs", "graphs.jsonl", "--tokens", "t.table", "--layout", layout, "--out", &ckpt, "--epochs", "2", "--batch-size", "8"],
        );
        assert_eq!(trained["loss_curve"].as_array().unwrap().len(), 2);
        ok(dir, &["embed", "--graphs", "graphs.jsonl", "--tokens", "t.table", "--checkpoint", &ckpt, "--layout", layout, "--out", &format!("{layout}.emb")]);
        let idx = ok(dir, &["index", "--embeddings", &format!("{layout}.emb"), "--out", &format!("{layout}.index")]);
        assert_eq!(idx["rows"], 20);
    }
    let trained = ok(dir, &["train-gcl", "--model", "infograph", "--graphs", "graphs.jsonl", "--tokens", "t.table", "--layout", "opt", "--out", "ig.ckpt", "--epochs", "1", "--batch-size", "8"]);
    assert_eq!(trained["counters"]["augmentations"], 0);

    let corpus = common::small_corpus();
    let target = &corpus[6];
    let hits = ok(dir, &["query", "--index", "opt.index", "--tokens", "t.table", "--checkpoint", "opt.ckpt", "--latex", &target.latex, "--k", "5", "--corpus", "corpus.jsonl"]);
    let results = hits["results"].as_array().unwrap();
    assert_eq!(results.len(), 5);
    assert_eq!(results[0]["id"], target.id.as_str());
    assert_eq!(results[0]["latex"], target.latex.as_str());
    assert!((results[0]["score"].as_f64().unwrap() - 1.0).abs() < 1e-6);

    let err = fails(dir, &["query", "--index", "opt.index", "--tokens", "t.table", "--checkpoint", "slt.ckpt", "--latex", "x"]);
    assert_eq!(err["kind"], "ArtifactMismatch");
    let err = fails(dir, &["query", "--index", "opt.index", "--tokens", "t.table", "--checkpoint", "opt.ckpt", "--latex", "x", "--layout", "slt"]);
    assert_eq!(err["kind"], "ArtifactMismatch");
    let err = fails(dir, &["query", "--index", "opt.index", "--tokens", "t.table", "--checkpoint", "opt.ckpt", "--latex", "a^{3"]);
    assert_eq!((err["stage"].as_str(), err["kind"].as_str(), err["offset"].as_u64()), (Some("parse"), Some("UnbalancedDelimiter"), Some(3)));
    let err = fails(dir, &["query", "--index", "opt.index", "--tokens", "t.table", "--latex", "x"]);
    assert_eq!(err["kind"], "ArtifactMismatch", "a GCL index without its checkpoint");

    let other = ok(dir, &["train-tokens", "--graphs", "graphs.jsonl", "--out", "other.table", "--dim", "16", "--buckets", "256", "--epochs", "1", "--seed", "99"]);
    assert_ne!(other["config_hash"], tokens["config_hash"]);
    let err = fails(dir, &["query", "--index", "opt.index", "--tokens", "other.table", "--checkpoint", "opt.ckpt", "--latex", "x"]);
    assert_eq!(err["kind"], "ArtifactMismatch");
}

#[test]
fn pipeline_then_query_and_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    common::write_small_config(dir);
    let report = ok(dir, &["pipeline", "--config", "config.json"]);
    assert_eq!(report["formulas"], 20);
    assert_eq!(report["entries"].as_array().unwrap().len(), 6);
    for e in report["entries"].as_array().unwrap() {
        assert_eq!(e["self_retrieval"]["rank_one"], 20, "{e}");
    }

    let corpus = common::small_corpus();
    let hits = ok(dir, &["query", "--artifacts", "artifacts", "--model", "baseline", "--layout", "slt", "--latex", &corpus[3].latex]);
    assert_eq!(hits["results"][0]["id"], corpus[3].id.as_str());
    assert_eq!(hits["model"], "baseline");
    let err = fails(dir, &["query", "--artifacts", "artifacts", "--model", "infograph", "--latex", "x"]);
    assert_eq!(err["kind"], "ArtifactMismatch");

    let eval = ok(dir, &["eval", "--run", "artifacts/slt-graphcl.run,artifacts/slt-bgrl.run", "--opt-run", "artifacts/opt-graphcl.run", "--qrels", "qrels.txt", "--k", "1000"]);
    assert_eq!(eval["run"]["trials"].as_array().unwrap().len(), 2);
    let f1 = eval["f1"]["bpref"].as_f64().unwrap();
    assert!(f1 > 0.0 && f1 <= 1.0);
    ok(dir, &["eval", "--run", "artifacts/opt-bgrl.run", "--qrels", "qrels.txt", "--out", "report.json"]);
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert!(saved["run"]["bpref"]["mean"].as_f64().is_some());

    std::fs::write(dir.join("empty.run"), "zz f000 1 0.5\n").unwrap();
    let err = fails(dir, &["eval", "--run", "empty.run", "--qrels", "qrels.txt"]);
    assert!(err["message"].as_str().unwrap().contains("no run query"));

    let err = fails(dir, &["pipeline", "--config", "missing.json"]);
    assert_eq!(err["kind"], "ConfigError");
}

#[test]
fn pipeline_reports_bad_corpora_with_the_formula_id() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    common::write_small_config(dir);
    std::fs::write(dir.join("corpus.jsonl"), "{\"id\":\"ok\",\"latex\":\"x\"}\n{\"id\":\"broken\",\"latex\":\"\\\\nope\"}\n").unwrap();
    let err = fails(dir, &["pipeline", "--config", "config.json"]);
    assert_eq!(err["stage"], "parse");
    assert!(err["message"].as_str().unwrap().contains("broken"));
}
