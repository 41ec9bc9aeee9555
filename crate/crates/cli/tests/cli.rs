use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fx(name: &str) -> String {
    fixtures().join(name).to_string_lossy().into_owned()
}

fn okret(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_okret"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = okret(args);
    assert!(
        out.status.success(),
        "okret {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn eval_reproduces_golden_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("metrics.json");
    let stdout = ok(&[
        "eval",
        "--corpus",
        &fx("corpus.tsv"),
        "--run",
        &fx("golden/run_bm25.tsv"),
        "--judgments",
        &fx("golden/heldout_judgments.jsonl"),
        "--out",
        out.to_str().unwrap(),
    ])
    .stdout;
    let got = read_json(&out);
    let golden = read_json(fixtures().join("golden/eval_bm25.json"));
    for key in ["cutoff", "mrr", "precision", "per_query"] {
        assert_eq!(got[key], golden[key], "{key}");
    }
    assert_eq!(got["header"]["tool"], "okret");
    let table = String::from_utf8(stdout).unwrap();
    assert!(table.lines().last().unwrap().starts_with("mean"));
}

#[test]
fn tune_lists_every_grid_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tune.json");
    let stdout = ok(&[
        "tune-bm25",
        "--corpus",
        &fx("corpus.tsv"),
        "--validation",
        &fx("validation.jsonl"),
        "--out",
        out.to_str().unwrap(),
    ])
    .stdout;
    let report = read_json(&out);
    let cells = report["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 24);
    let best = cells
        .iter()
        .map(|c| c["mrr"].as_f64().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(report["best_mrr"].as_f64().unwrap(), best);
    let rows = String::from_utf8(stdout).unwrap();
    assert_eq!(rows.lines().count(), 25, "header plus 24 rows");
    assert_eq!(rows.lines().filter(|l| l.ends_with('*')).count(), 1);
}

#[test]
fn generate_matches_golden_for_any_worker_count() {
    let golden = fs::read(fixtures().join("golden/dataset.jsonl")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for workers in ["1", "4"] {
        let out = dir.path().join(format!("dataset_{workers}.jsonl"));
        ok(&[
            "generate",
            "--corpus",
            &fx("corpus.tsv"),
            "--images",
            &fx("images.jsonl"),
            "--adapters",
            "stub",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(fs::read(&out).unwrap() == golden, "workers={workers} differs from golden");
        let header = read_json(dir.path().join(format!("dataset_{workers}.jsonl.header.json")));
        assert_eq!(header["header"]["seed"], 13);
        assert_eq!(header["header"]["config_sha256"].as_str().unwrap().len(), 64);
        let report = read_json(dir.path().join(format!("dataset_{workers}.jsonl.report.json")));
        assert_eq!(report["report"]["images"], 20);
        let audit = fs::read_to_string(dir.path().join(format!("dataset_{workers}.jsonl.audit.jsonl"))).unwrap();
        assert_eq!(audit.lines().count(), String::from_utf8_lossy(&golden).lines().count());
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        format!(
            "corpus = {:?}\nimages = {:?}\nseed = 7\n[pipeline]\npassages_per_image = 1\n",
            fx("corpus.tsv"),
            fx("images.jsonl")
        ),
    )
    .unwrap();
    let golden = fs::read(fixtures().join("golden/dataset.jsonl")).unwrap();

    let from_config = dir.path().join("a.jsonl");
    ok(&["--config", config.to_str().unwrap(), "generate", "--out", from_config.to_str().unwrap()]);
    let narrow = fs::read(&from_config).unwrap();
    assert!(narrow != golden && !narrow.is_empty());
    let header = read_json(dir.path().join("a.jsonl.header.json"));
    assert_eq!(header["header"]["seed"], 7);

    let overridden = dir.path().join("b.jsonl");
    ok(&[
        "--config",
        config.to_str().unwrap(),
        "generate",
        "--passages-per-image",
        "5",
        "--out",
        overridden.to_str().unwrap(),
    ]);
    assert!(fs::read(&overridden).unwrap() == golden);
    let other = read_json(dir.path().join("b.jsonl.header.json"));
    assert_ne!(header["header"]["config_sha256"], other["header"]["config_sha256"]);
}

#[test]
fn fixture_command_reproduces_committed_files() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["fixture", "--out", dir.path().to_str().unwrap()]);
    for f in ["corpus.tsv", "images.jsonl"] {
        assert!(fs::read(dir.path().join(f)).unwrap() == fs::read(fixtures().join(f)).unwrap(), "{f}");
        let header = read_json(dir.path().join(format!("{f}.header.json")));
        assert_eq!(header["header"]["seed"], 20);
    }
}

#[test]
fn train_retrieve_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    ok(&[
        "train",
        "--corpus",
        &fx("corpus.tsv"),
        "--dataset",
        &fx("golden/train.jsonl"),
        "--epochs",
        "3",
        "--embed-dim",
        "16",
        "--feature-dim",
        "256",
        "--out",
        &p("embedder.json"),
    ]);
    let sidecar = read_json(p("embedder.json.header.json"));
    assert_eq!(sidecar["log"]["epoch_loss"].as_array().unwrap().len(), 3);

    for (mode, embedder) in [("dense", Some(p("embedder.json"))), ("dense", Some("stub:32".to_string())), ("bm25", None)] {
        let run = p(&format!("run_{mode}.tsv"));
        let (corpus, queries) = (fx("corpus.tsv"), fx("golden/heldout_queries.jsonl"));
        let mut args = vec![
            "retrieve",
            "--corpus",
            &corpus,
            "--queries",
            &queries,
            "--mode",
            mode,
            "--k",
            "5",
            "--out",
            &run,
        ];
        if let Some(e) = &embedder {
            args.extend(["--embedder", e.as_str()]);
        }
        ok(&args);
        let text = fs::read_to_string(&run).unwrap();
        let header: Value = serde_json::from_str(text.lines().next().unwrap().strip_prefix("# ").unwrap()).unwrap();
        assert_eq!(header["command"], "retrieve");
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 40 * 5);
        ok(&["eval", "--corpus", &fx("corpus.tsv"), "--run", &run, "--judgments", &fx("golden/heldout_judgments.jsonl")]);
    }

    let out = ok(&[
        "compare",
        "--corpus",
        &fx("corpus.tsv"),
        "--run-a",
        &p("run_bm25.tsv"),
        "--run-b",
        &p("run_bm25.tsv"),
        "--judgments",
        &fx("golden/heldout_judgments.jsonl"),
        "--comparisons",
        "3",
        "--out",
        &p("cmp.json"),
    ]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("MRR@5"));
    let cmp = read_json(p("cmp.json"));
    assert_eq!(cmp["mrr_test"]["p"], 1.0);
    assert_eq!(cmp["mrr_test"]["p_corrected"], 1.0);
    assert_eq!(cmp["delta"]["mrr"], 0.0);
}

#[test]
fn export_splits_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    ok(&[
        "export-queries",
        "--dataset",
        &fx("golden/dataset.jsonl"),
        "--held-out",
        "5",
        "--queries",
        &p("q.jsonl"),
        "--judgments",
        &p("j.jsonl"),
        "--train-out",
        &p("train.jsonl"),
    ]);
    for (mine, golden) in [("q.jsonl", "heldout_queries.jsonl"), ("j.jsonl", "heldout_judgments.jsonl"), ("train.jsonl", "train.jsonl")] {
        assert_eq!(fs::read(p(mine)).unwrap(), fs::read(fixtures().join("golden").join(golden)).unwrap(), "{mine}");
        assert_eq!(read_json(p(&format!("{mine}.header.json")))["header"]["command"], "export-queries");
    }
}

#[test]
fn exit_codes() {
    assert_eq!(okret(&["--help"]).status.code(), Some(0));
    assert_eq!(okret(&["eval", "--help"]).status.code(), Some(0));
    assert_eq!(okret(&["eval", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(okret(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(
        okret(&["eval", "--corpus", "/nonexistent/c.tsv", "--run", "r", "--judgments", "j"]).status.code(),
        Some(1)
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "p1\tfine\nno tab here\n").unwrap();
    let out = okret(&["build-index", "--corpus", bad.to_str().unwrap(), "--out", dir.path().join("i.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.tsv:2"));

    let out = okret(&[
        "generate",
        "--corpus",
        &fx("corpus.tsv"),
        "--images",
        &fx("images.jsonl"),
        "--adapters",
        "remote:http://127.0.0.1:9",
        "--out",
        dir.path().join("d.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));

    let out = okret(&["generate", "--corpus", &fx("corpus.tsv"), "--images", &fx("images.jsonl"), "--adapters", "magic", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(okret(&["--config", cfg.to_str().unwrap(), "fixture", "--out", "x"]).status.code(), Some(1));
}
