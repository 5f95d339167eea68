use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use btot_core::schema::{check_csv, check_json, check_training_log, JsonKind};
use btot_core::train::LogRecord;
use tempfile::TempDir;

fn btot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_btot")).args(args).output().expect("spawn btot")
}

fn ok(args: &[&str]) -> String {
    let o = btot(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn code(args: &[&str]) -> (i32, String) {
    let o = btot(args);
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn raw_input(dir: &Path) -> PathBuf {
    let p = dir.join("raw.jsonl");
    fs::write(
        &p,
        concat!(
            r#"{"id":"a","tokens":["war","peace","war","tax"],"timestamp":1790}"#,
            "\n",
            r#"{"id":"b","tokens":["tax","budget","peace"],"timestamp":1850}"#,
            "\n",
            r#"{"id":"c","counts":{"war":2,"budget":1},"timestamp":1900}"#,
            "\n"
        ),
    )
    .unwrap();
    p
}

fn read_log(path: &Path) -> Vec<LogRecord> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn prep_writes_a_three_document_corpus_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let input = raw_input(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = ok(&["prep", "--input", s(&input), "--out", s(&a)]);
    assert!(out.contains("documents  3"), "{out}");
    assert!(out.contains("vocabulary 4"), "{out}");
    assert!(out.contains("tokens     10"), "{out}");
    assert!(out.contains("1790 .. 1900"), "{out}");
    ok(&["prep", "--input", s(&input), "--out", s(&b)]);
    for f in ["corpus.jsonl", "vocab.txt", "time_scale.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read_to_string(a.join("corpus.jsonl")).unwrap().lines().count(), 3);
}

#[test]
fn prep_rejects_empty_vocabulary_and_bad_lines() {
    let dir = TempDir::new().unwrap();
    let input = raw_input(dir.path());
    let (c, err) = code(&["prep", "--input", s(&input), "--out", s(&dir.path().join("o")), "--min-df", "9"]);
    assert_eq!(c, 2);
    assert!(err.to_lowercase().contains("vocabulary"), "{err}");

    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\":\"a\",\"tokens\":[\"x\"],\"timestamp\":1}\n{not json}\n").unwrap();
    let (c, err) = code(&["prep", "--input", s(&bad), "--out", s(&dir.path().join("o"))]);
    assert_eq!(c, 2);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn batch_lda_with_ten_restarts_has_nonincreasing_perplexity() {
    let dir = TempDir::new().unwrap();
    let input = raw_input(dir.path());
    let c = dir.path().join("c");
    let m = dir.path().join("m");
    ok(&["prep", "--input", s(&input), "--out", s(&c)]);
    ok(&["train", "--model", "lda", "--k", "2", "--restarts", "10", "--corpus", s(&c), "--out", s(&m)]);
    let log = read_log(&m.join("train_log.jsonl"));
    assert!(!log.is_empty());
    for w in log.windows(2) {
        assert!(w[1].perplexity <= w[0].perplexity * (1.0 + 1e-9), "{w:?}");
    }
    check_training_log(&fs::read_to_string(m.join("train_log.jsonl")).unwrap()).unwrap();
    check_json(JsonKind::Snapshot, &fs::read_to_string(m.join("snapshot.json")).unwrap()).unwrap();
}

#[test]
fn config_errors_exit_one_with_the_field_name() {
    let dir = TempDir::new().unwrap();
    let input = raw_input(dir.path());
    let c = dir.path().join("c");
    ok(&["prep", "--input", s(&input), "--out", s(&c)]);
    let out = dir.path().join("m");
    let (code_, err) = code(&["train", "--model", "lda", "--k", "2", "--max-iter", "0", "--corpus", s(&c), "--out", s(&out)]);
    assert_eq!(code_, 1);
    assert!(err.contains("max_iter"), "{err}");

    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "model = \"btot\"\nk = 2\nkappa = 0.3\n").unwrap();
    let (code_, err) = code(&["train", "--config", s(&cfg), "--mode", "online", "--corpus", s(&c), "--out", s(&out)]);
    assert_eq!(code_, 1);
    assert!(err.contains("kappa"), "{err}");

    // The flag wins over the bad file value.
    ok(&["train", "--config", s(&cfg), "--kappa", "0.9", "--restarts", "1", "--corpus", s(&c), "--out", s(&out)]);
    let snap = fs::read_to_string(out.join("snapshot.json")).unwrap();
    assert!(snap.contains("\"btot\""));

    fs::write(&cfg, "model = \"btot\"\nkk = 2\n").unwrap();
    assert_eq!(code(&["train", "--config", s(&cfg), "--corpus", s(&c), "--out", s(&out)]).0, 1);
    assert_eq!(code(&["train", "--k", "2", "--corpus", s(&c), "--out", s(&out)]).0, 1);
    assert_eq!(code(&["train", "--model", "plsa", "--k", "2"]).0, 1);
}

#[test]
fn online_wbtot_logs_one_heldout_value_per_minibatch() {
    let dir = TempDir::new().unwrap();
    let c = dir.path().join("c");
    let m = dir.path().join("m");
    ok(&["synth", "--out", s(&c), "--k", "5", "--d", "1000", "--model", "wbtot", "--test-frac", "0.1", "--seed", "4"]);
    ok(&[
        "train", "--model", "wbtot", "--k", "5", "--mode", "online", "--batch-size", "100", "--max-iter", "1",
        "--restarts", "1", "--corpus", s(&c), "--out", s(&m),
    ]);
    let log = read_log(&m.join("train_log.jsonl"));
    let held: Vec<f64> = log.iter().filter_map(|r| r.heldout_perplexity).collect();
    assert_eq!(held.len(), 9, "{log:?}");
    assert!(held[8] <= held[0], "{held:?}");
}

#[test]
fn training_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let c = dir.path().join("c");
    ok(&["synth", "--out", s(&c), "--k", "3", "--d", "200", "--seed", "2"]);
    let mut snaps = Vec::new();
    for out in ["m1", "m2"] {
        let m = dir.path().join(out);
        ok(&["train", "--model", "btot", "--k", "3", "--restarts", "2", "--corpus", s(&c), "--out", s(&m)]);
        snaps.push(fs::read(m.join("snapshot.json")).unwrap());
    }
    assert_eq!(snaps[0], snaps[1]);
}

#[test]
fn full_metric_suite_matches_the_schemas() {
    let dir = TempDir::new().unwrap();
    let c = dir.path().join("c");
    let m = dir.path().join("m");
    let e = dir.path().join("e");
    ok(&["synth", "--out", s(&c), "--k", "5", "--d", "600", "--model", "wbtot", "--seed", "1"]);
    check_json(JsonKind::Snapshot, &fs::read_to_string(c.join("truth.json")).unwrap()).unwrap();
    ok(&["train", "--model", "wbtot", "--k", "5", "--restarts", "2", "--corpus", s(&c), "--out", s(&m)]);
    ok(&["eval", "--snapshot", s(&m.join("snapshot.json")), "--corpus", s(&c), "--out", s(&e), "--bin-width", "0.02"]);
    for (file, kind) in [
        ("histograms.csv", "histogram"),
        ("dispersion.csv", "dispersion"),
        ("topwords.csv", "topwords"),
        ("coherence.csv", "coherence"),
        ("symkl.csv", "symkl"),
    ] {
        let text = fs::read_to_string(e.join(file)).unwrap();
        check_csv(kind, &text).unwrap_or_else(|err| panic!("{file}: {err}"));
    }
    // The ground truth also evaluates.
    let e2 = dir.path().join("e2");
    ok(&["eval", "--snapshot", s(&c.join("truth.json")), "--corpus", s(&c), "--out", s(&e2), "--metrics", "symkl,topwords"]);
}

#[test]
fn unknown_metric_exits_one_and_lists_names() {
    let dir = TempDir::new().unwrap();
    let c = dir.path().join("c");
    ok(&["synth", "--out", s(&c), "--k", "2", "--d", "50"]);
    let (code_, err) = code(&[
        "eval", "--snapshot", s(&c.join("truth.json")), "--corpus", s(&c), "--out", s(&dir.path().join("e")),
        "--metrics", "dispersion,rouge",
    ]);
    assert_eq!(code_, 1);
    for name in ["histograms", "dispersion", "topwords", "coherence", "symkl"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn single_topic_single_bin_dispersion_is_zero() {
    let dir = TempDir::new().unwrap();
    let input = raw_input(dir.path());
    let (c, m, e) = (dir.path().join("c"), dir.path().join("m"), dir.path().join("e"));
    ok(&["prep", "--input", s(&input), "--out", s(&c)]);
    ok(&["train", "--model", "lda", "--k", "1", "--restarts", "1", "--corpus", s(&c), "--out", s(&m)]);
    ok(&[
        "eval", "--snapshot", s(&m.join("snapshot.json")), "--corpus", s(&c), "--out", s(&e), "--metrics",
        "dispersion,topwords", "--ranking", "r_log", "--bin-width", "1000",
    ]);
    let disp = fs::read_to_string(e.join("dispersion.csv")).unwrap();
    let first = disp.lines().nth(1).unwrap();
    assert_eq!(first, "lda,0,0,0");
    for line in fs::read_to_string(e.join("topwords.csv")).unwrap().lines().skip(1) {
        let score: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(score, 0.0, "{line}");
    }
}

#[test]
fn stability_demo_reports_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("r.json");
    let out = ok(&["stability-demo", "--out", s(&report)]);
    let line = |m: &str| out.lines().find(|l| l.starts_with(m)).unwrap().to_string();
    assert!(line("tot ").contains("diverged"), "{out}");
    assert!(line("btot").contains("bounded"), "{out}");
    assert!(line("wbtot").contains("bounded"), "{out}");
    check_json(JsonKind::StabilityReport, &fs::read_to_string(&report).unwrap()).unwrap();

    let out = ok(&["stability-demo", "--benign"]);
    assert_eq!(out.matches("bounded").count(), 3, "{out}");
}

#[test]
fn help_and_version_exit_zero_and_bad_usage_exits_one() {
    assert_eq!(code(&["--help"]).0, 0);
    assert_eq!(code(&["--version"]).0, 0);
    assert_eq!(code(&["frobnicate"]).0, 1);
    assert_eq!(code(&["train", "--k", "notanumber"]).0, 1);
}
