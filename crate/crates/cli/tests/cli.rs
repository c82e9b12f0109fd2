use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use termnmt::nmt::Checkpoint;

fn termnmt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_termnmt"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = termnmt(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json summary")
}

fn fails(dir: &Path, args: &[&str]) -> Value {
    let out = termnmt(dir, args);
    assert_eq!(out.status.code(), Some(1), "{args:?} should fail");
    let err: Value = serde_json::from_slice(&out.stderr).expect("json error");
    err["error"].clone()
}

fn small_synth(dir: &Path, train: &str) {
    ok(dir, &["synth", "--seed", "7", "--train-pairs", train, "--dev-pairs", "10", "--test-pairs", "8"]);
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        ok(d, &["synth", "--seed", "7", "--train-pairs", "100"]);
    }
    let manifest = fs::read_to_string(a.path().join("synth.manifest.json")).unwrap();
    assert_eq!(manifest, fs::read_to_string(b.path().join("synth.manifest.json")).unwrap());
    let m: Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(m["seed"], 7);
    assert!(m["config_hash"].as_str().unwrap().starts_with("sha256:"));
    assert_eq!(m["versions"]["termnmt"], termnmt::VERSION);
    for out in m["outputs"].as_array().unwrap() {
        let f = out["file"].as_str().unwrap();
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert!(!manifest.contains(a.path().to_str().unwrap()));
}

#[test]
fn different_seeds_differ() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["synth", "--seed", "7", "--train-pairs", "20"]);
    ok(b.path(), &["synth", "--seed", "8", "--train-pairs", "20"]);
    assert_ne!(
        fs::read(a.path().join("train.tsv")).unwrap(),
        fs::read(b.path().join("train.tsv")).unwrap()
    );
}

#[test]
fn training_pipeline_on_fifty_pairs() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    small_synth(dir, "50");

    let pre = ok(dir, &["preprocess"]);
    // The generator puts every term in the phrase table.
    assert_eq!(pre["summary"]["step1"], pre["summary"]["terms"]);
    assert_eq!(pre["summary"]["unmatched"], 0);
    assert!(dir.join("dev.tok.tsv").is_file());

    let tr = ok(dir, &["train", "--epochs", "10", "--quiet", "--set", "nmt.hidden_size=16", "--set", "nmt.embed_size=16"]);
    assert_eq!(tr["summary"]["epochs"], 10);
    let ck = Checkpoint::read(fs::File::open(dir.join("model.json")).unwrap()).unwrap();
    assert_eq!(ck.model.config.epochs, 10);
    assert_eq!(ck.model.config.hidden_size, 16);
    let history: Value = serde_json::from_slice(&fs::read(dir.join("train-history.json")).unwrap()).unwrap();
    assert_eq!(history["epoch_losses"].as_array().unwrap().len(), 10);

    let t = ok(dir, &["translate"]);
    assert_eq!(t["summary"]["sentences"], 8);
    let text = fs::read_to_string(dir.join("translations.txt")).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(!text.contains("TT_"));
    let diag = fs::read_to_string(dir.join("translate-diagnostics.jsonl")).unwrap();
    for line in diag.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["unknown_tokens"].is_u64());
    }

    let r = ok(dir, &["rerank"]);
    assert_eq!(r["summary"]["sentences"], 8);
    let ranked = fs::read_to_string(dir.join("rerank.tsv")).unwrap();
    for line in ranked.lines() {
        let f: Vec<&str> = line.split('\t').collect();
        assert_eq!(f.len(), 6);
        let (smt, nmt, comb): (f64, f64, f64) = (f[2].parse().unwrap(), f[3].parse().unwrap(), f[4].parse().unwrap());
        assert!((comb - (smt + nmt) / 2.0).abs() < 1e-9);
        assert!(!f[5].contains("TT_"));
    }
    assert_eq!(fs::read_to_string(dir.join("rerank.best.txt")).unwrap().lines().count(), 8);

    let e = ok(dir, &["evaluate", "--hyp", dir.join("rerank.best.txt").to_str().unwrap()]);
    assert!(e["summary"]["bleu"].as_f64().unwrap() > 0.0);
    for cmd in ["synth", "preprocess", "train", "translate", "rerank", "evaluate"] {
        assert!(dir.join(format!("{cmd}.manifest.json")).is_file(), "{cmd}");
        assert!(dir.join(format!("{cmd}.config.toml")).is_file(), "{cmd}");
    }
}

#[test]
fn evaluate_identical_files_is_bleu_100() {
    let d = tempfile::tempdir().unwrap();
    let f = d.path().join("a.txt");
    fs::write(&f, "the cat sat on the mat\na b c d e\n").unwrap();
    let f = f.to_str().unwrap();
    let v = ok(d.path(), &["evaluate", "--hyp", f, "--ref", f]);
    assert_eq!(v["summary"]["bleu"], 100.0);
    assert_eq!(v["summary"]["ribes"], 100.0);
    let report: Value = serde_json::from_slice(&fs::read(d.path().join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["per_sentence"].as_array().unwrap().len(), 2);
}

#[test]
fn extract_terms_lists_spans() {
    let d = tempfile::tempdir().unwrap();
    let f = d.path().join("in.src");
    fs::write(&f, "ka/noun ri/noun ga/particle mi/verb\nmi/verb\nzo/prefix ka/noun wo/particle ri/noun\n").unwrap();
    let v = ok(d.path(), &["extract-terms", "--input", f.to_str().unwrap()]);
    assert_eq!(v["summary"]["terms"], 3);
    let out = fs::read_to_string(d.path().join("terms.tsv")).unwrap();
    assert_eq!(out, "1\t0\t2\tkari\n3\t0\t2\tzoka\n3\t3\t4\tri\n");
}

#[test]
fn preprocess_without_terms_passes_through() {
    let d = tempfile::tempdir().unwrap();
    let c = d.path().join("c.tsv");
    fs::write(&c, "mi/verb ga/particle\tsee/word\nta/adj\tbig/word\n").unwrap();
    let t = d.path().join("t.txt");
    fs::write(&t, "").unwrap();
    let v = ok(d.path(), &["preprocess", "--corpus", c.to_str().unwrap(), "--phrase-table", t.to_str().unwrap()]);
    assert_eq!(v["summary"]["terms"], 0);
    assert_eq!(fs::read_to_string(d.path().join("train.tok.tsv")).unwrap(), "mi ga\tsee\nta\tbig\n");
    assert_eq!(fs::read_to_string(d.path().join("term-dictionary.tsv")).unwrap(), "");
}

#[test]
fn preprocess_with_alignments_only_uses_step_two() {
    let d = tempfile::tempdir().unwrap();
    let c = d.path().join("c.tsv");
    fs::write(
        &c,
        "ka/noun ri/noun ga/particle\tof/word zhong/word guo/word\t0-1 1-2 2-0\n\
         su/noun wo/particle\tba/word mei/word\t0-1 1-0\n",
    )
    .unwrap();
    let t = d.path().join("t.txt");
    fs::write(&t, "").unwrap();
    let v = ok(d.path(), &["preprocess", "--corpus", c.to_str().unwrap(), "--phrase-table", t.to_str().unwrap()]);
    assert_eq!(v["summary"]["step2"], 2);
    assert_eq!(v["summary"]["step1"], 0);
    assert_eq!(
        fs::read_to_string(d.path().join("train.tok.tsv")).unwrap(),
        "TT_1 ga\tof TT_1\nTT_1 wo\tba TT_1\n"
    );
    let dict = fs::read_to_string(d.path().join("term-dictionary.tsv")).unwrap();
    assert!(dict.contains("ka ri\tzhong guo\tword_alignment\t1"));
}

#[test]
fn no_substitute_keeps_surfaces() {
    let d = tempfile::tempdir().unwrap();
    small_synth(d.path(), "20");
    let v = ok(d.path(), &["preprocess", "--no-substitute"]);
    assert!(v["summary"]["terms"].as_u64().unwrap() > 0);
    assert!(!fs::read_to_string(d.path().join("train.tok.tsv")).unwrap().contains("TT_"));
    let m: Value = serde_json::from_slice(&fs::read(d.path().join("preprocess.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["terms"]["substitute"], false);
}

#[test]
fn config_file_paths_resolve_against_its_directory() {
    let d = tempfile::tempdir().unwrap();
    let data = d.path().join("data");
    fs::create_dir(&data).unwrap();
    fs::write(data.join("h.txt"), "a b c d\n").unwrap();
    fs::write(data.join("r.txt"), "a b c d\n").unwrap();
    let cfg = d.path().join("run.toml");
    fs::write(&cfg, "seed = 3\n[paths]\nhypotheses = \"data/h.txt\"\nreferences = \"data/r.txt\"\n").unwrap();
    let out = d.path().join("out");
    let v = ok(&out, &["evaluate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(v["summary"]["bleu"], 100.0);
    let m: Value = serde_json::from_slice(&fs::read(out.join("evaluate.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 3);
    assert_eq!(m["inputs"][0]["file"], "h.txt");
}

#[test]
fn missing_checkpoint_is_an_error() {
    let d = tempfile::tempdir().unwrap();
    small_synth(d.path(), "10");
    let e = fails(d.path(), &["translate"]);
    assert_eq!(e["command"], "translate");
    assert_eq!(e["kind"], "missing_input");
    assert!(e["message"].as_str().unwrap().contains("checkpoint"));
    assert!(!d.path().join("translate.manifest.json").exists());
}

#[test]
fn nbest_source_mismatch_is_an_error() {
    let d = tempfile::tempdir().unwrap();
    small_synth(d.path(), "20");
    ok(d.path(), &["preprocess"]);
    ok(d.path(), &["train", "--epochs", "1", "--quiet", "--set", "nmt.hidden_size=4", "--set", "nmt.embed_size=4"]);
    let src = d.path().join("short.src");
    let first = fs::read_to_string(d.path().join("test.src")).unwrap();
    fs::write(&src, first.lines().take(3).collect::<Vec<_>>().join("\n")).unwrap();
    let e = fails(d.path(), &["rerank", "--input", src.to_str().unwrap()]);
    assert_eq!(e["kind"], "mismatch");
}

#[test]
fn bad_inputs_report_structured_errors() {
    let d = tempfile::tempdir().unwrap();
    let e = fails(d.path(), &["synth", "--set", "synth.unknown_key=1"]);
    assert_eq!(e["kind"], "config");
    let e = fails(d.path(), &["train", "--set", "nmt.lr_decay=2.0"]);
    assert_eq!(e["kind"], "config");

    let c = d.path().join("bad.tsv");
    fs::write(&c, "ka/noun\n").unwrap();
    let t = d.path().join("t.txt");
    fs::write(&t, "").unwrap();
    let e = fails(d.path(), &["preprocess", "--corpus", c.to_str().unwrap(), "--phrase-table", t.to_str().unwrap()]);
    assert_eq!(e["kind"], "input");
    assert!(e["message"].as_str().unwrap().contains("line 1"));

    let h = d.path().join("h.txt");
    fs::write(&h, "a\nb\n").unwrap();
    let r = d.path().join("r.txt");
    fs::write(&r, "a\n").unwrap();
    let e = fails(d.path(), &["evaluate", "--hyp", h.to_str().unwrap(), "--ref", r.to_str().unwrap()]);
    assert_eq!(e["kind"], "pipeline");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(termnmt(d.path(), &["nope"]).status.code(), Some(2));
}

#[test]
fn training_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        small_synth(d, "30");
        ok(d, &["preprocess"]);
        ok(d, &["train", "--epochs", "2", "--quiet", "--set", "nmt.hidden_size=8", "--set", "nmt.embed_size=8"]);
    }
    for f in ["train.manifest.json", "model.json", "train-history.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
