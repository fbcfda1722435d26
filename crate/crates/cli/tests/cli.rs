use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lexattn::report::from_json;

fn lexattn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lexattn")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = lexattn(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn synth(dir: &Path, seed: &str) -> PathBuf {
    let data = dir.join(format!("data-{seed}"));
    ok(&[
        "synth", "--out", &s(&data), "--train-size", "120", "--val-size", "30", "--test-size", "30",
        "--signal-train-vocab", "300", "--seed", seed,
    ]);
    data
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let lexicon = format!("syn:4:{}", s(&data.join("lexicon.tsv")));
    let mut args = vec![
        "train".to_string(), "--train".into(), s(&data.join("train.tsv")), "--val".into(), s(&data.join("val.tsv")),
        "--lexicon".into(), lexicon, "--embed-dim".into(), "6".into(), "--hidden-dim".into(), "6".into(),
        "--attn-dim".into(), "6".into(), "--max-epochs".into(), "2".into(), "--out".into(), s(out),
    ];
    args.extend(extra.iter().map(|a| a.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    lexattn(&refs)
}

#[test]
fn missing_train_file_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "1");
    let missing = tmp.path().join("nope.tsv");
    let out = lexattn(&["train", "--train", &s(&missing), "--val", &s(&data.join("val.tsv")), "--out", &s(&tmp.path().join("run"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(&s(&missing)));
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn flags_override_config_file_and_are_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "2");
    let cfg = tmp.path().join("run.conf");
    fs::write(&cfg, "# toy\nvariant = attn_affine\nbatch_size = 16\nseed = 3\n").unwrap();
    let run = tmp.path().join("run");
    let out = train(&data, &run, &["--config", &s(&cfg), "--batch-size", "8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let resolved = fs::read_to_string(run.join("config.resolved")).unwrap();
    assert!(resolved.contains("variant = attn_affine\n"));
    assert!(resolved.contains("batch_size = 8\n"));
    assert!(resolved.contains("seed = 3\n"));
    for f in ["checkpoint.bin", "history.tsv", "labels.tsv", "vocab.txt", "lexicon.tsv"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    assert!(fs::read_dir(&run).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().starts_with(".staging")));
}

#[test]
fn unknown_config_key_exits_2_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "3");
    let cfg = tmp.path().join("bad.conf");
    fs::write(&cfg, "seed = 1\nlearning_rate = 0.1\n").unwrap();
    let out = train(&data, &tmp.path().join("run"), &["--config", &s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("learning_rate") && err.contains(":2"), "{err}");
}

#[test]
fn synth_is_deterministic_and_rejects_even_signal_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let a = synth(tmp.path(), "5");
    let b = tmp.path().join("again");
    fs::rename(&a, &b).unwrap();
    let a = synth(tmp.path(), "5");
    for f in ["train.tsv", "val.tsv", "test.tsv", "lexicon.tsv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let out = lexattn(&["synth", "--out", &s(&tmp.path().join("even")), "--signal-per-seq", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_and_attend_on_a_trained_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "6");
    let run = tmp.path().join("run");
    assert!(train(&data, &run, &["--variant", "attn_gate"]).status.success());
    let test = s(&data.join("test.tsv"));

    let m1 = tmp.path().join("m1.tsv");
    let m2 = tmp.path().join("m2.tsv");
    let out = ok(&["eval", "--checkpoint", &s(&run), "--data", &test, "--out", &s(&m1)]);
    ok(&["eval", "--checkpoint", &s(&run.join("checkpoint.bin")), "--data", &test, "--out", &s(&m2)]);
    let metrics = fs::read_to_string(&m1).unwrap();
    assert_eq!(metrics, fs::read_to_string(&m2).unwrap());
    assert!(metrics.starts_with("accuracy\t"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("macro_f1"));

    let json = tmp.path().join("a.json");
    let svg = tmp.path().join("a.svg");
    ok(&["attend", "--checkpoint", &s(&run), "--data", &test, "--format", "json", "--out", &s(&json)]);
    ok(&["attend", "--checkpoint", &s(&run), "--data", &test, "--format", "svg", "--out", &s(&svg)]);
    let reports = from_json(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(reports.len(), 30);
    let svg = fs::read_to_string(&svg).unwrap();
    let cells: usize = reports.iter().map(|r| r.tokens.len()).sum();
    assert_eq!(svg.matches("<rect").count(), cells);
    for r in &reports {
        assert_eq!(r.variant, "attn_gate");
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    let sample = |seed: &str, name: &str| {
        let p = tmp.path().join(name);
        ok(&["attend", "--checkpoint", &s(&run), "--data", &test, "--out", &s(&p), "--sample", "5", "--seed", seed]);
        from_json(&fs::read_to_string(p).unwrap()).unwrap()
    };
    let (x, y) = (sample("4", "s1.json"), sample("4", "s2.json"));
    assert_eq!(x.len(), 5);
    assert_eq!(x, y);
}

#[test]
fn eval_rejects_empty_data_and_mismatched_vocabulary() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "7");
    let run = tmp.path().join("run");
    assert!(train(&data, &run, &[]).status.success());
    let empty = tmp.path().join("empty.tsv");
    fs::write(&empty, "").unwrap();
    let m = s(&tmp.path().join("m.tsv"));
    assert_eq!(lexattn(&["eval", "--checkpoint", &s(&run), "--data", &s(&empty), "--out", &m]).status.code(), Some(2));
    fs::write(run.join("vocab.txt"), "<pad>\n<unk>\nzzz\n").unwrap();
    let test = s(&data.join("test.tsv"));
    assert_eq!(lexattn(&["eval", "--checkpoint", &s(&run), "--data", &test, "--out", &m]).status.code(), Some(2));
}

#[test]
fn multiple_seeds_write_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "8");
    let run = tmp.path().join("run");
    let test = s(&data.join("test.tsv"));
    let out = train(&data, &run, &["--seeds", "2", "--seed", "4", "--test", &test]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(run.join("summary.tsv")).unwrap();
    assert!(summary.contains("seed\t4\t") && summary.contains("seed\t5\t"), "{summary}");
    assert!(run.join("seed-5/checkpoint.bin").is_file());
    assert!(fs::read_to_string(run.join("seed-5/config.resolved")).unwrap().contains("seed = 5\n"));
}

#[test]
fn lexicon_compile_prints_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.tsv");
    let b = tmp.path().join("b.tsv");
    fs::write(&a, "good\t1\nbad\t0\n").unwrap();
    fs::write(&b, "good\t0.5\t2\n").unwrap();
    let out_path = tmp.path().join("table.tsv");
    let out = ok(&[
        "lexicon-compile", "--lexicon", &format!("pol:1:binary:{}", s(&a)), "--lexicon", &format!("x:2:{}", s(&b)),
        "--out", &s(&out_path),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("x\toffset 1\tdims 2"), "{stdout}");
    assert!(stdout.contains("total_dims 3"));
    let table = lexattn::lexicon::LexiconFeatureTable::import(&out_path).unwrap();
    assert_eq!(table.lookup("bad"), vec![0.0, 0.0, 0.0]);
    assert_eq!(table.lookup("good"), vec![1.0, 0.5, 2.0]);
}
