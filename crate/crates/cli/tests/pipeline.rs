use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mera_core::corpus::fixtures::{english_only, mini_corpus};
use mera_core::corpus::{load_dataset, load_source_dataset, write_dataset};
use mera_core::enseval::{EvalMatrix, System};
use mera_core::{DatasetKind, LanguageCode};
use serde_json::Value;

fn mera(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mera"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}\n{}", out.status.code(), stderr(out));
}

/// English-only source dataset plus the full multilingual reference.
fn write_sources(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    let (records, vocab) = mini_corpus(21, n);
    let reference = dir.join("reference");
    write_dataset(&reference, DatasetKind::MusicAvqa, &LanguageCode::ALL, &records, &vocab).unwrap();
    let (en_records, en_vocab) = english_only(&records, &vocab);
    let source = dir.join("source");
    write_dataset(&source, DatasetKind::MusicAvqa, &[LanguageCode::En], &en_records, &en_vocab).unwrap();
    (source, reference)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, format!("version = 1\nout_dir = \"out\"\n{body}")).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn identity_backend_copies_english_into_every_language() {
    let dir = tempfile::tempdir().unwrap();
    write_sources(dir.path(), 12);
    let cfg = write_config(dir.path(), "[dataset]\nsource = \"source\"\n");
    assert_ok(&mera(&["translate", "--config", cfg.to_str().unwrap()]));

    let (records, vocab) = load_dataset(&dir.path().join("out/corpus"), DatasetKind::MusicAvqa).unwrap();
    assert_eq!(records.len(), 12);
    for r in &records {
        let en = r.question(LanguageCode::En).unwrap();
        for lang in LanguageCode::ALL {
            assert_eq!(r.question(lang).unwrap(), en);
        }
    }
    assert_eq!(vocab.len(), 42);
    let manifest = read_json(&dir.path().join("out/manifests/translate.json"));
    assert_eq!(manifest["command"], "translate");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(dir.path().join("out/translate/review/hi.csv").exists());
}

#[test]
fn table_backend_reproduces_references_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (_, reference) = write_sources(dir.path(), 15);
    let (records, vocab) = load_dataset(&reference, DatasetKind::MusicAvqa).unwrap();
    let mut table: BTreeMap<LanguageCode, BTreeMap<String, String>> = BTreeMap::new();
    for lang in LanguageCode::TARGETS {
        let entries = table.entry(lang).or_default();
        for r in &records {
            entries.insert(r.question(LanguageCode::En).unwrap().into(), r.question(lang).unwrap().into());
        }
        for label in vocab.labels() {
            entries.insert(label.english().into(), label.surface[&lang].clone());
        }
    }
    fs::write(dir.path().join("table.json"), serde_json::to_string(&table).unwrap()).unwrap();
    let cfg = write_config(
        dir.path(),
        "[dataset]\nsource = \"source\"\nreferences = \"reference\"\n[translate]\nbackend = \"table\"\ntable = \"table.json\"\n",
    );
    assert_ok(&mera(&["translate", "--config", cfg.to_str().unwrap()]));

    let quality = read_json(&dir.path().join("out/translate/quality.json"));
    for lang in LanguageCode::TARGETS {
        let bleu = quality["report"]["scores"][lang.as_str()]["bleu"]["corpus"].as_f64().unwrap();
        assert!((bleu - 1.0).abs() < 1e-12, "{lang}: {bleu}");
    }
}

#[test]
fn missing_input_path_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[dataset]\nsource = \"no-such-dir\"\n");
    let out = mera(&["translate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("no-such-dir"), "{err}");
    assert_eq!(err.trim().lines().count(), 1, "{err}");

    let out = mera(&["translate", "--config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn downstream_stage_names_the_missing_producer() {
    let dir = tempfile::tempdir().unwrap();
    write_sources(dir.path(), 10);
    let cfg = write_config(dir.path(), "languages = [\"en\"]\n[dataset]\nsource = \"source\"\n");
    let cfg = cfg.to_str().unwrap();
    let out = mera(&["extract", "--config", cfg, "--log-level", "error"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("mera translate"), "{}", stderr(&out));
    assert_ok(&mera(&["translate", "--config", cfg, "--log-level", "error"]));
    let out = mera(&["train", "--config", cfg, "--log-level", "error"]);
    assert!(stderr(&out).contains("mera extract"), "{}", stderr(&out));
    assert_ok(&mera(&["extract", "--config", cfg, "--log-level", "error"]));
    let out = mera(&["eval", "--config", cfg, "--log-level", "error"]);
    assert!(stderr(&out).contains("mera train"), "{}", stderr(&out));
    let out = mera(&["extract", "--config", cfg, "--seed", "5", "--log-level", "error"]);
    assert_ok(&out);
    let out = mera(&["train", "--config", cfg, "--log-level", "error"]);
    assert!(stderr(&out).contains("rerun `mera extract`"), "{}", stderr(&out));
}

#[test]
fn invalid_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[models]\nvariants = [\"MERA-X\"]\n");
    let out = mera(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = mera(&["eval", "--weights", "1,-1,0"]);
    assert_eq!(out.status.code(), Some(2));
}

const E2E: &str = r#"
languages = ["en", "fr"]
seed = 4
[dataset]
source = "source"
[embed]
synthetic_dims = { video = [16, 12], audio = [16, 10], text = [16, 8] }
[train]
epochs = 3
batch_size = 8
early_stopping_patience = 2
[bench]
repeats = 3
"#;

#[test]
fn end_to_end_on_the_mini_corpus() {
    let dir = tempfile::tempdir().unwrap();
    write_sources(dir.path(), 40);
    let cfg = write_config(dir.path(), E2E);
    let cfg = cfg.to_str().unwrap();
    let out_dir = dir.path().join("out");
    for cmd in ["translate", "extract", "train", "eval", "bench"] {
        assert_ok(&mera(&[cmd, "--config", cfg, "--log-level", "warn"]));
        assert!(out_dir.join(format!("manifests/{cmd}.json")).exists(), "{cmd}");
    }

    let (_, records, _) = load_source_dataset(&out_dir.join("corpus"), DatasetKind::MusicAvqa).unwrap();
    assert_eq!(records.len(), 40);

    let report = read_json(&out_dir.join("eval/report.json"));
    let rows: Vec<&String> = report["languages"].as_object().unwrap().keys().collect();
    assert_eq!(rows, ["en", "fr"]);
    assert!(report["A"].is_object());
    let md = fs::read_to_string(out_dir.join("eval/report.md")).unwrap();
    assert!(md.contains("| en |") && md.contains("| fr |") && md.contains("| **A** |"), "{md}");

    let latency = read_json(&out_dir.join("bench/latency.json"));
    let median = |s: &str| latency["median_ms"][s].as_f64().unwrap();
    for s in ["L", "C", "T", "ENS"] {
        assert!(median(s) >= 0.0);
    }
    assert!(fs::read_to_string(out_dir.join("bench/report.md")).unwrap().contains("Inference latency"));

    // degenerate weights select MERA-L
    assert_ok(&mera(&["eval", "--config", cfg, "--weights", "1,0,0", "--log-level", "warn"]));
    let matrix: EvalMatrix =
        serde_json::from_str(&fs::read_to_string(out_dir.join("eval/matrix.json")).unwrap()).unwrap();
    for lang in [LanguageCode::En, LanguageCode::Fr] {
        for &q in &matrix.question_types {
            assert_eq!(matrix.get(lang, q, System::Ens), matrix.get(lang, q, System::L));
        }
    }

    // unchanged inputs: training is skipped, then a forced rerun is byte-identical
    let log = out_dir.join("logs/fr/MERA-T.jsonl");
    let ckpt = out_dir.join("checkpoints/fr/MERA-T.ckpt");
    let (log_a, ckpt_a) = (fs::read(&log).unwrap(), fs::read(&ckpt).unwrap());
    assert_eq!(String::from_utf8(log_a.clone()).unwrap().lines().count(), 3);
    let out = mera(&["train", "--config", cfg]);
    assert_ok(&out);
    assert!(stderr(&out).contains("up to date"));
    assert_ok(&mera(&["train", "--config", cfg, "--force", "--log-level", "warn"]));
    assert_eq!(fs::read(&log).unwrap(), log_a);
    assert_eq!(fs::read(&ckpt).unwrap(), ckpt_a);

    // extraction is idempotent
    assert_ok(&mera(&["extract", "--config", cfg, "--log-level", "warn"]));
    let summary = read_json(&out_dir.join("extract/report.json"));
    assert_eq!(summary["extracted"], 0);
}
