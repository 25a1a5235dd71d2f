mod support;

use std::fs::File;
use std::path::Path;

use serde_json::Value;
use support::{run_in, run_ok, write_text};
use voclab_core::manifest::write_manifest;
use voclab_core::{Annotation, ClipRecord, Environment, LabelClass, Manifest};

use LabelClass::*;

fn clip(id: &str) -> ClipRecord {
    ClipRecord {
        clip_id: id.into(),
        child_id: format!("k-{id}"),
        corpus_id: "synthetic".into(),
        language: "en".into(),
        environment: Environment::Urban,
        age_months: 9,
        audio_uri: format!("audio/{id}.wav"),
        duration_ms: 500,
        extra: Default::default(),
    }
}

/// One clip per label list, annotated in order by `a0`, `a1`, ...
fn manifest(dir: &Path, clips: &[(&str, &[LabelClass])]) {
    let mut m = Manifest::default();
    for (id, labels) in clips {
        m.clips.push(clip(id));
        for (i, &l) in labels.iter().enumerate() {
            m.annotations
                .push(Annotation::new(*id, format!("a{i}"), l, chrono::DateTime::UNIX_EPOCH));
        }
    }
    write_manifest(&m, File::create(dir.join("manifest.jsonl")).unwrap()).unwrap();
}

fn tiers(dir: &Path, name: &str) -> Vec<Value> {
    std::fs::read_to_string(dir.join(name))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn aggregate_worked_example() {
    let d = tempfile::tempdir().unwrap();
    manifest(
        d.path(),
        &[
            ("six", &[Canonical, Canonical, Canonical, Laughing, Laughing, Crying]),
            ("three", &[Junk, Junk, Crying]),
        ],
    );
    run_ok(d.path(), &["aggregate", "--manifest", "manifest.jsonl", "--out", "t.jsonl"]);
    let t = tiers(d.path(), "t.jsonl");
    assert_eq!(t[0]["clip_id"], "six");
    assert_eq!(t[0]["label"], "canonical");
    assert_eq!(t[0]["tier_flags"], serde_json::json!(["uncleaned"]));
    assert_eq!(t[1]["tier_flags"], serde_json::json!(["cleaned", "uncleaned"]));

    let meta: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("t.jsonl.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "aggregate");
    assert_eq!(meta["settings"]["threshold"], "2/3");
    assert_eq!(meta["settings"]["seed"], 0);
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let d = tempfile::tempdir().unwrap();
    manifest(d.path(), &[("six", &[Canonical, Canonical, Canonical, Laughing, Laughing, Crying])]);
    write_text(&d.path().join("voclab.toml"), "seed = 5\n[aggregate]\nthreshold = \"0.5\"\n");
    run_ok(
        d.path(),
        &["--config", "voclab.toml", "aggregate", "--manifest", "manifest.jsonl", "--out", "a.jsonl"],
    );
    assert_eq!(tiers(d.path(), "a.jsonl")[0]["tier_flags"], serde_json::json!(["cleaned", "uncleaned"]));
    let meta = std::fs::read_to_string(d.path().join("a.jsonl.meta.json")).unwrap();
    assert!(meta.contains("\"seed\": 5"), "{meta}");

    run_ok(
        d.path(),
        &[
            "--config", "voclab.toml", "aggregate", "--manifest", "manifest.jsonl", "--threshold", "2/3", "--out",
            "b.jsonl",
        ],
    );
    assert_eq!(tiers(d.path(), "b.jsonl")[0]["tier_flags"], serde_json::json!(["uncleaned"]));
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    manifest(d.path(), &[("c", &[Junk, Junk, Junk])]);
    assert_eq!(run_in(d.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(run_in(d.path(), &["--version"]).status.code(), Some(0));
    assert_eq!(run_in(d.path(), &["no-such-command"]).status.code(), Some(2));
    let missing = run_in(d.path(), &["split"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--manifest"));
    let bad_flag = run_in(
        d.path(),
        &["aggregate", "--manifest", "manifest.jsonl", "--threshold", "two", "--out", "t.jsonl"],
    );
    assert_eq!(bad_flag.status.code(), Some(2));
    assert!(!d.path().join("t.jsonl").exists());

    write_text(&d.path().join("bad.toml"), "[aggregate]\ntie_policy = \"coin\"\n");
    let bad_config = run_in(
        d.path(),
        &["--config", "bad.toml", "aggregate", "--manifest", "manifest.jsonl", "--out", "t.jsonl"],
    );
    assert_eq!(bad_config.status.code(), Some(1));

    let no_file = run_in(d.path(), &["aggregate", "--manifest", "absent.jsonl", "--out", "t.jsonl"]);
    assert_eq!(no_file.status.code(), Some(1));
    assert!(!d.path().join("t.jsonl").exists());
}

#[test]
fn annotation_logs_merge_and_reject_duplicates() {
    let d = tempfile::tempdir().unwrap();
    manifest(d.path(), &[("c", &[Junk, Crying])]);
    write_text(
        &d.path().join("store.jsonl"),
        "{\"kind\":\"annotation\",\"clip_id\":\"c\",\"annotator_id\":\"web1\",\"label\":\"junk\",\"submitted_at\":\"2024-05-01T10:00:00Z\"}\n",
    );
    run_ok(
        d.path(),
        &["aggregate", "--manifest", "manifest.jsonl", "--annotations", "store.jsonl", "--out", "t.jsonl"],
    );
    let t = tiers(d.path(), "t.jsonl");
    assert_eq!(t[0]["n_annotations"], 3);
    assert_eq!(t[0]["label"], "junk");

    write_text(
        &d.path().join("dup.jsonl"),
        "{\"kind\":\"annotation\",\"clip_id\":\"c\",\"annotator_id\":\"a0\",\"label\":\"junk\",\"submitted_at\":\"2024-05-01T10:00:00Z\"}\n",
    );
    let out = run_in(
        d.path(),
        &["aggregate", "--manifest", "manifest.jsonl", "--annotations", "dup.jsonl", "--out", "u.jsonl"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.path().join("u.jsonl").exists());
}

#[test]
fn report_combines_evaluations() {
    let d = tempfile::tempdir().unwrap();
    let spec = support::CorpusSpec {
        children: 20,
        clips_per_child: 12,
        annotators: 6,
        seed: 3,
    };
    support::write_corpus(d.path(), &spec);
    support::run_pipeline(d.path(), 1);
    run_ok(d.path(), &["report", "--in", "report.json", "--out", "summary.md"]);
    let md = std::fs::read_to_string(d.path().join("summary.md")).unwrap();
    assert!(md.contains("| synthetic-cleaned |"), "{md}");
    assert!(md.contains("## Distribution and performance by environment"));
    run_ok(d.path(), &["report", "--in", "report.json", "--format", "json", "--out", "summary.json"]);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("summary.json")).unwrap()).unwrap();
    assert!(v.is_object() || v.is_array());
}
