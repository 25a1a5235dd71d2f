#![allow(dead_code)]

//! Synthetic corpus and pipeline driver shared by the CLI test targets.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{TimeZone, Utc};
use voclab_core::manifest::write_manifest;
use voclab_core::rng::SeededRng;
use voclab_core::{Annotation, ClipRecord, Environment, LabelClass, Manifest};

pub fn voclab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_voclab"))
}

/// Runs `voclab` in `dir` and returns its output.
pub fn run_in(dir: &Path, args: &[&str]) -> Output {
    voclab()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("voclab runs")
}

pub fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "voclab {} failed ({:?}):\n{}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub struct CorpusSpec {
    pub children: usize,
    pub clips_per_child: usize,
    pub annotators: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            children: 50,
            clips_per_child: 50,
            annotators: 12,
            seed: 2024,
        }
    }
}

const LANGUAGES: [&str; 4] = ["en", "fr", "tseltal", "yeli"];
const RATES: [u32; 3] = [16000, 44100, 48000];
/// Crying, laughing, canonical, non-canonical, junk.
const CLASS_WEIGHTS: [f64; 5] = [0.15, 0.08, 0.20, 0.30, 0.27];

fn draw_class(rng: &mut SeededRng) -> LabelClass {
    let u = rng.next_f64();
    let mut acc = 0.0;
    for (c, w) in LabelClass::ALL.iter().zip(CLASS_WEIGHTS) {
        acc += w;
        if u < acc {
            return *c;
        }
    }
    LabelClass::Junk
}

fn harmonics(t: f64, f0: f64, n: usize) -> f64 {
    (1..=n).map(|k| (TAU * f0 * k as f64 * t).sin() / k as f64).sum()
}

/// A short waveform whose spectral shape depends on the class.
pub fn synth_clip(class: LabelClass, rate: u32, secs: f64, pitch: f64, rng: &mut SeededRng) -> Vec<f64> {
    let n = (secs * rate as f64) as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let noise = rng.uniform(-1.0, 1.0);
            let v = match class {
                LabelClass::Crying => {
                    let f0 = pitch * (450.0 + 40.0 * (TAU * 3.0 * t).sin());
                    0.35 * harmonics(t, f0, 6) + 0.02 * noise
                }
                LabelClass::Laughing => {
                    let gate = (TAU * 8.0 * t).sin().max(0.0);
                    gate * (0.2 * harmonics(t, pitch * 320.0, 3) + 0.3 * noise)
                }
                LabelClass::Canonical => {
                    // consonant burst then vowel, 180 ms syllables
                    if (t % 0.18) < 0.05 {
                        0.25 * noise
                    } else {
                        0.3 * harmonics(t, pitch * 260.0, 8)
                    }
                }
                LabelClass::NonCanonical => 0.3 * harmonics(t, pitch * 260.0, 8) + 0.01 * noise,
                LabelClass::Junk => 0.03 * noise + 0.05 * (TAU * 60.0 * t).sin(),
            };
            v.clamp(-0.99, 0.99)
        })
        .collect()
}

fn write_wav(path: &Path, channels: &[Vec<f64>], rate: u32, float: bool) {
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate: rate,
        bits_per_sample: if float { 32 } else { 16 },
        sample_format: if float { hound::SampleFormat::Float } else { hound::SampleFormat::Int },
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for i in 0..channels[0].len() {
        for ch in channels {
            if float {
                w.write_sample(ch[i] as f32).unwrap();
            } else {
                w.write_sample((ch[i] * 32767.0).round() as i16).unwrap();
            }
        }
    }
    w.finalize().unwrap();
}

pub struct Corpus {
    pub manifest: PathBuf,
    pub truth: Vec<(String, LabelClass)>,
}

/// Writes `manifest.jsonl` and `audio/*.wav` under `dir`. Each child has
/// one language, age, environment and recording setup; each clip gets
/// 1 to 5 annotations from annotators with error rates between 5% and 35%.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec) -> Corpus {
    let mut rng = SeededRng::new(spec.seed);
    std::fs::create_dir_all(dir.join("audio")).unwrap();
    let error_rates: Vec<f64> = (0..spec.annotators)
        .map(|a| 0.05 + 0.30 * a as f64 / (spec.annotators - 1).max(1) as f64)
        .collect();
    let t0 = Utc.with_ymd_and_hms(2024, 5, 1, 9, 0, 0).unwrap();
    let mut m = Manifest::default();
    let mut truth = Vec::new();
    for k in 0..spec.children {
        let child = format!("child{k:03}");
        let language = LANGUAGES[k % LANGUAGES.len()];
        let env = if k % 2 == 0 { Environment::Urban } else { Environment::Rural };
        let age = 3 + rng.index(34) as u32;
        let rate = RATES[rng.index(RATES.len())];
        let stereo = rng.index(4) == 0;
        let float = rng.index(3) == 0;
        let pitch = rng.uniform(0.85, 1.15);
        for j in 0..spec.clips_per_child {
            let id = format!("{child}_{j:03}");
            let class = draw_class(&mut rng);
            let secs = rng.uniform(0.30, 0.55);
            let mono = synth_clip(class, rate, secs, pitch, &mut rng);
            let channels = if stereo { vec![mono.clone(), mono] } else { vec![mono] };
            let rel = format!("audio/{id}.wav");
            write_wav(&dir.join(&rel), &channels, rate, float);
            m.clips.push(ClipRecord {
                clip_id: id.clone(),
                child_id: child.clone(),
                corpus_id: "synthetic".into(),
                language: language.into(),
                environment: env,
                age_months: age,
                audio_uri: rel,
                duration_ms: (secs * 1000.0).round() as u64,
                extra: Default::default(),
            });
            let n_ann = match rng.index(10) {
                0 => 1 + rng.index(2),
                1 => 4 + rng.index(2),
                _ => 3,
            };
            for a in rng.sample_indices(spec.annotators, n_ann) {
                let label = if rng.next_f64() < error_rates[a] {
                    let others: Vec<LabelClass> = LabelClass::ALL.into_iter().filter(|c| *c != class).collect();
                    others[rng.index(others.len())]
                } else {
                    class
                };
                let at = t0 + chrono::Duration::seconds((m.annotations.len() * 7) as i64);
                m.annotations.push(Annotation::new(id.clone(), format!("annotator{a:02}"), label, at));
            }
            truth.push((id, class));
        }
    }
    let path = dir.join("manifest.jsonl");
    write_manifest(&m, File::create(&path).unwrap()).unwrap();
    Corpus { manifest: path, truth }
}

/// Every stage of the pipeline, run in `dir` on `manifest.jsonl`.
pub const PIPELINE: &[&[&str]] = &[
    &["aggregate", "--manifest", "manifest.jsonl", "--out", "tiers.jsonl"],
    &[
        "downsample", "--manifest", "manifest.jsonl", "--labels", "tiers.jsonl", "--tier", "cleaned", "--out",
        "sampled.jsonl",
    ],
    &[
        "split", "--manifest", "manifest.jsonl", "--labels", "sampled.jsonl", "--tier", "cleaned", "--out",
        "split.jsonl",
    ],
    &["prep", "--manifest", "manifest.jsonl", "--labels", "sampled.jsonl", "--out", "clips.bin"],
    &["featurize", "--clips", "clips.bin", "--out", "features.csv"],
    &[
        "train", "--embeddings", "features.csv", "--labels", "sampled.jsonl", "--split", "split.jsonl", "--out",
        "model.bin",
    ],
    &[
        "predict", "--model", "model.bin", "--embeddings", "features.csv", "--split", "split.jsonl", "--fold", "test",
        "--out", "predictions.jsonl",
    ],
    &[
        "evaluate", "--manifest", "manifest.jsonl", "--predictions", "predictions.jsonl", "--labels", "sampled.jsonl",
        "--split", "split.jsonl", "--strata", "environment,language,age_bucket", "--dataset-id", "synthetic",
        "--finetune-set", "synthetic-cleaned", "--out", "report.json", "--markdown", "report.md",
    ],
    &[
        "agreement", "--manifest", "manifest.jsonl", "--labels", "sampled.jsonl", "--predictions",
        "predictions.jsonl", "--out", "agreement.json",
    ],
];

/// Files the pipeline writes, sidecars included.
pub fn pipeline_outputs() -> Vec<String> {
    let names = [
        "tiers.jsonl",
        "sampled.jsonl",
        "split.jsonl",
        "clips.bin",
        "features.csv",
        "model.bin",
        "predictions.jsonl",
        "report.json",
        "report.md",
        "agreement.json",
    ];
    names
        .iter()
        .flat_map(|n| [n.to_string(), format!("{n}.meta.json")])
        .collect()
}

pub fn run_pipeline(dir: &Path, seed: u64) {
    let seed = seed.to_string();
    for stage in PIPELINE {
        let mut args: Vec<&str> = vec!["--seed", &seed];
        args.extend_from_slice(stage);
        run_ok(dir, &args);
    }
}

pub fn write_text(path: &Path, text: &str) {
    File::create(path).unwrap().write_all(text.as_bytes()).unwrap();
}
