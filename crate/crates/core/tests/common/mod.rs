#![allow(dead_code)]

use chrono::{TimeZone, Utc};
use serde_json::Map;
use voclab_core::rng::SeededRng;
use voclab_core::{Annotation, ClipRecord, Environment, LabelClass};

pub fn clip(id: &str, child: &str, language: &str, env: Environment, age: u32) -> ClipRecord {
    ClipRecord {
        clip_id: id.to_string(),
        child_id: child.to_string(),
        corpus_id: "synth".into(),
        language: language.to_string(),
        environment: env,
        age_months: age,
        audio_uri: format!("audio/{id}.wav"),
        duration_ms: 500,
        extra: Map::new(),
    }
}

pub fn ann(clip: &str, annotator: &str, label: LabelClass) -> Annotation {
    Annotation::new(clip, annotator, label, Utc.with_ymd_and_hms(2024, 3, 1, 10, 0, 0).unwrap())
}

pub fn random_label(rng: &mut SeededRng) -> LabelClass {
    LabelClass::ALL[rng.index(5)]
}
