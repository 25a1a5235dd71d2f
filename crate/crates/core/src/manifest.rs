//! Corpus manifest: clip metadata, crowdsourced annotations and optional
//! fixed split assignments, stored as line-delimited JSON records.
//!
//! Every line is one object with a `kind` field:
//!
//! ```text
//! {"kind":"clip","clip_id":"c1","child_id":"k1","corpus_id":"sm","language":"fr","environment":"urban","age_months":14,"audio_uri":"audio/c1.wav","duration_ms":500}
//! {"kind":"annotation","clip_id":"c1","annotator_id":"a1","label":"canonical","submitted_at":"2024-03-01T10:00:00Z"}
//! {"kind":"split","clip_id":"c1","fold":"train"}
//! ```
//!
//! Fields not listed above are kept in `extra` and written back unchanged.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::label::{Environment, Fold, LabelClass};

pub const MAX_AGE_MONTHS: u32 = 120;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub child_id: String,
    pub corpus_id: String,
    pub language: String,
    pub environment: Environment,
    pub age_months: u32,
    pub audio_uri: String,
    pub duration_ms: u64,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub clip_id: String,
    pub annotator_id: String,
    pub label: LabelClass,
    pub submitted_at: DateTime<Utc>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Annotation {
    pub fn new(
        clip_id: impl Into<String>,
        annotator_id: impl Into<String>,
        label: LabelClass,
        submitted_at: DateTime<Utc>,
    ) -> Self {
        Self {
            clip_id: clip_id.into(),
            annotator_id: annotator_id.into(),
            label,
            submitted_at,
            extra: Map::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub clip_id: String,
    pub fold: Fold,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub clips: Vec<ClipRecord>,
    pub annotations: Vec<Annotation>,
    /// Fixed fold assignments carried by the manifest, in file order.
    pub split_hint: Option<Vec<SplitRecord>>,
}

/// Annotation as it appears on disk; the label stays a string until it
/// has been checked so the error can carry the line number.
#[derive(Deserialize)]
struct RawAnnotation {
    clip_id: String,
    annotator_id: String,
    label: String,
    submitted_at: DateTime<Utc>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawRecord {
    Clip(ClipRecord),
    Annotation(RawAnnotation),
    Split(SplitRecord),
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum OutRecord<'a> {
    Clip(&'a ClipRecord),
    Annotation(&'a Annotation),
    Split(&'a SplitRecord),
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown label `{value}`")]
    UnknownLabel { line: usize, value: String },
    #[error("line {line}: duplicate clip_id `{clip_id}`")]
    DuplicateClip { line: usize, clip_id: String },
    #[error("line {line}: annotation references unknown clip `{clip_id}`")]
    DanglingAnnotation { line: usize, clip_id: String },
    #[error("line {line}: annotator `{annotator_id}` already labeled clip `{clip_id}`")]
    DuplicatePair {
        line: usize,
        clip_id: String,
        annotator_id: String,
    },
    #[error("manifest failed validation: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// One broken manifest rule, naming the offending record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub record: String,
    pub rule: String,
}

impl Violation {
    fn new(record: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            record: record.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.record, self.rule)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, ManifestError> {
    let file = File::open(path)?;
    read_manifest(BufReader::new(file))
}

pub fn read_manifest<R: BufRead>(reader: R) -> Result<Manifest, ManifestError> {
    let mut m = Manifest::default();
    let mut splits = Vec::new();
    let mut clip_ids = HashSet::new();
    let mut pairs = HashSet::new();
    let mut annotation_lines = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord = serde_json::from_str(&line).map_err(|e| ManifestError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        match record {
            RawRecord::Clip(clip) => {
                if !clip_ids.insert(clip.clip_id.clone()) {
                    return Err(ManifestError::DuplicateClip {
                        line: line_no,
                        clip_id: clip.clip_id,
                    });
                }
                m.clips.push(clip);
            }
            RawRecord::Annotation(raw) => {
                let label = raw
                    .label
                    .parse::<LabelClass>()
                    .map_err(|_| ManifestError::UnknownLabel {
                        line: line_no,
                        value: raw.label.clone(),
                    })?;
                if !pairs.insert((raw.clip_id.clone(), raw.annotator_id.clone())) {
                    return Err(ManifestError::DuplicatePair {
                        line: line_no,
                        clip_id: raw.clip_id,
                        annotator_id: raw.annotator_id,
                    });
                }
                annotation_lines.push(line_no);
                m.annotations.push(Annotation {
                    clip_id: raw.clip_id,
                    annotator_id: raw.annotator_id,
                    label,
                    submitted_at: raw.submitted_at,
                    extra: raw.extra,
                });
            }
            RawRecord::Split(s) => splits.push(s),
        }
    }

    for (a, &line) in m.annotations.iter().zip(&annotation_lines) {
        if !clip_ids.contains(&a.clip_id) {
            return Err(ManifestError::DanglingAnnotation {
                line,
                clip_id: a.clip_id.clone(),
            });
        }
    }
    if !splits.is_empty() {
        m.split_hint = Some(splits);
    }

    let violations = validate_manifest(&m);
    if violations.is_empty() {
        Ok(m)
    } else {
        Err(ManifestError::Invalid(violations))
    }
}

/// Writes clips, then annotations, then split records, each group in
/// its stored order.
pub fn write_manifest<W: Write>(m: &Manifest, mut w: W) -> std::io::Result<()> {
    for c in &m.clips {
        write_record(&mut w, &OutRecord::Clip(c))?;
    }
    for a in &m.annotations {
        write_record(&mut w, &OutRecord::Annotation(a))?;
    }
    for s in m.split_hint.iter().flatten() {
        write_record(&mut w, &OutRecord::Split(s))?;
    }
    w.flush()
}

fn write_record<W: Write>(w: &mut W, r: &OutRecord<'_>) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, r)?;
    w.write_all(b"\n")
}

/// Serializes a single annotation in manifest record form (no newline).
pub fn annotation_line(a: &Annotation) -> String {
    serde_json::to_string(&OutRecord::Annotation(a)).expect("annotation serializes")
}

/// Parses one annotation record line, as written by [`annotation_line`].
pub fn parse_annotation_line(line: &str) -> Result<Annotation, String> {
    match serde_json::from_str::<RawRecord>(line).map_err(|e| e.to_string())? {
        RawRecord::Annotation(raw) => Ok(Annotation {
            label: raw
                .label
                .parse()
                .map_err(|e: crate::label::ParseVocabError| e.to_string())?,
            clip_id: raw.clip_id,
            annotator_id: raw.annotator_id,
            submitted_at: raw.submitted_at,
            extra: raw.extra,
        }),
        _ => Err("not an annotation record".to_string()),
    }
}

/// Lists every broken invariant; an empty list means the manifest is valid.
pub fn validate_manifest(m: &Manifest) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for c in &m.clips {
        let rec = format!("clip `{}`", c.clip_id);
        if c.clip_id.is_empty() {
            out.push(Violation::new(rec.clone(), "clip_id must be non-empty"));
        }
        if !seen.insert(c.clip_id.as_str()) {
            out.push(Violation::new(rec.clone(), "duplicate clip_id"));
        }
        if c.child_id.is_empty() {
            out.push(Violation::new(rec.clone(), "child_id must be non-empty"));
        }
        if c.age_months > MAX_AGE_MONTHS {
            out.push(Violation::new(
                rec.clone(),
                format!(
                    "age_months {} outside [0, {MAX_AGE_MONTHS}]",
                    c.age_months
                ),
            ));
        }
        if c.duration_ms == 0 {
            out.push(Violation::new(rec, "duration_ms must be positive"));
        }
    }

    let mut pairs = HashSet::new();
    for a in &m.annotations {
        let rec = format!("annotation ({}, {})", a.clip_id, a.annotator_id);
        if !seen.contains(a.clip_id.as_str()) {
            out.push(Violation::new(
                rec.clone(),
                format!("references unknown clip `{}`", a.clip_id),
            ));
        }
        if !pairs.insert((a.clip_id.as_str(), a.annotator_id.as_str())) {
            out.push(Violation::new(
                rec,
                "duplicate (clip, annotator) pair: one judgment per annotator per clip",
            ));
        }
    }

    if let Some(splits) = &m.split_hint {
        let mut split_seen = HashSet::new();
        for s in splits {
            let rec = format!("split `{}`", s.clip_id);
            if !seen.contains(s.clip_id.as_str()) {
                out.push(Violation::new(rec.clone(), "references unknown clip"));
            }
            if !split_seen.insert(s.clip_id.as_str()) {
                out.push(Violation::new(rec, "clip has more than one split record"));
            }
        }
    }
    out
}

impl Manifest {
    pub fn clip_index(&self) -> HashMap<&str, &ClipRecord> {
        self.clips.iter().map(|c| (c.clip_id.as_str(), c)).collect()
    }

    /// Annotations grouped per clip, in annotation file order.
    pub fn annotations_by_clip(&self) -> HashMap<&str, Vec<&Annotation>> {
        let mut map: HashMap<&str, Vec<&Annotation>> = HashMap::new();
        for a in &self.annotations {
            map.entry(a.clip_id.as_str()).or_default().push(a);
        }
        map
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip_line(id: &str, child: &str) -> String {
        format!(
            r#"{{"kind":"clip","clip_id":"{id}","child_id":"{child}","corpus_id":"sm","language":"fr","environment":"urban","age_months":14,"audio_uri":"audio/{id}.wav","duration_ms":500}}"#
        )
    }

    fn ann_line(clip: &str, annotator: &str, label: &str) -> String {
        format!(
            r#"{{"kind":"annotation","clip_id":"{clip}","annotator_id":"{annotator}","label":"{label}","submitted_at":"2024-03-01T10:00:00Z"}}"#
        )
    }

    fn parse(lines: &[String]) -> Result<Manifest, ManifestError> {
        read_manifest(lines.join("\n").as_bytes())
    }

    fn well_formed() -> Vec<String> {
        let mut v = vec![clip_line("c1", "k1"), clip_line("c2", "k2")];
        for clip in ["c1", "c2"] {
            for (a, l) in [("a1", "canonical"), ("a2", "canonical"), ("a3", "junk")] {
                v.push(ann_line(clip, a, l));
            }
        }
        v
    }

    #[test]
    fn loads_two_clips_six_annotations() {
        let m = parse(&well_formed()).unwrap();
        assert_eq!(m.clips.len(), 2);
        assert_eq!(m.annotations.len(), 6);
        assert!(m.split_hint.is_none());
        assert!(validate_manifest(&m).is_empty());
    }

    #[test]
    fn dangling_annotation_names_clip() {
        let mut lines = well_formed();
        lines.push(ann_line("x9", "a1", "junk"));
        match parse(&lines).unwrap_err() {
            ManifestError::DanglingAnnotation { clip_id, line } => {
                assert_eq!(clip_id, "x9");
                assert_eq!(line, 9);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_label_reports_line() {
        let mut lines = well_formed();
        lines[3] = ann_line("c1", "a2", "canonicl");
        match parse(&lines).unwrap_err() {
            ManifestError::UnknownLabel { line, value } => {
                assert_eq!(line, 4);
                assert_eq!(value, "canonicl");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn duplicate_clip_and_pair_rejected() {
        let mut lines = well_formed();
        lines.push(clip_line("c1", "k9"));
        assert!(matches!(
            parse(&lines).unwrap_err(),
            ManifestError::DuplicateClip { line: 9, .. }
        ));

        let mut lines = well_formed();
        lines.push(ann_line("c1", "a1", "junk"));
        assert!(matches!(
            parse(&lines).unwrap_err(),
            ManifestError::DuplicatePair { line: 9, .. }
        ));
    }

    #[test]
    fn malformed_json_reports_line() {
        let mut lines = well_formed();
        lines.insert(1, "{not json".to_string());
        assert!(matches!(
            parse(&lines).unwrap_err(),
            ManifestError::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn validate_flags_age_bound() {
        let mut m = parse(&well_formed()).unwrap();
        m.clips[0].age_months = 300;
        let v = validate_manifest(&m);
        assert_eq!(v.len(), 1);
        assert!(v[0].rule.contains("age_months 300"), "{}", v[0]);
        assert!(v[0].record.contains("c1"));
    }

    #[test]
    fn validate_flags_duplicate_pair() {
        let mut m = parse(&well_formed()).unwrap();
        let dup = m.annotations[0].clone();
        m.annotations.push(dup);
        let v = validate_manifest(&m);
        assert_eq!(v.len(), 1);
        assert!(v[0].rule.contains("duplicate (clip, annotator)"));
        assert!(v[0].record.contains("c1") && v[0].record.contains("a1"));
    }

    #[test]
    fn extra_fields_survive_round_trip() {
        let mut lines = well_formed();
        lines[0] = lines[0].replace(r#""duration_ms":500"#, r#""duration_ms":500,"site":"x""#);
        lines.push(r#"{"kind":"split","clip_id":"c1","fold":"dev"}"#.to_string());
        let m = parse(&lines).unwrap();
        assert_eq!(m.clips[0].extra["site"], "x");
        let mut buf = Vec::new();
        write_manifest(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, lines.join("\n") + "\n");
    }

    #[test]
    fn annotation_line_round_trips() {
        let m = parse(&well_formed()).unwrap();
        let line = annotation_line(&m.annotations[2]);
        assert_eq!(line, well_formed()[4]);
        assert_eq!(parse_annotation_line(&line).unwrap(), m.annotations[2]);
    }
}
