//! Service state: assignment, qualification and the annotation store.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::Utc;
use serde::{Deserialize, Serialize};
use voclab_core::aggregate::{label_counts, plurality, TiePolicy};
use voclab_core::fraction::Fraction;
use voclab_core::manifest::load_manifest;
use voclab_core::rng::SeededRng;
use voclab_core::{Annotation, ClipRecord, LabelClass, NUM_CLASSES};

use crate::store::AnnotationLog;
use crate::{ApiError, ServiceError};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub manifest: PathBuf,
    pub gold_manifest: PathBuf,
    pub store: PathBuf,
    /// Base directory for relative audio URIs of research clips; defaults
    /// to the manifest's directory. Gold clips resolve against the gold
    /// manifest's directory.
    pub audio_root: Option<PathBuf>,
    pub target_per_clip: usize,
    /// Keep assigning clips that already reached the target.
    pub continue_past_target: bool,
    pub qual_n: usize,
    pub qual_threshold: Fraction,
    pub seed: u64,
    /// When set, every API request must carry it in the `x-voclab-key` header.
    pub shared_secret: Option<String>,
}

impl ServiceConfig {
    pub fn new(manifest: impl Into<PathBuf>, gold_manifest: impl Into<PathBuf>, store: impl Into<PathBuf>) -> Self {
        Self {
            manifest: manifest.into(),
            gold_manifest: gold_manifest.into(),
            store: store.into(),
            audio_root: None,
            target_per_clip: 3,
            continue_past_target: false,
            qual_n: 10,
            qual_threshold: Fraction::new(4, 5),
            seed: 0,
            shared_secret: None,
        }
    }

    /// Qualification sessions are kept next to the store.
    pub fn sessions_path(&self) -> PathBuf {
        let mut p = self.store.clone().into_os_string();
        p.push(".sessions.jsonl");
        PathBuf::from(p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextClip {
    pub clip_id: String,
    pub audio_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualificationProgress {
    pub answered: usize,
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualificationNext {
    pub qualified: bool,
    /// Absent once qualified.
    pub clip_id: Option<String>,
    pub audio_url: Option<String>,
    pub attempt: u64,
    pub progress: QualificationProgress,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualificationAnswer {
    pub correct: bool,
    pub progress: QualificationProgress,
    pub qualified: bool,
    /// Set when an attempt just failed; a fresh gold sample is ready.
    pub retry: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub total_clips: usize,
    pub fully_annotated: usize,
    pub annotations_total: usize,
    pub per_class_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorSession {
    pub annotator_id: String,
    pub qualified: bool,
    /// `correct/answered` of the passing attempt, or of the current one.
    pub qualification_score: String,
    pub clips_annotated: usize,
}

/// Line in the sessions file, written once per successful qualification.
#[derive(Debug, Serialize, Deserialize)]
struct QualifiedRecord {
    annotator_id: String,
    correct: usize,
    answered: usize,
}

#[derive(Debug, Default)]
struct Session {
    qualified: bool,
    passed_with: Option<(usize, usize)>,
    attempt: u64,
    sample: Vec<usize>,
    answers: Vec<Option<bool>>,
    clips_annotated: usize,
}

impl Session {
    fn progress(&self) -> QualificationProgress {
        QualificationProgress {
            answered: self.answers.iter().filter(|a| a.is_some()).count(),
            correct: self.answers.iter().filter(|a| **a == Some(true)).count(),
            total: self.sample.len(),
        }
    }
}

struct ClipEntry {
    clip: ClipRecord,
    n: usize,
    annotators: HashSet<String>,
}

struct GoldClip {
    clip: ClipRecord,
    label: LabelClass,
}

pub struct ServiceState {
    cfg: ServiceConfig,
    clips: Vec<ClipEntry>,
    index: HashMap<String, usize>,
    gold: Vec<GoldClip>,
    gold_index: HashMap<String, usize>,
    sessions: HashMap<String, Session>,
    log: AnnotationLog,
    session_log: File,
    class_counts: [usize; NUM_CLASSES],
    annotations_total: usize,
    rng: SeededRng,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl ServiceState {
    pub fn open(cfg: ServiceConfig) -> Result<Self, ServiceError> {
        if cfg.target_per_clip == 0 || cfg.qual_n == 0 {
            return Err(ServiceError::Config("target-per-clip and qual-n must be positive".into()));
        }
        if cfg.qual_threshold > Fraction::from_integer(1) {
            return Err(ServiceError::Config("qual-threshold must lie in [0, 1]".into()));
        }
        let manifest = load_manifest(&cfg.manifest).map_err(|e| ServiceError::Manifest(e.to_string()))?;
        let gold_manifest = load_manifest(&cfg.gold_manifest).map_err(|e| ServiceError::Manifest(e.to_string()))?;

        let mut clips = Vec::with_capacity(manifest.clips.len());
        let mut index = HashMap::new();
        for c in manifest.clips {
            index.insert(c.clip_id.clone(), clips.len());
            clips.push(ClipEntry {
                clip: c,
                n: 0,
                annotators: HashSet::new(),
            });
        }

        let by_clip = gold_manifest.annotations_by_clip();
        let mut gold = Vec::new();
        let mut gold_index = HashMap::new();
        for c in &gold_manifest.clips {
            if index.contains_key(&c.clip_id) {
                return Err(ServiceError::Config(format!(
                    "gold clip `{}` also appears in the research manifest",
                    c.clip_id
                )));
            }
            let counts = label_counts(by_clip.get(c.clip_id.as_str()).into_iter().flatten().map(|a| &a.label));
            if let (Some(label), _) = plurality(&counts, TiePolicy::Exclude) {
                gold_index.insert(c.clip_id.clone(), gold.len());
                gold.push(GoldClip { clip: c.clone(), label });
            }
        }
        if gold.len() < cfg.qual_n {
            return Err(ServiceError::Config(format!(
                "gold manifest has {} labelled clips, qualification needs {}",
                gold.len(),
                cfg.qual_n
            )));
        }

        let (log, stored) = AnnotationLog::open(&cfg.store)?;
        let session_path = cfg.sessions_path();
        let mut sessions: HashMap<String, Session> = HashMap::new();
        if session_path.exists() {
            let f = File::open(&session_path).map_err(|e| ServiceError::Store(e.to_string()))?;
            for line in BufReader::new(f).lines() {
                let line = line.map_err(|e| ServiceError::Store(e.to_string()))?;
                // a torn final line was never acknowledged
                let Ok(r) = serde_json::from_str::<QualifiedRecord>(&line) else { continue };
                let s = sessions.entry(r.annotator_id).or_default();
                s.qualified = true;
                s.passed_with = Some((r.correct, r.answered));
            }
        }
        let session_log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&session_path)
            .map_err(|e| ServiceError::Store(e.to_string()))?;

        let mut state = Self {
            rng: SeededRng::new(cfg.seed),
            cfg,
            clips,
            index,
            gold,
            gold_index,
            sessions,
            log,
            session_log,
            class_counts: [0; NUM_CLASSES],
            annotations_total: 0,
        };
        for a in manifest.annotations.iter().chain(&stored) {
            state.record(a).map_err(|e| ServiceError::Store(format!("{e} in stored annotations")))?;
        }
        for a in &stored {
            state.sessions.entry(a.annotator_id.clone()).or_default().clips_annotated += 1;
        }
        Ok(state)
    }

    fn record(&mut self, a: &Annotation) -> Result<(), ApiError> {
        let &i = self.index.get(&a.clip_id).ok_or_else(|| ApiError::UnknownClip(a.clip_id.clone()))?;
        let entry = &mut self.clips[i];
        if !entry.annotators.insert(a.annotator_id.clone()) {
            return Err(ApiError::Duplicate {
                annotator_id: a.annotator_id.clone(),
                clip_id: a.clip_id.clone(),
            });
        }
        entry.n += 1;
        self.class_counts[a.label.index()] += 1;
        self.annotations_total += 1;
        Ok(())
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    pub fn store_path(&self) -> &Path {
        self.log.path()
    }

    fn require_qualified(&self, annotator_id: &str) -> Result<(), ApiError> {
        if annotator_id.is_empty() {
            return Err(ApiError::BadRequest("annotator id must be non-empty".into()));
        }
        match self.sessions.get(annotator_id) {
            Some(s) if s.qualified => Ok(()),
            _ => Err(ApiError::Unqualified(annotator_id.to_string())),
        }
    }

    /// Least-annotated clip this annotator has not labelled, ties broken at
    /// random under the service seed.
    pub fn next_clip(&mut self, annotator_id: &str) -> Result<Option<NextClip>, ApiError> {
        self.require_qualified(annotator_id)?;
        let target = self.cfg.target_per_clip;
        let open = self
            .clips
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.annotators.contains(annotator_id))
            .filter(|(_, e)| self.cfg.continue_past_target || e.n < target);
        let mut best = usize::MAX;
        let mut ties = Vec::new();
        for (i, e) in open {
            if e.n < best {
                best = e.n;
                ties.clear();
            }
            if e.n == best {
                ties.push(i);
            }
        }
        if ties.is_empty() {
            return Ok(None);
        }
        let pick = ties[self.rng.index(ties.len())];
        let id = &self.clips[pick].clip.clip_id;
        Ok(Some(NextClip {
            clip_id: id.clone(),
            audio_url: audio_url(id),
        }))
    }

    /// Validates, appends durably, then updates counts.
    pub fn submit(&mut self, annotator_id: &str, clip_id: &str, label: &str) -> Result<Annotation, ApiError> {
        self.require_qualified(annotator_id)?;
        let label: LabelClass = label.parse().map_err(|_| ApiError::InvalidLabel(label.to_string()))?;
        let &i = self.index.get(clip_id).ok_or_else(|| ApiError::UnknownClip(clip_id.to_string()))?;
        if self.clips[i].annotators.contains(annotator_id) {
            return Err(ApiError::Duplicate {
                annotator_id: annotator_id.to_string(),
                clip_id: clip_id.to_string(),
            });
        }
        let a = Annotation::new(clip_id, annotator_id, label, Utc::now());
        self.log.append(&a).map_err(|e| ApiError::Internal(format!("store append failed: {e}")))?;
        self.record(&a)?;
        self.sessions.entry(annotator_id.to_string()).or_default().clips_annotated += 1;
        Ok(a)
    }

    fn draw_sample(&self, annotator_id: &str, attempt: u64) -> Vec<usize> {
        let mut rng = SeededRng::substream(self.cfg.seed ^ fnv1a(annotator_id), attempt);
        rng.sample_indices(self.gold.len(), self.cfg.qual_n)
    }

    fn session_mut(&mut self, annotator_id: &str) -> &mut Session {
        if !self.sessions.get(annotator_id).is_some_and(|s| s.qualified || !s.sample.is_empty()) {
            let sample = self.draw_sample(annotator_id, 0);
            let s = self.sessions.entry(annotator_id.to_string()).or_default();
            if !s.qualified {
                s.answers = vec![None; sample.len()];
                s.sample = sample;
            }
        }
        self.sessions.get_mut(annotator_id).expect("session created above")
    }

    pub fn qualification_next(&mut self, annotator_id: &str) -> Result<QualificationNext, ApiError> {
        if annotator_id.is_empty() {
            return Err(ApiError::BadRequest("annotator id must be non-empty".into()));
        }
        let s = self.session_mut(annotator_id);
        let pending = if s.qualified {
            None
        } else {
            s.answers.iter().position(|a| a.is_none()).map(|k| s.sample[k])
        };
        let (qualified, attempt, progress) = (s.qualified, s.attempt, s.progress());
        let clip_id = pending.map(|g| self.gold[g].clip.clip_id.clone());
        Ok(QualificationNext {
            qualified,
            audio_url: clip_id.as_deref().map(audio_url),
            clip_id,
            attempt,
            progress,
        })
    }

    pub fn qualification_answer(
        &mut self,
        annotator_id: &str,
        clip_id: &str,
        label: &str,
    ) -> Result<QualificationAnswer, ApiError> {
        if annotator_id.is_empty() {
            return Err(ApiError::BadRequest("annotator id must be non-empty".into()));
        }
        let label: LabelClass = label.parse().map_err(|_| ApiError::InvalidLabel(label.to_string()))?;
        let &g = self.gold_index.get(clip_id).ok_or_else(|| ApiError::NotGold(clip_id.to_string()))?;
        let truth = self.gold[g].label;
        let (n, threshold) = (self.cfg.qual_n, self.cfg.qual_threshold);
        let s = self.session_mut(annotator_id);
        if s.qualified {
            return Err(ApiError::AlreadyQualified(annotator_id.to_string()));
        }
        let k = s
            .sample
            .iter()
            .position(|&x| x == g)
            .ok_or_else(|| ApiError::NotInSample(clip_id.to_string()))?;
        if s.answers[k].is_some() {
            return Err(ApiError::AlreadyAnswered(clip_id.to_string()));
        }
        let correct = label == truth;
        s.answers[k] = Some(correct);
        let progress = s.progress();
        if progress.answered < n {
            return Ok(QualificationAnswer {
                correct,
                progress,
                qualified: false,
                retry: false,
            });
        }
        // correct/n >= p/q  <=>  correct*q >= p*n
        let passed = (progress.correct as u128) * (*threshold.denom() as u128)
            >= (*threshold.numer() as u128) * (n as u128);
        if passed {
            let rec = QualifiedRecord {
                annotator_id: annotator_id.to_string(),
                correct: progress.correct,
                answered: progress.answered,
            };
            let mut line = serde_json::to_string(&rec).expect("record serializes");
            line.push('\n');
            self.session_log
                .write_all(line.as_bytes())
                .and_then(|_| self.session_log.sync_data())
                .map_err(|e| ApiError::Internal(format!("session append failed: {e}")))?;
            let s = self.sessions.get_mut(annotator_id).expect("session exists");
            s.qualified = true;
            s.passed_with = Some((progress.correct, progress.answered));
        } else {
            let attempt = self.sessions[annotator_id].attempt + 1;
            let sample = self.draw_sample(annotator_id, attempt);
            let s = self.sessions.get_mut(annotator_id).expect("session exists");
            s.attempt = attempt;
            s.answers = vec![None; sample.len()];
            s.sample = sample;
        }
        Ok(QualificationAnswer {
            correct,
            progress,
            qualified: passed,
            retry: !passed,
        })
    }

    pub fn session(&self, annotator_id: &str) -> Option<AnnotatorSession> {
        self.sessions.get(annotator_id).map(|s| {
            let (c, a) = s.passed_with.unwrap_or_else(|| {
                let p = s.progress();
                (p.correct, p.answered)
            });
            AnnotatorSession {
                annotator_id: annotator_id.to_string(),
                qualified: s.qualified,
                qualification_score: format!("{c}/{a}"),
                clips_annotated: s.clips_annotated,
            }
        })
    }

    pub fn progress(&self) -> Progress {
        Progress {
            total_clips: self.clips.len(),
            fully_annotated: self.clips.iter().filter(|e| e.n >= self.cfg.target_per_clip).count(),
            annotations_total: self.annotations_total,
            per_class_counts: LabelClass::ALL
                .iter()
                .map(|c| (c.as_str().to_string(), self.class_counts[c.index()]))
                .collect(),
        }
    }

    /// File backing a research or gold clip's audio.
    pub fn audio_path(&self, clip_id: &str) -> Result<PathBuf, ApiError> {
        let parent = |p: &Path| p.parent().map(Path::to_path_buf).unwrap_or_default();
        let (uri, root) = if let Some(&i) = self.index.get(clip_id) {
            let root = self.cfg.audio_root.clone().unwrap_or_else(|| parent(&self.cfg.manifest));
            (&self.clips[i].clip.audio_uri, root)
        } else if let Some(&g) = self.gold_index.get(clip_id) {
            (&self.gold[g].clip.audio_uri, parent(&self.cfg.gold_manifest))
        } else {
            return Err(ApiError::UnknownClip(clip_id.to_string()));
        };
        let p = Path::new(uri.strip_prefix("file://").unwrap_or(uri));
        Ok(if p.is_absolute() { p.to_path_buf() } else { root.join(p) })
    }
}

pub fn audio_url(clip_id: &str) -> String {
    format!("/api/audio/{clip_id}")
}
