//! Evaluation reports: overall and stratified metrics, agreement, and
//! markdown renderings of the cross-dataset and per-environment tables.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::Tier;
use crate::classifier::PredictionRecord;
use crate::dataset::SplitAssignment;
use crate::label::{Fold, LabelClass, NUM_CLASSES};
use crate::manifest::{ClipRecord, Manifest};
use crate::metrics::{
    bootstrap_ci, confusion, model_vs_annotators, one_vs_rest, uar, weighted_fleiss_kappa, AgreementMode,
    BootstrapConfig, ConfusionMatrix, KappaResult, LabelCounts, MetricsError, ModelAgreement, WeightMatrix,
};
use crate::rng::SeededRng;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const SD_UNIT: &str = "percentage points";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratumKey {
    Environment,
    Language,
    CorpusId,
    AgeBucket,
}

impl StratumKey {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Environment => "environment",
            Self::Language => "language",
            Self::CorpusId => "corpus_id",
            Self::AgeBucket => "age_bucket",
        }
    }

    /// Stratum value of a clip. Age buckets are zero-padded month ranges
    /// such as `012-023m` so they sort numerically.
    pub fn value(self, clip: &ClipRecord, age_bucket_months: u32) -> String {
        match self {
            Self::Environment => clip.environment.to_string(),
            Self::Language => clip.language.clone(),
            Self::CorpusId => clip.corpus_id.clone(),
            Self::AgeBucket => {
                let w = age_bucket_months.max(1);
                let lo = clip.age_months / w * w;
                format!("{lo:03}-{:03}m", lo + w - 1)
            }
        }
    }
}

impl FromStr for StratumKey {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "environment" => Ok(Self::Environment),
            "language" => Ok(Self::Language),
            "corpus_id" | "corpus" => Ok(Self::CorpusId),
            "age_bucket" | "age" => Ok(Self::AgeBucket),
            _ => Err(ReportError::UnknownStratumKey(s.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{} gold clips have no prediction: {}", .0.len(), preview(.0))]
    MissingPredictions(Vec<String>),
    #[error("unknown stratum key `{0}` (expected environment, language, corpus_id or age_bucket)")]
    UnknownStratumKey(String),
    #[error("gold clip `{0}` is not in the manifest")]
    UnknownClip(String),
    #[error("no gold clips to evaluate")]
    Empty,
    #[error("duplicate report for fine-tuning set `{0}` and test set `{1}`")]
    DuplicateKey(String, String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn preview(ids: &[String]) -> String {
    let mut s = ids.iter().take(10).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > 10 {
        s.push_str(", ...");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub dataset_id: String,
    pub finetune_set: String,
    pub tier: Tier,
    pub strata: Vec<StratumKey>,
    pub age_bucket_months: u32,
    pub bootstrap: BootstrapConfig,
    pub weights: WeightMatrix,
    pub min_pairs: usize,
    pub agreement_mode: AgreementMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            dataset_id: "test".into(),
            finetune_set: "model".into(),
            tier: Tier::Cleaned,
            strata: vec![StratumKey::Environment],
            age_bucket_months: 12,
            bootstrap: BootstrapConfig::default(),
            weights: WeightMatrix::default(),
            min_pairs: 20,
            agreement_mode: AgreementMode::Grouped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: LabelClass,
    pub support: u64,
    pub recall: Option<f64>,
    pub auc: Option<f64>,
    pub roc: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub n_clips: usize,
    pub uar: f64,
    pub uar_sd: f64,
    pub uar_ci: (f64, f64),
    pub zero_support: Vec<LabelClass>,
    pub classes: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumResult {
    pub n_clips: usize,
    pub uar: f64,
    pub uar_sd: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub human: Option<KappaResult>,
    pub human_note: Option<String>,
    pub model_vs_annotators: Option<ModelAgreement>,
    pub model_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub dataset_id: String,
    pub finetune_set: String,
    pub tier: Tier,
    pub sd_unit: String,
    pub overall: OverallMetrics,
    /// key -> value -> result
    pub strata: BTreeMap<String, BTreeMap<String, StratumResult>>,
    /// key -> value -> clip counts per fold (train, dev, test)
    pub distribution: Option<BTreeMap<String, BTreeMap<String, [usize; 3]>>>,
    pub agreement: Agreement,
    pub config_echo: ConfigEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub eval: EvalConfig,
    /// Settings of earlier pipeline stages, passed through verbatim.
    pub pipeline: BTreeMap<String, serde_json::Value>,
}

pub struct EvalInputs<'a> {
    pub predictions: &'a [PredictionRecord],
    /// Aggregated tier labels of the clips under evaluation.
    pub gold: &'a [(String, LabelClass)],
    pub manifest: &'a Manifest,
    pub split: Option<&'a SplitAssignment>,
    pub pipeline: BTreeMap<String, serde_json::Value>,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn uar_of(pairs: &[(LabelClass, LabelClass)]) -> Option<f64> {
    uar(&confusion(pairs)).ok().map(|r| r.uar)
}

fn stratum_seed(seed: u64, name: &str) -> u64 {
    SeededRng::substream(seed, fnv1a(name)).next_u64()
}

pub fn evaluate(inputs: &EvalInputs, cfg: &EvalConfig) -> Result<EvaluationReport, ReportError> {
    if inputs.gold.is_empty() {
        return Err(ReportError::Empty);
    }
    let pred_by_clip: HashMap<&str, &PredictionRecord> =
        inputs.predictions.iter().map(|p| (p.clip_id.as_str(), p)).collect();
    let clips = inputs.manifest.clip_index();

    let mut missing = Vec::new();
    let mut rows = Vec::with_capacity(inputs.gold.len());
    for (id, g) in inputs.gold {
        let clip = *clips.get(id.as_str()).ok_or_else(|| ReportError::UnknownClip(id.clone()))?;
        match pred_by_clip.get(id.as_str()) {
            Some(p) => rows.push((clip, *g, *p)),
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(ReportError::MissingPredictions(missing));
    }
    rows.sort_by(|a, b| a.0.clip_id.cmp(&b.0.clip_id));

    let pairs: Vec<(LabelClass, LabelClass)> = rows.iter().map(|(_, g, p)| (*g, p.predicted)).collect();
    let cm = confusion(&pairs);
    let u = uar(&cm)?;
    let boot = bootstrap_ci(&pairs, uar_of, &BootstrapConfig {
        seed: stratum_seed(cfg.bootstrap.seed, "overall"),
        ..cfg.bootstrap
    })?;
    let scores: Vec<[f64; NUM_CLASSES]> = rows.iter().map(|(_, _, p)| p.scores).collect();
    let golds: Vec<LabelClass> = rows.iter().map(|(_, g, _)| *g).collect();
    let rocs = one_vs_rest(&scores, &golds)?;
    let classes = LabelClass::ALL
        .into_iter()
        .map(|c| {
            let roc = rocs[c.index()].as_ref();
            ClassMetrics {
                class: c,
                support: cm.support(c),
                recall: u.per_class_recall[c.index()],
                auc: roc.map(|r| r.auc),
                roc: roc.map(|r| r.points.clone()),
            }
        })
        .collect();
    let overall = OverallMetrics {
        n_clips: rows.len(),
        uar: u.uar,
        uar_sd: boot.sd,
        uar_ci: (boot.low.min(u.uar), boot.high.max(u.uar)),
        zero_support: u.zero_support,
        classes,
        confusion: cm,
    };

    let mut strata = BTreeMap::new();
    for key in &cfg.strata {
        let mut groups: BTreeMap<String, Vec<(LabelClass, LabelClass)>> = BTreeMap::new();
        for ((clip, _, _), pair) in rows.iter().zip(&pairs) {
            groups.entry(key.value(clip, cfg.age_bucket_months)).or_default().push(*pair);
        }
        let results = groups
            .into_par_iter()
            .map(|(value, pairs)| {
                let name = format!("{}={value}", key.as_str());
                let cm = confusion(&pairs);
                let u = uar(&cm)?.uar;
                let b = bootstrap_ci(&pairs, uar_of, &BootstrapConfig {
                    seed: stratum_seed(cfg.bootstrap.seed, &name),
                    ..cfg.bootstrap
                })?;
                Ok((
                    value,
                    StratumResult {
                        n_clips: pairs.len(),
                        uar: u,
                        uar_sd: b.sd,
                        confusion: cm,
                    },
                ))
            })
            .collect::<Result<BTreeMap<_, _>, MetricsError>>()?;
        strata.insert(key.as_str().to_string(), results);
    }

    let distribution = inputs.split.map(|split| {
        cfg.strata
            .iter()
            .map(|key| {
                let mut counts: BTreeMap<String, [usize; 3]> = BTreeMap::new();
                for (clip_id, fold) in &split.clip_to_fold {
                    if let Some(clip) = clips.get(clip_id.as_str()) {
                        counts.entry(key.value(clip, cfg.age_bucket_months)).or_default()[fold.index()] += 1;
                    }
                }
                (key.as_str().to_string(), counts)
            })
            .collect()
    });

    let agreement = agreement_section(inputs, &rows, cfg);

    Ok(EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset_id: cfg.dataset_id.clone(),
        finetune_set: cfg.finetune_set.clone(),
        tier: cfg.tier,
        sd_unit: SD_UNIT.into(),
        overall,
        strata,
        distribution,
        agreement,
        config_echo: ConfigEcho {
            eval: cfg.clone(),
            pipeline: inputs.pipeline.clone(),
        },
    })
}

fn agreement_section(
    inputs: &EvalInputs,
    rows: &[(&ClipRecord, LabelClass, &PredictionRecord)],
    cfg: &EvalConfig,
) -> Agreement {
    let by_clip = inputs.manifest.annotations_by_clip();
    let items: Vec<LabelCounts> = rows
        .iter()
        .filter_map(|(clip, _, _)| by_clip.get(clip.clip_id.as_str()))
        .map(|anns| {
            let mut c = [0u32; NUM_CLASSES];
            for a in anns {
                c[a.label.index()] += 1;
            }
            c
        })
        .collect();
    let (human, human_note) = match human_agreement(&items, &cfg.weights, &cfg.bootstrap) {
        Ok(k) => (Some(k), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let preds: BTreeMap<String, LabelClass> = rows
        .iter()
        .map(|(c, _, p)| (c.clip_id.clone(), p.predicted))
        .collect();
    let (model, model_note) = match model_vs_annotators(
        &preds,
        &inputs.manifest.annotations,
        &cfg.weights,
        cfg.min_pairs,
        cfg.agreement_mode,
    ) {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Agreement {
        human,
        human_note,
        model_vs_annotators: model,
        model_note,
    }
}

/// Weighted Fleiss kappa with a clip-level percentile bootstrap interval.
/// The interval is widened if needed so that it contains the point estimate.
pub fn human_agreement(
    items: &[LabelCounts],
    weights: &WeightMatrix,
    boot: &BootstrapConfig,
) -> Result<KappaResult, MetricsError> {
    let mut k = weighted_fleiss_kappa(items, weights)?;
    let kept: Vec<LabelCounts> = items.iter().filter(|c| c.iter().sum::<u32>() >= 2).copied().collect();
    let ci = bootstrap_ci(
        &kept,
        |s: &[LabelCounts]| weighted_fleiss_kappa(s, weights).ok().map(|r| r.kappa),
        boot,
    )?;
    k.ci_low = Some(ci.low.min(k.kappa));
    k.ci_high = Some(ci.high.max(k.kappa));
    k.sd = Some(ci.sd);
    Ok(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    /// Fine-tuning sets in first-appearance order.
    pub rows: Vec<String>,
    /// Test sets in first-appearance order.
    pub cols: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
    pub missing: Vec<(String, String)>,
}

pub fn compare_matrix(reports: &[EvaluationReport]) -> Result<ComparisonTable, ReportError> {
    if reports.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut rows: Vec<String> = Vec::new();
    let mut cols: Vec<String> = Vec::new();
    let mut values = HashMap::new();
    for r in reports {
        if !rows.contains(&r.finetune_set) {
            rows.push(r.finetune_set.clone());
        }
        if !cols.contains(&r.dataset_id) {
            cols.push(r.dataset_id.clone());
        }
        if values
            .insert((r.finetune_set.clone(), r.dataset_id.clone()), r.overall.uar)
            .is_some()
        {
            return Err(ReportError::DuplicateKey(r.finetune_set.clone(), r.dataset_id.clone()));
        }
    }
    let mut missing = Vec::new();
    let cells = rows
        .iter()
        .map(|row| {
            cols.iter()
                .map(|col| {
                    let v = values.get(&(row.clone(), col.clone())).copied();
                    if v.is_none() {
                        missing.push((row.clone(), col.clone()));
                    }
                    v
                })
                .collect()
        })
        .collect();
    Ok(ComparisonTable {
        rows,
        cols,
        cells,
        missing,
    })
}

pub fn render_comparison(t: &ComparisonTable) -> String {
    let mut s = String::new();
    s.push_str("## UAR (%) across fine-tuning (rows) and test sets (columns)\n\n");
    s.push_str("| Fine-tuning \\ Test |");
    for c in &t.cols {
        write!(s, " {c} |").unwrap();
    }
    s.push_str("\n|---|");
    s.push_str(&"---:|".repeat(t.cols.len()));
    s.push('\n');
    for (row, cells) in t.rows.iter().zip(&t.cells) {
        write!(s, "| {row} |").unwrap();
        for v in cells {
            match v {
                Some(v) => write!(s, " {v:.1} |").unwrap(),
                None => s.push_str(" — |"),
            }
        }
        s.push('\n');
    }
    let total = t.rows.len() * t.cols.len();
    write!(s, "\n{} of {total} cells populated.", total - t.missing.len()).unwrap();
    if !t.missing.is_empty() {
        let list: Vec<String> = t.missing.iter().map(|(r, c)| format!("{r} / {c}")).collect();
        write!(s, " Missing: {}.", list.join(", ")).unwrap();
    }
    s.push('\n');
    s
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.prec$}"))
}

fn title_case(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

/// Stratified table: fold clip counts (when a split is known) and UAR (SD)
/// per stratum value, with a total column.
pub fn render_stratum_table(r: &EvaluationReport, key: &str) -> Option<String> {
    let results = r.strata.get(key)?;
    let dist = r.distribution.as_ref().and_then(|d| d.get(key));
    let mut values: Vec<&String> = results.keys().collect();
    if let Some(d) = dist {
        for v in d.keys() {
            if !values.contains(&v) {
                values.push(v);
            }
        }
    }
    if key == StratumKey::Environment.as_str() {
        // urban before rural, as in the enum
        values.sort_by_key(|v| (v.parse::<crate::label::Environment>().ok(), v.to_string()));
    } else {
        values.sort();
    }
    let mut s = String::new();
    writeln!(s, "## Distribution and performance by {}\n", key.replace('_', " ")).unwrap();
    s.push_str("| |");
    for v in &values {
        write!(s, " {} |", title_case(v)).unwrap();
    }
    s.push_str(" Total |\n|---|");
    s.push_str(&"---:|".repeat(values.len() + 1));
    s.push('\n');
    if let Some(d) = dist {
        let mut grand = [0usize; 3];
        for (fi, fold) in Fold::ALL.iter().enumerate() {
            write!(s, "| {} Clips |", title_case(fold.as_str())).unwrap();
            let mut total = 0;
            for v in &values {
                let n = d.get(*v).map_or(0, |c| c[fi]);
                total += n;
                write!(s, " {n} |").unwrap();
            }
            grand[fi] = total;
            writeln!(s, " {total} |").unwrap();
        }
        s.push_str("| Total Clips |");
        for v in &values {
            write!(s, " {} |", d.get(*v).map_or(0, |c| c.iter().sum::<usize>())).unwrap();
        }
        writeln!(s, " {} |", grand.iter().sum::<usize>()).unwrap();
    }
    s.push_str("| Evaluated Clips |");
    for v in &values {
        write!(s, " {} |", results.get(*v).map_or(0, |x| x.n_clips)).unwrap();
    }
    writeln!(s, " {} |", r.overall.n_clips).unwrap();
    s.push_str("| UAR (SD) |");
    for v in &values {
        match results.get(*v) {
            Some(x) => write!(s, " {:.1} ({:.2}) |", x.uar, x.uar_sd).unwrap(),
            None => s.push_str(" — |"),
        }
    }
    writeln!(s, " {:.1} ({:.2}) |", r.overall.uar, r.overall.uar_sd).unwrap();
    Some(s)
}

fn render_kappa(s: &mut String, k: &KappaResult) {
    write!(s, "K = {:.3}", k.kappa).unwrap();
    if let (Some(lo), Some(hi)) = (k.ci_low, k.ci_high) {
        write!(s, " (95% CI: {lo:.3}-{hi:.3})").unwrap();
    }
    writeln!(
        s,
        ", {} items ({} excluded), observed disagreement {:.4}, expected {:.4}",
        k.n_items, k.n_excluded, k.observed_disagreement, k.expected_disagreement
    )
    .unwrap();
}

pub fn render_markdown(r: &EvaluationReport) -> String {
    let mut s = String::new();
    writeln!(s, "# Evaluation: {} ({} tier)\n", r.dataset_id, r.tier).unwrap();
    let b = &r.config_echo.eval.bootstrap;
    writeln!(
        s,
        "Fine-tuning set: {}. SD values are in {} (clip-level bootstrap, {} resamples, seed {}).\n",
        r.finetune_set, r.sd_unit, b.resamples, b.seed
    )
    .unwrap();

    s.push_str("## Overall\n\n");
    let o = &r.overall;
    writeln!(
        s,
        "UAR {:.1}% (SD {:.2}, 95% CI {:.1}-{:.1}) over {} clips.\n",
        o.uar, o.uar_sd, o.uar_ci.0, o.uar_ci.1, o.n_clips
    )
    .unwrap();
    if !o.zero_support.is_empty() {
        let names: Vec<&str> = o.zero_support.iter().map(|c| c.as_str()).collect();
        writeln!(s, "Excluded from UAR (no reference clips): {}.\n", names.join(", ")).unwrap();
    }
    s.push_str("| Class | Support | Recall (%) | AUC |\n|---|---:|---:|---:|\n");
    for c in &o.classes {
        writeln!(
            s,
            "| {} | {} | {} | {} |",
            c.class,
            c.support,
            opt(c.recall.map(|v| 100.0 * v), 1),
            opt(c.auc, 3)
        )
        .unwrap();
    }
    s.push_str("\n### Confusion matrix (rows: reference, columns: predicted)\n\n|");
    for c in LabelClass::ALL {
        write!(s, " | {c}").unwrap();
    }
    s.push_str(" |\n|---|");
    s.push_str(&"---:|".repeat(NUM_CLASSES));
    s.push('\n');
    for (c, row) in LabelClass::ALL.iter().zip(&o.confusion.counts) {
        write!(s, "| {c} |").unwrap();
        for v in row {
            write!(s, " {v} |").unwrap();
        }
        s.push('\n');
    }
    s.push('\n');

    s.push_str(&render_comparison(
        &compare_matrix(std::slice::from_ref(r)).expect("one report"),
    ));
    s.push('\n');

    for key in r.strata.keys() {
        if let Some(t) = render_stratum_table(r, key) {
            s.push_str(&t);
            s.push('\n');
        }
    }

    s.push_str("## Agreement\n\n");
    s.push_str("Between annotators (weighted Fleiss): ");
    match (&r.agreement.human, &r.agreement.human_note) {
        (Some(k), _) => render_kappa(&mut s, k),
        (None, note) => writeln!(s, "not available ({}).", note.as_deref().unwrap_or("no data")).unwrap(),
    }
    s.push_str("\nModel vs annotators (weighted Cohen): ");
    match (&r.agreement.model_vs_annotators, &r.agreement.model_note) {
        (Some(m), _) => {
            writeln!(
                s,
                "K = {:.3} (SD = {:.3}) over {} annotators, {:?} mode.",
                m.mean_kappa, m.sd, m.n_annotators, m.mode
            )
            .unwrap();
            let excluded = m
                .per_annotator
                .iter()
                .filter(|a| a.n_pairs < r.config_echo.eval.min_pairs)
                .count();
            if excluded > 0 {
                writeln!(
                    s,
                    "{excluded} annotators with fewer than {} clips excluded.",
                    r.config_echo.eval.min_pairs
                )
                .unwrap();
            }
        }
        (None, note) => writeln!(s, "not available ({}).", note.as_deref().unwrap_or("no data")).unwrap(),
    }
    s.push_str("\n### Disagreement costs\n\n```\n");
    s.push_str(&r.config_echo.eval.weights.to_csv());
    s.push_str("```\n");
    s
}
