use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Display;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use tracing::{info, warn};
use voclab_core::aggregate::{build_tiers, read_tiers, tier_members, write_tiers, AggregationConfig, TiePolicy, Tier, TierRecord};
use voclab_core::audio::{normalize, read_clip_file, read_wav, write_clip_file, AudioClip, OverflowPolicy};
use voclab_core::classifier::{predict as run_predict, read_model, read_predictions, train as run_train, write_model, write_predictions, Optimizer, TrainConfig};
use voclab_core::dataset::{
    apply_split_hint, downsample as run_downsample, read_split, split_children, write_split, LabeledClip, SamplingConfig,
    SplitAssignment, SplitConfig, StratifyKey,
};
use voclab_core::features::{read_embeddings, write_embeddings, EmbeddingSet, FeatureConfig, FeatureKind, FeatureVector, LogMelExtractor};
use voclab_core::fraction::{parse_fraction, Fraction};
use voclab_core::manifest::load_manifest;
use voclab_core::metrics::{model_vs_annotators, AgreementMode, BootstrapConfig, KappaResult, LabelCounts, ModelAgreement, WeightMatrix};
use voclab_core::report::{
    compare_matrix, evaluate as run_evaluate, human_agreement, render_comparison, render_markdown, EvalConfig, EvalInputs,
    EvaluationReport, StratumKey,
};
use voclab_core::{Fold, LabelClass, Manifest, NUM_CLASSES};
use voclab_service::{read_log, ServiceConfig, ServiceState};

use crate::settings::{read_meta, write_output, Settings};
use crate::{AggregateArgs, AgreementArgs, CliError, DownsampleArgs, EvaluateArgs, FeaturizeArgs, PredictArgs, PrepArgs, ReportArgs, ServeArgs, SplitArgs, TrainArgs};

type Config<'a> = Option<&'a toml::Table>;

fn invalid<E: Display>(context: impl Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Invalid(format!("{context}: {e}"))
}

fn flag(v: &Option<String>) -> Option<&str> {
    v.as_deref()
}

/// Exact fraction from `2/3`, `0.8` or `80%`.
struct Frac(Fraction);

impl FromStr for Frac {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_fraction(s).map(Frac).map_err(|e| e.to_string())
    }
}

/// Comma-separated list; empty text gives an empty list.
struct List<T>(Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: Display,
{
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse().map_err(|e: T::Err| e.to_string()))
            .collect::<Result<_, _>>()
            .map(List)
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn manifest(path: &Path) -> Result<Manifest, CliError> {
    load_manifest(path).map_err(invalid(path.display()))
}

fn tiers(path: &Path) -> Result<Vec<TierRecord>, CliError> {
    read_tiers(open(path)?).map_err(invalid(path.display()))
}

fn split_file(path: &Path) -> Result<SplitAssignment, CliError> {
    read_split(open(path)?).map_err(invalid(path.display()))
}

fn embeddings(path: &Path) -> Result<EmbeddingSet, CliError> {
    read_embeddings(open(path)?).map_err(invalid(path.display()))
}

/// Tier members joined with their clip metadata, in manifest order.
fn labeled(m: &Manifest, records: &[TierRecord], tier: Tier) -> Result<Vec<LabeledClip>, CliError> {
    let members: HashMap<String, LabelClass> = tier_members(records, tier).into_iter().collect();
    let known: HashSet<&str> = m.clips.iter().map(|c| c.clip_id.as_str()).collect();
    if let Some(id) = members.keys().find(|id| !known.contains(id.as_str())) {
        return Err(CliError::Invalid(format!("labelled clip `{id}` is not in the manifest")));
    }
    Ok(m.clips
        .iter()
        .filter_map(|c| members.get(&c.clip_id).map(|&l| (c.clone(), l)))
        .collect())
}

fn class_counts<'a>(labels: impl Iterator<Item = &'a LabelClass>) -> String {
    let mut c = [0usize; NUM_CLASSES];
    for l in labels {
        c[l.index()] += 1;
    }
    LabelClass::ALL
        .iter()
        .map(|l| format!("{l}={}", c[l.index()]))
        .collect::<Vec<_>>()
        .join(" ")
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable output");
    s.push('\n');
    s.into_bytes()
}

fn buffer(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    buf
}

fn no_extra() -> BTreeMap<String, Value> {
    BTreeMap::new()
}

/// Upstream sidecars, keyed by the role of each input.
fn upstream(inputs: &[(&str, Option<&Path>)]) -> BTreeMap<String, Value> {
    inputs
        .iter()
        .filter_map(|(role, p)| p.and_then(read_meta).map(|m| (role.to_string(), m)))
        .collect()
}

pub fn aggregate(a: AggregateArgs, cfg: Config, seed: u64) -> Result<(), CliError> {
    let mut s = Settings::new("aggregate", cfg, seed);
    let mpath = s.path("manifest", a.manifest.as_deref())?;
    let out = s.path("out", a.out.as_deref())?;
    let Frac(threshold) = s.get("threshold", flag(&a.threshold), "2/3")?;
    let min_annotations: usize = s.get("min_annotations", flag(&a.min_annotations), "3")?;
    let tie_policy: TiePolicy = s.get("tie_policy", flag(&a.tie_policy), "exclude")?;
    if threshold > Fraction::from_integer(1) {
        return Err(CliError::Invalid("threshold must lie in [0, 1]".into()));
    }
    let mut m = manifest(&mpath)?;
    let logs: Vec<String> = a.annotations.iter().map(|p| p.display().to_string()).collect();
    s.record("annotations", logs);
    let known: HashSet<String> = m.clips.iter().map(|c| c.clip_id.clone()).collect();
    let mut pairs: HashSet<(String, String)> =
        m.annotations.iter().map(|x| (x.clip_id.clone(), x.annotator_id.clone())).collect();
    for p in &a.annotations {
        for x in read_log(p).map_err(invalid(p.display()))? {
            if !known.contains(&x.clip_id) {
                return Err(CliError::Invalid(format!("{}: unknown clip `{}`", p.display(), x.clip_id)));
            }
            if !pairs.insert((x.clip_id.clone(), x.annotator_id.clone())) {
                return Err(CliError::Invalid(format!(
                    "{}: annotator `{}` labelled clip `{}` twice",
                    p.display(),
                    x.annotator_id,
                    x.clip_id
                )));
            }
            m.annotations.push(x);
        }
    }
    let t = build_tiers(
        &m,
        &AggregationConfig {
            strong_majority_threshold: threshold,
            min_annotations,
            tie_policy,
        },
    );
    let records: Vec<TierRecord> = t.labels.iter().map(TierRecord::from).collect();
    info!(
        "{} clips: {} uncleaned, {} cleaned, {} unresolved ties",
        records.len(),
        t.uncleaned.len(),
        t.cleaned.len(),
        t.dropped.len()
    );
    write_output(&out, &buffer(|w| write_tiers(&records, w)), &s, upstream(&[("manifest", Some(&mpath))]))
}

pub fn downsample(a: DownsampleArgs, cfg: Config, seed: u64) -> Result<(), CliError> {
    let mut s = Settings::new("downsample", cfg, seed);
    let mpath = s.path("manifest", a.manifest.as_deref())?;
    let lpath = s.path("labels", a.labels.as_deref())?;
    let out = s.path("out", a.out.as_deref())?;
    let tier: Tier = s.get("tier", flag(&a.tier), "cleaned")?;
    let anchor_class: LabelClass = s.get("anchor_class", flag(&a.anchor_class), "laughing")?;
    let Frac(multiplier) = s.get("multiplier", flag(&a.multiplier), "3")?;
    let m = manifest(&mpath)?;
    let records = tiers(&lpath)?;
    let input = labeled(&m, &records, tier)?;
    let kept = run_downsample(
        &input,
        &SamplingConfig {
            anchor_class,
            multiplier,
            seed,
        },
    )
    .map_err(invalid("downsample"))?;
    info!("before: {}", class_counts(input.iter().map(|x| &x.1)));
    info!("after:  {}", class_counts(kept.iter().map(|x| &x.1)));
    let ids: HashSet<&str> = kept.iter().map(|(c, _)| c.clip_id.as_str()).collect();
    let subset: Vec<TierRecord> = records
        .into_iter()
        .filter(|r| r.in_tier(tier) && ids.contains(r.clip_id.as_str()))
        .collect();
    write_output(&out, &buffer(|w| write_tiers(&subset, w)), &s, upstream(&[("labels", Some(&lpath))]))
}

struct Ratios([Fraction; 3]);

impl FromStr for Ratios {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let List(v) = s.parse::<List<Frac>>()?;
        match <[Frac; 3]>::try_from(v) {
            Ok([a, b, c]) => Ok(Ratios([a.0, b.0, c.0])),
            Err(_) => Err("expected three comma-separated shares".into()),
        }
    }
}

pub fn split(a: SplitArgs, cfg: Config, seed: u64) -> Result<(), CliError> {
    let mut s = Settings::new("split", cfg, seed);
    let mpath = s.path("manifest", a.manifest.as_deref())?;
    let lpath = s.path("labels", a.labels.as_deref())?;
    let out = s.path("out", a.out.as_deref())?;
    let tier: Tier = s.get("tier", flag(&a.tier), "cleaned")?;
    let Ratios(ratios) = s.get("ratios", flag(&a.ratios), "0.8,0.1,0.1")?;
    let age_bucket_months: u32 = s.get("age_bucket_months", flag(&a.age_bucket_months), "12")?;
    let List(keys) = s.get::<List<StratifyKey>>("stratify", flag(&a.stratify), "age_bucket,language")?;
    let from_manifest = s.switch("use_manifest_split", a.use_manifest_split)?;
    let m = manifest(&mpath)?;
    let input = labeled(&m, &tiers(&lpath)?, tier)?;

    let assignment = if from_manifest {
        let hint = apply_split_hint(&m).map_err(invalid("manifest split"))?;
        if !hint.violations.is_empty() {
            return Err(CliError::Invalid(format!(
                "manifest split is not child-disjoint: {}",
                hint.violations.join("; ")
            )));
        }
        let ids: HashSet<&str> = input.iter().map(|(c, _)| c.clip_id.as_str()).collect();
        let children: HashSet<&str> = input.iter().map(|(c, _)| c.child_id.as_str()).collect();
        let mut a = hint.assignment;
        a.clip_to_fold.retain(|k, _| ids.contains(k.as_str()));
        a.child_to_fold.retain(|k, _| children.contains(k.as_str()));
        a
    } else {
        let outcome = split_children(
            &input,
            &SplitConfig {
                ratios,
                seed,
                age_bucket_months,
                stratify_keys: keys.into_iter().collect(),
            },
        )
        .map_err(invalid("split"))?;
        outcome.assignment
    };
    let counts = assignment.clip_counts();
    let total: usize = counts.iter().sum();
    for f in Fold::ALL {
        let n = counts[f.index()];
        info!("{f}: {n} clips ({:.2}%)", 100.0 * n as f64 / total.max(1) as f64);
    }
    write_output(&out, &buffer(|w| write_split(&assignment, w)), &s, upstream(&[("labels", Some(&lpath))]))
}

pub fn prep(a: PrepArgs, cfg: Config, seed: u64) -> Result<(), CliError> {
    let mut s = Settings::new("prep", cfg, seed);
    let mpath = s.path("manifest", a.manifest.as_deref())?;
    let out = s.path("out", a.out.as_deref())?;
    let lpath = s.optional_path("labels", a.labels.as_deref())?;
    let tier: Tier = s.get("tier", flag(&a.tier), "cleaned")?;
    let overflow: OverflowPolicy = s.get("on_overflow", flag(&a.on_overflow), "error")?;
    let root = match s.optional_path("audio_root", a.audio_root.as_deref())? {
        Some(r) => r,
        None => mpath.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let m = manifest(&mpath)?;
    let clips: Vec<_> = match &lpath {
        Some(p) => labeled(&m, &tiers(p)?, tier)?.into_iter().map(|(c, _)| c).collect(),
        None => m.clips.clone(),
    };
    let results: Vec<Result<(String, AudioClip), String>> = clips
        .par_iter()
        .map(|c| {
            let uri = c.audio_uri.strip_prefix("file://").unwrap_or(&c.audio_uri);
            let p = Path::new(uri);
            let path = if p.is_absolute() { p.to_path_buf() } else { root.join(p) };
            read_wav(&path)
                .and_then(|raw| normalize(&raw, overflow))
                .map(|clip| (c.clip_id.clone(), clip))
                .map_err(|e| format!("clip `{}` ({}): {e}", c.clip_id, path.display()))
        })
        .collect();
    let (ok, errors): (Vec<_>, Vec<_>) = results.into_iter().partition(Result::is_ok);
    if !errors.is_empty() {
        let msgs: Vec<String> = errors.into_iter().filter_map(Result::err).collect();
        let shown = msgs.iter().take(10).cloned().collect::<Vec<_>>().join("\n  ");
        return Err(CliError::Invalid(format!("{} clips failed:\n  {shown}", msgs.len())));
    }
    let prepared: Vec<(String, AudioClip)> = ok.into_iter().filter_map(Result::ok).collect();
    info!("prepared {} clips", prepared.len());
    write_output(
        &out,
        &buffer(|w| write_clip_file(&prepared, w)),
        &s,
        upstream(&[("labels", lpath.as_deref())]),
    )
}

pub fn featurize(a: FeaturizeArgs, cfg: Config, seed: u64) -> Result<(), CliError> {
    let mut s = Settings::new("featurize", cfg, seed);
    let cpath = s.path("clips", a.clips.as_deref())?;
    let out = s.path("out", a.out.as_deref())?;
    let d = FeatureConfig::default();
    let fc = FeatureConfig {
        kind: FeatureKind::LogmelStats,
        n_mels: s.get("n_mels", flag(&a.n_mels), &d.n_mels.to_string())?,
        window_ms: s.get("window_ms", flag(&a.window_ms), &d.window_ms.to_string())?,
        hop_ms: s.get("hop_ms", flag(&a.hop_ms), &d.hop_ms.to_string())?,
        fmin_hz: s.get("fmin_hz", flag(&a.fmin_hz), &d.fmin_hz.to_string())?,
        fmax_hz: s.get("fmax_hz", flag(&a.fmax_hz), &d.fmax_hz.to_string())?,
        log_floor: d.log_floor,
    };
    let extractor = LogMelExtractor::new(&fc).map_err(invalid("feature config"))?;
    let clips = read_clip_file(open(&cpath)?).map_err(invalid(cpath.display()))?;
    let vectors = clips
        .par_iter()
        .map(|(id, clip)| {
            extractor
                .extract(clip)
                .map(|values| FeatureVector {
                    clip_id: id.clone(),
                    values,
                })
                .map_err(invalid(format!("clip `{id}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let set = EmbeddingSet { dim: fc.dim(), vectors };
    let mut extra = upstream(&[("clips", Some(&cpath))]);
    extra.insert("feature_config".into(), serde_json::to_value(&fc).expect("config serializes"));
    write_output(&out, &buffer(|w| write_embeddings(&set, w)), &s, extra)
}

/// Feature settings recorded by `featurize`; anything else is an imported embedding.
fn feature_config_of(embeddings: &Path) -> FeatureConfig {
    read_meta(embeddings)
        .and_then(|m| m.get("feature_config").cloned())
        .and_then(|v| serde_json::from_value(v).ok())
        .unwrap_or(FeatureConfig {
            kind: FeatureKind::ImportedEmbedding,
            ..Default::default()
        })
}

pub fn train(a: TrainArgs, cfg: Config, seed: u64) -> Result<(), CliError> {
    let mut s = Settings::new("train", cfg, seed);
    let epath = s.path("embeddings", a.embeddings.as_deref())?;
    let lpath = s.path("labels", a.labels.as_deref())?;
    let spath = s.path("split", a.split.as_deref())?;
    let out = s.path("out", a.out.as_deref())?;
    let tier: Tier = s.get("tier", flag(&a.tier), "cleaned")?;
    let d = TrainConfig::default();
    let tc = TrainConfig {
        epochs: s.get("epochs", flag(&a.epochs), &d.epochs.to_string())?,
        batch_size: s.get("batch_size", flag(&a.batch_size), &d.batch_size.to_string())?,
        learning_rate: s.get("learning_rate", flag(&a.learning_rate), &d.learning_rate.to_string())?,
        momentum: s.get("momentum", flag(&a.momentum), &d.momentum.to_string())?,
        hidden_units: s.get("hidden_units", flag(&a.hidden_units), &d.hidden_units.to_string())?,
        optimizer: s.get::<Optimizer>("optimizer", flag(&a.optimizer), "sgd_momentum")?,
        standardize: s.get("standardize", flag(&a.standardize), "true")?,
        seed,
    };
    let emb = embeddings(&epath)?;
    let by_id: HashMap<&str, &FeatureVector> = emb.vectors.iter().map(|v| (v.clip_id.as_str(), v)).collect();
    let split = split_file(&spath)?;
    let mut sets: [Vec<(FeatureVector, LabelClass)>; 2] = [Vec::new(), Vec::new()];
    for (id, label) in tier_members(&tiers(&lpath)?, tier) {
        let fold = match split.fold_of_clip(&id) {
            Some(Fold::Train) => 0,
            Some(Fold::Dev) => 1,
            _ => continue,
        };
        let v = by_id
            .get(id.as_str())
            .ok_or_else(|| CliError::Invalid(format!("no embedding for clip `{id}`")))?;
        sets[fold].push(((*v).clone(), label));
    }
    info!("training on {} clips, selecting on {} dev clips", sets[0].len(), sets[1].len());
    let fc = feature_config_of(&epath);
    let model = run_train(&sets[0], &sets[1], &fc, &tc).map_err(invalid("training"))?;
    for e in &model.training_log {
        info!("epoch {:>3}: loss {:.4}, dev UAR {:.2}", e.epoch, e.train_loss, e.dev_uar);
    }
    info!("selected epoch {}", model.selected_epoch);
    let mut extra = upstream(&[("embeddings", Some(&epath)), ("labels", Some(&lpath)), ("split", Some(&spath))]);
    extra.insert("selected_epoch".into(), model.selected_epoch.into());
    extra.insert(
        "training_log".into(),
        serde_json::to_value(&model.training_log).expect("log serializes"),
    );
    write_output(&out, &buffer(|w| write_model(&model, w)), &s, extra)
}

pub fn predict(a: PredictArgs, cfg: Config, seed: u64) -> Result<(), CliError> {
    let mut s = Settings::new("predict", cfg, seed);
    let mpath = s.path("model", a.model.as_deref())?;
    let epath = s.path("embeddings", a.embeddings.as_deref())?;
    let out = s.path("out", a.out.as_deref())?;
    let spath = s.optional_path("split", a.split.as_deref())?;
    let model = read_model(open(&mpath)?).map_err(invalid(mpath.display()))?;
    let mut feats = embeddings(&epath)?.vectors;
    if let Some(sp) = &spath {
        let fold: Fold = s.get("fold", flag(&a.fold), "test")?;
        let split = split_file(sp)?;
        feats.retain(|v| split.fold_of_clip(&v.clip_id) == Some(fold));
    }
    let preds = run_predict(&model, &feats).map_err(invalid("prediction"))?;
    info!("scored {} clips", preds.len());
    let extra = upstream(&[("model", Some(&mpath)), ("embeddings", Some(&epath))]);
    write_output(&out, &buffer(|w| write_predictions(&preds, w)), &s, extra)
}

fn weights(s: &mut Settings, flag_path: Option<&Path>) -> Result<WeightMatrix, CliError> {
    match s.optional_path("weights", flag_path)? {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::Io(p.clone(), e))?;
            WeightMatrix::parse(&text).map_err(invalid(p.display()))
        }
        None => Ok(WeightMatrix::default()),
    }
}

fn bootstrap(s: &mut Settings, resamples: &Option<String>, level: &Option<String>, seed: u64) -> Result<BootstrapConfig, CliError> {
    Ok(BootstrapConfig {
        resamples: s.get("resamples", flag(resamples), "1000")?,
        level: s.get("level", flag(level), "0.95")?,
        seed,
    })
}

pub fn evaluate(a: EvaluateArgs, cfg: Config, seed: u64) -> Result<(), CliError> {
    let mut s = Settings::new("evaluate", cfg, seed);
    let mpath = s.path("manifest", a.manifest.as_deref())?;
    let ppath = s.path("predictions", a.predictions.as_deref())?;
    let lpath = s.path("labels", a.labels.as_deref())?;
    let out = s.path("out", a.out.as_deref())?;
    let md = s.optional_path("markdown", a.markdown.as_deref())?;
    let spath = s.optional_path("split", a.split.as_deref())?;
    let tier: Tier = s.get("tier", flag(&a.tier), "cleaned")?;
    let List(strata) = s.get::<List<StratumKey>>("strata", flag(&a.strata), "environment,language")?;
    let default_id = mpath.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default();
    let ec = EvalConfig {
        dataset_id: s.get("dataset_id", flag(&a.dataset_id), &default_id)?,
        finetune_set: s.get("finetune_set", flag(&a.finetune_set), "model")?,
        tier,
        strata,
        age_bucket_months: s.get("age_bucket_months", flag(&a.age_bucket_months), "12")?,
        bootstrap: bootstrap(&mut s, &a.resamples, &a.level, seed)?,
        weights: weights(&mut s, a.weights.as_deref())?,
        min_pairs: s.get("min_pairs", flag(&a.min_pairs), "20")?,
        agreement_mode: s.get::<AgreementMode>("agreement_mode", flag(&a.agreement_mode), "grouped")?,
    };
    let m = manifest(&mpath)?;
    let preds = read_predictions(open(&ppath)?).map_err(invalid(ppath.display()))?;
    let mut gold = tier_members(&tiers(&lpath)?, tier);
    let split = match &spath {
        Some(p) => {
            let fold: Fold = s.get("fold", flag(&a.fold), "test")?;
            let split = split_file(p)?;
            gold.retain(|(id, _)| split.fold_of_clip(id) == Some(fold));
            Some(split)
        }
        None => None,
    };
    let mut pipeline = upstream(&[
        ("predictions", Some(&ppath)),
        ("labels", Some(&lpath)),
        ("split", spath.as_deref()),
    ]);
    pipeline.insert("evaluate".into(), serde_json::to_value(s.echo()).expect("settings serialize"));
    let report = run_evaluate(
        &EvalInputs {
            predictions: &preds,
            gold: &gold,
            manifest: &m,
            split: split.as_ref(),
            pipeline,
        },
        &ec,
    )
    .map_err(invalid("evaluation"))?;
    info!(
        "UAR {:.2}% (SD {:.2}) over {} clips",
        report.overall.uar, report.overall.uar_sd, report.overall.n_clips
    );
    write_output(&out, &json_bytes(&report), &s, no_extra())?;
    if let Some(p) = md {
        write_output(&p, render_markdown(&report).as_bytes(), &s, no_extra())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AgreementOutput<'a> {
    schema_version: u32,
    weights: &'a WeightMatrix,
    n_items: usize,
    human: Option<KappaResult>,
    human_note: Option<String>,
    model_vs_annotators: Option<ModelAgreement>,
    model_note: Option<String>,
    config: &'a BTreeMap<String, Value>,
}

pub fn agreement(a: AgreementArgs, cfg: Config, seed: u64) -> Result<(), CliError> {
    let mut s = Settings::new("agreement", cfg, seed);
    let mpath = s.path("manifest", a.manifest.as_deref())?;
    let out = s.path("out", a.out.as_deref())?;
    let lpath = s.optional_path("labels", a.labels.as_deref())?;
    let ppath = s.optional_path("predictions", a.predictions.as_deref())?;
    let tier: Tier = s.get("tier", flag(&a.tier), "cleaned")?;
    let w = weights(&mut s, a.weights.as_deref())?;
    let boot = bootstrap(&mut s, &a.resamples, &a.level, seed)?;
    let min_pairs: usize = s.get("min_pairs", flag(&a.min_pairs), "20")?;
    let mode: AgreementMode = s.get("agreement_mode", flag(&a.agreement_mode), "grouped")?;
    let max_annotations: Option<u32> = s.optional("max_annotations", flag(&a.max_annotations))?;
    let m = manifest(&mpath)?;

    let scope: Option<BTreeSet<String>> = match &lpath {
        Some(p) => Some(tier_members(&tiers(p)?, tier).into_iter().map(|(id, _)| id).collect()),
        None => None,
    };
    let in_scope = |id: &str| scope.as_ref().is_none_or(|sc| sc.contains(id));
    let by_clip = m.annotations_by_clip();
    let items: Vec<LabelCounts> = m
        .clips
        .iter()
        .filter(|c| in_scope(&c.clip_id))
        .filter_map(|c| by_clip.get(c.clip_id.as_str()))
        .map(|anns| {
            let mut c = [0u32; NUM_CLASSES];
            for x in anns {
                c[x.label.index()] += 1;
            }
            c
        })
        .filter(|c| max_annotations.is_none_or(|mx| c.iter().sum::<u32>() <= mx))
        .collect();
    let (human, human_note) = match human_agreement(&items, &w, &boot) {
        Ok(k) => (Some(k), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let (model, model_note) = match &ppath {
        Some(p) => {
            let preds: BTreeMap<String, LabelClass> = read_predictions(open(p)?)
                .map_err(invalid(p.display()))?
                .into_iter()
                .filter(|r| in_scope(&r.clip_id))
                .map(|r| (r.clip_id, r.predicted))
                .collect();
            match model_vs_annotators(&preds, &m.annotations, &w, min_pairs, mode) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            }
        }
        None => (None, Some("no predictions given".to_string())),
    };
    if let Some(k) = &human {
        info!("annotators: K = {:.3} over {} items", k.kappa, k.n_items);
    }
    if let Some(mv) = &model {
        info!("model vs annotators: K = {:.3} (SD {:.3}), {} annotators", mv.mean_kappa, mv.sd, mv.n_annotators);
    }
    for note in human_note.iter().chain(&model_note) {
        warn!("{note}");
    }
    let output = AgreementOutput {
        schema_version: 1,
        weights: &w,
        n_items: items.len(),
        human,
        human_note,
        model_vs_annotators: model,
        model_note,
        config: s.echo(),
    };
    let bytes = json_bytes(&output);
    write_output(&out, &bytes, &s, upstream(&[("predictions", ppath.as_deref())]))
}

pub fn report(a: ReportArgs, cfg: Config, seed: u64) -> Result<(), CliError> {
    let mut s = Settings::new("report", cfg, seed);
    let out = s.path("out", a.out.as_deref())?;
    let format: String = s.get("format", flag(&a.format), "markdown")?;
    s.record(
        "in",
        a.inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    );
    let reports = a
        .inputs
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(p.clone(), e))?;
            serde_json::from_str::<EvaluationReport>(&text).map_err(invalid(p.display()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let table = compare_matrix(&reports).map_err(invalid("report"))?;
    let bytes = match format.as_str() {
        "json" => json_bytes(&table),
        "markdown" => {
            let mut text = render_comparison(&table);
            for r in &reports {
                text.push('\n');
                text.push_str(&render_markdown(r));
            }
            text.into_bytes()
        }
        other => return Err(CliError::Usage(format!("unknown report format `{other}` (markdown or json)"))),
    };
    write_output(&out, &bytes, &s, no_extra())
}

pub fn serve(a: ServeArgs, cfg: Config, seed: u64) -> Result<(), CliError> {
    let mut s = Settings::new("serve", cfg, seed);
    let mut sc = ServiceConfig::new(
        s.path("manifest", a.manifest.as_deref())?,
        s.path("gold_manifest", a.gold_manifest.as_deref())?,
        s.path("store", a.store.as_deref())?,
    );
    let host: String = s.get("host", flag(&a.host), "127.0.0.1")?;
    let port: u16 = s.get("port", flag(&a.port), "8080")?;
    sc.target_per_clip = s.get("target_per_clip", flag(&a.target_per_clip), "3")?;
    sc.continue_past_target = s.switch("continue_past_target", a.continue_past_target)?;
    sc.qual_n = s.get("qual_n", flag(&a.qual_n), "10")?;
    sc.qual_threshold = s.get::<Frac>("qual_threshold", flag(&a.qual_threshold), "0.8")?.0;
    sc.audio_root = s.optional_path("audio_root", a.audio_root.as_deref())?;
    sc.shared_secret = a.shared_secret.clone();
    sc.seed = seed;
    let state = ServiceState::open(sc).map_err(invalid("annotation service"))?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    rt.block_on(async move {
        let addr = format!("{host}:{port}");
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Invalid(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Invalid(e.to_string()))?;
        eprintln!("listening on http://{local}");
        voclab_service::serve(state, listener, async {
            tokio::signal::ctrl_c().await.ok();
        })
        .await
        .map_err(|e| CliError::Invalid(e.to_string()))
    })
}
