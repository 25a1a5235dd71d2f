//! Consensus labels from multi-annotator judgments.
//!
//! Each clip gets its plurality label. A clip joins the *uncleaned* tier
//! when the plurality is unique (or resolved by the tie policy) and the
//! clip has at least `min_annotations` judgments; it joins the *cleaned*
//! tier when, in addition, the winning share reaches the strong-majority
//! threshold. Threshold comparisons are done on exact fractions so that
//! 2 of 3 sits exactly on the default 2/3 boundary.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fraction::Fraction;
use crate::label::{LabelClass, NUM_CLASSES};
use crate::manifest::{Annotation, ClipRecord, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Tied clips stay unresolved.
    Exclude,
    /// The tied class earliest in [`LabelClass::ALL`] wins.
    FixedPriority,
}

impl FromStr for TiePolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exclude" => Ok(TiePolicy::Exclude),
            "fixed_priority" => Ok(TiePolicy::FixedPriority),
            _ => Err(format!("unknown tie policy `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Cleaned,
    Uncleaned,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Cleaned => "cleaned",
            Tier::Uncleaned => "uncleaned",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cleaned" => Ok(Tier::Cleaned),
            "uncleaned" => Ok(Tier::Uncleaned),
            _ => Err(format!("unknown tier `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AggregationConfig {
    #[serde(serialize_with = "ser_fraction")]
    pub strong_majority_threshold: Fraction,
    pub min_annotations: usize,
    pub tie_policy: TiePolicy,
}

fn ser_fraction<S: serde::Serializer>(f: &Fraction, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{}/{}", f.numer(), f.denom()))
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            strong_majority_threshold: Fraction::new(2, 3),
            min_annotations: 3,
            tie_policy: TiePolicy::Exclude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregatedLabel {
    pub clip_id: String,
    /// `None` when the plurality is tied and the policy excludes ties.
    pub label: Option<LabelClass>,
    pub n_annotations: usize,
    pub top_count: usize,
    pub in_cleaned: bool,
    pub in_uncleaned: bool,
}

impl AggregatedLabel {
    /// Share of annotations that chose the top class, reduced.
    pub fn agreement_fraction(&self) -> Fraction {
        Fraction::new(self.top_count as u64, self.n_annotations as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("no annotations given")]
    Empty,
    #[error("annotations mix clips `{0}` and `{1}`")]
    MixedClips(String, String),
}

/// Per-class tallies for one clip.
pub fn label_counts<'a>(labels: impl IntoIterator<Item = &'a LabelClass>) -> [usize; NUM_CLASSES] {
    let mut counts = [0usize; NUM_CLASSES];
    for l in labels {
        counts[l.index()] += 1;
    }
    counts
}

/// Plurality label plus its count; `None` for the label on an unresolved tie.
pub fn plurality(counts: &[usize; NUM_CLASSES], tie: TiePolicy) -> (Option<LabelClass>, usize) {
    let top = *counts.iter().max().unwrap_or(&0);
    if top == 0 {
        return (None, 0);
    }
    let mut winners = LabelClass::ALL.iter().filter(|c| counts[c.index()] == top);
    let first = *winners.next().expect("top count is attained");
    let tied = winners.next().is_some();
    match (tied, tie) {
        (true, TiePolicy::Exclude) => (None, top),
        _ => (Some(first), top),
    }
}

pub fn aggregate_clip(
    annotations: &[&Annotation],
    cfg: &AggregationConfig,
) -> Result<AggregatedLabel, AggregateError> {
    let first = annotations.first().ok_or(AggregateError::Empty)?;
    if let Some(other) = annotations.iter().find(|a| a.clip_id != first.clip_id) {
        return Err(AggregateError::MixedClips(
            first.clip_id.clone(),
            other.clip_id.clone(),
        ));
    }
    let counts = label_counts(annotations.iter().map(|a| &a.label));
    Ok(from_counts(&first.clip_id, &counts, cfg))
}

/// Aggregation from precomputed tallies.
pub fn from_counts(
    clip_id: &str,
    counts: &[usize; NUM_CLASSES],
    cfg: &AggregationConfig,
) -> AggregatedLabel {
    let n: usize = counts.iter().sum();
    let (label, top) = plurality(counts, cfg.tie_policy);
    let in_uncleaned = label.is_some() && n >= cfg.min_annotations && n > 0;
    // top/n >= p/q  <=>  top*q >= p*n
    let thr = cfg.strong_majority_threshold;
    let strong = (top as u128) * (*thr.denom() as u128) >= (*thr.numer() as u128) * (n as u128);
    AggregatedLabel {
        clip_id: clip_id.to_string(),
        label,
        n_annotations: n,
        top_count: top,
        in_cleaned: in_uncleaned && strong,
        in_uncleaned,
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tiers {
    pub cleaned: Vec<(ClipRecord, LabelClass)>,
    pub uncleaned: Vec<(ClipRecord, LabelClass)>,
    /// Annotated clips that are unresolved or under `min_annotations`.
    pub dropped: Vec<String>,
    /// One entry per annotated clip, sorted by clip_id.
    pub labels: Vec<AggregatedLabel>,
}

/// Aggregates every annotated clip of a valid manifest. Output lists are
/// ordered by clip_id.
pub fn build_tiers(m: &Manifest, cfg: &AggregationConfig) -> Tiers {
    let by_clip = m.annotations_by_clip();
    let index = m.clip_index();
    let mut ids: Vec<&str> = by_clip.keys().copied().collect();
    ids.sort_unstable();

    let labels: Vec<AggregatedLabel> = ids
        .par_iter()
        .map(|id| aggregate_clip(&by_clip[id], cfg).expect("grouped by clip, non-empty"))
        .collect();

    let mut tiers = Tiers::default();
    for agg in &labels {
        match agg.label {
            Some(label) if agg.in_uncleaned => {
                let clip = index[agg.clip_id.as_str()].clone();
                if agg.in_cleaned {
                    tiers.cleaned.push((clip.clone(), label));
                }
                tiers.uncleaned.push((clip, label));
            }
            _ => tiers.dropped.push(agg.clip_id.clone()),
        }
    }
    tiers.labels = labels;
    tiers
}

/// One line of the tier file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierRecord {
    pub clip_id: String,
    pub label: Option<LabelClass>,
    pub n_annotations: usize,
    pub top_count: usize,
    pub tier_flags: Vec<Tier>,
}

impl TierRecord {
    pub fn in_tier(&self, tier: Tier) -> bool {
        self.tier_flags.contains(&tier)
    }
}

impl From<&AggregatedLabel> for TierRecord {
    fn from(a: &AggregatedLabel) -> Self {
        let mut tier_flags = Vec::new();
        if a.in_cleaned {
            tier_flags.push(Tier::Cleaned);
        }
        if a.in_uncleaned {
            tier_flags.push(Tier::Uncleaned);
        }
        Self {
            clip_id: a.clip_id.clone(),
            label: a.label,
            n_annotations: a.n_annotations,
            top_count: a.top_count,
            tier_flags,
        }
    }
}

pub fn write_tiers<W: Write>(records: &[TierRecord], mut w: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_tiers<R: BufRead>(r: R) -> Result<Vec<TierRecord>, String> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TierRecord =
            serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
        if !rec.tier_flags.is_empty() && rec.label.is_none() {
            return Err(format!("line {}: tier member without a label", i + 1));
        }
        out.push(rec);
    }
    Ok(out)
}

/// `(clip_id, label)` for every record that belongs to `tier`.
pub fn tier_members(records: &[TierRecord], tier: Tier) -> Vec<(String, LabelClass)> {
    records
        .iter()
        .filter(|r| r.in_tier(tier))
        .filter_map(|r| r.label.map(|l| (r.clip_id.clone(), l)))
        .collect()
}
