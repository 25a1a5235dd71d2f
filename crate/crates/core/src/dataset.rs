//! Class rebalancing and child-disjoint train/dev/test splits.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fraction::{to_f64, Fraction};
use crate::label::{Fold, LabelClass, NUM_CLASSES};
use crate::manifest::{ClipRecord, Manifest};
use crate::rng::SeededRng;

pub type LabeledClip = (ClipRecord, LabelClass);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SamplingConfig {
    pub anchor_class: LabelClass,
    #[serde(serialize_with = "ser_fraction")]
    pub multiplier: Fraction,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            anchor_class: LabelClass::Laughing,
            multiplier: Fraction::from_integer(3),
            seed: 0,
        }
    }
}

fn ser_fraction<S: serde::Serializer>(f: &Fraction, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{}/{}", f.numer(), f.denom()))
}

fn ser_ratios<S: serde::Serializer>(r: &[Fraction; 3], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(3))?;
    for f in r {
        seq.serialize_element(&format!("{}/{}", f.numer(), f.denom()))?;
    }
    seq.end()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratifyKey {
    AgeBucket,
    Language,
}

impl FromStr for StratifyKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "age_bucket" => Ok(StratifyKey::AgeBucket),
            "language" => Ok(StratifyKey::Language),
            _ => Err(format!("unknown stratify key `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitConfig {
    /// Train, dev and test shares.
    #[serde(serialize_with = "ser_ratios")]
    pub ratios: [Fraction; 3],
    pub seed: u64,
    pub age_bucket_months: u32,
    pub stratify_keys: BTreeSet<StratifyKey>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratios: [Fraction::new(4, 5), Fraction::new(1, 10), Fraction::new(1, 10)],
            seed: 0,
            age_bucket_months: 12,
            stratify_keys: [StratifyKey::AgeBucket, StratifyKey::Language].into(),
        }
    }
}

/// Strata with at least this many children must reach every fold.
pub const STRATUM_COVERAGE_MIN_CHILDREN: usize = 10;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitAssignment {
    pub child_to_fold: BTreeMap<String, Fold>,
    pub clip_to_fold: BTreeMap<String, Fold>,
}

impl SplitAssignment {
    pub fn fold_of_clip(&self, clip_id: &str) -> Option<Fold> {
        self.clip_to_fold.get(clip_id).copied()
    }

    /// Clip counts per fold, indexed by [`Fold::index`].
    pub fn clip_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for f in self.clip_to_fold.values() {
            c[f.index()] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub assignment: SplitAssignment,
    /// Achieved clip share per fold.
    pub achieved: [f64; 3],
    /// Largest share of all clips held by one child.
    pub max_child_share: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("input is empty")]
    Empty,
    #[error("anchor class `{0}` absent from input")]
    AnchorAbsent(LabelClass),
    #[error("multiplier must be positive")]
    NonPositiveMultiplier,
    #[error("split ratios must be non-negative and sum to exactly 1 (got {0})")]
    BadRatios(String),
    #[error("need at least 3 children to populate three folds, got {0}")]
    TooFewChildren(usize),
    #[error("age_bucket_months must be positive")]
    BadAgeBucket,
    #[error("clips without a split record: {}", .0.join(", "))]
    MissingSplit(Vec<String>),
}

/// Caps every non-anchor class at `ceil(multiplier * anchor_count)` clips,
/// drawn uniformly without replacement. Output is sorted by clip_id.
pub fn downsample(
    labeled: &[LabeledClip],
    cfg: &SamplingConfig,
) -> Result<Vec<LabeledClip>, DatasetError> {
    if labeled.is_empty() {
        return Err(DatasetError::Empty);
    }
    if *cfg.multiplier.numer() == 0 {
        return Err(DatasetError::NonPositiveMultiplier);
    }
    let mut by_class: [Vec<&LabeledClip>; NUM_CLASSES] = Default::default();
    for item in labeled {
        by_class[item.1.index()].push(item);
    }
    let anchor = by_class[cfg.anchor_class.index()].len();
    if anchor == 0 {
        return Err(DatasetError::AnchorAbsent(cfg.anchor_class));
    }
    let cap = class_cap(anchor, cfg.multiplier);

    let mut out: Vec<LabeledClip> = Vec::new();
    for class in LabelClass::ALL {
        let members = &mut by_class[class.index()];
        members.sort_by(|a, b| a.0.clip_id.cmp(&b.0.clip_id));
        if class == cfg.anchor_class || members.len() <= cap {
            out.extend(members.iter().map(|&x| x.clone()));
        } else {
            let mut rng = SeededRng::substream(cfg.seed, class.index() as u64);
            let picks = rng.sample_indices(members.len(), cap);
            out.extend(picks.into_iter().map(|i| members[i].clone()));
        }
    }
    out.sort_by(|a, b| a.0.clip_id.cmp(&b.0.clip_id));
    Ok(out)
}

/// `ceil(multiplier * anchor)`.
pub fn class_cap(anchor: usize, multiplier: Fraction) -> usize {
    let num = *multiplier.numer() as u128 * anchor as u128;
    let den = *multiplier.denom() as u128;
    num.div_ceil(den) as usize
}

struct Child<'a> {
    id: &'a str,
    clips: Vec<&'a str>,
    stratum: usize,
}

fn child_stratum_key(clips: &[&ClipRecord], cfg: &SplitConfig) -> (Option<String>, Option<u32>) {
    let language = cfg.stratify_keys.contains(&StratifyKey::Language).then(|| {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for c in clips {
            *counts.entry(c.language.as_str()).or_default() += 1;
        }
        // most frequent, lexicographically first on ties
        let best = counts.values().copied().max().unwrap_or(0);
        counts
            .into_iter()
            .find(|&(_, n)| n == best)
            .map(|(l, _)| l.to_string())
            .unwrap_or_default()
    });
    let age = cfg.stratify_keys.contains(&StratifyKey::AgeBucket).then(|| {
        let mut ages: Vec<u32> = clips.iter().map(|c| c.age_months).collect();
        ages.sort_unstable();
        ages[(ages.len() - 1) / 2] / cfg.age_bucket_months
    });
    (language, age)
}

fn validate_ratios(r: &[Fraction; 3]) -> Result<(), DatasetError> {
    let sum = r[0] + r[1] + r[2];
    if sum != Fraction::from_integer(1) {
        return Err(DatasetError::BadRatios(
            r.iter()
                .map(|f| format!("{}/{}", f.numer(), f.denom()))
                .collect::<Vec<_>>()
                .join(","),
        ));
    }
    Ok(())
}

/// Child-disjoint, stratified fold assignment.
///
/// Children are grouped into strata, shuffled per stratum under the seed
/// and dealt one at a time to the fold whose clip count lags its target
/// the most (relative to that target). Strata with at least
/// [`STRATUM_COVERAGE_MIN_CHILDREN`] children are forced to reach every
/// fold, and every fold with a positive ratio receives at least one child.
/// A deterministic local search (single moves, then pairwise swaps) then
/// reduces the squared deviation of fold clip counts from their targets
/// without breaking either coverage rule.
pub fn split_children(
    labeled: &[LabeledClip],
    cfg: &SplitConfig,
) -> Result<SplitOutcome, DatasetError> {
    validate_ratios(&cfg.ratios)?;
    if cfg.age_bucket_months == 0 {
        return Err(DatasetError::BadAgeBucket);
    }
    let mut by_child: BTreeMap<&str, Vec<&ClipRecord>> = BTreeMap::new();
    for (clip, _) in labeled {
        by_child.entry(clip.child_id.as_str()).or_default().push(clip);
    }
    if by_child.len() < 3 {
        return Err(DatasetError::TooFewChildren(by_child.len()));
    }

    let mut stratum_ids: BTreeMap<(Option<String>, Option<u32>), usize> = BTreeMap::new();
    let mut children: Vec<Child> = Vec::with_capacity(by_child.len());
    for (id, clips) in &by_child {
        let key = child_stratum_key(clips, cfg);
        let next = stratum_ids.len();
        let stratum = *stratum_ids.entry(key).or_insert(next);
        let mut clip_ids: Vec<&str> = clips.iter().map(|c| c.clip_id.as_str()).collect();
        clip_ids.sort_unstable();
        children.push(Child {
            id,
            clips: clip_ids,
            stratum,
        });
    }
    // stratum ids in key order
    let order: Vec<usize> = stratum_ids.values().copied().collect();
    let n_strata = order.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_strata];
    for (i, c) in children.iter().enumerate() {
        members[c.stratum].push(i);
    }

    let total: usize = children.iter().map(|c| c.clips.len()).sum();
    let ratio = cfg.ratios.map(to_f64);
    let target = ratio.map(|r| r * total as f64);
    let active: Vec<usize> = (0..3).filter(|&f| ratio[f] > 0.0).collect();
    let covered_stratum: Vec<bool> = members
        .iter()
        .map(|m| m.len() >= STRATUM_COVERAGE_MIN_CHILDREN)
        .collect();

    let mut rng = SeededRng::new(cfg.seed);
    let mut fold_of = vec![usize::MAX; children.len()];
    let mut assigned = [0usize; 3];
    let mut n_in_fold = [0usize; 3];
    let mut stratum_fold = vec![[0usize; 3]; n_strata];
    let mut global_left = children.len();

    for &s in &order {
        let mut queue = members[s].clone();
        rng.shuffle(&mut queue);
        let mut stratum_left = queue.len();
        for ci in queue {
            let uncovered: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&f| stratum_fold[s][f] == 0)
                .collect();
            let empty: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&f| n_in_fold[f] == 0)
                .collect();
            let candidates = if covered_stratum[s] && stratum_left <= uncovered.len() {
                uncovered
            } else if global_left <= empty.len() {
                empty
            } else {
                active.clone()
            };
            let mut best = candidates[0];
            let mut best_gap = f64::NEG_INFINITY;
            for &f in &candidates {
                let gap = 1.0 - assigned[f] as f64 / target[f];
                if gap > best_gap {
                    best_gap = gap;
                    best = f;
                }
            }
            fold_of[ci] = best;
            let size = children[ci].clips.len();
            assigned[best] += size;
            n_in_fold[best] += 1;
            stratum_fold[s][best] += 1;
            stratum_left -= 1;
            global_left -= 1;
        }
    }

    refine(
        &children,
        &mut fold_of,
        &mut assigned,
        &mut n_in_fold,
        &mut stratum_fold,
        &covered_stratum,
        &target,
        &active,
    );

    let mut assignment = SplitAssignment::default();
    for (ci, c) in children.iter().enumerate() {
        let fold = Fold::ALL[fold_of[ci]];
        assignment.child_to_fold.insert(c.id.to_string(), fold);
        for clip in &c.clips {
            assignment.clip_to_fold.insert(clip.to_string(), fold);
        }
    }
    let achieved = assigned.map(|a| a as f64 / total as f64);
    let max_child = children.iter().map(|c| c.clips.len()).max().unwrap_or(0);
    Ok(SplitOutcome {
        assignment,
        achieved,
        max_child_share: max_child as f64 / total as f64,
    })
}

#[allow(clippy::too_many_arguments)]
fn refine(
    children: &[Child],
    fold_of: &mut [usize],
    assigned: &mut [usize; 3],
    n_in_fold: &mut [usize; 3],
    stratum_fold: &mut [[usize; 3]],
    covered_stratum: &[bool],
    target: &[f64; 3],
    active: &[usize],
) {
    const MAX_PASSES: usize = 50;
    let cost = |a: &[usize; 3]| -> f64 { (0..3).map(|f| (a[f] as f64 - target[f]).powi(2)).sum() };
    // can child `ci` leave fold `from` without emptying a required fold?
    let can_leave = |ci: usize, from: usize, n_in_fold: &[usize; 3], stratum_fold: &[[usize; 3]]| {
        let s = children[ci].stratum;
        n_in_fold[from] > 1 && (!covered_stratum[s] || stratum_fold[s][from] > 1)
    };
    let eps = 1e-9;

    for _ in 0..MAX_PASSES {
        let mut improved = false;
        for ci in 0..children.len() {
            let from = fold_of[ci];
            let size = children[ci].clips.len();
            for &to in active {
                if to == from || !can_leave(ci, from, n_in_fold, stratum_fold) {
                    continue;
                }
                let mut trial = *assigned;
                trial[from] -= size;
                trial[to] += size;
                if cost(&trial) + eps < cost(assigned) {
                    *assigned = trial;
                    n_in_fold[from] -= 1;
                    n_in_fold[to] += 1;
                    stratum_fold[children[ci].stratum][from] -= 1;
                    stratum_fold[children[ci].stratum][to] += 1;
                    fold_of[ci] = to;
                    improved = true;
                    break;
                }
            }
        }
        for a in 0..children.len() {
            for b in (a + 1)..children.len() {
                let (fa, fb) = (fold_of[a], fold_of[b]);
                let (sa, sb) = (children[a].clips.len(), children[b].clips.len());
                if fa == fb || sa == sb {
                    continue;
                }
                let (ka, kb) = (children[a].stratum, children[b].stratum);
                if ka != kb
                    && ((covered_stratum[ka] && stratum_fold[ka][fa] <= 1)
                        || (covered_stratum[kb] && stratum_fold[kb][fb] <= 1))
                {
                    continue;
                }
                let mut trial = *assigned;
                trial[fa] = trial[fa] - sa + sb;
                trial[fb] = trial[fb] - sb + sa;
                if cost(&trial) + eps < cost(assigned) {
                    *assigned = trial;
                    stratum_fold[ka][fa] -= 1;
                    stratum_fold[ka][fb] += 1;
                    stratum_fold[kb][fb] -= 1;
                    stratum_fold[kb][fa] += 1;
                    fold_of[a] = fb;
                    fold_of[b] = fa;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HintOutcome {
    pub assignment: SplitAssignment,
    /// Children whose clips carry more than one fold.
    pub violations: Vec<String>,
}

/// Takes the manifest's split records verbatim and checks that no child
/// spans two folds. Contradictions are reported, never repaired: the child
/// map keeps the fold of the child's first clip in manifest order.
pub fn apply_split_hint(m: &Manifest) -> Result<HintOutcome, DatasetError> {
    let hints: BTreeMap<&str, Fold> = m
        .split_hint
        .iter()
        .flatten()
        .map(|s| (s.clip_id.as_str(), s.fold))
        .collect();
    let missing: Vec<String> = m
        .clips
        .iter()
        .filter(|c| !hints.contains_key(c.clip_id.as_str()))
        .map(|c| c.clip_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(DatasetError::MissingSplit(missing));
    }

    let mut assignment = SplitAssignment::default();
    let mut folds_per_child: BTreeMap<&str, BTreeSet<Fold>> = BTreeMap::new();
    for c in &m.clips {
        let fold = hints[c.clip_id.as_str()];
        assignment.clip_to_fold.insert(c.clip_id.clone(), fold);
        assignment
            .child_to_fold
            .entry(c.child_id.clone())
            .or_insert(fold);
        folds_per_child.entry(c.child_id.as_str()).or_default().insert(fold);
    }
    let violations = folds_per_child
        .into_iter()
        .filter(|(_, f)| f.len() > 1)
        .map(|(child, f)| {
            let names: Vec<&str> = f.iter().map(|x| x.as_str()).collect();
            format!("child `{child}` has clips in folds {}", names.join(" and "))
        })
        .collect();
    Ok(HintOutcome {
        assignment,
        violations,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum SplitLine {
    Child { child_id: String, fold: Fold },
    Clip { clip_id: String, fold: Fold },
}

/// Writes child lines, then clip lines, each sorted by id.
pub fn write_split<W: Write>(a: &SplitAssignment, mut w: W) -> std::io::Result<()> {
    for (child_id, &fold) in &a.child_to_fold {
        serde_json::to_writer(&mut w, &SplitLine::Child { child_id: child_id.clone(), fold })?;
        w.write_all(b"\n")?;
    }
    for (clip_id, &fold) in &a.clip_to_fold {
        serde_json::to_writer(&mut w, &SplitLine::Clip { clip_id: clip_id.clone(), fold })?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_split<R: BufRead>(r: R) -> Result<SplitAssignment, String> {
    let mut a = SplitAssignment::default();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SplitLine>(&line).map_err(|e| format!("line {}: {e}", i + 1))? {
            SplitLine::Child { child_id, fold } => {
                a.child_to_fold.insert(child_id, fold);
            }
            SplitLine::Clip { clip_id, fold } => {
                a.clip_to_fold.insert(clip_id, fold);
            }
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::{Environment, LabelClass::*};
    use crate::manifest::SplitRecord;
    use serde_json::Map;

    pub(crate) fn clip(id: &str, child: &str, lang: &str, age: u32) -> ClipRecord {
        ClipRecord {
            clip_id: id.into(),
            child_id: child.into(),
            corpus_id: "sm".into(),
            language: lang.into(),
            environment: Environment::Rural,
            age_months: age,
            audio_uri: format!("{id}.wav"),
            duration_ms: 500,
            extra: Map::new(),
        }
    }

    fn with_counts(counts: &[(LabelClass, usize)]) -> Vec<LabeledClip> {
        let mut v = Vec::new();
        for &(class, n) in counts {
            for i in 0..n {
                v.push((clip(&format!("{class}-{i:05}"), "k", "en", 10), class));
            }
        }
        v
    }

    fn count(v: &[LabeledClip], c: LabelClass) -> usize {
        v.iter().filter(|x| x.1 == c).count()
    }

    #[test]
    fn downsample_caps_at_three_times_anchor() {
        let input = with_counts(&[(Laughing, 358), (Canonical, 12000), (Crying, 900)]);
        let out = downsample(&input, &SamplingConfig::default()).unwrap();
        assert_eq!(count(&out, Laughing), 358);
        assert_eq!(count(&out, Canonical), 1074);
        assert_eq!(count(&out, Crying), 900);
        assert!(out.windows(2).all(|w| w[0].0.clip_id < w[1].0.clip_id));
    }

    #[test]
    fn downsample_identity_when_under_cap() {
        let input = with_counts(&[(Laughing, 10), (Junk, 30), (Crying, 5)]);
        let mut sorted = input.clone();
        sorted.sort_by(|a, b| a.0.clip_id.cmp(&b.0.clip_id));
        assert_eq!(downsample(&input, &SamplingConfig::default()).unwrap(), sorted);
    }

    #[test]
    fn downsample_keeps_table_one_shape() {
        // SM-C train counts: every class already at or under 3 * 3491
        let input = with_counts(&[
            (Crying, 9830),
            (Laughing, 3491),
            (Canonical, 9762),
            (NonCanonical, 9766),
            (Junk, 9838),
        ]);
        let out = downsample(&input, &SamplingConfig::default()).unwrap();
        assert_eq!(class_cap(3491, Fraction::from_integer(3)), 10473);
        assert_eq!(out.len(), input.len());
    }

    #[test]
    fn downsample_needs_anchor() {
        let input = with_counts(&[(Junk, 3)]);
        assert_eq!(
            downsample(&input, &SamplingConfig::default()).unwrap_err(),
            DatasetError::AnchorAbsent(Laughing)
        );
        assert_eq!(
            downsample(&[], &SamplingConfig::default()).unwrap_err(),
            DatasetError::Empty
        );
    }

    #[test]
    fn ceil_not_floor() {
        assert_eq!(class_cap(7, Fraction::new(1, 2)), 4);
        assert_eq!(class_cap(6, Fraction::new(1, 2)), 3);
    }

    fn uniform_corpus(children: usize, clips_each: usize) -> Vec<LabeledClip> {
        let mut v = Vec::new();
        for k in 0..children {
            for i in 0..clips_each {
                v.push((clip(&format!("k{k:03}-{i:03}"), &format!("k{k:03}"), "en", 20), Junk));
            }
        }
        v
    }

    #[test]
    fn uniform_children_split_exactly() {
        let out = split_children(&uniform_corpus(100, 100), &SplitConfig::default()).unwrap();
        let mut per_fold = [0; 3];
        for f in out.assignment.child_to_fold.values() {
            per_fold[f.index()] += 1;
        }
        assert_eq!(per_fold, [80, 10, 10]);
        assert_eq!(out.assignment.clip_counts(), [8000, 1000, 1000]);
    }

    #[test]
    fn three_children_one_per_fold() {
        let out = split_children(&uniform_corpus(3, 4), &SplitConfig::default()).unwrap();
        let folds: BTreeSet<Fold> = out.assignment.child_to_fold.values().copied().collect();
        assert_eq!(folds.len(), 3);
        assert_eq!(
            split_children(&uniform_corpus(2, 4), &SplitConfig::default()).unwrap_err(),
            DatasetError::TooFewChildren(2)
        );
    }

    #[test]
    fn ratios_must_sum_to_one() {
        let cfg = SplitConfig {
            ratios: [Fraction::new(8, 10), Fraction::new(1, 10), Fraction::new(2, 10)],
            ..Default::default()
        };
        assert!(matches!(
            split_children(&uniform_corpus(10, 1), &cfg),
            Err(DatasetError::BadRatios(_))
        ));
    }

    fn hinted(records: &[(&str, &str, Fold)]) -> Manifest {
        let mut m = Manifest::default();
        let mut hints = Vec::new();
        for &(id, child, fold) in records {
            m.clips.push(clip(id, child, "en", 10));
            hints.push(SplitRecord {
                clip_id: id.into(),
                fold,
            });
        }
        m.split_hint = Some(hints);
        m
    }

    #[test]
    fn hint_taken_verbatim() {
        let m = hinted(&[("a", "k1", Fold::Train), ("b", "k1", Fold::Train), ("c", "k2", Fold::Test)]);
        let out = apply_split_hint(&m).unwrap();
        assert!(out.violations.is_empty());
        assert_eq!(out.assignment.fold_of_clip("c"), Some(Fold::Test));
        assert_eq!(out.assignment.child_to_fold["k1"], Fold::Train);
    }

    #[test]
    fn hint_contradiction_reported() {
        let m = hinted(&[("a", "k1", Fold::Train), ("b", "k1", Fold::Dev)]);
        let out = apply_split_hint(&m).unwrap();
        assert_eq!(out.violations.len(), 1);
        assert!(out.violations[0].contains("k1"));
        // verbatim, not repaired
        assert_eq!(out.assignment.fold_of_clip("b"), Some(Fold::Dev));
    }

    #[test]
    fn hint_missing_record_is_error() {
        let mut m = hinted(&[("a", "k1", Fold::Train)]);
        m.clips.push(clip("z", "k2", "en", 10));
        assert_eq!(
            apply_split_hint(&m).unwrap_err(),
            DatasetError::MissingSplit(vec!["z".into()])
        );
    }

    #[test]
    fn babble_corpus_fold_totals() {
        // fixed BC split sizes: 3996 / 3617 / 3691 clips
        let mut recs = Vec::new();
        let ids: Vec<String> = (0..(3996 + 3617 + 3691)).map(|i| format!("bc{i:05}")).collect();
        let children: Vec<String> = (0..ids.len()).map(|i| format!("child{}", i / 100)).collect();
        for (i, id) in ids.iter().enumerate() {
            let fold = if i < 3996 {
                Fold::Train
            } else if i < 3996 + 3617 {
                Fold::Dev
            } else {
                Fold::Test
            };
            recs.push((id.as_str(), children[i].as_str(), fold));
        }
        let out = apply_split_hint(&hinted(&recs)).unwrap();
        assert_eq!(out.assignment.clip_counts(), [3996, 3617, 3691]);
        // children straddling fold boundaries are flagged, not moved
        assert_eq!(out.violations.len(), 2);
    }

    #[test]
    fn split_file_round_trip() {
        let out = split_children(&uniform_corpus(5, 2), &SplitConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_split(&out.assignment, &mut buf).unwrap();
        assert_eq!(read_split(&buf[..]).unwrap(), out.assignment);
        let first = String::from_utf8(buf).unwrap().lines().next().unwrap().to_string();
        assert!(first.starts_with("{\"child_id\":\"k000\""));
    }
}
