use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::label::{LabelClass, NUM_CLASSES};
use crate::manifest::Annotation;

use super::MetricsError;

/// Symmetric disagreement costs with a zero diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    d: [[f64; NUM_CLASSES]; NUM_CLASSES],
}

impl WeightMatrix {
    pub fn new(d: [[f64; NUM_CLASSES]; NUM_CLASSES]) -> Result<Self, MetricsError> {
        for i in 0..NUM_CLASSES {
            if d[i][i] != 0.0 {
                return Err(MetricsError::Weights(format!("diagonal entry {i} is not 0")));
            }
            for j in 0..NUM_CLASSES {
                if d[i][j] != d[j][i] {
                    return Err(MetricsError::Weights(format!("not symmetric at ({i},{j})")));
                }
                if i != j && !(d[i][j] > 0.0 && d[i][j] <= 1.0) {
                    return Err(MetricsError::Weights(format!(
                        "off-diagonal ({i},{j}) = {} outside (0, 1]",
                        d[i][j]
                    )));
                }
            }
        }
        Ok(Self { d })
    }

    /// Every disagreement costs 1.
    pub fn uniform() -> Self {
        let mut d = [[1.0; NUM_CLASSES]; NUM_CLASSES];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        Self { d }
    }

    pub fn get(&self, a: LabelClass, b: LabelClass) -> f64 {
        self.d[a.index()][b.index()]
    }

    pub fn as_array(&self) -> &[[f64; NUM_CLASSES]; NUM_CLASSES] {
        &self.d
    }

    /// Parses a cost table. The header names the column classes; each row
    /// may start with its class name, otherwise rows follow the header order.
    ///
    /// ```text
    /// label,crying,laughing,canonical,non_canonical,junk
    /// crying,0,0.5,0.75,0.75,0.5
    /// ...
    /// ```
    pub fn parse(text: &str) -> Result<Self, MetricsError> {
        let bad = |m: String| MetricsError::Weights(m);
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("empty weight file".into()))?
            .split(',')
            .map(str::trim)
            .collect();
        let names = match header.len() {
            NUM_CLASSES => &header[..],
            n if n == NUM_CLASSES + 1 => &header[1..],
            n => return Err(bad(format!("header has {n} fields"))),
        };
        let cols: Vec<LabelClass> = names
            .iter()
            .map(|n| n.parse().map_err(|e| bad(format!("{e}"))))
            .collect::<Result<_, _>>()?;
        let mut seen = [false; NUM_CLASSES];
        for c in &cols {
            if std::mem::replace(&mut seen[c.index()], true) {
                return Err(bad(format!("class `{c}` repeated in header")));
            }
        }
        let mut d = [[f64::NAN; NUM_CLASSES]; NUM_CLASSES];
        let mut rows_seen = [false; NUM_CLASSES];
        for (r, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let (row_class, values) = match fields.len() {
                NUM_CLASSES => (*cols.get(r).ok_or_else(|| bad("too many rows".into()))?, &fields[..]),
                n if n == NUM_CLASSES + 1 => (
                    fields[0].parse::<LabelClass>().map_err(|e| bad(format!("{e}")))?,
                    &fields[1..],
                ),
                n => return Err(bad(format!("row {} has {n} fields", r + 1))),
            };
            if std::mem::replace(&mut rows_seen[row_class.index()], true) {
                return Err(bad(format!("row for `{row_class}` repeated")));
            }
            for (c, v) in cols.iter().zip(values) {
                d[row_class.index()][c.index()] = v
                    .parse()
                    .map_err(|_| bad(format!("bad cost `{v}` in row `{row_class}`")))?;
            }
        }
        if rows_seen.iter().any(|s| !s) {
            return Err(bad("expected 5 rows".into()));
        }
        Self::new(d)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("label");
        for c in LabelClass::ALL {
            write!(s, ",{c}").unwrap();
        }
        s.push('\n');
        for r in LabelClass::ALL {
            s.push_str(r.as_str());
            for c in LabelClass::ALL {
                write!(s, ",{}", self.get(r, c)).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Canonical vs non-canonical disagreements cost most, speech vs
/// non-speech less, and confusions among crying, laughing and junk least.
impl Default for WeightMatrix {
    fn default() -> Self {
        use LabelClass::*;
        let speech = |c: LabelClass| matches!(c, Canonical | NonCanonical);
        let mut d = [[0.0; NUM_CLASSES]; NUM_CLASSES];
        for a in LabelClass::ALL {
            for b in LabelClass::ALL {
                d[a.index()][b.index()] = if a == b {
                    0.0
                } else if speech(a) && speech(b) {
                    1.0
                } else if speech(a) || speech(b) {
                    0.75
                } else {
                    0.5
                };
            }
        }
        Self { d }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaMethod {
    FleissWeighted,
    CohenWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub method: KappaMethod,
    pub kappa: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub sd: Option<f64>,
    pub n_items: usize,
    /// Items dropped for having fewer than two annotations.
    pub n_excluded: usize,
    pub observed_disagreement: f64,
    pub expected_disagreement: f64,
}

pub type LabelCounts = [u32; NUM_CLASSES];

pub fn counts_total(c: &LabelCounts) -> u32 {
    c.iter().sum()
}

/// Kappa from per-item label counts. Observed disagreement averages, over
/// items, the mean cost of an unordered pair of that item's annotations;
/// expected disagreement uses the pooled label distribution.
pub fn weighted_fleiss_kappa<T: Borrow<LabelCounts>>(
    items: &[T],
    d: &WeightMatrix,
) -> Result<KappaResult, MetricsError> {
    let mut observed = 0.0;
    let mut pooled = [0u64; NUM_CLASSES];
    let mut n_items = 0usize;
    for item in items {
        let c = item.borrow();
        let n = counts_total(c) as f64;
        if n < 2.0 {
            continue;
        }
        n_items += 1;
        let mut s = 0.0;
        for j in 0..NUM_CLASSES {
            pooled[j] += c[j] as u64;
            for k in 0..NUM_CLASSES {
                if j != k {
                    s += c[j] as f64 * c[k] as f64 * d.d[j][k];
                }
            }
        }
        observed += s / (n * (n - 1.0));
    }
    let n_excluded = items.len() - n_items;
    if n_items == 0 {
        return Err(MetricsError::NoItems);
    }
    let observed = observed / n_items as f64;
    let total: u64 = pooled.iter().sum();
    let p = pooled.map(|v| v as f64 / total as f64);
    let expected = expected_disagreement(&p, &p, d);
    finish(KappaMethod::FleissWeighted, observed, expected, n_items, n_excluded)
}

fn expected_disagreement(pa: &[f64; NUM_CLASSES], pb: &[f64; NUM_CLASSES], d: &WeightMatrix) -> f64 {
    let mut e = 0.0;
    for j in 0..NUM_CLASSES {
        for k in 0..NUM_CLASSES {
            e += pa[j] * pb[k] * d.d[j][k];
        }
    }
    e
}

fn finish(
    method: KappaMethod,
    observed: f64,
    expected: f64,
    n_items: usize,
    n_excluded: usize,
) -> Result<KappaResult, MetricsError> {
    if expected <= 0.0 {
        return Err(MetricsError::UndefinedKappa { observed });
    }
    Ok(KappaResult {
        method,
        kappa: 1.0 - observed / expected,
        ci_low: None,
        ci_high: None,
        sd: None,
        n_items,
        n_excluded,
        observed_disagreement: observed,
        expected_disagreement: expected,
    })
}

pub fn weighted_cohen_kappa(
    pairs: &[(LabelClass, LabelClass)],
    d: &WeightMatrix,
) -> Result<KappaResult, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::NoItems);
    }
    let n = pairs.len() as f64;
    let mut joint = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    let mut ma = [0u64; NUM_CLASSES];
    let mut mb = [0u64; NUM_CLASSES];
    for &(a, b) in pairs {
        joint[a.index()][b.index()] += 1;
        ma[a.index()] += 1;
        mb[b.index()] += 1;
    }
    let mut observed = 0.0;
    for j in 0..NUM_CLASSES {
        for k in 0..NUM_CLASSES {
            observed += joint[j][k] as f64 / n * d.d[j][k];
        }
    }
    let expected = expected_disagreement(&ma.map(|v| v as f64 / n), &mb.map(|v| v as f64 / n), d);
    finish(KappaMethod::CohenWeighted, observed, expected, pairs.len(), 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementMode {
    /// One kappa per annotator, summarized by mean and SD.
    #[default]
    Grouped,
    /// A single kappa over every (prediction, annotation) pair.
    Pooled,
}

impl std::str::FromStr for AgreementMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grouped" => Ok(Self::Grouped),
            "pooled" => Ok(Self::Pooled),
            _ => Err(format!("unknown agreement mode `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorKappa {
    pub annotator_id: String,
    pub n_pairs: usize,
    /// `None` when the annotator falls below `min_pairs` or the kappa is
    /// undefined for their pairs.
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAgreement {
    pub mode: AgreementMode,
    pub mean_kappa: f64,
    /// Sample standard deviation across qualifying annotators (n - 1
    /// denominator); 0 with a single annotator or in pooled mode.
    pub sd: f64,
    pub n_annotators: usize,
    pub per_annotator: Vec<AnnotatorKappa>,
}

/// Agreement between model predictions and each annotator's labels on the
/// predicted clips. Annotations of clips without a prediction are ignored.
pub fn model_vs_annotators(
    predictions: &BTreeMap<String, LabelClass>,
    annotations: &[Annotation],
    d: &WeightMatrix,
    min_pairs: usize,
    mode: AgreementMode,
) -> Result<ModelAgreement, MetricsError> {
    let mut by_annotator: BTreeMap<&str, Vec<(LabelClass, LabelClass)>> = BTreeMap::new();
    for a in annotations {
        if let Some(&p) = predictions.get(&a.clip_id) {
            by_annotator.entry(&a.annotator_id).or_default().push((p, a.label));
        }
    }
    let mut per_annotator = Vec::with_capacity(by_annotator.len());
    let mut kappas = Vec::new();
    let mut pooled = Vec::new();
    for (id, pairs) in &by_annotator {
        let kappa = if pairs.len() >= min_pairs {
            pooled.extend_from_slice(pairs);
            weighted_cohen_kappa(pairs, d).ok().map(|k| k.kappa)
        } else {
            None
        };
        kappas.extend(kappa);
        per_annotator.push(AnnotatorKappa {
            annotator_id: id.to_string(),
            n_pairs: pairs.len(),
            kappa,
        });
    }
    let (mean_kappa, sd, n_annotators) = match mode {
        AgreementMode::Grouped => {
            if kappas.is_empty() {
                return Err(MetricsError::NoQualifyingAnnotator { min_pairs });
            }
            let (mean, sd) = mean_sd(&kappas);
            (mean, sd, kappas.len())
        }
        AgreementMode::Pooled => {
            if pooled.is_empty() {
                return Err(MetricsError::NoQualifyingAnnotator { min_pairs });
            }
            let n = per_annotator.iter().filter(|a| a.n_pairs >= min_pairs).count();
            (weighted_cohen_kappa(&pooled, d)?.kappa, 0.0, n)
        }
    };
    Ok(ModelAgreement {
        mode,
        mean_kappa,
        sd,
        n_annotators,
        per_annotator,
    })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Keeps items annotated by at most `max_annotators` people.
pub fn filter_by_annotator_count<T: Borrow<LabelCounts> + Clone>(
    items: &[T],
    max_annotators: u32,
) -> Vec<T> {
    items
        .iter()
        .filter(|c| counts_total((*c).borrow()) <= max_annotators)
        .cloned()
        .collect()
}
