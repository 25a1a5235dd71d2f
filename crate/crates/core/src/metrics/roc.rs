use serde::{Deserialize, Serialize};

use crate::label::{LabelClass, NUM_CLASSES};

use super::MetricsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub class: LabelClass,
    /// (false-positive rate, true-positive rate), from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Threshold sweep over distinct scores in descending order, tied scores
/// forming a single step, with the area by the trapezoid rule.
pub fn roc_points(scored: &[(f64, bool)]) -> Result<(Vec<(f64, f64)>, f64), MetricsError> {
    if scored.iter().any(|(s, _)| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore);
    }
    let pos = scored.iter().filter(|(_, p)| *p).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        let (tp0, fp0) = (tp, fp);
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // trapezoid in count units, normalized once at the end
        auc += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok((points, auc / (pos as f64 * neg as f64)))
}

pub fn roc_auc(class: LabelClass, scored: &[(f64, bool)]) -> Result<RocCurve, MetricsError> {
    let (points, auc) = roc_points(scored)?;
    Ok(RocCurve { class, points, auc })
}

/// One-vs-rest curves from per-clip score vectors and gold labels. Classes
/// without both positives and negatives get `None`.
pub fn one_vs_rest(
    scores: &[[f64; NUM_CLASSES]],
    gold: &[LabelClass],
) -> Result<[Option<RocCurve>; NUM_CLASSES], MetricsError> {
    if scores.len() != gold.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), gold.len()));
    }
    let mut out: [Option<RocCurve>; NUM_CLASSES] = Default::default();
    for c in LabelClass::ALL {
        let scored: Vec<(f64, bool)> = scores
            .iter()
            .zip(gold)
            .map(|(s, &g)| (s[c.index()], g == c))
            .collect();
        out[c.index()] = match roc_auc(c, &scored) {
            Ok(r) => Some(r),
            Err(MetricsError::SingleClass) => None,
            Err(e) => return Err(e),
        };
    }
    Ok(out)
}
