use serde::{Deserialize, Serialize};

use crate::label::{LabelClass, NUM_CLASSES};

use super::MetricsError;

/// Rows are reference classes, columns predicted classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn add(&mut self, reference: LabelClass, predicted: LabelClass) {
        self.counts[reference.index()][predicted.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, o) in self.counts.iter_mut().zip(&other.counts) {
            for (c, v) in row.iter_mut().zip(o) {
                *c += v;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: LabelClass) -> u64 {
        self.counts[class.index()].iter().sum()
    }

    pub fn recall(&self, class: LabelClass) -> Option<f64> {
        let s = self.support(class);
        (s > 0).then(|| self.counts[class.index()][class.index()] as f64 / s as f64)
    }
}

pub fn confusion<'a, I>(pairs: I) -> ConfusionMatrix
where
    I: IntoIterator<Item = &'a (LabelClass, LabelClass)>,
{
    let mut cm = ConfusionMatrix::default();
    for &(r, p) in pairs {
        cm.add(r, p);
    }
    cm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UarResult {
    /// Percent.
    pub uar: f64,
    /// `None` for classes without reference support.
    pub per_class_recall: [Option<f64>; NUM_CLASSES],
    pub zero_support: Vec<LabelClass>,
}

/// Mean recall over classes with nonzero support, in percent.
pub fn uar(cm: &ConfusionMatrix) -> Result<UarResult, MetricsError> {
    let per_class_recall = LabelClass::ALL.map(|c| cm.recall(c));
    let present: Vec<f64> = per_class_recall.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(MetricsError::NoSupport);
    }
    let zero_support = LabelClass::ALL
        .into_iter()
        .filter(|c| per_class_recall[c.index()].is_none())
        .collect();
    Ok(UarResult {
        uar: 100.0 * present.iter().sum::<f64>() / present.len() as f64,
        per_class_recall,
        zero_support,
    })
}
