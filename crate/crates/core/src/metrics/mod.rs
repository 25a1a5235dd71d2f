//! Evaluation and agreement statistics.

mod bootstrap;
mod confusion;
mod kappa;
mod roc;

pub use bootstrap::{bootstrap_ci, quantile, BootstrapCi, BootstrapConfig};
pub use confusion::{confusion, uar, ConfusionMatrix, UarResult};
pub use kappa::{
    counts_total, filter_by_annotator_count, mean_sd, model_vs_annotators, weighted_cohen_kappa,
    weighted_fleiss_kappa, AgreementMode, AnnotatorKappa, KappaMethod, KappaResult, LabelCounts,
    ModelAgreement, WeightMatrix,
};
pub use roc::{one_vs_rest, roc_auc, roc_points, RocCurve};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no class has reference support")]
    NoSupport,
    #[error("ROC needs at least one positive and one negative")]
    SingleClass,
    #[error("non-finite score")]
    NonFiniteScore,
    #[error("{0} score rows but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("no items to evaluate")]
    NoItems,
    #[error("kappa undefined: expected disagreement is 0 (observed disagreement {observed})")]
    UndefinedKappa { observed: f64 },
    #[error("no annotator has at least {min_pairs} annotated clips in the prediction set")]
    NoQualifyingAnnotator { min_pairs: usize },
    #[error("invalid weight matrix: {0}")]
    Weights(String),
    #[error("bootstrap failed: {0}")]
    Bootstrap(String),
}
