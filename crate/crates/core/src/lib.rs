//! Toolkit for child vocalization maturity corpora: manifest handling,
//! crowdsourced label aggregation, class rebalancing, child-disjoint
//! splits, audio normalization, a small trainable classifier and the
//! evaluation and agreement statistics used to report on it.

pub mod aggregate;
pub mod audio;
pub mod classifier;
pub mod dataset;
pub mod features;
pub mod fsutil;
pub mod fraction;
pub mod label;
pub mod manifest;
pub mod metrics;
pub mod report;
pub mod rng;

pub use label::{Environment, Fold, LabelClass, NUM_CLASSES};
pub use manifest::{Annotation, ClipRecord, Manifest};
