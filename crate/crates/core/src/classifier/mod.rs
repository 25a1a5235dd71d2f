//! Five-way vocalization classifier over clip-level feature vectors.

mod mlp;
mod model_file;
mod train;

pub use mlp::{argmax, log_softmax, softmax, Mlp};
pub use model_file::{read_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use train::{train, Optimizer, TrainConfig};

use std::io::{BufRead, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureConfig, FeatureVector};
use crate::label::{LabelClass, NUM_CLASSES};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("class `{0}` is absent from the training set")]
    MissingClass(LabelClass),
    #[error("clip `{clip_id}` has dimension {got}, expected {expected}")]
    Dimension {
        clip_id: String,
        expected: usize,
        got: usize,
    },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad model file: {0}")]
    Format(String),
    #[error("bad predictions file, line {line}: {msg}")]
    Predictions { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Percent.
    pub dev_uar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub feature_config: FeatureConfig,
    /// Per-dimension standardization applied before the network:
    /// `(x - shift) / scale`.
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub mlp: Mlp,
    pub training_log: Vec<EpochLog>,
    /// 1-based epoch whose weights were kept.
    pub selected_epoch: usize,
}

impl ClassifierModel {
    /// Wraps a network with identity standardization and no training log.
    pub fn from_mlp(feature_config: FeatureConfig, mlp: Mlp) -> Self {
        let d = mlp.dim();
        Self {
            feature_config,
            input_shift: vec![0.0; d],
            input_scale: vec![1.0; d],
            mlp,
            training_log: Vec::new(),
            selected_epoch: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mlp.dim()
    }

    pub fn logits(&self, features: &[FeatureVector]) -> Result<Array2<f64>, ClassifierError> {
        let x = self.design_matrix(features)?;
        Ok(self.mlp.logits(x.view()))
    }

    pub(crate) fn design_matrix(&self, features: &[FeatureVector]) -> Result<Array2<f64>, ClassifierError> {
        standardized(features, self.dim(), &self.input_shift, &self.input_scale)
    }
}

pub(crate) fn standardized(
    features: &[FeatureVector],
    dim: usize,
    shift: &[f64],
    scale: &[f64],
) -> Result<Array2<f64>, ClassifierError> {
    let mut x = Array2::zeros((features.len(), dim));
    for (mut row, f) in x.outer_iter_mut().zip(features) {
        if f.values.len() != dim {
            return Err(ClassifierError::Dimension {
                clip_id: f.clip_id.clone(),
                expected: dim,
                got: f.values.len(),
            });
        }
        for (j, v) in f.values.iter().enumerate() {
            row[j] = (v - shift[j]) / scale[j];
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub clip_id: String,
    pub scores: [f64; NUM_CLASSES],
    pub predicted: LabelClass,
}

pub fn predict(model: &ClassifierModel, features: &[FeatureVector]) -> Result<Vec<PredictionRecord>, ClassifierError> {
    let z = model.logits(features)?;
    Ok(features
        .iter()
        .zip(z.outer_iter())
        .map(|(f, row)| {
            let p = softmax(row.as_slice().expect("contiguous logits"));
            PredictionRecord {
                clip_id: f.clip_id.clone(),
                scores: [p[0], p[1], p[2], p[3], p[4]],
                predicted: LabelClass::from_index(argmax(&p)).expect("five classes"),
            }
        })
        .collect())
}

pub fn write_predictions<W: Write>(preds: &[PredictionRecord], mut w: W) -> std::io::Result<()> {
    for p in preds {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_predictions<R: BufRead>(r: R) -> Result<Vec<PredictionRecord>, ClassifierError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PredictionRecord = serde_json::from_str(&line).map_err(|e| ClassifierError::Predictions {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(p);
    }
    Ok(out)
}
