use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureConfig, FeatureVector};
use crate::label::{LabelClass, NUM_CLASSES};
use crate::metrics::{uar, ConfusionMatrix};
use crate::rng::SeededRng;

use super::{argmax, standardized, ClassifierError, ClassifierModel, EpochLog, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    SgdMomentum,
    AdaptiveMoments,
}

impl std::str::FromStr for Optimizer {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sgd_momentum" => Ok(Self::SgdMomentum),
            "adaptive_moments" | "adam" => Ok(Self::AdaptiveMoments),
            _ => Err(format!("unknown optimizer `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Heavy-ball coefficient for `sgd_momentum` (0 gives plain SGD).
    pub momentum: f64,
    pub hidden_units: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Z-score each input dimension with training-set statistics.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 10,
            learning_rate: 1e-2,
            momentum: 0.9,
            hidden_units: 256,
            seed: 0,
            optimizer: Optimizer::SgdMomentum,
            standardize: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        Ok(())
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct OptState {
    kind: Optimizer,
    lr: f64,
    momentum: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptState {
    fn new(cfg: &TrainConfig, n: usize) -> Self {
        Self {
            kind: cfg.optimizer,
            lr: cfg.learning_rate,
            momentum: cfg.momentum,
            m: vec![0.0; n],
            v: vec![0.0; if cfg.optimizer == Optimizer::AdaptiveMoments { n } else { 0 }],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        match self.kind {
            Optimizer::SgdMomentum => {
                for ((p, g), m) in params.iter_mut().zip(grad).zip(&mut self.m) {
                    *m = self.momentum * *m + g;
                    *p -= self.lr * *m;
                }
            }
            Optimizer::AdaptiveMoments => {
                let c1 = 1.0 - ADAM_BETA1.powi(self.t);
                let c2 = 1.0 - ADAM_BETA2.powi(self.t);
                for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

fn check_set(
    set: &[(FeatureVector, LabelClass)],
    name: &'static str,
    dim: usize,
) -> Result<(), ClassifierError> {
    if set.is_empty() {
        return Err(ClassifierError::EmptySet(name));
    }
    for (f, _) in set {
        if f.values.len() != dim {
            return Err(ClassifierError::Dimension {
                clip_id: f.clip_id.clone(),
                expected: dim,
                got: f.values.len(),
            });
        }
    }
    Ok(())
}

fn moments(set: &[(FeatureVector, LabelClass)], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = set.len() as f64;
    let mut mean = vec![0.0; dim];
    for (f, _) in set {
        for (m, v) in mean.iter_mut().zip(&f.values) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for (f, _) in set {
        for ((s, v), m) in var.iter_mut().zip(&f.values).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

fn dev_uar(mlp: &Mlp, x: &Array2<f64>, y: &[usize]) -> f64 {
    let z = mlp.logits(x.view());
    let mut cm = ConfusionMatrix::default();
    for (row, &t) in z.outer_iter().zip(y) {
        let p = argmax(row.as_slice().expect("contiguous logits"));
        cm.counts[t][p] += 1;
    }
    uar(&cm).map(|r| r.uar).unwrap_or(0.0)
}

/// Mini-batch training with a fresh seeded shuffle every epoch. The model
/// returned carries the weights of the first epoch with the highest dev UAR.
pub fn train(
    train_set: &[(FeatureVector, LabelClass)],
    dev_set: &[(FeatureVector, LabelClass)],
    feature_config: &FeatureConfig,
    cfg: &TrainConfig,
) -> Result<ClassifierModel, ClassifierError> {
    cfg.validate()?;
    let dim = train_set
        .first()
        .ok_or(ClassifierError::EmptySet("train"))?
        .0
        .values
        .len();
    check_set(train_set, "train", dim)?;
    check_set(dev_set, "dev", dim)?;
    let mut present = [false; NUM_CLASSES];
    for (_, y) in train_set {
        present[y.index()] = true;
    }
    if let Some(c) = LabelClass::ALL.into_iter().find(|c| !present[c.index()]) {
        return Err(ClassifierError::MissingClass(c));
    }

    let (shift, scale) = if cfg.standardize {
        moments(train_set, dim)
    } else {
        (vec![0.0; dim], vec![1.0; dim])
    };
    let split = |set: &[(FeatureVector, LabelClass)]| -> Result<_, ClassifierError> {
        let feats: Vec<FeatureVector> = set.iter().map(|(f, _)| f.clone()).collect();
        let x = standardized(&feats, dim, &shift, &scale)?;
        let y: Vec<usize> = set.iter().map(|(_, c)| c.index()).collect();
        Ok((x, y))
    };
    let (x_train, y_train) = split(train_set)?;
    let (x_dev, y_dev) = split(dev_set)?;

    let mut rng = SeededRng::new(cfg.seed);
    let mut mlp = Mlp::init(dim, cfg.hidden_units, &mut rng);
    let mut opt = OptState::new(cfg, mlp.params().len());
    let mut grad = vec![0.0; mlp.params().len()];
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut xb = Array2::<f64>::zeros((0, dim));
    let mut yb = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            if xb.nrows() != idx.len() {
                xb = Array2::zeros((idx.len(), dim));
            }
            yb.clear();
            for (mut row, &i) in xb.outer_iter_mut().zip(idx) {
                row.assign(&x_train.row(i));
                yb.push(y_train[i]);
            }
            let loss = mlp.loss_and_grad(xb.view(), &yb, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ClassifierError::NonFiniteLoss { epoch, batch: b + 1 });
            }
            opt.step(mlp.params_mut(), &grad);
        }
        let train_loss = mlp.loss(x_train.view(), &y_train);
        if !train_loss.is_finite() {
            return Err(ClassifierError::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
            });
        }
        let uar = dev_uar(&mlp, &x_dev, &y_dev);
        log.push(EpochLog {
            epoch,
            train_loss,
            dev_uar: uar,
        });
        if best.as_ref().is_none_or(|(u, _, _)| uar > *u) {
            best = Some((uar, epoch, mlp.params().to_vec()));
        }
    }

    let (_, selected_epoch, params) = best.expect("at least one epoch");
    Ok(ClassifierModel {
        feature_config: feature_config.clone(),
        input_shift: shift,
        input_scale: scale,
        mlp: Mlp::from_params(dim, cfg.hidden_units, params).expect("same layout"),
        training_log: log,
        selected_epoch,
    })
}
