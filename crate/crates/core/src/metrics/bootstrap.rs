use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub low: f64,
    pub high: f64,
    /// Sample standard deviation of the resample statistics.
    pub sd: f64,
    pub n_valid: usize,
    pub n_undefined: usize,
}

/// Linear interpolation between order statistics (`sorted` ascending).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap over items. Resample `r` draws its indices from
/// `SeededRng::substream(seed, r)`, so results do not depend on thread
/// scheduling. Resamples where `statistic` returns `None` are skipped.
pub fn bootstrap_ci<T, F>(items: &[T], statistic: F, cfg: &BootstrapConfig) -> Result<BootstrapCi, MetricsError>
where
    T: Clone + Sync,
    F: Fn(&[T]) -> Option<f64> + Sync,
{
    if items.is_empty() {
        return Err(MetricsError::NoItems);
    }
    if cfg.resamples == 0 || !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(MetricsError::Bootstrap("need resamples >= 1 and 0 < level < 1".into()));
    }
    let n = items.len();
    let stats: Vec<Option<f64>> = (0..cfg.resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = SeededRng::substream(cfg.seed, r);
            let sample: Vec<T> = (0..n).map(|_| items[rng.index(n)].clone()).collect();
            statistic(&sample).filter(|v| v.is_finite())
        })
        .collect();
    let mut valid: Vec<f64> = stats.into_iter().flatten().collect();
    let n_undefined = cfg.resamples - valid.len();
    if 2 * n_undefined > cfg.resamples || valid.is_empty() {
        return Err(MetricsError::Bootstrap(format!(
            "{n_undefined} of {} resamples undefined",
            cfg.resamples
        )));
    }
    valid.sort_by(f64::total_cmp);
    let alpha = (1.0 - cfg.level) / 2.0;
    let (_, sd) = super::kappa::mean_sd(&valid);
    Ok(BootstrapCi {
        low: quantile(&valid, alpha),
        high: quantile(&valid, 1.0 - alpha),
        sd,
        n_valid: valid.len(),
        n_undefined,
    })
}
