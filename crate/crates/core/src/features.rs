//! Clip-level feature vectors.
//!
//! `logmel_stats` computes a log mel spectrogram over the fixed-length
//! clip and summarizes each band by its mean and standard deviation over
//! time. `imported_embedding` vectors come from an external model through
//! the embedding file (header `clip_id,dim=D`, then one
//! `clip_id,v1,...,vD` line per clip).

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioClip, CLIP_LEN, TARGET_RATE_HZ};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    LogmelStats,
    ImportedEmbedding,
}

impl std::str::FromStr for FeatureKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logmel_stats" => Ok(Self::LogmelStats),
            "imported_embedding" => Ok(Self::ImportedEmbedding),
            _ => Err(format!("unknown feature kind `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub n_mels: usize,
    pub window_ms: u32,
    pub hop_ms: u32,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            kind: FeatureKind::LogmelStats,
            n_mels: 40,
            window_ms: 25,
            hop_ms: 10,
            fmin_hz: 20.0,
            fmax_hz: 8000.0,
            log_floor: 1e-6,
        }
    }
}

impl FeatureConfig {
    pub fn window_len(&self) -> usize {
        (TARGET_RATE_HZ as usize * self.window_ms as usize) / 1000
    }

    pub fn hop_len(&self) -> usize {
        (TARGET_RATE_HZ as usize * self.hop_ms as usize) / 1000
    }

    pub fn dim(&self) -> usize {
        2 * self.n_mels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub clip_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid feature config: {0}")]
    Config(String),
    #[error("clip has {0} samples, expected {CLIP_LEN}")]
    ClipLength(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad embedding header `{0}` (expected `clip_id,dim=D`)")]
    Header(String),
    #[error("line {line}: clip `{clip_id}` has {got} values, expected {expected}")]
    Ragged {
        line: usize,
        clip_id: String,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: clip `{clip_id}` has a non-finite or unparsable value `{token}`")]
    BadValue {
        line: usize,
        clip_id: String,
        token: String,
    },
    #[error("line {line}: duplicate clip `{clip_id}`")]
    Duplicate { line: usize, clip_id: String },
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filter corner frequencies: `n_mels + 2` points evenly spaced
/// on the mel scale from `fmin` to `fmax`. Filter `m` rises from point `m`
/// to a peak at point `m + 1` and falls to zero at point `m + 2`.
pub fn mel_points_hz(cfg: &FeatureConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.fmin_hz);
    let hi = hz_to_mel(cfg.fmax_hz);
    let n = cfg.n_mels + 1;
    (0..=n)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / n as f64))
        .collect()
}

/// Log-mel statistics extractor with a cached FFT plan and filterbank.
pub struct LogMelExtractor {
    cfg: FeatureConfig,
    n_fft: usize,
    window: Vec<f64>,
    /// per band: (first bin, weights)
    filters: Vec<(usize, Vec<f64>)>,
    fft: Arc<dyn Fft<f64>>,
}

impl LogMelExtractor {
    pub fn new(cfg: &FeatureConfig) -> Result<Self, FeatureError> {
        let nyquist = TARGET_RATE_HZ as f64 / 2.0;
        if cfg.n_mels == 0 {
            return Err(FeatureError::Config("n_mels must be at least 1".into()));
        }
        if !(cfg.fmin_hz >= 0.0 && cfg.fmin_hz < cfg.fmax_hz && cfg.fmax_hz <= nyquist) {
            return Err(FeatureError::Config(format!(
                "need 0 <= fmin < fmax <= {nyquist} Hz"
            )));
        }
        let win = cfg.window_len();
        if win == 0 || cfg.hop_len() == 0 || win > CLIP_LEN {
            return Err(FeatureError::Config("bad window or hop length".into()));
        }
        if !(cfg.log_floor > 0.0) {
            return Err(FeatureError::Config("log_floor must be positive".into()));
        }
        let n_fft = win.next_power_of_two();
        // periodic Hann
        let window = (0..win)
            .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / win as f64).cos())
            .collect();
        let points = mel_points_hz(cfg);
        let bin_hz = TARGET_RATE_HZ as f64 / n_fft as f64;
        let n_bins = n_fft / 2 + 1;
        let filters = (0..cfg.n_mels)
            .map(|m| {
                let (l, c, r) = (points[m], points[m + 1], points[m + 2]);
                let weights: Vec<(usize, f64)> = (0..n_bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > l && f <= c {
                            (f - l) / (c - l)
                        } else if f > c && f < r {
                            (r - f) / (r - c)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                let start = weights.first().map_or(0, |&(k, _)| k);
                (start, weights.into_iter().map(|(_, w)| w).collect())
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Ok(Self {
            cfg: cfg.clone(),
            n_fft,
            window,
            filters,
            fft,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    /// Log mel energies, one row per frame.
    pub fn log_mel(&self, samples: &[f64]) -> Vec<Vec<f64>> {
        let win = self.window.len();
        let hop = self.cfg.hop_len();
        let n_frames = 1 + (samples.len().saturating_sub(win)) / hop;
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        let mut mag = vec![0.0; self.n_fft / 2 + 1];
        let mut frames = Vec::with_capacity(n_frames);
        for t in 0..n_frames {
            let frame = &samples[t * hop..t * hop + win];
            for (i, b) in buf.iter_mut().enumerate() {
                *b = if i < win {
                    Complex::new(frame[i] * self.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut buf);
            for (m, b) in mag.iter_mut().zip(&buf) {
                *m = b.norm();
            }
            frames.push(
                self.filters
                    .iter()
                    .map(|(start, w)| {
                        let e: f64 = w.iter().zip(&mag[*start..]).map(|(a, b)| a * b).sum();
                        (e + self.cfg.log_floor).ln()
                    })
                    .collect(),
            );
        }
        frames
    }

    /// Per-band time mean followed by per-band time standard deviation.
    pub fn extract(&self, clip: &AudioClip) -> Result<Vec<f64>, FeatureError> {
        let s = clip.samples();
        if s.len() != CLIP_LEN {
            return Err(FeatureError::ClipLength(s.len()));
        }
        let frames = self.log_mel(s);
        let t = frames.len() as f64;
        let n = self.cfg.n_mels;
        let mut out = vec![0.0; 2 * n];
        for band in 0..n {
            // shifted two-pass moments: exact zero spread for constant bands
            let shift = frames[0][band];
            let mean_d = frames.iter().map(|f| f[band] - shift).sum::<f64>() / t;
            let var = frames
                .iter()
                .map(|f| (f[band] - shift - mean_d).powi(2))
                .sum::<f64>()
                / t;
            out[band] = shift + mean_d;
            out[n + band] = var.sqrt();
        }
        Ok(out)
    }
}

pub fn extract_features(
    clip_id: &str,
    clip: &AudioClip,
    cfg: &FeatureConfig,
) -> Result<FeatureVector, FeatureError> {
    let ex = LogMelExtractor::new(cfg)?;
    Ok(FeatureVector {
        clip_id: clip_id.to_string(),
        values: ex.extract(clip)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub vectors: Vec<FeatureVector>,
}

pub fn read_embeddings<R: BufRead>(r: R) -> Result<EmbeddingSet, FeatureError> {
    let mut lines = r.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) => {
                let l = l?;
                if !l.trim().is_empty() {
                    break l;
                }
            }
            None => return Err(FeatureError::Header(String::new())),
        }
    };
    let dim: usize = header
        .trim()
        .strip_prefix("clip_id,dim=")
        .and_then(|d| d.parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| FeatureError::Header(header.clone()))?;

    let mut seen = HashSet::new();
    let mut vectors = Vec::new();
    for (i, line) in lines {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let clip_id = fields.next().unwrap_or_default().trim().to_string();
        let tokens: Vec<&str> = fields.collect();
        if tokens.len() != dim {
            return Err(FeatureError::Ragged {
                line: line_no,
                clip_id,
                expected: dim,
                got: tokens.len(),
            });
        }
        let mut values = Vec::with_capacity(dim);
        for tok in tokens {
            match tok.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(FeatureError::BadValue {
                        line: line_no,
                        clip_id,
                        token: tok.trim().to_string(),
                    })
                }
            }
        }
        if !seen.insert(clip_id.clone()) {
            return Err(FeatureError::Duplicate {
                line: line_no,
                clip_id,
            });
        }
        vectors.push(FeatureVector { clip_id, values });
    }
    Ok(EmbeddingSet { dim, vectors })
}

/// Values are written in shortest round-trip decimal form.
pub fn write_embeddings<W: Write>(set: &EmbeddingSet, mut w: W) -> std::io::Result<()> {
    writeln!(w, "clip_id,dim={}", set.dim)?;
    for v in &set.vectors {
        w.write_all(v.clip_id.as_bytes())?;
        for x in &v.values {
            write!(w, ",{x}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}
