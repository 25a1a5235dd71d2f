//! Audio normalization to the fixed model input: mono mixdown,
//! resampling to 16 kHz and centre zero-padding to 9217 samples.

mod clipfile;
mod resample;
mod wav;

pub use clipfile::{read_clip_file, write_clip_file, ClipFileError, CLIP_FILE_MAGIC, CLIP_FILE_VERSION};
pub use resample::{resample_to_16k, Resampler, KAISER_BETA, ROLLOFF, ZERO_CROSSINGS};
pub use wav::{decode_wav, read_wav};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TARGET_RATE_HZ: u32 = 16_000;
/// Longest clip after mixdown and resampling; every model input has this length.
pub const CLIP_LEN: usize = 9217;
pub const MIN_SOURCE_RATE_HZ: u32 = 8_000;
pub const MAX_SOURCE_RATE_HZ: u32 = 192_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RawAudio {
    /// One buffer per channel, all the same length.
    pub channels: Vec<Vec<f64>>,
    pub sample_rate_hz: u32,
}

impl RawAudio {
    pub fn mono(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        Self {
            channels: vec![samples],
            sample_rate_hz,
        }
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples of a single-channel signal.
    pub fn samples(&self) -> Result<&[f64], AudioError> {
        match self.channels.as_slice() {
            [only] => Ok(only),
            _ => Err(AudioError::NotMono(self.channels.len())),
        }
    }
}

/// A model-ready clip: exactly [`CLIP_LEN`] samples at 16 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>) -> Result<Self, AudioError> {
        if samples.len() != CLIP_LEN {
            return Err(AudioError::WrongClipLength(samples.len()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowPolicy {
    #[default]
    Error,
    /// Keep the centred `CLIP_LEN` samples.
    Crop,
}

impl std::str::FromStr for OverflowPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "error" => Ok(Self::Error),
            "crop" => Ok(Self::Crop),
            _ => Err(format!("unknown overflow policy `{s}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("audio has no channels")]
    NoChannels,
    #[error("audio has no samples")]
    Empty,
    #[error("channels have unequal lengths")]
    RaggedChannels,
    #[error("expected mono audio, got {0} channels")]
    NotMono(usize),
    #[error("unsupported source rate {0} Hz (supported: {MIN_SOURCE_RATE_HZ}..={MAX_SOURCE_RATE_HZ})")]
    UnsupportedRate(u32),
    #[error("expected {TARGET_RATE_HZ} Hz input, got {0} Hz")]
    NotTargetRate(u32),
    #[error("{len} samples exceed the {target}-sample input length")]
    TooLong { len: usize, target: usize },
    #[error("clip must have exactly {CLIP_LEN} samples, got {0}")]
    WrongClipLength(usize),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("unsupported wave format: {0}")]
    Format(String),
    #[error("wave decode error: {0}")]
    Wav(#[from] hound::Error),
}

/// Per-sample arithmetic mean over channels.
pub fn to_mono(a: &RawAudio) -> Result<RawAudio, AudioError> {
    let first = a.channels.first().ok_or(AudioError::NoChannels)?;
    if first.is_empty() {
        return Err(AudioError::Empty);
    }
    if a.channels.iter().any(|c| c.len() != first.len()) {
        return Err(AudioError::RaggedChannels);
    }
    if a.channels.len() == 1 {
        return Ok(a.clone());
    }
    let n = a.channels.len() as f64;
    let mixed = (0..first.len())
        .map(|i| a.channels.iter().map(|c| c[i]).sum::<f64>() / n)
        .collect();
    Ok(RawAudio::mono(mixed, a.sample_rate_hz))
}

/// Centres a 16 kHz mono signal in `target` samples. The left pad is
/// `floor((target - n) / 2)`, so odd padding puts the extra zero on the right.
pub fn pad_center(a: &RawAudio, target: usize) -> Result<Vec<f64>, AudioError> {
    let x = mono_16k(a)?;
    if x.len() > target {
        return Err(AudioError::TooLong {
            len: x.len(),
            target,
        });
    }
    let left = (target - x.len()) / 2;
    let mut out = vec![0.0; target];
    out[left..left + x.len()].copy_from_slice(x);
    Ok(out)
}

/// Keeps the centred `target` samples (same offset convention as padding).
pub fn crop_center(a: &RawAudio, target: usize) -> Result<Vec<f64>, AudioError> {
    let x = mono_16k(a)?;
    if x.len() <= target {
        return pad_center(a, target);
    }
    let start = (x.len() - target) / 2;
    Ok(x[start..start + target].to_vec())
}

fn mono_16k(a: &RawAudio) -> Result<&[f64], AudioError> {
    if a.sample_rate_hz != TARGET_RATE_HZ {
        return Err(AudioError::NotTargetRate(a.sample_rate_hz));
    }
    a.samples()
}

/// Mixdown, resample and pad (or crop) to a model-ready clip.
pub fn normalize(a: &RawAudio, overflow: OverflowPolicy) -> Result<AudioClip, AudioError> {
    let mono = to_mono(a)?;
    let at16k = resample_to_16k(&mono)?;
    let samples = match overflow {
        OverflowPolicy::Error => pad_center(&at16k, CLIP_LEN)?,
        OverflowPolicy::Crop => crop_center(&at16k, CLIP_LEN)?,
    };
    AudioClip::new(samples)
}
