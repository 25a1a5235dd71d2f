use std::io::Read;
use std::path::Path;

use hound::{SampleFormat, WavReader};

use super::{AudioError, RawAudio};

/// Reads PCM integer (8 to 32 bit) or 32-bit float wave files into
/// per-channel buffers scaled to [-1, 1].
pub fn read_wav(path: impl AsRef<Path>) -> Result<RawAudio, AudioError> {
    decode_wav(WavReader::open(path)?)
}

pub fn decode_wav<R: Read>(reader: WavReader<R>) -> Result<RawAudio, AudioError> {
    let spec = reader.spec();
    let n_ch = spec.channels as usize;
    if n_ch == 0 {
        return Err(AudioError::NoChannels);
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()?,
        (SampleFormat::Int, bits @ 1..=32) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()?
        }
        (fmt, bits) => {
            return Err(AudioError::Format(format!("{fmt:?} with {bits} bits")));
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / n_ch); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (c, &v) in channels.iter_mut().zip(frame) {
            c.push(v);
        }
    }
    Ok(RawAudio {
        channels,
        sample_rate_hz: spec.sample_rate,
    })
}
