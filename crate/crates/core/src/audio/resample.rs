//! Rational-ratio polyphase resampler with a Kaiser-windowed sinc kernel.
//!
//! For a source rate `fs`, the conversion to 16 kHz is `L/M` with
//! `L = 16000 / g`, `M = fs / g`, `g = gcd(fs, 16000)`. Output sample `k`
//! sits at input position `k*M/L`; its integer part selects the input
//! window and `(k*M) mod L` selects one of `L` precomputed filter phases.
//! The kernel is `2fc * sinc(2fc * t) * kaiser(t / W)` with the cutoff
//! `fc` at [`ROLLOFF`] of the lower Nyquist rate, and the window half-width
//! `W` spanning [`ZERO_CROSSINGS`] zero crossings of the sinc.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::{AudioError, RawAudio, MAX_SOURCE_RATE_HZ, MIN_SOURCE_RATE_HZ, TARGET_RATE_HZ};

pub const ZERO_CROSSINGS: usize = 64;
/// Kaiser beta for a 60 dB stopband: 0.1102 * (60 - 8.7).
pub const KAISER_BETA: f64 = 0.1102 * (60.0 - 8.7);
/// Passband edge as a fraction of the lower Nyquist frequency.
pub const ROLLOFF: f64 = 0.975;

/// Above this many coefficients the phase table is not materialized and
/// taps are evaluated per output sample instead.
const MAX_TABLE_COEFFS: usize = 4_000_000;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Modified Bessel function of the first kind, order 0 (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

#[derive(Debug, Clone)]
pub struct Resampler {
    up: u64,
    down: u64,
    /// cutoff in cycles per input sample
    cutoff: f64,
    half_width: f64,
    /// taps per side; output `k` reads inputs `base-taps+1 ..= base+taps`
    taps: usize,
    i0_beta: f64,
    table: Option<Vec<f64>>,
}

impl Resampler {
    pub fn new(source_rate: u32, target_rate: u32) -> Self {
        let g = gcd(source_rate as u64, target_rate as u64);
        let up = target_rate as u64 / g;
        let down = source_rate as u64 / g;
        let nyquist = source_rate.min(target_rate) as f64 / 2.0;
        let cutoff = ROLLOFF * nyquist / source_rate as f64;
        let half_width = ZERO_CROSSINGS as f64 / (2.0 * cutoff);
        let taps = half_width.ceil() as usize;
        let mut r = Self {
            up,
            down,
            cutoff,
            half_width,
            taps,
            i0_beta: bessel_i0(KAISER_BETA),
            table: None,
        };
        let n_coeffs = up as usize * 2 * taps;
        if n_coeffs <= MAX_TABLE_COEFFS {
            let mut table = Vec::with_capacity(n_coeffs);
            for phase in 0..up {
                table.extend(r.phase_coeffs(phase));
            }
            r.table = Some(table);
        }
        r
    }

    /// Coefficient at offset `t` input samples from the output instant.
    fn kernel(&self, t: f64) -> f64 {
        if t.abs() >= self.half_width {
            return 0.0;
        }
        let r = t / self.half_width;
        let w = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / self.i0_beta;
        2.0 * self.cutoff * sinc(2.0 * self.cutoff * t) * w
    }

    fn phase_coeffs(&self, phase: u64) -> impl Iterator<Item = f64> + '_ {
        let frac = phase as f64 / self.up as f64;
        let taps = self.taps as i64;
        (-taps + 1..=taps).map(move |j| self.kernel(frac - j as f64))
    }

    /// `round(n * L / M)`, halves rounded up.
    pub fn output_len(&self, input_len: usize) -> usize {
        let n = input_len as u128;
        ((2 * n * self.up as u128 + self.down as u128) / (2 * self.down as u128)) as usize
    }

    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        let out_len = self.output_len(input.len());
        let taps = self.taps as i64;
        let n = input.len() as i64;
        let mut out = Vec::with_capacity(out_len);
        let mut scratch = Vec::new();
        for k in 0..out_len as u64 {
            let pos = k * self.down;
            let base = (pos / self.up) as i64;
            let phase = pos % self.up;
            let coeffs: &[f64] = match &self.table {
                Some(t) => {
                    let w = 2 * self.taps;
                    &t[phase as usize * w..(phase as usize + 1) * w]
                }
                None => {
                    scratch.clear();
                    scratch.extend(self.phase_coeffs(phase));
                    &scratch
                }
            };
            let first = base - taps + 1;
            let lo = first.max(0);
            let hi = (first + coeffs.len() as i64).min(n);
            let acc: f64 = if lo < hi {
                let c = &coeffs[(lo - first) as usize..(hi - first) as usize];
                dot(c, &input[lo as usize..hi as usize])
            } else {
                0.0
            };
            out.push(acc);
        }
        out
    }
}

/// Dot product in four fixed lanes, summed in a fixed order.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let (ca, ra) = a.split_at(a.len() / 4 * 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for l in 0..4 {
            lanes[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

fn cached(rate: u32) -> Arc<Resampler> {
    static CACHE: OnceLock<Mutex<HashMap<u32, Arc<Resampler>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().expect("resampler cache").get(&rate) {
        return r.clone();
    }
    let r = Arc::new(Resampler::new(rate, TARGET_RATE_HZ));
    cache.lock().expect("resampler cache").entry(rate).or_insert(r).clone()
}

/// Resamples mono audio to 16 kHz; 16 kHz input is returned unchanged.
pub fn resample_to_16k(a: &RawAudio) -> Result<RawAudio, AudioError> {
    let x = a.samples()?;
    let rate = a.sample_rate_hz;
    if !(MIN_SOURCE_RATE_HZ..=MAX_SOURCE_RATE_HZ).contains(&rate) {
        return Err(AudioError::UnsupportedRate(rate));
    }
    if rate == TARGET_RATE_HZ {
        return Ok(a.clone());
    }
    Ok(RawAudio::mono(cached(rate).process(x), TARGET_RATE_HZ))
}
