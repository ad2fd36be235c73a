//! Additive noise at a prescribed SNR.
//!
//! Powers are mean squares over the whole signal extent, silence included.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of summed talkers in generated babble.
pub const BABBLE_TALKERS: usize = 8;

/// Where the additive noise comes from.
#[derive(Debug, Clone, Copy)]
pub enum NoiseSource<'a, T> {
    /// Zero-mean white Gaussian noise.
    White,
    /// A recording, tiled or truncated to the signal length from a random
    /// circular offset.
    Recording(&'a Waveform<T>),
}

/// Derives an independent child seed from a base seed and a path of
/// indices (e.g. `[utterance, snr_point]`), so parallel runs do not depend
/// on scheduling order.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x5851_f42d_4c95_7f2d))))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Unit-variance white Gaussian noise.
pub fn white_gaussian<T: Scalar>(len: usize, sample_rate: u32, seed: u64) -> Result<Waveform<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..len)
        .map(|_| T::of(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Waveform::new(samples, sample_rate)
}

/// Repeats (or truncates) `noise` to `len` samples, starting from a random
/// circular offset.
pub fn tile_noise<T: Scalar>(noise: &Waveform<T>, len: usize, seed: u64) -> Result<Waveform<T>> {
    if noise.is_empty() {
        return Err(Error::ZeroPowerNoise);
    }
    let n = noise.len();
    let offset = ChaCha8Rng::seed_from_u64(seed).random_range(0..n);
    let s = noise.samples();
    let samples = (0..len).map(|i| s[(offset + i) % n]).collect();
    Ok(Waveform::from_trusted(samples, noise.sample_rate()))
}

/// Sums [`BABBLE_TALKERS`] randomly chosen, randomly shifted, unit-RMS
/// utterances into a babble-like noise of length `len`.
pub fn pseudo_babble<T: Scalar>(
    talkers: &[&Waveform<T>],
    len: usize,
    sample_rate: u32,
    seed: u64,
) -> Result<Waveform<T>> {
    let usable: Vec<&Waveform<T>> = talkers
        .iter()
        .copied()
        .filter(|w| w.mean_square() > 0.0)
        .collect();
    if usable.is_empty() {
        return Err(Error::ZeroPowerNoise);
    }
    if let Some(w) = usable.iter().find(|w| w.sample_rate() != sample_rate) {
        return Err(Error::SampleRateMismatch {
            expected: sample_rate,
            found: w.sample_rate(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0f64; len];
    for _ in 0..BABBLE_TALKERS {
        let w = usable[rng.random_range(0..usable.len())];
        let gain = 1.0 / w.mean_square().sqrt();
        let tiled = tile_noise(w, len, rng.random())?;
        for (a, s) in acc.iter_mut().zip(tiled.samples()) {
            *a += gain * s.as_f64();
        }
    }
    Waveform::new(acc.into_iter().map(T::of).collect(), sample_rate)
}

/// Returns `x + g·noise` with `g` chosen so the signal-to-scaled-noise power
/// ratio equals `snr_db`. `+∞` returns `x` unchanged.
pub fn add_noise<T: Scalar>(
    x: &Waveform<T>,
    source: NoiseSource<'_, T>,
    snr_db: f64,
    seed: u64,
) -> Result<Waveform<T>> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::config("snr_db", format!("must be finite or +inf, got {snr_db}")));
    }
    let ps = x.mean_square();
    if ps <= 0.0 {
        return Err(Error::ZeroPowerSignal);
    }
    if snr_db == f64::INFINITY {
        return Ok(x.clone());
    }
    let noise = match source {
        NoiseSource::White => white_gaussian::<f64>(x.len(), x.sample_rate(), seed)?,
        NoiseSource::Recording(n) => {
            if n.sample_rate() != x.sample_rate() {
                return Err(Error::SampleRateMismatch {
                    expected: x.sample_rate(),
                    found: n.sample_rate(),
                });
            }
            tile_noise(&n.cast::<f64>(), x.len(), seed)?
        }
    };
    let pn = noise.mean_square();
    if pn <= 0.0 {
        return Err(Error::ZeroPowerNoise);
    }
    let g = (ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = x
        .samples()
        .iter()
        .zip(noise.samples())
        .map(|(&s, &n)| T::of(s.as_f64() + g * n))
        .collect();
    Waveform::new(samples, x.sample_rate())
}

/// SNR in dB of `noisy` relative to `clean`, treating the difference as noise.
pub fn measured_snr_db<T: Scalar>(clean: &Waveform<T>, noisy: &Waveform<T>) -> f64 {
    let n = clean.len().min(noisy.len());
    let (mut ps, mut pn) = (0.0, 0.0);
    for (c, y) in clean.samples()[..n].iter().zip(&noisy.samples()[..n]) {
        let c = c.as_f64();
        let d = y.as_f64() - c;
        ps += c * c;
        pn += d * d;
    }
    10.0 * (ps / pn).log10()
}
