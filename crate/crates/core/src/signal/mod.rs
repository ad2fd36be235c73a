//! Waveform container and the primitives every other stage builds on.

mod noise;
mod resample;
mod wav;
mod window;

pub use noise::{
    add_noise, derive_seed, measured_snr_db, pseudo_babble, tile_noise, white_gaussian,
    NoiseSource, BABBLE_TALKERS,
};
pub use resample::{conform_sample_rate, resample};
pub use wav::{load_wav, save_wav, save_wav_float};
pub use window::{WindowFn, WindowKind};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sample rate every default parameter is expressed against.
pub const ANALYSIS_RATE: u32 = 16_000;

/// Uniformly sampled real signal.
///
/// Samples are always finite; constructors reject NaN and infinities.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Scalar> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidSampleRate);
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![T::zero(); len], sample_rate)
    }

    /// Builds a waveform from samples produced by finite arithmetic on finite
    /// inputs. Checked in debug builds only.
    pub(crate) fn from_trusted(samples: Vec<T>, sample_rate: u32) -> Self {
        debug_assert!(sample_rate > 0);
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn time_of(&self, index: usize) -> f64 {
        index as f64 / self.sample_rate as f64
    }

    /// Converts a duration in seconds to a (rounded) sample count.
    pub fn samples_for(&self, seconds: f64) -> usize {
        (seconds * self.sample_rate as f64).round().max(0.0) as usize
    }

    /// Mean square over the whole extent; zero for an empty signal.
    pub fn mean_square(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples
            .iter()
            .map(|s| {
                let v = s.as_f64();
                v * v
            })
            .sum::<f64>()
            / self.samples.len() as f64
    }

    pub fn peak(&self) -> T {
        self.samples
            .iter()
            .fold(T::zero(), |acc, s| acc.max(s.abs()))
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(&self, gain: T) -> Result<Self> {
        Self::new(self.samples.iter().map(|&s| s * gain).collect(), self.sample_rate)
    }

    pub fn negated(&self) -> Self {
        Self::from_trusted(self.samples.iter().map(|&s| -s).collect(), self.sample_rate)
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Waveform<U> {
        Waveform {
            samples: self.samples.iter().map(|s| U::of(s.as_f64())).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Shifts the content by `k` samples (positive delays), zero-filling and
    /// keeping the length.
    pub fn shifted(&self, k: isize) -> Self {
        let n = self.samples.len() as isize;
        let samples = (0..n)
            .map(|i| {
                let j = i - k;
                if (0..n).contains(&j) {
                    self.samples[j as usize]
                } else {
                    T::zero()
                }
            })
            .collect();
        Self::from_trusted(samples, self.sample_rate)
    }
}
