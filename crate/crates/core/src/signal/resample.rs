//! Rational-ratio polyphase resampling.

use super::{Waveform, ANALYSIS_RATE};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Kernel half-width in zero crossings of the cutoff sinc.
const ZERO_CROSSINGS: usize = 16;

/// Passes analysis-rate input through; otherwise resamples when
/// `allow_resample` is set and fails with [`Error::SampleRateMismatch`]
/// when it is not.
pub fn conform_sample_rate<T: Scalar>(x: Waveform<T>, allow_resample: bool) -> Result<Waveform<T>> {
    match x.sample_rate() {
        ANALYSIS_RATE => Ok(x),
        found if !allow_resample => Err(Error::SampleRateMismatch {
            expected: ANALYSIS_RATE,
            found,
        }),
        _ => resample(&x, ANALYSIS_RATE),
    }
}

/// Resamples by the exact ratio `target/source` with a Blackman-windowed
/// sinc interpolator. The cutoff sits at the lower of the two Nyquist
/// frequencies. Output length is `ceil(len·target/source)`.
pub fn resample<T: Scalar>(x: &Waveform<T>, target_rate: u32) -> Result<Waveform<T>> {
    if target_rate == 0 {
        return Err(Error::InvalidSampleRate);
    }
    let source_rate = x.sample_rate();
    if source_rate == target_rate {
        return Ok(x.clone());
    }
    let g = gcd(source_rate as u64, target_rate as u64);
    let up = (target_rate as u64 / g) as usize;
    let down = (source_rate as u64 / g) as usize;
    let fc = (target_rate as f64 / source_rate as f64).min(1.0);
    let half = (ZERO_CROSSINGS as f64 / fc).ceil() as usize;
    let taps = 2 * half;

    // table[p][j] weights input sample i0 + j + 1 - half for output phase p
    let table: Vec<Vec<f64>> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            let mut row: Vec<f64> = (0..taps)
                .map(|j| {
                    let d = frac - (j as f64 + 1.0 - half as f64);
                    fc * sinc(fc * d) * blackman(d / half as f64)
                })
                .collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= sum);
            row
        })
        .collect();

    let n = x.len();
    let out_len = ((n as u64 * up as u64).div_ceil(down as u64)) as usize;
    let s = x.samples();
    let out = (0..out_len)
        .map(|k| {
            let pos = k as u64 * down as u64;
            let i0 = (pos / up as u64) as isize;
            let row = &table[(pos % up as u64) as usize];
            let first = i0 + 1 - half as isize;
            let acc: f64 = row
                .iter()
                .enumerate()
                .filter_map(|(j, &h)| {
                    let i = first + j as isize;
                    (0..n as isize).contains(&i).then(|| h * s[i as usize].as_f64())
                })
                .sum();
            T::of(acc)
        })
        .collect();
    Waveform::new(out, target_rate)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Blackman taper on [-1, 1], zero outside.
fn blackman(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let a = std::f64::consts::PI * u;
    0.42 + 0.5 * a.cos() + 0.08 * (2.0 * a).cos()
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn sine(rate: u32, hz: f64, secs: f64) -> Waveform<f64> {
        let n = (rate as f64 * secs) as usize;
        Waveform::new(
            (0..n).map(|i| (TAU * hz * i as f64 / rate as f64).sin()).collect(),
            rate,
        )
        .unwrap()
    }

    fn interior_error(y: &Waveform<f64>, hz: f64, margin: usize) -> f64 {
        let r = y.sample_rate() as f64;
        y.samples()[margin..y.len() - margin]
            .iter()
            .enumerate()
            .map(|(k, v)| (v - (TAU * hz * (k + margin) as f64 / r).sin()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn downsample_keeps_in_band_tone() {
        let y = resample(&sine(48000, 440.0, 0.2), 16000).unwrap();
        assert_eq!(y.len(), 3200);
        assert!(interior_error(&y, 440.0, 200) < 2e-3);
    }

    #[test]
    fn odd_ratio() {
        let y = resample(&sine(44100, 300.0, 0.1), 16000).unwrap();
        assert_eq!(y.len(), 1600);
        assert!(interior_error(&y, 300.0, 200) < 2e-3);
    }

    #[test]
    fn upsample_keeps_tone() {
        let y = resample(&sine(8000, 250.0, 0.2), 16000).unwrap();
        assert_eq!(y.len(), 3200);
        assert!(interior_error(&y, 250.0, 200) < 2e-3);
    }

    #[test]
    fn out_of_band_tone_is_suppressed() {
        let y = resample(&sine(48000, 12000.0, 0.2), 16000).unwrap();
        let rms = (y.samples()[200..3000].iter().map(|v| v * v).sum::<f64>() / 2800.0).sqrt();
        assert!(rms < 0.01, "{rms}");
    }

    #[test]
    fn guard() {
        let x = sine(22050, 100.0, 0.05);
        assert!(matches!(
            conform_sample_rate(x.clone(), false),
            Err(Error::SampleRateMismatch { expected: 16000, found: 22050 })
        ));
        assert_eq!(conform_sample_rate(x, true).unwrap().sample_rate(), 16000);
        let y = sine(16000, 100.0, 0.05);
        assert_eq!(conform_sample_rate(y.clone(), false).unwrap(), y);
    }
}
