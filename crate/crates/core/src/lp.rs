//! Frame-based linear prediction and inverse filtering.
//!
//! Predictor convention: `e(n) = s(n) - sum_k a[k] s(n-k)`, `k = 1..=order`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostic::Diagnostic;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{WindowFn, WindowKind, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpConfig {
    pub order: usize,
    /// Analysis frame length in seconds.
    pub frame_len: f64,
    /// Hop between frames in seconds.
    pub frame_shift: f64,
    pub window: WindowKind,
    /// First-difference coefficient applied before analysis and filtering;
    /// `None` disables it.
    pub pre_emphasis: Option<f64>,
}

impl Default for LpConfig {
    fn default() -> Self {
        Self {
            order: 24,
            frame_len: 0.025,
            frame_shift: 0.005,
            window: WindowKind::Hanning,
            pre_emphasis: None,
        }
    }
}

impl LpConfig {
    /// Checks the configuration against a sample rate and returns the frame
    /// length and hop in samples.
    pub fn frame_geometry(&self, sample_rate: u32) -> Result<(usize, usize)> {
        if self.order < 1 {
            return Err(Error::config("order", "must be at least 1"));
        }
        if !(self.frame_shift > 0.0 && self.frame_shift.is_finite()) {
            return Err(Error::config("frame_shift", "must be positive"));
        }
        if !(self.frame_len > self.frame_shift && self.frame_len.is_finite()) {
            return Err(Error::config("frame_len", "must exceed frame_shift"));
        }
        if let Some(p) = self.pre_emphasis {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::config("pre_emphasis", "must lie in [0, 1)"));
            }
        }
        let fs = sample_rate as f64;
        let len = (self.frame_len * fs).round() as usize;
        let shift = (self.frame_shift * fs).round() as usize;
        if shift == 0 || len <= shift {
            return Err(Error::config("frame_shift", "shorter than one sample or not below frame_len"));
        }
        if len <= self.order {
            return Err(Error::config(
                "order",
                format!("frame of {len} samples cannot support order {}", self.order),
            ));
        }
        Ok((len, shift))
    }
}

/// Biased, unnormalized autocorrelation `r[k] = sum_n x[n] x[n+k]` for
/// `k = 0..=max_lag`. Lags beyond the frame are zero.
pub fn autocorrelation<T: Scalar>(frame: &[T], max_lag: usize) -> Vec<T> {
    (0..=max_lag)
        .map(|k| {
            if k >= frame.len() {
                return T::zero();
            }
            frame[..frame.len() - k]
                .iter()
                .zip(&frame[k..])
                .map(|(&a, &b)| a * b)
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FrameStatus {
    Ok,
    /// Zero-energy frame; coefficients are all zero.
    Silent,
    /// The recursion hit a non-positive error power; coefficients above
    /// `order` are zero.
    Truncated { order: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    /// `a[1..=order]`, stored from index 0.
    pub coeffs: Vec<T>,
    pub reflection: Vec<T>,
    /// Final prediction-error power.
    pub error_power: T,
    pub status: FrameStatus,
}

/// Solves the normal equations for an autocorrelation sequence with the
/// Levinson-Durbin recursion.
///
/// A frame with `r[0] <= 0` is silent. If a step would produce a reflection
/// coefficient outside (-1, 1) or a non-positive error power, the solution
/// of the last stable order is returned, zero-padded to `order`.
pub fn levinson_durbin<T: Scalar>(r: &[T], order: usize) -> Result<LpSolution<T>> {
    if r.len() < order + 1 {
        return Err(Error::config(
            "order",
            format!("autocorrelation has {} lags, need {}", r.len(), order + 1),
        ));
    }
    let mut a = vec![T::zero(); order];
    let mut reflection = vec![T::zero(); order];
    if !(r[0] > T::zero()) {
        return Ok(LpSolution {
            coeffs: a,
            reflection,
            error_power: T::zero(),
            status: FrameStatus::Silent,
        });
    }
    let mut err = r[0];
    let mut prev = vec![T::zero(); order];
    for i in 0..order {
        let mut acc = r[i + 1];
        for j in 0..i {
            acc -= a[j] * r[i - j];
        }
        let k = acc / err;
        let next_err = err * (T::one() - k * k);
        if !(k.abs() < T::one()) || !(next_err > T::zero()) || !k.is_finite() {
            return Ok(LpSolution {
                coeffs: a,
                reflection,
                error_power: err,
                status: FrameStatus::Truncated { order: i },
            });
        }
        prev[..i].copy_from_slice(&a[..i]);
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        a[i] = k;
        reflection[i] = k;
        err = next_err;
    }
    Ok(LpSolution {
        coeffs: a,
        reflection,
        error_power: err,
        status: FrameStatus::Ok,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpFrame<T> {
    /// First sample of the analysis frame.
    pub start: usize,
    pub coeffs: Vec<T>,
    pub status: FrameStatus,
}

/// Inverse-filtered excitation estimate plus the per-frame predictors that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual<T> {
    pub signal: Waveform<T>,
    pub frames: Vec<LpFrame<T>>,
}

impl<T: Scalar> Residual<T> {
    pub fn samples(&self) -> &[T] {
        self.signal.samples()
    }

    pub fn silent_frames(&self) -> usize {
        self.frames.iter().filter(|f| f.status == FrameStatus::Silent).count()
    }

    pub fn truncated_frames(&self) -> usize {
        self.frames
            .iter()
            .filter(|f| matches!(f.status, FrameStatus::Truncated { .. }))
            .count()
    }

    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        match self.silent_frames() {
            0 => {}
            count => out.push(Diagnostic::SilentFrames { count }),
        }
        match self.truncated_frames() {
            0 => {}
            count => out.push(Diagnostic::TruncatedFrames { count }),
        }
        out
    }
}

/// Computes the LP residual.
///
/// Each windowed frame yields a predictor, which is applied to the
/// unwindowed signal over the frame's central hop-length segment. The first
/// frame also covers the head of the signal and the last frame the tail.
/// The filter always sees the true past samples, so segment joins are
/// seamless.
pub fn lp_residual<T: Scalar>(x: &Waveform<T>, cfg: &LpConfig) -> Result<Residual<T>> {
    let (len, shift) = cfg.frame_geometry(x.sample_rate())?;
    let n = x.len();
    if n < len {
        return Err(Error::SignalTooShort {
            needed: len - 1,
            found: n,
        });
    }
    // Autocorrelation, recursion and filtering run in f64 whatever `T` is:
    // order-24 normal equations on clean voiced frames are too ill-conditioned
    // for single precision.
    let raw = x.samples();
    let s: Vec<f64> = match cfg.pre_emphasis {
        None => raw.iter().map(|v| v.as_f64()).collect(),
        Some(p) => (0..n)
            .map(|i| {
                let v = raw[i].as_f64();
                if i == 0 {
                    v
                } else {
                    v - p * raw[i - 1].as_f64()
                }
            })
            .collect(),
    };
    let window: Vec<f64> = WindowFn::new(cfg.window, len)?.coefficients();
    let order = cfg.order;
    let starts: Vec<usize> = (0..=(n - len) / shift).map(|i| i * shift).collect();

    let solved: Vec<(usize, LpSolution<f64>)> = starts
        .par_iter()
        .map(|&start| {
            let windowed: Vec<f64> = s[start..start + len]
                .iter()
                .zip(&window)
                .map(|(&v, &w)| v * w)
                .collect();
            let r = autocorrelation(&windowed, order);
            (start, levinson_durbin(&r, order).expect("lag count matches order"))
        })
        .collect();

    let lead = (len - shift) / 2;
    let last = solved.len() - 1;
    let mut e = vec![T::zero(); n];
    for (fi, (start, sol)) in solved.iter().enumerate() {
        let a0 = if fi == 0 { 0 } else { start + lead };
        let a1 = if fi == last { n } else { start + lead + shift };
        for t in a0..a1 {
            let mut acc = s[t];
            for (k, &ak) in sol.coeffs.iter().enumerate().take(t) {
                acc -= ak * s[t - 1 - k];
            }
            e[t] = T::of(acc);
        }
    }
    let frames = solved
        .into_iter()
        .map(|(start, sol)| LpFrame {
            start,
            coeffs: sol.coeffs.into_iter().map(T::of).collect(),
            status: sol.status,
        })
        .collect();

    Ok(Residual {
        signal: Waveform::new(e, x.sample_rate())?,
        frames,
    })
}
