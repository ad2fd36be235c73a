//! Mean-based signal and the GCI/GOI search intervals derived from it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{Waveform, WindowFn, WindowKind};

/// Default ripple threshold relative to `max |y|`.
pub const DEFAULT_RIPPLE_REL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSignalConfig {
    /// Window length as a multiple of the mean pitch period.
    pub window_factor: f64,
    /// Mean pitch period in seconds; estimated from the signal when `None`.
    pub t0_mean: Option<f64>,
}

impl Default for MeanSignalConfig {
    fn default() -> Self {
        Self {
            window_factor: 1.75,
            t0_mean: None,
        }
    }
}

impl MeanSignalConfig {
    /// Half-width `N = round(factor * t0 * fs / 2)`; the window spans `2N+1`
    /// samples.
    pub fn half_width(&self, t0_mean: f64, sample_rate: u32) -> Result<usize> {
        if !(self.window_factor > 0.0 && self.window_factor.is_finite()) {
            return Err(Error::config("window_factor", "must be positive"));
        }
        if !(t0_mean > 0.0 && t0_mean.is_finite()) {
            return Err(Error::config("t0_mean", "must be positive"));
        }
        let n = (self.window_factor * t0_mean * sample_rate as f64 / 2.0).round();
        if n < 1.0 {
            return Err(Error::config(
                "window_factor",
                format!(
                    "window of {:.3} periods at {:.2} ms is shorter than 3 samples",
                    self.window_factor,
                    t0_mean * 1e3
                ),
            ));
        }
        Ok(n as usize)
    }
}

/// Output of [`mean_based_signal`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeanSignal<T> {
    pub signal: Waveform<T>,
    pub half_width: usize,
    /// Mean pitch period the window was sized from, in seconds.
    pub t0_mean: f64,
}

impl<T: Scalar> MeanSignal<T> {
    /// Samples within `half_width` of either end, whose window reaches into
    /// the zero padding.
    pub fn edge_unreliable(&self) -> [std::ops::Range<usize>; 2] {
        let n = self.signal.len();
        let h = self.half_width.min(n);
        [0..h, n - h..n]
    }
}

/// Weighted sliding mean
/// `y(n) = 1/(2N+1) * sum_{m=-N..N} w(m) s(n+m)` with a Blackman `w`,
/// treating samples outside the signal as zero.
pub fn mean_based_signal<T: Scalar>(x: &Waveform<T>, cfg: &MeanSignalConfig) -> Result<MeanSignal<T>> {
    let t0 = match cfg.t0_mean {
        Some(t0) => t0,
        None => estimate_mean_pitch(x)?,
    };
    let half = cfg.half_width(t0, x.sample_rate())?;
    let taps = 2 * half + 1;
    if x.len() <= taps {
        return Err(Error::SignalTooShort {
            needed: taps,
            found: x.len(),
        });
    }
    let w: Vec<T> = WindowFn::new(WindowKind::Blackman, taps)?.coefficients();
    let norm = T::one() / T::of_usize(taps);
    let s = x.samples();
    let n = s.len();
    let y: Vec<T> = (0..n)
        .into_par_iter()
        .with_min_len(1024)
        .map(|i| {
            // window index j corresponds to m = j - half, sample i + m
            let j_lo = half.saturating_sub(i);
            let j_hi = (n - i + half).min(taps);
            let acc: T = (j_lo..j_hi).map(|j| w[j] * s[i + j - half]).sum();
            acc * norm
        })
        .collect();
    Ok(MeanSignal {
        signal: Waveform::new(y, x.sample_rate())?,
        half_width: half,
        t0_mean: t0,
    })
}

/// Utterance-mean pitch period in seconds.
///
/// Each 50 ms frame (10 ms hop) is scored by normalized autocorrelation over
/// lags covering 50-400 Hz. Frames that are loud enough and periodic enough
/// contribute the shortest lag whose peak reaches 90% of the best one; the
/// result is the median of those lags.
pub fn estimate_mean_pitch<T: Scalar>(x: &Waveform<T>) -> Result<f64> {
    const MIN_SECONDS: f64 = 0.5;
    const VOICING: f64 = 0.5;
    const ENERGY_REL: f64 = 0.01;
    let fs = x.sample_rate() as f64;
    let needed = (MIN_SECONDS * fs).ceil() as usize;
    if x.len() < needed {
        return Err(Error::SignalTooShort {
            needed: needed - 1,
            found: x.len(),
        });
    }
    let frame = (0.05 * fs).round() as usize;
    let hop = (0.01 * fs).round().max(1.0) as usize;
    let lag_lo = (fs / 400.0).floor().max(1.0) as usize;
    let lag_hi = ((fs / 50.0).ceil() as usize).min(frame - 2);
    let s: Vec<f64> = x.samples().iter().map(|v| v.as_f64()).collect();

    let frames: Vec<(f64, Option<f64>)> = (0..=(s.len() - frame) / hop)
        .into_par_iter()
        .map(|fi| {
            let seg = &s[fi * hop..fi * hop + frame];
            let mean = seg.iter().sum::<f64>() / frame as f64;
            let seg: Vec<f64> = seg.iter().map(|v| v - mean).collect();
            let energy: f64 = seg.iter().map(|v| v * v).sum();
            if energy <= 0.0 {
                return (0.0, None);
            }
            // ncc[k] holds lag lag_lo - 1 + k, one extra on each side
            let ncc: Vec<f64> = (lag_lo - 1..=lag_hi + 1)
                .map(|lag| {
                    let (a, b) = (&seg[..frame - lag], &seg[lag..]);
                    let num: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
                    let ea: f64 = a.iter().map(|v| v * v).sum();
                    let eb: f64 = b.iter().map(|v| v * v).sum();
                    if ea > 0.0 && eb > 0.0 {
                        num / (ea * eb).sqrt()
                    } else {
                        0.0
                    }
                })
                .collect();
            let peaks: Vec<usize> = (1..ncc.len() - 1)
                .filter(|&k| ncc[k] > ncc[k - 1] && ncc[k] >= ncc[k + 1])
                .collect();
            let best = peaks.iter().map(|&k| ncc[k]).fold(f64::NEG_INFINITY, f64::max);
            if best < VOICING {
                return (energy, None);
            }
            let k = *peaks.iter().find(|&&k| ncc[k] >= 0.9 * best).expect("best is a peak");
            let (l, c, r) = (ncc[k - 1], ncc[k], ncc[k + 1]);
            let denom = l - 2.0 * c + r;
            let offset = if denom < 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
            let lag = (lag_lo - 1 + k) as f64 + offset.clamp(-0.5, 0.5);
            (energy, Some(lag))
        })
        .collect();

    let loudest = frames.iter().map(|f| f.0).fold(0.0, f64::max);
    let mut lags: Vec<f64> = frames
        .iter()
        .filter(|(e, _)| *e >= ENERGY_REL * loudest)
        .filter_map(|&(_, lag)| lag)
        .collect();
    if lags.is_empty() {
        return Err(Error::NoVoicedFrames);
    }
    lags.sort_by(f64::total_cmp);
    let m = lags.len();
    let median = if m % 2 == 1 {
        lags[m / 2]
    } else {
        0.5 * (lags[m / 2 - 1] + lags[m / 2])
    };
    Ok(median / fs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Gci,
    Goi,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Gci => "gci",
            EventKind::Goi => "goi",
        }
    }
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EventKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gci" => Ok(EventKind::Gci),
            "goi" => Ok(EventKind::Goi),
            other => Err(format!("unknown event kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumKind {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum<T> {
    pub index: usize,
    pub kind: ExtremumKind,
    pub value: T,
}

/// Alternating local extrema of `y`.
///
/// Candidates come from sign changes of the first difference (flat runs
/// resolve to their center). A zigzag pass then keeps only swings of at
/// least `ripple_rel * max|y|`: a candidate of the same kind as the last
/// kept extremum replaces it if more extreme, and an opposite candidate is
/// kept only when the swing is large enough.
pub fn find_extrema<T: Scalar>(y: &[T], ripple_rel: f64) -> Vec<Extremum<T>> {
    let peak = y.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if y.len() < 3 || peak == T::zero() {
        return Vec::new();
    }
    let thr = T::of(ripple_rel.max(0.0)) * peak;
    let mut out: Vec<Extremum<T>> = Vec::new();
    let mut push = |cand: Extremum<T>| match out.last_mut() {
        None => out.push(cand),
        Some(last) if last.kind == cand.kind => {
            let better = match cand.kind {
                ExtremumKind::Max => cand.value > last.value,
                ExtremumKind::Min => cand.value < last.value,
            };
            if better {
                *last = cand;
            }
        }
        Some(last) => {
            if (cand.value - last.value).abs() >= thr {
                out.push(cand);
            }
        }
    };

    let mut slope = 0i8;
    let mut flat_from = 0usize;
    for i in 1..y.len() {
        let s = match y[i].partial_cmp(&y[i - 1]) {
            Some(std::cmp::Ordering::Greater) => 1,
            Some(std::cmp::Ordering::Less) => -1,
            _ => 0,
        };
        if s == 0 {
            continue;
        }
        if slope != 0 && s != slope {
            let index = (flat_from + i - 1) / 2;
            let kind = if slope > 0 { ExtremumKind::Max } else { ExtremumKind::Min };
            push(Extremum {
                index,
                kind,
                value: y[index],
            });
        }
        slope = s;
        flat_from = i;
    }
    out
}

/// Half-open search region `[start, end)` in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventInterval {
    pub kind: EventKind,
    pub start: usize,
    pub end: usize,
}

impl EventInterval {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, index: usize) -> bool {
        (self.start..self.end).contains(&index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    pub kind: EventKind,
    pub intervals: Vec<EventInterval>,
    /// Fewer than two extrema were found.
    pub likely_unvoiced: bool,
}

/// Search intervals for one event kind.
///
/// GCI: from each minimum to the midpoint before the following maximum.
/// GOI: from each maximum to the midpoint before the following minimum.
/// `margin` (seconds) widens both ends. Intervals are clipped to the signal
/// and to the end of the previous interval; empty ones are dropped.
pub fn extract_intervals<T: Scalar>(y: &Waveform<T>, kind: EventKind, margin: f64) -> Result<IntervalSet> {
    let extrema = find_extrema(y.samples(), DEFAULT_RIPPLE_REL);
    intervals_from_extrema(&extrema, y.len(), y.sample_rate(), kind, margin)
}

/// [`extract_intervals`] over precomputed extrema.
pub fn intervals_from_extrema<T: Scalar>(
    extrema: &[Extremum<T>],
    len: usize,
    sample_rate: u32,
    kind: EventKind,
    margin: f64,
) -> Result<IntervalSet> {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::config("margin", "must be a finite non-negative duration"));
    }
    let m = (margin * sample_rate as f64).round() as usize;
    let (first, second) = match kind {
        EventKind::Gci => (ExtremumKind::Min, ExtremumKind::Max),
        EventKind::Goi => (ExtremumKind::Max, ExtremumKind::Min),
    };
    let mut intervals: Vec<EventInterval> = Vec::new();
    for pair in extrema.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a.kind != first || b.kind != second {
            continue;
        }
        let mid = (a.index + b.index) / 2;
        let floor = intervals.last().map_or(0, |iv| iv.end);
        let start = a.index.saturating_sub(m).max(floor);
        let end = (mid + m).min(len);
        if start < end {
            intervals.push(EventInterval { kind, start, end });
        }
    }
    Ok(IntervalSet {
        kind,
        intervals,
        likely_unvoiced: extrema.len() < 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn brute_mbs(s: &[f64], n: usize) -> Vec<f64> {
        let len = 2 * n + 1;
        let w: Vec<f64> = (0..len)
            .map(|k| {
                let x = k as f64 / (len - 1) as f64;
                0.42 - 0.5 * (2.0 * PI * x).cos() + 0.08 * (4.0 * PI * x).cos()
            })
            .collect();
        (0..s.len() as isize)
            .map(|i| {
                let mut acc = 0.0;
                for m in -(n as isize)..=n as isize {
                    let j = i + m;
                    if j >= 0 && (j as usize) < s.len() {
                        acc += w[(m + n as isize) as usize] * s[j as usize];
                    }
                }
                acc / len as f64
            })
            .collect()
    }

    /// Config whose half-width is exactly `n` at 16 kHz.
    fn cfg_for(n: usize) -> MeanSignalConfig {
        MeanSignalConfig {
            window_factor: 1.0,
            t0_mean: Some(2.0 * n as f64 / 16000.0),
        }
    }

    fn sine(period: f64, len: usize) -> Waveform<f64> {
        Waveform::new((0..len).map(|n| (TAU * n as f64 / period).sin()).collect(), 16000).unwrap()
    }

    #[test]
    fn half_width_rounding() {
        let c = MeanSignalConfig::default();
        assert_eq!(c.half_width(0.01, 16000).unwrap(), 140);
        assert!(c.half_width(0.0, 16000).is_err());
        let tiny = MeanSignalConfig {
            window_factor: 0.01,
            t0_mean: None,
        };
        assert_eq!(tiny.half_width(0.005, 16000).unwrap_err().field(), Some("window_factor"));
    }

    #[test]
    fn constant_signal_interior() {
        let n = 20;
        let x = Waveform::new(vec![0.7; 300], 16000).unwrap();
        let y = mean_based_signal(&x, &cfg_for(n)).unwrap();
        let w: Vec<f64> = WindowFn::new(WindowKind::Blackman, 2 * n + 1).unwrap().coefficients();
        let expect = 0.7 * w.iter().sum::<f64>() / (2 * n + 1) as f64;
        for v in &y.signal.samples()[n..300 - n] {
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_gives_reversed_window() {
        let n = 10;
        let n0 = 50;
        let mut s = vec![0.0; 120];
        s[n0] = 1.0;
        let y = mean_based_signal(&Waveform::new(s, 16000).unwrap(), &cfg_for(n)).unwrap();
        let w: Vec<f64> = WindowFn::new(WindowKind::Blackman, 2 * n + 1).unwrap().coefficients();
        for (i, v) in y.signal.samples().iter().enumerate() {
            let m = n0 as isize - i as isize;
            let expect = if m.unsigned_abs() <= n {
                w[(m + n as isize) as usize] / (2 * n + 1) as f64
            } else {
                0.0
            };
            assert!((v - expect).abs() < 1e-15, "n={i}");
        }
    }

    #[test]
    fn matches_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s: Vec<f64> = (0..4000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = mean_based_signal(&Waveform::new(s.clone(), 16000).unwrap(), &cfg_for(50)).unwrap();
        assert_eq!(y.half_width, 50);
        for (a, b) in y.signal.samples().iter().zip(brute_mbs(&s, 50)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn too_short_for_window() {
        let x = Waveform::new(vec![0.1; 41], 16000).unwrap();
        assert!(matches!(
            mean_based_signal(&x, &cfg_for(20)),
            Err(Error::SignalTooShort { .. })
        ));
    }

    #[test]
    fn pitch_of_sinusoid() {
        let t0 = estimate_mean_pitch(&sine(80.0, 16000)).unwrap();
        assert!((t0 - 0.005).abs() <= 0.00025, "{t0}");
    }

    #[test]
    fn pitch_of_impulse_train() {
        let mut exc = vec![0.0; 16000];
        for i in (0..16000).step_by(160) {
            exc[i] = 1.0;
        }
        // one-pole smoothing so the train looks a little like speech
        let mut y = vec![0.0; exc.len()];
        for i in 0..exc.len() {
            y[i] = exc[i] + if i > 0 { 0.9 * y[i - 1] } else { 0.0 };
        }
        let t0 = estimate_mean_pitch(&Waveform::new(y, 16000).unwrap()).unwrap();
        assert!((t0 - 0.010).abs() <= 0.0005, "{t0}");
    }

    #[test]
    fn pitch_errors() {
        let silent = Waveform::<f64>::zeros(16000, 16000).unwrap();
        assert!(matches!(estimate_mean_pitch(&silent), Err(Error::NoVoicedFrames)));
        assert!(matches!(
            estimate_mean_pitch(&sine(80.0, 4000)),
            Err(Error::SignalTooShort { .. })
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise: Vec<f64> = (0..16000).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(matches!(
            estimate_mean_pitch(&Waveform::new(noise, 16000).unwrap()),
            Err(Error::NoVoicedFrames)
        ));
    }

    #[test]
    fn sinusoid_gci_intervals() {
        let y = sine(200.0, 1000);
        let set = extract_intervals(&y, EventKind::Gci, 0.0).unwrap();
        assert_eq!(
            set.intervals.iter().map(|iv| (iv.start, iv.end)).collect::<Vec<_>>(),
            vec![(150, 200), (350, 400), (550, 600), (750, 800)]
        );
        assert!(!set.likely_unvoiced);
    }

    #[test]
    fn sinusoid_goi_intervals_with_margin() {
        let y = sine(200.0, 1000);
        let set = extract_intervals(&y, EventKind::Goi, 0.00025).unwrap();
        assert_eq!(
            set.intervals.iter().map(|iv| (iv.start, iv.end)).collect::<Vec<_>>(),
            vec![(46, 104), (246, 304), (446, 504), (646, 704), (846, 904)]
        );
    }

    #[test]
    fn flat_signal_is_unvoiced() {
        let y = Waveform::new(vec![0.0; 500], 16000).unwrap();
        let set = extract_intervals(&y, EventKind::Gci, 0.0).unwrap();
        assert!(set.intervals.is_empty());
        assert!(set.likely_unvoiced);
        assert!(extract_intervals(&y, EventKind::Gci, -1.0).is_err());
    }

    #[test]
    fn plateau_center() {
        let y = [0.0, 1.0, 2.0, 2.0, 2.0, 2.0, 1.0, 0.0, -1.0, -1.0, 0.0];
        let e = find_extrema(&y, 1e-6);
        assert_eq!(e.len(), 2);
        assert_eq!((e[0].index, e[0].kind), (3, ExtremumKind::Max));
        assert_eq!((e[1].index, e[1].kind), (8, ExtremumKind::Min));
    }

    #[test]
    fn ripple_is_ignored() {
        // A dip of 1e-9 on a unit-scale bump does not split it.
        let y = [0.0, 0.5, 1.0, 1.0 - 1e-9, 1.0, 0.5, 0.0, -0.5, 0.0];
        let e = find_extrema(&y, 1e-6);
        assert_eq!(e.iter().map(|e| e.kind).collect::<Vec<_>>(), vec![ExtremumKind::Max, ExtremumKind::Min]);
    }

    fn periodic(period: usize, periods: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps: Vec<f64> = (1..=8)
            .map(|h| if h == 1 { rng.random_range(0.5..1.0) } else { rng.random_range(0.0..1.0) })
            .collect();
        let phases: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..TAU)).collect();
        (0..period * periods)
            .map(|n| {
                amps.iter()
                    .zip(&phases)
                    .enumerate()
                    .map(|(h, (a, p))| a * (TAU * (h + 1) as f64 * n as f64 / period as f64 + p).sin())
                    .sum()
            })
            .collect()
    }

    proptest! {
        #[test]
        fn linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, n in 1usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x1: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x2: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| a * p + b * q).collect();
            let run = |v: Vec<f64>| mean_based_signal(&Waveform::new(v, 16000).unwrap(), &cfg_for(n)).unwrap().signal;
            let (y1, y2, ym) = (run(x1), run(x2), run(mix));
            for i in n..300 - n {
                let lhs = ym.samples()[i];
                let rhs = a * y1.samples()[i] + b * y2.samples()[i];
                prop_assert!((lhs - rhs).abs() < 1e-10);
            }
        }

        #[test]
        fn extrema_alternate(seed in any::<u64>(), len in 3usize..400) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // quantized values make plateaus common
            let y: Vec<f64> = (0..len).map(|_| rng.random_range(-3i32..=3) as f64).collect();
            let e = find_extrema(&y, DEFAULT_RIPPLE_REL);
            for w in e.windows(2) {
                prop_assert_ne!(w[0].kind, w[1].kind);
                prop_assert!(w[0].index < w[1].index);
            }
        }

        #[test]
        fn one_gci_interval_per_period(period in 40usize..270, factor in 1.5f64..=2.0, seed in any::<u64>()) {
            let periods = 12;
            let x = Waveform::new(periodic(period, periods, seed), 16000).unwrap();
            let cfg = MeanSignalConfig { window_factor: factor, t0_mean: Some(period as f64 / 16000.0) };
            let y = mean_based_signal(&x, &cfg).unwrap();
            let gci = extract_intervals(&y.signal, EventKind::Gci, 0.0).unwrap();
            let goi = extract_intervals(&y.signal, EventKind::Goi, 0.00025).unwrap();
            prop_assert!(gci.intervals.len().abs_diff(periods) <= 1, "{} intervals", gci.intervals.len());
            prop_assert!(gci.intervals.len().abs_diff(goi.intervals.len()) <= 1);
            for set in [&gci, &goi] {
                for w in set.intervals.windows(2) {
                    prop_assert!(w[0].start < w[0].end && w[0].end <= w[1].start);
                }
            }
        }
    }
}
