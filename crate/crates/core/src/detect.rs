//! Two-step GCI/GOI detection: mean-based-signal intervals refined by the
//! strongest LP-residual peak inside each interval.

use serde::{Deserialize, Serialize};

use crate::diagnostic::Diagnostic;
use crate::error::{Error, Result};
use crate::lp::{lp_residual, LpConfig, Residual};
use crate::meanshape::{
    estimate_mean_pitch, find_extrema, intervals_from_extrema, mean_based_signal, EventInterval, EventKind,
    MeanSignal, MeanSignalConfig, DEFAULT_RIPPLE_REL,
};
use crate::scalar::Scalar;
use crate::signal::Waveform;

/// Fewest GCI intervals for which automatic polarity is trusted.
pub const MIN_POLARITY_INTERVALS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolarityMode {
    Auto,
    Positive,
    Negative,
    Absolute,
}

impl std::str::FromStr for PolarityMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(Self::Auto),
            "positive" | "pos" => Ok(Self::Positive),
            "negative" | "neg" => Ok(Self::Negative),
            "absolute" | "abs" => Ok(Self::Absolute),
            other => Err(format!("unknown polarity `{other}` (auto|positive|negative|absolute)")),
        }
    }
}

/// Sign convention used when picking residual peaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Absolute,
}

impl Polarity {
    #[inline]
    fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Polarity::Positive => v,
            Polarity::Negative => -v,
            Polarity::Absolute => v.abs(),
        }
    }
}

/// A detected or reference instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlottalEvent {
    pub kind: EventKind,
    pub index: usize,
    /// Seconds; always `index / sample_rate`.
    pub time: f64,
    /// Polarity-resolved residual value at the peak (zero for reference
    /// events without one).
    pub salience: f64,
}

impl GlottalEvent {
    pub fn new(kind: EventKind, index: usize, sample_rate: u32, salience: f64) -> Self {
        Self {
            kind,
            index,
            time: index as f64 / sample_rate as f64,
            salience,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub lp: LpConfig,
    pub mean: MeanSignalConfig,
    pub polarity: PolarityMode,
    /// Widening applied to both ends of GCI intervals, seconds.
    pub gci_margin: f64,
    /// Widening applied to both ends of GOI intervals, seconds.
    pub goi_margin: f64,
    /// Minimum extremum swing relative to `max |y|`.
    pub ripple_rel: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            lp: LpConfig::default(),
            mean: MeanSignalConfig::default(),
            polarity: PolarityMode::Auto,
            gci_margin: 0.0,
            goi_margin: 0.00025,
            ripple_rel: DEFAULT_RIPPLE_REL,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        self.lp.frame_geometry(sample_rate)?;
        if !(self.mean.window_factor > 0.0 && self.mean.window_factor.is_finite()) {
            return Err(Error::config("window_factor", "must be positive"));
        }
        if let Some(t0) = self.mean.t0_mean {
            if !(t0 > 0.0 && t0.is_finite()) {
                return Err(Error::config("t0_mean", "must be positive"));
            }
        }
        for (field, m) in [("gci_margin", self.gci_margin), ("goi_margin", self.goi_margin)] {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::config(field, "must be a finite non-negative duration"));
            }
        }
        if !(self.ripple_rel >= 0.0 && self.ripple_rel < 1.0) {
            return Err(Error::config("ripple_rel", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Everything the detector computed, for inspection and export.
#[derive(Debug, Clone)]
pub struct Detection<T> {
    pub gcis: Vec<GlottalEvent>,
    pub gois: Vec<GlottalEvent>,
    /// Polarity the peaks were picked with.
    pub polarity: Polarity,
    /// Mean-based signal as computed from the input (before any
    /// orientation flip). `None` when no pitch could be found.
    pub mean: Option<MeanSignal<T>>,
    /// Whether the mean-based signal was negated before extracting
    /// intervals.
    pub mean_flipped: bool,
    pub residual: Residual<T>,
    pub gci_intervals: Vec<EventInterval>,
    pub goi_intervals: Vec<EventInterval>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Strongest polarity-resolved residual sample in `interval`; ties go to
/// the earliest index.
pub fn pick_peak<T: Scalar>(r: &Residual<T>, interval: &EventInterval, polarity: Polarity) -> GlottalEvent {
    let s = r.samples();
    debug_assert!(interval.start < interval.end && interval.end <= s.len());
    let mut best = interval.start;
    let mut best_v = polarity.apply(s[best]);
    for (i, &v) in s.iter().enumerate().take(interval.end).skip(interval.start + 1) {
        let v = polarity.apply(v);
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    GlottalEvent::new(interval.kind, best, r.signal.sample_rate(), best_v.as_f64())
}

/// Chooses the residual sign that dominates inside the GCI intervals by
/// comparing the summed positive maxima with the summed magnitudes of
/// negative minima. With fewer than [`MIN_POLARITY_INTERVALS`] intervals
/// the result is [`Polarity::Absolute`] together with a warning.
pub fn resolve_polarity<T: Scalar>(r: &Residual<T>, intervals: &[EventInterval]) -> (Polarity, Option<Diagnostic>) {
    if intervals.len() < MIN_POLARITY_INTERVALS {
        return (
            Polarity::Absolute,
            Some(Diagnostic::PolarityFallback {
                intervals: intervals.len(),
            }),
        );
    }
    let s = r.samples();
    let (mut pos, mut neg) = (0.0f64, 0.0f64);
    for iv in intervals {
        let seg = &s[iv.start..iv.end];
        let hi = seg.iter().fold(T::neg_infinity(), |m, &v| m.max(v)).as_f64();
        let lo = seg.iter().fold(T::infinity(), |m, &v| m.min(v)).as_f64();
        pos += hi.max(0.0);
        neg += (-lo).max(0.0);
    }
    let p = if pos >= neg { Polarity::Positive } else { Polarity::Negative };
    (p, None)
}

/// Mean over `intervals` of the largest residual magnitude inside each.
pub fn interval_salience<T: Scalar>(r: &Residual<T>, intervals: &[EventInterval]) -> f64 {
    if intervals.is_empty() {
        return 0.0;
    }
    let s = r.samples();
    let total: f64 = intervals
        .iter()
        .map(|iv| s[iv.start..iv.end].iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs())))
        .sum();
    total / intervals.len() as f64
}

/// Decides whether the mean-based signal should be negated: the orientation
/// whose GCI intervals hold the stronger residual peaks wins. Only residual
/// magnitudes are compared, so negating the input swaps the two scores.
pub fn orientation_flip<T: Scalar>(y: &[T], r: &Residual<T>, ripple_rel: f64, margin: f64) -> Result<bool> {
    let (n, fs) = (y.len(), r.signal.sample_rate());
    let neg: Vec<T> = y.iter().map(|&v| -v).collect();
    let score = |v: &[T]| -> Result<f64> {
        let ext = find_extrema(v, ripple_rel);
        if ext.len() < 2 {
            return Ok(0.0);
        }
        let ivs = intervals_from_extrema(&ext, n, fs, EventKind::Gci, margin)?.intervals;
        Ok(interval_salience(r, &ivs))
    };
    Ok(score(&neg)? > score(y)?)
}

/// Runs the full detector.
///
/// In `Auto` and `Absolute` modes the mean-based signal is negated when its
/// negation puts stronger residual peaks inside the GCI intervals, so an
/// inverted recording yields the same intervals. Explicit `Positive` or
/// `Negative` keep or negate it unconditionally.
pub fn detect_events<T: Scalar>(x: &Waveform<T>, cfg: &DetectorConfig) -> Result<Detection<T>> {
    cfg.validate(x.sample_rate())?;
    let residual = lp_residual(x, &cfg.lp)?;
    let mut diagnostics = residual.diagnostics();
    let empty = |residual: Residual<T>, mean: Option<MeanSignal<T>>, mut diagnostics: Vec<Diagnostic>| {
        diagnostics.push(Diagnostic::Unvoiced);
        Detection {
            gcis: Vec::new(),
            gois: Vec::new(),
            polarity: Polarity::Absolute,
            mean,
            mean_flipped: false,
            residual,
            gci_intervals: Vec::new(),
            goi_intervals: Vec::new(),
            diagnostics,
        }
    };

    let t0 = match cfg.mean.t0_mean {
        Some(t0) => t0,
        None => match estimate_mean_pitch(x) {
            Ok(t0) => t0,
            Err(Error::NoVoicedFrames) => return Ok(empty(residual, None, diagnostics)),
            Err(e) => return Err(e),
        },
    };
    let mean = mean_based_signal(
        x,
        &MeanSignalConfig {
            t0_mean: Some(t0),
            ..cfg.mean
        },
    )?;

    let flip = match cfg.polarity {
        PolarityMode::Positive => false,
        PolarityMode::Negative => true,
        PolarityMode::Auto | PolarityMode::Absolute => {
            orientation_flip(mean.signal.samples(), &residual, cfg.ripple_rel, cfg.gci_margin)?
        }
    };
    let y: Vec<T> = if flip {
        mean.signal.samples().iter().map(|&v| -v).collect()
    } else {
        mean.signal.samples().to_vec()
    };
    let extrema = find_extrema(&y, cfg.ripple_rel);
    if extrema.len() < 2 {
        return Ok(empty(residual, Some(mean), diagnostics));
    }
    let (n, fs) = (x.len(), x.sample_rate());
    let gci_intervals = intervals_from_extrema(&extrema, n, fs, EventKind::Gci, cfg.gci_margin)?.intervals;
    let goi_intervals = intervals_from_extrema(&extrema, n, fs, EventKind::Goi, cfg.goi_margin)?.intervals;

    let polarity = match cfg.polarity {
        PolarityMode::Positive => Polarity::Positive,
        PolarityMode::Negative => Polarity::Negative,
        PolarityMode::Absolute => Polarity::Absolute,
        PolarityMode::Auto => {
            let (p, warning) = resolve_polarity(&residual, &gci_intervals);
            diagnostics.extend(warning);
            p
        }
    };
    let gcis = gci_intervals.iter().map(|iv| pick_peak(&residual, iv, polarity)).collect();
    let gois = goi_intervals.iter().map(|iv| pick_peak(&residual, iv, polarity)).collect();
    Ok(Detection {
        gcis,
        gois,
        polarity,
        mean: Some(mean),
        mean_flipped: flip,
        residual,
        gci_intervals,
        goi_intervals,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{FrameStatus, LpFrame};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn residual(v: Vec<f64>) -> Residual<f64> {
        Residual {
            signal: Waveform::new(v, 16000).unwrap(),
            frames: vec![LpFrame {
                start: 0,
                coeffs: vec![],
                status: FrameStatus::Ok,
            }],
        }
    }

    fn gci(start: usize, end: usize) -> EventInterval {
        EventInterval {
            kind: EventKind::Gci,
            start,
            end,
        }
    }

    #[test]
    fn single_spike() {
        let mut v = vec![0.0; 100];
        v[42] = 0.7;
        let e = pick_peak(&residual(v), &gci(30, 60), Polarity::Positive);
        assert_eq!(e.index, 42);
        assert_eq!(e.salience, 0.7);
        assert_eq!(e.time, 42.0 / 16000.0);
    }

    #[test]
    fn larger_spike_wins_and_ties_go_early() {
        let mut v = vec![0.0; 100];
        v[40] = 1.0;
        v[50] = 0.8;
        assert_eq!(pick_peak(&residual(v.clone()), &gci(30, 60), Polarity::Positive).index, 40);
        v[50] = 1.0;
        assert_eq!(pick_peak(&residual(v.clone()), &gci(30, 60), Polarity::Positive).index, 40);
        v[55] = -2.0;
        assert_eq!(pick_peak(&residual(v.clone()), &gci(30, 60), Polarity::Negative).index, 55);
        assert_eq!(pick_peak(&residual(v), &gci(30, 60), Polarity::Absolute).index, 55);
    }

    fn spiky(period: usize, periods: usize, sign: f64) -> (Vec<f64>, Vec<EventInterval>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut v: Vec<f64> = (0..period * periods).map(|_| rng.random_range(-0.1..0.1)).collect();
        let mut ivs = Vec::new();
        for p in 0..periods {
            v[p * period + period / 2] = sign;
            ivs.push(gci(p * period, (p + 1) * period));
        }
        (v, ivs)
    }

    #[test]
    fn polarity_from_spikes() {
        let (v, ivs) = spiky(100, 12, -1.0);
        let r = residual(v.clone());
        assert_eq!(resolve_polarity(&r, &ivs), (Polarity::Negative, None));
        let neg = residual(v.iter().map(|x| -x).collect());
        assert_eq!(resolve_polarity(&neg, &ivs), (Polarity::Positive, None));
        assert!((interval_salience(&r, &ivs) - 1.0).abs() < 1e-15);
        assert_eq!(interval_salience(&r, &[]), 0.0);
    }

    #[test]
    fn polarity_fallback() {
        let (v, ivs) = spiky(100, 5, 1.0);
        let (p, d) = resolve_polarity(&residual(v), &ivs);
        assert_eq!(p, Polarity::Absolute);
        assert_eq!(d, Some(Diagnostic::PolarityFallback { intervals: 5 }));
    }

    #[test]
    fn silent_input_is_unvoiced() {
        let x = Waveform::<f64>::zeros(16000, 16000).unwrap();
        let d = detect_events(&x, &DetectorConfig::default()).unwrap();
        assert!(d.gcis.is_empty() && d.gois.is_empty());
        assert!(d.diagnostics.contains(&Diagnostic::Unvoiced));
        let with_t0 = DetectorConfig {
            mean: MeanSignalConfig {
                t0_mean: Some(0.008),
                ..MeanSignalConfig::default()
            },
            ..DetectorConfig::default()
        };
        let d = detect_events(&x, &with_t0).unwrap();
        assert!(d.gcis.is_empty());
        assert!(d.diagnostics.contains(&Diagnostic::Unvoiced));
    }

    #[test]
    fn config_validation_names_fields() {
        let x = Waveform::<f64>::zeros(16000, 16000).unwrap();
        let bad = DetectorConfig {
            goi_margin: -1.0,
            ..DetectorConfig::default()
        };
        assert_eq!(detect_events(&x, &bad).unwrap_err().field(), Some("goi_margin"));
        let bad = DetectorConfig {
            mean: MeanSignalConfig {
                window_factor: 0.0,
                t0_mean: None,
            },
            ..DetectorConfig::default()
        };
        assert_eq!(detect_events(&x, &bad).unwrap_err().field(), Some("window_factor"));
    }

    #[test]
    fn polarity_mode_parsing() {
        assert_eq!("Auto".parse::<PolarityMode>().unwrap(), PolarityMode::Auto);
        assert_eq!("abs".parse::<PolarityMode>().unwrap(), PolarityMode::Absolute);
        assert!("sideways".parse::<PolarityMode>().is_err());
    }

    proptest! {
        #[test]
        fn matches_linear_scan(seed in any::<u64>(), start in 0usize..200, len in 1usize..100, mode in 0u8..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // coarse values force ties
            let v: Vec<f64> = (0..300).map(|_| rng.random_range(-5i32..=5) as f64 / 5.0).collect();
            let polarity = [Polarity::Positive, Polarity::Negative, Polarity::Absolute][mode as usize];
            let iv = gci(start, start + len);
            let got = pick_peak(&residual(v.clone()), &iv, polarity);
            let score = |x: f64| match polarity {
                Polarity::Positive => x,
                Polarity::Negative => -x,
                Polarity::Absolute => x.abs(),
            };
            let mut best = start;
            for i in start..start + len {
                if score(v[i]) > score(v[best]) {
                    best = i;
                }
            }
            prop_assert_eq!(got.index, best);
        }
    }
}
