//! Speech-like test signals with exactly known glottal events.
//!
//! The excitation is a glottal flow derivative built cycle by cycle: a
//! small step at opening, a sine rise, a polynomial fall to the negative
//! peak at closure and an exponential return. It drives a cascade of
//! formant resonators and a gentle high-pass stage that plays the role of
//! the recording chain. A matching EGG is generated from the same events.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detect::GlottalEvent;
use crate::error::{Error, Result};
use crate::meanshape::EventKind;
use crate::reference::{ReferenceEvents, ReferenceSource};
use crate::scalar::Scalar;
use crate::signal::{derive_seed, Waveform, ANALYSIS_RATE};

/// Generic vowel-like resonances: (centre Hz, bandwidth Hz).
pub const DEFAULT_FORMANTS: [(f64, f64); 3] = [(600.0, 80.0), (1200.0, 100.0), (2400.0, 120.0)];

/// Five-formant vowel table used by [`varied_corpus`].
pub const VOWELS: [[(f64, f64); 5]; 6] = [
    [(730.0, 90.0), (1090.0, 110.0), (2440.0, 170.0), (3400.0, 250.0), (4500.0, 300.0)],
    [(270.0, 60.0), (2290.0, 100.0), (3010.0, 170.0), (3700.0, 250.0), (4500.0, 300.0)],
    [(300.0, 60.0), (870.0, 90.0), (2240.0, 170.0), (3400.0, 250.0), (4500.0, 300.0)],
    [(530.0, 80.0), (1840.0, 100.0), (2480.0, 170.0), (3500.0, 250.0), (4500.0, 300.0)],
    [(570.0, 80.0), (840.0, 90.0), (2410.0, 170.0), (3500.0, 250.0), (4500.0, 300.0)],
    [(660.0, 90.0), (1720.0, 110.0), (2410.0, 170.0), (3500.0, 250.0), (4500.0, 300.0)],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub sample_rate: u32,
    /// Seconds.
    pub duration: f64,
    /// (time s, f0 Hz) breakpoints, linearly interpolated and held beyond
    /// the ends.
    pub f0_contour: Vec<(f64, f64)>,
    /// Voiced stretches (start s, end s); closures are placed from each
    /// start while before its end.
    pub voiced: Vec<(f64, f64)>,
    /// Open phase as a fraction of the period.
    pub open_quotient: f64,
    /// Share of the open phase spent rising.
    pub rise_fraction: f64,
    /// Flow-derivative step at opening, relative to the rise peak.
    pub opening_step: f64,
    /// Exponent of the closing fall.
    pub closing_exponent: f64,
    /// Time constant of the return phase, seconds.
    pub return_time: f64,
    pub formants: Vec<(f64, f64)>,
    /// Relative period perturbation (uniform, ±).
    pub jitter: f64,
    /// Relative amplitude perturbation (uniform, ±).
    pub shimmer: f64,
    /// Corner of the 2nd-order Butterworth high-pass as a multiple of the
    /// mean f0; `None` disables it.
    pub highpass_ratio: Option<f64>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            sample_rate: ANALYSIS_RATE,
            duration: 1.0,
            f0_contour: vec![(0.0, 100.0)],
            voiced: vec![(0.0, 1.0)],
            open_quotient: 0.65,
            rise_fraction: 0.35,
            opening_step: 0.3,
            closing_exponent: 10.0,
            return_time: 0.00007,
            formants: DEFAULT_FORMANTS.to_vec(),
            jitter: 0.0,
            shimmer: 0.0,
            highpass_ratio: Some(0.7),
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// Constant-f0 spec voiced over the whole duration.
    pub fn constant(f0: f64, duration: f64) -> Self {
        Self {
            duration,
            f0_contour: vec![(0.0, f0)],
            voiced: vec![(0.0, duration)],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::InvalidSampleRate);
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::config("duration", "must be positive"));
        }
        if self.f0_contour.is_empty() {
            return Err(Error::config("f0_contour", "needs at least one point"));
        }
        if self.f0_contour.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::config("f0_contour", "times must increase"));
        }
        if self.f0_contour.iter().any(|&(t, f)| !t.is_finite() || !(50.0..=400.0).contains(&f)) {
            return Err(Error::config("f0_contour", "f0 must lie in [50, 400] Hz"));
        }
        for w in self.voiced.windows(2) {
            if w[0].1 > w[1].0 {
                return Err(Error::config("voiced", "segments must be sorted and disjoint"));
            }
        }
        if self.voiced.iter().any(|&(a, b)| !(0.0 <= a && a < b && b <= self.duration)) {
            return Err(Error::config("voiced", "segments must lie inside the duration"));
        }
        if !(self.open_quotient > 0.2 && self.open_quotient < 0.9) {
            return Err(Error::config("open_quotient", "must lie in (0.2, 0.9)"));
        }
        if !(self.rise_fraction > 0.0 && self.rise_fraction < 1.0) {
            return Err(Error::config("rise_fraction", "must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.opening_step) {
            return Err(Error::config("opening_step", "must lie in [0, 1)"));
        }
        if !(self.closing_exponent >= 1.0 && self.closing_exponent.is_finite()) {
            return Err(Error::config("closing_exponent", "must be at least 1"));
        }
        if !(self.return_time > 0.0 && self.return_time.is_finite()) {
            return Err(Error::config("return_time", "must be positive"));
        }
        if self.formants.iter().any(|&(f, b)| !(f > 0.0 && f < nyquist && b > 0.0)) {
            return Err(Error::config("formants", "centres must lie in (0, Nyquist) with positive bandwidths"));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::config("jitter", "must lie in [0, 0.5)"));
        }
        if !(0.0..1.0).contains(&self.shimmer) {
            return Err(Error::config("shimmer", "must lie in [0, 1)"));
        }
        if let Some(r) = self.highpass_ratio {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::config("highpass_ratio", "must be positive"));
            }
        }
        Ok(())
    }

    /// f0 in Hz at time `t`.
    pub fn f0_at(&self, t: f64) -> f64 {
        let c = &self.f0_contour;
        let k = c.partition_point(|p| p.0 <= t);
        if k == 0 {
            return c[0].1;
        }
        if k == c.len() {
            return c[k - 1].1;
        }
        let (t0, f0) = c[k - 1];
        let (t1, f1) = c[k];
        f0 + (f1 - f0) * (t - t0) / (t1 - t0)
    }

    /// Average f0 over the voiced stretches (1 ms grid).
    pub fn mean_f0(&self) -> f64 {
        let (mut sum, mut count) = (0.0, 0usize);
        for &(a, b) in &self.voiced {
            let steps = ((b - a) / 0.001).ceil().max(1.0) as usize;
            for k in 0..steps {
                sum += self.f0_at(a + (b - a) * (k as f64 + 0.5) / steps as f64);
                count += 1;
            }
        }
        if count == 0 {
            self.f0_at(0.0)
        } else {
            sum / count as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct Synthesis<T> {
    pub speech: Waveform<T>,
    pub egg: Waveform<T>,
    /// Glottal flow derivative before the vocal tract.
    pub excitation: Waveform<T>,
    pub truth: ReferenceEvents,
}

struct Cycle {
    goi: Option<usize>,
    gci: usize,
    amp: f64,
}

/// Places closures on the sample grid and openings `open_quotient` of the
/// preceding period before each closure.
fn plan_cycles(spec: &SynthSpec) -> Vec<Vec<Cycle>> {
    let fs = spec.sample_rate as f64;
    let n = (spec.duration * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[0x5eed]));
    let jitter = |rng: &mut ChaCha8Rng, t: f64| {
        let u: f64 = rng.random_range(-1.0..=1.0);
        (1.0 / spec.f0_at(t)) * (1.0 + spec.jitter * u)
    };
    let mut segments = Vec::new();
    for &(s0, s1) in &spec.voiced {
        let mut cycles: Vec<Cycle> = Vec::new();
        let mut tg = s0;
        let mut prev: Option<f64> = None;
        while tg < s1 - 1e-9 {
            let next = tg + jitter(&mut rng, tg);
            let period = match prev {
                Some(p) => tg - p,
                None => next - tg,
            };
            let u: f64 = rng.random_range(-1.0..=1.0);
            let amp = 1.0 + spec.shimmer * u;
            let gci = (tg * fs).round() as usize;
            if gci >= n {
                break;
            }
            let open = (spec.open_quotient * period * fs).round() as usize;
            let goi = gci.checked_sub(open).filter(|&o| o < gci);
            cycles.push(Cycle { goi, gci, amp });
            prev = Some(tg);
            tg = next;
        }
        segments.push(cycles);
    }
    segments
}

/// Flow-derivative magnitude at closure that gives each cycle zero net
/// flow change, for open phase `te`, rise `tp`, opening step `d0`, closing
/// exponent `p` and return constant `ta` (all times in seconds).
pub fn closure_strength(te: f64, tp: f64, d0: f64, p: f64, ta: f64) -> f64 {
    let rise = d0 * tp + (1.0 - d0) * tp * 2.0 / std::f64::consts::PI;
    let fall = (te - tp) * (1.0 - 1.0 / (p + 1.0));
    (rise + fall) / ((te - tp) / (p + 1.0) + ta)
}

fn resonate(x: &mut [f64], f: f64, bw: f64, fs: f64) {
    let r = (-std::f64::consts::PI * bw / fs).exp();
    let b = 2.0 * r * (std::f64::consts::TAU * f / fs).cos();
    let c = -r * r;
    let a = 1.0 - b - c;
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = a * *v + b * y1 + c * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

fn butterworth_highpass(x: &mut [f64], fc: f64, fs: f64) {
    let k = (std::f64::consts::PI * fc / fs).tan();
    let s2 = std::f64::consts::SQRT_2;
    let norm = 1.0 / (1.0 + s2 * k + k * k);
    let (b0, b1, b2) = (norm, -2.0 * norm, norm);
    let a1 = 2.0 * (k * k - 1.0) * norm;
    let a2 = (1.0 - s2 * k + k * k) * norm;
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    for v in x.iter_mut() {
        let y = b0 * *v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
        x2 = x1;
        x1 = *v;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

/// Renders speech, EGG, excitation and the planted events.
pub fn synthesize<T: Scalar>(spec: &SynthSpec) -> Result<Synthesis<T>> {
    spec.validate()?;
    let fs = spec.sample_rate as f64;
    let n = (spec.duration * fs).round() as usize;
    let segments = plan_cycles(spec);

    let mut g = vec![0.0f64; n];
    let ta = spec.return_time;
    let tail = (12.0 * ta * fs).ceil() as usize;
    for cycle in segments.iter().flatten() {
        if let Some(goi) = cycle.goi {
            let te = (cycle.gci - goi) as f64 / fs;
            let tp = spec.rise_fraction * te;
            let p = spec.closing_exponent;
            let d0 = spec.opening_step;
            let ee = closure_strength(te, tp, d0, p, ta);
            for (k, slot) in g[goi..cycle.gci].iter_mut().enumerate() {
                let tau = k as f64 / fs;
                let v = if tau < tp {
                    d0 + (1.0 - d0) * (std::f64::consts::FRAC_PI_2 * tau / tp).sin()
                } else {
                    1.0 - (1.0 + ee) * ((tau - tp) / (te - tp)).powf(p)
                };
                *slot += cycle.amp * v;
            }
            for k in 0..tail.min(n - cycle.gci) {
                g[cycle.gci + k] -= cycle.amp * ee * (-(k as f64) / fs / ta).exp();
            }
        }
    }

    let mut speech = g.clone();
    for &(f, bw) in &spec.formants {
        resonate(&mut speech, f, bw, fs);
    }
    if let Some(ratio) = spec.highpass_ratio {
        butterworth_highpass(&mut speech, ratio * spec.mean_f0(), fs);
    }
    let peak = speech.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        speech.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }

    let egg = render_egg(&segments, n, fs);

    let gcis: Vec<GlottalEvent> = segments
        .iter()
        .flatten()
        .map(|c| GlottalEvent::new(EventKind::Gci, c.gci, spec.sample_rate, 0.0))
        .collect();
    let gois: Vec<GlottalEvent> = segments
        .iter()
        .flatten()
        .filter_map(|c| c.goi)
        .map(|o| GlottalEvent::new(EventKind::Goi, o, spec.sample_rate, 0.0))
        .collect();

    let cast = |v: Vec<f64>| Waveform::new(v.into_iter().map(T::of).collect(), spec.sample_rate);
    Ok(Synthesis {
        speech: cast(speech)?,
        egg: cast(egg)?,
        excitation: cast(g)?,
        truth: ReferenceEvents::new(gcis, gois, ReferenceSource::Synthetic, spec.sample_rate),
    })
}

/// Contact-area-like EGG: a fast rise at each closure, an exponential fall
/// from each opening, raised-cosine fades at voicing edges. Its forward
/// difference peaks exactly at the planted events.
fn render_egg(segments: &[Vec<Cycle>], n: usize, fs: f64) -> Vec<f64> {
    const OPEN_LEVEL: f64 = 0.3;
    let tau_c = 0.0001 * fs;
    let ramp = (0.01 * fs).round() as usize;
    let settle = (0.002 * fs).round() as usize;
    let mut e = vec![0.0; n];
    for cycles in segments {
        let Some(first) = cycles.first() else { continue };
        let last_gci = cycles.last().map(|c| c.gci).unwrap_or(0);
        // (index, is_closure, open-phase decay in samples)
        let mut marks: Vec<(usize, bool, f64)> = Vec::new();
        for c in cycles {
            if let Some(o) = c.goi {
                marks.push((o, false, 0.2 * (c.gci - o) as f64));
            }
            marks.push((c.gci, true, 0.0));
        }
        let onset = marks[0].0;
        let begin = onset.saturating_sub(ramp);
        let end = (last_gci + settle + ramp).min(n);
        let mut level = if first.goi.is_some() { 1.0 } else { OPEN_LEVEL };
        let (mut from, mut start_level, mut closing, mut decay) = (begin, level, level > 0.5, 1.0);
        let mut m = 0;
        for i in begin..end {
            while m < marks.len() && marks[m].0 == i {
                from = i;
                start_level = level;
                closing = marks[m].1;
                decay = marks[m].2;
                m += 1;
            }
            let k = (i - from) as f64;
            level = if closing {
                1.0 - (1.0 - start_level) * (-k / tau_c).exp()
            } else {
                start_level * (-k / decay).exp()
            };
            let env = if i < onset {
                let x = (i - begin) as f64 / (onset - begin).max(1) as f64;
                0.5 - 0.5 * (std::f64::consts::PI * x).cos()
            } else if i >= last_gci + settle {
                let x = (i - last_gci - settle) as f64 / ramp as f64;
                0.5 + 0.5 * (std::f64::consts::PI * x).cos()
            } else {
                1.0
            };
            e[i] = env * level;
        }
    }
    e
}

/// Specs for a corpus of two-segment utterances with varied f0, intonation
/// and vowel colour, deterministic in `seed`.
///
/// Each utterance has 0.2 s of silence at both ends, two voiced stretches
/// of 0.25-0.45 s separated by 0.08-0.15 s, a base f0 drawn from 75-240 Hz
/// with a sinusoidal intonation of 9-19 % (kept inside 60-300 Hz), 2 %
/// jitter, 3 % shimmer and one vowel from [`VOWELS`] with bandwidths doubled.
/// Pulses use a softer closure than the defaults (exponent 6, 0.15 ms
/// return), which keeps more energy at the fundamental.
pub fn varied_corpus(count: usize, seed: u64) -> Vec<SynthSpec> {
    (0..count as u64)
        .map(|u| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[u]));
            let base: f64 = rng.random_range(75.0..240.0);
            let depth: f64 = rng.random_range(0.09..0.19);
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let l1: f64 = rng.random_range(0.25..0.45);
            let gap: f64 = rng.random_range(0.08..0.15);
            let l2: f64 = rng.random_range(0.25..0.45);
            let vowel = VOWELS[rng.random_range(0..VOWELS.len())];
            let lead = 0.2;
            let voiced = vec![(lead, lead + l1), (lead + l1 + gap, lead + l1 + gap + l2)];
            let duration = lead + l1 + gap + l2 + lead;
            let f0_contour = (0..=(duration / 0.01).ceil() as usize)
                .map(|k| {
                    let t = k as f64 * 0.01;
                    let f = base * (1.0 + depth * (std::f64::consts::TAU * t / duration + phase).sin());
                    (t, f.clamp(60.0, 300.0))
                })
                .collect();
            SynthSpec {
                duration,
                f0_contour,
                voiced,
                formants: vowel.iter().map(|&(f, b)| (f, 2.0 * b)).collect(),
                closing_exponent: 6.0,
                return_time: 0.00015,
                jitter: 0.02,
                shimmer: 0.03,
                seed: derive_seed(seed, &[u, 1]),
                ..SynthSpec::default()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{degg_events, DeggConfig};

    #[test]
    fn constant_100hz_has_100_closures() {
        let s: Synthesis<f64> = synthesize(&SynthSpec::constant(100.0, 1.0)).unwrap();
        assert_eq!(s.truth.gcis.len(), 100);
        for (k, e) in s.truth.gcis.iter().enumerate() {
            assert_eq!(e.index, 160 * k);
            assert!((e.time - 0.01 * k as f64).abs() < 1e-12);
        }
        assert_eq!(s.speech.len(), 16000);
        assert!((s.speech.peak() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn open_quotient_offset() {
        let spec = SynthSpec {
            open_quotient: 0.6,
            ..SynthSpec::constant(100.0, 0.5)
        };
        let s: Synthesis<f64> = synthesize(&spec).unwrap();
        for o in &s.truth.gois {
            let next = s.truth.gcis.iter().find(|g| g.index > o.index).unwrap();
            assert!((next.time - o.time - 0.006).abs() < 1e-12);
        }
        assert!(s.truth.is_interleaved());
    }

    #[test]
    fn closure_strength_balances_area() {
        let (te, tp, d0, p, ta) = (0.0055, 0.35 * 0.0055, 0.03, 6.0, 0.00015);
        let ee = closure_strength(te, tp, d0, p, ta);
        // midpoint-rule integral of the open phase minus the return area
        let steps = 200_000;
        let h = te / steps as f64;
        let area: f64 = (0..steps)
            .map(|k| {
                let t = (k as f64 + 0.5) * h;
                if t < tp {
                    d0 + (1.0 - d0) * (std::f64::consts::FRAC_PI_2 * t / tp).sin()
                } else {
                    1.0 - (1.0 + ee) * ((t - tp) / (te - tp)).powf(p)
                }
            })
            .sum::<f64>()
            * h;
        assert!((area - ee * ta).abs() < 1e-9, "{area} vs {}", ee * ta);
    }

    #[test]
    fn excitation_peak_to_rms() {
        for f0 in [60.0, 100.0, 150.0, 200.0, 250.0, 300.0] {
            let s: Synthesis<f64> = synthesize(&SynthSpec::constant(f0, 0.5)).unwrap();
            let g = s.excitation.samples();
            for w in s.truth.gcis.windows(2).skip(1) {
                let seg = &g[w[0].index..w[1].index];
                let rms = (seg.iter().map(|v| v * v).sum::<f64>() / seg.len() as f64).sqrt();
                let peak = seg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(peak / rms >= 5.0, "{f0} Hz: {}", peak / rms);
            }
        }
    }

    #[test]
    fn egg_marks_planted_events() {
        let spec = SynthSpec {
            duration: 0.8,
            voiced: vec![(0.2, 0.6)],
            jitter: 0.02,
            shimmer: 0.03,
            seed: 4,
            ..SynthSpec::default()
        };
        let s: Synthesis<f64> = synthesize(&spec).unwrap();
        let r = degg_events(&s.egg, &DeggConfig::default()).unwrap();
        assert_eq!(r.gcis.iter().map(|e| e.index).collect::<Vec<_>>(),
                   s.truth.gcis.iter().map(|e| e.index).collect::<Vec<_>>());
        assert_eq!(r.gois.iter().map(|e| e.index).collect::<Vec<_>>(),
                   s.truth.gois.iter().map(|e| e.index).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_and_validated() {
        let spec = varied_corpus(1, 9).remove(0);
        let a: Synthesis<f64> = synthesize(&spec).unwrap();
        let b: Synthesis<f64> = synthesize(&spec).unwrap();
        assert_eq!(a.speech, b.speech);
        assert_eq!(a.truth, b.truth);
        let bad = SynthSpec {
            open_quotient: 0.95,
            ..SynthSpec::default()
        };
        assert_eq!(synthesize::<f64>(&bad).unwrap_err().field(), Some("open_quotient"));
        let bad = SynthSpec {
            f0_contour: vec![(0.0, 500.0)],
            ..SynthSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthSpec {
            formants: vec![(9000.0, 100.0)],
            ..SynthSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn corpus_shape() {
        let c = varied_corpus(50, 1);
        assert_eq!(c.len(), 50);
        for s in &c {
            s.validate().unwrap();
            assert_eq!(s.voiced.len(), 2);
            assert!(s.f0_contour.iter().all(|&(_, f)| (60.0..=300.0).contains(&f)));
        }
    }
}
