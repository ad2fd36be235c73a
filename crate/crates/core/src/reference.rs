//! Ground-truth events from the electroglottograph and their alignment to
//! the acoustic channel.

use serde::{Deserialize, Serialize};

use crate::detect::GlottalEvent;
use crate::diagnostic::Diagnostic;
use crate::error::{Error, Result};
use crate::lp::Residual;
use crate::meanshape::EventKind;
use crate::scalar::Scalar;
use crate::signal::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceSource {
    Egg,
    Synthetic,
    /// Read from an events file.
    Imported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEvents {
    pub gcis: Vec<GlottalEvent>,
    pub gois: Vec<GlottalEvent>,
    /// Total shift applied by alignment, seconds.
    pub alignment_shift: f64,
    pub source: ReferenceSource,
    pub sample_rate: u32,
    pub diagnostics: Vec<Diagnostic>,
}

impl ReferenceEvents {
    pub fn new(gcis: Vec<GlottalEvent>, gois: Vec<GlottalEvent>, source: ReferenceSource, sample_rate: u32) -> Self {
        Self {
            gcis,
            gois,
            alignment_shift: 0.0,
            source,
            sample_rate,
            diagnostics: Vec::new(),
        }
    }

    pub fn events(&self, kind: EventKind) -> &[GlottalEvent] {
        match kind {
            EventKind::Gci => &self.gcis,
            EventKind::Goi => &self.gois,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.gcis.is_empty() && self.gois.is_empty()
    }

    /// True when each kind is strictly increasing and every GOI lies
    /// strictly between its neighbouring GCIs.
    pub fn is_interleaved(&self) -> bool {
        let increasing = |v: &[GlottalEvent]| v.windows(2).all(|w| w[0].index < w[1].index);
        if !increasing(&self.gcis) || !increasing(&self.gois) {
            return false;
        }
        self.gois.iter().all(|o| {
            let next = self.gcis.partition_point(|g| g.index <= o.index);
            let on_gci = next > 0 && self.gcis[next - 1].index == o.index;
            let between_prev_next = next == 0 || next == self.gcis.len() || {
                let prev = self.gcis[next - 1].index;
                prev < o.index && o.index < self.gcis[next].index
            };
            !on_gci && between_prev_next
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EggPolarity {
    /// Closure is whichever sign reaches the larger dEGG magnitude.
    Auto,
    /// Closure gives positive dEGG peaks.
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeggConfig {
    pub polarity: EggPolarity,
    /// A closure peak must exceed this multiple of the local median |dEGG|.
    pub median_factor: f64,
    /// Neighbourhood for the local median, seconds.
    pub median_window: f64,
    /// A closure peak must also exceed this fraction of max |dEGG|.
    pub floor_rel: f64,
    /// Peaks closer than this keep only the strongest, seconds.
    pub merge_distance: f64,
    /// Larger gaps between closures break voicing, seconds.
    pub max_gap: f64,
}

impl Default for DeggConfig {
    fn default() -> Self {
        Self {
            polarity: EggPolarity::Auto,
            median_factor: 3.0,
            median_window: 0.05,
            floor_rel: 0.05,
            merge_distance: 0.0025,
            max_gap: 0.02,
        }
    }
}

/// Forward difference `d[n] = e[n+1] - e[n]`, so an event at `n` marks
/// the change between samples `n` and `n+1`.
pub fn degg<T: Scalar>(egg: &[T]) -> Vec<f64> {
    egg.windows(2).map(|w| w[1].as_f64() - w[0].as_f64()).collect()
}

/// Reference GCIs at prominent closure peaks of the dEGG and GOIs at the
/// deepest opening dip before each GCI.
pub fn degg_events<T: Scalar>(egg: &Waveform<T>, cfg: &DeggConfig) -> Result<ReferenceEvents> {
    if !(cfg.median_factor >= 0.0 && cfg.floor_rel >= 0.0 && cfg.median_window > 0.0) {
        return Err(Error::config("degg", "thresholds must be non-negative and the window positive"));
    }
    let fs = egg.sample_rate();
    let mut d = degg(egg.samples());
    let peak_pos = d.iter().copied().fold(0.0, f64::max);
    let peak_neg = d.iter().copied().fold(0.0, f64::min);
    let mut out = ReferenceEvents::new(Vec::new(), Vec::new(), ReferenceSource::Egg, fs);
    if peak_pos == 0.0 && peak_neg == 0.0 {
        out.diagnostics.push(Diagnostic::FlatEgg);
        return Ok(out);
    }
    let flip = match cfg.polarity {
        EggPolarity::Positive => false,
        EggPolarity::Negative => true,
        EggPolarity::Auto => -peak_neg > peak_pos,
    };
    if flip {
        d.iter_mut().for_each(|v| *v = -*v);
    }
    let max_abs = peak_pos.max(-peak_neg);
    let floor = cfg.floor_rel * max_abs;
    let half = ((cfg.median_window * fs as f64) / 2.0).round() as usize;
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let n = d.len();

    let mut candidates: Vec<usize> = (1..n.saturating_sub(1))
        .filter(|&i| d[i] > floor && d[i] > d[i - 1] && d[i] >= d[i + 1])
        .filter(|&i| {
            let mut hood = abs[i.saturating_sub(half)..(i + half + 1).min(n)].to_vec();
            let mid = hood.len() / 2;
            let (_, median, _) = hood.select_nth_unstable_by(mid, f64::total_cmp);
            d[i] > cfg.median_factor * *median
        })
        .collect();

    // strongest first; earlier index wins ties
    candidates.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
    let merge = (cfg.merge_distance * fs as f64).round() as usize;
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept.iter().all(|&k| k.abs_diff(c) > merge) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    if kept.is_empty() {
        out.diagnostics.push(Diagnostic::FlatEgg);
        return Ok(out);
    }

    let max_gap = (cfg.max_gap * fs as f64).round() as usize;
    let deepest = |lo: usize, hi: usize| -> Option<usize> {
        let mut best: Option<usize> = None;
        for i in lo..hi {
            if d[i] < 0.0 && best.is_none_or(|b| d[i] < d[b]) {
                best = Some(i);
            }
        }
        best
    };
    let mut gois = Vec::new();
    for (j, &g) in kept.iter().enumerate() {
        let run_start = j == 0 || g - kept[j - 1] > max_gap;
        let found = if run_start {
            match kept.get(j + 1) {
                Some(&next) if next - g <= max_gap => deepest(g.saturating_sub(next - g) + 1, g),
                _ => None,
            }
        } else {
            deepest(kept[j - 1] + 1, g)
        };
        if let Some(o) = found {
            gois.push(GlottalEvent::new(EventKind::Goi, o, fs, -d[o]));
        }
    }
    out.gcis = kept
        .iter()
        .map(|&g| GlottalEvent::new(EventKind::Gci, g, fs, d[g]))
        .collect();
    out.gois = gois;
    Ok(out)
}

/// Finds the constant shift within `±max_shift` seconds that maximizes
/// `sum |residual[gci + s]|` over the reference GCIs and applies it to all
/// reference events. Ties prefer the smallest shift. A flat objective
/// leaves the reference unshifted with a warning.
pub fn align_reference<T: Scalar>(
    reference: &ReferenceEvents,
    residual: &Residual<T>,
    max_shift: f64,
) -> Result<ReferenceEvents> {
    if reference.gcis.is_empty() {
        return Err(Error::EmptyReference);
    }
    if !(max_shift >= 0.0 && max_shift.is_finite()) {
        return Err(Error::config("max_shift", "must be a finite non-negative duration"));
    }
    let fs = residual.signal.sample_rate();
    let r = residual.samples();
    let n = r.len() as isize;
    let reach = (max_shift * fs as f64).floor() as isize;
    let objective = |s: isize| -> f64 {
        reference
            .gcis
            .iter()
            .map(|g| g.index as isize + s)
            .filter(|i| (0..n).contains(i))
            .map(|i| r[i as usize].as_f64().abs())
            .sum()
    };
    let mut shifts: Vec<isize> = (-reach..=reach).collect();
    shifts.sort_by_key(|s| (s.abs(), *s));
    let scores: Vec<(isize, f64)> = shifts.iter().map(|&s| (s, objective(s))).collect();
    let hi = scores.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    let lo = scores.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);

    let mut out = reference.clone();
    if !(hi > lo) || hi <= 0.0 {
        out.diagnostics.push(Diagnostic::AmbiguousAlignment);
        return Ok(out);
    }
    let best = scores.iter().find(|x| x.1 == hi).expect("maximum exists").0;
    let move_all = |v: &[GlottalEvent]| -> Vec<GlottalEvent> {
        v.iter()
            .filter_map(|e| {
                let i = e.index as isize + best;
                (0..n).contains(&i).then(|| GlottalEvent::new(e.kind, i as usize, fs, e.salience))
            })
            .collect()
    };
    out.gcis = move_all(&reference.gcis);
    out.gois = move_all(&reference.gois);
    out.alignment_shift += best as f64 / fs as f64;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{FrameStatus, LpFrame};

    fn ev(kind: EventKind, i: usize) -> GlottalEvent {
        GlottalEvent::new(kind, i, 16000, 0.0)
    }

    /// Square-ish EGG: sharp rise at each closure, slow linear fall around
    /// each opening.
    fn square_egg(closures: &[usize], open_centres: &[usize], len: usize) -> Waveform<f64> {
        let mut e = vec![0.0; len];
        let mut level = 0.0;
        for n in 0..len {
            if closures.contains(&n) {
                level = 1.0;
            }
            for &c in open_centres {
                if n + 10 >= c && n < c + 10 {
                    level -= 0.05;
                }
            }
            e[n] = level;
        }
        Waveform::new(e, 16000).unwrap()
    }

    #[test]
    fn piecewise_egg() {
        let closures: Vec<usize> = (0..30).map(|k| 2000 + 160 * k).collect();
        let opens: Vec<usize> = closures.iter().skip(1).map(|&c| c - 60).collect();
        let egg = square_egg(&closures, &opens, 8000);
        let r = degg_events(&egg, &DeggConfig::default()).unwrap();
        // forward difference: the jump into sample c shows at c - 1
        let want: Vec<usize> = closures.iter().map(|c| c - 1).collect();
        assert_eq!(r.gcis.iter().map(|e| e.index).collect::<Vec<_>>(), want);
        assert_eq!(r.gois.len(), opens.len());
        for (o, want) in r.gois.iter().zip(&opens) {
            assert!(o.index.abs_diff(*want) <= 12);
        }
        assert!(r.is_interleaved());
    }

    #[test]
    fn negated_egg_gives_same_events() {
        let closures: Vec<usize> = (0..20).map(|k| 1600 + 150 * k).collect();
        let opens: Vec<usize> = closures.iter().skip(1).map(|&c| c - 50).collect();
        let egg = square_egg(&closures, &opens, 6000);
        let a = degg_events(&egg, &DeggConfig::default()).unwrap();
        let b = degg_events(&egg.negated(), &DeggConfig::default()).unwrap();
        assert_eq!(a.gcis, b.gcis);
        assert_eq!(a.gois, b.gois);
    }

    #[test]
    fn flat_egg() {
        let r = degg_events(&Waveform::new(vec![0.3; 1000], 16000).unwrap(), &DeggConfig::default()).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.diagnostics, vec![Diagnostic::FlatEgg]);
    }

    #[test]
    fn interleaving_check() {
        let gcis = vec![ev(EventKind::Gci, 100), ev(EventKind::Gci, 200)];
        let ok = ReferenceEvents::new(gcis.clone(), vec![ev(EventKind::Goi, 150)], ReferenceSource::Synthetic, 16000);
        assert!(ok.is_interleaved());
        let bad = ReferenceEvents::new(
            gcis.clone(),
            vec![ev(EventKind::Goi, 150), ev(EventKind::Goi, 160)],
            ReferenceSource::Synthetic,
            16000,
        );
        // two GOIs in one cycle are still strictly between GCIs
        assert!(bad.is_interleaved());
        let on = ReferenceEvents::new(gcis, vec![ev(EventKind::Goi, 200)], ReferenceSource::Synthetic, 16000);
        assert!(!on.is_interleaved());
    }

    fn spikes(at: &[usize], len: usize) -> Residual<f64> {
        let mut v = vec![0.01; len];
        for &i in at {
            v[i] = 1.0;
        }
        Residual {
            signal: Waveform::new(v, 16000).unwrap(),
            frames: vec![LpFrame {
                start: 0,
                coeffs: vec![],
                status: FrameStatus::Ok,
            }],
        }
    }

    #[test]
    fn recovers_planted_shift() {
        let truth: Vec<usize> = (0..40).map(|k| 1000 + 137 * k).collect();
        let r = spikes(&truth, 8000);
        // reference late by 0.8 ms
        let late: Vec<GlottalEvent> = truth.iter().map(|&i| ev(EventKind::Gci, i + 13)).collect();
        let reference = ReferenceEvents::new(late, vec![], ReferenceSource::Egg, 16000);
        let a = align_reference(&reference, &r, 0.002).unwrap();
        assert!((a.alignment_shift + 0.0008).abs() <= 0.0001, "{}", a.alignment_shift);
        assert_eq!(a.gcis.iter().map(|e| e.index).collect::<Vec<_>>(), truth);
        let again = align_reference(&a, &r, 0.002).unwrap();
        assert!((again.alignment_shift - a.alignment_shift).abs() <= 1.0 / 16000.0);
    }

    #[test]
    fn already_aligned_and_bounded() {
        let truth: Vec<usize> = (0..20).map(|k| 500 + 100 * k).collect();
        let r = spikes(&truth, 4000);
        let reference = ReferenceEvents::new(
            truth.iter().map(|&i| ev(EventKind::Gci, i)).collect(),
            vec![],
            ReferenceSource::Egg,
            16000,
        );
        assert_eq!(align_reference(&reference, &r, 0.002).unwrap().alignment_shift, 0.0);
        // spikes 3 ms away cannot be reached
        let far = ReferenceEvents::new(
            truth.iter().map(|&i| ev(EventKind::Gci, i + 48)).collect(),
            vec![],
            ReferenceSource::Egg,
            16000,
        );
        assert!(align_reference(&far, &r, 0.002).unwrap().alignment_shift.abs() <= 0.002);
    }

    #[test]
    fn flat_objective_and_empty() {
        let r = spikes(&[], 2000);
        let reference = ReferenceEvents::new(vec![ev(EventKind::Gci, 500)], vec![], ReferenceSource::Egg, 16000);
        let a = align_reference(&reference, &r, 0.002).unwrap();
        assert_eq!(a.alignment_shift, 0.0);
        assert_eq!(a.diagnostics, vec![Diagnostic::AmbiguousAlignment]);
        let empty = ReferenceEvents::new(vec![], vec![], ReferenceSource::Egg, 16000);
        assert!(matches!(align_reference(&empty, &r, 0.002), Err(Error::EmptyReference)));
    }
}
