//! Cycle-based identification scoring, error histograms and corpus sweeps.

mod corpus;
mod sweep;

pub use corpus::{
    evaluate_corpus, load_corpus, parse_manifest, speaker_of, CorpusOptions, CorpusReport, ManifestEntry,
    ReferenceSpec, UtteranceReport, Utterance, synthetic_corpus,
};
pub use sweep::{parse_range, sweep_noise, sweep_window, NoiseKind, SweepFailure, SweepRow, SweepTable};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detect::GlottalEvent;
use crate::error::{Error, Result};
use crate::meanshape::EventKind;
use crate::reference::ReferenceEvents;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    /// Reference gaps longer than this split voicing into separate runs,
    /// seconds.
    pub max_gap: f64,
    /// Accuracy bound, seconds.
    pub tolerance: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            max_gap: 0.02,
            tolerance: 0.00025,
        }
    }
}

/// Identification counts, rates and timing errors for one event kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: EventKind,
    pub n_cycles: usize,
    pub identified: usize,
    pub missed: usize,
    pub false_alarms: usize,
    /// Detections far from every reference cycle; not part of the rates.
    pub out_of_voicing: usize,
    pub idr: f64,
    pub mr: f64,
    pub far: f64,
    /// Standard deviation of the timing errors, seconds (0 when nothing
    /// was identified).
    pub ida: f64,
    /// Mean timing error, seconds.
    pub bias: f64,
    /// Share of identified cycles with |error| within the tolerance.
    pub acc025: f64,
    /// Signed timing errors (detected - reference), seconds.
    pub errors: Vec<f64>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl EvalReport {
    fn from_counts(kind: EventKind, identified: usize, missed: usize, false_alarms: usize, out_of_voicing: usize, errors: Vec<f64>, tolerance: f64) -> Self {
        let n = identified + missed + false_alarms;
        let rate = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        let (bias, ida) = mean_std(&errors);
        Self {
            kind,
            n_cycles: n,
            identified,
            missed,
            false_alarms,
            out_of_voicing,
            idr: rate(identified),
            mr: rate(missed),
            far: rate(false_alarms),
            ida,
            bias,
            acc025: fraction_within(&errors, tolerance),
            errors,
            metadata: BTreeMap::new(),
        }
    }

    /// Pools several reports of the same kind; counts and errors add up and
    /// the rates are recomputed. Metadata is taken from the first report.
    pub fn merge(reports: &[EvalReport], tolerance: f64) -> Option<EvalReport> {
        let first = reports.first()?;
        let sum = |f: fn(&EvalReport) -> usize| reports.iter().map(f).sum::<usize>();
        let errors = reports.iter().flat_map(|r| r.errors.iter().copied()).collect();
        let mut out = Self::from_counts(
            first.kind,
            sum(|r| r.identified),
            sum(|r| r.missed),
            sum(|r| r.false_alarms),
            sum(|r| r.out_of_voicing),
            errors,
            tolerance,
        );
        out.metadata = first.metadata.clone();
        Some(out)
    }

    /// `1 - IDR`.
    pub fn misidentification(&self) -> f64 {
        1.0 - self.idr
    }

    pub fn within(&self, bound: f64) -> f64 {
        fraction_within(&self.errors, bound)
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Share of `errors` with `|e| <= bound`; zero for an empty set.
pub fn fraction_within(errors: &[f64], bound: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().filter(|e| e.abs() <= bound + 1e-12).count() as f64 / errors.len() as f64
}

/// One scoring unit around a reference event: `[lo, hi)` in samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cycle {
    pub lo: f64,
    pub hi: f64,
    pub reference: usize,
}

/// Larynx cycles for a sorted reference stream.
///
/// Boundaries sit halfway between neighbouring events. Runs are split at
/// gaps above `max_gap` samples; the outer cycles of a run extend by half
/// the adjacent period (or half `fallback` for a run of one event).
pub fn larynx_cycles(reference: &[usize], max_gap: f64, fallback: f64) -> Vec<Cycle> {
    let mut cycles = Vec::with_capacity(reference.len());
    let mut start = 0;
    while start < reference.len() {
        let mut end = start + 1;
        while end < reference.len() && ((reference[end] - reference[end - 1]) as f64) <= max_gap {
            end += 1;
        }
        let run = &reference[start..end];
        for (k, &r) in run.iter().enumerate() {
            let r = r as f64;
            let lo = if k > 0 {
                (run[k - 1] as f64 + r) / 2.0
            } else if run.len() > 1 {
                r - (run[1] as f64 - r) / 2.0
            } else {
                r - fallback / 2.0
            };
            let hi = if k + 1 < run.len() {
                (run[k + 1] as f64 + r) / 2.0
            } else if run.len() > 1 {
                r + (r - run[k - 1] as f64) / 2.0
            } else {
                r + fallback / 2.0
            };
            cycles.push(Cycle {
                lo,
                hi,
                reference: start + k,
            });
        }
        start = end;
    }
    cycles
}

/// Scores detections of one kind against the reference.
///
/// Each larynx cycle with exactly one detection is identified, with none is
/// missed and with more than one is a false alarm. A detection outside all
/// cycles but within half the mean reference period of one turns the
/// nearest cycle into a false alarm; farther ones are counted as
/// out-of-voicing and left out of the rates.
pub fn score(
    detected: &[GlottalEvent],
    reference: &ReferenceEvents,
    kind: EventKind,
    cfg: &ScoreConfig,
) -> Result<EvalReport> {
    let refs: Vec<usize> = reference.events(kind).iter().map(|e| e.index).collect();
    if refs.is_empty() {
        return Err(Error::EmptyReference);
    }
    let fs = reference.sample_rate as f64;
    let max_gap = cfg.max_gap * fs;
    let in_run: Vec<f64> = refs
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64)
        .filter(|&d| d <= max_gap)
        .collect();
    let mean_period = if in_run.is_empty() {
        max_gap
    } else {
        in_run.iter().sum::<f64>() / in_run.len() as f64
    };
    let cycles = larynx_cycles(&refs, max_gap, mean_period);

    let mut hits: Vec<Vec<usize>> = vec![Vec::new(); cycles.len()];
    let mut forced = vec![false; cycles.len()];
    let mut out_of_voicing = 0;
    for d in detected {
        let x = d.index as f64;
        let k = cycles.partition_point(|c| c.hi <= x);
        if k < cycles.len() && cycles[k].lo <= x {
            hits[k].push(d.index);
            continue;
        }
        // between cycles k-1 and k (or beyond either end)
        let before = k.checked_sub(1).map(|j| (j, x - cycles[j].hi));
        let after = (k < cycles.len()).then(|| (k, cycles[k].lo - x));
        let nearest = match (before, after) {
            (Some(b), Some(a)) => Some(if a.1 < b.1 { a } else { b }),
            (b, a) => b.or(a),
        };
        match nearest {
            Some((j, dist)) if dist <= mean_period / 2.0 => forced[j] = true,
            _ => out_of_voicing += 1,
        }
    }

    let (mut identified, mut missed, mut false_alarms) = (0, 0, 0);
    let mut errors = Vec::new();
    for (k, c) in cycles.iter().enumerate() {
        match (forced[k], hits[k].as_slice()) {
            (true, _) => false_alarms += 1,
            (false, []) => missed += 1,
            (false, [one]) => {
                identified += 1;
                errors.push((*one as f64 - refs[c.reference] as f64) / fs);
            }
            _ => false_alarms += 1,
        }
    }
    let mut report = EvalReport::from_counts(kind, identified, missed, false_alarms, out_of_voicing, errors, cfg.tolerance);
    report.metadata.insert("max_gap_s".into(), cfg.max_gap.into());
    report.metadata.insert("tolerance_s".into(), cfg.tolerance.into());
    report.metadata.insert("reference_source".into(), serde_json::to_value(reference.source)?);
    report.metadata.insert("alignment_shift_s".into(), reference.alignment_shift.into());
    Ok(report)
}

/// Error histogram with bins centred on multiples of `bin_width` (so one
/// bin is centred on zero). Returns `(centre, probability)` for non-empty
/// bins in increasing order; probabilities sum to one.
pub fn histogram(errors: &[f64], bin_width: f64) -> Result<Vec<(f64, f64)>> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::config("bin_width", "must be positive"));
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &e in errors {
        *counts.entry((e / bin_width + 0.5).floor() as i64).or_default() += 1;
    }
    let n = errors.len() as f64;
    Ok(counts
        .into_iter()
        .map(|(k, c)| (k as f64 * bin_width, c as f64 / n))
        .collect())
}
