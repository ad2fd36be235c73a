//! Parameter sweeps over a corpus: mean-signal window length and SNR.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corpus::{evaluate_utterance, with_jobs, Utterance, UtteranceReport};
use super::{EvalReport, ScoreConfig};
use crate::detect::DetectorConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{add_noise, derive_seed, measured_snr_db, pseudo_babble, NoiseSource, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    White,
    Babble,
}

impl std::str::FromStr for NoiseKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "white" => Ok(Self::White),
            "babble" => Ok(Self::Babble),
            other => Err(format!("unknown noise `{other}` (white|babble)")),
        }
    }
}

/// Pooled GCI identification at one parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub misidentification: f64,
    pub idr: f64,
    pub mr: f64,
    pub far: f64,
    pub n_cycles: usize,
    /// Utterances that contributed (failures are excluded).
    pub utterances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub value: f64,
    pub utterance: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    /// Swept quantity, e.g. `window_factor` or `snr_db`.
    pub parameter: String,
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl SweepTable {
    /// Row with the lowest misidentification; ties go to the earliest row.
    pub fn best(&self) -> Option<&SweepRow> {
        self.rows.iter().fold(None, |best: Option<&SweepRow>, r| match best {
            Some(b) if b.misidentification <= r.misidentification => Some(b),
            _ => Some(r),
        })
    }
}

fn row(value: f64, reports: &[UtteranceReport], tolerance: f64) -> SweepRow {
    let gci: Vec<EvalReport> = reports.iter().map(|u| u.gci.clone()).collect();
    match EvalReport::merge(&gci, tolerance) {
        Some(m) => SweepRow {
            value,
            misidentification: m.misidentification(),
            idr: m.idr,
            mr: m.mr,
            far: m.far,
            n_cycles: m.n_cycles,
            utterances: reports.len(),
        },
        None => SweepRow {
            value,
            misidentification: f64::NAN,
            idr: f64::NAN,
            mr: f64::NAN,
            far: f64::NAN,
            n_cycles: 0,
            utterances: 0,
        },
    }
}

/// Runs `job(value_index, utterance_index)` for every pair in parallel and
/// groups the outcomes per value, in order.
fn grid<T: Scalar>(
    values: &[f64],
    utterances: &[Utterance<T>],
    score_cfg: &ScoreConfig,
    jobs: usize,
    job: impl Fn(usize, usize) -> Result<UtteranceReport> + Sync + Send,
) -> (Vec<SweepRow>, Vec<SweepFailure>) {
    let pairs: Vec<(usize, usize)> = (0..values.len())
        .flat_map(|j| (0..utterances.len()).map(move |k| (j, k)))
        .collect();
    let results: Vec<Result<UtteranceReport>> = with_jobs(jobs, || pairs.par_iter().map(|&(j, k)| job(j, k)).collect());
    let mut rows = Vec::with_capacity(values.len());
    let mut failures = Vec::new();
    let mut it = results.into_iter();
    for &v in values {
        let mut ok = Vec::new();
        for u in utterances {
            match it.next().expect("one result per pair") {
                Ok(r) => ok.push(r),
                Err(e) => failures.push(SweepFailure {
                    value: v,
                    utterance: u.name.clone(),
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                }),
            }
        }
        rows.push(row(v, &ok, score_cfg.tolerance));
    }
    (rows, failures)
}

/// GCI misidentification as a function of the mean-signal window factor.
/// Utterances that fail at a factor are left out of that row and listed.
pub fn sweep_window<T: Scalar>(
    utterances: &[Utterance<T>],
    factors: &[f64],
    cfg: &DetectorConfig,
    score_cfg: &ScoreConfig,
    jobs: usize,
) -> Result<SweepTable> {
    if utterances.is_empty() {
        return Err(Error::EmptyReference);
    }
    if let Some(f) = factors.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
        return Err(Error::config("window_factor", format!("must be positive, got {f}")));
    }
    let (rows, failures) = grid(factors, utterances, score_cfg, jobs, |j, k| {
        let mut c = *cfg;
        c.mean.window_factor = factors[j];
        let u = &utterances[k];
        evaluate_utterance(u, &u.speech, &c, score_cfg)
    });
    let mut metadata = BTreeMap::new();
    metadata.insert("detector".into(), serde_json::to_value(cfg)?);
    metadata.insert("score".into(), serde_json::to_value(score_cfg)?);
    Ok(SweepTable {
        parameter: "window_factor".into(),
        rows,
        failures,
        metadata,
    })
}

/// GCI misidentification as a function of SNR. Noise for utterance `k` at
/// SNR index `j` is seeded with `derive_seed(seed, [j, k])`; detections on
/// the noisy signal are scored against the clean reference. Without a
/// babble recording, babble is built from the other utterances.
#[allow(clippy::too_many_arguments)]
pub fn sweep_noise<T: Scalar>(
    utterances: &[Utterance<T>],
    kind: NoiseKind,
    snrs_db: &[f64],
    cfg: &DetectorConfig,
    score_cfg: &ScoreConfig,
    seed: u64,
    jobs: usize,
    babble: Option<&Waveform<T>>,
) -> Result<SweepTable> {
    if utterances.is_empty() {
        return Err(Error::EmptyReference);
    }
    if let Some(s) = snrs_db.iter().find(|s| s.is_nan() || **s == f64::NEG_INFINITY) {
        return Err(Error::config("snr_db", format!("must be finite or +inf, got {s}")));
    }
    let noisy = |j: usize, k: usize| -> Result<Waveform<T>> {
        let u = &utterances[k];
        let s = derive_seed(seed, &[j as u64, k as u64]);
        match (kind, babble) {
            (NoiseKind::White, _) => add_noise(&u.speech, NoiseSource::White, snrs_db[j], s),
            (NoiseKind::Babble, Some(b)) => add_noise(&u.speech, NoiseSource::Recording(b), snrs_db[j], s),
            (NoiseKind::Babble, None) => {
                let others: Vec<&Waveform<T>> = utterances
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != k || utterances.len() == 1)
                    .map(|(_, o)| &o.speech)
                    .collect();
                let b = pseudo_babble(
                    &others,
                    u.speech.len(),
                    u.speech.sample_rate(),
                    derive_seed(seed, &[j as u64, k as u64, 1]),
                )?;
                add_noise(&u.speech, NoiseSource::Recording(&b), snrs_db[j], s)
            }
        }
    };
    let (rows, failures) = grid(snrs_db, utterances, score_cfg, jobs, |j, k| {
        let u = &utterances[k];
        let x = noisy(j, k)?;
        let mut r = evaluate_utterance(u, &x, cfg, score_cfg)?;
        let measured = measured_snr_db(&u.speech, &x);
        let measured = if measured.is_finite() { measured.into() } else { serde_json::Value::Null };
        r.gci.metadata.insert("measured_snr_db".into(), measured);
        Ok(r)
    });
    let mut metadata = BTreeMap::new();
    metadata.insert("noise".into(), serde_json::to_value(kind)?);
    metadata.insert("seed".into(), seed.into());
    metadata.insert("babble_recording".into(), babble.is_some().into());
    metadata.insert("snr_definition".into(), "whole-utterance mean square, silence included".into());
    metadata.insert("detector".into(), serde_json::to_value(cfg)?);
    metadata.insert("score".into(), serde_json::to_value(score_cfg)?);
    Ok(SweepTable {
        parameter: "snr_db".into(),
        rows,
        failures,
        metadata,
    })
}

/// Parses `start:step:stop` (inclusive), a comma list, or a single value.
/// `inf` stands for +infinity.
pub fn parse_range(s: &str) -> std::result::Result<Vec<f64>, String> {
    let num = |t: &str| -> std::result::Result<f64, String> {
        match t.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" => Ok(f64::INFINITY),
            x => x.parse::<f64>().map_err(|e| format!("`{t}`: {e}")),
        }
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, step, b] => {
            let (a, step, b) = (num(a)?, num(step)?, num(b)?);
            if !(a.is_finite() && b.is_finite() && step.is_finite()) || step == 0.0 || (b - a) / step < 0.0 {
                return Err(format!("bad range `{s}`"));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize + 1;
            if n > 100_000 {
                return Err(format!("range `{s}` has too many points"));
            }
            Ok((0..n).map(|i| ((a + i as f64 * step) * 1e9).round() / 1e9).collect())
        }
        [_] => {
            let v: Vec<f64> = s.split(',').map(num).collect::<std::result::Result<_, _>>()?;
            if v.iter().any(|x| x.is_nan()) {
                return Err(format!("bad value in `{s}`"));
            }
            Ok(v)
        }
        _ => Err(format!("expected `start:step:stop` or a comma list, got `{s}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        let f = parse_range("0.5:0.25:3.0").unwrap();
        assert_eq!(f.len(), 11);
        assert_eq!(f[4], 1.5);
        assert_eq!(f[10], 3.0);
        assert_eq!(parse_range("inf,10, 0,-10").unwrap(), vec![f64::INFINITY, 10.0, 0.0, -10.0]);
        assert_eq!(parse_range("10:-10:-10").unwrap(), vec![10.0, 0.0, -10.0]);
        assert_eq!(parse_range("1.75").unwrap(), vec![1.75]);
        assert!(parse_range("1:0:2").is_err());
        assert!(parse_range("2:1:1").is_err());
        assert!(parse_range("a,b").is_err());
        assert!(parse_range("1:2").is_err());
    }

    #[test]
    fn best_prefers_first_minimum() {
        let mk = |value, m| SweepRow {
            value,
            misidentification: m,
            idr: 1.0 - m,
            mr: 0.0,
            far: 0.0,
            n_cycles: 1,
            utterances: 1,
        };
        let t = SweepTable {
            parameter: "window_factor".into(),
            rows: vec![mk(1.0, 0.2), mk(1.5, 0.1), mk(2.0, 0.1)],
            failures: vec![],
            metadata: BTreeMap::new(),
        };
        assert_eq!(t.best().unwrap().value, 1.5);
    }
}
