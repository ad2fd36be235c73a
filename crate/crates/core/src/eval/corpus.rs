//! Manifest-driven corpus loading and evaluation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{score, EvalReport, ScoreConfig};
use crate::detect::{detect_events, DetectorConfig, Polarity};
use crate::diagnostic::Diagnostic;
use crate::error::{Error, Result};
use crate::formats::{parse_events_csv, read_text};
use crate::lp::{lp_residual, LpConfig};
use crate::meanshape::EventKind;
use crate::reference::{align_reference, degg_events, DeggConfig, ReferenceEvents, ReferenceSource};
use crate::scalar::Scalar;
use crate::signal::{conform_sample_rate, load_wav, Waveform};
use crate::synth::{synthesize, SynthSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSpec {
    /// EGG recording; events come from its derivative.
    Egg(PathBuf),
    /// Events CSV in the detector output schema.
    Events(PathBuf),
    None,
}

/// One manifest line: `speech_path[,egg_or_events_path][,t0_mean_s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub speech: PathBuf,
    pub reference: ReferenceSpec,
    pub t0_mean: Option<f64>,
    pub line: usize,
}

/// Parses a manifest. Blank lines and `#` comments are skipped; relative
/// paths resolve against `base_dir`. A reference ending in `.csv` is read as
/// an events file, anything else as an EGG WAV.
pub fn parse_manifest(text: &str, base_dir: &Path, source_name: &str) -> Result<Vec<ManifestEntry>> {
    let err = |line, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let resolve = |p: &str| {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            base_dir.join(p)
        }
    };
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        if f.len() > 3 || f[0].is_empty() {
            return Err(err(line, "expected `speech_path[,egg_path][,t0_mean_s]`".into()));
        }
        let parse_t0 = |s: &str| -> Result<f64> {
            let t: f64 = s.parse().map_err(|e| err(line, format!("t0_mean_s: {e}")))?;
            if t > 0.0 && t.is_finite() {
                Ok(t)
            } else {
                Err(err(line, format!("t0_mean_s must be positive, got {t}")))
            }
        };
        let reference_of = |s: &str| {
            if s.to_ascii_lowercase().ends_with(".csv") {
                ReferenceSpec::Events(resolve(s))
            } else {
                ReferenceSpec::Egg(resolve(s))
            }
        };
        let (reference, t0_mean) = match f.as_slice() {
            [_] => (ReferenceSpec::None, None),
            [_, x] if x.parse::<f64>().is_ok() => (ReferenceSpec::None, Some(parse_t0(x)?)),
            [_, x] => (reference_of(x), None),
            [_, x, t] => (
                if x.is_empty() { ReferenceSpec::None } else { reference_of(x) },
                Some(parse_t0(t)?),
            ),
            _ => unreachable!(),
        };
        out.push(ManifestEntry {
            speech: resolve(f[0]),
            reference,
            t0_mean,
            line,
        });
    }
    Ok(out)
}

/// Speaker label from a path: `X` for a `cmu_us_X_arctic` component,
/// otherwise the nearest parent directory that is not `wav` or `orig`.
pub fn speaker_of(path: &Path) -> String {
    for c in path.components() {
        let s = c.as_os_str().to_string_lossy();
        if let Some(rest) = s.strip_prefix("cmu_us_") {
            if let Some(name) = rest.strip_suffix("_arctic") {
                return name.to_string();
            }
        }
    }
    path.parent()
        .into_iter()
        .flat_map(|p| p.ancestors())
        .filter_map(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .find(|n| n != "wav" && n != "orig")
        .unwrap_or_else(|| "unknown".to_string())
}

/// A speech signal with its reference events.
#[derive(Debug, Clone)]
pub struct Utterance<T> {
    pub name: String,
    pub speaker: String,
    pub speech: Waveform<T>,
    pub reference: ReferenceEvents,
    pub t0_mean: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusOptions {
    /// Speech channel of multichannel files.
    pub channel: Option<usize>,
    /// EGG channel of multichannel files.
    pub egg_channel: Option<usize>,
    pub allow_resample: bool,
    /// Analysis used for the residual that EGG events are aligned to.
    pub lp: LpConfig,
    pub degg: DeggConfig,
    /// Largest alignment shift searched, seconds.
    pub align_max_shift: f64,
    pub align: bool,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            channel: None,
            egg_channel: None,
            allow_resample: false,
            lp: LpConfig::default(),
            degg: DeggConfig::default(),
            align_max_shift: 0.002,
            align: true,
        }
    }
}

fn utterance_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_one<T: Scalar>(entry: &ManifestEntry, opts: &CorpusOptions) -> Result<Utterance<T>> {
    let speech = conform_sample_rate(load_wav::<T>(&entry.speech, opts.channel)?, opts.allow_resample)?;
    let fs = speech.sample_rate();
    let reference = match &entry.reference {
        ReferenceSpec::None => return Err(Error::EmptyReference),
        ReferenceSpec::Events(path) => {
            let text = read_text(path)?;
            let events = parse_events_csv(&text, &path.display().to_string(), fs)?;
            let (mut gcis, mut gois): (Vec<_>, Vec<_>) = events.into_iter().partition(|e| e.kind == EventKind::Gci);
            gcis.sort_by_key(|e| e.index);
            gois.sort_by_key(|e| e.index);
            ReferenceEvents::new(gcis, gois, ReferenceSource::Imported, fs)
        }
        ReferenceSpec::Egg(path) => {
            let egg = conform_sample_rate(load_wav::<T>(path, opts.egg_channel)?, opts.allow_resample)?;
            let events = degg_events(&egg, &opts.degg)?;
            if opts.align && !events.gcis.is_empty() {
                align_reference(&events, &lp_residual(&speech, &opts.lp)?, opts.align_max_shift)?
            } else {
                events
            }
        }
    };
    if reference.gcis.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(Utterance {
        name: utterance_name(&entry.speech),
        speaker: speaker_of(&entry.speech),
        speech,
        reference,
        t0_mean: entry.t0_mean,
    })
}

/// Loads speech and reference events for every manifest entry.
pub fn load_corpus<T: Scalar>(entries: &[ManifestEntry], opts: &CorpusOptions, jobs: usize) -> Result<Vec<Utterance<T>>> {
    with_jobs(jobs, || {
        entries
            .par_iter()
            .map(|e| load_one(e, opts).map_err(|err| err.in_utterance(&e.speech.display().to_string())))
            .collect()
    })
}

/// Runs `f` on a pool of `jobs` threads (`0` picks the default).
pub(crate) fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Synthesizes one utterance per spec, named `synth_000`, `synth_001`, ...
/// The mean period handed to the detector is the mean planted GCI period.
pub fn synthetic_corpus<T: Scalar>(specs: &[SynthSpec], jobs: usize) -> Result<Vec<Utterance<T>>> {
    with_jobs(jobs, || {
        specs
            .par_iter()
            .enumerate()
            .map(|(k, spec)| {
                let name = format!("synth_{k:03}");
                let s = synthesize::<T>(spec).map_err(|e| e.in_utterance(&name))?;
                let t0_mean = mean_period(&s.truth, spec.sample_rate);
                Ok(Utterance {
                    name,
                    speaker: "synth".into(),
                    speech: s.speech,
                    reference: s.truth,
                    t0_mean,
                })
            })
            .collect()
    })
}

/// Mean GCI period over gaps shorter than 20 ms, seconds.
fn mean_period(r: &ReferenceEvents, sample_rate: u32) -> Option<f64> {
    let max_gap = 0.02 * sample_rate as f64;
    let d: Vec<f64> = r
        .gcis
        .windows(2)
        .map(|w| (w[1].index - w[0].index) as f64)
        .filter(|&d| d <= max_gap)
        .collect();
    (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64 / sample_rate as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceReport {
    pub name: String,
    pub speaker: String,
    pub gci: EvalReport,
    pub goi: Option<EvalReport>,
    /// Mean period the detector used, seconds.
    pub t0_mean: Option<f64>,
    pub polarity: Polarity,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub utterances: Vec<UtteranceReport>,
    /// Pooled over all utterances.
    pub gci: EvalReport,
    pub goi: Option<EvalReport>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl CorpusReport {
    /// Pooled reports per speaker, in speaker order.
    pub fn by_speaker(&self) -> Vec<(String, EvalReport, Option<EvalReport>)> {
        let mut groups: BTreeMap<&str, Vec<&UtteranceReport>> = BTreeMap::new();
        for u in &self.utterances {
            groups.entry(&u.speaker).or_default().push(u);
        }
        let tol = self.gci.metadata.get("tolerance_s").and_then(|v| v.as_f64()).unwrap_or(0.00025);
        groups
            .into_iter()
            .map(|(s, us)| {
                let gci: Vec<EvalReport> = us.iter().map(|u| u.gci.clone()).collect();
                let goi: Vec<EvalReport> = us.iter().filter_map(|u| u.goi.clone()).collect();
                (
                    s.to_string(),
                    EvalReport::merge(&gci, tol).expect("non-empty group"),
                    EvalReport::merge(&goi, tol),
                )
            })
            .collect()
    }
}

/// Detects and scores one utterance. The utterance's own mean period, when
/// known, overrides the configured one.
pub(crate) fn evaluate_utterance<T: Scalar>(
    u: &Utterance<T>,
    speech: &Waveform<T>,
    cfg: &DetectorConfig,
    score_cfg: &ScoreConfig,
) -> Result<UtteranceReport> {
    let mut cfg = *cfg;
    if let Some(t0) = u.t0_mean {
        cfg.mean.t0_mean = Some(t0);
    }
    let det = detect_events(speech, &cfg)?;
    let gci = score(&det.gcis, &u.reference, EventKind::Gci, score_cfg)?;
    let goi = if u.reference.gois.is_empty() {
        None
    } else {
        Some(score(&det.gois, &u.reference, EventKind::Goi, score_cfg)?)
    };
    let mut diagnostics = u.reference.diagnostics.clone();
    diagnostics.extend(det.diagnostics.iter().cloned());
    Ok(UtteranceReport {
        name: u.name.clone(),
        speaker: u.speaker.clone(),
        gci,
        goi,
        t0_mean: det.mean.as_ref().map(|m| m.t0_mean),
        polarity: det.polarity,
        diagnostics,
    })
}

pub(crate) fn pool_reports(utterances: Vec<UtteranceReport>, score_cfg: &ScoreConfig) -> Option<CorpusReport> {
    let gci: Vec<EvalReport> = utterances.iter().map(|u| u.gci.clone()).collect();
    let goi: Vec<EvalReport> = utterances.iter().filter_map(|u| u.goi.clone()).collect();
    let gci = EvalReport::merge(&gci, score_cfg.tolerance)?;
    let goi = EvalReport::merge(&goi, score_cfg.tolerance);
    Some(CorpusReport {
        utterances,
        gci,
        goi,
        metadata: BTreeMap::new(),
    })
}

/// Evaluates every utterance in parallel (at most `jobs` threads) and pools
/// the results. The first failing utterance aborts with its name attached.
pub fn evaluate_corpus<T: Scalar>(
    utterances: &[Utterance<T>],
    cfg: &DetectorConfig,
    score_cfg: &ScoreConfig,
    jobs: usize,
) -> Result<CorpusReport> {
    if utterances.is_empty() {
        return Err(Error::EmptyReference);
    }
    let reports: Vec<UtteranceReport> = with_jobs(jobs, || {
        utterances
            .par_iter()
            .map(|u| evaluate_utterance(u, &u.speech, cfg, score_cfg).map_err(|e| e.in_utterance(&u.name)))
            .collect::<Result<_>>()
    })?;
    let mut report = pool_reports(reports, score_cfg).expect("non-empty corpus");
    report.metadata.insert("utterances".into(), utterances.len().into());
    report.metadata.insert("detector".into(), serde_json::to_value(cfg)?);
    report.metadata.insert("score".into(), serde_json::to_value(score_cfg)?);
    Ok(report)
}
