//! `glottal` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use glottal::detect::{detect_events, DetectorConfig, PolarityMode};
use glottal::eval::{
    evaluate_corpus, histogram, load_corpus, parse_manifest, parse_range, sweep_noise, sweep_window,
    synthetic_corpus, CorpusOptions, CorpusReport, NoiseKind, ScoreConfig, SweepTable,
};
use glottal::formats::{
    events_csv, events_jsonl, histogram_csv, intervals_csv, read_text, signal_csv, sweep_csv, table1_csv,
    table2_csv, write_text,
};
use glottal::signal::{conform_sample_rate, load_wav, save_wav, save_wav_float};
use glottal::synth::{synthesize, varied_corpus, SynthSpec, Synthesis};
use glottal::{Utterance64, Waveform64};

#[derive(Parser)]
#[command(name = "glottal", version, about = "Glottal closure and opening instant detection and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect GCIs and GOIs in WAV files; writes <stem>.gci.csv and <stem>.goi.csv.
    Detect(DetectArgs),
    /// Score detections against EGG or event references listed in a manifest.
    Evaluate(EvaluateArgs),
    /// GCI misidentification as a function of the mean-signal window factor.
    SweepWindow(SweepWindowArgs),
    /// GCI misidentification as a function of SNR.
    SweepNoise(SweepNoiseArgs),
    /// Write synthetic speech WAV, EGG WAV and truth CSV triples.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct DetectorArgs {
    /// LP order (24 at 16 kHz)
    #[arg(long, default_value_t = 24)]
    order: usize,
    /// LP analysis frame length in ms; frames are Hanning-windowed
    #[arg(long, default_value_t = 25.0)]
    frame_len_ms: f64,
    /// LP frame shift in ms
    #[arg(long, default_value_t = 5.0)]
    frame_shift_ms: f64,
    /// Blackman window length as a multiple of the mean pitch period
    #[arg(long, default_value_t = 1.75)]
    window_factor: f64,
    /// Mean pitch period in ms; estimated from the signal when omitted
    #[arg(long)]
    t0_mean_ms: Option<f64>,
    /// Residual peak polarity: auto resolves the sign from the data and
    /// falls back to absolute on short signals
    #[arg(long, default_value = "auto", value_parser = parse_polarity)]
    polarity: PolarityMode,
    /// Widening of each GOI interval on both sides, ms
    #[arg(long, default_value_t = 0.25)]
    margin_ms: f64,
    /// Widening of each GCI interval on both sides, ms
    #[arg(long, default_value_t = 0.0)]
    gci_margin_ms: f64,
    /// Apply first-difference pre-emphasis with this coefficient before LP
    /// analysis (off by default; 0.97 is typical)
    #[arg(long)]
    pre_emphasis: Option<f64>,
}

fn parse_polarity(s: &str) -> Result<PolarityMode, String> {
    s.parse()
}

impl DetectorArgs {
    fn config(&self) -> DetectorConfig {
        let mut c = DetectorConfig::default();
        c.lp.order = self.order;
        c.lp.frame_len = self.frame_len_ms / 1e3;
        c.lp.frame_shift = self.frame_shift_ms / 1e3;
        c.lp.pre_emphasis = self.pre_emphasis;
        c.mean.window_factor = self.window_factor;
        c.mean.t0_mean = self.t0_mean_ms.map(|t| t / 1e3);
        c.polarity = self.polarity;
        c.goi_margin = self.margin_ms / 1e3;
        c.gci_margin = self.gci_margin_ms / 1e3;
        c
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EventFormat {
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DumpFormat {
    Wav,
    Csv,
}

#[derive(Args)]
struct DetectArgs {
    /// Input WAV files (16-bit PCM, 16 kHz unless --allow-resample)
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Channel to read from multichannel files (0-based)
    #[arg(long)]
    channel: Option<usize>,
    /// Resample input that is not at 16 kHz instead of rejecting it
    #[arg(long)]
    allow_resample: bool,
    /// Write outputs here instead of next to each input
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Event file format
    #[arg(long, value_enum, default_value = "csv")]
    format: EventFormat,
    /// Only write GCIs
    #[arg(long, conflicts_with = "goi_only")]
    gci_only: bool,
    /// Only write GOIs
    #[arg(long)]
    goi_only: bool,
    /// Write the mean-based signal to <stem>.mean.csv (index,value)
    #[arg(long)]
    dump_mean_signal: bool,
    /// Write the LP residual to <stem>.residual.wav (32-bit float) or .csv
    #[arg(long, value_enum, num_args = 0..=1, default_missing_value = "wav")]
    dump_residual: Option<DumpFormat>,
    /// Write the GCI/GOI search intervals to <stem>.intervals.csv
    #[arg(long)]
    dump_intervals: bool,
}

#[derive(Args)]
struct CorpusArgs {
    /// Manifest with one `speech[,reference][,t0_mean_s]` line per utterance;
    /// references ending in .csv are event files, others EGG WAVs
    #[arg(long, conflicts_with = "synthetic")]
    manifest: Option<PathBuf>,
    /// Use this many generated utterances instead of a manifest
    #[arg(long)]
    synthetic: Option<usize>,
    /// Seed for generated corpora and noise (one seed fans out to every
    /// stochastic step)
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Speech channel of multichannel files
    #[arg(long)]
    channel: Option<usize>,
    /// EGG channel of multichannel files
    #[arg(long)]
    egg_channel: Option<usize>,
    /// Resample files that are not at 16 kHz instead of rejecting them
    #[arg(long)]
    allow_resample: bool,
    /// Skip aligning EGG events to the speech residual (searched over +-2 ms)
    #[arg(long)]
    no_align: bool,
    /// Worker threads for corpus iteration; 0 uses every core
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Accuracy tolerance in ms for the within-tolerance rate
    #[arg(long, default_value_t = 0.25)]
    tolerance_ms: f64,
    /// Reference gaps longer than this split voiced runs, ms
    #[arg(long, default_value_t = 20.0)]
    max_gap_ms: f64,
    /// Output directory
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

impl CorpusArgs {
    fn score(&self) -> ScoreConfig {
        ScoreConfig {
            tolerance: self.tolerance_ms / 1e3,
            max_gap: self.max_gap_ms / 1e3,
        }
    }

    fn load(&self, detector: &DetectorArgs) -> anyhow::Result<Vec<Utterance64>> {
        match (&self.manifest, self.synthetic) {
            (Some(m), _) => {
                let text = read_text(m)?;
                let base = m.parent().unwrap_or(Path::new("."));
                let entries = parse_manifest(&text, base, &m.display().to_string())?;
                let mut opts = CorpusOptions {
                    channel: self.channel,
                    egg_channel: self.egg_channel,
                    allow_resample: self.allow_resample,
                    align: !self.no_align,
                    ..CorpusOptions::default()
                };
                opts.lp = detector.config().lp;
                Ok(load_corpus(&entries, &opts, self.jobs)?)
            }
            (None, Some(n)) => Ok(synthetic_corpus(&varied_corpus(n, self.seed), self.jobs)?),
            (None, None) => bail!(UsageError("one of --manifest or --synthetic is required".into())),
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Histogram bin width in ms
    #[arg(long, default_value_t = 0.25)]
    bin_ms: f64,
}

#[derive(Args)]
struct SweepWindowArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Window factors as start:step:stop or a comma list
    #[arg(long, default_value = "0.5:0.25:3.0")]
    factors: String,
}

#[derive(Args)]
struct SweepNoiseArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    detector: DetectorArgs,
    /// SNRs in dB as start:step:stop or a comma list; `inf` is clean speech
    #[arg(long, default_value = "inf,20,10,5,0,-5,-10")]
    snrs: String,
    /// Noise type
    #[arg(long, default_value = "white", value_parser = parse_noise)]
    noise: NoiseKind,
    /// Babble recording (WAV); without it babble is mixed from the other
    /// utterances of the corpus
    #[arg(long)]
    babble: Option<PathBuf>,
}

fn parse_noise(s: &str) -> Result<NoiseKind, String> {
    s.parse()
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Number of utterances with varied f0, intonation and vowel
    #[arg(long, default_value_t = 10, conflicts_with = "f0")]
    count: usize,
    /// Generate one constant-f0 utterance at this frequency in Hz instead
    #[arg(long)]
    f0: Option<f64>,
    /// Duration of the constant-f0 utterance, seconds
    #[arg(long, default_value_t = 1.0, requires = "f0")]
    duration: f64,
    /// Seed
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into())
}

fn output_base(input: &Path, out_dir: Option<&Path>) -> PathBuf {
    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
    dir.join(stem(input))
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn detect(args: &DetectArgs) -> anyhow::Result<()> {
    let cfg = args.detector.config();
    if let Some(d) = &args.out_dir {
        create_dir(d)?;
    }
    for input in &args.inputs {
        let x: Waveform64 = conform_sample_rate(load_wav(input, args.channel)?, args.allow_resample)?;
        let d = detect_events(&x, &cfg)?;
        let base = output_base(input, args.out_dir.as_deref());
        let ext = match args.format {
            EventFormat::Csv => "csv",
            EventFormat::Jsonl => "jsonl",
        };
        let render = |ev| -> anyhow::Result<String> {
            Ok(match args.format {
                EventFormat::Csv => events_csv(ev),
                EventFormat::Jsonl => events_jsonl(ev)?,
            })
        };
        if !args.goi_only {
            write_text(with_suffix(&base, &format!(".gci.{ext}")), &render(&d.gcis)?)?;
        }
        if !args.gci_only {
            write_text(with_suffix(&base, &format!(".goi.{ext}")), &render(&d.gois)?)?;
        }
        if args.dump_mean_signal {
            if let Some(m) = &d.mean {
                write_text(with_suffix(&base, ".mean.csv"), &signal_csv(m.signal.samples()))?;
            }
        }
        match args.dump_residual {
            Some(DumpFormat::Wav) => save_wav_float(with_suffix(&base, ".residual.wav"), &d.residual.signal)?,
            Some(DumpFormat::Csv) => write_text(with_suffix(&base, ".residual.csv"), &signal_csv(d.residual.samples()))?,
            None => {}
        }
        if args.dump_intervals {
            let all: Vec<_> = d.gci_intervals.iter().chain(&d.goi_intervals).copied().collect();
            write_text(with_suffix(&base, ".intervals.csv"), &intervals_csv(&all, x.sample_rate()))?;
        }
        let summary = serde_json::json!({
            "input": input.display().to_string(),
            "gcis": d.gcis.len(),
            "gois": d.gois.len(),
            "polarity": d.polarity,
            "t0_mean_s": d.mean.as_ref().map(|m| m.t0_mean),
            "diagnostics": d.diagnostics,
        });
        println!("{summary}");
    }
    Ok(())
}

fn write_report(dir: &Path, report: &CorpusReport, bin: f64) -> anyhow::Result<()> {
    write_text(dir.join("report.json"), &(serde_json::to_string_pretty(report)? + "\n"))?;
    let mut per = String::from("# glottal utterance-report v1\nname,speaker,event,n_cycles,idr,mr,far,ida_s,acc025\n");
    for u in &report.utterances {
        for r in [Some(&u.gci), u.goi.as_ref()].into_iter().flatten() {
            per.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                u.name,
                u.speaker,
                r.kind.as_str(),
                r.n_cycles,
                r.idr,
                r.mr,
                r.far,
                r.ida,
                r.acc025
            ));
        }
    }
    write_text(dir.join("report.csv"), &per)?;
    write_text(dir.join("table1.csv"), &table1_csv(report))?;
    write_text(dir.join("table2.csv"), &table2_csv(report))?;
    write_text(dir.join("gci_histogram.csv"), &histogram_csv(&histogram(&report.gci.errors, bin)?))?;
    if let Some(goi) = &report.goi {
        write_text(dir.join("goi_histogram.csv"), &histogram_csv(&histogram(&goi.errors, bin)?))?;
    }
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let utts = args.corpus.load(&args.detector)?;
    let report = evaluate_corpus(&utts, &args.detector.config(), &args.corpus.score(), args.corpus.jobs)?;
    create_dir(&args.corpus.out_dir)?;
    write_report(&args.corpus.out_dir, &report, args.bin_ms / 1e3)?;
    let g = &report.gci;
    println!(
        "{}",
        serde_json::json!({
            "utterances": report.utterances.len(),
            "gci": {"idr": g.idr, "mr": g.mr, "far": g.far, "ida_s": g.ida, "acc025": g.acc025},
            "goi": report.goi.as_ref().map(|o| serde_json::json!({"ida_s": o.ida, "acc025": o.acc025})),
        })
    );
    Ok(())
}

fn write_sweep(dir: &Path, name: &str, table: &SweepTable) -> anyhow::Result<()> {
    create_dir(dir)?;
    write_text(dir.join(format!("{name}.csv")), &sweep_csv(table))?;
    write_text(dir.join(format!("{name}.json")), &(serde_json::to_string_pretty(table)? + "\n"))?;
    let best = table.best().map(|r| r.value);
    println!(
        "{}",
        serde_json::json!({"parameter": table.parameter, "best": best, "failures": table.failures.len()})
    );
    Ok(())
}

fn range(flag: &str, s: &str) -> anyhow::Result<Vec<f64>> {
    parse_range(s).map_err(|e| UsageError(format!("--{flag}: {e}")).into())
}

fn sweep_window_cmd(args: &SweepWindowArgs) -> anyhow::Result<()> {
    let factors = range("factors", &args.factors)?;
    let utts = args.corpus.load(&args.detector)?;
    let table = sweep_window(&utts, &factors, &args.detector.config(), &args.corpus.score(), args.corpus.jobs)?;
    write_sweep(&args.corpus.out_dir, "sweep_window", &table)
}

fn sweep_noise_cmd(args: &SweepNoiseArgs) -> anyhow::Result<()> {
    let snrs = range("snrs", &args.snrs)?;
    let utts = args.corpus.load(&args.detector)?;
    let babble: Option<Waveform64> = match &args.babble {
        Some(p) => Some(conform_sample_rate(load_wav(p, None)?, args.corpus.allow_resample)?),
        None => None,
    };
    let table = sweep_noise(
        &utts,
        args.noise,
        &snrs,
        &args.detector.config(),
        &args.corpus.score(),
        args.corpus.seed,
        args.corpus.jobs,
        babble.as_ref(),
    )?;
    write_sweep(&args.corpus.out_dir, "sweep_noise", &table)
}

fn synth_cmd(args: &SynthArgs) -> anyhow::Result<()> {
    let specs = match args.f0 {
        Some(f0) => vec![SynthSpec {
            seed: args.seed,
            ..SynthSpec::constant(f0, args.duration)
        }],
        None => varied_corpus(args.count, args.seed),
    };
    create_dir(&args.out_dir)?;
    let pool = rayon_pool(args.jobs)?;
    let results: Vec<glottal::Result<Synthesis<f64>>> = pool.install(|| {
        use rayon::prelude::*;
        specs.par_iter().map(synthesize).collect()
    });
    let mut manifest = String::new();
    let mut truth_manifest = String::new();
    for (k, s) in results.into_iter().enumerate() {
        let s = s?;
        let name = format!("synth_{k:03}");
        save_wav(args.out_dir.join(format!("{name}.wav")), &s.speech)?;
        save_wav(args.out_dir.join(format!("{name}.egg.wav")), &s.egg)?;
        let mut truth: Vec<_> = s.truth.gcis.iter().chain(&s.truth.gois).cloned().collect();
        truth.sort_by_key(|e| (e.index, e.kind));
        write_text(args.out_dir.join(format!("{name}.truth.csv")), &events_csv(&truth))?;
        manifest.push_str(&format!("{name}.wav,{name}.egg.wav\n"));
        truth_manifest.push_str(&format!("{name}.wav,{name}.truth.csv\n"));
    }
    write_text(args.out_dir.join("manifest.txt"), &manifest)?;
    write_text(args.out_dir.join("manifest.truth.txt"), &truth_manifest)?;
    println!("{}", serde_json::json!({"utterances": specs.len(), "out_dir": args.out_dir.display().to_string()}));
    Ok(())
}

fn rayon_pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

fn error_json(e: &anyhow::Error) -> serde_json::Value {
    // core errors already carry their cause in the message
    let (kind, field, message) = if let Some(g) = e.downcast_ref::<glottal::Error>() {
        (g.kind(), g.field(), g.to_string())
    } else if e.downcast_ref::<UsageError>().is_some() {
        ("usage", None, e.to_string())
    } else if e.downcast_ref::<std::io::Error>().is_some() {
        ("io", None, format!("{e:#}"))
    } else {
        ("error", None, format!("{e:#}"))
    };
    serde_json::json!({"error": kind, "field": field, "message": message})
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let msg: Vec<&str> = text
                .lines()
                .take_while(|l| !l.trim().is_empty() && !l.starts_with("Usage:"))
                .map(str::trim)
                .collect();
            let msg = msg.join(" ");
            let msg = msg.trim_start_matches("error: ");
            eprintln!("{}", serde_json::json!({"error": "usage", "field": null, "message": msg}));
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Detect(a) => detect(a),
        Command::Evaluate(a) => evaluate(a),
        Command::SweepWindow(a) => sweep_window_cmd(a),
        Command::SweepNoise(a) => sweep_noise_cmd(a),
        Command::Synth(a) => synth_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
