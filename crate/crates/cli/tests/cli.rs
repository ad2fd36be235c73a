use std::path::Path;
use std::process::{Command, Output};

fn glottal(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glottal"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn glottal")
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn synth(dir: &Path, count: &str) {
    ok(glottal(&["synth", "--count", count, "--seed", "3", "--out-dir", "s"], dir));
}

#[test]
fn detect_writes_event_files() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "1");
    ok(glottal(&["detect", "s/synth_000.wav"], dir.path()));
    let gci = read(dir.path().join("s/synth_000.gci.csv"));
    let goi = read(dir.path().join("s/synth_000.goi.csv"));
    assert!(gci.starts_with("# glottal events v1\nkind,time_s,index,salience\n"));
    assert!(gci.lines().skip(2).all(|l| l.starts_with("gci,")));
    assert!(goi.lines().skip(2).all(|l| l.starts_with("goi,")));
    assert!(gci.lines().count() > 50);
}

#[test]
fn detect_options() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "1");
    ok(glottal(
        &[
            "detect",
            "s/synth_000.wav",
            "--out-dir",
            "o",
            "--format",
            "jsonl",
            "--gci-only",
            "--dump-mean-signal",
            "--dump-residual",
            "csv",
            "--dump-intervals",
        ],
        dir.path(),
    ));
    let o = dir.path().join("o");
    let first = read(o.join("synth_000.gci.jsonl"));
    let v: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert_eq!(v["kind"], "gci");
    assert!(!o.join("synth_000.goi.jsonl").exists());
    assert!(read(o.join("synth_000.mean.csv")).lines().any(|l| l == "index,value"));
    assert!(read(o.join("synth_000.residual.csv")).lines().count() > 1000);
    assert!(read(o.join("synth_000.intervals.csv")).contains("kind,start_s,end_s"));
}

#[test]
fn evaluate_rates_partition() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "4");
    ok(glottal(&["evaluate", "--manifest", "s/manifest.txt", "--out-dir", "ev"], dir.path()));
    let report: serde_json::Value = serde_json::from_str(&read(dir.path().join("ev/report.json"))).unwrap();
    let g = &report["gci"];
    let sum = g["idr"].as_f64().unwrap() + g["mr"].as_f64().unwrap() + g["far"].as_f64().unwrap();
    assert!((sum - 1.0).abs() < 1e-12, "{sum}");
    assert!(g["idr"].as_f64().unwrap() > 0.95);
    for f in ["table1.csv", "table2.csv", "gci_histogram.csv", "goi_histogram.csv", "report.csv"] {
        assert!(dir.path().join("ev").join(f).exists(), "{f}");
    }

    ok(glottal(&["evaluate", "--manifest", "s/manifest.truth.txt", "--out-dir", "tr"], dir.path()));
    let t: serde_json::Value = serde_json::from_str(&read(dir.path().join("tr/report.json"))).unwrap();
    assert!(t["gci"]["idr"].as_f64().unwrap() > 0.97);
}

#[test]
fn sweep_window_valley() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(glottal(
        &["sweep-window", "--synthetic", "12", "--factors", "0.5:0.25:3.0", "--out-dir", "sw"],
        dir.path(),
    ));
    let csv = read(dir.path().join("sw/sweep_window.csv"));
    let best = csv
        .lines()
        .skip(2)
        .map(|l| {
            let f: Vec<f64> = l.split(',').take(2).map(|x| x.parse().unwrap()).collect();
            (f[0], f[1])
        })
        .fold((f64::NAN, f64::INFINITY), |b, r| if r.1 < b.1 { r } else { b });
    assert!((1.5..=2.0).contains(&best.0), "{csv}");
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["best"].as_f64().unwrap(), best.0);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2");
    let args = ["sweep-noise", "--manifest", "s/manifest.truth.txt", "--snrs", "inf,0", "--seed", "9"];
    for (k, jobs) in ["1", "3"].iter().enumerate() {
        let d = format!("n{k}");
        let mut a = args.to_vec();
        a.extend(["--jobs", jobs, "--out-dir", &d]);
        ok(glottal(&a, dir.path()));
        ok(glottal(&["detect", "s/synth_001.wav", "--out-dir", &d], dir.path()));
    }
    for f in ["sweep_noise.csv", "sweep_noise.json", "synth_001.gci.csv", "synth_001.goi.csv"] {
        assert_eq!(read(dir.path().join("n0").join(f)), read(dir.path().join("n1").join(f)), "{f}");
    }
    let again = tempfile::tempdir().unwrap();
    synth(again.path(), "2");
    for f in ["synth_000.wav", "synth_001.egg.wav", "synth_001.truth.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("s").join(f)).unwrap(),
            std::fs::read(again.path().join("s").join(f)).unwrap(),
            "{f}"
        );
    }
}

fn error_of(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn errors_are_json() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "1");
    let e = error_of(&glottal(&["detect", "missing.wav"], dir.path()));
    assert_eq!(e["error"], "io");

    let e = error_of(&glottal(&["detect", "s/synth_000.wav", "--frame-shift-ms", "0"], dir.path()));
    assert_eq!(e["error"], "invalid_config");
    assert_eq!(e["field"], "frame_shift");

    let e = error_of(&glottal(&["sweep-window", "--synthetic", "2", "--factors", "3:1:1"], dir.path()));
    assert_eq!(e["error"], "usage");

    let e = error_of(&glottal(&["detect", "--polarity", "sideways", "x.wav"], dir.path()));
    assert_eq!(e["error"], "usage");
    assert_eq!(glottal(&["evaluate"], dir.path()).status.code(), Some(1));
}

#[test]
fn help_states_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let h = String::from_utf8(ok(glottal(&["detect", "--help"], dir.path())).stdout).unwrap();
    for d in ["[default: 24]", "[default: 25]", "[default: 5]", "[default: 1.75]", "[default: 0.25]", "[default: auto]"] {
        assert!(h.contains(d), "{d}");
    }
    for sub in ["evaluate", "sweep-window", "sweep-noise", "synth"] {
        ok(glottal(&[sub, "--help"], dir.path()));
    }
}
