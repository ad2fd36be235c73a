//! Text formats for events, intervals, signals, sweeps, histograms and
//! summary tables. Every CSV starts with a `# glottal <what> v1` line.

use std::fmt::Write as _;
use std::path::Path;

use crate::detect::GlottalEvent;
use crate::error::{Error, Result};
use crate::eval::{CorpusReport, EvalReport, SweepTable};
use crate::meanshape::{EventInterval, EventKind};
use crate::scalar::Scalar;

pub const EVENTS_HEADER: &str = "# glottal events v1";
pub const INTERVALS_HEADER: &str = "# glottal intervals v1";
pub const SIGNAL_HEADER: &str = "# glottal signal v1";
pub const HISTOGRAM_HEADER: &str = "# glottal histogram v1";
pub const TABLE1_HEADER: &str = "# glottal identification-table v1";
pub const TABLE2_HEADER: &str = "# glottal accuracy-table v1";

/// Label used for this detector in summary tables.
pub const METHOD_NAME: &str = "mean-based+lp";

pub fn events_csv(events: &[GlottalEvent]) -> String {
    let mut s = format!("{EVENTS_HEADER}\nkind,time_s,index,salience\n");
    for e in events {
        writeln!(s, "{},{},{},{}", e.kind, e.time, e.index, e.salience).unwrap();
    }
    s
}

pub fn events_jsonl(events: &[GlottalEvent]) -> Result<String> {
    let mut s = String::new();
    for e in events {
        s.push_str(&serde_json::to_string(e)?);
        s.push('\n');
    }
    Ok(s)
}

/// Parses an events CSV. Needs a `kind` column and at least one of
/// `index` / `time_s`; the index wins when both are present. Lines
/// starting with `#` are comments.
pub fn parse_events_csv(text: &str, source_name: &str, sample_rate: u32) -> Result<Vec<GlottalEvent>> {
    let err = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut rows = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let Some((hline, header)) = rows.next() else {
        return Ok(Vec::new());
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| cols.iter().position(|c| *c == name);
    let kind_col = col("kind").ok_or_else(|| err(hline, "missing `kind` column".into()))?;
    let (index_col, time_col, sal_col) = (col("index"), col("time_s"), col("salience"));
    if index_col.is_none() && time_col.is_none() {
        return Err(err(hline, "need an `index` or `time_s` column".into()));
    }
    let mut out = Vec::new();
    for (line, row) in rows {
        let f: Vec<&str> = row.split(',').map(str::trim).collect();
        if f.len() != cols.len() {
            return Err(err(line, format!("expected {} fields, found {}", cols.len(), f.len())));
        }
        let kind: EventKind = f[kind_col].parse().map_err(|m| err(line, m))?;
        let index = match (index_col, time_col) {
            (Some(c), _) => f[c].parse::<usize>().map_err(|e| err(line, format!("index: {e}")))?,
            (None, Some(c)) => {
                let t: f64 = f[c].parse().map_err(|e| err(line, format!("time_s: {e}")))?;
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(err(line, format!("time_s must be non-negative, got {t}")));
                }
                (t * sample_rate as f64).round() as usize
            }
            (None, None) => unreachable!(),
        };
        let salience = match sal_col {
            Some(c) => f[c].parse().map_err(|e| err(line, format!("salience: {e}")))?,
            None => 0.0,
        };
        out.push(GlottalEvent::new(kind, index, sample_rate, salience));
    }
    Ok(out)
}

pub fn intervals_csv(intervals: &[EventInterval], sample_rate: u32) -> String {
    let fs = sample_rate as f64;
    let mut s = format!("{INTERVALS_HEADER}\nkind,start_s,end_s,start,end\n");
    for iv in intervals {
        writeln!(s, "{},{},{},{},{}", iv.kind, iv.start as f64 / fs, iv.end as f64 / fs, iv.start, iv.end).unwrap();
    }
    s
}

pub fn signal_csv<T: Scalar>(samples: &[T]) -> String {
    let mut s = format!("{SIGNAL_HEADER}\nindex,value\n");
    for (i, v) in samples.iter().enumerate() {
        writeln!(s, "{i},{v}").unwrap();
    }
    s
}

pub fn histogram_csv(bins: &[(f64, f64)]) -> String {
    let mut s = format!("{HISTOGRAM_HEADER}\nbin_center_s,probability\n");
    for (c, p) in bins {
        writeln!(s, "{c},{p}").unwrap();
    }
    s
}

pub fn sweep_csv(table: &SweepTable) -> String {
    let mut s = format!(
        "# glottal sweep-{} v1\n{},misidentification,idr,mr,far,n_cycles,utterances\n",
        table.parameter.replace('_', "-"),
        table.parameter
    );
    for r in &table.rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.value, r.misidentification, r.idr, r.mr, r.far, r.n_cycles, r.utterances
        )
        .unwrap();
    }
    s
}

/// Identification rates per speaker, in percent.
pub fn table1_csv(report: &CorpusReport) -> String {
    let mut s = format!("{TABLE1_HEADER}\nspeaker,method,idr_pct,mr_pct,far_pct\n");
    for (speaker, gci, _) in report.by_speaker() {
        writeln!(
            s,
            "{speaker},{METHOD_NAME},{:.2},{:.2},{:.2}",
            100.0 * gci.idr,
            100.0 * gci.mr,
            100.0 * gci.far
        )
        .unwrap();
    }
    s
}

/// Timing accuracy per speaker and event kind.
pub fn table2_csv(report: &CorpusReport) -> String {
    let mut s = format!("{TABLE2_HEADER}\nspeaker,method,event,ida_ms,acc025_pct\n");
    let row = |s: &mut String, speaker: &str, r: &EvalReport| {
        writeln!(
            s,
            "{speaker},{METHOD_NAME},{},{:.2},{:.1}",
            r.kind.as_str().to_uppercase(),
            1e3 * r.ida,
            100.0 * r.acc025
        )
        .unwrap();
    };
    for (speaker, gci, goi) in report.by_speaker() {
        row(&mut s, &speaker, &gci);
        if let Some(goi) = goi {
            row(&mut s, &speaker, &goi);
        }
    }
    s
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
