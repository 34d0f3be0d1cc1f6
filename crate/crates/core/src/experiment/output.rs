//! Trace and summary CSV files.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Metrics of one trial at one checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub trial: usize,
    pub checkpoint_queries: u64,
    /// Optimality gap, or stationarity for the nonconvex family.
    pub gap: f64,
    pub violation: f64,
    pub dual_norm: f64,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub checkpoint_queries: u64,
    pub mean_gap: f64,
    pub stderr_gap: f64,
    pub mean_violation: f64,
    pub stderr_violation: f64,
    pub n_trials: usize,
    pub n_diverged: usize,
}

pub const TRACE_HEADER: [&str; 6] = [
    "trial",
    "checkpoint_queries",
    "gap",
    "violation",
    "dual_norm",
    "diverged",
];

pub const SUMMARY_HEADER: [&str; 7] = [
    "checkpoint_queries",
    "mean_gap",
    "stderr_gap",
    "mean_violation",
    "stderr_violation",
    "n_trials",
    "n_diverged",
];

/// 17 significant digits, enough to round-trip every `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn parse_float(s: &str, line: usize) -> Result<f64> {
    s.parse().map_err(|e| Error::Parse {
        line,
        message: format!("bad number '{s}': {e}"),
    })
}

fn parse_int<T: std::str::FromStr>(s: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| Error::Parse {
        line,
        message: format!("bad integer '{s}': {e}"),
    })
}

pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            r.trial.to_string(),
            r.checkpoint_queries.to_string(),
            format_float(r.gap),
            format_float(r.violation),
            format_float(r.dual_norm),
            r.diverged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(r.headers()?, &TRACE_HEADER)?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != TRACE_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields", TRACE_HEADER.len()),
            });
        }
        rows.push(TraceRow {
            trial: parse_int(&rec[0], line)?,
            checkpoint_queries: parse_int(&rec[1], line)?,
            gap: parse_float(&rec[2], line)?,
            violation: parse_float(&rec[3], line)?,
            dual_norm: parse_float(&rec[4], line)?,
            diverged: parse_int(&rec[5], line)?,
        });
    }
    Ok(rows)
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.checkpoint_queries.to_string(),
            format_float(r.mean_gap),
            format_float(r.stderr_gap),
            format_float(r.mean_violation),
            format_float(r.stderr_violation),
            r.n_trials.to_string(),
            r.n_diverged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(r.headers()?, &SUMMARY_HEADER)?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != SUMMARY_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields", SUMMARY_HEADER.len()),
            });
        }
        rows.push(SummaryRow {
            checkpoint_queries: parse_int(&rec[0], line)?,
            mean_gap: parse_float(&rec[1], line)?,
            stderr_gap: parse_float(&rec[2], line)?,
            mean_violation: parse_float(&rec[3], line)?,
            stderr_violation: parse_float(&rec[4], line)?,
            n_trials: parse_int(&rec[5], line)?,
            n_diverged: parse_int(&rec[6], line)?,
        });
    }
    Ok(rows)
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if found.iter().eq(expected.iter().copied()) {
        Ok(())
    } else {
        Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        })
    }
}

/// Mean and `sample std / sqrt(count)`; the error is 0 for a single value.
fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

/// Per-checkpoint mean and standard error over trials. Diverged rows are
/// counted and left out of the means. Every trace must use the same
/// checkpoints.
pub fn summarize(traces: &[Vec<TraceRow>]) -> Result<Vec<SummaryRow>> {
    let first = traces.first().ok_or(Error::Empty("no traces to summarize"))?;
    for t in traces {
        if t.len() != first.len()
            || t.iter()
                .zip(first)
                .any(|(a, b)| a.checkpoint_queries != b.checkpoint_queries)
        {
            return Err(Error::InvalidParameter(
                "traces use different checkpoints".into(),
            ));
        }
    }
    Ok((0..first.len())
        .map(|j| {
            let rows: Vec<&TraceRow> = traces.iter().map(|t| &t[j]).collect();
            let live: Vec<&TraceRow> = rows
                .iter()
                .copied()
                .filter(|r| !r.diverged && r.gap.is_finite() && r.violation.is_finite())
                .collect();
            let gaps: Vec<f64> = live.iter().map(|r| r.gap).collect();
            let viol: Vec<f64> = live.iter().map(|r| r.violation).collect();
            let (mean_gap, stderr_gap) = mean_stderr(&gaps);
            let (mean_violation, stderr_violation) = mean_stderr(&viol);
            SummaryRow {
                checkpoint_queries: first[j].checkpoint_queries,
                mean_gap,
                stderr_gap,
                mean_violation,
                stderr_violation,
                n_trials: rows.len(),
                n_diverged: rows.len() - live.len(),
            }
        })
        .collect())
}
