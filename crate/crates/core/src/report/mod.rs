//! Sampler output organized as range value, repetition, inner value, call;
//! the reduced per-repetition view; metrics, statistics, and series.

mod machine;
mod metrics;

use std::fmt::Write;

use serde::Serialize;
use thiserror::Error;

use crate::experiment::{deserialize, Experiment, ExperimentError, InnerKind, Point};
use crate::kernels::Dtype;
use crate::sampler::ResultLine;

pub use machine::MachineSpec;
pub use metrics::{apply_metric, apply_statistic, Metric, Statistic};

/// Separates the experiment from the results in a report file.
pub const SEPARATOR: &str = "%%%";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("report has no `{SEPARATOR}` line after the experiment")]
    MissingSeparator,
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("expected {expected} thread-count segments, found {found}")]
    SegmentCount { expected: usize, found: usize },
    #[error(
        "segment {segment} (nthreads={nthreads}): expected {expected} result lines, found {found}"
    )]
    LineCount {
        segment: usize,
        nthreads: u32,
        expected: usize,
        found: usize,
    },
    #[error("machine file line {line}: {msg}")]
    Machine { line: usize, msg: String },
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("unknown statistic `{0}`")]
    UnknownStatistic(String),
    #[error("efficiency needs a {0} peak in the machine description")]
    NoPeak(Dtype),
    #[error("counter {index} requested, but measurements carry {available}")]
    CounterIndex { index: usize, available: usize },
    #[error("no values left after discarding the first repetition")]
    EmptyAfterDiscard,
    #[error("per-call breakdown is not available: {0}")]
    Breakdown(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Measurement {
    pub cycles: u64,
    pub counters: Vec<u64>,
    pub flops: u64,
    pub failed: bool,
}

impl Measurement {
    fn zero(ncounters: usize) -> Self {
        Measurement {
            cycles: 0,
            counters: vec![0; ncounters],
            flops: 0,
            failed: false,
        }
    }

    fn add(&mut self, other: &Measurement) {
        self.cycles += other.cycles;
        self.flops += other.flops;
        for (a, b) in self.counters.iter_mut().zip(&other.counters) {
            *a += b;
        }
        self.failed |= other.failed;
    }
}

/// Results of one range value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeEntry {
    pub value: Option<i64>,
    pub nthreads: u32,
    pub inner_values: Vec<i64>,
    /// `reps[r]` holds one measurement per (inner value, call) in execution
    /// order, or a single block measurement for a parallel inner range.
    pub reps: Vec<Vec<Measurement>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub range_value: Option<i64>,
    pub rep: usize,
    pub inner_value: Option<i64>,
    /// 1-based; absent for parallel blocks.
    pub call: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    #[serde(skip)]
    pub experiment: Experiment,
    pub experiment_text: String,
    pub timer: String,
    pub counters_available: String,
    pub ranges: Vec<RangeEntry>,
}

/// Parses a report file: experiment text, separator, metadata, and one
/// block of result lines per thread-count segment.
pub fn parse_report(text: &str) -> Result<Report, ReportError> {
    let lines: Vec<&str> = text.lines().collect();
    let sep = lines
        .iter()
        .position(|l| l.trim() == SEPARATOR)
        .ok_or(ReportError::MissingSeparator)?;
    let experiment_text: String = lines[..sep].iter().map(|l| format!("{l}\n")).collect();
    let experiment = deserialize(&experiment_text)?;
    let (mut timer, mut counters_available) = (String::new(), String::new());
    let mut segments: Vec<(usize, u32, Vec<(usize, &str)>)> = Vec::new();
    for (i, raw) in lines.iter().enumerate().skip(sep + 1) {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let n = i + 1;
        if let Some(v) = line.strip_prefix("timer:") {
            timer = v.trim().to_string();
        } else if let Some(v) = line.strip_prefix("counters-available:") {
            counters_available = v.trim().to_string();
        } else if let Some(v) = line.strip_prefix("segment:") {
            let t = v
                .trim()
                .strip_prefix("nthreads=")
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| ReportError::Malformed {
                    line: n,
                    msg: format!("bad segment header `{line}`"),
                })?;
            segments.push((n, t, Vec::new()));
        } else {
            match segments.last_mut() {
                Some(s) => s.2.push((n, line)),
                None => {
                    return Err(ReportError::Malformed {
                        line: n,
                        msg: "result line before any segment".into(),
                    })
                }
            }
        }
    }
    let expected = experiment.segments()?;
    if expected.len() != segments.len() {
        return Err(ReportError::SegmentCount {
            expected: expected.len(),
            found: segments.len(),
        });
    }
    let ncounters = experiment.counters.len();
    let nreps = experiment.nreps as usize;
    let mut ranges = Vec::new();
    for (si, (seg, (_, nthreads, results))) in expected.iter().zip(&segments).enumerate() {
        let want = seg.expected_lines(&experiment);
        if results.len() != want || seg.nthreads != *nthreads {
            return Err(ReportError::LineCount {
                segment: si + 1,
                nthreads: *nthreads,
                expected: want,
                found: results.len(),
            });
        }
        let mut it = results.iter();
        for g in &seg.groups {
            for _ in 0..g.setup {
                it.next();
            }
            let flops = unit_flops(&experiment, g.range_value, &g.inner_values)?;
            let mut reps = Vec::with_capacity(nreps);
            for _ in 0..nreps {
                let mut units = Vec::with_capacity(flops.len());
                for &f in &flops {
                    let &(n, line) = it.next().expect("line count was checked");
                    let r: ResultLine = line
                        .parse()
                        .map_err(|msg| ReportError::Malformed { line: n, msg })?;
                    if r.counters.len() != ncounters {
                        return Err(ReportError::Malformed {
                            line: n,
                            msg: format!(
                                "{} counter values, expected {ncounters}",
                                r.counters.len()
                            ),
                        });
                    }
                    units.push(Measurement {
                        cycles: r.cycles,
                        counters: r.counters,
                        flops: f,
                        failed: r.failed,
                    });
                }
                reps.push(units);
            }
            ranges.push(RangeEntry {
                value: g.range_value,
                nthreads: *nthreads,
                inner_values: g.inner_values.clone(),
                reps,
            });
        }
    }
    Ok(Report {
        experiment,
        experiment_text,
        timer,
        counters_available,
        ranges,
    })
}

/// Flops of each measured unit of one repetition.
fn unit_flops(
    exp: &Experiment,
    rv: Option<i64>,
    inner_values: &[i64],
) -> Result<Vec<u64>, ExperimentError> {
    let inner: Vec<Option<i64>> = if exp.inner().is_some() {
        inner_values.iter().map(|&v| Some(v)).collect()
    } else {
        vec![None]
    };
    let mut per_call = Vec::new();
    for &iv in &inner {
        for ci in 0..exp.calls.len() {
            per_call.push(exp.call_flops(
                ci,
                Point {
                    range: rv,
                    inner: iv,
                },
            )?);
        }
    }
    Ok(if exp.is_parallel() {
        vec![per_call.iter().sum()]
    } else {
        per_call
    })
}

impl Report {
    pub fn range_var(&self) -> Option<&str> {
        self.experiment.range.as_ref().map(|r| r.var.as_str())
    }

    pub fn is_ranged(&self) -> bool {
        self.experiment.range.is_some()
    }

    /// Double unless every call is single precision.
    pub fn dtype(&self) -> Dtype {
        let all_single = !self.experiment.calls.is_empty()
            && self
                .experiment
                .calls
                .iter()
                .all(|c| c.signature().dtype == Dtype::Single);
        if all_single {
            Dtype::Single
        } else {
            Dtype::Double
        }
    }

    /// Raw access in the order range, repetition, inner value, call. For a
    /// parallel inner range the block is at inner 0, call 0.
    pub fn get(&self, range: usize, rep: usize, inner: usize, call: usize) -> Option<&Measurement> {
        let units = self.ranges.get(range)?.reps.get(rep)?;
        if self.experiment.is_parallel() {
            return if inner == 0 && call == 0 {
                units.first()
            } else {
                None
            };
        }
        let ncalls = self.experiment.calls.len();
        if call >= ncalls {
            return None;
        }
        units.get(inner * ncalls + call)
    }

    /// Per range value, one measurement per repetition with the inner range
    /// and the calls accumulated.
    pub fn reduce(&self) -> Vec<(Option<i64>, Vec<Measurement>)> {
        let nc = self.experiment.counters.len();
        self.ranges
            .iter()
            .map(|r| {
                let reps = r
                    .reps
                    .iter()
                    .map(|units| {
                        let mut m = Measurement::zero(nc);
                        units.iter().for_each(|u| m.add(u));
                        m
                    })
                    .collect();
                (r.value, reps)
            })
            .collect()
    }

    /// Per range value, one measurement per repetition of a single call,
    /// accumulated over the inner range.
    pub fn call_view(
        &self,
        call: usize,
    ) -> Result<Vec<(Option<i64>, Vec<Measurement>)>, ReportError> {
        if self.experiment.is_parallel() {
            return Err(ReportError::Breakdown(
                "parallel blocks are timed as a whole".into(),
            ));
        }
        let ncalls = self.experiment.calls.len();
        let nc = self.experiment.counters.len();
        Ok(self
            .ranges
            .iter()
            .map(|r| {
                let reps = r
                    .reps
                    .iter()
                    .map(|units| {
                        let mut m = Measurement::zero(nc);
                        units
                            .iter()
                            .skip(call)
                            .step_by(ncalls)
                            .for_each(|u| m.add(u));
                        m
                    })
                    .collect();
                (r.value, reps)
            })
            .collect())
    }

    /// Coordinates the sampler flagged as numerical failures.
    pub fn failures(&self) -> Vec<Failure> {
        let parallel = self.experiment.is_parallel();
        let ncalls = self.experiment.calls.len();
        let mut out = Vec::new();
        for r in &self.ranges {
            for (rep, units) in r.reps.iter().enumerate() {
                for (u, m) in units.iter().enumerate() {
                    if !m.failed {
                        continue;
                    }
                    let (inner_value, call) = if parallel {
                        (None, None)
                    } else {
                        (
                            r.inner_values.get(u / ncalls).copied(),
                            Some(u % ncalls + 1),
                        )
                    };
                    out.push(Failure {
                        range_value: r.value,
                        rep,
                        inner_value,
                        call,
                    });
                }
            }
        }
        out
    }

    pub fn inner_kind(&self) -> Option<InnerKind> {
        self.experiment.inner().map(|(_, k)| k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    /// Range value; absent for unranged reports.
    pub x: Option<i64>,
    /// Absent where the metric is undefined or every repetition failed.
    pub y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub label: String,
    pub metric: Metric,
    pub statistic: Statistic,
    pub points: Vec<SeriesPoint>,
}

/// Query shared by the CLI, the plots, and the HTTP service.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Query {
    pub metric: Metric,
    pub statistic: Statistic,
    pub discard_first: bool,
}

fn summarize(
    view: Vec<(Option<i64>, Vec<Measurement>)>,
    q: Query,
    machine: &MachineSpec,
    dtype: Dtype,
    label: String,
) -> Result<Series, ReportError> {
    let mut points = Vec::with_capacity(view.len());
    for (x, reps) in view {
        let kept = if q.discard_first {
            reps.get(1..).unwrap_or(&[])
        } else {
            &reps[..]
        };
        if kept.is_empty() {
            return Err(ReportError::EmptyAfterDiscard);
        }
        let mut values = Vec::with_capacity(kept.len());
        for m in kept.iter().filter(|m| !m.failed) {
            if let Some(v) = apply_metric(m, q.metric, machine, dtype)? {
                values.push(v);
            }
        }
        let y = if values.is_empty() {
            None
        } else {
            Some(apply_statistic(&values, q.statistic, false)?)
        };
        points.push(SeriesPoint { x, y });
    }
    Ok(Series {
        label,
        metric: q.metric,
        statistic: q.statistic,
        points,
    })
}

/// Statistic of a metric over the reduced repetitions of each range value.
/// Failed repetitions are excluded.
pub fn series(report: &Report, q: Query, machine: &MachineSpec) -> Result<Series, ReportError> {
    summarize(report.reduce(), q, machine, report.dtype(), "total".into())
}

/// One series per call plus the total.
pub fn breakdown(
    report: &Report,
    q: Query,
    machine: &MachineSpec,
) -> Result<Vec<Series>, ReportError> {
    let mut out = Vec::new();
    for (ci, call) in report.experiment.calls.iter().enumerate() {
        let label = format!("{} {}", ci + 1, call.kernel);
        out.push(summarize(
            report.call_view(ci)?,
            q,
            machine,
            call.signature().dtype,
            label,
        )?);
    }
    out.push(series(report, q, machine)?);
    Ok(out)
}

/// Formats a value so that parsing it back yields the same number.
pub fn format_value(v: Option<f64>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

/// Comma-separated export: range value, metric, statistic, value.
pub fn stats_csv(series: &[Series]) -> String {
    let mut s = String::from("range-value,metric,statistic,value\n");
    for ser in series {
        for p in &ser.points {
            let x = p.x.map(|x| x.to_string()).unwrap_or_default();
            writeln!(
                s,
                "{x},{},{},{}",
                ser.metric,
                ser.statistic,
                format_value(p.y)
            )
            .expect("writing to a String");
        }
    }
    s
}
