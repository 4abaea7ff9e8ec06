use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::kernels::Dtype;

use super::{MachineSpec, Measurement, ReportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Cycles,
    /// Seconds.
    Time,
    /// Gflops per second.
    Gflops,
    FlopsPerCycle,
    /// Flops per cycle as a fraction of the machine peak.
    Efficiency,
    Counter(usize),
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Cycles,
        Metric::Time,
        Metric::Gflops,
        Metric::FlopsPerCycle,
        Metric::Efficiency,
    ];

    /// Axis label.
    pub fn label(&self) -> String {
        match self {
            Metric::Cycles => "cycles".into(),
            Metric::Time => "time [s]".into(),
            Metric::Gflops => "Gflops/s".into(),
            Metric::FlopsPerCycle => "flops/cycle".into(),
            Metric::Efficiency => "efficiency".into(),
            Metric::Counter(k) => format!("counter {k}"),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Cycles => f.write_str("cycles"),
            Metric::Time => f.write_str("time"),
            Metric::Gflops => f.write_str("gflops"),
            Metric::FlopsPerCycle => f.write_str("flops-per-cycle"),
            Metric::Efficiency => f.write_str("efficiency"),
            Metric::Counter(k) => write!(f, "counter[{k}]"),
        }
    }
}

impl FromStr for Metric {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, ReportError> {
        Ok(match s {
            "cycles" => Metric::Cycles,
            "time" | "time-seconds" => Metric::Time,
            "gflops" | "gflops-per-second" => Metric::Gflops,
            "flops-per-cycle" => Metric::FlopsPerCycle,
            "efficiency" => Metric::Efficiency,
            _ => {
                let k = s
                    .strip_prefix("counter[")
                    .and_then(|r| r.strip_suffix(']'))
                    .and_then(|k| k.parse().ok())
                    .ok_or_else(|| ReportError::UnknownMetric(s.to_string()))?;
                Metric::Counter(k)
            }
        })
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Statistic {
    Min,
    Max,
    Mean,
    Median,
    /// Population standard deviation.
    Std,
}

impl Statistic {
    pub const ALL: [Statistic; 5] = [
        Statistic::Min,
        Statistic::Max,
        Statistic::Mean,
        Statistic::Median,
        Statistic::Std,
    ];
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistic::Min => "min",
            Statistic::Max => "max",
            Statistic::Mean => "mean",
            Statistic::Median => "median",
            Statistic::Std => "std",
        })
    }
}

impl FromStr for Statistic {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, ReportError> {
        Ok(match s {
            "min" | "minimum" => Statistic::Min,
            "max" | "maximum" => Statistic::Max,
            "mean" | "average" => Statistic::Mean,
            "median" => Statistic::Median,
            "std" | "standard-deviation" => Statistic::Std,
            _ => return Err(ReportError::UnknownStatistic(s.to_string())),
        })
    }
}

impl Serialize for Statistic {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Value of a metric for one measurement; `None` where it is undefined
/// (rates over zero cycles).
pub fn apply_metric(
    m: &Measurement,
    metric: Metric,
    machine: &MachineSpec,
    dtype: Dtype,
) -> Result<Option<f64>, ReportError> {
    let cycles = m.cycles as f64;
    let flops = m.flops as f64;
    let rate = |v: f64| if m.cycles == 0 { None } else { Some(v) };
    Ok(match metric {
        Metric::Cycles => Some(cycles),
        Metric::Time => Some(cycles / machine.frequency_hz),
        Metric::Gflops => rate(flops / (cycles / machine.frequency_hz) / 1e9),
        Metric::FlopsPerCycle => rate(flops / cycles),
        Metric::Efficiency => {
            let peak = machine.peak(dtype).ok_or(ReportError::NoPeak(dtype))?;
            rate(flops / cycles / peak)
        }
        Metric::Counter(k) => Some(*m.counters.get(k).ok_or(ReportError::CounterIndex {
            index: k,
            available: m.counters.len(),
        })? as f64),
    })
}

/// Statistic over repetition values; `discard_first` drops index 0.
pub fn apply_statistic(
    values: &[f64],
    stat: Statistic,
    discard_first: bool,
) -> Result<f64, ReportError> {
    let v = if discard_first {
        values.get(1..).unwrap_or(&[])
    } else {
        values
    };
    if v.is_empty() {
        return Err(ReportError::EmptyAfterDiscard);
    }
    let n = v.len() as f64;
    let mean = || v.iter().sum::<f64>() / n;
    Ok(match stat {
        Statistic::Min => v.iter().copied().fold(f64::INFINITY, f64::min),
        Statistic::Max => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Statistic::Mean => mean(),
        Statistic::Median => {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            let h = s.len() / 2;
            if s.len() % 2 == 1 {
                s[h]
            } else {
                (s[h - 1] + s[h]) / 2.0
            }
        }
        Statistic::Std => {
            let mu = mean();
            (v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n).sqrt()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meas(cycles: u64, flops: u64) -> Measurement {
        Measurement {
            cycles,
            counters: vec![7],
            flops,
            failed: false,
        }
    }

    #[test]
    fn names_roundtrip() {
        for m in Metric::ALL.into_iter().chain([Metric::Counter(3)]) {
            assert_eq!(m.to_string().parse::<Metric>().unwrap(), m);
        }
        for s in Statistic::ALL {
            assert_eq!(s.to_string().parse::<Statistic>().unwrap(), s);
        }
        assert_eq!(
            "gflops-per-second".parse::<Metric>().unwrap(),
            Metric::Gflops
        );
        assert!("speed".parse::<Metric>().is_err());
        assert!("mode".parse::<Statistic>().is_err());
    }

    #[test]
    fn statistics() {
        assert_eq!(
            apply_statistic(&[3.0, 1.0, 2.0], Statistic::Median, false).unwrap(),
            2.0
        );
        assert_eq!(
            apply_statistic(&[4.0, 1.0, 2.0, 3.0], Statistic::Median, false).unwrap(),
            2.5
        );
        let v = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        assert_eq!(apply_statistic(&v, Statistic::Std, false).unwrap(), 2.0);
        assert_eq!(
            apply_statistic(&[100.0, 5.0, 7.0], Statistic::Min, true).unwrap(),
            5.0
        );
        assert_eq!(
            apply_statistic(&[100.0, 5.0, 7.0], Statistic::Max, true).unwrap(),
            7.0
        );
        assert!(matches!(
            apply_statistic(&[1.0], Statistic::Mean, true),
            Err(ReportError::EmptyAfterDiscard)
        ));
        assert!(apply_statistic(&[], Statistic::Mean, false).is_err());
    }

    #[test]
    fn metrics() {
        let m = MachineSpec {
            frequency_hz: 2.0e9,
            peak_flops_per_cycle_double: Some(4.0),
            ..Default::default()
        };
        let x = meas(1000, 2000);
        let d = Dtype::Double;
        assert_eq!(
            apply_metric(&x, Metric::Cycles, &m, d).unwrap(),
            Some(1000.0)
        );
        assert_eq!(apply_metric(&x, Metric::Time, &m, d).unwrap(), Some(5e-7));
        assert_eq!(
            apply_metric(&x, Metric::FlopsPerCycle, &m, d).unwrap(),
            Some(2.0)
        );
        assert_eq!(
            apply_metric(&x, Metric::Efficiency, &m, d).unwrap(),
            Some(0.5)
        );
        assert_eq!(apply_metric(&x, Metric::Gflops, &m, d).unwrap(), Some(4.0));
        assert_eq!(
            apply_metric(&x, Metric::Counter(0), &m, d).unwrap(),
            Some(7.0)
        );
        assert!(apply_metric(&x, Metric::Counter(1), &m, d).is_err());
        assert!(matches!(
            apply_metric(&x, Metric::Efficiency, &m, Dtype::Single),
            Err(ReportError::NoPeak(_))
        ));
        let zero = meas(0, 10);
        assert_eq!(apply_metric(&zero, Metric::Gflops, &m, d).unwrap(), None);
        assert_eq!(apply_metric(&zero, Metric::Time, &m, d).unwrap(), Some(0.0));
    }
}
