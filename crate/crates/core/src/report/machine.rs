use serde::Serialize;

use crate::kernels::Dtype;

use super::ReportError;

/// Clock frequency and nominal peak performance of the measured machine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineSpec {
    pub name: String,
    pub frequency_hz: f64,
    pub peak_flops_per_cycle_double: Option<f64>,
    pub peak_flops_per_cycle_single: Option<f64>,
}

impl Default for MachineSpec {
    /// 1 GHz without peaks: cycles read as nanoseconds and efficiency is
    /// unavailable.
    fn default() -> Self {
        MachineSpec {
            name: "default".into(),
            frequency_hz: 1e9,
            peak_flops_per_cycle_double: None,
            peak_flops_per_cycle_single: None,
        }
    }
}

impl MachineSpec {
    pub fn peak(&self, dtype: Dtype) -> Option<f64> {
        match dtype {
            Dtype::Double => self.peak_flops_per_cycle_double,
            Dtype::Single => self.peak_flops_per_cycle_single,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ReportError> {
        let mut m = MachineSpec {
            name: String::new(),
            ..Default::default()
        };
        let mut have_freq = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| ReportError::Machine { line: i + 1, msg };
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| err("expected `key: value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let positive = || -> Result<f64, ReportError> {
                match value.parse::<f64>() {
                    Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
                    _ => Err(err(format!(
                        "`{key}` must be a positive number, got `{value}`"
                    ))),
                }
            };
            match key {
                "name" => m.name = value.to_string(),
                "frequency_hz" => {
                    m.frequency_hz = positive()?;
                    have_freq = true;
                }
                "peak_flops_per_cycle_double" => m.peak_flops_per_cycle_double = Some(positive()?),
                "peak_flops_per_cycle_single" => m.peak_flops_per_cycle_single = Some(positive()?),
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        if !have_freq {
            return Err(ReportError::Machine {
                line: 0,
                msg: "missing `frequency_hz`".into(),
            });
        }
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("name: {}\nfrequency_hz: {}\n", self.name, self.frequency_hz);
        if let Some(p) = self.peak_flops_per_cycle_double {
            s.push_str(&format!("peak_flops_per_cycle_double: {p}\n"));
        }
        if let Some(p) = self.peak_flops_per_cycle_single {
            s.push_str(&format!("peak_flops_per_cycle_single: {p}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print() {
        let text = "name: sandy\nfrequency_hz: 2.6e9\npeak_flops_per_cycle_double: 8\npeak_flops_per_cycle_single: 16\n";
        let m = MachineSpec::parse(text).unwrap();
        assert_eq!(m.frequency_hz, 2.6e9);
        assert_eq!(m.peak(Dtype::Single), Some(16.0));
        assert_eq!(MachineSpec::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            "frequency_hz: 0",
            "frequency_hz: -1",
            "name: x",
            "frequency_hz: 1\nvoltage: 3",
            "frequency_hz: 1\npeak_flops_per_cycle_double: 0",
        ] {
            assert!(MachineSpec::parse(bad).is_err(), "{bad}");
        }
    }
}
