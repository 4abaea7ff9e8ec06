use std::fmt::Write;

use crate::expr::Expr;

use super::{
    is_identifier, Along, CallSpec, Experiment, ExperimentError, RangeSpec, Threads, VarySpec,
    VaryWith, REP,
};

pub const HEADER: &str = "#KERNBENCH EXPERIMENT v1";

/// Canonical text of an experiment.
pub fn serialize(exp: &Experiment) -> String {
    let mut s = String::new();
    let mut line = |args: std::fmt::Arguments<'_>| {
        s.write_fmt(args).expect("writing to a String cannot fail");
        s.push('\n');
    };
    line(format_args!("{HEADER}"));
    line(format_args!("backend: {}", exp.backend));
    if let Some(m) = &exp.machine {
        line(format_args!("machine: {m}"));
    }
    line(format_args!("nthreads: {}", exp.nthreads));
    if let Some(r) = &exp.range {
        line(format_args!("range: {r}"));
    }
    line(format_args!("nreps: {}", exp.nreps));
    if let Some(r) = &exp.sumrange {
        line(format_args!("sumrange: {r}"));
    }
    if let Some(r) = &exp.parrange {
        line(format_args!("parrange: {r}"));
    }
    if !exp.counters.is_empty() {
        line(format_args!("counters: {}", exp.counters.join(" ")));
    }
    for (name, v) in &exp.params {
        line(format_args!("param: {name} {v}"));
    }
    line(format_args!("seed: {}", exp.seed));
    for c in &exp.calls {
        line(format_args!("call: {c}"));
    }
    for v in &exp.vary {
        line(format_args!("vary: {v}"));
    }
    s
}

/// Parses experiment text. Blank lines and `#` comments after the header
/// are ignored; every other line is `field: value`.
pub fn deserialize(text: &str) -> Result<Experiment, ExperimentError> {
    let mut lines = text.lines().enumerate();
    let first = lines.by_ref().find(|(_, l)| !l.trim().is_empty());
    match first {
        Some((_, l)) if l.trim() == HEADER => {}
        Some((i, _)) => {
            return Err(ExperimentError::Parse {
                line: i + 1,
                field: "header".into(),
                msg: format!("expected `{HEADER}`"),
            })
        }
        None => {
            return Err(ExperimentError::Parse {
                line: 1,
                field: "header".into(),
                msg: "empty experiment".into(),
            })
        }
    }
    let mut exp = Experiment::default();
    let mut seen: Vec<&str> = Vec::new();
    for (i, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let n = i + 1;
        let Some((field, value)) = line.split_once(':') else {
            return Err(ExperimentError::Parse {
                line: n,
                field: line.into(),
                msg: "expected `field: value`".into(),
            });
        };
        let (field, value) = (field.trim(), value.trim());
        let err = |msg: String| ExperimentError::Parse {
            line: n,
            field: field.to_string(),
            msg,
        };
        const SINGLE: [&str; 9] = [
            "backend", "machine", "nthreads", "range", "nreps", "sumrange", "parrange", "counters",
            "seed",
        ];
        if let Some(f) = SINGLE.iter().find(|f| **f == field) {
            if seen.contains(f) {
                return Err(err("given more than once".into()));
            }
            seen.push(f);
        }
        match field {
            "backend" => exp.backend = value.to_string(),
            "machine" => exp.machine = Some(value.to_string()),
            "nthreads" => {
                exp.nthreads = if let Ok(v) = value.parse() {
                    Threads::Fixed(v)
                } else if is_identifier(value) {
                    Threads::Range(value.to_string())
                } else {
                    return Err(err(format!(
                        "`{value}` is neither a thread count nor a variable"
                    )));
                }
            }
            "range" => exp.range = Some(parse_range(value).map_err(err)?),
            "sumrange" => exp.sumrange = Some(parse_range(value).map_err(err)?),
            "parrange" => exp.parrange = Some(parse_range(value).map_err(err)?),
            "nreps" => {
                exp.nreps = value
                    .parse()
                    .map_err(|_| err(format!("`{value}` is not a count")))?
            }
            "seed" => {
                exp.seed = value
                    .parse()
                    .map_err(|_| err(format!("`{value}` is not a seed")))?
            }
            "counters" => exp.counters = value.split_whitespace().map(str::to_string).collect(),
            "param" => {
                let mut it = value.split_whitespace();
                let (Some(name), Some(v), None) = (it.next(), it.next(), it.next()) else {
                    return Err(err("expected `<name> <integer>`".into()));
                };
                if !is_identifier(name) {
                    return Err(err(format!("`{name}` is not a parameter name")));
                }
                if exp.param(name).is_some() {
                    return Err(err(format!("parameter `{name}` given more than once")));
                }
                let v = v
                    .parse()
                    .map_err(|_| err(format!("`{v}` is not an integer")))?;
                exp.params.push((name.to_string(), v));
            }
            "call" => {
                let tokens: Vec<&str> = value.split_whitespace().collect();
                exp.calls.push(CallSpec::parse(&tokens).map_err(err)?);
            }
            "vary" => exp.vary.push(parse_vary(value).map_err(err)?),
            _ => return Err(err("unknown field".into())),
        }
    }
    Ok(exp)
}

fn parse_range(value: &str) -> Result<RangeSpec, String> {
    let (var, bounds) = value
        .split_once(char::is_whitespace)
        .ok_or("expected `<var> <start>:<step>:<stop>`")?;
    if !is_identifier(var) {
        return Err(format!("`{var}` is not a variable name"));
    }
    let parts: Vec<&str> = bounds.split(':').collect();
    let [start, step, stop] = parts[..] else {
        return Err(format!(
            "`{}` is not `<start>:<step>:<stop>`",
            bounds.trim()
        ));
    };
    let e = |t: &str| Expr::parse(t).map_err(|e| format!("`{}`: {e}", t.trim()));
    Ok(RangeSpec {
        var: var.to_string(),
        start: e(start)?,
        step: e(step)?,
        stop: e(stop)?,
    })
}

fn parse_vary(value: &str) -> Result<VarySpec, String> {
    let tokens: Vec<&str> = value.split_whitespace().collect();
    let usage = "expected `<operand> with <rep|var>[,<rep|var>] along <0|1> pad <expr>`";
    if tokens.len() < 7 || tokens[1] != "with" || tokens[3] != "along" || tokens[5] != "pad" {
        return Err(usage.into());
    }
    if !is_identifier(tokens[0]) {
        return Err(format!("`{}` is not an operand name", tokens[0]));
    }
    let with = tokens[2]
        .split(',')
        .map(|w| match w {
            REP => Ok(VaryWith::Rep),
            v if is_identifier(v) => Ok(VaryWith::Var(v.to_string())),
            v => Err(format!("`{v}` is neither `rep` nor a variable")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let along = match tokens[4] {
        "0" => Along::Vertical,
        "1" => Along::Horizontal,
        a => return Err(format!("along must be 0 or 1, got `{a}`")),
    };
    let pad_text = tokens[6..].join(" ");
    let pad = Expr::parse(&pad_text).map_err(|e| format!("pad `{pad_text}`: {e}"))?;
    Ok(VarySpec {
        operand: tokens[0].to_string(),
        with,
        along,
        pad,
    })
}
