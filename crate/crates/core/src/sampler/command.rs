use std::fmt;

use crate::kernels::Dtype;

use super::SamplerError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Malloc {
        dtype: Dtype,
        name: String,
        nelems: usize,
    },
    Offset {
        dtype: Dtype,
        src: String,
        offset: usize,
        name: String,
    },
    Free(String),
    /// A kernel call; arguments stay raw tokens until execution.
    Call {
        name: String,
        tokens: Vec<String>,
    },
    ParBegin,
    ParEnd,
    SetCounters(Vec<String>),
    Go,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Malloc {
                dtype,
                name,
                nelems,
            } => write!(f, "{}malloc {name} {nelems}", dtype.prefix()),
            Command::Offset {
                dtype,
                src,
                offset,
                name,
            } => write!(f, "{}offset {src} {offset} {name}", dtype.prefix()),
            Command::Free(name) => write!(f, "free {name}"),
            Command::Call { name, tokens } => {
                f.write_str(name)?;
                for t in tokens {
                    write!(f, " {t}")?;
                }
                Ok(())
            }
            Command::ParBegin => f.write_str("{omp"),
            Command::ParEnd => f.write_str("}"),
            Command::SetCounters(names) => {
                f.write_str("set_counters")?;
                for n in names {
                    write!(f, " {n}")?;
                }
                Ok(())
            }
            Command::Go => f.write_str("go"),
        }
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses one input line; blank lines and `#` comments yield `None`.
pub fn parse_command(line: &str, line_no: usize) -> Result<Option<Command>, SamplerError> {
    let line = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let tokens: Vec<&str> = line.split_whitespace().collect();
    let Some((&head, rest)) = tokens.split_first() else {
        return Ok(None);
    };
    let malformed = |msg: String| SamplerError::Malformed { line: line_no, msg };
    let name = |s: &str| -> Result<String, SamplerError> {
        if is_identifier(s) {
            Ok(s.to_string())
        } else {
            Err(malformed(format!("`{s}` is not a valid variable name")))
        }
    };
    let count = |s: &str| -> Result<usize, SamplerError> {
        s.parse()
            .map_err(|_| malformed(format!("`{s}` is not an element count")))
    };
    let arity = |n: usize| -> Result<(), SamplerError> {
        if rest.len() == n {
            Ok(())
        } else {
            Err(malformed(format!(
                "`{head}` takes {n} arguments, got {}",
                rest.len()
            )))
        }
    };
    let dtype_cmd = |suffix: &str| -> Option<Dtype> {
        let rest = head.strip_suffix(suffix)?;
        let mut chars = rest.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Dtype::from_prefix(c),
            _ => None,
        }
    };
    let cmd = if let Some(dtype) = dtype_cmd("malloc") {
        arity(2)?;
        Command::Malloc {
            dtype,
            name: name(rest[0])?,
            nelems: count(rest[1])?,
        }
    } else if let Some(dtype) = dtype_cmd("offset") {
        arity(3)?;
        Command::Offset {
            dtype,
            src: name(rest[0])?,
            offset: count(rest[1])?,
            name: name(rest[2])?,
        }
    } else {
        match head {
            "free" => {
                arity(1)?;
                Command::Free(name(rest[0])?)
            }
            "{omp" => {
                arity(0)?;
                Command::ParBegin
            }
            "}" => {
                arity(0)?;
                Command::ParEnd
            }
            "go" => {
                arity(0)?;
                Command::Go
            }
            "set_counters" => Command::SetCounters(rest.iter().map(|s| s.to_string()).collect()),
            _ if is_identifier(head) => Command::Call {
                name: head.to_string(),
                tokens: rest.iter().map(|s| s.to_string()).collect(),
            },
            _ => return Err(malformed(format!("unrecognized command `{head}`"))),
        }
    };
    Ok(Some(cmd))
}

/// Parses a whole stream, keeping 1-based line numbers.
pub fn parse_stream(text: &str) -> Result<Vec<(usize, Command)>, SamplerError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(cmd) = parse_command(line, i + 1)? {
            out.push((i + 1, cmd));
        }
    }
    Ok(out)
}
