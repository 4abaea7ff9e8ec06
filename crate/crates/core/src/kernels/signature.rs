use serde::Serialize;

use super::exec::ArgValue;
use super::{Dtype, KernelError};

/// How an operand extent follows from the call's dim and flag arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeRule {
    /// The value of a dim argument.
    Arg(&'static str),
    /// Constant 1 (the row count of a strided vector).
    One,
    /// `then` if flag `flag` equals `when`, else `otherwise`.
    Pick {
        flag: &'static str,
        when: char,
        then: &'static str,
        otherwise: &'static str,
    },
}

impl ShapeRule {
    pub fn identifiers(&self) -> Vec<&'static str> {
        match *self {
            ShapeRule::Arg(a) => vec![a],
            ShapeRule::One => vec![],
            ShapeRule::Pick {
                flag,
                then,
                otherwise,
                ..
            } => vec![flag, then, otherwise],
        }
    }

    pub fn eval(&self, b: &KernelBindings) -> Result<usize, KernelError> {
        let name = match *self {
            ShapeRule::Arg(a) => a,
            ShapeRule::One => return Ok(1),
            ShapeRule::Pick {
                flag,
                when,
                then,
                otherwise,
            } => {
                if b.flag(flag)? == when {
                    then
                } else {
                    otherwise
                }
            }
        };
        Ok(b.dim(name)? as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    General,
    Lower,
    Upper,
    SymmetricPd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureRule {
    Fixed(Structure),
    /// Lower or upper triangular according to an `uplo` flag.
    Triangular {
        uplo: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DataSpec {
    pub rows: ShapeRule,
    pub cols: ShapeRule,
    /// Leading-dimension argument; `None` for contiguous operands.
    pub ld: Option<&'static str>,
    pub structure: StructureRule,
    pub writes: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArgKind {
    Flag {
        allowed: &'static [char],
    },
    Dim,
    Scalar,
    /// Leading dimension; must be at least `max(1, min)`.
    Ld {
        min: ShapeRule,
    },
    Data(DataSpec),
    Path,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArgSpec {
    pub name: &'static str,
    #[serde(flatten)]
    pub kind: ArgKind,
}

/// Which reference routine executes a signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelOp {
    Gemm,
    Gemv,
    Axpy,
    Trsv,
    Trsm,
    Trmm,
    Syrk,
    Getrf,
    Gesv,
    Trti2,
    Trtri,
    Potrf,
    Memset,
    Gerand,
    Porand,
    Readfile,
    Writefile,
}

#[derive(Debug, Clone, Serialize)]
pub struct Signature {
    pub name: &'static str,
    pub dtype: Dtype,
    pub args: Vec<ArgSpec>,
    /// Human-readable flop formula.
    pub flops: &'static str,
    pub description: &'static str,
    #[serde(skip)]
    pub(crate) flop_fn: fn(&KernelBindings) -> Result<u64, KernelError>,
    #[serde(skip)]
    pub(crate) op: KernelOp,
}

/// Values of a call's flag and dim arguments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KernelBindings {
    flags: Vec<(String, char)>,
    dims: Vec<(String, i64)>,
}

impl KernelBindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_flag(mut self, name: &str, value: char) -> Self {
        self.set_flag(name, value);
        self
    }

    pub fn with_dim(mut self, name: &str, value: i64) -> Self {
        self.set_dim(name, value);
        self
    }

    pub fn set_flag(&mut self, name: &str, value: char) {
        let value = value.to_ascii_uppercase();
        match self.flags.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => self.flags.push((name.to_string(), value)),
        }
    }

    pub fn set_dim(&mut self, name: &str, value: i64) {
        match self.dims.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => self.dims.push((name.to_string(), value)),
        }
    }

    pub fn flag(&self, name: &str) -> Result<char, KernelError> {
        self.flags
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| KernelError::BadArgument {
                arg: name.into(),
                msg: "flag not bound".into(),
            })
    }

    pub fn dim(&self, name: &str) -> Result<u64, KernelError> {
        let v = self
            .dims
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| KernelError::BadArgument {
                arg: name.into(),
                msg: "value not bound".into(),
            })?;
        u64::try_from(v).map_err(|_| KernelError::BadArgument {
            arg: name.into(),
            msg: format!("negative size {v}"),
        })
    }
}

/// Derived extent of one data operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OperandShape {
    pub arg: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub min_ld: usize,
}

impl Signature {
    pub fn arg_index(&self, name: &str) -> Option<usize> {
        self.args.iter().position(|a| a.name == name)
    }

    pub fn data_args(&self) -> impl Iterator<Item = (usize, &ArgSpec, &DataSpec)> {
        self.args
            .iter()
            .enumerate()
            .filter_map(|(i, a)| match &a.kind {
                ArgKind::Data(d) => Some((i, a, d)),
                _ => None,
            })
    }

    /// Checks that every flag and dim argument in `b` is legal.
    pub fn check_bindings(&self, b: &KernelBindings) -> Result<(), KernelError> {
        for a in &self.args {
            match &a.kind {
                ArgKind::Flag { allowed } => {
                    let v = b.flag(a.name)?;
                    if !allowed.contains(&v) {
                        return Err(KernelError::BadArgument {
                            arg: a.name.into(),
                            msg: format!("illegal flag `{v}`, expected one of {allowed:?}"),
                        });
                    }
                }
                ArgKind::Dim => {
                    b.dim(a.name)?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Rows, columns, and minimal leading dimension of every data operand,
    /// in argument order.
    pub fn derive_shapes(&self, b: &KernelBindings) -> Result<Vec<OperandShape>, KernelError> {
        self.check_bindings(b)?;
        self.data_args()
            .map(|(_, a, d)| {
                let rows = d.rows.eval(b)?;
                let cols = d.cols.eval(b)?;
                Ok(OperandShape {
                    arg: a.name,
                    rows,
                    cols,
                    min_ld: rows.max(1),
                })
            })
            .collect()
    }

    /// Structure of a data operand under the given flags.
    pub fn structure_of(
        &self,
        data_arg: &str,
        b: &KernelBindings,
    ) -> Result<Structure, KernelError> {
        let spec = self
            .data_args()
            .find(|(_, a, _)| a.name == data_arg)
            .map(|(_, _, d)| d)
            .ok_or_else(|| KernelError::BadArgument {
                arg: data_arg.into(),
                msg: "not a data argument".into(),
            })?;
        Ok(match spec.structure {
            StructureRule::Fixed(s) => s,
            StructureRule::Triangular { uplo } => {
                if b.flag(uplo)? == 'L' {
                    Structure::Lower
                } else {
                    Structure::Upper
                }
            }
        })
    }

    /// Converts raw textual tokens into typed argument values; data tokens
    /// are kept as text for the caller to resolve.
    pub fn parse_args(&self, tokens: &[&str]) -> Result<Vec<ArgValue<String>>, KernelError> {
        if tokens.len() != self.args.len() {
            return Err(KernelError::BadArgument {
                arg: self.name.into(),
                msg: format!(
                    "expected {} arguments, got {}",
                    self.args.len(),
                    tokens.len()
                ),
            });
        }
        self.args
            .iter()
            .zip(tokens)
            .map(|(spec, tok)| {
                let bad = |msg: String| KernelError::BadArgument {
                    arg: spec.name.into(),
                    msg,
                };
                Ok(match &spec.kind {
                    ArgKind::Flag { allowed } => {
                        let mut chars = tok.chars();
                        let c = chars.next().map(|c| c.to_ascii_uppercase());
                        match (c, chars.next()) {
                            (Some(c), None) if allowed.contains(&c) => ArgValue::Flag(c),
                            _ => {
                                return Err(bad(format!(
                                    "illegal flag `{tok}`, expected one of {allowed:?}"
                                )))
                            }
                        }
                    }
                    ArgKind::Dim => {
                        let v: i64 = tok
                            .parse()
                            .map_err(|_| bad(format!("expected an integer, got `{tok}`")))?;
                        if v < 0 {
                            return Err(bad(format!("negative size {v}")));
                        }
                        ArgValue::Int(v)
                    }
                    ArgKind::Ld { .. } => {
                        let v: i64 = tok
                            .parse()
                            .map_err(|_| bad(format!("expected an integer, got `{tok}`")))?;
                        if v < 1 {
                            return Err(bad(format!("leading dimension {v} must be positive")));
                        }
                        ArgValue::Int(v)
                    }
                    ArgKind::Scalar => ArgValue::Real(
                        tok.parse()
                            .map_err(|_| bad(format!("expected a number, got `{tok}`")))?,
                    ),
                    ArgKind::Data(_) => ArgValue::Data(tok.to_string()),
                    ArgKind::Path => ArgValue::Path(tok.to_string()),
                })
            })
            .collect()
    }

    /// Flag and dim bindings carried by a list of argument values.
    pub fn bindings<D>(&self, args: &[ArgValue<D>]) -> KernelBindings {
        let mut b = KernelBindings::new();
        for (spec, v) in self.args.iter().zip(args) {
            match (&spec.kind, v) {
                (ArgKind::Flag { .. }, ArgValue::Flag(c)) => b.set_flag(spec.name, *c),
                (ArgKind::Dim, ArgValue::Int(i)) => b.set_dim(spec.name, *i),
                _ => {}
            }
        }
        b
    }
}

/// Useful floating-point operations of a call.
///
/// | kernel            | flops                                             |
/// |-------------------|---------------------------------------------------|
/// | gemm              | `2 m n k`                                         |
/// | gemv              | `2 m n`                                           |
/// | axpy              | `2 n`                                             |
/// | trsv              | `n^2`                                             |
/// | trsm, trmm        | `m^2 n` (side L), `m n^2` (side R)                |
/// | syrk              | `n (n + 1) k`                                     |
/// | getrf (m x n)     | `sum_{i < min(m,n)} (m-i-1)(2(n-i-1) + 1)`; square: `(4n^3 - 3n^2 - n) / 6` |
/// | gesv              | `getrf(n, n) + 2 n^2 nrhs`                        |
/// | trti2, trtri      | `(n^3 + 2n) / 3`                                  |
/// | potrf             | `n (n + 1) (2n + 1) / 6`                          |
/// | utility kernels   | 0                                                 |
///
/// Scaling by `alpha`/`beta` is not counted; triangular counts assume a
/// non-unit diagonal.
pub fn flop_count(sig: &Signature, b: &KernelBindings) -> Result<u64, KernelError> {
    sig.check_bindings(b)?;
    (sig.flop_fn)(b)
}

pub(crate) fn getrf_flops(m: u64, n: u64) -> u64 {
    (0..m.min(n))
        .map(|i| (m - i - 1) * (2 * (n - i - 1) + 1))
        .sum()
}

pub(crate) fn trti2_flops(n: u64) -> u64 {
    (n * n * n + 2 * n) / 3
}

pub(crate) fn potrf_flops(n: u64) -> u64 {
    n * (n + 1) * (2 * n + 1) / 6
}
