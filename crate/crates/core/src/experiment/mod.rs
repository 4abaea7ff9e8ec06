//! Declarative experiments: what to call, how often, over which ranges, and
//! where operands live. An experiment is validated, planned, and unrolled
//! into one sampler command stream per thread count.

mod plan;
mod submit;
mod text;
mod unroll;
mod validate;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::kernels::{
    flop_count, lookup_signature, ArgKind, ArgValue, Dtype, KernelBindings, KernelError, Signature,
    Structure,
};

pub use plan::{plan_memory, Layout, MemoryPlan, OperandPlan, ALLOCATION_CAP};
pub use submit::{
    collect, run_local, submit, Backend, BatchJob, JobHandle, LocalOptions, DEFAULT_BATCH_TEMPLATE,
};
pub use text::{deserialize, serialize, HEADER};
pub use unroll::{unroll, Stream};
pub use validate::{validate, Diagnostic};

/// Name of the repetition axis in `vary ... with`.
pub const REP: &str = "rep";

/// Longest range the engine accepts.
pub const MAX_RANGE_LEN: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("line {line}, field `{field}`: {msg}")]
    Parse {
        line: usize,
        field: String,
        msg: String,
    },
    #[error("{context}: {source}")]
    Expr { context: String, source: ExprError },
    #[error("{context}: {source}")]
    Kernel {
        context: String,
        source: KernelError,
    },
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
    #[error("operand `{operand}`: {msg}")]
    Plan { operand: String, msg: String },
    #[error("sampler executable `{}` not found", .0.display())]
    SamplerMissing(PathBuf),
    #[error("sampler exited with {status}: {stderr}")]
    SamplerFailed { status: String, stderr: String },
    #[error("{0}")]
    Io(String),
}

/// `var start:step:stop`, inclusive of `stop` when reached.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeSpec {
    pub var: String,
    pub start: Expr,
    pub step: Expr,
    pub stop: Expr,
}

impl RangeSpec {
    pub fn new(
        var: impl Into<String>,
        start: impl Into<Expr>,
        step: impl Into<Expr>,
        stop: impl Into<Expr>,
    ) -> Self {
        RangeSpec {
            var: var.into(),
            start: start.into(),
            step: step.into(),
            stop: stop.into(),
        }
    }

    pub fn values(
        &self,
        lookup: &dyn Fn(&str) -> Option<i64>,
    ) -> Result<Vec<i64>, ExperimentError> {
        let ev = |e: &Expr, what: &str| {
            e.eval_with(lookup).map_err(|source| ExperimentError::Expr {
                context: format!("range `{}` {what}", self.var),
                source,
            })
        };
        let (start, step, stop) = (
            ev(&self.start, "start")?,
            ev(&self.step, "step")?,
            ev(&self.stop, "stop")?,
        );
        let bad = |msg: String| ExperimentError::Expr {
            context: format!("range `{}`", self.var),
            source: ExprError::Syntax { pos: 0, msg },
        };
        if step <= 0 {
            return Err(bad(format!("step {step} must be positive")));
        }
        if stop < start {
            return Err(bad(format!("stop {stop} is below start {start}")));
        }
        let len = ((stop - start) / step) as u64 + 1;
        if len > MAX_RANGE_LEN as u64 {
            return Err(bad(format!(
                "{len} values exceed the limit of {MAX_RANGE_LEN}"
            )));
        }
        Ok((0..len as i64).map(|i| start + i * step).collect())
    }
}

impl fmt::Display for RangeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}:{}:{}", self.var, self.start, self.step, self.stop)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Threads {
    Fixed(u32),
    /// Follows the range variable of this name.
    Range(String),
}

impl fmt::Display for Threads {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threads::Fixed(n) => write!(f, "{n}"),
            Threads::Range(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerKind {
    Sum,
    Parallel,
}

/// Stacking direction of operand instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Along {
    /// Instances on top of each other, sharing one leading dimension.
    Vertical,
    /// Instances side by side in memory.
    Horizontal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VaryWith {
    Rep,
    Var(String),
}

impl fmt::Display for VaryWith {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VaryWith::Rep => f.write_str(REP),
            VaryWith::Var(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarySpec {
    pub operand: String,
    pub with: Vec<VaryWith>,
    pub along: Along,
    pub pad: Expr,
}

impl fmt::Display for VarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let with: Vec<String> = self.with.iter().map(ToString::to_string).collect();
        let along = match self.along {
            Along::Vertical => 0,
            Along::Horizontal => 1,
        };
        write!(
            f,
            "{} with {} along {along} pad {}",
            self.operand,
            with.join(","),
            self.pad
        )
    }
}

/// One symbolic argument of a call.
#[derive(Debug, Clone, PartialEq)]
pub enum CallArg {
    Flag(char),
    /// Dim or leading-dimension expression.
    Int(Expr),
    Real(f64),
    Data(String),
    Path(String),
}

impl fmt::Display for CallArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CallArg::Flag(c) => write!(f, "{c}"),
            CallArg::Int(e) => write!(f, "{e}"),
            CallArg::Real(r) => write!(f, "{r}"),
            CallArg::Data(d) | CallArg::Path(d) => f.write_str(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallSpec {
    pub kernel: String,
    pub args: Vec<CallArg>,
}

impl CallSpec {
    /// Parses `kernel tok...` against the kernel's signature.
    pub fn parse(tokens: &[&str]) -> Result<Self, String> {
        let (name, rest) = tokens.split_first().ok_or("empty call")?;
        let sig = lookup_signature(name).map_err(|e| e.to_string())?;
        if rest.len() != sig.args.len() {
            return Err(format!(
                "`{name}` takes {} arguments, got {}",
                sig.args.len(),
                rest.len()
            ));
        }
        let args = sig
            .args
            .iter()
            .zip(rest)
            .map(|(spec, tok)| {
                let bad = |msg: String| format!("argument `{}`: {msg}", spec.name);
                Ok(match &spec.kind {
                    ArgKind::Flag { allowed } => {
                        let mut chars = tok.chars();
                        match (chars.next().map(|c| c.to_ascii_uppercase()), chars.next()) {
                            (Some(c), None) if allowed.contains(&c) => CallArg::Flag(c),
                            _ => {
                                return Err(bad(format!(
                                    "illegal flag `{tok}`, expected one of {allowed:?}"
                                )))
                            }
                        }
                    }
                    ArgKind::Dim | ArgKind::Ld { .. } => {
                        CallArg::Int(Expr::parse(tok).map_err(|e| bad(e.to_string()))?)
                    }
                    ArgKind::Scalar => CallArg::Real(
                        tok.parse()
                            .map_err(|_| bad(format!("`{tok}` is not a number")))?,
                    ),
                    ArgKind::Data(_) => {
                        if !is_identifier(tok) {
                            return Err(bad(format!("`{tok}` is not an operand name")));
                        }
                        CallArg::Data(tok.to_string())
                    }
                    ArgKind::Path => CallArg::Path(tok.to_string()),
                })
            })
            .collect::<Result<_, String>>()?;
        Ok(CallSpec {
            kernel: name.to_string(),
            args,
        })
    }

    pub fn signature(&self) -> &'static Signature {
        lookup_signature(&self.kernel).expect("calls are built from registered kernels")
    }

    /// Evaluates the call at one point of the iteration space. Data
    /// arguments keep their operand names.
    pub fn evaluate(
        &self,
        lookup: &dyn Fn(&str) -> Option<i64>,
    ) -> Result<Vec<ArgValue<String>>, (usize, ExprError)> {
        self.args
            .iter()
            .enumerate()
            .map(|(i, a)| {
                Ok(match a {
                    CallArg::Flag(c) => ArgValue::Flag(*c),
                    CallArg::Int(e) => ArgValue::Int(e.eval_with(lookup).map_err(|err| (i, err))?),
                    CallArg::Real(r) => ArgValue::Real(*r),
                    CallArg::Data(d) => ArgValue::Data(d.clone()),
                    CallArg::Path(p) => ArgValue::Path(p.clone()),
                })
            })
            .collect()
    }

    /// Operand names in argument order.
    pub fn operands(&self) -> impl Iterator<Item = (&'static str, &str)> + '_ {
        self.signature()
            .args
            .iter()
            .zip(&self.args)
            .filter_map(|(spec, a)| match a {
                CallArg::Data(d) => Some((spec.name, d.as_str())),
                _ => None,
            })
    }
}

impl fmt::Display for CallSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.kernel)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        Ok(())
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    /// Kernel backend the sampler uses.
    pub backend: String,
    /// Machine description file or name.
    pub machine: Option<String>,
    pub nthreads: Threads,
    pub range: Option<RangeSpec>,
    pub nreps: u32,
    pub sumrange: Option<RangeSpec>,
    pub parrange: Option<RangeSpec>,
    pub counters: Vec<String>,
    pub params: Vec<(String, i64)>,
    pub seed: u64,
    pub calls: Vec<CallSpec>,
    pub vary: Vec<VarySpec>,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            backend: "reference".into(),
            machine: None,
            nthreads: Threads::Fixed(1),
            range: None,
            nreps: 1,
            sumrange: None,
            parrange: None,
            counters: Vec::new(),
            params: Vec::new(),
            seed: 0,
            calls: Vec::new(),
            vary: Vec::new(),
        }
    }
}

/// A point of the iteration space, without the repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Point {
    pub range: Option<i64>,
    pub inner: Option<i64>,
}

/// Expected layout of one range value's results in a stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub range_value: Option<i64>,
    /// Setup lines (operand initialization) preceding the measurements.
    pub setup: usize,
    pub inner_values: Vec<i64>,
}

/// Expected layout of one sampler run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub nthreads: u32,
    pub groups: Vec<Group>,
}

impl Experiment {
    /// Parses a call from its textual tokens and appends it.
    pub fn push_call(&mut self, line: &str) -> Result<(), String> {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        self.calls.push(CallSpec::parse(&tokens)?);
        Ok(())
    }

    pub fn param(&self, name: &str) -> Option<i64> {
        self.params.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    /// The inner range, if exactly one is given.
    pub fn inner(&self) -> Option<(&RangeSpec, InnerKind)> {
        match (&self.sumrange, &self.parrange) {
            (Some(r), None) => Some((r, InnerKind::Sum)),
            (None, Some(r)) => Some((r, InnerKind::Parallel)),
            _ => None,
        }
    }

    pub fn is_parallel(&self) -> bool {
        matches!(self.inner(), Some((_, InnerKind::Parallel)))
    }

    pub fn lookup(&self, point: Point) -> impl Fn(&str) -> Option<i64> + '_ {
        move |name: &str| {
            if let (Some(r), Some(v)) = (&self.range, point.range) {
                if r.var == name {
                    return Some(v);
                }
            }
            if let (Some((r, _)), Some(v)) = (self.inner(), point.inner) {
                if r.var == name {
                    return Some(v);
                }
            }
            self.param(name)
        }
    }

    /// Range values, or `[None]` without a range.
    pub fn range_values(&self) -> Result<Vec<Option<i64>>, ExperimentError> {
        match &self.range {
            Some(r) => Ok(r
                .values(&|n| self.param(n))?
                .into_iter()
                .map(Some)
                .collect()),
            None => Ok(vec![None]),
        }
    }

    /// Inner-range values at a range value; empty without an inner range.
    pub fn inner_values(&self, range_value: Option<i64>) -> Result<Vec<i64>, ExperimentError> {
        match self.inner() {
            Some((r, _)) => r.values(&self.lookup(Point {
                range: range_value,
                inner: None,
            })),
            None => Ok(Vec::new()),
        }
    }

    /// Points `(inner value)` visited per repetition; `[None]` without an
    /// inner range.
    pub fn inner_points(
        &self,
        range_value: Option<i64>,
    ) -> Result<Vec<Option<i64>>, ExperimentError> {
        let v = self.inner_values(range_value)?;
        Ok(if self.inner().is_none() {
            vec![None]
        } else {
            v.into_iter().map(Some).collect()
        })
    }

    /// Thread count used at a range value.
    pub fn threads_at(&self, range_value: Option<i64>) -> u32 {
        match &self.nthreads {
            Threads::Fixed(n) => *n,
            Threads::Range(_) => range_value.map_or(1, |v| v.clamp(1, u32::MAX as i64) as u32),
        }
    }

    /// Every operand with its element type, in order of first use.
    pub fn operands(&self) -> Vec<(String, Dtype)> {
        let mut out: Vec<(String, Dtype)> = Vec::new();
        for c in &self.calls {
            let dtype = c.signature().dtype;
            for (_, name) in c.operands() {
                if !out.iter().any(|(n, _)| n == name) {
                    out.push((name.to_string(), dtype));
                }
            }
        }
        out
    }

    pub fn vary_of(&self, operand: &str) -> Option<&VarySpec> {
        self.vary.iter().find(|v| v.operand == operand)
    }

    /// Whether some call needs the operand symmetric positive definite.
    pub fn needs_spd(&self, operand: &str) -> bool {
        self.calls.iter().any(|c| {
            let sig = c.signature();
            sig.args
                .iter()
                .zip(&c.args)
                .any(|(spec, a)| match (&spec.kind, a) {
                    (ArgKind::Data(d), CallArg::Data(n)) => {
                        n == operand
                            && matches!(
                                d.structure,
                                crate::kernels::StructureRule::Fixed(Structure::SymmetricPd)
                            )
                    }
                    _ => false,
                })
        })
    }

    /// Flag and dim bindings of a call at a point.
    pub fn call_bindings(
        &self,
        call: usize,
        point: Point,
    ) -> Result<KernelBindings, ExperimentError> {
        let c = &self.calls[call];
        let args =
            c.evaluate(&self.lookup(point))
                .map_err(|(i, source)| ExperimentError::Expr {
                    context: format!(
                        "call {} (`{}`), argument `{}`",
                        call + 1,
                        c.kernel,
                        c.signature().args[i].name
                    ),
                    source,
                })?;
        Ok(c.signature().bindings(&args))
    }

    /// Useful flops of a call at a point.
    pub fn call_flops(&self, call: usize, point: Point) -> Result<u64, ExperimentError> {
        let b = self.call_bindings(call, point)?;
        let c = &self.calls[call];
        flop_count(c.signature(), &b).map_err(|source| ExperimentError::Kernel {
            context: format!("call {} (`{}`)", call + 1, c.kernel),
            source,
        })
    }

    /// Where each sampler run's result lines come from.
    pub fn segments(&self) -> Result<Vec<Segment>, ExperimentError> {
        let mut groups = Vec::new();
        for rv in self.range_values()? {
            let plan = plan_memory(self, rv)?;
            groups.push((
                self.threads_at(rv),
                Group {
                    range_value: rv,
                    setup: plan.setup_calls(),
                    inner_values: self.inner_values(rv)?,
                },
            ));
        }
        Ok(match self.nthreads {
            Threads::Fixed(n) => vec![Segment {
                nthreads: n,
                groups: groups.into_iter().map(|(_, g)| g).collect(),
            }],
            Threads::Range(_) => groups
                .into_iter()
                .map(|(n, g)| Segment {
                    nthreads: n,
                    groups: vec![g],
                })
                .collect(),
        })
    }

    /// Measurements per repetition: one per parallel block, else one per
    /// (inner value, call).
    pub fn units_per_rep(&self, inner_len: usize) -> usize {
        match self.inner() {
            Some((_, InnerKind::Parallel)) => 1,
            Some((_, InnerKind::Sum)) => inner_len * self.calls.len(),
            None => self.calls.len(),
        }
    }

    pub fn bindings_map(&self, point: Point) -> HashMap<String, i64> {
        let mut m: HashMap<String, i64> = self.params.iter().cloned().collect();
        if let (Some(r), Some(v)) = (&self.range, point.range) {
            m.insert(r.var.clone(), v);
        }
        if let (Some((r, _)), Some(v)) = (self.inner(), point.inner) {
            m.insert(r.var.clone(), v);
        }
        m
    }
}

impl Group {
    /// Result lines of the group's measurements.
    pub fn measured_lines(&self, exp: &Experiment) -> usize {
        exp.nreps as usize * exp.units_per_rep(self.inner_values.len())
    }
}

impl Segment {
    pub fn expected_lines(&self, exp: &Experiment) -> usize {
        self.groups
            .iter()
            .map(|g| g.setup + g.measured_lines(exp))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_values_inclusive() {
        let r = RangeSpec::new("n", 50, 50, 2000);
        let v = r.values(&|_| None).unwrap();
        assert_eq!(v.len(), 40);
        assert_eq!((v[0], v[39]), (50, 2000));
        let r = RangeSpec::new("n", 1, 3, 8);
        assert_eq!(r.values(&|_| None).unwrap(), vec![1, 4, 7]);
        assert!(RangeSpec::new("n", 1, 0, 8).values(&|_| None).is_err());
        assert!(RangeSpec::new("n", 9, 1, 8).values(&|_| None).is_err());
    }

    #[test]
    fn inner_range_follows_params() {
        let mut e = Experiment {
            params: vec![("nb".into(), 100)],
            ..Default::default()
        };
        e.sumrange = Some(RangeSpec {
            var: "j".into(),
            start: Expr::lit(0),
            step: Expr::var("nb"),
            stop: Expr::parse("1000-nb").unwrap(),
        });
        assert_eq!(
            e.inner_values(None).unwrap(),
            (0..10).map(|i| i * 100).collect::<Vec<_>>()
        );
    }

    #[test]
    fn call_parsing() {
        let c = CallSpec::parse(
            &"dgemm N t n n 2*n 1.0 A n B 2*n 0 C n"
                .split(' ')
                .collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(c.args[1], CallArg::Flag('T'));
        assert_eq!(c.to_string(), "dgemm N T n n 2*n 1 A n B 2*n 0 C n");
        assert!(CallSpec::parse(&["dgemm", "N"]).is_err());
        assert!(CallSpec::parse(&["nosuch"]).is_err());
        let bad: Vec<&str> = "daxpy n 1 x+1 1 y 1".split(' ').collect();
        assert!(CallSpec::parse(&bad).unwrap_err().contains("operand"));
    }
}
