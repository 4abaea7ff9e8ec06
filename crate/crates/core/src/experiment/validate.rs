use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::Serialize;

use crate::expr::Expr;
use crate::kernels::{ArgKind, ArgValue};

use super::{plan_memory, CallArg, Experiment, Point, Threads, VaryWith, REP};

/// Above this many points, only the extremes of a range are checked.
const EXHAUSTIVE_POINTS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub message: String,
    /// 1-based call index.
    pub call: Option<usize>,
    pub kernel: Option<String>,
    pub argument: Option<String>,
    /// Variable bindings of the offending point.
    pub point: Vec<(String, i64)>,
}

impl Diagnostic {
    fn new(message: impl Into<String>) -> Self {
        Diagnostic {
            message: message.into(),
            call: None,
            kernel: None,
            argument: None,
            point: Vec::new(),
        }
    }

    fn at_call(mut self, index: usize, kernel: &str) -> Self {
        self.call = Some(index + 1);
        self.kernel = Some(kernel.to_string());
        self
    }

    fn arg(mut self, name: &str) -> Self {
        self.argument = Some(name.to_string());
        self
    }

    fn point(mut self, exp: &Experiment, p: Point) -> Self {
        if let (Some(r), Some(v)) = (&exp.range, p.range) {
            self.point.push((r.var.clone(), v));
        }
        if let (Some((r, _)), Some(v)) = (exp.inner(), p.inner) {
            self.point.push((r.var.clone(), v));
        }
        self
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let (Some(i), Some(k)) = (self.call, &self.kernel) {
            parts.push(format!("call {i} ({k})"));
        }
        if let Some(a) = &self.argument {
            parts.push(format!("argument {a}"));
        }
        if !self.point.is_empty() {
            let p: Vec<String> = self.point.iter().map(|(k, v)| format!("{k}={v}")).collect();
            parts.push(format!("at {}", p.join(" ")));
        }
        if parts.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", parts.join(", "), self.message)
        }
    }
}

/// Every problem that would keep the experiment from unrolling or running;
/// empty when valid.
pub fn validate(exp: &Experiment) -> Vec<Diagnostic> {
    let mut out = structure(exp);
    if out.is_empty() {
        points(exp, &mut out);
    }
    out
}

fn unbound(e: &Expr, allowed: &BTreeSet<&str>) -> Vec<String> {
    e.free_vars()
        .into_iter()
        .filter(|v| !allowed.contains(v.as_str()))
        .collect()
}

fn structure(exp: &Experiment) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if exp.backend != "reference" {
        out.push(Diagnostic::new(format!(
            "unknown backend `{}`; available: reference",
            exp.backend
        )));
    }
    if exp.nreps == 0 {
        out.push(Diagnostic::new("nreps must be positive"));
    }
    if exp.calls.is_empty() {
        out.push(Diagnostic::new("the experiment has no calls"));
    }
    if exp.sumrange.is_some() && exp.parrange.is_some() {
        out.push(Diagnostic::new(
            "one inner range: sumrange and parrange cannot be combined",
        ));
    }
    let params: BTreeSet<&str> = exp.params.iter().map(|(n, _)| n.as_str()).collect();
    let range_var = exp.range.as_ref().map(|r| r.var.as_str());
    let inner_var = exp.inner().map(|(r, _)| r.var.as_str());
    for v in [range_var, inner_var].into_iter().flatten() {
        if v == REP {
            out.push(Diagnostic::new(format!(
                "`{REP}` cannot name a range variable"
            )));
        }
        if params.contains(v) {
            out.push(Diagnostic::new(format!(
                "`{v}` is both a parameter and a range variable"
            )));
        }
    }
    if range_var.is_some() && range_var == inner_var {
        out.push(Diagnostic::new(
            "the range and the inner range use the same variable",
        ));
    }
    match &exp.nthreads {
        Threads::Fixed(0) => out.push(Diagnostic::new("nthreads must be at least 1")),
        Threads::Fixed(_) => {}
        Threads::Range(v) if Some(v.as_str()) != range_var => out.push(Diagnostic::new(format!(
            "nthreads `{v}` is not the range variable"
        ))),
        Threads::Range(_) => {}
    }

    let mut allowed = params.clone();
    if let Some(r) = &exp.range {
        for e in [&r.start, &r.step, &r.stop] {
            for v in unbound(e, &allowed) {
                out.push(
                    Diagnostic::new(format!("range bound uses unknown variable `{v}`"))
                        .arg("range"),
                );
            }
        }
        allowed.insert(&r.var);
    }
    for v in exp.vary.iter().flat_map(|v| unbound(&v.pad, &allowed)) {
        out.push(Diagnostic::new(format!("pad uses unknown variable `{v}`")).arg("vary"));
    }
    if let Some((r, _)) = exp.inner() {
        for e in [&r.start, &r.step, &r.stop] {
            for v in unbound(e, &allowed) {
                out.push(
                    Diagnostic::new(format!("inner range bound uses unknown variable `{v}`"))
                        .arg("inner range"),
                );
            }
        }
        allowed.insert(&r.var);
    }

    let mut operands: Vec<(String, crate::kernels::Dtype)> = Vec::new();
    for (ci, call) in exp.calls.iter().enumerate() {
        let sig = call.signature();
        for (spec, a) in sig.args.iter().zip(&call.args) {
            if let CallArg::Int(e) = a {
                for v in unbound(e, &allowed) {
                    out.push(
                        Diagnostic::new(format!("unknown variable `{v}`"))
                            .at_call(ci, &call.kernel)
                            .arg(spec.name),
                    );
                }
            }
        }
        for (arg, name) in call.operands() {
            match operands.iter().find(|(n, _)| n == name) {
                Some((_, d)) if *d != sig.dtype => out.push(
                    Diagnostic::new(format!(
                        "operand `{name}` holds {d} data, but {} expects {}",
                        call.kernel, sig.dtype
                    ))
                    .at_call(ci, &call.kernel)
                    .arg(arg),
                ),
                Some(_) => {}
                None => operands.push((name.to_string(), sig.dtype)),
            }
        }
        let data: Vec<(&str, &str, bool)> = sig
            .args
            .iter()
            .zip(&call.args)
            .filter_map(|(spec, a)| match (&spec.kind, a) {
                (ArgKind::Data(d), CallArg::Data(n)) => Some((spec.name, n.as_str(), d.writes)),
                _ => None,
            })
            .collect();
        for (i, &(arg, name, writes)) in data.iter().enumerate() {
            if writes
                && data
                    .iter()
                    .enumerate()
                    .any(|(j, &(_, other, _))| j != i && other == name)
            {
                out.push(
                    Diagnostic::new(format!(
                        "operand `{name}` is written and also passed as another argument"
                    ))
                    .at_call(ci, &call.kernel)
                    .arg(arg),
                );
            }
        }
    }

    let mut varied = HashSet::new();
    for v in &exp.vary {
        if !operands.iter().any(|(n, _)| *n == v.operand) {
            out.push(
                Diagnostic::new(format!("vary names `{}`, which no call uses", v.operand))
                    .arg("vary"),
            );
        }
        if !varied.insert(v.operand.as_str()) {
            out.push(
                Diagnostic::new(format!("`{}` is varied more than once", v.operand)).arg("vary"),
            );
        }
        if v.with.is_empty() {
            out.push(
                Diagnostic::new(format!("vary `{}` has no dimensions", v.operand)).arg("vary"),
            );
        }
        for (i, w) in v.with.iter().enumerate() {
            if v.with[..i].contains(w) {
                out.push(
                    Diagnostic::new(format!("vary `{}` lists `{w}` twice", v.operand)).arg("vary"),
                );
            }
            if let VaryWith::Var(name) = w {
                if Some(name.as_str()) != inner_var {
                    out.push(
                        Diagnostic::new(format!(
                            "vary `{}` with `{name}`: only `{REP}` and the inner range variable are allowed",
                            v.operand
                        ))
                        .arg("vary"),
                    );
                }
            }
        }
    }

    if let (true, Some(var)) = (exp.is_parallel(), inner_var) {
        let with_inner = |name: &str| {
            exp.vary_of(name).is_some_and(|v| {
                v.with
                    .iter()
                    .any(|w| matches!(w, VaryWith::Var(x) if x == var))
            })
        };
        let uses = |name: &str| {
            exp.calls
                .iter()
                .flat_map(|c| c.operands())
                .filter(|(_, n)| *n == name)
                .count()
        };
        for (ci, call) in exp.calls.iter().enumerate() {
            let sig = call.signature();
            for (spec, a) in sig.args.iter().zip(&call.args) {
                let (ArgKind::Data(d), CallArg::Data(name)) = (&spec.kind, a) else {
                    continue;
                };
                if !d.writes {
                    continue;
                }
                if !with_inner(name) {
                    out.push(
                        Diagnostic::new(format!(
                            "operand `{name}` is written inside the parallel range and must vary with `{var}`"
                        ))
                        .at_call(ci, &call.kernel)
                        .arg(spec.name),
                    );
                } else if uses(name) > 1 {
                    out.push(
                        Diagnostic::new(format!(
                            "operand `{name}` is written inside the parallel range and used by another argument"
                        ))
                        .at_call(ci, &call.kernel)
                        .arg(spec.name),
                    );
                }
            }
        }
    }
    out
}

/// First and last element when there are too many to check each.
fn sample<T: Copy>(values: &[T]) -> Vec<T> {
    if values.len() <= EXHAUSTIVE_POINTS {
        values.to_vec()
    } else {
        vec![values[0], values[values.len() - 1]]
    }
}

fn points(exp: &Experiment, out: &mut Vec<Diagnostic>) {
    let rvs = match exp.range_values() {
        Ok(v) => v,
        Err(e) => {
            out.push(Diagnostic::new(e.to_string()).arg("range"));
            return;
        }
    };
    if let Threads::Range(_) = exp.nthreads {
        if let Some(bad) = rvs
            .iter()
            .flatten()
            .find(|&&v| v < 1 || v > u32::MAX as i64)
        {
            out.push(Diagnostic::new(format!("{bad} is not a valid thread count")).arg("nthreads"));
        }
    }
    let mut reported: HashSet<(usize, String)> = HashSet::new();
    for rv in sample(&rvs) {
        let at_range = Point {
            range: rv,
            inner: None,
        };
        let inner = match exp.inner_points(rv) {
            Ok(v) => v,
            Err(e) => {
                out.push(
                    Diagnostic::new(e.to_string())
                        .arg("inner range")
                        .point(exp, at_range),
                );
                continue;
            }
        };
        let mut failed = false;
        for iv in sample(&inner) {
            let p = Point {
                range: rv,
                inner: iv,
            };
            for ci in 0..exp.calls.len() {
                for d in check_call(exp, ci, p) {
                    let key = (ci, d.argument.clone().unwrap_or_default());
                    failed = true;
                    if reported.insert(key) {
                        out.push(d);
                    }
                }
            }
        }
        if !failed {
            if let Err(e) = plan_memory(exp, rv) {
                out.push(
                    Diagnostic::new(e.to_string())
                        .arg("memory")
                        .point(exp, at_range),
                );
            }
        }
    }
}

fn check_call(exp: &Experiment, ci: usize, p: Point) -> Vec<Diagnostic> {
    let call = &exp.calls[ci];
    let sig = call.signature();
    let diag = |msg: String, arg: &str| {
        Diagnostic::new(msg)
            .at_call(ci, &call.kernel)
            .arg(arg)
            .point(exp, p)
    };
    let args = match call.evaluate(&exp.lookup(p)) {
        Ok(a) => a,
        Err((i, e)) => return vec![diag(e.to_string(), sig.args[i].name)],
    };
    let mut out = Vec::new();
    for (spec, a) in sig.args.iter().zip(&args) {
        match (&spec.kind, a) {
            (ArgKind::Dim, ArgValue::Int(v)) if *v < 0 => {
                out.push(diag(format!("size {v} is negative"), spec.name))
            }
            (ArgKind::Ld { .. }, ArgValue::Int(v)) if *v < 1 => out.push(diag(
                format!("leading dimension {v} must be positive"),
                spec.name,
            )),
            _ => {}
        }
    }
    if !out.is_empty() {
        return out;
    }
    let b = sig.bindings(&args);
    let shapes = match sig.derive_shapes(&b) {
        Ok(s) => s,
        Err(e) => return vec![diag(e.to_string(), call.kernel.as_str())],
    };
    for ((_, spec, data), shape) in sig.data_args().zip(shapes) {
        let Some(ld_name) = data.ld else { continue };
        let ArgValue::Data(name) = &args[sig.arg_index(spec.name).expect("data argument exists")]
        else {
            continue;
        };
        if exp.vary_of(name).is_some() {
            continue;
        }
        let ArgValue::Int(ld) = args[sig.arg_index(ld_name).expect("ld argument exists")] else {
            continue;
        };
        if (ld as usize) < shape.min_ld {
            out.push(diag(
                format!(
                    "leading dimension {ld} is below the {} rows of `{name}`",
                    shape.min_ld
                ),
                ld_name,
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{deserialize, HEADER};

    fn diags(body: &str) -> Vec<Diagnostic> {
        validate(&deserialize(&format!("{HEADER}\n{body}")).unwrap())
    }

    #[test]
    fn solver_sweep_is_valid() {
        assert_eq!(
            diags("range: n 50:50:2000\nnreps: 10\ncall: dgesv n 500 A n B n\n"),
            vec![]
        );
    }

    #[test]
    fn low_ld_names_call_argument_and_point() {
        let d = diags("range: n 1000:500:2000\ncall: dgemm N N n n n 1 A 1500 B n 0 C n\n");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].call, Some(1));
        assert_eq!(d[0].argument.as_deref(), Some("ldA"));
        assert_eq!(d[0].point, vec![("n".to_string(), 2000)]);
        let text = d[0].to_string();
        assert!(
            text.contains("call 1 (dgemm)") && text.contains("ldA") && text.contains("n=2000"),
            "{text}"
        );
    }

    #[test]
    fn both_inner_ranges() {
        let d = diags("sumrange: j 1:1:2\nparrange: i 1:1:2\ncall: daxpy 5 1 x 1 y 1\n");
        assert!(d.iter().any(|d| d.message.contains("one inner range")));
    }

    #[test]
    fn structural_problems() {
        for (body, needle) in [
            ("nreps: 0\ncall: daxpy 5 1 x 1 y 1\n", "nreps"),
            ("backend: blis\ncall: daxpy 5 1 x 1 y 1\n", "backend"),
            ("nreps: 1\n", "no calls"),
            ("nthreads: t\ncall: daxpy 5 1 x 1 y 1\n", "range variable"),
            ("nthreads: 0\ncall: daxpy 5 1 x 1 y 1\n", "at least 1"),
            ("nthreads: t\nrange: t 0:1:2\ncall: daxpy 5 1 x 1 y 1\n", "thread count"),
            ("call: daxpy m 1 x 1 y 1\n", "unknown variable `m`"),
            ("call: daxpy 5 1 x 1 y 1\nvary: z with rep along 1 pad 0\n", "no call uses"),
            ("call: daxpy 5 1 x 1 y 1\nvary: y with j along 1 pad 0\n", "inner range variable"),
            ("call: daxpy 5 1 y 1 y 1\n", "written"),
            ("call: daxpy 5 1 x 1 y 1\ncall: sgemm N N 1 1 1 1 y 1 b 1 0 c 1\n", "double"),
            ("parrange: i 1:1:4\ncall: daxpy 5 1 x 1 y 1\n", "must vary"),
            ("range: n 1:1:3\ncall: daxpy n-2 1 x 1 y 1\n", "negative"),
            ("call: daxpy 5 1 x 0 y 1\n", "positive"),
            ("param: n 7\ncall: daxpy n/2 1 x 1 y 1\n", "inexact"),
            ("range: n 5:1:3\ncall: daxpy n 1 x 1 y 1\n", "below start"),
            ("nreps: 5\ncall: dgemm N N 2000 2000 2000 1 A 2000 B 2000 1 C 2000\nvary: C with rep along 1 pad 300000000\n", "cap"),
        ] {
            let d = diags(body);
            assert!(d.iter().any(|d| d.to_string().contains(needle)), "{body}: {d:?}");
        }
    }

    #[test]
    fn varying_operands_skip_ld_checks() {
        let d = diags("nreps: 4\ncall: dgemm N N 50 50 50 1 A 1 B 50 1 C 50\nvary: A with rep along 0 pad 0\n");
        assert_eq!(d, vec![]);
    }

    #[test]
    fn parallel_writes_vary() {
        let ok = "nreps: 10\nparrange: i 1:1:8\ncall: dtrsv L N N 2000 A 2000 b 1\nvary: b with i along 1 pad 0\n";
        assert_eq!(diags(ok), vec![]);
    }
}
