use crate::kernels::{ArgKind, ArgValue};
use crate::sampler::Command;

use super::{plan_memory, validate, Experiment, ExperimentError, MemoryPlan, Point, Threads};

/// Commands for one sampler run.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub nthreads: u32,
    pub commands: Vec<Command>,
}

impl Stream {
    pub fn text(&self) -> String {
        let mut s = String::new();
        for c in &self.commands {
            s.push_str(&c.to_string());
            s.push('\n');
        }
        s
    }

    /// Number of kernel call lines, setup calls included.
    pub fn call_lines(&self) -> usize {
        self.commands
            .iter()
            .filter(|c| matches!(c, Command::Call { .. }))
            .count()
    }

    /// Number of result lines the sampler will print.
    pub fn result_lines(&self) -> usize {
        let mut depth = 0;
        let mut n = 0;
        for c in &self.commands {
            match c {
                Command::ParBegin => {
                    depth += 1;
                    n += 1;
                }
                Command::ParEnd => depth -= 1,
                Command::Call { .. } if depth == 0 => n += 1,
                _ => {}
            }
        }
        n
    }
}

/// Expands every range, repetition, and inner value into explicit sampler
/// commands: one stream per thread count.
pub fn unroll(exp: &Experiment) -> Result<Vec<Stream>, ExperimentError> {
    let diags = validate(exp);
    if !diags.is_empty() {
        return Err(ExperimentError::Invalid(diags));
    }
    let rvs = exp.range_values()?;
    let plans: Vec<MemoryPlan> = rvs
        .iter()
        .map(|&rv| plan_memory(exp, rv))
        .collect::<Result<_, _>>()?;
    let groups: Vec<Vec<usize>> = match exp.nthreads {
        Threads::Fixed(_) => vec![(0..rvs.len()).collect()],
        Threads::Range(_) => (0..rvs.len()).map(|i| vec![i]).collect(),
    };
    groups
        .into_iter()
        .map(|idx| {
            let mut commands = Vec::new();
            if !exp.counters.is_empty() {
                commands.push(Command::SetCounters(exp.counters.clone()));
            }
            for (name, dtype) in exp.operands() {
                let nelems = idx
                    .iter()
                    .map(|&i| plans[i].get(&name).map_or(0, |o| o.total))
                    .max()
                    .unwrap_or(0);
                commands.push(Command::Malloc {
                    dtype,
                    name,
                    nelems,
                });
            }
            for &i in &idx {
                emit_group(exp, rvs[i], &plans[i], &mut commands)?;
            }
            Ok(Stream {
                nthreads: exp.threads_at(rvs[idx[0]]),
                commands,
            })
        })
        .collect()
}

fn emit_group(
    exp: &Experiment,
    rv: Option<i64>,
    plan: &MemoryPlan,
    out: &mut Vec<Command>,
) -> Result<(), ExperimentError> {
    for o in plan.operands.iter().filter(|o| o.spd) {
        for i in 0..o.count {
            let offset = o.instance_offset(i);
            out.push(Command::Call {
                name: "dporand".into(),
                tokens: vec![
                    o.rows.to_string(),
                    format!("{}+{offset}", o.name),
                    o.ld.to_string(),
                ],
            });
        }
    }
    let inner = exp.inner_points(rv)?;
    let parallel = exp.is_parallel();
    let nreps = exp.nreps as usize;
    for rep in 0..nreps {
        if parallel {
            out.push(Command::ParBegin);
        }
        for (ii, &iv) in inner.iter().enumerate() {
            let point = Point {
                range: rv,
                inner: iv,
            };
            for (ci, call) in exp.calls.iter().enumerate() {
                let sig = call.signature();
                let mut args = call.evaluate(&exp.lookup(point)).map_err(|(i, source)| {
                    ExperimentError::Expr {
                        context: format!(
                            "call {} (`{}`), argument `{}`",
                            ci + 1,
                            call.kernel,
                            sig.args[i].name
                        ),
                        source,
                    }
                })?;
                let mut tokens: Vec<String> = args.iter().map(ToString::to_string).collect();
                for (i, spec) in sig.args.iter().enumerate() {
                    let (ArgKind::Data(d), ArgValue::Data(name)) = (&spec.kind, &mut args[i])
                    else {
                        continue;
                    };
                    let o = plan.get(name).expect("every operand is planned");
                    if !o.is_varying() {
                        continue;
                    }
                    let offset = o.instance_offset(o.instance_index(nreps, rep, ii, inner.len()));
                    tokens[i] = format!("{name}+{offset}");
                    if let Some(l) = d.ld.and_then(|l| sig.arg_index(l)) {
                        tokens[l] = o.ld.to_string();
                    }
                }
                out.push(Command::Call {
                    name: call.kernel.clone(),
                    tokens,
                });
            }
        }
        if parallel {
            out.push(Command::ParEnd);
        }
    }
    out.push(Command::Go);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{deserialize, HEADER};

    fn exp(body: &str) -> Experiment {
        deserialize(&format!("{HEADER}\n{body}")).unwrap()
    }

    #[test]
    fn solver_sweep_counts() {
        let e = exp("range: n 50:50:2000\nnreps: 10\ncall: dgesv n 500 A n B n\n");
        let s = unroll(&e).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].call_lines(), 400);
        assert_eq!(
            s[0].commands.iter().filter(|c| **c == Command::Go).count(),
            40
        );
        assert_eq!(
            s[0].commands[0],
            Command::Malloc {
                dtype: crate::kernels::Dtype::Double,
                name: "A".into(),
                nelems: 4_000_000
            }
        );
    }

    #[test]
    fn parallel_blocks() {
        let e = exp("nreps: 10\nparrange: i 1:1:8\ncall: dtrsv L N N 2000 A 2000 b 1\nvary: b with i along 1 pad 0\n");
        let s = unroll(&e).unwrap();
        assert_eq!(s[0].result_lines(), 10);
        assert_eq!(s[0].call_lines(), 80);
        let text = s[0].text();
        assert!(text.contains("dtrsv L N N 2000 A 2000 b+14000 1"));
        assert_eq!(text.matches("{omp").count(), 10);
    }

    #[test]
    fn one_stream_per_thread_count() {
        let e = exp(
            "nthreads: t\nrange: t 1:1:4\nnreps: 2\ncall: dgemm N N 50 50 50 1 A 50 B 50 1 C 50\n",
        );
        let s = unroll(&e).unwrap();
        assert_eq!(
            s.iter().map(|s| s.nthreads).collect::<Vec<_>>(),
            vec![1, 2, 3, 4]
        );
        assert!(s.iter().all(|s| s.result_lines() == 2));
    }

    #[test]
    fn spd_operands_are_initialized() {
        let e = exp("nreps: 3\ncall: dpotrf L 40 A 40\nvary: A with rep along 1 pad 0\n");
        let s = unroll(&e).unwrap();
        let text = s[0].text();
        assert!(text.contains("dporand 40 A+1600 40\n"));
        assert_eq!(s[0].result_lines(), 6);
        assert_eq!(e.segments().unwrap()[0].expected_lines(&e), 6);
    }

    #[test]
    fn invalid_experiments_do_not_unroll() {
        let e = exp("call: dgemm N N 10 10 10 1 A 5 B 10 1 C 10\n");
        assert!(matches!(unroll(&e), Err(ExperimentError::Invalid(_))));
    }
}
