//! The sampler: reads a command stream, manages named and dynamic memory,
//! and times kernel calls.
//!
//! Calls are buffered until `go`, then executed in order. Each sequential
//! call yields one [`ResultLine`]; a `{omp` ... `}` block runs its calls
//! concurrently and yields a single line timed from the block's start until
//! every member call has finished.

mod command;
mod counters;
mod memory;
mod timer;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::kernels::{
    lookup_signature, ArgValue, CallContext, KernelBackend, KernelError, RawRegion,
    ReferenceBackend, ResolvedCall,
};

pub use command::{parse_command, parse_stream, Command};
pub use counters::{CounterProvider, NullCounters};
pub use memory::{MemoryManager, ARENA_CAP_ELEMENTS};
pub use timer::{read_cycles, Timer};

/// Token appended to the result line of a call that hit a numerical failure.
pub const FAILURE_MARKER: &str = "FAIL";

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Nesting { line: usize, msg: String },
    #[error("no allocation named `{0}`")]
    MissingAllocation(String),
    #[error("{0}")]
    Memory(String),
    #[error("dynamic arena exhausted: {requested} elements requested, cap is {cap}")]
    ArenaExhausted { requested: usize, cap: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("buffered call {index} (line {line}, `{call}`): {source}")]
    Call {
        index: usize,
        line: usize,
        call: String,
        source: Box<SamplerError>,
    },
    #[error("counters: {0}")]
    Counters(String),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One measurement: cycles, counter values, and whether the measured unit
/// hit a numerical failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultLine {
    pub cycles: u64,
    pub counters: Vec<u64>,
    pub failed: bool,
}

impl fmt::Display for ResultLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.cycles)?;
        for c in &self.counters {
            write!(f, " {c}")?;
        }
        if self.failed {
            write!(f, " {FAILURE_MARKER}")?;
        }
        Ok(())
    }
}

impl FromStr for ResultLine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut tokens: Vec<&str> = s.split_whitespace().collect();
        let failed = tokens.last() == Some(&FAILURE_MARKER);
        if failed {
            tokens.pop();
        }
        let mut nums = tokens.iter().map(|t| {
            t.parse::<u64>()
                .map_err(|_| format!("`{t}` is not a count"))
        });
        let cycles = nums
            .next()
            .ok_or_else(|| "empty result line".to_string())??;
        Ok(ResultLine {
            cycles,
            counters: nums.collect::<Result<_, _>>()?,
            failed,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    /// Worker threads for parallel blocks and multithreaded kernels.
    pub nthreads: usize,
    /// Seed of every random fill.
    pub seed: u64,
    pub timer: Timer,
    /// Dynamic arena cap in elements.
    pub arena_cap: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            nthreads: 1,
            seed: 0,
            timer: Timer::detect(1e9),
            arena_cap: ARENA_CAP_ELEMENTS,
        }
    }
}

#[derive(Debug, Clone)]
struct BufferedCall {
    line: usize,
    name: String,
    tokens: Vec<String>,
}

impl fmt::Display for BufferedCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.name, self.tokens.join(" "))
    }
}

#[derive(Debug)]
enum Buffered {
    Single(BufferedCall),
    Block(Vec<BufferedCall>),
}

pub struct Sampler {
    memory: MemoryManager,
    timer: Timer,
    counters: Box<dyn CounterProvider>,
    counter_names: Vec<String>,
    backend: Box<dyn KernelBackend>,
    pool: rayon::ThreadPool,
    buffer: Vec<Buffered>,
    open_block: Option<(usize, Vec<BufferedCall>)>,
}

fn is_dynamic(token: &str) -> bool {
    !token.is_empty() && token.bytes().all(|b| b.is_ascii_digit())
}

impl Sampler {
    pub fn new(config: SamplerConfig) -> Result<Self, SamplerError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.nthreads.max(1))
            .build()
            .map_err(|e| SamplerError::Pool(e.to_string()))?;
        Ok(Sampler {
            memory: MemoryManager::new(config.seed).with_arena_cap(config.arena_cap),
            timer: config.timer,
            counters: Box::new(NullCounters::default()),
            counter_names: Vec::new(),
            backend: Box::new(ReferenceBackend),
            pool,
            buffer: Vec::new(),
            open_block: None,
        })
    }

    pub fn with_counters(mut self, provider: Box<dyn CounterProvider>) -> Self {
        self.counters = provider;
        self
    }

    pub fn with_backend(mut self, backend: Box<dyn KernelBackend>) -> Self {
        self.backend = backend;
        self
    }

    pub fn timer(&self) -> &Timer {
        &self.timer
    }

    pub fn counters_available(&self) -> bool {
        self.counters.available()
    }

    pub fn memory(&self) -> &MemoryManager {
        &self.memory
    }

    /// Applies one command; returns the result lines produced by a `go`.
    pub fn execute(&mut self, cmd: Command, line: usize) -> Result<Vec<ResultLine>, SamplerError> {
        match cmd {
            Command::Malloc {
                dtype,
                name,
                nelems,
            } => self.memory.malloc(dtype, &name, nelems)?,
            Command::Offset {
                dtype,
                src,
                offset,
                name,
            } => self.memory.offset(dtype, &src, offset, &name)?,
            Command::Free(name) => self.memory.free(&name)?,
            Command::Call { name, tokens } => {
                let call = BufferedCall { line, name, tokens };
                match &mut self.open_block {
                    Some((_, calls)) => calls.push(call),
                    None => self.buffer.push(Buffered::Single(call)),
                }
            }
            Command::ParBegin => {
                if self.open_block.is_some() {
                    return Err(SamplerError::Nesting {
                        line,
                        msg: "parallel blocks cannot be nested".into(),
                    });
                }
                self.open_block = Some((line, Vec::new()));
            }
            Command::ParEnd => match self.open_block.take() {
                Some((_, calls)) => self.buffer.push(Buffered::Block(calls)),
                None => {
                    return Err(SamplerError::Nesting {
                        line,
                        msg: "`}` without an open `{omp`".into(),
                    })
                }
            },
            Command::SetCounters(names) => {
                self.counters
                    .configure(&names)
                    .map_err(SamplerError::Counters)?;
                self.counter_names = names;
            }
            Command::Go => {
                if self.open_block.is_some() {
                    return Err(SamplerError::Nesting {
                        line,
                        msg: "`go` inside a parallel block".into(),
                    });
                }
                return self.flush();
            }
        }
        Ok(Vec::new())
    }

    /// Checks that the stream did not end inside a parallel block.
    pub fn finish(&self) -> Result<(), SamplerError> {
        match &self.open_block {
            Some((line, _)) => Err(SamplerError::Nesting {
                line: *line,
                msg: "parallel block is never closed".into(),
            }),
            None => Ok(()),
        }
    }

    /// Runs a parsed stream and collects all result lines.
    pub fn run_commands(
        &mut self,
        commands: Vec<(usize, Command)>,
    ) -> Result<Vec<ResultLine>, SamplerError> {
        let mut out = Vec::new();
        for (line, cmd) in commands {
            out.extend(self.execute(cmd, line)?);
        }
        self.finish()?;
        Ok(out)
    }

    /// Reads commands from `input` and writes result lines to `output`,
    /// flushing after every `go`.
    pub fn run<R: BufRead, W: Write>(
        &mut self,
        input: R,
        mut output: W,
    ) -> Result<(), SamplerError> {
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if let Some(cmd) = parse_command(&line, i + 1)? {
                let results = self.execute(cmd, i + 1)?;
                if !results.is_empty() {
                    for r in results {
                        writeln!(output, "{r}")?;
                    }
                    output.flush()?;
                }
            }
        }
        self.finish()
    }

    fn resolve(
        &mut self,
        calls: &[BufferedCall],
    ) -> Result<Vec<(ResolvedCall, CallContext)>, (usize, SamplerError)> {
        let mut parsed = Vec::with_capacity(calls.len());
        let mut requests = Vec::new();
        for (i, c) in calls.iter().enumerate() {
            let sig = lookup_signature(&c.name).map_err(|e| (i, e.into()))?;
            let tokens: Vec<&str> = c.tokens.iter().map(String::as_str).collect();
            let args = sig.parse_args(&tokens).map_err(|e| (i, e.into()))?;
            for a in &args {
                if let ArgValue::Data(tok) = a {
                    if is_dynamic(tok) {
                        let n = tok
                            .parse()
                            .map_err(|_| (i, SamplerError::Memory(format!("bad size `{tok}`"))))?;
                        requests.push((n, sig.dtype));
                    }
                }
            }
            parsed.push((sig, args));
        }
        self.memory.reset_arena();
        let mut dynamic = self
            .memory
            .dynamic_regions(&requests)
            .map_err(|e| (0, e))?
            .into_iter();
        let mut out = Vec::with_capacity(parsed.len());
        for (i, (sig, args)) in parsed.into_iter().enumerate() {
            let args = args
                .into_iter()
                .map(|a| {
                    Ok(match a {
                        ArgValue::Data(tok) if is_dynamic(&tok) => {
                            ArgValue::Data(dynamic.next().expect("requested"))
                        }
                        ArgValue::Data(tok) => ArgValue::Data(self.memory.named_region(&tok)?),
                        ArgValue::Flag(c) => ArgValue::Flag(c),
                        ArgValue::Int(v) => ArgValue::Int(v),
                        ArgValue::Real(v) => ArgValue::Real(v),
                        ArgValue::Path(p) => ArgValue::Path(p),
                    })
                })
                .collect::<Result<Vec<ArgValue<RawRegion>>, SamplerError>>()
                .map_err(|e| (i, e))?;
            let resolved = ResolvedCall::new(sig, args).map_err(|e| (i, e.into()))?;
            let ctx = CallContext {
                seed: self.memory.seed(),
                stream: self.memory.take_stream(),
            };
            out.push((resolved, ctx));
        }
        Ok(out)
    }

    fn flush(&mut self) -> Result<Vec<ResultLine>, SamplerError> {
        let buffer = std::mem::take(&mut self.buffer);
        let mut index = 0;
        let mut results = Vec::with_capacity(buffer.len());
        for item in buffer {
            let calls = match item {
                Buffered::Single(c) => vec![c],
                Buffered::Block(cs) => {
                    let n = cs.len();
                    let r = self.measure(&cs, index, true)?;
                    index += n;
                    results.push(r);
                    continue;
                }
            };
            results.push(self.measure(&calls, index, false)?);
            index += 1;
        }
        Ok(results)
    }

    fn measure(
        &mut self,
        calls: &[BufferedCall],
        first_index: usize,
        parallel: bool,
    ) -> Result<ResultLine, SamplerError> {
        let wrap = |i: usize, e: SamplerError| SamplerError::Call {
            index: first_index + i,
            line: calls.get(i).map_or(0, |c| c.line),
            call: calls.get(i).map_or_else(String::new, |c| c.to_string()),
            source: Box::new(e),
        };
        let resolved = self.resolve(calls).map_err(|(i, e)| wrap(i, e))?;
        let backend = &self.backend;
        let timer = &self.timer;
        self.counters.start();
        let (t0, outcome, t1) = self.pool.install(|| {
            let t0 = timer.now();
            let outcome = if parallel {
                backend.execute_parallel(&resolved)
            } else {
                let (call, ctx) = &resolved[0];
                backend
                    .execute(call, ctx)
                    .map(|()| vec![Ok(())])
                    .or_else(|e| Ok(vec![Err(e)]))
            };
            (t0, outcome, timer.now())
        });
        let counters = self.counters.stop();
        let per_call = outcome.map_err(|e| wrap(0, e.into()))?;
        let mut failed = false;
        for (i, r) in per_call.into_iter().enumerate() {
            match r {
                Ok(()) => {}
                Err(e) if e.is_numerical() => failed = true,
                Err(e) => return Err(wrap(i, e.into())),
            }
        }
        Ok(ResultLine {
            cycles: t1.saturating_sub(t0),
            counters,
            failed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampler() -> Sampler {
        Sampler::new(SamplerConfig {
            nthreads: 2,
            seed: 5,
            timer: Timer::clock(1e9),
            ..Default::default()
        })
        .unwrap()
    }

    fn run(text: &str) -> Result<Vec<ResultLine>, SamplerError> {
        sampler().run_commands(parse_stream(text)?)
    }

    #[test]
    fn one_call_one_line() {
        let lines =
            run("dmalloc A 4\ndmalloc B 4\ndmalloc C 4\ndgemm N N 2 2 2 1 A 2 B 2 0 C 2\ngo\n")
                .unwrap();
        assert_eq!(lines.len(), 1);
        assert!(lines[0].counters.is_empty());
        assert!(!lines[0].failed);
    }

    #[test]
    fn parallel_block_is_one_line() {
        let mut s = String::from("dmalloc A 4000000\ndmalloc b 16000\n{omp\n");
        for i in 0..8 {
            s += &format!("dtrsv L N N 2000 A 2000 b+{} 1\n", i * 2000);
        }
        s += "}\ngo\n";
        assert_eq!(run(&s).unwrap().len(), 1);
    }

    #[test]
    fn line_count_invariant() {
        let text = "dmalloc x 10\ndmalloc y 10\n\
                    daxpy 10 1 x 1 y 1\ndaxpy 10 1 x 1 y 1\n{omp\ndaxpy 5 1 x 1 y 1\ndaxpy 5 1 x+5 1 y+5 1\n}\ngo\n\
                    daxpy 10 1 x 1 y 1\ngo\ngo\n";
        assert_eq!(run(text).unwrap().len(), 4);
    }

    #[test]
    fn counters_follow_latest_set() {
        let text = "dmalloc x 10\ndaxpy 10 1 x 1 10 1\nset_counters a b c\ngo\nset_counters z\ndaxpy 10 1 x 1 10 1\ngo\n";
        let lines = run(text).unwrap();
        assert_eq!(lines[0].counters.len(), 3);
        assert_eq!(lines[1].counters.len(), 1);
    }

    #[test]
    fn missing_allocation_names_the_call() {
        let err =
            run("dmalloc A 4\ndmalloc C 4\ndmemset 0 4 A\ndgemm N N 2 2 2 1 A 2 Q 2 0 C 2\ngo\n")
                .unwrap_err();
        match err {
            SamplerError::Call {
                index: 1,
                line: 4,
                source,
                ..
            } => {
                assert!(matches!(*source, SamplerError::MissingAllocation(ref n) if n == "Q"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn capacity_and_nesting_errors() {
        let err = run("dmalloc A 3\ndgemm N N 2 2 2 1 A 2 A 2 0 4 2\ngo\n").unwrap_err();
        assert!(err.to_string().contains("buffered call 0"), "{err}");
        assert!(matches!(
            run("{omp\n{omp\n"),
            Err(SamplerError::Nesting { line: 2, .. })
        ));
        assert!(matches!(
            run("}\n"),
            Err(SamplerError::Nesting { line: 1, .. })
        ));
        assert!(matches!(
            run("{omp\ngo\n"),
            Err(SamplerError::Nesting { line: 2, .. })
        ));
        assert!(matches!(
            run("{omp\n"),
            Err(SamplerError::Nesting { line: 1, .. })
        ));
        assert!(run("nosuch 1 2\ngo\n")
            .unwrap_err()
            .to_string()
            .contains("unknown kernel"));
    }

    #[test]
    fn parallel_conflict_is_rejected() {
        let err = run(
            "dmalloc y 10\ndmalloc x 10\n{omp\ndaxpy 5 1 x 1 y 1\ndaxpy 5 1 x 1 y+2 1\n}\ngo\n",
        )
        .unwrap_err();
        assert!(
            matches!(err, SamplerError::Call { source, .. } if matches!(*source, SamplerError::Kernel(KernelError::Aliasing(_))))
        );
    }

    #[test]
    fn numerical_failure_is_marked() {
        let lines = run(
            "dmalloc A 4\ndmemset 0 4 A\ndgetrf 2 2 A 2\ndgemm N N 1 1 1 1 2 1 3 1 0 1 1\ngo\n",
        )
        .unwrap();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].failed);
        assert!(!lines[2].failed);
        assert!(lines[1].to_string().ends_with(" FAIL"));
        assert_eq!(
            lines[1].to_string().parse::<ResultLine>().unwrap(),
            lines[1]
        );
    }

    #[test]
    fn same_seed_same_memory() {
        let text = "dmalloc A 400\ndmalloc B 400\ndmalloc C 400\ndgerand 20 20 A 20\n\
                    dgemm N N 20 20 20 1 A 20 B 20 1 C 20\ndgemm N N 20 20 20 1 A 20 400 20 1 C 20\ngo\n";
        let digest = || {
            let mut s = sampler();
            s.run_commands(parse_stream(text).unwrap()).unwrap();
            s.memory().digest()
        };
        assert_eq!(digest(), digest());
    }

    #[test]
    fn empty_measurement_is_cheap() {
        let lines = run("dmalloc x 1\ndaxpy 0 1 x 1 x 1\ngo\n").unwrap();
        assert!(lines[0].cycles < 1_000_000, "{}", lines[0].cycles);
    }

    #[test]
    fn streaming_output() {
        let mut out = Vec::new();
        sampler()
            .run(
                "dmalloc x 8\n# comment\ndaxpy 8 2 x 1 16 1\ngo\n".as_bytes(),
                &mut out,
            )
            .unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.trim().parse::<u64>().is_ok());
    }

    #[test]
    fn result_line_parsing() {
        assert_eq!(
            "12 3 4".parse::<ResultLine>().unwrap(),
            ResultLine {
                cycles: 12,
                counters: vec![3, 4],
                failed: false
            }
        );
        assert!("".parse::<ResultLine>().is_err());
        assert!("x".parse::<ResultLine>().is_err());
    }
}
