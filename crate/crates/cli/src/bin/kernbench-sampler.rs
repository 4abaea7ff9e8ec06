//! Reads sampler commands on stdin and prints one result line per measured
//! unit.
//!
//! Environment: `KERNBENCH_NTHREADS`, `KERNBENCH_SEED`, `KERNBENCH_FREQ_HZ`
//! (clock fallback frequency), and `KERNBENCH_TIMER=clock` to force the
//! scaled clock.

use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use kernbench_core::sampler::{Sampler, SamplerConfig, Timer};

#[derive(Parser)]
#[command(
    name = "kernbench-sampler",
    version,
    about = "Timed kernel execution from a command stream"
)]
struct Args {
    /// Print the timer and counter availability, then exit.
    #[arg(long)]
    info: bool,
    /// Write the SHA-256 of all named operands after the run to this file.
    #[arg(long, value_name = "PATH")]
    digest_out: Option<PathBuf>,
}

fn env<T: std::str::FromStr>(name: &str, default: T) -> Result<T, String> {
    match std::env::var(name) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("{name}: cannot parse `{v}`")),
        Err(_) => Ok(default),
    }
}

fn config() -> Result<SamplerConfig, String> {
    let freq: f64 = env("KERNBENCH_FREQ_HZ", 1e9)?;
    if !(freq > 0.0 && freq.is_finite()) {
        return Err("KERNBENCH_FREQ_HZ must be positive".into());
    }
    let timer = match std::env::var("KERNBENCH_TIMER").as_deref() {
        Ok("clock") => Timer::clock(freq),
        Ok("auto") | Err(_) => Timer::detect(freq),
        Ok(other) => {
            return Err(format!(
                "KERNBENCH_TIMER: expected `clock` or `auto`, got `{other}`"
            ))
        }
    };
    Ok(SamplerConfig {
        nthreads: env("KERNBENCH_NTHREADS", 1)?,
        seed: env("KERNBENCH_SEED", 0)?,
        timer,
        ..Default::default()
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    let run = || -> Result<(), String> {
        let config = config()?;
        let mut sampler = Sampler::new(config).map_err(|e| e.to_string())?;
        if args.info {
            let counters = if sampler.counters_available() {
                "yes"
            } else {
                "none"
            };
            println!("timer: {}\ncounters-available: {counters}", sampler.timer());
            return Ok(());
        }
        let stdin = io::stdin().lock();
        let stdout = BufWriter::new(io::stdout().lock());
        sampler.run(stdin, stdout).map_err(|e| e.to_string())?;
        if let Some(path) = &args.digest_out {
            let hex: String = sampler
                .memory()
                .digest()
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect();
            std::fs::write(path, format!("{hex}\n"))
                .map_err(|e| format!("{}: {e}", path.display()))?;
        }
        Ok(())
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kernbench-sampler: {e}");
            ExitCode::FAILURE
        }
    }
}
