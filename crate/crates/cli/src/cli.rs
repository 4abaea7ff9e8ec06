use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kernbench_core::experiment::{
    deserialize, run_local, submit, Backend, BatchJob, Experiment, ExperimentError, JobHandle,
    LocalOptions, DEFAULT_BATCH_TEMPLATE,
};
use kernbench_core::kernels::{all_signatures, lookup_signature, ArgKind};
use kernbench_core::plot::{emit_plot, PlotSpec, Style};
use kernbench_core::report::{
    breakdown, parse_report, series, stats_csv, MachineSpec, Metric, Query, Report, Statistic,
};

use crate::server::{ServerConfig, DEFAULT_PORT};
use crate::{check_experiment, default_sampler_path, resolve_machine};

#[derive(Parser)]
#[command(
    name = "kernbench",
    version,
    about = "Run and analyze dense linear algebra kernel experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct SamplerArg {
    /// Sampler executable [default: kernbench-sampler next to this program]
    #[arg(long, value_name = "PATH")]
    sampler: Option<PathBuf>,
}

impl SamplerArg {
    fn path(&self) -> PathBuf {
        self.sampler.clone().unwrap_or_else(default_sampler_path)
    }
}

#[derive(Args, Clone)]
struct Analysis {
    /// Machine description file
    #[arg(long, value_name = "FILE")]
    machine: Option<PathBuf>,
    /// Drop the first repetition before computing statistics
    #[arg(long, overrides_with = "keep_first")]
    discard_first: bool,
    /// Keep every repetition (default)
    #[arg(long, overrides_with = "discard_first")]
    keep_first: bool,
    /// One series per call plus the total
    #[arg(long)]
    breakdown: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Local,
    Script,
    Batch,
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    Line,
    Bar,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check an experiment and print its diagnostics
    Validate { experiment: PathBuf },
    /// Run an experiment locally and write its report
    Run {
        experiment: PathBuf,
        /// Report file [default: experiment path with .kbr]
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[command(flatten)]
        sampler: SamplerArg,
        /// Write a digest of the final operand contents per segment here
        #[arg(long, value_name = "DIR")]
        digest_dir: Option<PathBuf>,
    },
    /// Write a script that runs an experiment later
    Submit {
        experiment: PathBuf,
        #[arg(long, value_enum, default_value = "script")]
        backend: BackendKind,
        /// Job directory for scripts, report file for `local`
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[command(flatten)]
        sampler: SamplerArg,
        /// Batch header template with {job_name}, {cores}, {time_limit}
        #[arg(long, value_name = "FILE")]
        template: Option<PathBuf>,
        #[arg(long, default_value = "kernbench")]
        job_name: String,
        #[arg(long, default_value_t = 1)]
        cores: u32,
        #[arg(long, default_value = "01:00:00")]
        time_limit: String,
    },
    /// Tabulate metric statistics per range value
    Stats {
        report: PathBuf,
        /// Metrics, comma separated
        #[arg(long, value_delimiter = ',', default_value = "gflops")]
        metric: Vec<String>,
        /// Statistics, comma separated
        #[arg(long, value_delimiter = ',', default_value = "median")]
        stat: Vec<String>,
        #[command(flatten)]
        analysis: Analysis,
        /// Output file [default: standard output]
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Draw reports as an SVG chart plus a series file
    Plot {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Legend labels, one per report [default: file stems]
        #[arg(long, value_delimiter = ',')]
        label: Vec<String>,
        #[arg(long, default_value = "gflops")]
        metric: String,
        /// Statistics, comma separated
        #[arg(long, value_delimiter = ',', default_value = "min,median,max")]
        stat: Vec<String>,
        #[arg(long, value_enum)]
        style: Option<StyleArg>,
        #[command(flatten)]
        analysis: Analysis,
        /// SVG file [default: first report with .svg]; the series go next to
        /// it with .series.csv
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// List kernel signatures
    Kernels {
        /// Show one kernel in detail
        name: Option<String>,
        /// Print JSON
        #[arg(long)]
        json: bool,
    },
    /// Start the HTTP service
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, value_name = "DIR", default_value = "kernbench-data")]
        data_dir: PathBuf,
        /// Web UI bundle to host
        #[arg(long, value_name = "DIR")]
        static_dir: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        machine: Option<PathBuf>,
        #[command(flatten)]
        sampler: SamplerArg,
    },
}

/// Runs the CLI and returns the exit status: 0 on success, 1 on pipeline
/// errors, 2 on usage errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            match e.downcast_ref::<ExperimentError>() {
                Some(ExperimentError::Invalid(diags)) => {
                    for d in diags {
                        let _ = writeln!(err, "{d}");
                    }
                }
                _ => {
                    let _ = writeln!(err, "error: {e:#}");
                }
            }
            1
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read `{}`", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write `{}`", path.display()))
}

fn load_experiment(path: &Path) -> Result<Experiment> {
    Ok(deserialize(&read(path)?).with_context(|| format!("in `{}`", path.display()))?)
}

fn load_report(path: &Path) -> Result<Report> {
    Ok(parse_report(&read(path)?).with_context(|| format!("in `{}`", path.display()))?)
}

fn machine_for(analysis: &Analysis, report: &Report, path: &Path) -> Result<MachineSpec> {
    resolve_machine(analysis.machine.as_deref(), report, path.parent())
}

fn parse_list<T: std::str::FromStr>(items: &[String]) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    items
        .iter()
        .map(|s| s.trim().parse::<T>().map_err(Into::into))
        .collect()
}

fn dispatch(cmd: Cmd, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Cmd::Validate { experiment } => match check_experiment(&read(&experiment)?) {
            Ok(_) => {
                writeln!(out, "{}: valid", experiment.display())?;
                Ok(0)
            }
            Err(diags) => {
                for d in diags {
                    writeln!(out, "{d}")?;
                }
                Ok(1)
            }
        },
        Cmd::Run {
            experiment,
            out: report,
            sampler,
            digest_dir,
        } => {
            let exp = load_experiment(&experiment)?;
            let report = report.unwrap_or_else(|| experiment.with_extension("kbr"));
            if let Some(d) = &digest_dir {
                fs::create_dir_all(d)
                    .with_context(|| format!("cannot create `{}`", d.display()))?;
            }
            let text = run_local(
                &exp,
                &sampler.path(),
                &LocalOptions {
                    env: Vec::new(),
                    digest_dir,
                },
            )?;
            write_file(&report, &text)?;
            writeln!(out, "{}", report.display())?;
            Ok(0)
        }
        Cmd::Submit {
            experiment,
            backend,
            out: path,
            sampler,
            template,
            job_name,
            cores,
            time_limit,
        } => {
            let exp = load_experiment(&experiment)?;
            let backend = match backend {
                BackendKind::Local => Backend::Local { report: path },
                BackendKind::Script => Backend::ShellScript { dir: path },
                BackendKind::Batch => Backend::BatchTemplate {
                    dir: path,
                    template: match template {
                        Some(t) => read(&t)?,
                        None => DEFAULT_BATCH_TEMPLATE.to_string(),
                    },
                    job: BatchJob {
                        job_name,
                        cores,
                        time_limit,
                    },
                },
            };
            match submit(&exp, &sampler.path(), &backend)? {
                JobHandle::Done { report } => writeln!(out, "{}", report.display())?,
                JobHandle::Pending { script, report } => {
                    writeln!(out, "script: {}", script.display())?;
                    writeln!(out, "report: {}", report.display())?;
                }
            }
            Ok(0)
        }
        Cmd::Stats {
            report: path,
            metric,
            stat,
            analysis,
            out: dest,
        } => {
            let report = load_report(&path)?;
            let machine = machine_for(&analysis, &report, &path)?;
            let metrics: Vec<Metric> = parse_list(&metric)?;
            let stats: Vec<Statistic> = parse_list(&stat)?;
            let discard_first = analysis.discard_first && !analysis.keep_first;
            let mut all = Vec::new();
            for &m in &metrics {
                for &s in &stats {
                    let q = Query {
                        metric: m,
                        statistic: s,
                        discard_first,
                    };
                    if analysis.breakdown {
                        all.extend(breakdown(&report, q, &machine)?);
                    } else {
                        all.push(series(&report, q, &machine)?);
                    }
                }
            }
            let text = if analysis.breakdown {
                labelled_csv(&all)
            } else {
                stats_csv(&all)
            };
            for f in report.failures() {
                writeln!(err, "warning: numerical failure excluded: {f:?}")?;
            }
            match dest {
                Some(p) => write_file(&p, &text)?,
                None => out.write_all(text.as_bytes())?,
            }
            Ok(0)
        }
        Cmd::Plot {
            reports: paths,
            label,
            metric,
            stat,
            style,
            analysis,
            out: dest,
        } => {
            if !label.is_empty() && label.len() != paths.len() {
                bail!("{} labels for {} reports", label.len(), paths.len());
            }
            let reports = paths
                .iter()
                .map(|p| load_report(p))
                .collect::<Result<Vec<_>>>()?;
            let labels: Vec<String> = if label.is_empty() {
                paths
                    .iter()
                    .map(|p| {
                        p.file_stem()
                            .map(|s| s.to_string_lossy().into_owned())
                            .unwrap_or_default()
                    })
                    .collect()
            } else {
                label
            };
            let machine = machine_for(&analysis, &reports[0], &paths[0])?;
            let spec = PlotSpec {
                metric: metric.parse()?,
                stats: parse_list(&stat)?,
                discard_first: analysis.discard_first && !analysis.keep_first,
                style: style.map(|s| match s {
                    StyleArg::Line => Style::Line,
                    StyleArg::Bar => Style::Bar,
                }),
                breakdown: analysis.breakdown,
            };
            let pairs: Vec<(&str, &Report)> =
                labels.iter().map(String::as_str).zip(&reports).collect();
            let plot = emit_plot(&spec, &pairs, &machine)?;
            let svg = dest.unwrap_or_else(|| paths[0].with_extension("svg"));
            let sidecar = svg.with_extension("series.csv");
            write_file(&svg, &plot.svg)?;
            write_file(&sidecar, &plot.sidecar)?;
            writeln!(out, "{}\n{}", svg.display(), sidecar.display())?;
            Ok(0)
        }
        Cmd::Kernels { name, json } => {
            match (name, json) {
                (Some(n), true) => writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(lookup_signature(&n)?)?
                )?,
                (None, true) => {
                    writeln!(out, "{}", serde_json::to_string_pretty(all_signatures())?)?
                }
                (Some(n), false) => {
                    let sig = lookup_signature(&n)?;
                    writeln!(out, "{}: {}", sig.name, sig.description)?;
                    writeln!(out, "flops: {}", sig.flops)?;
                    for a in &sig.args {
                        writeln!(out, "  {:<8} {}", a.name, describe(&a.kind))?;
                    }
                }
                (None, false) => {
                    for sig in all_signatures() {
                        let args: Vec<&str> = sig.args.iter().map(|a| a.name).collect();
                        writeln!(out, "{:<10} {}", sig.name, args.join(" "))?;
                    }
                }
            }
            Ok(0)
        }
        Cmd::Serve {
            port,
            data_dir,
            static_dir,
            machine,
            sampler,
        } => {
            let machine = match machine {
                Some(p) => {
                    MachineSpec::parse(&read(&p)?).map_err(|e| anyhow!("`{}`: {e}", p.display()))?
                }
                None => MachineSpec::default(),
            };
            let config = ServerConfig {
                data_dir,
                sampler: sampler.path(),
                static_dir,
                machine,
                port,
            };
            tokio::runtime::Runtime::new()?.block_on(crate::server::serve(config))?;
            Ok(0)
        }
    }
}

fn describe(kind: &ArgKind) -> String {
    match kind {
        ArgKind::Flag { allowed } => format!("flag, one of {}", allowed.iter().collect::<String>()),
        ArgKind::Dim => "dimension".into(),
        ArgKind::Scalar => "scalar".into(),
        ArgKind::Ld { .. } => "leading dimension".into(),
        ArgKind::Data(d) => format!("{} operand", if d.writes { "written" } else { "read" }),
        ArgKind::Path => "file path".into(),
    }
}

/// Breakdown export: the plain columns plus the series label.
fn labelled_csv(series: &[kernbench_core::report::Series]) -> String {
    let mut s = String::from("label,range-value,metric,statistic,value\n");
    for ser in series {
        let body = stats_csv(std::slice::from_ref(ser));
        for line in body.lines().skip(1) {
            s.push_str(&format!("{},{line}\n", ser.label));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(
            std::iter::once("kernbench").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(call(&["frobnicate"]).0, 2);
        assert_eq!(call(&["stats"]).0, 2);
        assert_eq!(call(&["--help"]).0, 0);
    }

    #[test]
    fn pipeline_errors_exit_1() {
        let (code, _, err) = call(&["stats", "/nonexistent/r.kbr"]);
        assert_eq!(code, 1);
        assert!(err.contains("cannot read"));
    }

    #[test]
    fn kernels_listing() {
        let (code, out, _) = call(&["kernels"]);
        assert_eq!(code, 0);
        assert!(out.lines().any(|l| l.starts_with("dgemm ")));
        let (_, detail, _) = call(&["kernels", "dtrsm"]);
        assert!(detail.contains("ldA") && detail.contains("leading dimension"));
        assert_eq!(call(&["kernels", "dnope"]).0, 1);
    }
}
