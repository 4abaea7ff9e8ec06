use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command as Process, Stdio};

use super::{serialize, unroll, Experiment, ExperimentError};

/// Header of batch scripts; `{job_name}`, `{cores}`, and `{time_limit}` are
/// substituted.
pub const DEFAULT_BATCH_TEMPLATE: &str = "#!/bin/sh
#SBATCH --job-name={job_name}
#SBATCH --nodes=1
#SBATCH --cpus-per-task={cores}
#SBATCH --time={time_limit}
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchJob {
    pub job_name: String,
    pub cores: u32,
    pub time_limit: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    /// Run now and write the report to the given file.
    Local { report: PathBuf },
    /// Write a script to run later into the given directory.
    ShellScript { dir: PathBuf },
    /// Like `ShellScript`, headed by a filled-in batch template.
    BatchTemplate {
        dir: PathBuf,
        template: String,
        job: BatchJob,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JobHandle {
    Done {
        report: PathBuf,
    },
    /// Running `script` eventually produces `report`.
    Pending {
        script: PathBuf,
        report: PathBuf,
    },
}

impl JobHandle {
    pub fn report_path(&self) -> &Path {
        match self {
            JobHandle::Done { report } | JobHandle::Pending { report, .. } => report,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LocalOptions {
    /// Extra environment for every sampler process.
    pub env: Vec<(String, String)>,
    /// Where each run writes the digest of its final memory, as
    /// `segment-<i>.sha256`.
    pub digest_dir: Option<PathBuf>,
}

fn io_err(what: &str, path: &Path, e: std::io::Error) -> ExperimentError {
    ExperimentError::Io(format!("{what} `{}`: {e}", path.display()))
}

fn check_sampler(sampler: &Path) -> Result<(), ExperimentError> {
    if sampler.is_file() {
        Ok(())
    } else {
        Err(ExperimentError::SamplerMissing(sampler.to_path_buf()))
    }
}

fn run_sampler(
    sampler: &Path,
    args: &[String],
    env: &[(String, String)],
    input: &str,
) -> Result<String, ExperimentError> {
    let mut child = Process::new(sampler)
        .args(args)
        .envs(env.iter().map(|(k, v)| (k, v)))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| io_err("cannot start", sampler, e))?;
    let mut stdin = child.stdin.take().expect("stdin is piped");
    let output = std::thread::scope(|s| {
        let writer = s.spawn(move || stdin.write_all(input.as_bytes()));
        let output = child.wait_with_output();
        // A sampler that aborts early closes its input; its exit status
        // carries the real error.
        let _ = writer.join();
        output
    })
    .map_err(|e| io_err("sampler", sampler, e))?;
    if !output.status.success() {
        return Err(ExperimentError::SamplerFailed {
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    String::from_utf8(output.stdout)
        .map_err(|e| ExperimentError::Io(format!("sampler output: {e}")))
}

/// Runs every stream through the sampler and returns the report text.
pub fn run_local(
    exp: &Experiment,
    sampler: &Path,
    opts: &LocalOptions,
) -> Result<String, ExperimentError> {
    check_sampler(sampler)?;
    let streams = unroll(exp)?;
    let mut report = serialize(exp);
    report.push_str("%%%\n");
    report.push_str(&run_sampler(sampler, &["--info".into()], &opts.env, "")?);
    for (i, s) in streams.iter().enumerate() {
        let mut env = opts.env.clone();
        env.push(("KERNBENCH_NTHREADS".into(), s.nthreads.to_string()));
        env.push(("KERNBENCH_SEED".into(), exp.seed.to_string()));
        let mut args = Vec::new();
        if let Some(dir) = &opts.digest_dir {
            args.push("--digest-out".to_string());
            args.push(
                dir.join(format!("segment-{i}.sha256"))
                    .to_string_lossy()
                    .into_owned(),
            );
        }
        let out = run_sampler(sampler, &args, &env, &s.text())?;
        report.push_str(&format!("segment: nthreads={}\n", s.nthreads));
        report.push_str(&out);
    }
    Ok(report)
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// Runs locally, or writes a self-contained script plus stream files.
pub fn submit(
    exp: &Experiment,
    sampler: &Path,
    backend: &Backend,
) -> Result<JobHandle, ExperimentError> {
    check_sampler(sampler)?;
    let (dir, header) = match backend {
        Backend::Local { report } => {
            let text = run_local(exp, sampler, &LocalOptions::default())?;
            fs::write(report, text).map_err(|e| io_err("cannot write", report, e))?;
            return Ok(JobHandle::Done {
                report: report.clone(),
            });
        }
        Backend::ShellScript { dir } => (dir, "#!/bin/sh\n".to_string()),
        Backend::BatchTemplate { dir, template, job } => {
            let mut h = template
                .replace("{job_name}", &job.job_name)
                .replace("{cores}", &job.cores.to_string())
                .replace("{time_limit}", &job.time_limit);
            if !h.ends_with('\n') {
                h.push('\n');
            }
            (dir, h)
        }
    };
    let streams = unroll(exp)?;
    fs::create_dir_all(dir).map_err(|e| io_err("cannot create", dir, e))?;
    let dir = dir
        .canonicalize()
        .map_err(|e| io_err("cannot resolve", dir, e))?;
    let sampler = sampler
        .canonicalize()
        .map_err(|e| io_err("cannot resolve", sampler, e))?;
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| io_err("cannot write", &p, e))
    };
    write("experiment.kbe", &serialize(exp))?;
    let report = dir.join("report.kbr");
    let mut script = header;
    script.push_str("set -e\n");
    script.push_str(&format!("SAMPLER={}\n", quote(&sampler.to_string_lossy())));
    script.push_str(&format!("DIR={}\n", quote(&dir.to_string_lossy())));
    script.push_str("{\ncat \"$DIR/experiment.kbe\"\necho '%%%'\n\"$SAMPLER\" --info\n");
    for (i, s) in streams.iter().enumerate() {
        let name = format!("stream-{i}.txt");
        write(&name, &s.text())?;
        script.push_str(&format!("echo 'segment: nthreads={}'\n", s.nthreads));
        script.push_str(&format!(
            "KERNBENCH_NTHREADS={} KERNBENCH_SEED={} \"$SAMPLER\" < \"$DIR/{name}\"\n",
            s.nthreads, exp.seed
        ));
    }
    script.push_str(
        "} > \"$DIR/report.kbr.part\"\nmv \"$DIR/report.kbr.part\" \"$DIR/report.kbr\"\n",
    );
    write("run.sh", &script)?;
    let script_path = dir.join("run.sh");
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(&script_path, fs::Permissions::from_mode(0o755))
            .map_err(|e| io_err("cannot mark executable", &script_path, e))?;
    }
    Ok(JobHandle::Pending {
        script: script_path,
        report,
    })
}

/// Report text of a finished job. Batch jobs are collected by placing the
/// report file where the handle expects it.
pub fn collect(handle: &JobHandle) -> Result<String, ExperimentError> {
    let p = handle.report_path();
    fs::read_to_string(p).map_err(|e| io_err("report not available at", p, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{deserialize, HEADER};

    fn exp(body: &str) -> Experiment {
        deserialize(&format!("{HEADER}\n{body}")).unwrap()
    }

    #[test]
    fn missing_sampler() {
        let e = exp("call: daxpy 5 1 x 1 y 1\n");
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("no-such-sampler");
        for backend in [
            Backend::Local {
                report: dir.path().join("r.kbr"),
            },
            Backend::ShellScript {
                dir: dir.path().join("s"),
            },
        ] {
            assert!(matches!(
                submit(&e, &missing, &backend),
                Err(ExperimentError::SamplerMissing(_))
            ));
        }
    }

    #[test]
    fn batch_script_has_one_invocation_per_thread_count() {
        let e = exp("nthreads: t\nrange: t 1:1:3\ncall: dgemm N N 8 8 8 1 A 8 B 8 1 C 8\n");
        let dir = tempfile::tempdir().unwrap();
        let fake = dir.path().join("sampler");
        fs::write(&fake, "").unwrap();
        let job = BatchJob {
            job_name: "scaling".into(),
            cores: 3,
            time_limit: "00:10:00".into(),
        };
        let backend = Backend::BatchTemplate {
            dir: dir.path().join("job"),
            template: DEFAULT_BATCH_TEMPLATE.into(),
            job,
        };
        let h = submit(&e, &fake, &backend).unwrap();
        let JobHandle::Pending { script, report } = &h else {
            panic!("{h:?}")
        };
        let text = fs::read_to_string(script).unwrap();
        assert!(text.contains("#SBATCH --job-name=scaling"));
        assert!(text.contains("--cpus-per-task=3") && text.contains("--time=00:10:00"));
        assert_eq!(text.matches("KERNBENCH_NTHREADS=").count(), 3);
        for t in 1..=3 {
            assert!(text.contains(&format!("KERNBENCH_NTHREADS={t} ")));
        }
        assert!(dir.path().join("job/stream-2.txt").is_file());
        assert!(collect(&h).is_err());
        fs::write(report, "x").unwrap();
        assert_eq!(collect(&h).unwrap(), "x");
    }

    #[test]
    fn sampler_failure_carries_stderr() {
        let dir = tempfile::tempdir().unwrap();
        let fake = dir.path().join("sampler.sh");
        fs::write(&fake, "#!/bin/sh\necho broken >&2\nexit 3\n").unwrap();
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            fs::set_permissions(&fake, fs::Permissions::from_mode(0o755)).unwrap();
        }
        let e = exp("call: daxpy 5 1 x 1 y 1\n");
        match run_local(&e, &fake, &LocalOptions::default()) {
            Err(ExperimentError::SamplerFailed { stderr, .. }) => assert_eq!(stderr, "broken"),
            other => panic!("{other:?}"),
        }
    }
}
