//! Flat-directory persistence: one `<id>.kbr` file per report plus an
//! `index.json` of job records.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use kernbench_core::report::{parse_report, Report};
use serde::{Deserialize, Serialize};

const INDEX: &str = "index.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub experiment: String,
    pub state: JobState,
    /// Report file name inside the data directory, once done.
    pub report: Option<String>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub id: String,
    pub range_var: Option<String>,
    pub ranges: usize,
    pub nreps: u32,
    pub calls: Vec<String>,
}

pub struct Store {
    dir: PathBuf,
    jobs: Mutex<Vec<JobRecord>>,
}

impl Store {
    /// Opens or creates a store. Jobs left unfinished by a previous service
    /// are marked failed.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).with_context(|| format!("cannot create `{}`", dir.display()))?;
        let path = dir.join(INDEX);
        let mut jobs: Vec<JobRecord> = if path.is_file() {
            let text = fs::read_to_string(&path)?;
            serde_json::from_str(&text)
                .with_context(|| format!("corrupt index `{}`", path.display()))?
        } else {
            Vec::new()
        };
        for j in jobs.iter_mut().filter(|j| j.state < JobState::Done) {
            j.state = JobState::Failed;
            j.diagnostics
                .push("interrupted by a service restart".into());
        }
        let store = Store {
            dir,
            jobs: Mutex::new(jobs),
        };
        store.save(&store.jobs.lock().expect("index lock"))?;
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn save(&self, jobs: &[JobRecord]) -> Result<()> {
        let tmp = self.dir.join(format!("{INDEX}.tmp"));
        fs::write(&tmp, serde_json::to_string_pretty(jobs)?)?;
        fs::rename(&tmp, self.dir.join(INDEX))?;
        Ok(())
    }

    fn update<T>(&self, f: impl FnOnce(&mut Vec<JobRecord>) -> Result<T>) -> Result<T> {
        let mut jobs = self.jobs.lock().expect("index lock");
        let out = f(&mut jobs)?;
        self.save(&jobs)?;
        Ok(out)
    }

    pub fn create_job(&self, experiment: &str) -> Result<JobRecord> {
        self.update(|jobs| {
            let rec = JobRecord {
                id: format!("{}", jobs.len() + 1),
                experiment: experiment.to_string(),
                state: JobState::Queued,
                report: None,
                diagnostics: Vec::new(),
            };
            jobs.push(rec.clone());
            Ok(rec)
        })
    }

    fn transition(&self, id: &str, to: JobState, f: impl FnOnce(&mut JobRecord)) -> Result<()> {
        self.update(|jobs| {
            let j = jobs
                .iter_mut()
                .find(|j| j.id == id)
                .ok_or_else(|| anyhow!("unknown job `{id}`"))?;
            if to <= j.state || j.state >= JobState::Done {
                bail!("job `{id}` cannot go from {:?} to {to:?}", j.state);
            }
            j.state = to;
            f(j);
            Ok(())
        })
    }

    pub fn mark_running(&self, id: &str) -> Result<()> {
        self.transition(id, JobState::Running, |_| {})
    }

    /// Stores the report of a finished job; rejects unparseable reports.
    pub fn finish(&self, id: &str, report_text: &str) -> Result<()> {
        parse_report(report_text).context("sampler produced an unreadable report")?;
        let name = format!("{id}.kbr");
        fs::write(self.dir.join(&name), report_text)?;
        self.transition(id, JobState::Done, |j| j.report = Some(name))
    }

    pub fn fail(&self, id: &str, diagnostics: Vec<String>) -> Result<()> {
        self.transition(id, JobState::Failed, |j| j.diagnostics = diagnostics)
    }

    /// Adds an existing report file as a finished job.
    pub fn import_report(&self, report_text: &str) -> Result<String> {
        let report = parse_report(report_text)?;
        let id = self.create_job(&report.experiment_text)?.id;
        self.transition(&id, JobState::Running, |_| {})?;
        self.finish(&id, report_text)?;
        Ok(id)
    }

    pub fn job(&self, id: &str) -> Option<JobRecord> {
        self.jobs
            .lock()
            .expect("index lock")
            .iter()
            .find(|j| j.id == id)
            .cloned()
    }

    pub fn jobs(&self) -> Vec<JobRecord> {
        self.jobs.lock().expect("index lock").clone()
    }

    /// Path of a finished report.
    pub fn report_path(&self, id: &str) -> Option<PathBuf> {
        self.job(id)?.report.map(|r| self.dir.join(r))
    }

    pub fn load_report(&self, id: &str) -> Option<Result<Report>> {
        let path = self.report_path(id)?;
        Some(
            fs::read_to_string(&path)
                .map_err(Into::into)
                .and_then(|t| parse_report(&t).map_err(Into::into)),
        )
    }

    pub fn reports(&self) -> Vec<ReportSummary> {
        let done: Vec<JobRecord> = self
            .jobs()
            .into_iter()
            .filter(|j| j.state == JobState::Done)
            .collect();
        done.into_iter()
            .filter_map(|j| {
                let r = self.load_report(&j.id)?.ok()?;
                Some(ReportSummary {
                    id: j.id,
                    range_var: r.range_var().map(str::to_string),
                    ranges: r.ranges.len(),
                    nreps: r.experiment.nreps,
                    calls: r.experiment.calls.iter().map(ToString::to_string).collect(),
                })
            })
            .collect()
    }
}
