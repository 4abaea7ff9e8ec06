//! Command-line front end and HTTP service.

use std::path::{Path, PathBuf};

use kernbench_core::experiment::{deserialize, validate, Experiment};
use kernbench_core::report::{MachineSpec, Report};

pub mod cli;
pub mod server;
pub mod store;

pub const SAMPLER_NAME: &str = "kernbench-sampler";

/// The sampler installed next to the running executable.
pub fn default_sampler_path() -> PathBuf {
    let exe = std::env::current_exe().unwrap_or_default();
    let dir = exe.parent().map(Path::to_path_buf).unwrap_or_default();
    // Test binaries live one level below the executables.
    let candidates = [
        dir.join(SAMPLER_NAME),
        dir.parent()
            .map(|d| d.join(SAMPLER_NAME))
            .unwrap_or_default(),
    ];
    candidates
        .iter()
        .find(|p| p.is_file())
        .cloned()
        .unwrap_or_else(|| dir.join(SAMPLER_NAME))
}

/// Parses and validates experiment text. On failure returns one line per
/// problem, formatted identically for the CLI and the HTTP service.
pub fn check_experiment(text: &str) -> Result<Experiment, Vec<String>> {
    let exp = deserialize(text).map_err(|e| vec![e.to_string()])?;
    let diags = validate(&exp);
    if diags.is_empty() {
        Ok(exp)
    } else {
        Err(diags.iter().map(ToString::to_string).collect())
    }
}

/// Machine description for a report: the explicit file if given, else the
/// report's `machine:` field when it names a readable file (relative paths
/// are tried against `base` too), else the default.
pub fn resolve_machine(
    explicit: Option<&Path>,
    report: &Report,
    base: Option<&Path>,
) -> anyhow::Result<MachineSpec> {
    let load = |p: &Path| -> anyhow::Result<MachineSpec> {
        let text = std::fs::read_to_string(p)
            .map_err(|e| anyhow::anyhow!("machine file `{}`: {e}", p.display()))?;
        Ok(MachineSpec::parse(&text)
            .map_err(|e| anyhow::anyhow!("machine file `{}`: {e}", p.display()))?)
    };
    if let Some(p) = explicit {
        return load(p);
    }
    if let Some(name) = &report.experiment.machine {
        let direct = PathBuf::from(name);
        let candidates = [Some(direct.clone()), base.map(|b| b.join(&direct))];
        if let Some(p) = candidates.into_iter().flatten().find(|p| p.is_file()) {
            return load(&p);
        }
    }
    Ok(MachineSpec::default())
}
