//! Scenario files, built-in scenarios, the runner and the output formats
//! (JSON reports, CSV tables, SVG plots, OFF meshes) for `phasefront`.

pub mod builtin;
pub mod export;
pub mod run;
pub mod scenario;

use std::path::Path;

pub use run::{run, Mode, Outcome, RunReport};
pub use scenario::Scenario;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// Bad arguments or an invalid scenario file (exit status 2).
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// A built-in name or the path of a scenario JSON file.
pub fn load_scenario(arg: &str) -> Result<Scenario, RunError> {
    if let Some(sc) = builtin::builtin(arg) {
        return Ok(sc);
    }
    let path = Path::new(arg);
    if !path.exists() {
        let names: Vec<_> = builtin::names().collect();
        return Err(RunError::Usage(format!("{arg:?} is neither a scenario file nor a built-in ({})", names.join(", "))));
    }
    Scenario::from_json(&std::fs::read_to_string(path)?)
}

/// Writes every artifact below `dir/<scenario name>/`.
pub fn write_outcome(outcome: &Outcome, dir: &Path) -> Result<std::path::PathBuf, RunError> {
    let root = dir.join(&outcome.report.scenario);
    std::fs::create_dir_all(&root)?;
    for a in &outcome.artifacts {
        std::fs::write(root.join(&a.name), &a.contents)?;
    }
    Ok(root)
}
