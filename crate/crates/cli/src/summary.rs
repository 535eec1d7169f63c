use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gpss_core::acceptance::Check;
use gpss_core::integrator::Profile;
use gpss_core::io::{atomic_write, write_json};
use gpss_core::DerivedConstants;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    pub config: RunConfig,
    pub constants: Option<DerivedConstants>,
    pub lambda_star: Option<f64>,
    pub cache_hit: Option<bool>,
    pub fits: BTreeMap<String, serde_json::Value>,
    pub checks: Vec<Check>,
    pub passed: bool,
    /// Seconds per stage.
    pub timings: BTreeMap<String, f64>,
    /// Files written into the output directory, relative to it.
    pub artifacts: Vec<String>,
}

impl RunSummary {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.into(),
            config: config.clone(),
            constants: None,
            lambda_star: None,
            cache_hit: None,
            fits: BTreeMap::new(),
            checks: Vec::new(),
            passed: true,
            timings: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn fit<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let v = serde_json::to_value(value).map_err(gpss_core::Error::from)?;
        self.fits.insert(name.into(), v);
        Ok(())
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Single funnel for every file a run produces.
pub struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<String>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), written: Vec::new() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn record(&mut self, path: &Path) {
        let rel = path.strip_prefix(&self.dir).unwrap_or(path).to_string_lossy().into_owned();
        if !self.written.contains(&rel) {
            self.written.push(rel);
        }
    }

    pub fn text(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        atomic_write(&path, content.as_bytes())?;
        self.record(&path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        write_json(&path, value)?;
        self.record(&path);
        Ok(())
    }

    pub fn profile(&mut self, stem: &str, profile: &Profile) -> Result<()> {
        for p in profile.write(&self.dir, stem)? {
            self.record(&p);
        }
        Ok(())
    }

    pub fn paths(&mut self, paths: &[PathBuf]) {
        for p in paths {
            self.record(p);
        }
    }

    /// Writes `<command>_summary.json` with the manifest filled in.
    pub fn finish(mut self, mut summary: RunSummary) -> Result<RunSummary> {
        summary.artifacts = std::mem::take(&mut self.written);
        let name = format!("{}_summary.json", summary.command);
        let path = self.dir.join(&name);
        write_json(&path, &summary)?;
        Ok(summary)
    }
}
