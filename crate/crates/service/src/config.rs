use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use edtm_core::assignment::BatchSchedule;
use edtm_core::harness::CostSource;
use edtm_core::ot::SolverConfig;
use serde::Deserialize;

pub const PORT_ENV: &str = "EDTM_PORT";
pub const DATA_DIR_ENV: &str = "EDTM_DATA_DIR";

/// Service settings, read from a TOML file. `EDTM_PORT` and
/// `EDTM_DATA_DIR` override the file.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub data_dir: PathBuf,
    /// Cost source for sessions created without one.
    pub costs: Option<CostSource>,
    /// Defaults for assignment requests.
    pub schedule: BatchSchedule,
    pub solver: SolverConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("edtm-data"),
            costs: None,
            schedule: BatchSchedule::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl ServiceConfig {
    /// Relative paths in the file resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ServiceConfig =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.data_dir.is_relative() {
            cfg.data_dir = base.join(&cfg.data_dir);
        }
        if let Some(costs) = cfg.costs.as_mut() {
            costs.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(port) = var(PORT_ENV) {
            self.port = port
                .parse()
                .with_context(|| format!("{PORT_ENV}={port:?} is not a port"))?;
        }
        if let Some(dir) = var(DATA_DIR_ENV) {
            self.data_dir = PathBuf::from(dir);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.solver.validate()?;
        if self.solver.mass_p.is_some() {
            anyhow::bail!("solver.mass_p is set per request, not in the service config");
        }
        Ok(())
    }
}
