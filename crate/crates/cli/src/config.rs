//! Run configuration and scenario bundle metadata (TOML).
//!
//! Run config keys (all optional; command-line flags override them):
//!
//! ```toml
//! scenarios = ["corpus"]          # bundle directories, or directories of bundles
//! controllers = ["SMPC-FG", "MPC-FG", "MPC-FB", "SMPC-FB", "MPC-Ideal", "RBC"]
//! horizon = 24
//! seed = 2024
//! out = "out"
//! emit_plots = false
//! plot_hour = 12
//! initial_soe = 0.0               # kWh; empty battery if absent
//!
//! [battery]
//! e_min = 0.0
//! e_max = 7.68
//! p_min = -5.12
//! p_max = 5.12
//! eta_ch = 0.98
//! eta_dis = 0.98
//!
//! [solver]
//! max_outer_iterations = 4
//! max_inner_iterations = 300
//! feasibility_tol = 1e-6
//! stationarity_tol = 1e-6
//! multi_start = 1
//! ```
//!
//! A bundle directory holds `netload.csv`, `tariff.csv`, optionally
//! `quantiles.csv`, and `scenario.toml` with the keys of [`ScenarioMeta`].

use std::path::{Path, PathBuf};

use mrv_core::controllers::ControllerKind;
use mrv_core::forecast::SyntheticForecastModel;
use mrv_core::scheduler::SolverOptions;
use mrv_core::synth::HouseholdConfig;
use mrv_core::Battery;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenarios: Vec<PathBuf>,
    pub controllers: Vec<String>,
    pub horizon: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub emit_plots: bool,
    /// Hour whose battery and grid power densities are written with plots.
    pub plot_hour: usize,
    pub initial_soe: Option<f64>,
    pub battery: Battery,
    pub solver: SolverOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenarios: Vec::new(),
            controllers: ControllerKind::ALL
                .iter()
                .map(|k| k.name().to_owned())
                .collect(),
            horizon: 24,
            seed: 2024,
            out: PathBuf::from("out"),
            emit_plots: false,
            plot_hour: 12,
            initial_soe: None,
            battery: Battery::default(),
            solver: SolverOptions::receding_horizon(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        // Relative paths in the file are relative to the file.
        let base = path.parent().unwrap_or(Path::new(""));
        for s in &mut cfg.scenarios {
            if s.is_relative() {
                *s = base.join(&*s);
            }
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn controller_kinds(&self) -> Result<Vec<ControllerKind>> {
        if self.controllers.is_empty() {
            return Err(CliError::Usage("no controllers selected".into()));
        }
        let kinds = self
            .controllers
            .iter()
            .map(|c| c.parse::<ControllerKind>())
            .collect::<Result<Vec<_>, _>>()?;
        let mut unique = kinds.clone();
        unique.sort_unstable();
        unique.dedup();
        if unique.len() != kinds.len() {
            return Err(CliError::Usage("controllers must not repeat".into()));
        }
        Ok(kinds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(CliError::Usage("horizon must be at least 1".into()));
        }
        if self.scenarios.is_empty() {
            return Err(CliError::Usage(
                "no scenario given (use --scenario or `scenarios` in the config)".into(),
            ));
        }
        self.battery.validate()?;
        self.controller_kinds()?;
        Ok(())
    }
}

/// `scenario.toml` of a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioMeta {
    pub name: String,
    /// Seed the bundle was generated with.
    pub seed: Option<u64>,
    /// Forecast error model used when `quantiles.csv` is absent.
    #[serde(default)]
    pub forecast: SyntheticForecastModel,
    /// Generator parameters, kept for provenance.
    pub household: Option<HouseholdConfig>,
}

impl ScenarioMeta {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).expect("scenario metadata serializes");
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }
}
