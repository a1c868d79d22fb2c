//! `mrvsim`: generate scenarios, fit forecasts, build tariffs and run controller tournaments.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mrv_core::synth::Profile;
use mrv_core::tariff::{DEFAULT_BUY_MEAN, DEFAULT_SELL_MEAN};

use crate::commands::GenerateArgs;
use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "mrvsim",
    version,
    about = "Battery scheduling with mixed random variables"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic scenario bundle (or the ten-scenario corpus).
    Generate(GenerateCmd),
    /// Run controllers on scenario bundles and write cost reports.
    Run(RunCmd),
    /// Fit two-component Gaussian mixtures to a quantile forecast file.
    FitForecast(FitCmd),
    /// Build import and export prices from a wholesale price series.
    Tariff(TariffCmd),
}

#[derive(Debug, Args)]
pub struct GenerateCmd {
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long, default_value_t = 14)]
    pub days: usize,
    /// no-pv, winter-pv, spring-pv or summer-pv.
    #[arg(long, default_value = "spring-pv")]
    pub profile: Profile,
    #[arg(long, default_value = "scenario")]
    pub out: PathBuf,
    /// Hours covered by each issued forecast.
    #[arg(long, default_value_t = 24)]
    pub horizon: usize,
    /// Write the ten-scenario corpus into subdirectories of `--out`.
    #[arg(long)]
    pub corpus: bool,
    /// Skip quantiles.csv; forecasts are then synthesized when running.
    #[arg(long)]
    pub no_quantiles: bool,
}

#[derive(Debug, Args)]
pub struct RunCmd {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Bundle directory or directory of bundles (repeatable).
    #[arg(long)]
    pub scenario: Vec<PathBuf>,
    /// Comma-separated controller kinds, e.g. SMPC-FG,MPC-Ideal,RBC.
    #[arg(long, value_delimiter = ',')]
    pub controllers: Vec<String>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write time series and density tables for plotting.
    #[arg(long)]
    pub emit_plots: bool,
    #[arg(long)]
    pub plot_hour: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitCmd {
    #[arg(long)]
    pub quantiles: PathBuf,
    #[arg(long, default_value = "mixtures.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TariffCmd {
    /// CSV with `timestamp,price_eur_per_kwh`.
    #[arg(long)]
    pub wholesale: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BUY_MEAN)]
    pub buy_mean: f64,
    #[arg(long, default_value_t = DEFAULT_SELL_MEAN)]
    pub sell_mean: f64,
    #[arg(long, default_value = "tariff.csv")]
    pub out: PathBuf,
}

impl RunCmd {
    /// Config file values overridden by the given flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if !self.scenario.is_empty() {
            cfg.scenarios = self.scenario.clone();
        }
        if !self.controllers.is_empty() {
            cfg.controllers = self
                .controllers
                .iter()
                .map(|c| c.trim().to_owned())
                .collect();
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.emit_plots |= self.emit_plots;
        if let Some(h) = self.plot_hour {
            cfg.plot_hour = h;
        }
        Ok(cfg)
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(g) => {
            let dirs = commands::generate(&GenerateArgs {
                seed: g.seed,
                days: g.days,
                profile: g.profile,
                out: g.out.clone(),
                horizon: g.horizon,
                corpus: g.corpus,
                no_quantiles: g.no_quantiles,
            })?;
            for d in dirs {
                println!("{}", d.display());
            }
        }
        Command::Run(r) => {
            let cfg = r.resolve()?;
            let report = commands::run(&cfg)?;
            println!(
                "{:<10} {:>10} {:>10} {:>8} {:>6}",
                "controller", "cost_eur", "import_kwh", "regret%", "rank"
            );
            for row in &report.summary {
                let regret = row
                    .regret_pct
                    .map_or_else(|| "-".to_owned(), |r| format!("{r:.2}"));
                println!(
                    "{:<10} {:>10.3} {:>10.2} {:>8} {:>6.2}",
                    row.controller.name(),
                    row.total_cost_eur,
                    row.import_kwh,
                    regret,
                    row.rank
                );
            }
            println!("reports in {}", cfg.out.display());
        }
        Command::FitForecast(f) => {
            let n = commands::fit_forecast(&f.quantiles, &f.out)?;
            println!("fitted {n} forecasts into {}", f.out.display());
        }
        Command::Tariff(t) => {
            if !(t.buy_mean.is_finite() && t.sell_mean.is_finite()) {
                return Err(CliError::Usage("tariff means must be finite".into()));
            }
            commands::build_tariff(&t.wholesale, t.buy_mean, t.sell_mean, &t.out)?;
            println!("wrote {}", t.out.display());
        }
    }
    Ok(())
}
