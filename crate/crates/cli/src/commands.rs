//! Subcommand implementations. All file I/O of the workspace happens here.

use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use mrv_core::controllers::ControllerKind;
use mrv_core::forecast::{fit_mixture, synthesize_rolling, QuantileForecast};
use mrv_core::mixedrv::{battery_density, boundary_probabilities, grid_density, tracking_mass};
use mrv_core::scheduler::{Price, SolverOptions};
use mrv_core::sim::{
    run_episode, tournament, EpisodeConfig, EpisodeReport, Scenario, ScenarioResult,
    SimulationReport, SummaryRow,
};
use mrv_core::synth::{self, Bundle, HouseholdConfig, Profile, ScenarioConfig};
use mrv_core::tariff;
use mrv_core::{Battery, BatteryState, Policy};
use serde::Serialize;

use crate::config::{RunConfig, ScenarioMeta};
use crate::error::{CliError, Result};
use crate::io;

pub const NETLOAD_FILE: &str = "netload.csv";
pub const TARIFF_FILE: &str = "tariff.csv";
pub const QUANTILE_FILE: &str = "quantiles.csv";
pub const META_FILE: &str = "scenario.toml";

/// First timestamp of a generated scenario: midnight of the profile's season in 2023.
pub fn season_start(profile: Profile) -> NaiveDateTime {
    NaiveDate::from_yo_opt(2023, profile.start_day_of_year())
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid day of year")
}

#[derive(Debug, Clone)]
pub struct GenerateArgs {
    pub seed: u64,
    pub days: usize,
    pub profile: Profile,
    pub out: PathBuf,
    pub horizon: usize,
    /// Write the ten-scenario corpus instead of a single bundle.
    pub corpus: bool,
    /// Leave out `quantiles.csv`; forecasts are then synthesized at run time.
    pub no_quantiles: bool,
}

fn write_bundle(dir: &Path, b: &Bundle, cfg: &ScenarioConfig, with_quantiles: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let start = season_start(cfg.household.profile);
    let times = io::hourly(start, b.household.netload.len());
    io::write_series(
        &dir.join(NETLOAD_FILE),
        "netload_kw",
        &times,
        &b.household.netload,
    )?;
    io::write_tariff(&dir.join(TARIFF_FILE), &times, &b.tariff)?;
    if with_quantiles {
        io::write_quantiles(&dir.join(QUANTILE_FILE), start, &b.quantiles)?;
    }
    let meta = ScenarioMeta {
        name: cfg.name.clone(),
        seed: Some(cfg.seed),
        forecast: cfg.forecast,
        household: Some(cfg.household.clone()),
    };
    meta.save(&dir.join(META_FILE))
}

/// Writes one bundle into `out`, or the corpus into `out/<name>/`; returns the bundle directories.
pub fn generate(args: &GenerateArgs) -> Result<Vec<PathBuf>> {
    if args.days == 0 {
        return Err(CliError::Usage("--days must be at least 1".into()));
    }
    if args.horizon == 0 {
        return Err(CliError::Usage("--horizon must be at least 1".into()));
    }
    let configs = if args.corpus {
        synth::corpus(args.seed, args.days)
    } else {
        vec![ScenarioConfig {
            name: format!("{}-{}", args.profile, args.seed),
            seed: args.seed,
            household: HouseholdConfig {
                profile: args.profile,
                days: args.days,
                ..HouseholdConfig::default()
            },
            forecast: Default::default(),
        }]
    };
    let mut dirs = Vec::new();
    for cfg in &configs {
        let b = synth::bundle(cfg, args.horizon)?;
        let dir = if args.corpus {
            args.out.join(&cfg.name)
        } else {
            args.out.clone()
        };
        write_bundle(&dir, &b, cfg, !args.no_quantiles)?;
        log::info!("wrote {}", dir.display());
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Bundle directories named by `paths`: each path is a bundle or a directory of bundles.
pub fn expand_scenarios(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.join(NETLOAD_FILE).is_file() {
            out.push(p.clone());
            continue;
        }
        let entries = std::fs::read_dir(p).map_err(|e| CliError::io(p, e))?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| d.join(NETLOAD_FILE).is_file())
            .collect();
        if found.is_empty() {
            return Err(CliError::Data(format!(
                "{}: no {NETLOAD_FILE} here or in any subdirectory",
                p.display()
            )));
        }
        found.sort();
        out.extend(found);
    }
    Ok(out)
}

/// A scenario read from disk together with its clock.
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub start: NaiveDateTime,
}

/// Reads a bundle; forecasts are synthesized from `seed` when it has no quantile file.
pub fn load_bundle(dir: &Path, horizon: usize, seed: u64) -> Result<LoadedScenario> {
    let meta_path = dir.join(META_FILE);
    let meta = if meta_path.is_file() {
        ScenarioMeta::load(&meta_path)?
    } else {
        let name = dir
            .file_name()
            .map_or_else(|| "scenario".into(), |n| n.to_string_lossy().into_owned());
        ScenarioMeta {
            name,
            seed: None,
            forecast: Default::default(),
            household: None,
        }
    };
    let netload_path = dir.join(NETLOAD_FILE);
    let (times, truth) = io::read_series(&netload_path, "netload_kw")?;
    let tariff_path = dir.join(TARIFF_FILE);
    let tf = io::read_tariff(&tariff_path)?;
    if tf.times != times {
        return Err(CliError::Data(format!(
            "{}: timestamps differ from {}",
            tariff_path.display(),
            netload_path.display()
        )));
    }
    let prices: Vec<Price> = tf
        .c_buy
        .iter()
        .zip(&tf.c_sell)
        .map(|(&c_buy, &c_sell)| Price { c_buy, c_sell })
        .collect();
    let q_path = dir.join(QUANTILE_FILE);
    let quantiles = if q_path.is_file() {
        io::read_quantiles(&q_path, times[0], truth.len(), horizon)?
    } else {
        log::info!(
            "{}: no {QUANTILE_FILE}, synthesizing forecasts",
            dir.display()
        );
        synthesize_rolling(&truth, &meta.forecast, horizon, seed)?
    };
    let scenario = Scenario::from_quantiles(&meta.name, &truth, &prices, &quantiles)?;
    Ok(LoadedScenario {
        scenario,
        start: times[0],
    })
}

#[derive(Serialize)]
struct ScenarioRow<'a> {
    scenario: &'a str,
    controller: ControllerKind,
    import_kwh: f64,
    import_cost_eur: f64,
    export_kwh: f64,
    export_revenue_eur: f64,
    total_cost_eur: f64,
    regret_pct: Option<f64>,
    placement: f64,
    tightenings: usize,
}

#[derive(Serialize)]
struct TraceRow {
    hour: usize,
    timestamp: String,
    p_l: f64,
    p_b: f64,
    p_g: f64,
    soe: f64,
    pb_lo: Option<f64>,
    pb_hi: Option<f64>,
    pg_des: Option<f64>,
    tightened: bool,
}

#[derive(Serialize)]
struct DensityRow {
    variable: &'static str,
    kind: &'static str,
    z: f64,
    value: f64,
}

#[derive(Serialize)]
struct Settings<'a> {
    controllers: &'a [ControllerKind],
    horizon: usize,
    seed: u64,
    initial_soe: Option<f64>,
    battery: &'a Battery,
    solver: &'a SolverOptions,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    settings: Settings<'a>,
    summary: &'a [SummaryRow],
    scenarios: Vec<JsonScenario<'a>>,
}

#[derive(Serialize)]
struct JsonScenario<'a> {
    scenario: &'a str,
    results: Vec<ScenarioRow<'a>>,
}

fn scenario_rows(r: &ScenarioResult) -> Vec<ScenarioRow<'_>> {
    r.episodes
        .iter()
        .zip(&r.regret_pct)
        .zip(&r.placements)
        .map(|((e, &regret_pct), &placement)| ScenarioRow {
            scenario: &r.scenario,
            controller: e.controller,
            import_kwh: e.import_kwh,
            import_cost_eur: e.import_cost_eur,
            export_kwh: e.export_kwh,
            export_revenue_eur: e.export_revenue_eur,
            total_cost_eur: e.total_cost_eur,
            regret_pct,
            placement,
            tightenings: e.tightenings,
        })
        .collect()
}

/// Report of a single controller: no placements to compare, no regret.
fn single_report(
    scenarios: &[Scenario],
    kind: ControllerKind,
    cfg: &EpisodeConfig,
) -> Result<SimulationReport> {
    let episodes = scenarios
        .iter()
        .map(|s| run_episode(s, kind, cfg))
        .collect::<mrv_core::Result<Vec<EpisodeReport>>>()?;
    let m = episodes.len() as f64;
    let mean = |f: &dyn Fn(&EpisodeReport) -> f64| episodes.iter().map(f).sum::<f64>() / m;
    let row = SummaryRow {
        controller: kind,
        import_kwh: mean(&|e| e.import_kwh),
        import_cost_eur: mean(&|e| e.import_cost_eur),
        export_kwh: mean(&|e| e.export_kwh),
        export_revenue_eur: mean(&|e| e.export_revenue_eur),
        total_cost_eur: mean(&|e| e.total_cost_eur),
        regret_pct: None,
        rank: 1.0,
        tightenings: episodes.iter().map(|e| e.tightenings).sum(),
    };
    let results = episodes
        .into_iter()
        .map(|e| ScenarioResult {
            scenario: e.scenario.clone(),
            episodes: vec![e],
            regret_pct: vec![None],
            placements: vec![1.0],
        })
        .collect();
    Ok(SimulationReport {
        controllers: vec![kind],
        scenarios: results,
        summary: vec![row],
    })
}

fn safe_name(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_plots(
    dir: &Path,
    loaded: &LoadedScenario,
    report: &ScenarioResult,
    cfg: &EpisodeConfig,
    plot_hour: usize,
) -> Result<()> {
    #[derive(Serialize)]
    struct SeriesRow<'a> {
        controller: &'a str,
        hour: usize,
        p_l: f64,
        p_b: f64,
        p_g: f64,
        soe: f64,
    }
    let series: Vec<SeriesRow> = report
        .episodes
        .iter()
        .flat_map(|e| {
            e.trace.iter().map(|h| SeriesRow {
                controller: e.controller.name(),
                hour: h.hour,
                p_l: h.p_l,
                p_b: h.p_b,
                p_g: h.p_g,
                soe: h.soe,
            })
        })
        .collect();
    io::write_rows(&dir.join("plot_timeseries.csv"), &series)?;

    let frames = &loaded.scenario.frames;
    let Some(frame) = frames.get(plot_hour) else {
        return Err(CliError::Usage(format!(
            "plot hour {plot_hour} is outside the {}-hour scenario",
            frames.len()
        )));
    };
    let f = &frame.forecasts[0];
    for e in &report.episodes {
        let rec = &e.trace[plot_hour];
        // The rule-based controller follows the whole feasible interval with zero grid power.
        let (lo, hi) = match (rec.pb_lo, rec.pb_hi) {
            (Some(lo), Some(hi)) => (lo, hi),
            _ => cfg
                .spec
                .feasible_interval(BatteryState::new(rec.soe), cfg.dt),
        };
        let pol = Policy::new(lo, hi, rec.pg_des.unwrap_or(0.0))?;
        let (q_lo, q_hi) = (f.quantile(1e-3)?, f.quantile(1.0 - 1e-3)?);
        let (z_min, z_max) = (
            q_lo.min(lo) - hi.max(0.0) - 0.5,
            q_hi.max(hi) - lo.min(0.0) + 0.5,
        );
        let n = 400;
        let mut rows = Vec::with_capacity(2 * n + 3);
        for i in 0..=n {
            let z = z_min + (z_max - z_min) * i as f64 / n as f64;
            rows.push(DensityRow {
                variable: "P_B",
                kind: "density",
                z,
                value: battery_density(f, &pol, z),
            });
            rows.push(DensityRow {
                variable: "P_G",
                kind: "density",
                z,
                value: grid_density(f, &pol, z),
            });
        }
        let bp = boundary_probabilities(f, &pol);
        rows.push(DensityRow {
            variable: "P_B",
            kind: "mass",
            z: lo,
            value: bp.p1,
        });
        rows.push(DensityRow {
            variable: "P_B",
            kind: "mass",
            z: hi,
            value: bp.p2,
        });
        rows.push(DensityRow {
            variable: "P_G",
            kind: "mass",
            z: pol.pg_des,
            value: tracking_mass(f, &pol),
        });
        io::write_rows(
            &dir.join(format!(
                "plot_density_{}.csv",
                safe_name(e.controller.name())
            )),
            &rows,
        )?;
    }
    Ok(())
}

/// Runs the configured controllers on the configured scenarios and writes the reports.
pub fn run(cfg: &RunConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    let kinds = cfg.controller_kinds()?;
    let dirs = expand_scenarios(&cfg.scenarios)?;
    let loaded = dirs
        .iter()
        .enumerate()
        .map(|(i, d)| load_bundle(d, cfg.horizon, cfg.seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut names: Vec<&str> = loaded.iter().map(|l| l.scenario.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Data("scenario names must be unique".into()));
    }
    let episode = EpisodeConfig {
        spec: cfg.battery,
        horizon: cfg.horizon,
        dt: 1.0,
        initial_soe: cfg.initial_soe,
        solver: SolverOptions {
            seed: cfg.seed,
            ..cfg.solver
        },
    };
    let scenarios: Vec<Scenario> = loaded.iter().map(|l| l.scenario.clone()).collect();
    let report = if kinds.len() == 1 {
        single_report(&scenarios, kinds[0], &episode)?
    } else {
        tournament(&scenarios, &kinds, &episode)?
    };

    let out = &cfg.out;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    io::write_rows(&out.join("report.csv"), &report.summary)?;
    let rows: Vec<ScenarioRow> = report.scenarios.iter().flat_map(scenario_rows).collect();
    io::write_rows(&out.join("scenarios.csv"), &rows)?;
    let json = JsonReport {
        settings: Settings {
            controllers: &report.controllers,
            horizon: cfg.horizon,
            seed: cfg.seed,
            initial_soe: cfg.initial_soe,
            battery: &cfg.battery,
            solver: &episode.solver,
        },
        summary: &report.summary,
        scenarios: report
            .scenarios
            .iter()
            .map(|r| JsonScenario {
                scenario: &r.scenario,
                results: scenario_rows(r),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&json).map_err(|e| CliError::Data(e.to_string()))?;
    let json_path = out.join("report.json");
    std::fs::write(&json_path, text + "\n").map_err(|e| CliError::io(&json_path, e))?;

    for (l, r) in loaded.iter().zip(&report.scenarios) {
        let dir = out.join(safe_name(&r.scenario));
        for e in &r.episodes {
            let trace: Vec<TraceRow> = e
                .trace
                .iter()
                .map(|h| TraceRow {
                    hour: h.hour,
                    timestamp: io::format_timestamp(l.start + Duration::hours(h.hour as i64)),
                    p_l: h.p_l,
                    p_b: h.p_b,
                    p_g: h.p_g,
                    soe: h.soe,
                    pb_lo: h.pb_lo,
                    pb_hi: h.pb_hi,
                    pg_des: h.pg_des,
                    tightened: h.tightened,
                })
                .collect();
            io::write_rows(
                &dir.join(format!("trace_{}.csv", safe_name(e.controller.name()))),
                &trace,
            )?;
        }
        if cfg.emit_plots {
            write_plots(&dir, l, r, &episode, cfg.plot_hour)?;
        }
    }
    Ok(report)
}

#[derive(Serialize)]
struct FitRow {
    issued: Option<String>,
    timestamp: String,
    w1: f64,
    mu1: f64,
    sigma1: f64,
    w2: f64,
    mu2: f64,
    sigma2: f64,
    mean: f64,
    rms_kw: f64,
    degenerate: bool,
}

/// Fits a two-component mixture to every row of a quantile file.
pub fn fit_forecast(quantiles: &Path, out: &Path) -> Result<usize> {
    let rows = io::read_quantile_rows(quantiles)?;
    let mut fits = Vec::with_capacity(rows.len());
    for (i, r) in rows.into_iter().enumerate() {
        let q = QuantileForecast::new(i, r.quantiles)
            .map_err(|e| CliError::Data(format!("{}:{}: {e}", quantiles.display(), r.line)))?;
        let fit = fit_mixture(&q)
            .map_err(|e| CliError::Data(format!("{}:{}: {e}", quantiles.display(), r.line)))?;
        if fit.degenerate {
            log::warn!(
                "{}:{}: constant quantiles, near-delta fit",
                quantiles.display(),
                r.line
            );
        }
        let [a, b] = *fit.mixture.components();
        fits.push(FitRow {
            issued: r.issued.map(io::format_timestamp),
            timestamp: io::format_timestamp(r.target),
            w1: a.weight,
            mu1: a.mean,
            sigma1: a.stdev,
            w2: b.weight,
            mu2: b.mean,
            sigma2: b.stdev,
            mean: fit.mixture.mean(),
            rms_kw: fit.rms,
            degenerate: fit.degenerate,
        });
    }
    io::write_rows(out, &fits)?;
    Ok(fits.len())
}

/// Retail tariff from a wholesale price file.
pub fn build_tariff(wholesale: &Path, buy_mean: f64, sell_mean: f64, out: &Path) -> Result<()> {
    let (times, prices) = io::read_series(wholesale, "price_eur_per_kwh")?;
    let t = tariff::build(&prices, buy_mean, sell_mean)?;
    io::write_tariff(out, &times, &t)
}
