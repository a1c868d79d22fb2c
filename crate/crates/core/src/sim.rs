//! Receding-horizon simulation and controller tournaments.
//!
//! Every hour the controller plans on the forecasts issued at that hour, the
//! realized net-load is applied through the controller's downstream rule,
//! the battery steps and energy and money are booked from the realized grid
//! power. Near the end of a scenario the horizon shrinks to the hours left.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::{apply, plan, ControllerKind, HourAction, PlanInput};
use crate::error::{Error, Result};
use crate::forecast::{fit_mixture, QuantileForecast};
use crate::scheduler::{Price, SolverOptions};
use crate::{Battery, BatteryState, Mixture};

/// Cost difference, €, below which two controllers share a placement.
pub const RANK_TIE_TOL: f64 = 1e-9;

/// One simulated hour: the forecasts issued then, the truth and the prices.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFrame {
    pub hour: usize,
    /// Mixture forecasts for hours `hour, hour + 1, ...` issued at this hour.
    pub forecasts: Vec<Mixture>,
    /// Realized net-load, kW.
    pub truth: f64,
    pub price: Price,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub frames: Vec<ScenarioFrame>,
}

impl Scenario {
    /// Assembles a scenario, fitting a mixture to every issued quantile forecast.
    ///
    /// `quantiles[t]` holds the forecasts issued at hour `t` for hours `t..`.
    pub fn from_quantiles(
        name: &str,
        truth: &[f64],
        prices: &[Price],
        quantiles: &[Vec<QuantileForecast>],
    ) -> Result<Self> {
        let n = truth.len();
        if prices.len() != n || quantiles.len() != n {
            return Err(Error::Config(format!(
                "scenario {name}: {n} net-load hours, {} price hours, {} forecast origins",
                prices.len(),
                quantiles.len()
            )));
        }
        let forecasts: Vec<Vec<Mixture>> = quantiles
            .par_iter()
            .map(|issued| {
                issued
                    .iter()
                    .map(|q| fit_mixture(q).map(|f| f.mixture))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Self::from_mixtures(name, truth, prices, forecasts)
    }

    pub fn from_mixtures(
        name: &str,
        truth: &[f64],
        prices: &[Price],
        forecasts: Vec<Vec<Mixture>>,
    ) -> Result<Self> {
        let n = truth.len();
        if prices.len() != n || forecasts.len() != n {
            return Err(Error::Config(format!(
                "scenario {name}: series lengths differ"
            )));
        }
        if let Some(i) = truth.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "scenario {name}: net-load at hour {i} is not finite"
            )));
        }
        if let Some(t) = forecasts.iter().position(Vec::is_empty) {
            return Err(Error::Config(format!(
                "scenario {name}: no forecast issued at hour {t}"
            )));
        }
        let frames = forecasts
            .into_iter()
            .enumerate()
            .map(|(hour, forecasts)| ScenarioFrame {
                hour,
                forecasts,
                truth: truth[hour],
                price: prices[hour],
            })
            .collect();
        Ok(Self {
            name: name.into(),
            frames,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn truth(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.truth).collect()
    }
}

/// Settings shared by all episodes of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub spec: Battery,
    /// Planning horizon K, hours.
    pub horizon: usize,
    /// Interval length, hours.
    pub dt: f64,
    /// Starting state of energy, kWh; an empty battery if absent.
    pub initial_soe: Option<f64>,
    pub solver: SolverOptions,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            spec: Battery::default(),
            horizon: 24,
            dt: 1.0,
            initial_soe: None,
            solver: SolverOptions::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1 hour".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        self.initial_state().validate(&self.spec)
    }

    pub fn initial_state(&self) -> BatteryState {
        BatteryState::new(self.initial_soe.unwrap_or(self.spec.e_min))
    }
}

/// Realized values of one hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourRecord {
    pub hour: usize,
    /// kW
    pub p_l: f64,
    /// kW
    pub p_b: f64,
    /// kW
    pub p_g: f64,
    /// State of energy at the start of the hour, kWh.
    pub soe: f64,
    /// Interval and desired grid power of Fixed-Grid actions; setpoint as a
    /// zero-width interval for Fixed-Battery actions; absent for RBC.
    pub pb_lo: Option<f64>,
    pub pb_hi: Option<f64>,
    pub pg_des: Option<f64>,
    pub tightened: bool,
}

/// Energy and money totals of one controller on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub scenario: String,
    pub controller: ControllerKind,
    pub import_kwh: f64,
    pub import_cost_eur: f64,
    pub export_kwh: f64,
    pub export_revenue_eur: f64,
    pub total_cost_eur: f64,
    /// Hours whose action was narrowed to the realized feasible interval.
    pub tightenings: usize,
    pub final_soe: f64,
    pub trace: Vec<HourRecord>,
}

/// Runs one controller over a scenario.
pub fn run_episode(
    scenario: &Scenario,
    controller: ControllerKind,
    cfg: &EpisodeConfig,
) -> Result<EpisodeReport> {
    cfg.validate()?;
    let n = scenario.len();
    let truth = scenario.truth();
    let prices: Vec<Price> = scenario.frames.iter().map(|f| f.price).collect();
    let mut state = cfg.initial_state();
    let mut report = EpisodeReport {
        scenario: scenario.name.clone(),
        controller,
        import_kwh: 0.0,
        import_cost_eur: 0.0,
        export_kwh: 0.0,
        export_revenue_eur: 0.0,
        total_cost_eur: 0.0,
        tightenings: 0,
        final_soe: state.soe,
        trace: Vec::with_capacity(n),
    };
    for (t, frame) in scenario.frames.iter().enumerate() {
        let k = cfg.horizon.min(n - t).min(frame.forecasts.len());
        let input = PlanInput {
            forecasts: &frame.forecasts[..k],
            truth: &truth[t..t + k],
            prices: &prices[t..t + k],
            spec: &cfg.spec,
            state,
            dt: cfg.dt,
            solver: &cfg.solver,
        };
        let action = plan(controller, &input, t)?;
        let r = apply(&action, &cfg.spec, state, cfg.dt, frame.truth);
        let (pb_lo, pb_hi, pg_des) = match action {
            HourAction::Grid(p) => (Some(p.pb_lo), Some(p.pb_hi), Some(p.pg_des)),
            HourAction::Battery(p) => (Some(p), Some(p), None),
            HourAction::Rule => (None, None, None),
        };
        if r.tightened {
            log::debug!(
                "{} {controller} hour {t}: action narrowed to the feasible interval",
                scenario.name
            );
        }
        report.trace.push(HourRecord {
            hour: frame.hour,
            p_l: frame.truth,
            p_b: r.p_b,
            p_g: r.p_g,
            soe: state.soe,
            pb_lo,
            pb_hi,
            pg_des,
            tightened: r.tightened,
        });
        report.tightenings += usize::from(r.tightened);
        let import = r.p_g.max(0.0) * cfg.dt;
        let export = -r.p_g.min(0.0) * cfg.dt;
        report.import_kwh += import;
        report.export_kwh += export;
        report.import_cost_eur += frame.price.c_buy * import;
        report.export_revenue_eur += frame.price.c_sell * export;
        state = cfg.spec.step(state, r.p_b, cfg.dt)?;
    }
    report.total_cost_eur = report.import_cost_eur - report.export_revenue_eur;
    report.final_soe = state.soe;
    Ok(report)
}

/// Percentage cost increase over the ideal controller.
///
/// The denominator is the magnitude of the ideal cost, so that a positive
/// regret always means "more expensive" even when exports make the ideal
/// cost negative. Undefined for a zero ideal cost.
pub fn regret_pct(total: f64, ideal: f64) -> Option<f64> {
    (ideal.abs() > 1e-12).then(|| 100.0 * (total - ideal) / ideal.abs())
}

/// 1-based placements by ascending cost; ties within [`RANK_TIE_TOL`] share
/// the mean of their placements.
pub fn placements(costs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; costs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && costs[order[j]] - costs[order[j - 1]] <= RANK_TIE_TOL {
            j += 1;
        }
        let shared = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = shared;
        }
        i = j;
    }
    ranks
}

/// Table row for one controller, averaged over scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub controller: ControllerKind,
    pub import_kwh: f64,
    pub import_cost_eur: f64,
    pub export_kwh: f64,
    pub export_revenue_eur: f64,
    pub total_cost_eur: f64,
    /// Regret of the mean total cost against MPC-Ideal's; absent without MPC-Ideal.
    pub regret_pct: Option<f64>,
    /// Mean placement across scenarios.
    pub rank: f64,
    pub tightenings: usize,
}

/// One scenario's results, controllers in tournament order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: String,
    pub episodes: Vec<EpisodeReport>,
    pub regret_pct: Vec<Option<f64>>,
    pub placements: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub controllers: Vec<ControllerKind>,
    pub scenarios: Vec<ScenarioResult>,
    pub summary: Vec<SummaryRow>,
}

impl SimulationReport {
    pub fn row(&self, kind: ControllerKind) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.controller == kind)
    }
}

/// Runs every controller on every scenario and ranks them.
///
/// Episodes are independent and run in parallel; results are collected in
/// input order, so the report does not depend on scheduling.
pub fn tournament(
    scenarios: &[Scenario],
    controllers: &[ControllerKind],
    cfg: &EpisodeConfig,
) -> Result<SimulationReport> {
    if scenarios.is_empty() {
        return Err(Error::Config(
            "a tournament needs at least one scenario".into(),
        ));
    }
    if controllers.len() < 2 {
        return Err(Error::Config(
            "a tournament needs at least two controllers".into(),
        ));
    }
    let mut unique = controllers.to_vec();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != controllers.len() {
        return Err(Error::Config("controllers must be distinct".into()));
    }
    cfg.validate()?;

    let jobs: Vec<(usize, ControllerKind)> = (0..scenarios.len())
        .flat_map(|s| controllers.iter().map(move |&c| (s, c)))
        .collect();
    let mut episodes: Vec<EpisodeReport> = jobs
        .par_iter()
        .map(|&(s, c)| run_episode(&scenarios[s], c, cfg))
        .collect::<Result<_>>()?;

    let ideal = controllers.iter().position(|c| c.is_ideal());
    let nc = controllers.len();
    let mut results = Vec::with_capacity(scenarios.len());
    for s in (0..scenarios.len()).rev() {
        let eps: Vec<EpisodeReport> = episodes.drain(s * nc..).collect();
        let costs: Vec<f64> = eps.iter().map(|e| e.total_cost_eur).collect();
        let regret: Vec<Option<f64>> = match ideal {
            Some(i) => costs.iter().map(|&c| regret_pct(c, costs[i])).collect(),
            None => vec![None; nc],
        };
        for (e, r) in eps.iter().zip(&regret) {
            if r.is_some_and(|r| r < 0.0) {
                log::info!(
                    "{}: {} beats the ideal controller (regret {:.3} %)",
                    e.scenario,
                    e.controller,
                    r.unwrap()
                );
            }
        }
        results.push(ScenarioResult {
            scenario: scenarios[s].name.clone(),
            placements: placements(&costs),
            episodes: eps,
            regret_pct: regret,
        });
    }
    results.reverse();

    let m = scenarios.len() as f64;
    let mean = |c: usize, f: &dyn Fn(&EpisodeReport) -> f64| {
        results.iter().map(|r| f(&r.episodes[c])).sum::<f64>() / m
    };
    let mut summary: Vec<SummaryRow> = (0..nc)
        .map(|c| SummaryRow {
            controller: controllers[c],
            import_kwh: mean(c, &|e| e.import_kwh),
            import_cost_eur: mean(c, &|e| e.import_cost_eur),
            export_kwh: mean(c, &|e| e.export_kwh),
            export_revenue_eur: mean(c, &|e| e.export_revenue_eur),
            total_cost_eur: mean(c, &|e| e.total_cost_eur),
            regret_pct: None,
            rank: results.iter().map(|r| r.placements[c]).sum::<f64>() / m,
            tightenings: results.iter().map(|r| r.episodes[c].tightenings).sum(),
        })
        .collect();
    if let Some(i) = ideal {
        let base = summary[i].total_cost_eur;
        for row in &mut summary {
            row.regret_pct = regret_pct(row.total_cost_eur, base);
        }
    }
    Ok(SimulationReport {
        controllers: controllers.to_vec(),
        scenarios: results,
        summary,
    })
}
