//! Deterministic battery schedule on point forecasts, solved as an LP.
//!
//! Per hour: charge magnitude `chg`, discharge `dis`, import `imp` and export
//! `exp`, all nonnegative, with `dis - chg + imp - exp = p_L` and the state of
//! energy kept in its window. With `c_buy >= c_sell >= 0` the LP never gains
//! from simultaneous charge/discharge or import/export, so the relaxation is
//! exact; a tiny throughput penalty breaks ties towards the netted solution.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use super::{Price, SolverStatus};
use crate::{Battery, BatteryState};

const TIE_BREAK: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicPlan {
    /// Battery power per hour, kW.
    pub battery: Vec<f64>,
    /// Grid power per hour, kW (`netload - battery`).
    pub grid: Vec<f64>,
    /// State of energy at the start of each hour plus the final one (K + 1 values).
    pub soe: Vec<f64>,
    /// Energy cost of the plan, €.
    pub cost: f64,
}

/// Cost of a grid power series under hourly prices.
pub fn grid_cost(grid: &[f64], prices: &[Price], dt: f64) -> f64 {
    grid.iter()
        .zip(prices)
        .map(|(&g, p)| dt * (p.c_buy * g.max(0.0) + p.c_sell * g.min(0.0)))
        .sum()
}

/// Optimal deterministic schedule for a known net-load trajectory.
pub fn solve_deterministic(
    netload: &[f64],
    prices: &[Price],
    spec: &Battery,
    state: BatteryState,
    dt: f64,
    terminal_soe_min: Option<f64>,
) -> Result<DeterministicPlan, SolverStatus> {
    assert_eq!(
        netload.len(),
        prices.len(),
        "netload and price horizons differ"
    );
    if spec.validate().is_err() || state.validate(spec).is_err() || !(dt > 0.0) {
        return Err(SolverStatus::Infeasible);
    }
    let k = netload.len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut vars = Vec::with_capacity(k);
    for (h, price) in prices.iter().enumerate() {
        let (lo, hi) = if h == 0 {
            spec.feasible_interval(state, dt)
        } else {
            (spec.p_min, spec.p_max)
        };
        let chg = lp.add_var(TIE_BREAK, (0.0, -lo));
        let dis = lp.add_var(TIE_BREAK, (0.0, hi));
        let imp = lp.add_var(dt * price.c_buy + TIE_BREAK, (0.0, f64::INFINITY));
        let exp = lp.add_var(-dt * price.c_sell + TIE_BREAK, (0.0, f64::INFINITY));
        lp.add_constraint(
            &[(chg, -1.0), (dis, 1.0), (imp, 1.0), (exp, -1.0)],
            ComparisonOp::Eq,
            netload[h],
        );
        vars.push((chg, dis, imp, exp));
    }
    // Cumulative energy: e_k = e0 + Σ_{j<k} (chg_j η_ch - dis_j / η_dis) dt.
    for h in 1..=k {
        let terms: Vec<_> = vars[..h]
            .iter()
            .flat_map(|&(chg, dis, _, _)| [(chg, spec.eta_ch * dt), (dis, -dt / spec.eta_dis)])
            .collect();
        lp.add_constraint(terms.as_slice(), ComparisonOp::Le, spec.e_max - state.soe);
        lp.add_constraint(terms.as_slice(), ComparisonOp::Ge, spec.e_min - state.soe);
        if h == k {
            if let Some(t) = terminal_soe_min {
                lp.add_constraint(terms.as_slice(), ComparisonOp::Ge, t - state.soe);
            }
        }
    }
    let solution = match lp.solve() {
        Ok(outcome) => outcome
            .into_solution()
            .map_err(|_| SolverStatus::MaxIterations)?,
        Err(microlp::Error::Infeasible) => return Err(SolverStatus::Infeasible),
        Err(_) => return Err(SolverStatus::MaxIterations),
    };

    // Net the solution and replay it through the battery model.
    let mut battery = Vec::with_capacity(k);
    let mut grid = Vec::with_capacity(k);
    let mut soe = Vec::with_capacity(k + 1);
    let mut e = state;
    soe.push(e.soe);
    for (h, &(chg, dis, _, _)) in vars.iter().enumerate() {
        let (lo, hi) = spec.feasible_interval(e, dt);
        let p_b = (solution.var_value(dis) - solution.var_value(chg))
            .max(lo)
            .min(hi);
        battery.push(p_b);
        grid.push(netload[h] - p_b);
        e = spec
            .step(e, p_b, dt)
            .expect("clamped to the feasible interval");
        soe.push(e.soe);
    }
    let cost = grid_cost(&grid, prices, dt);
    Ok(DeterministicPlan {
        battery,
        grid,
        soe,
        cost,
    })
}
