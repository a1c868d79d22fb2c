//! Stochastic schedule of fixed battery setpoints.
//!
//! The battery executes `p_b(k)` exactly and the grid absorbs every net-load
//! deviation, so `P_G = P_L - p_b`. The expected cost
//! `Σ_k dt (c_buy E[max(P_G, 0)] + c_sell E[min(P_G, 0)])` is convex in `p_b`.
//! Variables per hour are the charge part `ch <= 0` and the discharge part
//! `dis >= 0`; the state of energy is linear in them.

use super::{solve_deterministic, HorizonProblem, SolverOptions, SolverStatus, IMPROVEMENT_TOL};
use crate::gmix::Bound;
use crate::mixedrv::COMPLEMENTARITY_EPS;
use crate::nlp::{self, AlStatus, Problem};
use crate::Mixture;

#[derive(Debug, Clone, PartialEq)]
pub struct FixedBatteryPlan {
    /// Battery setpoints, kW.
    pub battery: Vec<f64>,
    /// Expected state of energy, K + 1 values.
    pub expected_soe: Vec<f64>,
    pub expected_cost: f64,
    pub solver_status: SolverStatus,
}

/// Expected cost of one hour with the battery fixed at `p_b`, before the `dt` factor.
pub fn hour_cost(f: &Mixture, p_b: f64, c_buy: f64, c_sell: f64) -> f64 {
    let buy = f.partial_expectation_unchecked(Bound::Finite(0.0), Bound::PosInf, p_b);
    let sell = f.partial_expectation_unchecked(Bound::NegInf, Bound::Finite(0.0), p_b);
    c_buy * buy + c_sell * sell
}

fn hour_cost_slope(f: &Mixture, p_b: f64, c_buy: f64, c_sell: f64) -> f64 {
    -c_buy * f.sf(p_b) - c_sell * f.cdf(p_b)
}

/// Expected cost of a setpoint sequence, €.
pub fn objective(prob: &HorizonProblem, battery: &[f64]) -> f64 {
    prob.frames
        .iter()
        .zip(battery)
        .map(|(fr, &p)| prob.dt * hour_cost(&fr.forecast, p, fr.price.c_buy, fr.price.c_sell))
        .sum()
}

struct SetpointNlp<'a> {
    prob: &'a HorizonProblem,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<'a> SetpointNlp<'a> {
    fn new(prob: &'a HorizonProblem) -> Self {
        let spec = &prob.spec;
        let (lo0, hi0) = spec.feasible_interval(prob.initial_state, prob.dt);
        let mut lower = Vec::with_capacity(2 * prob.horizon());
        let mut upper = Vec::with_capacity(2 * prob.horizon());
        for k in 0..prob.horizon() {
            let (lo, hi) = if k == 0 {
                (lo0, hi0)
            } else {
                (spec.p_min, spec.p_max)
            };
            lower.extend_from_slice(&[lo, 0.0]);
            upper.extend_from_slice(&[0.0, hi]);
        }
        Self { prob, lower, upper }
    }

    fn charge_gain(&self) -> f64 {
        -self.prob.spec.eta_ch * self.prob.dt
    }

    fn discharge_gain(&self) -> f64 {
        -self.prob.dt / self.prob.spec.eta_dis
    }
}

impl Problem for SetpointNlp<'_> {
    fn dim(&self) -> usize {
        2 * self.prob.horizon()
    }

    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn num_constraints(&self) -> usize {
        3 * self.prob.horizon() + usize::from(self.prob.terminal_soe_min.is_some())
    }

    fn evaluate(&self, x: &[f64], cons: &mut [f64]) -> f64 {
        let prob = self.prob;
        let spec = &prob.spec;
        let mut e = prob.initial_state.soe;
        let mut cost = 0.0;
        for (k, fr) in prob.frames.iter().enumerate() {
            let (ch, dis) = (x[2 * k], x[2 * k + 1]);
            cost += prob.dt * hour_cost(&fr.forecast, ch + dis, fr.price.c_buy, fr.price.c_sell);
            e += self.charge_gain() * ch + self.discharge_gain() * dis;
            cons[3 * k] = e - spec.e_max;
            cons[3 * k + 1] = spec.e_min - e;
            cons[3 * k + 2] = -ch * dis - COMPLEMENTARITY_EPS;
        }
        if let Some(t) = prob.terminal_soe_min {
            cons[3 * prob.horizon()] = t - e;
        }
        cost
    }

    fn gradient(&self, x: &[f64], w: &[f64], grad: &mut [f64]) {
        let prob = self.prob;
        let kk = prob.horizon();
        // Weight carried by e_{k+1}: all energy constraints from hour k onwards.
        let mut suffix = prob.terminal_soe_min.map_or(0.0, |_| -w[3 * kk]);
        for k in (0..kk).rev() {
            suffix += w[3 * k] - w[3 * k + 1];
            let fr = &prob.frames[k];
            let (ch, dis) = (x[2 * k], x[2 * k + 1]);
            let slope =
                prob.dt * hour_cost_slope(&fr.forecast, ch + dis, fr.price.c_buy, fr.price.c_sell);
            grad[2 * k] = slope + suffix * self.charge_gain() - w[3 * k + 2] * dis;
            grad[2 * k + 1] = slope + suffix * self.discharge_gain() - w[3 * k + 2] * ch;
        }
    }
}

/// Nets each hour's split and clips it to the headroom of the state reached so far.
fn replay(prob: &HorizonProblem, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let spec = &prob.spec;
    let mut state = prob.initial_state;
    let mut battery = Vec::with_capacity(prob.horizon());
    let mut soe = vec![state.soe];
    for k in 0..prob.horizon() {
        let (lo, hi) = spec.feasible_interval(state, prob.dt);
        let p = (x[2 * k] + x[2 * k + 1]).max(lo).min(hi);
        state = spec
            .step(state, p, prob.dt)
            .expect("clipped to the feasible interval");
        battery.push(p);
        soe.push(state.soe);
    }
    (battery, soe)
}

fn split(battery: &[f64]) -> Vec<f64> {
    battery
        .iter()
        .flat_map(|&p| [p.min(0.0), p.max(0.0)])
        .collect()
}

/// Minimizes the expected cost over fixed battery setpoints.
pub fn solve(prob: &HorizonProblem, opts: &SolverOptions) -> FixedBatteryPlan {
    let infeasible = FixedBatteryPlan {
        battery: Vec::new(),
        expected_soe: Vec::new(),
        expected_cost: f64::NAN,
        solver_status: SolverStatus::Infeasible,
    };
    if !prob.is_valid() {
        return infeasible;
    }
    let means = prob.mean_netload();
    let Ok(plan) = solve_deterministic(
        &means,
        &prob.prices(),
        &prob.spec,
        prob.initial_state,
        prob.dt,
        prob.terminal_soe_min,
    ) else {
        return infeasible;
    };
    let nlp = SetpointNlp::new(prob);
    let mut x0 = split(&plan.battery);
    nlp::project(&mut x0, &nlp.lower, &nlp.upper);
    let res = nlp::solve(&nlp, &x0, &opts.al_options());

    let (start_battery, start_soe) = replay(prob, &x0);
    let start_cost = objective(prob, &start_battery);
    let (battery, soe) = replay(prob, &res.x);
    let cost = objective(prob, &battery);
    let terminal_ok = |soe: &[f64]| {
        prob.terminal_soe_min
            .map_or(true, |t| soe[soe.len() - 1] >= t - opts.feasibility_tol)
    };
    let solver_status = match res.status {
        AlStatus::Converged => SolverStatus::Converged,
        AlStatus::MaxIterations => SolverStatus::MaxIterations,
    };
    // The deterministic plan is kept unless the stochastic solution is genuinely cheaper.
    if cost < start_cost - IMPROVEMENT_TOL && terminal_ok(&soe) {
        FixedBatteryPlan {
            battery,
            expected_soe: soe,
            expected_cost: cost,
            solver_status,
        }
    } else {
        FixedBatteryPlan {
            battery: start_battery,
            expected_soe: start_soe,
            expected_cost: start_cost,
            solver_status,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::{HorizonFrame, Price};
    use crate::{Battery, BatteryState};
    use approx::assert_abs_diff_eq;

    fn problem(means: &[f64], sigma: f64, soe: f64) -> HorizonProblem {
        HorizonProblem {
            frames: means
                .iter()
                .map(|&m| HorizonFrame {
                    forecast: Mixture::normal(m, sigma).unwrap(),
                    price: Price {
                        c_buy: 0.4,
                        c_sell: 0.08,
                    },
                })
                .collect(),
            spec: Battery::default(),
            initial_state: BatteryState::new(soe),
            dt: 1.0,
            terminal_soe_min: None,
        }
    }

    #[test]
    fn hedges_against_imports() {
        let prob = problem(&[0.0; 4], 1.0, 3.84);
        let plan = solve(&prob, &SolverOptions::default());
        assert!(plan.expected_cost <= objective(&prob, &[0.0; 4]) + 1e-12);
        assert!(plan.battery[0] > 0.0);
    }

    #[test]
    fn zero_variance_matches_deterministic_plan() {
        let means = [1.0, -2.0, 0.5, 2.5];
        let prob = problem(&means, 1e-7, 2.0);
        let plan = solve(&prob, &SolverOptions::default());
        let det = solve_deterministic(
            &means,
            &prob.prices(),
            &prob.spec,
            prob.initial_state,
            1.0,
            None,
        )
        .unwrap();
        assert_abs_diff_eq!(plan.battery[0], det.battery[0], epsilon = 1e-3);
    }

    #[test]
    fn setpoints_respect_the_energy_window() {
        let prob = problem(&[3.0, 4.0, -5.0, -5.0, 2.0], 1.5, 1.0);
        let plan = solve(&prob, &SolverOptions::default());
        for &e in &plan.expected_soe {
            assert!((0.0..=7.68).contains(&e));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut prob = problem(&[0.5, -1.0, 2.0], 0.8, 3.0);
        prob.terminal_soe_min = Some(2.0);
        let nlp = SetpointNlp::new(&prob);
        let x = [-0.4, 0.3, -1.2, 0.2, -0.1, 1.5];
        let w: Vec<f64> = (0..nlp.num_constraints())
            .map(|j| 0.2 + 0.05 * j as f64)
            .collect();
        let mut g = [0.0; 6];
        nlp.gradient(&x, &w, &mut g);
        let lag = |x: &[f64]| {
            let mut c = vec![0.0; nlp.num_constraints()];
            nlp.evaluate(x, &mut c) + c.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        for i in 0..x.len() {
            let mut up = x;
            let mut dn = x;
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            let fd = (lag(&up) - lag(&dn)) / 2e-6;
            assert!(
                (g[i] - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                "{i}: {} vs {fd}",
                g[i]
            );
        }
    }
}
