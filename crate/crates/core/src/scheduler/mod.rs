//! Stochastic horizon problem over battery intervals and desired grid power.
//!
//! Decision variables per hour are `(lo, hi, sell, buy)` with the desired
//! grid power `g = sell + buy`. The objective is the expected energy cost
//! `Σ_k dt (c_buy E[import] + c_sell E[export])`, evaluated in closed form.
//! The expected state of energy follows the sign split of `E[P_B]`; the whole
//! interval of every hour must be physically realizable from that expected
//! state. Box bounds are handled by projection and the coupling constraints
//! by an augmented Lagrangian (see [`crate::nlp`]).

pub mod deterministic;
pub mod fixed_battery;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mixedrv::{policy_expectations, PolicyExpectations, COMPLEMENTARITY_EPS};
use crate::nlp::{self, AlOptions, AlStatus, BoxOptions, Problem};
use crate::{Battery, BatteryState, Mixture, Policy};

pub use deterministic::{grid_cost, solve_deterministic, DeterministicPlan};

/// Bound on the magnitude of the desired grid power split variables, kW.
const GRID_SPLIT_LIMIT: f64 = 1e3;

/// Distance to activity at which the complementarity penalty enters Newton steps, kW².
const COMPLEMENTARITY_MARGIN: f64 = 1e-2;

/// Smallest cost reduction, €, that makes a later candidate replace an earlier one.
const IMPROVEMENT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Price {
    /// €/kWh
    pub c_buy: f64,
    /// €/kWh
    pub c_sell: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonFrame {
    pub forecast: Mixture,
    pub price: Price,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonProblem {
    pub frames: Vec<HorizonFrame>,
    pub spec: Battery,
    pub initial_state: BatteryState,
    pub dt: f64,
    /// Optional lower bound on the expected final state of energy.
    pub terminal_soe_min: Option<f64>,
}

impl HorizonProblem {
    pub fn horizon(&self) -> usize {
        self.frames.len()
    }

    pub fn is_valid(&self) -> bool {
        !self.frames.is_empty()
            && self.dt > 0.0
            && self.spec.validate().is_ok()
            && self.initial_state.validate(&self.spec).is_ok()
            && self.frames.iter().all(|f| {
                f.price.c_buy.is_finite() && f.price.c_sell.is_finite() && f.price.c_sell >= 0.0
            })
            && self.terminal_soe_min.map_or(true, |t| t <= self.spec.e_max)
    }

    pub fn prices(&self) -> Vec<Price> {
        self.frames.iter().map(|f| f.price).collect()
    }

    pub fn mean_netload(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.forecast.mean()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    pub feasibility_tol: f64,
    pub stationarity_tol: f64,
    /// Number of initializations; the first three are deterministic heuristics,
    /// further ones are seeded perturbations.
    pub multi_start: usize,
    pub seed: u64,
    /// Newton inner steps on the exact Hessian instead of limited-memory BFGS.
    pub exact_hessian: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_outer_iterations: 200,
            max_inner_iterations: 300,
            feasibility_tol: 1e-6,
            stationarity_tol: 1e-6,
            multi_start: 3,
            seed: 0,
            exact_hessian: false,
        }
    }
}

impl SolverOptions {
    /// Settings for hourly re-planning: one start, four multiplier updates.
    ///
    /// Later outer iterations mostly polish multipliers without changing the
    /// first-hour action, while costing most of the solve time.
    pub fn receding_horizon() -> Self {
        Self {
            max_outer_iterations: 4,
            multi_start: 1,
            ..Self::default()
        }
    }

    fn al_options(&self) -> AlOptions {
        AlOptions {
            max_outer_iterations: self.max_outer_iterations,
            feasibility_tol: self.feasibility_tol,
            stationarity_tol: self.stationarity_tol,
            exact_hessian: self.exact_hessian,
            inner: BoxOptions {
                max_iterations: self.max_inner_iterations,
                ..BoxOptions::default()
            },
            ..AlOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSolution {
    pub policies: Vec<Policy>,
    /// Expected state of energy, K + 1 values starting with the initial state.
    pub expected_soe: Vec<f64>,
    pub expected_cost: f64,
    pub solver_status: SolverStatus,
    /// Index of the initialization that produced the returned policies.
    pub start_index: usize,
    /// Best objective reached by each start.
    pub start_costs: Vec<f64>,
    pub merit_history: Vec<Vec<f64>>,
}

impl HorizonSolution {
    fn infeasible() -> Self {
        Self {
            policies: Vec::new(),
            expected_soe: Vec::new(),
            expected_cost: f64::NAN,
            solver_status: SolverStatus::Infeasible,
            start_index: 0,
            start_costs: Vec::new(),
            merit_history: Vec::new(),
        }
    }
}

#[inline]
fn policy_at(x: &[f64], k: usize) -> Policy {
    let v = &x[4 * k..4 * k + 4];
    Policy {
        pb_lo: v[0],
        pb_hi: v[1],
        pg_des: v[2] + v[3],
        pg_des_sell: v[2],
        pg_des_buy: v[3],
    }
}

fn flatten(policies: &[Policy]) -> Vec<f64> {
    policies
        .iter()
        .flat_map(|p| [p.pb_lo, p.pb_hi, p.pg_des_sell, p.pg_des_buy])
        .collect()
}

/// Expected cost of a policy sequence, €.
pub fn objective(prob: &HorizonProblem, policies: &[Policy]) -> f64 {
    assert_eq!(
        policies.len(),
        prob.horizon(),
        "one policy per hour required"
    );
    prob.frames
        .iter()
        .zip(policies)
        .map(|(fr, pol)| {
            let e = policy_expectations(&fr.forecast, pol);
            prob.dt * (fr.price.c_buy * e.exp_buy + fr.price.c_sell * e.exp_sell)
        })
        .sum()
}

/// Gradient of [`objective`] w.r.t. `(lo, hi, sell, buy)` of every hour, flattened.
pub fn gradient(prob: &HorizonProblem, policies: &[Policy]) -> Vec<f64> {
    assert_eq!(
        policies.len(),
        prob.horizon(),
        "one policy per hour required"
    );
    let mut g = Vec::with_capacity(4 * policies.len());
    for (fr, pol) in prob.frames.iter().zip(policies) {
        let e = policy_expectations(&fr.forecast, pol);
        for i in 0..4 {
            g.push(prob.dt * (fr.price.c_buy * e.d_buy[i] + fr.price.c_sell * e.d_sell[i]));
        }
    }
    g
}

/// Expected state-of-energy trajectory (K + 1 values) for a policy sequence.
pub fn expected_soe(prob: &HorizonProblem, policies: &[Policy]) -> Vec<f64> {
    let mut e = prob.initial_state.soe;
    let mut out = vec![e];
    for (fr, pol) in prob.frames.iter().zip(policies) {
        let eb = crate::mixedrv::expected_battery_power(&fr.forecast, pol);
        e += prob.spec.energy_delta(eb, prob.dt);
        out.push(e);
    }
    out
}

/// Largest violation of the horizon constraints, kW or kWh.
pub fn max_violation(prob: &HorizonProblem, policies: &[Policy]) -> f64 {
    let nlp = IntervalNlp::new(prob);
    let mut cons = vec![0.0; nlp.num_constraints()];
    nlp.evaluate(&flatten(policies), &mut cons);
    let box_viol = flatten(policies)
        .iter()
        .zip(nlp.lower.iter().zip(&nlp.upper))
        .map(|(&x, (&l, &u))| (l - x).max(x - u).max(0.0))
        .fold(0.0, f64::max);
    cons.iter().fold(box_viol, |a, &c| a.max(c))
}

/// The interval problem in the form the augmented Lagrangian expects.
///
/// Constraints per hour `k`: charge headroom, discharge headroom, interval
/// ordering and relaxed sell/buy complementarity; optionally a terminal bound.
struct IntervalNlp<'a> {
    prob: &'a HorizonProblem,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<'a> IntervalNlp<'a> {
    fn new(prob: &'a HorizonProblem) -> Self {
        let spec = &prob.spec;
        let (lo0, hi0) = spec.feasible_interval(prob.initial_state, prob.dt);
        let mut lower = Vec::with_capacity(4 * prob.horizon());
        let mut upper = Vec::with_capacity(4 * prob.horizon());
        for k in 0..prob.horizon() {
            let (lo_min, hi_max) = if k == 0 {
                (lo0, hi0)
            } else {
                (spec.p_min, spec.p_max)
            };
            lower.extend_from_slice(&[lo_min, spec.p_min, -GRID_SPLIT_LIMIT, 0.0]);
            upper.extend_from_slice(&[spec.p_max, hi_max, 0.0, GRID_SPLIT_LIMIT]);
        }
        Self { prob, lower, upper }
    }

    fn headroom(&self, e: f64) -> (f64, f64) {
        let s = &self.prob.spec;
        let dt = self.prob.dt;
        (
            (e - s.e_max) / (s.eta_ch * dt),
            (e - s.e_min) * s.eta_dis / dt,
        )
    }
}

impl Problem for IntervalNlp<'_> {
    fn dim(&self) -> usize {
        4 * self.prob.horizon()
    }

    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn num_constraints(&self) -> usize {
        4 * self.prob.horizon() + usize::from(self.prob.terminal_soe_min.is_some())
    }

    fn evaluate(&self, x: &[f64], cons: &mut [f64]) -> f64 {
        self.forward(x, cons, None)
    }

    fn gradient(&self, x: &[f64], w: &[f64], grad: &mut [f64]) {
        let mut cons = vec![0.0; self.num_constraints()];
        let mut hours = Vec::with_capacity(self.prob.horizon());
        self.forward(x, &mut cons, Some(&mut hours));
        self.backward(&hours, w, grad);
    }

    fn evaluate_with_gradient(
        &self,
        x: &[f64],
        cons: &mut [f64],
        weight: &dyn Fn(usize, f64) -> f64,
        weights: &mut [f64],
        grad: &mut [f64],
    ) -> f64 {
        let mut hours = Vec::with_capacity(self.prob.horizon());
        let f = self.forward(x, cons, Some(&mut hours));
        for (j, w) in weights.iter_mut().enumerate() {
            *w = weight(j, cons[j]);
        }
        self.backward(&hours, weights, grad);
        f
    }

    fn curvature_margin(&self, j: usize) -> f64 {
        // The sell/buy product is stiff near zero; the state constraints are not.
        if j % 4 == 3 && j < 4 * self.prob.horizon() {
            COMPLEMENTARITY_MARGIN
        } else {
            0.0
        }
    }

    fn hessian(&self, x: &[f64], w: &[f64], r: &[f64], hess: &mut [f64]) -> bool {
        let prob = self.prob;
        let spec = &prob.spec;
        let (dt, kk, n) = (prob.dt, prob.horizon(), self.dim());
        let mut cons = vec![0.0; self.num_constraints()];
        let mut hours = Vec::with_capacity(kk);
        self.forward(x, &mut cons, Some(&mut hours));
        hess.iter_mut().for_each(|v| *v = 0.0);
        let a_lo = 1.0 / (spec.eta_ch * dt);
        let a_hi = spec.eta_dis / dt;
        let terminal = prob.terminal_soe_min.is_some();
        let mut add = |i: usize, j: usize, v: f64| hess[i * n + j] += v;

        // Hour blocks: cost curvature, state curvature weighted by the later
        // constraints and the complementarity product.
        let mut suffix = if terminal { -w[4 * kk] } else { 0.0 };
        for k in (0..kk).rev() {
            let fr = &prob.frames[k];
            let block = hour_hessian(
                &fr.forecast,
                &x[4 * k..4 * k + 4],
                dt * fr.price.c_buy,
                dt * fr.price.c_sell,
                suffix * hours[k].slope,
            );
            for i in 0..4 {
                for j in 0..4 {
                    add(4 * k + i, 4 * k + j, block[i][j]);
                }
            }
            add(4 * k + 2, 4 * k + 3, -w[4 * k + 3]);
            add(4 * k + 3, 4 * k + 2, -w[4 * k + 3]);
            suffix += w[4 * k] * a_lo - w[4 * k + 1] * a_hi;
        }

        // Gauss-Newton terms. The state before hour k has gradient
        // E_k = Σ_{i<k} v_i with v_i the state sensitivity of hour i.
        let v: Vec<[f64; 4]> = hours
            .iter()
            .map(|h| h.ex.d_battery.map(|d| h.slope * d))
            .collect();
        let mut beta = vec![0.0; kk + 1];
        for k in 1..kk {
            beta[k] = r[4 * k] * a_lo * a_lo + r[4 * k + 1] * a_hi * a_hi;
        }
        if terminal {
            beta[kk] += r[4 * kk];
        }
        // tail[m] = Σ_{k>m} beta_k weights v_i v_jᵀ for max(i, j) = m.
        let mut tail = vec![0.0; kk];
        let mut acc = 0.0;
        for m in (0..kk).rev() {
            acc += beta[m + 1];
            tail[m] = acc;
        }
        for i in 0..kk {
            for j in 0..kk {
                let t = tail[i.max(j)];
                if t == 0.0 {
                    continue;
                }
                for p in 0..4 {
                    for q in 0..4 {
                        add(4 * i + p, 4 * j + q, t * v[i][p] * v[j][q]);
                    }
                }
            }
        }
        for k in 0..kk {
            let (lo, hi, sell, buy) = (4 * k, 4 * k + 1, 4 * k + 2, 4 * k + 3);
            let (r_lo, r_hi) = (r[4 * k], r[4 * k + 1]);
            for i in 0..k {
                for p in 0..4 {
                    let c_lo = -r_lo * a_lo * v[i][p];
                    let c_hi = -r_hi * a_hi * v[i][p];
                    add(4 * i + p, lo, c_lo);
                    add(lo, 4 * i + p, c_lo);
                    add(4 * i + p, hi, c_hi);
                    add(hi, 4 * i + p, c_hi);
                }
            }
            add(lo, lo, r_lo + r[4 * k + 2]);
            add(hi, hi, r_hi + r[4 * k + 2]);
            add(lo, hi, -r[4 * k + 2]);
            add(hi, lo, -r[4 * k + 2]);
            let (s, b, rc) = (x[sell], x[buy], r[4 * k + 3]);
            add(sell, sell, rc * b * b);
            add(buy, buy, rc * s * s);
            add(sell, buy, rc * s * b);
            add(buy, sell, rc * s * b);
        }
        true
    }
}

/// Hessian of `c_buy·exp_buy + c_sell·exp_sell + c_soe·E[P_B]` for one hour,
/// by central differences of the analytic gradient.
fn hour_hessian(f: &Mixture, v: &[f64], c_buy: f64, c_sell: f64, c_soe: f64) -> [[f64; 4]; 4] {
    let grad = |u: &[f64; 4]| {
        let pol = Policy {
            pb_lo: u[0],
            pb_hi: u[1],
            pg_des: u[2] + u[3],
            pg_des_sell: u[2],
            pg_des_buy: u[3],
        };
        let e = policy_expectations(f, &pol);
        let mut g = [0.0; 4];
        for i in 0..4 {
            g[i] = c_buy * e.d_buy[i] + c_sell * e.d_sell[i] + c_soe * e.d_battery[i];
        }
        g
    };
    let mut h = [[0.0; 4]; 4];
    for j in 0..4 {
        let step = 1e-5 * v[j].abs().max(1.0);
        let mut up = [v[0], v[1], v[2], v[3]];
        let mut dn = up;
        up[j] += step;
        dn[j] -= step;
        let (gu, gd) = (grad(&up), grad(&dn));
        for i in 0..4 {
            h[i][j] = (gu[i] - gd[i]) / (2.0 * step);
        }
    }
    for i in 0..4 {
        for j in 0..i {
            let m = 0.5 * (h[i][j] + h[j][i]);
            h[i][j] = m;
            h[j][i] = m;
        }
    }
    h
}

/// Per-hour quantities the backward pass reuses.
struct HourTerms {
    pol: Policy,
    ex: PolicyExpectations<f64>,
    slope: f64,
}

impl IntervalNlp<'_> {
    /// Expected cost and constraint values; optionally records the per-hour terms.
    fn forward(&self, x: &[f64], cons: &mut [f64], mut hours: Option<&mut Vec<HourTerms>>) -> f64 {
        let prob = self.prob;
        let mut e = prob.initial_state.soe;
        let mut cost = 0.0;
        for (k, fr) in prob.frames.iter().enumerate() {
            let pol = policy_at(x, k);
            let (lo_room, hi_room) = self.headroom(e);
            cons[4 * k] = lo_room - pol.pb_lo;
            cons[4 * k + 1] = pol.pb_hi - hi_room;
            cons[4 * k + 2] = pol.pb_lo - pol.pb_hi;
            cons[4 * k + 3] = -pol.pg_des_sell * pol.pg_des_buy - COMPLEMENTARITY_EPS;
            let ex = policy_expectations(&fr.forecast, &pol);
            cost += prob.dt * (fr.price.c_buy * ex.exp_buy + fr.price.c_sell * ex.exp_sell);
            e += prob.spec.energy_delta(ex.battery, prob.dt);
            if let Some(h) = hours.as_deref_mut() {
                h.push(HourTerms {
                    pol,
                    ex,
                    slope: prob.spec.energy_delta_slope(ex.battery, prob.dt),
                });
            }
        }
        if let Some(t) = prob.terminal_soe_min {
            cons[4 * prob.horizon()] = t - e;
        }
        cost
    }

    fn backward(&self, hours: &[HourTerms], w: &[f64], grad: &mut [f64]) {
        let prob = self.prob;
        let spec = &prob.spec;
        let dt = prob.dt;
        let kk = prob.horizon();
        // Sensitivity of all later constraints to the state e_{k+1}.
        let mut suffix = prob.terminal_soe_min.map_or(0.0, |_| -w[4 * kk]);
        for k in (0..kk).rev() {
            let HourTerms { pol, ex, slope } = &hours[k];
            let price = prob.frames[k].price;
            let (wl, wh, wo, wc) = (w[4 * k], w[4 * k + 1], w[4 * k + 2], w[4 * k + 3]);
            for i in 0..4 {
                grad[4 * k + i] = dt * (price.c_buy * ex.d_buy[i] + price.c_sell * ex.d_sell[i])
                    + suffix * slope * ex.d_battery[i];
            }
            grad[4 * k] += -wl + wo;
            grad[4 * k + 1] += wh - wo;
            grad[4 * k + 2] += -wc * pol.pg_des_buy;
            grad[4 * k + 3] += -wc * pol.pg_des_sell;
            // Constraints of hour k depend on e_k, which the hours before k drive.
            suffix += wl / (spec.eta_ch * dt) - wh * spec.eta_dis / dt;
        }
    }
}

/// Forward sweep that makes a policy sequence exactly feasible.
///
/// Each interval is clipped to the headroom of the expected state reached so
/// far, degenerate intervals collapse to a point and the grid split is netted.
fn repair(prob: &HorizonProblem, x: &mut [f64]) {
    let spec = &prob.spec;
    let mut state = prob.initial_state;
    for k in 0..prob.horizon() {
        let (lo_f, hi_f) = spec.feasible_interval(state, prob.dt);
        let v = &mut x[4 * k..4 * k + 4];
        let mut lo = v[0].max(lo_f).min(hi_f);
        let mut hi = v[1].max(lo_f).min(hi_f);
        if lo > hi {
            let mid = 0.5 * (lo + hi);
            lo = mid;
            hi = mid;
        }
        v[0] = lo;
        v[1] = hi;
        // Only the net desired grid power acts; netting the split makes the
        // closed-form cost exact where the relaxed complementarity leaves a gap.
        (v[2], v[3]) = split(v[2] + v[3]);
        let pol = policy_at(x, k);
        let eb = crate::mixedrv::expected_battery_power(&prob.frames[k].forecast, &pol);
        let soe = state.soe + spec.energy_delta(eb, prob.dt);
        state = BatteryState::new(soe.max(spec.e_min).min(spec.e_max));
    }
}

fn split(g: f64) -> (f64, f64) {
    (g.min(0.0), g.max(0.0))
}

/// Initial points: fixed-battery-like, wide passive, mean tracking, then
/// seeded perturbations of the first.
fn initial_points(prob: &HorizonProblem, opts: &SolverOptions) -> Vec<Vec<f64>> {
    let kk = prob.horizon();
    let spec = &prob.spec;
    let means = prob.mean_netload();
    let plan = solve_deterministic(
        &means,
        &prob.prices(),
        spec,
        prob.initial_state,
        prob.dt,
        prob.terminal_soe_min,
    )
    .map(|p| p.battery)
    .unwrap_or_else(|_| vec![0.0; kk]);

    let mut starts = Vec::new();
    let mut fixed = Vec::with_capacity(4 * kk);
    for k in 0..kk {
        let (s, b) = split(means[k] - plan[k]);
        fixed.extend_from_slice(&[plan[k], plan[k], s, b]);
    }
    starts.push(fixed.clone());

    let mut wide = Vec::with_capacity(4 * kk);
    for _ in 0..kk {
        wide.extend_from_slice(&[spec.p_min, spec.p_max, 0.0, 0.0]);
    }
    starts.push(wide);

    let mut tracking = Vec::with_capacity(4 * kk);
    for &m in &means {
        let (s, b) = split(m);
        tracking.extend_from_slice(&[spec.p_min, spec.p_max, s, b]);
    }
    starts.push(tracking);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while starts.len() < opts.multi_start {
        let mut x = fixed.clone();
        for k in 0..kk {
            let width = spec.p_max - spec.p_min;
            x[4 * k] -= rng.gen_range(0.0..0.25) * width;
            x[4 * k + 1] += rng.gen_range(0.0..0.25) * width;
            let (s, b) = split(x[4 * k + 2] + x[4 * k + 3] + rng.gen_range(-0.5..0.5));
            x[4 * k + 2] = s;
            x[4 * k + 3] = b;
        }
        starts.push(x);
    }
    starts.truncate(opts.multi_start.max(1));
    starts
}

/// Solves the stochastic horizon problem from several starts and returns the best.
pub fn solve(prob: &HorizonProblem, opts: &SolverOptions) -> HorizonSolution {
    solve_from(prob, opts, None)
}

/// Like [`solve`], with an extra caller-supplied start tried first.
///
/// Receding-horizon controllers pass the previous plan shifted by one hour;
/// it is repaired to the current state before use. `start_index` 0 then
/// refers to the guess.
pub fn solve_from(
    prob: &HorizonProblem,
    opts: &SolverOptions,
    guess: Option<&[Policy]>,
) -> HorizonSolution {
    if !prob.is_valid() {
        return HorizonSolution::infeasible();
    }
    let nlp = IntervalNlp::new(prob);
    let al = opts.al_options();
    let mut best: Option<(f64, Vec<f64>, SolverStatus, usize)> = None;
    let mut start_costs = Vec::new();
    let mut merit_history = Vec::new();
    let mut cons = vec![0.0; nlp.num_constraints()];

    let feasible = |x: &[f64], cons: &mut [f64]| -> bool {
        nlp.evaluate(x, cons);
        cons.iter().all(|&c| c <= opts.feasibility_tol)
    };

    let mut points = initial_points(prob, opts);
    if let Some(g) = guess {
        let mut x = flatten(g);
        x.resize(4 * prob.horizon(), 0.0);
        // Hours past the end of the guess copy its last policy.
        for k in g.len()..prob.horizon() {
            let last = if g.is_empty() {
                points[0][4 * k..4 * k + 4].to_vec()
            } else {
                x[4 * (k - 1)..4 * k].to_vec()
            };
            x[4 * k..4 * k + 4].copy_from_slice(&last);
        }
        points.insert(0, x);
        points.truncate(opts.multi_start.max(1));
    }
    for (idx, x0) in points.into_iter().enumerate() {
        let mut start = x0;
        nlp::project(&mut start, &nlp.lower, &nlp.upper);
        repair(prob, &mut start);
        let res = nlp::solve(&nlp, &start, &al);
        let mut x = res.x;
        repair(prob, &mut x);
        let status = match res.status {
            AlStatus::Converged => SolverStatus::Converged,
            AlStatus::MaxIterations => SolverStatus::MaxIterations,
        };
        merit_history.extend(res.merit_history);

        // The repaired start is kept unless the solver genuinely improves on it.
        let candidates = [(start, status), (x, status)];
        let mut start_best = f64::INFINITY;
        for (cand, st) in candidates {
            if !feasible(&cand, &mut cons) {
                continue;
            }
            let cost = nlp.evaluate(&cand, &mut cons);
            start_best = start_best.min(cost);
            let better = match &best {
                None => true,
                Some((c, ..)) => cost < *c - IMPROVEMENT_TOL,
            };
            if better {
                best = Some((cost, cand, st, idx));
            }
        }
        start_costs.push(start_best);
    }

    let Some((cost, x, status, start_index)) = best else {
        return HorizonSolution::infeasible();
    };
    let policies: Vec<Policy> = (0..prob.horizon()).map(|k| policy_at(&x, k)).collect();
    HorizonSolution {
        expected_soe: expected_soe(prob, &policies),
        policies,
        expected_cost: cost,
        solver_status: status,
        start_index,
        start_costs,
        merit_history,
    }
}
