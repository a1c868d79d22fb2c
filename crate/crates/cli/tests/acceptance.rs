//! Acceptance suite: one pass/fail line per criterion, nonzero exit on any failure.
//!
//! Run alone with `cargo test -p mrv-cli --test acceptance`.

use std::path::Path;
use std::time::Instant;

use mrv_cli::commands::{self, GenerateArgs};
use mrv_cli::config::RunConfig;
use mrv_core::controllers::{plan, ControllerKind, HourAction, PlanInput};
use mrv_core::forecast::{fit_mixture, QuantileForecast, QUANTILE_COUNT, SIGMA_FLOOR};
use mrv_core::mixedrv::{
    boundary_probabilities, expected_battery_power, expected_grid_power, expected_grid_split,
    policy_expectations, realize, tracking_mass,
};
use mrv_core::scheduler::{self, HorizonFrame, HorizonProblem, Price, SolverOptions};
use mrv_core::sim::{tournament, EpisodeConfig, Scenario};
use mrv_core::synth::{self, Profile};
use mrv_core::{tariff, Battery, BatteryState, Mixture, Policy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = (bool, String);

fn random_mixture(rng: &mut ChaCha8Rng) -> Mixture {
    let w = rng.gen_range(0.1..0.9);
    let mu1 = rng.gen_range(-2.0..2.0);
    let mu2 = mu1 + rng.gen_range(-3.0..3.0);
    Mixture::from_params(
        w,
        mu1,
        rng.gen_range(0.2..1.5),
        mu2,
        rng.gen_range(0.2..1.5),
    )
    .unwrap()
}

fn random_policy(rng: &mut ChaCha8Rng, f: &Mixture) -> Policy {
    let g = rng.gen_range(-1.5..1.5);
    let centre = f.mean() - g;
    let lo = centre - rng.gen_range(0.1..2.5);
    let hi = centre + rng.gen_range(0.1..2.5);
    Policy::new(lo, hi, g).unwrap()
}

/// Draws a (mixture, policy) pair whose boundary and sign events all have
/// probability at least 1e-3, so every Monte-Carlo estimate has a usable spread.
fn informative_pair(rng: &mut ChaCha8Rng) -> (Mixture, Policy) {
    loop {
        let f = random_mixture(rng);
        let pol = random_policy(rng, &f);
        let bp = boundary_probabilities(&f, &pol);
        // P(P_G < 0) and P(P_G > 0) under the tracking rule.
        let p_neg = if pol.pg_des < 0.0 {
            f.cdf(pol.pg_des + pol.pb_hi).max(bp.p1)
        } else {
            f.cdf(pol.pb_lo)
        };
        let p_pos = if pol.pg_des > 0.0 {
            f.sf(pol.pb_lo + pol.pg_des).max(bp.p2)
        } else {
            f.sf(pol.pb_hi)
        };
        if [bp.p1, bp.p2, p_neg, p_pos].iter().all(|&p| p > 1e-3) {
            return (f, pol);
        }
    }
}

fn sample(f: &Mixture, rng: &mut ChaCha8Rng) -> f64 {
    let [a, b] = *f.components();
    let c = if rng.gen::<f64>() < a.weight { a } else { b };
    c.mean + c.stdev * rng.sample::<f64, _>(StandardNormal)
}

/// Running mean and variance (Welford).
#[derive(Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn std_error(&self) -> f64 {
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

fn criterion_1() -> Outcome {
    const PAIRS: usize = 100;
    const SAMPLES: usize = 10_000_000;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = (0.0_f64, String::new());
    let mut misses = Vec::new();
    for pair in 0..PAIRS {
        let (f, pol) = informative_pair(&mut rng);
        let mut mc = ChaCha8Rng::seed_from_u64(1000 + pair as u64);
        let mut m: [Moments; 5] = Default::default();
        for _ in 0..SAMPLES {
            let l = sample(&f, &mut mc);
            let (p_b, p_g) = realize(&pol, l);
            m[0].push(p_b);
            m[1].push(p_g.max(0.0));
            m[2].push(p_g.min(0.0));
            m[3].push(f64::from(u8::from(l - pol.pg_des <= pol.pb_lo)));
            m[4].push(f64::from(u8::from(l - pol.pg_des >= pol.pb_hi)));
        }
        let split = expected_grid_split(&f, &pol);
        let bp = boundary_probabilities(&f, &pol);
        let exact = [
            expected_battery_power(&f, &pol),
            split.exp_buy,
            split.exp_sell,
            bp.p1,
            bp.p2,
        ];
        let names = ["E[P_B]", "exp_buy", "exp_sell", "p1", "p2"];
        for i in 0..5 {
            let z = (m[i].mean - exact[i]).abs() / m[i].std_error();
            if z > worst.0 {
                worst = (z, format!("pair {pair} {}", names[i]));
            }
            if z > 3.0 {
                misses.push(format!("pair {pair} {} at {z:.2} SE", names[i]));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = misses.is_empty() && secs < 120.0;
    let mut detail = format!(
        "{} of {} comparisons beyond 3 SE, worst {:.2} SE ({}), {secs:.1} s",
        misses.len(),
        5 * PAIRS,
        worst.0,
        worst.1
    );
    if !misses.is_empty() {
        detail += &format!(" [{}]", misses.join("; "));
    }
    (ok, detail)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut mass, mut balance, mut split_err) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..1000 {
        let f = random_mixture(&mut rng);
        let pol = random_policy(&mut rng, &f);
        let bp = boundary_probabilities(&f, &pol);
        mass = mass.max((bp.p1 + bp.p2 + tracking_mass(&f, &pol) - 1.0).abs());
        let eg = expected_grid_power(&f, &pol);
        balance = balance.max((expected_battery_power(&f, &pol) + eg - f.mean()).abs());
        split_err = split_err.max((expected_grid_split(&f, &pol).total() - eg).abs());
    }
    let ok = mass <= 1e-10 && balance <= 1e-9 && split_err <= 1e-9;
    (
        ok,
        format!(
            "max errors: mass {mass:.1e}, power balance {balance:.1e}, sell+buy {split_err:.1e}"
        ),
    )
}

fn random_problem(rng: &mut ChaCha8Rng, k: usize) -> HorizonProblem {
    let spec = Battery::default();
    let frames = (0..k)
        .map(|_| HorizonFrame {
            forecast: random_mixture(rng),
            price: Price {
                c_buy: rng.gen_range(0.2..0.6),
                c_sell: rng.gen_range(0.0..0.15),
            },
        })
        .collect();
    HorizonProblem {
        frames,
        spec,
        initial_state: BatteryState::new(rng.gen_range(spec.e_min..spec.e_max)),
        dt: 1.0,
        terminal_soe_min: None,
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_grad, mut worst_sens) = (0.0_f64, 0.0_f64);
    // Relative error; entries below 1e-6 in magnitude are compared absolutely.
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
    for _ in 0..50 {
        let k = 4;
        let prob = random_problem(&mut rng, k);
        // Interior points: strictly ordered intervals inside the power limits.
        let pols: Vec<Policy> = prob
            .frames
            .iter()
            .map(|fr| loop {
                let p = random_policy(&mut rng, &fr.forecast);
                if p.pb_lo > prob.spec.p_min && p.pb_hi < prob.spec.p_max {
                    break p;
                }
            })
            .collect();
        let g = scheduler::gradient(&prob, &pols);
        let h = 1e-5;
        for j in 0..4 * k {
            let bump = |d: f64| {
                let mut p = pols.clone();
                let v = &mut p[j / 4];
                match j % 4 {
                    0 => v.pb_lo += d,
                    1 => v.pb_hi += d,
                    2 => v.pg_des_sell += d,
                    _ => v.pg_des_buy += d,
                }
                v.pg_des = v.pg_des_sell + v.pg_des_buy;
                scheduler::objective(&prob, &p)
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            worst_grad = worst_grad.max(rel(g[j], fd));
        }
        for (fr, pol) in prob.frames.iter().zip(&pols) {
            let e = policy_expectations(&fr.forecast, pol);
            let bp = boundary_probabilities(&fr.forecast, pol);
            worst_sens = worst_sens.max(rel(e.d_battery[1], bp.p2));
            worst_sens = worst_sens.max(rel(e.d_battery[2], -bp.tracking()));
            worst_sens = worst_sens.max(rel(e.d_battery[3], -bp.tracking()));
            let shift = |d: f64| {
                let p = Policy::new(pol.pb_lo, pol.pb_hi + d, pol.pg_des).unwrap();
                expected_battery_power(&fr.forecast, &p)
            };
            worst_sens = worst_sens.max(rel((shift(h) - shift(-h)) / (2.0 * h), bp.p2));
        }
    }
    let ok = worst_grad <= 1e-4 && worst_sens <= 1e-4;
    (ok, format!("max relative error: objective gradient {worst_grad:.1e}, E[P_B] sensitivities {worst_sens:.1e}"))
}

/// Cheapest cost over battery powers on a 0.01 kW grid, by exhaustive search.
fn grid_search(netload: &[f64; 3], prices: &[Price; 3], spec: &Battery, soe0: f64) -> f64 {
    let steps: Vec<f64> = (-512..=512).map(|i| f64::from(i) / 100.0).collect();
    let cost = |h: usize, p_b: f64| {
        let g = netload[h] - p_b;
        prices[h].c_buy * g.max(0.0) + prices[h].c_sell * g.min(0.0)
    };
    let within = |e: f64| e >= spec.e_min - 1e-12 && e <= spec.e_max + 1e-12;
    let mut best = f64::INFINITY;
    for &a in &steps {
        let e1 = soe0 + spec.energy_delta(a, 1.0);
        if !within(e1) {
            continue;
        }
        let ca = cost(0, a);
        for &b in &steps {
            let e2 = e1 + spec.energy_delta(b, 1.0);
            if !within(e2) {
                continue;
            }
            let cb = ca + cost(1, b);
            for &c in &steps {
                if within(e2 + spec.energy_delta(c, 1.0)) {
                    best = best.min(cb + cost(2, c));
                }
            }
        }
    }
    best
}

fn price(c_buy: f64, c_sell: f64) -> Price {
    Price { c_buy, c_sell }
}

type Toy = ([f64; 3], [Price; 3], f64);

fn criterion_4() -> Outcome {
    let spec = Battery::default();
    let sigma = 1e-6;
    let solver = SolverOptions::default();
    // Toys whose optimal battery powers lie on the 0.01 kW search grid.
    let on_grid: [Toy; 3] = [
        (
            [1.2, -3.0, 2.5],
            [price(0.45, 0.1), price(0.3, 0.06), price(0.4, 0.08)],
            2.0,
        ),
        (
            [-1.5, 2.0, 0.5],
            [price(0.3, 0.05), price(0.5, 0.1), price(0.4, 0.08)],
            4.0,
        ),
        (
            [1.0, 6.0, -2.0],
            [price(0.35, 0.07), price(0.55, 0.1), price(0.25, 0.04)],
            7.68,
        ),
    ];
    // Toys whose optimum needs efficiency-scaled powers between grid points;
    // checked against the exact linear-program optimum instead.
    let off_grid: [Toy; 2] = [
        (
            [-2.0, 1.0, 1.5],
            [price(0.3, 0.05), price(0.35, 0.08), price(0.5, 0.1)],
            0.0,
        ),
        (
            [0.8, 2.0, -1.0],
            [price(0.2, 0.04), price(0.6, 0.12), price(0.4, 0.07)],
            1.0,
        ),
    ];
    let (mut action_gap, mut grid_gap, mut lp_gap) = (0.0_f64, 0.0_f64, 0.0_f64);
    for (i, (netload, prices, soe0)) in on_grid.iter().chain(&off_grid).enumerate() {
        let state = BatteryState::new(*soe0);
        let forecasts: Vec<Mixture> = netload
            .iter()
            .map(|&m| Mixture::normal(m, sigma).unwrap())
            .collect();
        let input = PlanInput {
            forecasts: &forecasts,
            truth: netload,
            prices,
            spec: &spec,
            state,
            dt: 1.0,
            solver: &solver,
        };
        let act = |kind| match plan(kind, &input, 0).unwrap() {
            HourAction::Grid(p) => realize(&p, netload[0]).0,
            other => panic!("{kind} returned {other:?}"),
        };
        action_gap =
            action_gap.max((act(ControllerKind::SmpcFg) - act(ControllerKind::MpcFg)).abs());

        let prob = HorizonProblem {
            frames: forecasts
                .iter()
                .zip(prices)
                .map(|(&forecast, &price)| HorizonFrame { forecast, price })
                .collect(),
            spec,
            initial_state: state,
            dt: 1.0,
            terminal_soe_min: None,
        };
        let cost = scheduler::solve(&prob, &solver).expected_cost;
        if i < on_grid.len() {
            grid_gap = grid_gap.max((cost - grid_search(netload, prices, &spec, *soe0)).abs());
        } else {
            let lp =
                scheduler::solve_deterministic(netload, prices, &spec, state, 1.0, None).unwrap();
            lp_gap = lp_gap.max((cost - lp.cost).abs());
        }
    }
    let ok = action_gap <= 1e-3 && grid_gap <= 1e-3 && lp_gap <= 1e-3;
    (
        ok,
        format!(
            "first-hour battery power gap {action_gap:.1e} kW, objective vs grid search {grid_gap:.1e} EUR, \
             off-grid toys vs exact optimum {lp_gap:.1e} EUR"
        ),
    )
}

fn criterion_5() -> Outcome {
    let spec = Battery::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut state = BatteryState::new(rng.gen_range(spec.e_min..spec.e_max));
    let mut escapes = 0;
    for _ in 0..10_000 {
        let (lo, hi) = spec.feasible_interval(state, 1.0);
        let p = rng.gen_range(lo..=hi);
        let raw = state.soe + spec.energy_delta(p, 1.0);
        state = spec.step(state, p, 1.0).unwrap();
        if raw < spec.e_min - 1e-9
            || raw > spec.e_max + 1e-9
            || state.soe < spec.e_min
            || state.soe > spec.e_max
        {
            escapes += 1;
        }
    }
    let cfg = RunConfig::default();
    let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
    let b = back.battery;
    let table = (b.e_min, b.e_max, b.p_min, b.p_max, b.eta_ch, b.eta_dis)
        == (0.0, 7.68, -5.12, 5.12, 0.98, 0.98);
    (
        escapes == 0 && table && back == cfg,
        format!("{escapes} steps left the energy window, battery round trip exact: {table}"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut buy_err, mut sell_err, mut min_sell) = (0.0_f64, 0.0_f64, f64::INFINITY);
    for _ in 0..200 {
        let n = rng.gen_range(24..2000);
        let level = rng.gen_range(-0.05..0.2);
        let w: Vec<f64> = (0..n)
            .map(|_| level + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let t = tariff::build(&w, 0.4, 0.08).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        buy_err = buy_err.max((mean(&t.c_buy) - 0.4).abs());
        sell_err = sell_err.max((mean(&t.c_sell) - 0.08).abs());
        min_sell = t.c_sell.iter().copied().fold(min_sell, f64::min);
    }
    let ok = buy_err <= 1e-6 && sell_err <= 1e-6 && min_sell >= 0.0;
    (ok, format!("mean errors: import {buy_err:.1e}, export {sell_err:.1e}; smallest export price {min_sell}"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let m = random_mixture(&mut rng);
        let q = QuantileForecast::from_mixture(0, &m).unwrap();
        worst = worst.max(fit_mixture(&q).unwrap().rms);
    }
    let mut delta_ok = true;
    for c in [-2.5, 0.0, 0.7, 4.0] {
        let fit = fit_mixture(&QuantileForecast::new(0, vec![c; QUANTILE_COUNT]).unwrap()).unwrap();
        let floored = fit
            .mixture
            .components()
            .iter()
            .all(|k| k.stdev <= SIGMA_FLOOR * (1.0 + 1e-9));
        delta_ok &= fit.degenerate && floored && (fit.mixture.mean() - c).abs() < 1e-9;
    }
    (
        worst < 0.02 && delta_ok,
        format!(
            "worst fit RMS {worst:.1e} kW, constant quantiles give floored near-deltas: {delta_ok}"
        ),
    )
}

/// Fixed-seed corpus simulation shared by the ordering and regret criteria.
fn corpus_run() -> (mrv_core::sim::SimulationReport, f64) {
    let start = Instant::now();
    let scenarios: Vec<Scenario> = synth::corpus(2024, 14)
        .iter()
        .map(|c| synth::bundle(c, 24).and_then(|b| b.scenario()).unwrap())
        .collect();
    let cfg = EpisodeConfig {
        solver: SolverOptions::receding_horizon(),
        ..EpisodeConfig::default()
    };
    let report = tournament(&scenarios, &ControllerKind::ALL, &cfg).unwrap();
    (report, start.elapsed().as_secs_f64())
}

fn criterion_8(report: &mrv_core::sim::SimulationReport, secs: f64) -> Outcome {
    use ControllerKind::*;
    let cost = |k| report.row(k).unwrap().total_cost_eur;
    let order =
        cost(MpcIdeal) < cost(SmpcFg) && cost(SmpcFg) < cost(MpcFg) && cost(SmpcFb) < cost(MpcFb);
    // Placement among the non-ideal controllers in every scenario.
    let non_ideal: Vec<usize> = (0..report.controllers.len())
        .filter(|&i| !report.controllers[i].is_ideal())
        .collect();
    let smpc = report
        .controllers
        .iter()
        .position(|&k| k == SmpcFg)
        .unwrap();
    let ranks: Vec<f64> = report
        .scenarios
        .iter()
        .map(|s| {
            let costs: Vec<f64> = non_ideal
                .iter()
                .map(|&i| s.episodes[i].total_cost_eur)
                .collect();
            let own = s.episodes[smpc].total_cost_eur;
            1.0 + costs.iter().filter(|&&c| c < own - 1e-9).count() as f64
        })
        .collect();
    let avg_rank = ranks.iter().sum::<f64>() / ranks.len() as f64;
    let mean_costs: Vec<String> = report
        .summary
        .iter()
        .map(|r| {
            format!(
                "{} {:.3} (rank {:.2})",
                r.controller, r.total_cost_eur, r.rank
            )
        })
        .collect();
    let ok = order && avg_rank == 1.0 && secs <= 15.0 * 60.0;
    (ok, format!("mean cost {}; SMPC-FG average rank among non-ideal {avg_rank:.2}; suite time so far {secs:.0} s", mean_costs.join(", ")))
}

fn criterion_9(report: &mrv_core::sim::SimulationReport) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in report.summary.iter().filter(|r| !r.controller.is_ideal()) {
        let regret = r.regret_pct.unwrap_or(f64::NAN);
        ok &= regret >= 0.0;
        parts.push(format!("{} {regret:.2}%", r.controller));
    }
    let negatives: usize = report
        .scenarios
        .iter()
        .map(|s| {
            s.regret_pct
                .iter()
                .filter(|r| r.is_some_and(|v| v < 0.0))
                .count()
        })
        .sum();
    (
        ok,
        format!(
            "aggregate regret {}; negative per-scenario regrets: {negatives}",
            parts.join(", ")
        ),
    )
}

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("bundle");
    let gen = GenerateArgs {
        seed: 7,
        days: 2,
        profile: Profile::SpringPv,
        out: bundle.clone(),
        horizon: 24,
        corpus: false,
        no_quantiles: false,
    };
    commands::generate(&gen).unwrap();
    let outputs: Vec<Vec<(String, Vec<u8>)>> = ["a", "b"]
        .iter()
        .map(|name| {
            let cfg = RunConfig {
                scenarios: vec![bundle.clone()],
                out: tmp.path().join(name),
                emit_plots: true,
                ..RunConfig::default()
            };
            commands::run(&cfg).unwrap();
            read_tree(&cfg.out)
        })
        .collect();
    let identical = outputs[0] == outputs[1];
    (
        identical && !outputs[0].is_empty(),
        format!(
            "{} report files, byte-identical: {identical}",
            outputs[0].len()
        ),
    )
}

fn main() {
    let start = Instant::now();
    let mut failed = 0;
    let mut report = |n: usize, (ok, detail): Outcome| {
        println!(
            "criterion {n:>2}: {} | {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
        failed += usize::from(!ok);
    };
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    report(6, criterion_6());
    report(7, criterion_7());
    report(10, criterion_10());
    report(1, criterion_1());
    let (sim, secs) = corpus_run();
    println!("corpus simulation took {secs:.0} s");
    report(8, criterion_8(&sim, start.elapsed().as_secs_f64()));
    report(9, criterion_9(&sim));
    println!(
        "acceptance: {} of 10 criteria passed in {:.0} s",
        10 - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
