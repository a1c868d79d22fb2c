//! Quantile forecasts, their two-component mixture fit and a synthetic
//! forecast generator.
//!
//! The fit minimizes the root-mean-square distance between the mixture's
//! quantile function and the 99 given quantiles. Quantiles are first
//! normalized by their median and spread, which makes the fit translation and
//! scale equivariant. Mixture quantiles are found by safeguarded Newton
//! iteration; their parameter sensitivities follow from implicit
//! differentiation of `F(Q(θ); θ) = p`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{std_cdf, std_pdf};
use crate::Mixture;

pub const QUANTILE_COUNT: usize = 99;

/// Smallest component standard deviation a fit returns, kW.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Tolerance on decreasing neighbouring quantiles before they count as crossing.
const MONOTONE_TOL: f64 = 1e-9;

/// Standard normal 99 % quantile, used to turn the 1 %..99 % range into a scale.
const Z99: f64 = 2.326_347_874_040_840_8;

/// Probability level of quantile `i` (0-based): 0.01, 0.02, ..., 0.99.
pub fn quantile_level(i: usize) -> f64 {
    (i + 1) as f64 / 100.0
}

pub fn quantile_levels() -> [f64; QUANTILE_COUNT] {
    std::array::from_fn(quantile_level)
}

/// One hour's probabilistic forecast as 99 quantiles, kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileForecast {
    pub hour: usize,
    pub quantiles: Vec<f64>,
    /// Whether crossing quantiles were sorted on construction.
    pub repaired: bool,
}

impl QuantileForecast {
    pub fn new(hour: usize, mut quantiles: Vec<f64>) -> Result<Self> {
        if quantiles.len() != QUANTILE_COUNT {
            return Err(Error::Domain(format!(
                "hour {hour}: expected {QUANTILE_COUNT} quantiles, got {}",
                quantiles.len()
            )));
        }
        if let Some(i) = quantiles.iter().position(|q| !q.is_finite()) {
            return Err(Error::Domain(format!(
                "hour {hour}: quantile q{:02} is not finite",
                i + 1
            )));
        }
        let crossing = quantiles.windows(2).any(|w| w[1] < w[0] - MONOTONE_TOL);
        let unsorted = quantiles.windows(2).any(|w| w[1] < w[0]);
        if unsorted {
            quantiles.sort_by(f64::total_cmp);
        }
        if crossing {
            log::warn!("hour {hour}: crossing quantiles sorted");
        }
        Ok(Self {
            hour,
            quantiles,
            repaired: crossing,
        })
    }

    pub fn from_mixture(hour: usize, m: &Mixture) -> Result<Self> {
        let quantiles = (0..QUANTILE_COUNT)
            .map(|i| m.quantile(quantile_level(i)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(hour, quantiles)
    }

    pub fn median(&self) -> f64 {
        self.quantiles[49]
    }
}

/// Outcome of fitting a mixture to quantiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureFit {
    pub mixture: Mixture,
    /// Root-mean-square quantile error, kW.
    pub rms: f64,
    /// All quantiles were equal; the mixture is a floored near-delta.
    pub degenerate: bool,
}

/// Forecast error model used to synthesize quantile forecasts from the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticForecastModel {
    /// kW
    pub bias: f64,
    /// Spread at lead hour 0, kW.
    pub sigma_base: f64,
    /// Spread added per lead hour, kW.
    pub sigma_growth: f64,
    /// Weight of the shifted skew component.
    pub skew_weight: f64,
    /// Offset of the skew component from the main one, kW.
    pub skew_offset: f64,
}

impl Default for SyntheticForecastModel {
    fn default() -> Self {
        Self {
            bias: 0.0,
            sigma_base: 0.3,
            sigma_growth: 0.02,
            skew_weight: 0.2,
            skew_offset: 1.5,
        }
    }
}

impl SyntheticForecastModel {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.bias,
            self.sigma_base,
            self.sigma_growth,
            self.skew_weight,
            self.skew_offset,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "forecast model parameters must be finite".into(),
            ));
        }
        if !(self.sigma_base > 0.0) {
            return Err(Error::Config(format!(
                "sigma_base must be positive, got {}",
                self.sigma_base
            )));
        }
        if self.sigma_growth < 0.0 {
            return Err(Error::Config(format!(
                "sigma_growth must be nonnegative, got {}",
                self.sigma_growth
            )));
        }
        if !(0.0..=1.0).contains(&self.skew_weight) {
            return Err(Error::Config(format!(
                "skew_weight must lie in [0,1], got {}",
                self.skew_weight
            )));
        }
        Ok(())
    }

    pub fn sigma(&self, lead: usize) -> f64 {
        self.sigma_base + lead as f64 * self.sigma_growth
    }

    /// Zero-mean forecast error distribution at a lead hour.
    pub fn error_mixture(&self, lead: usize) -> Result<Mixture> {
        let w = self.skew_weight;
        let o = self.skew_offset;
        let s = self.sigma(lead);
        Mixture::from_params(1.0 - w, -w * o, s, (1.0 - w) * o, s)
    }

    /// Forecast distribution of one hour: the error distribution placed at `center`.
    pub fn forecast_mixture(&self, lead: usize, center: f64) -> Result<Mixture> {
        let e = self.error_mixture(lead)?;
        let [a, b] = *e.components();
        Mixture::from_params(a.weight, center + a.mean, a.stdev, center + b.mean, b.stdev)
    }
}

/// Quantile forecasts for lead hours `0..truth.len()` issued at one origin.
///
/// Each lead's forecast is the error distribution centred at
/// `truth + bias - δ`, with `δ` drawn from that same distribution, so the
/// truth is a draw from the (bias-shifted) forecast.
pub fn synthesize_quantiles(
    truth: &[f64],
    model: &SyntheticForecastModel,
    seed: u64,
) -> Result<Vec<QuantileForecast>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synthesize_with(truth, model, &mut rng)
}

fn synthesize_with(
    truth: &[f64],
    model: &SyntheticForecastModel,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<QuantileForecast>> {
    model.validate()?;
    if truth.is_empty() {
        return Err(Error::Domain("truth series is empty".into()));
    }
    truth
        .iter()
        .enumerate()
        .map(|(lead, &y)| {
            let delta = sample_error(model, lead, rng);
            let m = model.forecast_mixture(lead, y + model.bias - delta)?;
            QuantileForecast::new(
                lead,
                (0..QUANTILE_COUNT)
                    .map(|i| m.quantile(quantile_level(i)))
                    .collect::<Result<_>>()?,
            )
        })
        .collect()
}

fn sample_error(model: &SyntheticForecastModel, lead: usize, rng: &mut ChaCha8Rng) -> f64 {
    use rand::Rng;
    let w = model.skew_weight;
    let o = model.skew_offset;
    let noise = Normal::new(0.0, model.sigma(lead))
        .expect("validated spread")
        .sample(rng);
    let skewed = rng.gen::<f64>() < w;
    noise + if skewed { (1.0 - w) * o } else { -w * o }
}

/// Rolling forecasts: for every origin `t`, quantiles for hours `t..min(t + horizon, len)`.
///
/// Origins draw from independent streams of one seeded generator, so any
/// single origin can be reproduced on its own.
pub fn synthesize_rolling(
    truth: &[f64],
    model: &SyntheticForecastModel,
    horizon: usize,
    seed: u64,
) -> Result<Vec<Vec<QuantileForecast>>> {
    if horizon == 0 {
        return Err(Error::Domain(
            "forecast horizon must be at least one hour".into(),
        ));
    }
    (0..truth.len())
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let end = (t + horizon).min(truth.len());
            let mut fc = synthesize_with(&truth[t..end], model, &mut rng)?;
            for (lead, q) in fc.iter_mut().enumerate() {
                q.hour = t + lead;
            }
            Ok(fc)
        })
        .collect()
}

/// Deterministic point forecast: the mixture mean.
pub fn point_forecast(m: &Mixture) -> f64 {
    m.mean()
}

/// Parameters `(w1, mu1, s1, mu2, s2)` in normalized units.
type Params = [f64; 5];

const PARAM_LOWER: Params = [0.0, -20.0, 1e-3, -20.0, 1e-3];
const PARAM_UPPER: Params = [1.0, 20.0, 20.0, 20.0, 20.0];

/// Standard normal quantiles at the 99 levels.
fn z_levels() -> &'static [f64; QUANTILE_COUNT] {
    use std::sync::OnceLock;
    static Z: OnceLock<[f64; QUANTILE_COUNT]> = OnceLock::new();
    Z.get_or_init(|| {
        let n = Mixture::normal(0.0, 1.0).expect("valid");
        std::array::from_fn(|i| n.quantile(quantile_level(i)).expect("interior level"))
    })
}

struct QuantileObjective<'a> {
    target: &'a [f64],
    /// Quantiles of the last evaluation, used as Newton starts for the next.
    last: std::cell::RefCell<Vec<f64>>,
}

impl QuantileObjective<'_> {
    /// Quantile residuals `q_i(θ) - target_i` and, optionally, their Jacobian
    /// (row-major, 5 columns) by implicit differentiation of `F(q_i) = p_i`.
    fn residuals(&self, th: &[f64], res: &mut [f64], mut jac: Option<&mut [f64]>) -> bool {
        let (w, m1, s1, m2, s2) = (th[0], th[1], th[2], th[3], th[4]);
        let Ok(mix) = Mixture::from_params(w, m1, s1, m2, s2) else {
            return false;
        };
        let z = z_levels();
        let mut last = self.last.borrow_mut();
        last.resize(self.target.len(), f64::NAN);
        for (i, &t) in self.target.iter().enumerate() {
            let p = quantile_level(i);
            let (q1, q2) = (m1 + s1 * z[i], m2 + s2 * z[i]);
            let (lo, hi) = match (w > 0.0, w < 1.0) {
                (true, true) => (q1.min(q2), q1.max(q2)),
                (true, false) => (q1, q1),
                _ => (q2, q2),
            };
            let start = if last[i] > lo && last[i] < hi {
                last[i]
            } else {
                w * q1 + (1.0 - w) * q2
            };
            let q = if hi - lo <= 0.0 {
                lo
            } else {
                mix.solve_quantile(p, lo, hi, start)
            };
            last[i] = q;
            res[i] = q - t;
            if let Some(jac) = jac.as_deref_mut() {
                let (z1, z2) = ((q - m1) / s1, (q - m2) / s2);
                let (d1, d2) = (std_pdf(z1), std_pdf(z2));
                let dens = w * d1 / s1 + (1.0 - w) * d2 / s2;
                let row = &mut jac[5 * i..5 * i + 5];
                if dens > 0.0 {
                    let dfd = [
                        std_cdf(z1) - std_cdf(z2),
                        -w * d1 / s1,
                        -w * d1 * z1 / s1,
                        -(1.0 - w) * d2 / s2,
                        -(1.0 - w) * d2 * z2 / s2,
                    ];
                    for j in 0..5 {
                        row[j] = -dfd[j] / dens;
                    }
                } else {
                    row.iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
        true
    }

    /// Mean squared quantile error and, optionally, its gradient.
    #[cfg(test)]
    fn eval(&self, th: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let n = self.target.len();
        let mut res = vec![0.0; n];
        let mut jac = vec![0.0; 5 * n];
        let want = grad.is_some();
        if !self.residuals(th, &mut res, want.then_some(&mut jac[..])) {
            return f64::INFINITY;
        }
        if let Some(out) = grad {
            for j in 0..5 {
                out[j] = 2.0 * (0..n).map(|i| res[i] * jac[5 * i + j]).sum::<f64>() / n as f64;
            }
        }
        res.iter().map(|r| r * r).sum::<f64>() / n as f64
    }

    /// Box-constrained Levenberg-Marquardt from `x0`; returns the mean squared
    /// error and the parameters.
    fn levenberg_marquardt(&self, x0: Params) -> (f64, Params) {
        let n = self.target.len();
        let mut x = x0;
        let mut res = vec![0.0; n];
        let mut jac = vec![0.0; 5 * n];
        let mut trial = vec![0.0; n];
        if !self.residuals(&x, &mut res, Some(&mut jac)) {
            return (f64::INFINITY, x);
        }
        let mut ssr: f64 = res.iter().map(|r| r * r).sum();
        // Damping update after Nielsen: scale by the gain ratio on success,
        // grow geometrically on failure.
        let mut mu = 1e-3;
        let mut nu = 2.0;
        let mut evaluations = 0;
        while evaluations < LM_MAX_EVALUATIONS && ssr / (n as f64) >= EXACT_FIT_MSE {
            let mut jtj = [0.0; 25];
            let mut jtr = [0.0; 5];
            for i in 0..n {
                let row = &jac[5 * i..5 * i + 5];
                for a in 0..5 {
                    jtr[a] += row[a] * res[i];
                    for b in 0..5 {
                        jtj[5 * a + b] += row[a] * row[b];
                    }
                }
            }
            let mut a = jtj;
            for k in 0..5 {
                a[6 * k] += mu * jtj[6 * k].max(1e-12);
            }
            let mut step = jtr.map(|v| -v);
            if !crate::nlp::cholesky_solve(&mut a, 5, &mut step) {
                mu *= nu;
                nu *= 2.0;
                continue;
            }
            let mut cand = x;
            for k in 0..5 {
                cand[k] = (x[k] + step[k]).max(PARAM_LOWER[k]).min(PARAM_UPPER[k]);
            }
            let moved = (0..5).map(|k| (cand[k] - x[k]).abs()).fold(0.0, f64::max);
            if moved <= 1e-12 * (1.0 + x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))) {
                break;
            }
            evaluations += 1;
            let new_ssr = if self.residuals(&cand, &mut trial, None) {
                trial.iter().map(|r| r * r).sum()
            } else {
                f64::INFINITY
            };
            // Predicted decrease of the linearized model for the clamped step.
            let delta: Vec<f64> = (0..5).map(|k| cand[k] - x[k]).collect();
            let mut predicted = 0.0;
            for i in 0..n {
                let lin: f64 = (0..5).map(|k| jac[5 * i + k] * delta[k]).sum();
                predicted += res[i] * res[i] - (res[i] + lin) * (res[i] + lin);
            }
            let gain = if predicted > 0.0 {
                (ssr - new_ssr) / predicted
            } else {
                -1.0
            };
            if new_ssr < ssr && gain > 0.0 {
                let relative = (ssr - new_ssr) / ssr;
                x = cand;
                ssr = new_ssr;
                evaluations += 1;
                self.residuals(&x, &mut res, Some(&mut jac));
                mu *= (1.0 / 3.0_f64).max(1.0 - (2.0 * gain - 1.0).powi(3));
                nu = 2.0;
                if relative < 1e-12 {
                    break;
                }
            } else {
                mu *= nu;
                nu *= 2.0;
                if mu > 1e12 {
                    break;
                }
            }
        }
        (ssr / n as f64, x)
    }
}

const LM_MAX_EVALUATIONS: usize = 400;

/// Normalized mean squared error treated as an exact fit (RMS 1e-4 of the spread).
const EXACT_FIT_MSE: f64 = 1e-8;

fn initial_guesses(q: &[f64]) -> [Params; 8] {
    // Robust spread from the central 68 % of the normalized quantiles.
    let sd = (0.5 * (q[83] - q[15])).max(0.05);
    let med = q[49];
    let main_low = [0.75, q[39], 0.8 * sd, q[89], 1.5 * sd];
    let main_high = [0.75, q[59], 0.8 * sd, q[9], 1.5 * sd];
    // A long right tail suggests a heavy component below a light one.
    let (first, second) = if q[89] - med >= med - q[9] {
        (main_low, main_high)
    } else {
        (main_high, main_low)
    };
    // A light narrow bump inside a wide main component is a separate basin.
    let bump_right = [0.85, med, 1.1 * sd, q[69], 0.5 * sd];
    let bump_left = [0.85, med, 1.1 * sd, q[29], 0.5 * sd];
    // So is a light component far out in one tail.
    let tail_right = [0.92, q[44], sd, q[96], sd];
    let tail_left = [0.92, q[54], sd, q[2], sd];
    // Identical components are a saddle of the fit, so the symmetric guess goes last.
    [
        first,
        second,
        [0.5, q[24], 0.5 * sd, q[74], 0.5 * sd],
        bump_right,
        bump_left,
        tail_right,
        tail_left,
        [0.5, med, sd, med, sd],
    ]
}

/// Fits a two-component mixture to 99 quantiles by quantile least squares.
pub fn fit_mixture(fc: &QuantileForecast) -> Result<MixtureFit> {
    let q = &fc.quantiles;
    let center = fc.median();
    let scale = (q[QUANTILE_COUNT - 1] - q[0]) / (2.0 * Z99);
    if !(scale > 1e-12 * center.abs().max(1.0)) {
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        let rms = (q.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / q.len() as f64).sqrt();
        return Ok(MixtureFit {
            mixture: Mixture::normal(mean, SIGMA_FLOOR)?,
            rms,
            degenerate: true,
        });
    }
    let target: Vec<f64> = q.iter().map(|v| (v - center) / scale).collect();
    let obj = QuantileObjective {
        target: &target,
        last: Default::default(),
    };
    let mut best: Option<(f64, Params)> = None;
    for x0 in initial_guesses(&target) {
        let mut x0 = x0;
        crate::nlp::project(&mut x0, &PARAM_LOWER, &PARAM_UPPER);
        let (value, x) = obj.levenberg_marquardt(x0);
        if best.as_ref().map_or(true, |(v, _)| value < *v) {
            best = Some((value, x));
        }
        // An essentially exact fit cannot be improved by further starts.
        if best.as_ref().is_some_and(|(v, _)| *v < EXACT_FIT_MSE) {
            break;
        }
    }
    let (value, th) = best.expect("at least one start");
    let mixture = Mixture::from_params(
        th[0],
        center + scale * th[1],
        (scale * th[2]).max(SIGMA_FLOOR),
        center + scale * th[3],
        (scale * th[4]).max(SIGMA_FLOOR),
    )?;
    Ok(MixtureFit {
        mixture,
        rms: scale * value.sqrt(),
        degenerate: false,
    })
}

/// RMS distance between a mixture's quantiles and a quantile forecast, kW.
pub fn quantile_rms(m: &Mixture, fc: &QuantileForecast) -> Result<f64> {
    let mut sum = 0.0;
    for (i, &t) in fc.quantiles.iter().enumerate() {
        sum += (m.quantile(quantile_level(i))? - t).powi(2);
    }
    Ok((sum / fc.quantiles.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn levels() {
        let l = quantile_levels();
        assert_eq!(l[0], 0.01);
        assert_eq!(l[98], 0.99);
        assert_abs_diff_eq!(z_levels()[49], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z_levels()[98], Z99, epsilon = 1e-12);
    }

    #[test]
    fn rejects_wrong_length_and_nan() {
        assert!(QuantileForecast::new(0, vec![0.0; 98]).is_err());
        let mut q = vec![0.0; 99];
        q[3] = f64::NAN;
        assert!(QuantileForecast::new(0, q).is_err());
    }

    #[test]
    fn crossing_quantiles_are_sorted() {
        let mut q: Vec<f64> = (0..99).map(|i| i as f64 * 0.1).collect();
        q.swap(10, 11);
        let fc = QuantileForecast::new(0, q).unwrap();
        assert!(fc.repaired);
        assert!(fc.quantiles.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn single_normal_round_trip() {
        let truth = Mixture::normal(1.5, 0.6).unwrap();
        let fit = fit_mixture(&QuantileForecast::from_mixture(0, &truth).unwrap()).unwrap();
        assert!(!fit.degenerate);
        assert_abs_diff_eq!(fit.mixture.mean(), 1.5, epsilon = 0.01);
        assert!(fit.rms < 0.01);
    }

    #[test]
    fn known_mixture_round_trip() {
        let truth = Mixture::from_params(0.7, -1.0, 0.4, 2.0, 0.8).unwrap();
        let fc = QuantileForecast::from_mixture(0, &truth).unwrap();
        let fit = fit_mixture(&fc).unwrap();
        assert!(fit.rms < 0.02, "rms {}", fit.rms);
        assert_abs_diff_eq!(
            quantile_rms(&fit.mixture, &fc).unwrap(),
            fit.rms,
            epsilon = 1e-9
        );
    }

    #[test]
    fn constant_quantiles_give_near_delta() {
        let fit = fit_mixture(&QuantileForecast::new(0, vec![0.0; 99]).unwrap()).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.mixture.mean(), 0.0);
        assert_eq!(fit.mixture.max_stdev(), SIGMA_FLOOR);
    }

    #[test]
    fn quantile_gradient_matches_finite_differences() {
        let truth = Mixture::from_params(0.3, -0.5, 0.7, 1.0, 1.2).unwrap();
        let fc = QuantileForecast::from_mixture(0, &truth).unwrap();
        let obj = QuantileObjective {
            target: &fc.quantiles,
            last: Default::default(),
        };
        let th = [0.55, -0.2, 0.9, 0.8, 0.6];
        let mut g = [0.0; 5];
        obj.eval(&th, Some(&mut g));
        for j in 0..5 {
            let h = 1e-6;
            let mut up = th;
            let mut dn = th;
            up[j] += h;
            dn[j] -= h;
            let fd = (obj.eval(&up, None) - obj.eval(&dn, None)) / (2.0 * h);
            assert!(
                (g[j] - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                "{j}: {} vs {fd}",
                g[j]
            );
        }
    }

    #[test]
    fn synthesized_quantiles_collapse_without_noise() {
        let truth = [1.0, -2.0, 0.5];
        let model = SyntheticForecastModel {
            sigma_base: 1e-9,
            sigma_growth: 0.0,
            skew_weight: 0.0,
            ..Default::default()
        };
        let fc = synthesize_quantiles(&truth, &model, 3).unwrap();
        for (f, &y) in fc.iter().zip(&truth) {
            assert!(f.quantiles.iter().all(|&q| (q - y).abs() < 1e-7));
        }
    }

    #[test]
    fn symmetric_without_skew() {
        let model = SyntheticForecastModel {
            skew_weight: 0.0,
            ..Default::default()
        };
        let fc = synthesize_quantiles(&[0.7, 1.2], &model, 11).unwrap();
        for f in &fc {
            let mid = f.median();
            for i in 0..49 {
                assert_abs_diff_eq!(
                    mid - f.quantiles[i],
                    f.quantiles[98 - i] - mid,
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn spread_grows_with_lead() {
        let model = SyntheticForecastModel::default();
        let fc = synthesize_quantiles(&[0.0; 24], &model, 5).unwrap();
        let width = |f: &QuantileForecast| f.quantiles[89] - f.quantiles[9];
        assert!(width(&fc[23]) > width(&fc[0]));
    }

    #[test]
    fn deterministic_given_seed() {
        let model = SyntheticForecastModel::default();
        let a = synthesize_rolling(&[0.1, 0.5, -1.0, 2.0], &model, 3, 42).unwrap();
        let b = synthesize_rolling(&[0.1, 0.5, -1.0, 2.0], &model, 3, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[3].len(), 1);
        assert_eq!(a[1][2].hour, 3);
        let c = synthesize_rolling(&[0.1, 0.5, -1.0, 2.0], &model, 3, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_models_are_rejected() {
        for m in [
            SyntheticForecastModel {
                sigma_base: 0.0,
                ..Default::default()
            },
            SyntheticForecastModel {
                sigma_growth: -0.1,
                ..Default::default()
            },
            SyntheticForecastModel {
                skew_weight: 1.5,
                ..Default::default()
            },
        ] {
            assert!(synthesize_quantiles(&[1.0], &m, 0).is_err());
        }
    }
}
