//! Synthetic household scenarios: net-load, wholesale prices and the bundled corpus.
//!
//! Load follows a daily shape with morning and evening peaks, scaled per day
//! and perturbed by AR(1) noise. PV follows a half-sine over the season's
//! daylight hours, scaled by a daily cloudiness draw. Net-load is load minus
//! PV, so surplus hours are negative. Wholesale prices have morning and
//! evening peaks, a midday dip that deepens with PV output, and daily level
//! shifts.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{synthesize_rolling, QuantileForecast, SyntheticForecastModel};
use crate::scheduler::Price;
use crate::sim::Scenario;
use crate::tariff::{self, DEFAULT_BUY_MEAN, DEFAULT_SELL_MEAN};
use crate::Tariff;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    NoPv,
    WinterPv,
    SpringPv,
    SummerPv,
}

impl Profile {
    pub const ALL: [Profile; 4] = [Self::NoPv, Self::WinterPv, Self::SpringPv, Self::SummerPv];

    pub fn name(self) -> &'static str {
        match self {
            Self::NoPv => "no-pv",
            Self::WinterPv => "winter-pv",
            Self::SpringPv => "spring-pv",
            Self::SummerPv => "summer-pv",
        }
    }

    /// PV peak on a clear day as a fraction of the installed power.
    fn clear_sky_peak(self) -> f64 {
        match self {
            Self::NoPv => 0.0,
            Self::WinterPv => 0.45,
            Self::SpringPv => 0.75,
            Self::SummerPv => 0.9,
        }
    }

    /// Sunrise and sunset, hours.
    fn daylight(self) -> (f64, f64) {
        match self {
            Self::NoPv | Self::WinterPv => (8.0, 16.5),
            Self::SpringPv => (6.5, 19.5),
            Self::SummerPv => (5.0, 21.0),
        }
    }

    /// Typical daily cloudiness range (fraction of clear-sky output).
    fn clearness(self) -> (f64, f64) {
        match self {
            Self::NoPv | Self::WinterPv => (0.1, 0.8),
            Self::SpringPv => (0.3, 1.0),
            Self::SummerPv => (0.5, 1.0),
        }
    }

    /// Relative load level; heating and lighting raise winter demand.
    fn load_level(self) -> f64 {
        match self {
            Self::NoPv | Self::WinterPv => 1.25,
            Self::SpringPv => 1.0,
            Self::SummerPv => 0.9,
        }
    }

    /// Day of year of the first simulated day.
    pub fn start_day_of_year(self) -> u32 {
        match self {
            Self::NoPv | Self::WinterPv => 15,
            Self::SpringPv => 105,
            Self::SummerPv => 180,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| {
                let valid: Vec<_> = Self::ALL.iter().map(|p| p.name()).collect();
                Error::Config(format!(
                    "unknown profile {s:?}; valid profiles: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// Household and market parameters of one synthetic scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HouseholdConfig {
    pub profile: Profile,
    pub days: usize,
    /// Average load, kW.
    pub mean_load: f64,
    /// Installed PV power, kWp.
    pub pv_kwp: f64,
    /// Average wholesale price, €/kWh.
    pub wholesale_mean: f64,
    /// Peak-to-trough amplitude of the daily wholesale shape, €/kWh.
    pub wholesale_swing: f64,
}

impl Default for HouseholdConfig {
    fn default() -> Self {
        Self {
            profile: Profile::SpringPv,
            days: 14,
            mean_load: 0.55,
            pv_kwp: 6.0,
            wholesale_mean: 0.10,
            wholesale_swing: 0.08,
        }
    }
}

impl HouseholdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(Error::Config("days must be at least 1".into()));
        }
        let vals = [
            self.mean_load,
            self.pv_kwp,
            self.wholesale_mean,
            self.wholesale_swing,
        ];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(
                "household parameters must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn hours(&self) -> usize {
        24 * self.days
    }
}

/// Hourly series of one synthetic household.
#[derive(Debug, Clone, PartialEq)]
pub struct Household {
    /// kW
    pub load: Vec<f64>,
    /// PV output, kW (nonnegative).
    pub pv: Vec<f64>,
    /// Net-load `load - pv`, kW.
    pub netload: Vec<f64>,
    /// €/kWh
    pub wholesale: Vec<f64>,
}

/// Normalized daily load shape (mean 1 over the day).
fn load_shape(hour: f64) -> f64 {
    let bump = |centre: f64, width: f64| (-0.5 * ((hour - centre) / width).powi(2)).exp();
    let raw = 0.45 + 0.9 * bump(7.5, 1.2) + 0.35 * bump(12.5, 1.5) + 1.5 * bump(19.5, 1.8);
    raw / 0.898
}

/// Clear-sky PV output as a fraction of the seasonal peak.
fn pv_shape(profile: Profile, hour: f64) -> f64 {
    let (rise, set) = profile.daylight();
    if hour <= rise || hour >= set {
        return 0.0;
    }
    (PI * (hour - rise) / (set - rise)).sin().powf(1.5)
}

/// Daily wholesale price shape, zero mean over the day.
fn price_shape(hour: f64) -> f64 {
    let bump = |centre: f64, width: f64| (-0.5 * ((hour - centre) / width).powi(2)).exp();
    0.6 * bump(8.0, 1.5) + bump(19.0, 2.0) - 0.55 * bump(13.5, 2.5) - 0.158
}

/// Generates one household; deterministic given the seed.
pub fn household(cfg: &HouseholdConfig, seed: u64) -> Result<Household> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    let n = cfg.hours();
    let (lo_clear, hi_clear) = cfg.profile.clearness();
    let mut load = Vec::with_capacity(n);
    let mut pv = Vec::with_capacity(n);
    let mut wholesale = Vec::with_capacity(n);
    let mut ar = 0.0;
    for _ in 0..cfg.days {
        let day_scale = (1.0 + 0.15 * unit.sample(&mut rng)).max(0.5);
        let clear = rng.gen_range(lo_clear..=hi_clear);
        let level = cfg.wholesale_mean + 0.02 * unit.sample(&mut rng);
        for h in 0..24 {
            let t = h as f64 + 0.5;
            ar = 0.6 * ar + 0.25 * unit.sample(&mut rng);
            let base = cfg.mean_load * cfg.profile.load_level() * day_scale * load_shape(t);
            let l = (base * (1.0 + ar)).max(0.05);
            let flicker = (1.0 + 0.1 * unit.sample(&mut rng)).max(0.0);
            let clear_sky = pv_shape(cfg.profile, t);
            let p = cfg.pv_kwp * cfg.profile.clear_sky_peak() * clear * clear_sky * flicker;
            let dip = 0.04 * clear * clear_sky * cfg.profile.clear_sky_peak();
            let w =
                level + cfg.wholesale_swing * price_shape(t) - dip + 0.008 * unit.sample(&mut rng);
            load.push(l);
            pv.push(p);
            wholesale.push(w);
        }
    }
    let netload = load.iter().zip(&pv).map(|(l, p)| l - p).collect();
    Ok(Household {
        load,
        pv,
        netload,
        wholesale,
    })
}

/// One entry of a scenario corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub household: HouseholdConfig,
    pub forecast: SyntheticForecastModel,
}

/// Number of scenarios in the bundled corpus.
pub const CORPUS_SIZE: usize = 10;

/// The bundled corpus: ten households across seasons and forecast qualities.
///
/// Every scenario draws its seed from `root_seed`, so the corpus is
/// reproducible from one number.
pub fn corpus(root_seed: u64, days: usize) -> Vec<ScenarioConfig> {
    let table: [(Profile, f64, f64, f64, f64, f64); CORPUS_SIZE] = [
        // profile, mean load, kWp, sigma_base, skew_weight, skew_offset
        (Profile::SummerPv, 0.50, 6.0, 0.30, 0.20, 1.5),
        (Profile::SummerPv, 0.65, 8.0, 0.40, 0.15, 2.0),
        (Profile::SpringPv, 0.55, 6.0, 0.30, 0.25, 1.2),
        (Profile::SpringPv, 0.70, 5.0, 0.35, 0.20, 1.8),
        (Profile::SpringPv, 0.45, 7.0, 0.25, 0.30, 1.0),
        (Profile::WinterPv, 0.60, 6.0, 0.30, 0.20, 1.5),
        (Profile::WinterPv, 0.75, 9.0, 0.40, 0.25, 1.6),
        (Profile::NoPv, 0.60, 0.0, 0.30, 0.20, 1.4),
        (Profile::SummerPv, 0.80, 10.0, 0.45, 0.20, 2.2),
        (Profile::SpringPv, 0.60, 8.0, 0.35, 0.15, 1.5),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    table
        .iter()
        .enumerate()
        .map(
            |(i, &(profile, mean_load, pv_kwp, sigma_base, skew_weight, skew_offset))| {
                ScenarioConfig {
                    name: format!("s{:02}-{}", i + 1, profile.name()),
                    seed: rng.gen(),
                    household: HouseholdConfig {
                        profile,
                        days,
                        mean_load,
                        pv_kwp,
                        ..HouseholdConfig::default()
                    },
                    forecast: SyntheticForecastModel {
                        bias: 0.0,
                        sigma_base,
                        sigma_growth: 0.015,
                        skew_weight,
                        skew_offset,
                    },
                }
            },
        )
        .collect()
}

/// Everything a scenario needs: truth, tariff and rolling quantile forecasts.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub name: String,
    pub household: Household,
    pub tariff: Tariff,
    /// `quantiles[t]`: forecasts issued at hour `t` for hours `t..t + horizon`.
    pub quantiles: Vec<Vec<QuantileForecast>>,
}

impl Bundle {
    pub fn prices(&self) -> Vec<Price> {
        self.tariff
            .c_buy
            .iter()
            .zip(&self.tariff.c_sell)
            .map(|(&c_buy, &c_sell)| Price { c_buy, c_sell })
            .collect()
    }

    /// Fits every forecast and assembles the simulation input.
    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::from_quantiles(
            &self.name,
            &self.household.netload,
            &self.prices(),
            &self.quantiles,
        )
    }
}

/// Generates a scenario bundle; household and forecasts use independent seeds
/// derived from `cfg.seed`.
pub fn bundle(cfg: &ScenarioConfig, horizon: usize) -> Result<Bundle> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (house_seed, forecast_seed) = (rng.gen(), rng.gen());
    let household = household(&cfg.household, house_seed)?;
    let tariff = tariff::build(&household.wholesale, DEFAULT_BUY_MEAN, DEFAULT_SELL_MEAN)?;
    let quantiles = synthesize_rolling(&household.netload, &cfg.forecast, horizon, forecast_seed)?;
    Ok(Bundle {
        name: cfg.name.clone(),
        household,
        tariff,
        quantiles,
    })
}
