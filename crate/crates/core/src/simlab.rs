//! Seeded synthetic scenarios with known ground truth.
//!
//! A scenario draws two latent monthly macro factors, a daily attention
//! factor and GARCH-MIDAS returns driven by the macro factors, then renders
//! them into the four input files: 5-minute prices, daily technical
//! indicators, monthly macro indicators and attention indices. The variance
//! of day `d` is `h_d * exp(gamma * a_{d-1} - gamma^2 / 2)`, so yesterday's
//! attention moves today's variance on top of the GARCH-MIDAS component.

use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::garch_midas::{self, MidasError, MidasParams, MidasSpec};
use crate::marketdata::{
    write_attention, write_daily, write_intraday, write_monthly, AttentionRecord, Bar, DailyRecord, IntradaySeries,
    MonthlyRecord, YearMonth, MAX_BARS_PER_DAY,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("bad scenario: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Midas(#[from] MidasError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub months: usize,
    /// Trading days per month; day `i` of a month is calendar day `i`.
    pub days_per_month: usize,
    pub bars_per_day: usize,
    pub start: YearMonth,
    pub start_price: f64,
    /// Maximum lag `K` of the long-run component.
    pub lags: usize,
    /// GARCH-MIDAS parameters with two covariates and the log link.
    pub params: MidasParams,
    /// AR(1) coefficient of the latent macro factors.
    pub macro_ar: f64,
    /// AR(1) coefficient of the daily attention factor.
    pub attention_ar: f64,
    /// Effect of yesterday's attention on today's log variance.
    pub attention_gamma: f64,
    /// Share of each day's variance that falls outside the trading session.
    pub overnight_share: f64,
    /// Probability that an indicator cell is left empty.
    pub missing_rate: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            months: 72,
            days_per_month: 20,
            bars_per_day: MAX_BARS_PER_DAY,
            start: YearMonth::new(2015, 1),
            start_price: 3000.0,
            lags: 12,
            params: MidasParams::new(0.03, 0.06, 0.9, 0.3, vec![-0.6, 0.45], vec![4.0, 2.0]),
            macro_ar: 0.8,
            attention_ar: 0.6,
            attention_gamma: 0.5,
            overnight_share: 0.2,
            missing_rate: 0.0,
        }
    }
}

impl ScenarioSpec {
    pub fn midas_spec(&self) -> MidasSpec {
        MidasSpec::exogenous(self.lags, 2)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |s: String| Err(SimError::BadSpec(s));
        if self.days_per_month == 0 || self.days_per_month > 28 {
            return bad(format!("days per month must be in 1..=28, got {}", self.days_per_month));
        }
        if self.bars_per_day < 2 || self.bars_per_day > MAX_BARS_PER_DAY {
            return bad(format!("bars per day must be in 2..={MAX_BARS_PER_DAY}"));
        }
        if self.months <= self.lags {
            return bad(format!("need more than {} months", self.lags));
        }
        for (name, phi) in [("macro", self.macro_ar), ("attention", self.attention_ar)] {
            if !(phi.abs() < 1.0) {
                return bad(format!("{name} AR coefficient must lie in (-1, 1)"));
            }
        }
        if !(0.0..1.0).contains(&self.overnight_share) || !(0.0..1.0).contains(&self.missing_rate) {
            return bad("overnight share and missing rate must lie in [0, 1)".into());
        }
        if !(self.start_price > 0.0) || !self.attention_gamma.is_finite() {
            return bad("start price must be positive and gamma finite".into());
        }
        self.params
            .validate(&self.midas_spec())
            .map_err(|e| SimError::BadSpec(e.to_string()))
    }

    /// Trading dates and their month index.
    pub fn calendar(&self) -> (Vec<NaiveDate>, Vec<usize>) {
        let mut dates = Vec::new();
        let mut months = Vec::new();
        let mut ym = self.start;
        for t in 0..self.months {
            let first = ym.first_day();
            for i in 0..self.days_per_month {
                dates.push(first + Duration::days(i as i64));
                months.push(t);
            }
            ym = ym.succ();
        }
        (dates, months)
    }
}

/// Session minutes after the open for bar `k` (0-based) of `bars`.
fn bar_time(k: usize) -> u32 {
    5 * (k as u32 + 1)
}

/// Splits a day into an overnight move and `bars - 1` in-session moves with
/// the given variance, optionally conditioned on the close-to-close total.
///
/// Conditioning uses the Brownian-bridge adjustment: each increment absorbs
/// its variance share of the gap between the target and the unconditioned sum.
fn day_increments(variance: f64, bars: usize, overnight: f64, total: Option<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = bars - 1;
    let mut var = Vec::with_capacity(n + 1);
    var.push(overnight * variance);
    var.extend(std::iter::repeat_n((1.0 - overnight) * variance / n as f64, n));
    let mut inc: Vec<f64> = var
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(rng);
            v.sqrt() * z
        })
        .collect();
    if let Some(target) = total {
        let sum: f64 = inc.iter().sum();
        let total_var: f64 = var.iter().sum();
        if total_var > 0.0 {
            for (x, v) in inc.iter_mut().zip(&var) {
                *x += v / total_var * (target - sum);
            }
        } else {
            // no variance: the whole move happens overnight
            inc.iter_mut().for_each(|x| *x = 0.0);
            inc[0] = target;
        }
    }
    inc
}

/// Geometric random walk of 5-minute prices.
///
/// `variances[d]` is the variance of day `d`'s close-to-close percent log
/// return (including the overnight gap); the first bar of each day opens
/// after the overnight move.
pub fn gen_intraday(
    dates: &[NaiveDate],
    variances: &[f64],
    bars_per_day: usize,
    overnight_share: f64,
    start_price: f64,
    seed: u64,
) -> Result<IntradaySeries, SimError> {
    if dates.len() != variances.len() || variances.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(SimError::BadSpec("need one finite non-negative variance per date".into()));
    }
    if !(2..=MAX_BARS_PER_DAY).contains(&bars_per_day) || !(start_price > 0.0) {
        return Err(SimError::BadSpec("bad bar count or start price".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log_price = start_price.ln();
    let mut bars = Vec::with_capacity(dates.len() * bars_per_day);
    for (date, v) in dates.iter().zip(variances) {
        let inc = day_increments(*v, bars_per_day, overnight_share, None, &mut rng);
        for (k, x) in inc.iter().enumerate() {
            log_price += x / 100.0;
            bars.push(Bar {
                date: *date,
                time_min: bar_time(k),
                price: log_price.exp(),
            });
        }
    }
    IntradaySeries::new("sim", bars).map_err(|e| SimError::BadSpec(e.to_string()))
}

fn bridge_intraday(
    dates: &[NaiveDate],
    variances: &[f64],
    returns: &[f64],
    spec: &ScenarioSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Bar>, SimError> {
    let mut log_price = spec.start_price.ln();
    let mut bars = Vec::with_capacity(dates.len() * spec.bars_per_day);
    for ((date, v), r) in dates.iter().zip(variances).zip(returns) {
        let inc = day_increments(*v, spec.bars_per_day, spec.overnight_share, Some(*r), rng);
        let close_before = log_price;
        for (k, x) in inc.iter().enumerate() {
            log_price += x / 100.0;
            bars.push(Bar {
                date: *date,
                time_min: bar_time(k),
                price: log_price.exp(),
            });
        }
        // pin the close exactly so the daily return matches the model return
        log_price = close_before + r / 100.0;
        bars.last_mut().expect("at least two bars").price = log_price.exp();
    }
    Ok(bars)
}

/// Everything a scenario produces, in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub intraday: IntradaySeries,
    pub daily: Vec<DailyRecord>,
    pub monthly: Vec<MonthlyRecord>,
    pub attention: Vec<AttentionRecord>,
    pub truth: Truth,
}

/// Ground truth written to `truth.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub spec: ScenarioSpec,
    pub params: Map<String, Value>,
    /// Trading dates with a return (the seed day before them only sets the first close).
    pub dates: Vec<NaiveDate>,
    pub month_index: Vec<usize>,
    pub returns: Vec<f64>,
    /// Total variance of each day's return.
    pub variance: Vec<f64>,
    /// Index into `dates` of the first day after the lag warm-up.
    pub first_modeled_day: usize,
    /// GARCH-MIDAS components for days `first_modeled_day..`.
    pub tau: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    /// Latent monthly macro factors that drive `tau`.
    pub macro_factors: Vec<Vec<f64>>,
    /// Loadings of each macro indicator on the two latent factors.
    pub macro_loadings: Vec<[f64; 2]>,
    /// Latent daily attention factor.
    pub attention: Vec<f64>,
    pub attention_gamma: f64,
}

impl Truth {
    pub fn save(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| crate::Error::json(path, e))?;
        crate::marketdata::write_text(path, &text)
    }

    pub fn load(path: impl AsRef<Path>) -> crate::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| crate::Error::json(path, e))
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn rolling_mean(xs: &[f64], i: usize, n: usize) -> f64 {
    let lo = (i + 1).saturating_sub(n);
    xs[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
}

fn rolling_std(xs: &[f64], i: usize, n: usize) -> f64 {
    let lo = (i + 1).saturating_sub(n);
    let m = rolling_mean(xs, i, n);
    (xs[lo..=i].iter().map(|x| (x - m).powi(2)).sum::<f64>() / (i + 1 - lo) as f64).sqrt()
}

fn ema(xs: &[f64], span: usize) -> Vec<f64> {
    let a = 2.0 / (span as f64 + 1.0);
    let mut out = Vec::with_capacity(xs.len());
    let mut e = xs[0];
    for x in xs {
        e = a * x + (1.0 - a) * e;
        out.push(e);
    }
    out
}

/// Daily OHLC and technical indicators from the bars of each day.
fn technical_indicators(bars_by_day: &[&[Bar]], prev_close: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 13]> {
    let n = bars_by_day.len();
    let close: Vec<f64> = bars_by_day.iter().map(|b| b.last().expect("bars").price).collect();
    let volume: Vec<f64> = (0..n).map(|_| 1e8 * (0.3 * normal(rng)).exp()).collect();
    let ema12 = ema(&close, 12);
    let ema26 = ema(&close, 26);
    let mut obv = 0.0;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let prices: Vec<f64> = bars_by_day[i].iter().map(|b| b.price).collect();
        let open = prices[0];
        let high = prices.iter().copied().fold(f64::MIN, f64::max);
        let low = prices.iter().copied().fold(f64::MAX, f64::min);
        let prev = if i == 0 { prev_close } else { close[i - 1] };
        obv += (close[i] - prev).signum() * volume[i];
        let lo = (i + 1).saturating_sub(6);
        let (mut up, mut down) = (0.0, 0.0);
        for j in lo..=i {
            let before = if j == 0 { prev_close } else { close[j - 1] };
            let d = close[j] - before;
            if d > 0.0 {
                up += d;
            } else {
                down -= d;
            }
        }
        let rsi = if up + down > 0.0 { 100.0 * up / (up + down) } else { 50.0 };
        let back = i.saturating_sub(12);
        let base = if i >= 12 { close[back] } else { prev_close };
        let roc = 100.0 * (close[i] / base - 1.0);
        let ma20 = rolling_mean(&close, i, 20);
        rows.push([
            open,
            high,
            low,
            close[i],
            volume[i],
            100.0 * volume[i] / 4e10,
            ma20 + 2.0 * rolling_std(&close, i, 20),
            rolling_mean(&close, i, 5),
            ma20,
            ema12[i] - ema26[i],
            rsi,
            obv,
            roc,
        ]);
    }
    rows
}

fn maybe_missing(v: f64, rate: f64, rng: &mut ChaCha8Rng) -> Option<f64> {
    if rate > 0.0 && rng.random::<f64>() < rate {
        None
    } else {
        Some(v)
    }
}

/// Generates a full scenario: all four input files plus ground truth.
pub fn gen_full_scenario(spec: &ScenarioSpec) -> Result<Scenario, SimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (dates, month_index) = spec.calendar();
    let n = dates.len();

    let macro_factors: Vec<Vec<f64>> = (0..2)
        .map(|_| garch_midas::ar1_series(spec.months, spec.macro_ar, &mut rng))
        .collect();
    let attention = garch_midas::ar1_series(n + 1, spec.attention_ar, &mut rng);
    let gamma = spec.attention_gamma;
    // attention[d] is the value observed on the day before dates[d]
    let multiplier: Vec<f64> = (0..n)
        .map(|d| (gamma * attention[d] - 0.5 * gamma * gamma).exp())
        .collect();
    let shocks: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let midas = garch_midas::simulate_path(
        &spec.midas_spec(),
        &spec.params,
        &month_index,
        &macro_factors,
        Some(&multiplier),
        &shocks,
    )?;
    let first = midas.filtered.first_day;
    let base_var = (spec.params.m).exp();
    let variance: Vec<f64> = (0..n)
        .map(|d| {
            let h = if d < first { base_var } else { midas.filtered.h[d - first] };
            h * multiplier[d]
        })
        .collect();
    let returns = midas.data.returns.clone();

    // a seed day before the sample sets the first close
    let seed_day = spec.start.first_day() - Duration::days(1);
    let mut all_dates = vec![seed_day];
    all_dates.extend(&dates);
    let mut all_var = vec![variance[0]];
    all_var.extend(&variance);
    let seed_return = variance[0].sqrt() * normal(&mut rng);
    let mut all_returns = vec![seed_return];
    all_returns.extend(&returns);
    let bars = bridge_intraday(&all_dates, &all_var, &all_returns, spec, &mut rng)?;
    let intraday = IntradaySeries::new("sim", bars).map_err(|e| SimError::BadSpec(e.to_string()))?;

    let by_day: Vec<&[Bar]> = intraday.days().map(|(_, b)| b).collect();
    let prev_close = by_day[0].last().expect("bars").price;
    let tech = technical_indicators(&by_day[1..], prev_close, &mut rng);
    let rate = spec.missing_rate;
    let daily: Vec<DailyRecord> = dates
        .iter()
        .zip(&tech)
        .map(|(d, row)| {
            let mut rec = DailyRecord {
                date: *d,
                open: Some(row[0]),
                high: Some(row[1]),
                low: Some(row[2]),
                close: Some(row[3]),
                volume: None,
                turn: None,
                boll: None,
                ma5: None,
                ma20: None,
                macd: None,
                rsi: None,
                sobv: None,
                roc: None,
            };
            let slots = [
                &mut rec.volume,
                &mut rec.turn,
                &mut rec.boll,
                &mut rec.ma5,
                &mut rec.ma20,
                &mut rec.macd,
                &mut rec.rsi,
                &mut rec.sobv,
                &mut rec.roc,
            ];
            for (slot, v) in slots.into_iter().zip(&row[4..]) {
                *slot = maybe_missing(*v, rate, &mut rng);
            }
            rec
        })
        .collect();

    let loadings: Vec<[f64; 2]> = (0..10)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let levels: Vec<f64> = (0..10).map(|_| rng.random_range(50.0..150.0)).collect();
    let mut ym = spec.start;
    let mut monthly = Vec::with_capacity(spec.months);
    for t in 0..spec.months {
        let mut values = [None; 10];
        for (i, v) in values.iter_mut().enumerate() {
            let x = loadings[i][0] * macro_factors[0][t] + loadings[i][1] * macro_factors[1][t] + 0.2 * normal(&mut rng);
            *v = maybe_missing(levels[i] + 5.0 * x, if t == 0 { 0.0 } else { rate }, &mut rng);
        }
        monthly.push(MonthlyRecord { month: ym, values });
        ym = ym.succ();
    }

    let bases: Vec<f64> = (0..5).map(|_| rng.random_range(1000.0..20000.0)).collect();
    let attention_rows: Vec<AttentionRecord> = dates
        .iter()
        .enumerate()
        .map(|(d, date)| {
            let mut values = [None; 5];
            for (k, v) in values.iter_mut().enumerate() {
                // index level on day d reflects the attention observed that day
                let x = bases[k] * (0.25 * attention[d + 1] + 0.05 * normal(&mut rng)).exp();
                *v = maybe_missing(x, rate, &mut rng);
            }
            AttentionRecord { date: *date, values }
        })
        .collect();

    let truth = Truth {
        spec: spec.clone(),
        params: spec.params.to_map(&spec.midas_spec()),
        dates: dates.clone(),
        month_index,
        returns,
        variance,
        first_modeled_day: first,
        tau: midas.filtered.tau,
        g: midas.filtered.g,
        h: midas.filtered.h,
        macro_factors,
        macro_loadings: loadings,
        attention: attention[1..].to_vec(),
        attention_gamma: gamma,
    };
    Ok(Scenario {
        spec: spec.clone(),
        intraday,
        daily,
        monthly,
        attention: attention_rows,
        truth,
    })
}

/// File names written by [`Scenario::write`].
pub const SCENARIO_FILES: [&str; 5] = ["intraday.csv", "daily.csv", "monthly.csv", "attention.csv", "truth.json"];

impl Scenario {
    pub fn write(&self, dir: impl AsRef<Path>) -> crate::Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        write_intraday(dir.join(SCENARIO_FILES[0]), &self.intraday)?;
        write_daily(dir.join(SCENARIO_FILES[1]), &self.daily)?;
        write_monthly(dir.join(SCENARIO_FILES[2]), &self.monthly)?;
        write_attention(dir.join(SCENARIO_FILES[3]), &self.attention)?;
        self.truth.save(dir.join(SCENARIO_FILES[4]))
    }
}

/// Month of each date relative to the first, for callers holding only dates.
pub fn month_index_of(dates: &[NaiveDate]) -> Vec<usize> {
    let mut out = Vec::with_capacity(dates.len());
    let mut t = 0;
    for (i, d) in dates.iter().enumerate() {
        if i > 0 && (d.year(), d.month()) != (dates[i - 1].year(), dates[i - 1].month()) {
            t += 1;
        }
        out.push(t);
    }
    out
}
