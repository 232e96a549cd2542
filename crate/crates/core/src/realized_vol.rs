//! Daily returns, 5-minute realized variance and the non-trading-hours scale adjustment.
//!
//! Returns are percent log returns, `100 * (ln p_t - ln p_{t-1})`, so realized
//! variance is in squared percent.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::{IntradaySeries, MAX_BARS_PER_DAY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RvError {
    #[error("non-positive price")]
    NonPositivePrice,
    #[error("need at least two bars for {0}")]
    InsufficientBars(String),
    #[error("sum of realized variance is zero")]
    ZeroRvSum,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("scale parameter must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("month index {0} has no trading days")]
    EmptyMonth(usize),
    #[error("series needs at least two trading days")]
    TooFewDays,
}

impl RvError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, RvError::ZeroRvSum | RvError::NonPositiveLambda(_))
    }
}

/// Percent log return between two prices.
pub fn daily_return(price: f64, prev: f64) -> Result<f64, RvError> {
    if !(price > 0.0 && prev > 0.0) {
        return Err(RvError::NonPositivePrice);
    }
    Ok(100.0 * (price.ln() - prev.ln()))
}

/// Sum of squared consecutive percent log returns over one day's prices.
pub fn realized_variance(prices: &[f64]) -> Result<f64, RvError> {
    if prices.len() < 2 {
        return Err(RvError::InsufficientBars(format!("{} bars", prices.len())));
    }
    prices.windows(2).try_fold(0.0, |acc, w| {
        let r = daily_return(w[1], w[0])?;
        Ok(acc + r * r)
    })
}

/// `lambda = mean(R^2) / mean(RV)`.
pub fn scale_parameter(returns: &[f64], rv: &[f64]) -> Result<f64, RvError> {
    if returns.len() != rv.len() {
        return Err(RvError::LengthMismatch(returns.len(), rv.len()));
    }
    if returns.is_empty() {
        return Err(RvError::ZeroRvSum);
    }
    let n = returns.len() as f64;
    let rv_mean = rv.iter().sum::<f64>() / n;
    if !(rv_mean > 0.0) {
        return Err(RvError::ZeroRvSum);
    }
    let r2_mean = returns.iter().map(|r| r * r).sum::<f64>() / n;
    Ok(r2_mean / rv_mean)
}

pub fn adjust_rv(rv: &[f64], lambda: f64) -> Result<Vec<f64>, RvError> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(RvError::NonPositiveLambda(lambda));
    }
    Ok(rv.iter().map(|x| lambda * x).collect())
}

/// Sum of squared daily returns per month. `month_index` must start at 0 and
/// advance by at most one between consecutive days.
pub fn monthly_rv(returns: &[f64], month_index: &[usize]) -> Result<Vec<f64>, RvError> {
    if returns.len() != month_index.len() {
        return Err(RvError::LengthMismatch(returns.len(), month_index.len()));
    }
    let mut out: Vec<f64> = Vec::new();
    for (&r, &t) in returns.iter().zip(month_index) {
        if t == out.len() {
            out.push(0.0);
        } else if t + 1 != out.len() {
            return Err(RvError::EmptyMonth(out.len().min(t)));
        }
        out[t] += r * r;
    }
    Ok(out)
}

/// Per-day returns and realized variance for an intraday series.
#[derive(Clone, Debug, PartialEq)]
pub struct RvSeries {
    pub dates: Vec<NaiveDate>,
    /// Close-to-close percent log return `R_t`.
    pub ret: Vec<f64>,
    /// Raw realized variance `RV_t`.
    pub rv: Vec<f64>,
    /// Scale-adjusted realized variance `lambda * RV_t`.
    pub rv_adj: Vec<f64>,
    pub lambda: f64,
    /// Number of leading days the scale parameter was estimated on.
    pub lambda_days: usize,
    /// Days with fewer than the full 48 bars.
    pub incomplete: Vec<NaiveDate>,
}

/// Computes the daily series. The first trading day has no previous close and
/// is dropped. `lambda_days` limits the scale estimate to a leading window
/// (the training period); `None` uses every day.
pub fn compute_series(series: &IntradaySeries, lambda_days: Option<usize>) -> Result<RvSeries, RvError> {
    let days: Vec<(NaiveDate, Vec<f64>)> = series
        .days()
        .map(|(d, bars)| (d, bars.iter().map(|b| b.price).collect()))
        .collect();
    if days.len() < 2 {
        return Err(RvError::TooFewDays);
    }
    let mut out = RvSeries {
        dates: Vec::with_capacity(days.len() - 1),
        ret: Vec::with_capacity(days.len() - 1),
        rv: Vec::with_capacity(days.len() - 1),
        rv_adj: Vec::new(),
        lambda: f64::NAN,
        lambda_days: 0,
        incomplete: Vec::new(),
    };
    for pair in days.windows(2) {
        let (_, prev) = &pair[0];
        let (date, prices) = &pair[1];
        let close = *prices.last().expect("non-empty day");
        let prev_close = *prev.last().expect("non-empty day");
        out.dates.push(*date);
        out.ret.push(daily_return(close, prev_close)?);
        out.rv.push(
            realized_variance(prices).map_err(|_| RvError::InsufficientBars(date.to_string()))?,
        );
        if prices.len() < MAX_BARS_PER_DAY {
            out.incomplete.push(*date);
        }
    }
    let k = lambda_days.unwrap_or(out.ret.len()).clamp(1, out.ret.len());
    out.lambda = scale_parameter(&out.ret[..k], &out.rv[..k])?;
    out.lambda_days = k;
    out.rv_adj = adjust_rv(&out.rv, out.lambda)?;
    Ok(out)
}

/// Contents of the `rv.json` sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RvSidecar {
    pub lambda: f64,
    pub n_days: usize,
    #[serde(default)]
    pub lambda_days: usize,
    #[serde(default)]
    pub incomplete_days: Vec<NaiveDate>,
}

impl RvSeries {
    pub fn sidecar(&self) -> RvSidecar {
        RvSidecar {
            lambda: self.lambda,
            n_days: self.dates.len(),
            lambda_days: self.lambda_days,
            incomplete_days: self.incomplete.clone(),
        }
    }

    /// Writes `date,ret,rv,rv_adj`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| crate::Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let err = |e| crate::Error::csv(path, e);
        w.write_record(["date", "ret", "rv", "rv_adj"]).map_err(err)?;
        for i in 0..self.dates.len() {
            w.write_record([
                self.dates[i].to_string(),
                self.ret[i].to_string(),
                self.rv[i].to_string(),
                self.rv_adj[i].to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| crate::Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn daily_return_examples() {
        assert_eq!(daily_return(100.0, 100.0).unwrap(), 0.0);
        let up = daily_return(101.0, 100.0).unwrap();
        assert!((up - 100.0 * 1.01f64.ln()).abs() < 1e-13);
        assert!((up - 0.995033085).abs() < 1e-9);
        assert_eq!(daily_return(100.0, 101.0).unwrap(), -up);
        assert_eq!(daily_return(0.0, 1.0), Err(RvError::NonPositivePrice));
    }

    #[test]
    fn realized_variance_examples() {
        assert_eq!(realized_variance(&[5.0; 48]).unwrap(), 0.0);
        // 48 intervals of 0.1 percent each
        let prices: Vec<f64> = (0..=48).map(|d| 100.0 * (0.001 * d as f64).exp()).collect();
        assert!((realized_variance(&prices).unwrap() - 0.48).abs() < 1e-10);
        let rv = realized_variance(&[100.0, 101.0, 100.0]).unwrap();
        let r = 100.0 * 1.01f64.ln();
        assert!((rv - 2.0 * r * r).abs() < 1e-12);
        assert!((rv - 1.98018).abs() < 1e-5);
        assert!(matches!(realized_variance(&[1.0]), Err(RvError::InsufficientBars(_))));
    }

    #[test]
    fn scale_parameter_examples() {
        assert_eq!(scale_parameter(&[1.0, 1.0], &[2.0, 2.0]).unwrap(), 0.5);
        assert_eq!(scale_parameter(&[2.0, 1.0], &[4.0, 1.0]).unwrap(), 1.0);
        assert_eq!(scale_parameter(&[1.0, 1.0], &[0.0, 0.0]), Err(RvError::ZeroRvSum));
        assert_eq!(scale_parameter(&[1.0], &[0.0, 0.0]), Err(RvError::LengthMismatch(1, 2)));
    }

    #[test]
    fn adjust_rv_examples() {
        assert_eq!(adjust_rv(&[2.0, 2.0], 0.5).unwrap(), vec![1.0, 1.0]);
        assert_eq!(adjust_rv(&[1.5, 3.0], 1.0).unwrap(), vec![1.5, 3.0]);
        let lambda = scale_parameter(&[1.0, 1.0], &[1.0, 3.0]).unwrap();
        assert_eq!(lambda, 0.5);
        let adj = adjust_rv(&[1.0, 3.0], lambda).unwrap();
        assert_eq!(adj, vec![0.5, 1.5]);
        assert_eq!(adj.iter().sum::<f64>() / 2.0, 1.0);
        assert_eq!(adjust_rv(&[1.0], 0.0), Err(RvError::NonPositiveLambda(0.0)));
    }

    #[test]
    fn monthly_rv_examples() {
        assert_eq!(monthly_rv(&[1.0, -1.0], &[0, 0]).unwrap(), vec![2.0]);
        assert_eq!(monthly_rv(&[0.0, 0.0], &[0, 0]).unwrap(), vec![0.0]);
        assert_eq!(monthly_rv(&[1.0, 2.0], &[0, 1]).unwrap(), vec![1.0, 4.0]);
        assert!(matches!(monthly_rv(&[1.0, 2.0], &[0, 2]), Err(RvError::EmptyMonth(_))));
    }

    #[test]
    fn series_drops_first_day_and_flags_partial_days() {
        use crate::marketdata::{parse_date, Bar};
        let d1 = parse_date("2021-01-04").unwrap();
        let d2 = parse_date("2021-01-05").unwrap();
        let mut bars = Vec::new();
        for k in 0..48 {
            bars.push(Bar { date: d1, time_min: 5 * k, price: 100.0 });
        }
        for (k, p) in [100.0, 101.0, 102.0].into_iter().enumerate() {
            bars.push(Bar { date: d2, time_min: 5 * k as u32, price: p });
        }
        let s = IntradaySeries::new("x", bars).unwrap();
        let rv = compute_series(&s, None).unwrap();
        assert_eq!(rv.dates, vec![d2]);
        assert!((rv.ret[0] - 100.0 * 1.02f64.ln()).abs() < 1e-12);
        assert_eq!(rv.incomplete, vec![d2]);
    }

    proptest! {
        #[test]
        fn adjusted_mean_matches_squared_returns(
            pairs in proptest::collection::vec((-5.0f64..5.0, 0.01f64..10.0), 1..200)
        ) {
            let (r, rv): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let lambda = scale_parameter(&r, &rv).unwrap();
            let adj = adjust_rv(&rv, lambda).unwrap();
            let n = r.len() as f64;
            let lhs = adj.iter().sum::<f64>() / n;
            let rhs = r.iter().map(|x| x * x).sum::<f64>() / n;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(f64::MIN_POSITIVE) + 1e-300);
        }

        #[test]
        fn rv_is_scale_invariant(
            steps in proptest::collection::vec(-0.01f64..0.01, 1..48),
            c in 0.01f64..100.0,
        ) {
            let mut prices = vec![100.0];
            for s in &steps {
                let last = *prices.last().unwrap();
                prices.push(last * (1.0 + s));
            }
            let scaled: Vec<f64> = prices.iter().map(|p| p * c).collect();
            let a = realized_variance(&prices).unwrap();
            let b = realized_variance(&scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-12));
            prop_assert_eq!(a == 0.0, prices.windows(2).all(|w| w[0] == w[1]));
        }
    }
}
