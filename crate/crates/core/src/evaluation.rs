//! Forecast loss functions, the feature ablation groups and a persistence baseline.
//!
//! All measures take the forecast `h` first and the realized value `rv` second.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} forecasts, {1} observations")]
    LengthMismatch(usize, usize),
    #[error("realized values must be positive")]
    NonPositiveTruth,
    #[error("forecasts and realized values must be positive")]
    NonPositiveInput,
    #[error("realized values have zero variance on the log scale")]
    DegenerateTruth,
    #[error("need at least {need} observations, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("missing feature column `{0}`")]
    MissingColumn(String),
    #[error("unknown ablation group `{0}`")]
    UnknownGroup(String),
}

fn check(h: &[f64], rv: &[f64], need: usize) -> Result<(), EvalError> {
    if h.len() != rv.len() {
        return Err(EvalError::LengthMismatch(h.len(), rv.len()));
    }
    if h.len() < need {
        return Err(EvalError::TooShort { need, got: h.len() });
    }
    Ok(())
}

fn mean_of(h: &[f64], rv: &[f64], f: impl Fn(f64, f64) -> f64) -> f64 {
    h.iter().zip(rv).map(|(h, r)| f(*h, *r)).sum::<f64>() / h.len() as f64
}

/// `mean (rv - h)^2`
pub fn mse(h: &[f64], rv: &[f64]) -> Result<f64, EvalError> {
    check(h, rv, 1)?;
    Ok(mean_of(h, rv, |h, r| (r - h).powi(2)))
}

/// `mean |rv - h|`
pub fn mae(h: &[f64], rv: &[f64]) -> Result<f64, EvalError> {
    check(h, rv, 1)?;
    Ok(mean_of(h, rv, |h, r| (r - h).abs()))
}

/// `mean (1 - h / rv)^2`
pub fn hmse(h: &[f64], rv: &[f64]) -> Result<f64, EvalError> {
    check(h, rv, 1)?;
    if rv.iter().any(|r| !(*r > 0.0)) {
        return Err(EvalError::NonPositiveTruth);
    }
    Ok(mean_of(h, rv, |h, r| (1.0 - h / r).powi(2)))
}

/// `mean |1 - h / rv|`
pub fn mape(h: &[f64], rv: &[f64]) -> Result<f64, EvalError> {
    check(h, rv, 1)?;
    if rv.iter().any(|r| !(*r > 0.0)) {
        return Err(EvalError::NonPositiveTruth);
    }
    Ok(mean_of(h, rv, |h, r| (1.0 - h / r).abs()))
}

/// `mean (ln h + rv / h)`
pub fn qlike(h: &[f64], rv: &[f64]) -> Result<f64, EvalError> {
    check(h, rv, 1)?;
    if h.iter().chain(rv).any(|x| !(*x > 0.0)) {
        return Err(EvalError::NonPositiveInput);
    }
    Ok(mean_of(h, rv, |h, r| h.ln() + r / h))
}

/// R^2 of the least-squares regression of `ln rv` on a constant and `ln h`.
pub fn r2log(h: &[f64], rv: &[f64]) -> Result<f64, EvalError> {
    check(h, rv, 2)?;
    if h.iter().chain(rv).any(|x| !(*x > 0.0)) {
        return Err(EvalError::NonPositiveInput);
    }
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = rv.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sst <= 1e-300 {
        return Err(EvalError::DegenerateTruth);
    }
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    // a constant forecast explains nothing
    let ssr = if sxx > 0.0 { sst - sxy * sxy / sxx } else { sst };
    Ok(1.0 - ssr.max(0.0) / sst)
}

/// `mean (ln(rv / h))^2`, the lower-is-better reading of R2LOG.
pub fn r2log_loss(h: &[f64], rv: &[f64]) -> Result<f64, EvalError> {
    check(h, rv, 1)?;
    if h.iter().chain(rv).any(|x| !(*x > 0.0)) {
        return Err(EvalError::NonPositiveInput);
    }
    Ok(mean_of(h, rv, |h, r| (r / h).ln().powi(2)))
}

/// Feature sets for the ablation study; macro information reaches the
/// regressor only through the GARCH-MIDAS variance `h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AblationGroup {
    /// Technical factors only.
    G1,
    /// Technical and attention factors.
    G2,
    /// Technical factors and `h`.
    G3,
    /// Technical, attention and `h`.
    G4,
}

pub const TECH_FACTORS: [&str; 3] = ["TECH1", "TECH2", "TECH3"];
pub const ATTENTION_FACTOR: &str = "BD1";
pub const MIDAS_FEATURE: &str = "h";

impl AblationGroup {
    pub const ALL: [AblationGroup; 4] = [Self::G1, Self::G2, Self::G3, Self::G4];

    pub fn features(self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if matches!(self, Self::G3 | Self::G4) {
            out.push(MIDAS_FEATURE);
        }
        out.extend(TECH_FACTORS);
        if matches!(self, Self::G2 | Self::G4) {
            out.push(ATTENTION_FACTOR);
        }
        out
    }
}

impl fmt::Display for AblationGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for AblationGroup {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "G1" => Ok(Self::G1),
            "G2" => Ok(Self::G2),
            "G3" => Ok(Self::G3),
            "G4" => Ok(Self::G4),
            _ => Err(EvalError::UnknownGroup(s.into())),
        }
    }
}

/// Picks the group's columns from `available`, returning their indices in group order.
pub fn ablation_features(group: AblationGroup, available: &[impl AsRef<str>]) -> Result<Vec<usize>, EvalError> {
    let all = TECH_FACTORS.iter().chain([&ATTENTION_FACTOR, &MIDAS_FEATURE]);
    for name in all {
        if !available.iter().any(|a| a.as_ref() == *name) {
            return Err(EvalError::MissingColumn((*name).into()));
        }
    }
    Ok(group
        .features()
        .into_iter()
        .map(|f| available.iter().position(|a| a.as_ref() == f).expect("checked above"))
        .collect())
}

/// Yesterday's value as today's forecast: `(forecasts, truth)` with the first point dropped.
pub fn persistence_baseline(rv: &[f64]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    if rv.len() < 2 {
        return Err(EvalError::TooShort { need: 2, got: rv.len() });
    }
    Ok((rv[..rv.len() - 1].to_vec(), rv[1..].to_vec()))
}

/// One report row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: String,
    pub group: String,
    pub n: usize,
    pub mse: f64,
    pub hmse: f64,
    pub mae: f64,
    pub mape: f64,
    pub qlike: f64,
    pub r2log: f64,
    /// Pairs left out of `qlike` and `r2log` because the forecast was not positive.
    #[serde(skip)]
    pub excluded: usize,
}

fn positive_pairs(h: &[f64], rv: &[f64], need_h: bool) -> (Vec<f64>, Vec<f64>) {
    h.iter()
        .zip(rv)
        .filter(|(h, r)| **r > 0.0 && (!need_h || **h > 0.0))
        .map(|(h, r)| (*h, *r))
        .unzip()
}

/// All six measures. Pairs with a non-positive realized value are dropped;
/// `qlike` and `r2log` additionally drop pairs with a non-positive forecast
/// and are NaN when none remain.
pub fn evaluate(model: &str, group: &str, h: &[f64], rv: &[f64]) -> Result<EvalRow, EvalError> {
    check(h, rv, 1)?;
    let (hs, rs) = positive_pairs(h, rv, false);
    let (hp, rp) = positive_pairs(h, rv, true);
    let (qlike_v, r2log_v) = if hp.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (qlike(&hp, &rp)?, r2log(&hp, &rp)?)
    };
    Ok(EvalRow {
        model: model.into(),
        group: group.into(),
        n: hs.len(),
        mse: mse(&hs, &rs)?,
        hmse: hmse(&hs, &rs)?,
        mae: mae(&hs, &rs)?,
        mape: mape(&hs, &rs)?,
        qlike: qlike_v,
        r2log: r2log_v,
        excluded: hs.len() - hp.len(),
    })
}

pub const REPORT_HEADER: [&str; 9] = ["model", "group", "n", "mse", "hmse", "mae", "mape", "qlike", "r2log"];

const REPORT_FOOTER: &str = "\
# h = forecast, rv = realized variance; means over the n pairs with rv > 0
# qlike and r2log also skip pairs with h <= 0
# mse = mean (rv - h)^2
# hmse = mean (1 - h/rv)^2
# mae = mean |rv - h|
# mape = mean |1 - h/rv|
# qlike = mean (ln h + rv/h)
# r2log = R^2 of OLS ln rv = a + b ln h (higher is better)
";

/// Renders rows as CSV followed by `#` lines stating each formula.
pub fn render_report(rows: &[EvalRow]) -> String {
    let mut out = REPORT_HEADER.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.model, r.group, r.n, r.mse, r.hmse, r.mae, r.mape, r.qlike, r.r2log
        ));
    }
    out.push_str(REPORT_FOOTER);
    out
}

pub fn write_report(path: impl AsRef<Path>, rows: &[EvalRow]) -> crate::Result<()> {
    crate::marketdata::write_text(path, &render_report(rows))
}

/// Reads a report, skipping `#` lines.
pub fn read_report(path: impl AsRef<Path>) -> crate::Result<Vec<EvalRow>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| crate::Error::csv(path, e))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| crate::Error::csv(path, e)))
        .collect()
}
