//! GARCH-MIDAS: daily conditional variance `h = tau * g` where the long-run
//! component `tau` moves monthly with beta-weighted lags of low-frequency
//! covariates and the short-run component `g` is a unit-mean GARCH(1,1).
//!
//! Returns follow `r = mu + sqrt(tau * g) * eps` with standard normal `eps`.
//! The short-run intercept is fixed at `1 - alpha - beta`, so `tau` carries
//! the variance level. The first `K` months only provide lags and are left
//! out of the likelihood.

use std::path::Path;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::optim::{nelder_mead, NelderMeadOptions, NelderMeadResult};
use crate::realized_vol::monthly_rv;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MidasError {
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("long-run component tau is not positive ({0})")]
    NonPositiveTau(f64),
    #[error("need more than {lags} months of data for {lags} lags, got {months}")]
    InsufficientLags { lags: usize, months: usize },
    #[error("log-likelihood is not finite")]
    NonFiniteLikelihood,
    #[error("optimizer did not converge after {iterations} iterations (simplex spread {spread:e}); restarts: {restarts}")]
    NoConvergence {
        iterations: usize,
        spread: f64,
        restarts: String,
    },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
}

impl MidasError {
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            MidasError::NonPositiveTau(_)
                | MidasError::NonFiniteLikelihood
                | MidasError::NoConvergence { .. }
        )
    }
}

/// Source of the low-frequency regressor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LongRunMode {
    /// Lagged monthly realized variance of the returns themselves.
    RvWindow,
    /// Lagged exogenous monthly covariates.
    Exogenous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauLink {
    Identity,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidasSpec {
    /// Maximum lag `K` in months.
    pub lags: usize,
    pub mode: LongRunMode,
    /// Number of covariates `J` (1 in rv-window mode).
    pub covariates: usize,
    pub link: TauLink,
    /// Estimate `omega1` instead of fixing it at 1.
    pub free_omega1: bool,
}

impl MidasSpec {
    /// Exogenous covariates with the log link.
    pub fn exogenous(lags: usize, covariates: usize) -> Self {
        Self {
            lags,
            mode: LongRunMode::Exogenous,
            covariates,
            link: TauLink::Log,
            free_omega1: false,
        }
    }

    /// Rolling monthly realized variance with the identity link.
    pub fn rv_window(lags: usize) -> Self {
        Self {
            lags,
            mode: LongRunMode::RvWindow,
            covariates: 1,
            link: TauLink::Identity,
            free_omega1: false,
        }
    }

    pub fn validate(&self) -> Result<(), MidasError> {
        if self.lags == 0 {
            return Err(MidasError::BadParameter("K must be at least 1".into()));
        }
        match self.mode {
            LongRunMode::Exogenous if self.covariates == 0 => Err(MidasError::BadParameter(
                "exogenous mode needs at least one covariate".into(),
            )),
            LongRunMode::Exogenous if self.link == TauLink::Identity => Err(MidasError::BadParameter(
                "identity link is only permitted in rv-window mode".into(),
            )),
            LongRunMode::RvWindow if self.covariates != 1 => Err(MidasError::BadParameter(
                "rv-window mode has exactly one covariate".into(),
            )),
            _ => Ok(()),
        }
    }

    fn apply_link(&self, x: f64) -> f64 {
        match self.link {
            TauLink::Identity => x,
            TauLink::Log => x.exp(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidasParams {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Long-run intercept.
    pub m: f64,
    pub theta: Vec<f64>,
    /// First beta-weight shape per covariate; 1 unless the spec frees it.
    pub omega1: Vec<f64>,
    pub omega2: Vec<f64>,
}

impl MidasParams {
    /// Parameters with `omega1` fixed at 1 for every covariate.
    pub fn new(mu: f64, alpha: f64, beta: f64, m: f64, theta: Vec<f64>, omega2: Vec<f64>) -> Self {
        let omega1 = vec![1.0; theta.len()];
        Self {
            mu,
            alpha,
            beta,
            m,
            theta,
            omega1,
            omega2,
        }
    }

    /// Short-run intercept implied by the unit-mean normalisation of `g`.
    pub fn omega(&self) -> f64 {
        1.0 - self.alpha - self.beta
    }

    pub fn validate(&self, spec: &MidasSpec) -> Result<(), MidasError> {
        let bad = |s: String| Err(MidasError::BadParameter(s));
        let j = spec.covariates;
        if self.theta.len() != j || self.omega1.len() != j || self.omega2.len() != j {
            return bad(format!("expected {j} covariate parameter sets"));
        }
        let all = [self.mu, self.alpha, self.beta, self.m]
            .into_iter()
            .chain(self.theta.iter().copied())
            .chain(self.omega1.iter().copied())
            .chain(self.omega2.iter().copied());
        if all.into_iter().any(|x| !x.is_finite()) {
            return bad("non-finite parameter".into());
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.alpha + self.beta >= 1.0 {
            return bad(format!(
                "need alpha, beta >= 0 and alpha + beta < 1, got {} and {}",
                self.alpha, self.beta
            ));
        }
        if self.omega2.iter().chain(&self.omega1).any(|w| *w < 1.0) {
            return bad("beta-weight shapes must be at least 1".into());
        }
        if !spec.free_omega1 && self.omega1.iter().any(|w| *w != 1.0) {
            return bad("omega1 is fixed at 1 for this spec".into());
        }
        Ok(())
    }

    /// Named parameter map in the order `mu, alpha, beta, m, theta_1, w2_1, ...`.
    pub fn to_map(&self, spec: &MidasSpec) -> Map<String, Value> {
        let mut map = Map::new();
        map.insert("mu".into(), self.mu.into());
        map.insert("alpha".into(), self.alpha.into());
        map.insert("beta".into(), self.beta.into());
        map.insert("m".into(), self.m.into());
        for j in 0..self.theta.len() {
            map.insert(format!("theta_{}", j + 1), self.theta[j].into());
            if spec.free_omega1 {
                map.insert(format!("w1_{}", j + 1), self.omega1[j].into());
            }
            map.insert(format!("w2_{}", j + 1), self.omega2[j].into());
        }
        map
    }

    pub fn from_map(spec: &MidasSpec, map: &Map<String, Value>) -> Result<Self, MidasError> {
        let get = |k: &str| {
            map.get(k)
                .and_then(Value::as_f64)
                .ok_or_else(|| MidasError::BadParameter(format!("missing parameter `{k}`")))
        };
        let j = spec.covariates;
        let mut p = MidasParams::new(
            get("mu")?,
            get("alpha")?,
            get("beta")?,
            get("m")?,
            Vec::with_capacity(j),
            Vec::with_capacity(j),
        );
        p.omega1.clear();
        for k in 1..=j {
            p.theta.push(get(&format!("theta_{k}"))?);
            p.omega2.push(get(&format!("w2_{k}"))?);
            p.omega1.push(if spec.free_omega1 {
                get(&format!("w1_{k}"))?
            } else {
                1.0
            });
        }
        Ok(p)
    }
}

/// Beta lag weights `phi_k ∝ (k/K)^(w1-1) (1-k/K)^(w2-1)`, `k = 1..K`, normalised to sum to one.
///
/// With `K = 1` the single lag receives all the weight.
pub fn beta_weights(lags: usize, omega1: f64, omega2: f64) -> Result<Vec<f64>, MidasError> {
    if lags == 0 || !(omega1 >= 1.0) || !(omega2 >= 1.0) || !omega1.is_finite() || !omega2.is_finite() {
        return Err(MidasError::BadParameter(format!(
            "beta weights need K >= 1 and shapes >= 1, got K={lags}, w1={omega1}, w2={omega2}"
        )));
    }
    if lags == 1 {
        return Ok(vec![1.0]);
    }
    let k_f = lags as f64;
    let log_term = |e: f64, x: f64| if e == 0.0 { 0.0 } else { e * x.ln() };
    let logs: Vec<f64> = (1..=lags)
        .map(|k| {
            let u = k as f64 / k_f;
            log_term(omega1 - 1.0, u) + log_term(omega2 - 1.0, 1.0 - u)
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Daily returns with their month index and the monthly covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct MidasData {
    pub returns: Vec<f64>,
    /// Month index `t` of each day; starts at 0 and advances by at most one.
    pub month_of_day: Vec<usize>,
    /// One series per covariate, one value per month.
    pub covariates: Vec<Vec<f64>>,
}

impl MidasData {
    pub fn new(returns: Vec<f64>, month_of_day: Vec<usize>, covariates: Vec<Vec<f64>>) -> Result<Self, MidasError> {
        if returns.len() != month_of_day.len() {
            return Err(MidasError::DegenerateData(format!(
                "{} returns but {} month indices",
                returns.len(),
                month_of_day.len()
            )));
        }
        let mut prev = None;
        for &t in &month_of_day {
            let ok = match prev {
                None => t == 0,
                Some(p) => t == p || t == p + 1,
            };
            if !ok {
                return Err(MidasError::DegenerateData(
                    "month indices must start at 0 and be contiguous".into(),
                ));
            }
            prev = Some(t);
        }
        let months = prev.map_or(0, |p| p + 1);
        if covariates.iter().any(|c| c.len() < months) {
            return Err(MidasError::DegenerateData(format!(
                "covariates must cover all {months} months"
            )));
        }
        if returns.iter().chain(covariates.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(MidasError::DegenerateData("non-finite input".into()));
        }
        Ok(Self {
            returns,
            month_of_day,
            covariates,
        })
    }

    /// Uses the monthly realized variance of the returns as the single covariate.
    pub fn rv_window(returns: Vec<f64>, month_of_day: Vec<usize>) -> Result<Self, MidasError> {
        let rv = monthly_rv(&returns, &month_of_day)
            .map_err(|e| MidasError::DegenerateData(e.to_string()))?;
        Self::new(returns, month_of_day, vec![rv])
    }

    pub fn n_days(&self) -> usize {
        self.returns.len()
    }

    pub fn n_months(&self) -> usize {
        self.month_of_day.last().map_or(0, |t| t + 1)
    }

    /// The first `days` days and the months they reference.
    pub fn truncate(&self, days: usize) -> MidasData {
        let days = days.min(self.n_days());
        let months = self.month_of_day[..days].last().map_or(0, |t| t + 1);
        MidasData {
            returns: self.returns[..days].to_vec(),
            month_of_day: self.month_of_day[..days].to_vec(),
            covariates: self.covariates.iter().map(|c| c[..months].to_vec()).collect(),
        }
    }

    /// Index of the first day whose month has a full set of `lags` lags.
    pub fn first_modeled_day(&self, lags: usize) -> usize {
        self.month_of_day
            .iter()
            .position(|&t| t >= lags)
            .unwrap_or(self.n_days())
    }

    fn regressors(&self, spec: &MidasSpec) -> Result<Vec<Vec<f64>>, MidasError> {
        match spec.mode {
            LongRunMode::Exogenous => {
                if self.covariates.len() != spec.covariates {
                    return Err(MidasError::BadParameter(format!(
                        "spec has {} covariates, data has {}",
                        spec.covariates,
                        self.covariates.len()
                    )));
                }
                Ok(self
                    .covariates
                    .iter()
                    .map(|c| c[..self.n_months()].to_vec())
                    .collect())
            }
            LongRunMode::RvWindow => Ok(vec![monthly_rv(&self.returns, &self.month_of_day)
                .map_err(|e| MidasError::DegenerateData(e.to_string()))?]),
        }
    }
}

/// Long-run component for months `K..M`: element `s` is `tau` of month `K + s`.
///
/// `tau_t = link(m + sum_j theta_j sum_k phi_k(w1_j, w2_j) X_j[t - k])`.
pub fn long_run_tau(spec: &MidasSpec, params: &MidasParams, covariates: &[Vec<f64>]) -> Result<Vec<f64>, MidasError> {
    let lags = spec.lags;
    let months = covariates.first().map_or(0, Vec::len);
    if covariates.len() != params.theta.len() {
        return Err(MidasError::BadParameter(format!(
            "{} covariates but {} slopes",
            covariates.len(),
            params.theta.len()
        )));
    }
    if months <= lags {
        return Err(MidasError::InsufficientLags { lags, months });
    }
    let weights = covariates
        .iter()
        .enumerate()
        .map(|(j, _)| beta_weights(lags, params.omega1[j], params.omega2[j]))
        .collect::<Result<Vec<_>, _>>()?;
    let mut tau = Vec::with_capacity(months - lags);
    for t in lags..months {
        let mut x = params.m;
        for (j, series) in covariates.iter().enumerate() {
            let filtered: f64 = weights[j]
                .iter()
                .enumerate()
                .map(|(k, w)| w * series[t - 1 - k])
                .sum();
            x += params.theta[j] * filtered;
        }
        let value = spec.apply_link(x);
        if !(value > 0.0) || !value.is_finite() {
            return Err(MidasError::NonPositiveTau(value));
        }
        tau.push(value);
    }
    Ok(tau)
}

/// Short-run component over consecutive days, seeded at its unconditional mean 1:
/// `g_n = (1 - alpha - beta) + alpha (r_{n-1} - mu)^2 / tau_{n-1} + beta g_{n-1}`.
///
/// `tau` is the long-run component of each day. The recursion runs straight
/// across month boundaries.
pub fn short_run_g(params: &MidasParams, returns: &[f64], tau: &[f64]) -> Result<Vec<f64>, MidasError> {
    if returns.len() != tau.len() {
        return Err(MidasError::BadParameter(format!(
            "{} returns but {} tau values",
            returns.len(),
            tau.len()
        )));
    }
    if let Some(bad) = tau.iter().find(|t| !(**t > 0.0)) {
        return Err(MidasError::NonPositiveTau(*bad));
    }
    let omega = params.omega();
    let mut g = Vec::with_capacity(returns.len());
    let mut prev = 1.0;
    for n in 0..returns.len() {
        let value = if n == 0 {
            1.0
        } else {
            let e = returns[n - 1] - params.mu;
            omega + params.alpha * e * e / tau[n - 1] + params.beta * prev
        };
        g.push(value);
        prev = value;
    }
    Ok(g)
}

/// Per-day series over the modeled days (`first_day..`).
#[derive(Clone, Debug, PartialEq)]
pub struct Filtered {
    pub first_day: usize,
    pub tau: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

/// Runs both filters and returns `tau`, `g` and `h = tau * g` for every modeled day.
pub fn filter(spec: &MidasSpec, params: &MidasParams, data: &MidasData) -> Result<Filtered, MidasError> {
    spec.validate()?;
    let covariates = data.regressors(spec)?;
    let tau_month = long_run_tau(spec, params, &covariates)?;
    let first_day = data.first_modeled_day(spec.lags);
    let tau: Vec<f64> = data.month_of_day[first_day..]
        .iter()
        .map(|&t| tau_month[t - spec.lags])
        .collect();
    let g = short_run_g(params, &data.returns[first_day..], &tau)?;
    let h = tau.iter().zip(&g).map(|(t, g)| t * g).collect();
    Ok(Filtered {
        first_day,
        tau,
        g,
        h,
    })
}

/// Gaussian log-likelihood `sum -0.5 (ln 2pi + ln h + (r - mu)^2 / h)`.
pub fn gaussian_loglik(returns: &[f64], mu: f64, h: &[f64]) -> f64 {
    returns
        .iter()
        .zip(h)
        .map(|(r, h)| {
            let e = r - mu;
            -0.5 * (LN_2PI + h.ln() + e * e / h)
        })
        .sum()
}

/// Log-likelihood over the modeled days.
pub fn log_likelihood(spec: &MidasSpec, params: &MidasParams, data: &MidasData) -> Result<f64, MidasError> {
    let f = filter(spec, params, data)?;
    let ll = gaussian_loglik(&data.returns[f.first_day..], params.mu, &f.h);
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(MidasError::NonFiniteLikelihood)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub restarts: usize,
    pub seed: u64,
    pub optimizer: NelderMeadOptions,
    /// Holds every `theta` at zero, which reduces the model to a plain GARCH(1,1)
    /// with constant long-run level.
    pub theta_zero: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            seed: 0,
            optimizer: NelderMeadOptions::default(),
            theta_zero: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub spread: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartSummary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MidasFit {
    pub spec: MidasSpec,
    pub params: MidasParams,
    pub log_likelihood: f64,
    /// Number of days entering the likelihood.
    pub n_obs: usize,
    pub filtered: Filtered,
    pub convergence: ConvergenceReport,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Maps between constrained parameters and the unconstrained optimizer vector.
struct Reparam<'a> {
    spec: &'a MidasSpec,
    theta_zero: bool,
}

impl Reparam<'_> {
    fn encode(&self, p: &MidasParams) -> Vec<f64> {
        let persistence = (p.alpha + p.beta).clamp(1e-6, 1.0 - 1e-6);
        let share = (p.alpha / (p.alpha + p.beta).max(1e-12)).clamp(1e-6, 1.0 - 1e-6);
        let mut u = vec![p.mu, logit(persistence), logit(share), p.m];
        if !self.theta_zero {
            for j in 0..self.spec.covariates {
                u.push(p.theta[j]);
                u.push((p.omega2[j] - 1.0).max(1e-8).ln());
                if self.spec.free_omega1 {
                    u.push((p.omega1[j] - 1.0).max(1e-8).ln());
                }
            }
        }
        u
    }

    fn decode(&self, u: &[f64], template: &MidasParams) -> MidasParams {
        let persistence = sigmoid(u[1]);
        let share = sigmoid(u[2]);
        let mut p = template.clone();
        p.mu = u[0];
        p.alpha = persistence * share;
        p.beta = persistence * (1.0 - share);
        p.m = u[3];
        if self.theta_zero {
            p.theta.iter_mut().for_each(|t| *t = 0.0);
        } else {
            let mut i = 4;
            for j in 0..self.spec.covariates {
                p.theta[j] = u[i];
                p.omega2[j] = 1.0 + u[i + 1].exp();
                i += 2;
                if self.spec.free_omega1 {
                    p.omega1[j] = 1.0 + u[i].exp();
                    i += 1;
                }
            }
        }
        p
    }
}

/// Starting values: sample mean, `alpha = 0.05`, `beta = 0.9`, long-run level
/// from the sample variance, zero slopes and `w2 = 5`.
pub fn default_init(spec: &MidasSpec, data: &MidasData) -> MidasParams {
    let n = data.returns.len() as f64;
    let mean = data.returns.iter().sum::<f64>() / n;
    let var = data.returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let m = match spec.link {
        TauLink::Log => var.max(1e-12).ln(),
        TauLink::Identity => var,
    };
    MidasParams::new(
        mean,
        0.05,
        0.9,
        m,
        vec![0.0; spec.covariates],
        vec![5.0; spec.covariates],
    )
}

/// Maximum-likelihood estimation by Nelder-Mead with seeded random restarts.
///
/// Restart 0 starts at `init` (or [`default_init`]); the others start from
/// Gaussian perturbations of it in the unconstrained coordinates. Every
/// restart is polished by a second simplex run from its optimum. The best
/// likelihood wins; ties go to the lower restart index.
pub fn fit(spec: &MidasSpec, data: &MidasData, init: Option<&MidasParams>, opts: &FitOptions) -> Result<MidasFit, MidasError> {
    spec.validate()?;
    let months = data.n_months();
    if months < spec.lags + 2 {
        return Err(MidasError::InsufficientLags {
            lags: spec.lags,
            months,
        });
    }
    let first = data.first_modeled_day(spec.lags);
    let modeled = &data.returns[first..];
    if modeled.len() < 10 {
        return Err(MidasError::DegenerateData("fewer than 10 modeled days".into()));
    }
    let mean = modeled.iter().sum::<f64>() / modeled.len() as f64;
    if modeled.iter().all(|r| (r - mean).abs() < 1e-12) {
        return Err(MidasError::DegenerateData("returns have zero variance".into()));
    }

    let start = match init {
        Some(p) => {
            p.validate(spec)?;
            let mut p = p.clone();
            if opts.theta_zero {
                p.theta.iter_mut().for_each(|t| *t = 0.0);
            }
            p
        }
        None => default_init(spec, data),
    };
    let reparam = Reparam {
        spec,
        theta_zero: opts.theta_zero,
    };
    let covariates = data.regressors(spec)?;
    let objective = |u: &[f64]| -> f64 {
        let p = reparam.decode(u, &start);
        let Ok(tau_month) = long_run_tau(spec, &p, &covariates) else {
            return f64::INFINITY;
        };
        // inline filter: avoids re-validating and re-allocating per evaluation
        let omega = p.omega();
        let mut g = 1.0;
        let mut ll = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for n in first..data.returns.len() {
            let tau = tau_month[data.month_of_day[n] - spec.lags];
            if let Some((e_prev, tau_prev)) = prev {
                g = omega + p.alpha * e_prev * e_prev / tau_prev + p.beta * g;
            }
            let e = data.returns[n] - p.mu;
            let h = tau * g;
            ll += -0.5 * (LN_2PI + h.ln() + e * e / h);
            prev = Some((e, tau));
        }
        -ll
    };

    let u0 = reparam.encode(&start);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(usize, NelderMeadResult)> = None;
    let mut summaries = Vec::with_capacity(opts.restarts.max(1));
    let mut total_evals = 0;
    for r in 0..opts.restarts.max(1) {
        let x0: Vec<f64> = if r == 0 {
            u0.clone()
        } else {
            u0.iter()
                .map(|x| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x + 0.5 * z
                })
                .collect()
        };
        let first_pass = nelder_mead(objective, &x0, &opts.optimizer);
        let polish_opts = NelderMeadOptions {
            initial_step: opts.optimizer.initial_step * 0.2,
            ..opts.optimizer.clone()
        };
        let second = nelder_mead(objective, &first_pass.x, &polish_opts);
        let result = NelderMeadResult {
            iterations: first_pass.iterations + second.iterations,
            evaluations: first_pass.evaluations + second.evaluations,
            ..second
        };
        total_evals += result.evaluations;
        summaries.push(RestartSummary {
            index: r,
            log_likelihood: -result.f,
            iterations: result.iterations,
            converged: result.converged,
        });
        let better = match &best {
            None => true,
            Some((_, b)) => result.f < b.f,
        };
        if better {
            best = Some((r, result));
        }
    }
    let (best_index, best) = best.expect("at least one restart");
    let describe = || {
        summaries
            .iter()
            .map(|s| {
                format!(
                    "#{} ll={:.6} iters={} converged={}",
                    s.index, s.log_likelihood, s.iterations, s.converged
                )
            })
            .collect::<Vec<_>>()
            .join("; ")
    };
    if !best.f.is_finite() {
        return Err(MidasError::NonFiniteLikelihood);
    }
    if !best.converged {
        return Err(MidasError::NoConvergence {
            iterations: best.iterations,
            spread: best.spread,
            restarts: describe(),
        });
    }
    let params = reparam.decode(&best.x, &start);
    params.validate(spec)?;
    let filtered = filter(spec, &params, data)?;
    let log_likelihood = gaussian_loglik(&data.returns[filtered.first_day..], params.mu, &filtered.h);
    Ok(MidasFit {
        spec: spec.clone(),
        params,
        log_likelihood,
        n_obs: data.n_days() - filtered.first_day,
        filtered,
        convergence: ConvergenceReport {
            converged: true,
            iterations: best.iterations,
            evaluations: total_evals,
            spread: best.spread,
            best_restart: best_index,
            restarts: summaries,
        },
    })
}

/// On-disk form of a fit: spec, named parameters, likelihood and convergence block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub spec: MidasSpec,
    pub params: Map<String, Value>,
    pub log_likelihood: f64,
    pub n_obs: usize,
    pub convergence: ConvergenceReport,
}

impl MidasFit {
    pub fn document(&self) -> FitDocument {
        FitDocument {
            spec: self.spec.clone(),
            params: self.params.to_map(&self.spec),
            log_likelihood: self.log_likelihood,
            n_obs: self.n_obs,
            convergence: self.convergence.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        self.document().save(path)
    }
}

impl FitDocument {
    pub fn load(path: impl AsRef<Path>) -> crate::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| crate::Error::json(path, e))
    }

    pub fn params(&self) -> Result<MidasParams, MidasError> {
        MidasParams::from_map(&self.spec, &self.params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| crate::Error::json(path, e))?;
        crate::marketdata::write_text(path, &text)
    }
}

/// Writes `date,tau,g,h` for the modeled days. `dates` covers every day of the data.
pub fn write_filtered_csv(path: impl AsRef<Path>, dates: &[NaiveDate], filtered: &Filtered) -> crate::Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| crate::Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let err = |e| crate::Error::csv(path, e);
    w.write_record(["date", "tau", "g", "h"]).map_err(err)?;
    for (i, ((t, g), h)) in filtered.tau.iter().zip(&filtered.g).zip(&filtered.h).enumerate() {
        w.write_record([
            dates[filtered.first_day + i].to_string(),
            t.to_string(),
            g.to_string(),
            h.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))
}

/// A simulated GARCH-MIDAS path with its exact latent components.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedMidas {
    pub data: MidasData,
    pub filtered: Filtered,
}

/// Stationary AR(1) with unit variance: `x_t = phi x_{t-1} + sqrt(1 - phi^2) e_t`.
pub fn ar1_series(n: usize, phi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let scale = (1.0 - phi * phi).sqrt();
    let mut x: f64 = StandardNormal.sample(rng);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(x);
        let e: f64 = StandardNormal.sample(rng);
        x = phi * x + scale * e;
    }
    out
}

/// Generates returns from given shocks.
///
/// Days in the first `K` months use the constant level `link(m)`. From month
/// `K` on, `g` starts at 1 and follows [`short_run_g`] on the emitted
/// returns, so re-filtering the output reproduces `tau`, `g` and `h`. The
/// optional `variance_multiplier` scales each day's variance without
/// entering the model (used for signals the model does not see).
pub fn simulate_path(
    spec: &MidasSpec,
    params: &MidasParams,
    month_of_day: &[usize],
    covariates: &[Vec<f64>],
    variance_multiplier: Option<&[f64]>,
    shocks: &[f64],
) -> Result<SimulatedMidas, MidasError> {
    spec.validate()?;
    params.validate(spec)?;
    let n = month_of_day.len();
    if shocks.len() != n || variance_multiplier.is_some_and(|v| v.len() != n) {
        return Err(MidasError::BadParameter("shock and multiplier lengths must match the days".into()));
    }
    let months = month_of_day.last().map_or(0, |t| t + 1);
    if months <= spec.lags {
        return Err(MidasError::InsufficientLags {
            lags: spec.lags,
            months,
        });
    }
    let base = spec.apply_link(params.m);
    if !(base > 0.0) {
        return Err(MidasError::NonPositiveTau(base));
    }
    let mult = |i: usize| variance_multiplier.map_or(1.0, |v| v[i]);
    let mut returns = Vec::with_capacity(n);
    let first = month_of_day.iter().position(|&t| t >= spec.lags).unwrap_or(n);
    for i in 0..first {
        returns.push(params.mu + (base * mult(i)).sqrt() * shocks[i]);
    }

    let weights = (0..spec.covariates)
        .map(|j| beta_weights(spec.lags, params.omega1[j], params.omega2[j]))
        .collect::<Result<Vec<_>, _>>()?;
    let mut monthly: Vec<Vec<f64>> = match spec.mode {
        LongRunMode::Exogenous => {
            if covariates.len() != spec.covariates || covariates.iter().any(|c| c.len() < months) {
                return Err(MidasError::BadParameter("covariates must cover every month".into()));
            }
            covariates.iter().map(|c| c[..months].to_vec()).collect()
        }
        LongRunMode::RvWindow => vec![Vec::with_capacity(months)],
    };
    let omega = params.omega();
    let (mut tau, mut g, mut h) = (Vec::new(), Vec::new(), Vec::new());
    let mut tau_current = f64::NAN;
    let mut current_month = usize::MAX;
    for i in first..n {
        let t = month_of_day[i];
        if t != current_month {
            if spec.mode == LongRunMode::RvWindow {
                // monthly realized variance of every completed month
                let rv = monthly_rv(&returns, &month_of_day[..returns.len()])
                    .map_err(|e| MidasError::DegenerateData(e.to_string()))?;
                monthly[0] = rv;
            }
            let mut x = params.m;
            for j in 0..spec.covariates {
                let filtered: f64 = weights[j]
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * monthly[j][t - 1 - k])
                    .sum();
                x += params.theta[j] * filtered;
            }
            tau_current = spec.apply_link(x);
            if !(tau_current > 0.0) || !tau_current.is_finite() {
                return Err(MidasError::NonPositiveTau(tau_current));
            }
            current_month = t;
        }
        let g_i = if i == first {
            1.0
        } else {
            let e = returns[i - 1] - params.mu;
            omega + params.alpha * e * e / tau[tau.len() - 1] + params.beta * g[g.len() - 1]
        };
        let h_i = tau_current * g_i;
        tau.push(tau_current);
        g.push(g_i);
        h.push(h_i);
        returns.push(params.mu + (h_i * mult(i)).sqrt() * shocks[i]);
    }
    let covariates_out = match spec.mode {
        LongRunMode::Exogenous => monthly,
        LongRunMode::RvWindow => vec![monthly_rv(&returns, month_of_day)
            .map_err(|e| MidasError::DegenerateData(e.to_string()))?],
    };
    Ok(SimulatedMidas {
        data: MidasData {
            returns,
            month_of_day: month_of_day.to_vec(),
            covariates: covariates_out,
        },
        filtered: Filtered {
            first_day: first,
            tau,
            g,
            h,
        },
    })
}

/// Month index for `months * days_per_month` consecutive days.
pub fn regular_calendar(months: usize, days_per_month: usize) -> Vec<usize> {
    (0..months).flat_map(|t| std::iter::repeat_n(t, days_per_month)).collect()
}

/// Simulates `months * days_per_month` days with AR(1) covariates (coefficient 0.8).
pub fn simulate(
    spec: &MidasSpec,
    params: &MidasParams,
    months: usize,
    days_per_month: usize,
    seed: u64,
) -> Result<SimulatedMidas, MidasError> {
    simulate_with_ar(spec, params, months, days_per_month, seed, 0.8)
}

pub fn simulate_with_ar(
    spec: &MidasSpec,
    params: &MidasParams,
    months: usize,
    days_per_month: usize,
    seed: u64,
    ar: f64,
) -> Result<SimulatedMidas, MidasError> {
    if months <= spec.lags || days_per_month == 0 {
        return Err(MidasError::BadParameter(format!(
            "need more than K = {} months and at least one day per month",
            spec.lags
        )));
    }
    if !(ar.abs() < 1.0) {
        return Err(MidasError::BadParameter(format!("AR coefficient {ar} is not stationary")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let covariates: Vec<Vec<f64>> = match spec.mode {
        LongRunMode::Exogenous => (0..spec.covariates)
            .map(|_| ar1_series(months, ar, &mut rng))
            .collect(),
        LongRunMode::RvWindow => Vec::new(),
    };
    let calendar = regular_calendar(months, days_per_month);
    let shocks: Vec<f64> = (0..calendar.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    simulate_path(spec, params, &calendar, &covariates, None, &shocks)
}
