//! The forecasting pipeline as independent steps that communicate only through files.
//!
//! `simulate -> rv -> pca -> midas-fit -> train -> predict -> evaluate`, plus
//! `ablate`, which trains, predicts and evaluates every feature group.
//! Every step reads its inputs from and writes its outputs to the run's
//! output directory unless an input path is configured explicitly.
//!
//! The chronological split is taken on the trading days of `rv.csv`: the
//! first `floor(n * split_ratio)` days are the training period. Scaling,
//! principal components, GARCH-MIDAS parameters and network weights are all
//! estimated on training days only.

use std::collections::HashMap;
use std::ops::Range;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::evaluation::{self, AblationGroup, EvalRow};
use crate::features::{self, Group, GroupSpec, PcaModel};
use crate::garch_midas::{self, FitOptions, MidasData, MidasSpec};
use crate::linalg::Matrix;
use crate::marketdata::{
    self, align_mixed_frequency, fill_missing, load_attention, load_daily, load_intraday, load_monthly, normalize,
    read_daily_frame, read_monthly_frame, train_len, DailyFrame, FillPolicy, MonthlyFrame, Table, YearMonth,
};
use crate::realized_vol::{self, RvSidecar};
use crate::simlab::{self, ScenarioSpec};
use crate::transformer::{ModelConfig, Optimizer, TrainConfig, TransformerModel};

/// Settings for every step. Keys of the flat configuration file are the field names.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub intraday: Option<PathBuf>,
    pub daily: Option<PathBuf>,
    pub monthly: Option<PathBuf>,
    pub attention: Option<PathBuf>,
    pub lags: usize,
    pub split_ratio: f64,
    pub restarts: usize,
    pub fill: FillPolicy,
    pub retain_macro: usize,
    pub retain_tech: usize,
    pub retain_attention: usize,
    pub window: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: Option<usize>,
    pub shuffle: bool,
    pub optimizer: Optimizer,
    pub width: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_width: usize,
    pub dropout: f64,
    pub group: AblationGroup,
    pub with_baseline: bool,
    pub scenario: ScenarioSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("."),
            seed: 0,
            intraday: None,
            daily: None,
            monthly: None,
            attention: None,
            lags: 12,
            split_ratio: 0.9,
            restarts: 5,
            fill: FillPolicy::ForwardFill,
            retain_macro: 2,
            retain_tech: 3,
            retain_attention: 1,
            window: 5,
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 100,
            patience: None,
            shuffle: false,
            optimizer: Optimizer::Sgd,
            width: 12,
            heads: 3,
            layers: 2,
            ff_width: 24,
            dropout: 0.0,
            group: AblationGroup::G4,
            with_baseline: false,
            scenario: ScenarioSpec::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad value `{value}` for `{key}`"))),
    }
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "out_dir" => self.out_dir = PathBuf::from(v),
            "seed" => self.seed = parse(key, v)?,
            "intraday" => self.intraday = Some(PathBuf::from(v)),
            "daily" => self.daily = Some(PathBuf::from(v)),
            "monthly" => self.monthly = Some(PathBuf::from(v)),
            "attention" => self.attention = Some(PathBuf::from(v)),
            "lags" => self.lags = parse(key, v)?,
            "split_ratio" => self.split_ratio = parse(key, v)?,
            "restarts" => self.restarts = parse(key, v)?,
            "fill" => {
                self.fill = match v {
                    "forward" | "forward-fill" => FillPolicy::ForwardFill,
                    "linear" => FillPolicy::Linear,
                    _ => return Err(Error::Config(format!("unknown fill policy `{v}`"))),
                }
            }
            "retain_macro" => self.retain_macro = parse(key, v)?,
            "retain_tech" => self.retain_tech = parse(key, v)?,
            "retain_attention" => self.retain_attention = parse(key, v)?,
            "window" => self.window = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "patience" => self.patience = if v == "none" { None } else { Some(parse(key, v)?) },
            "shuffle" => self.shuffle = parse_bool(key, v)?,
            "optimizer" => {
                self.optimizer = match v {
                    "sgd" => Optimizer::Sgd,
                    "adam" => Optimizer::Adam,
                    _ => return Err(Error::Config(format!("unknown optimizer `{v}`"))),
                }
            }
            "width" => self.width = parse(key, v)?,
            "heads" => self.heads = parse(key, v)?,
            "layers" => self.layers = parse(key, v)?,
            "ff_width" => self.ff_width = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "group" => self.group = v.parse().map_err(|e: evaluation::EvalError| Error::Config(e.to_string()))?,
            "with_baseline" => self.with_baseline = parse_bool(key, v)?,
            "sim.months" => self.scenario.months = parse(key, v)?,
            "sim.days_per_month" => self.scenario.days_per_month = parse(key, v)?,
            "sim.attention_gamma" => self.scenario.attention_gamma = parse(key, v)?,
            "sim.overnight_share" => self.scenario.overnight_share = parse(key, v)?,
            "sim.missing_rate" => self.scenario.missing_rate = parse(key, v)?,
            "sim.macro_ar" => self.scenario.macro_ar = parse(key, v)?,
            "sim.attention_ar" => self.scenario.attention_ar = parse(key, v)?,
            "sim.theta_1" => self.scenario.params.theta[0] = parse(key, v)?,
            "sim.theta_2" => self.scenario.params.theta[1] = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies the settings of a flat `key = value` file. Blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn input(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.path(name))
    }

    pub fn midas_spec(&self) -> MidasSpec {
        MidasSpec::exogenous(self.lags, self.retain_macro)
    }

    pub fn model_config(&self, inputs: usize) -> ModelConfig {
        ModelConfig {
            inputs,
            width: self.width,
            heads: self.heads,
            layers: self.layers,
            ff_width: self.ff_width,
            dropout: self.dropout,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            window: self.window,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            patience: self.patience,
            shuffle: self.shuffle,
            optimizer: self.optimizer,
        }
    }

    pub fn scenario_spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            seed: self.seed,
            lags: self.lags,
            ..self.scenario.clone()
        }
    }

    fn group_specs(&self) -> Result<Vec<GroupSpec>> {
        let defaults = GroupSpec::defaults();
        let retain = [self.retain_macro, self.retain_tech, self.retain_attention];
        defaults
            .into_iter()
            .zip(retain)
            .map(|(spec, k)| {
                if k == 0 || k > spec.columns.len() {
                    return Err(Error::Config(format!(
                        "{} group keeps between 1 and {} components",
                        spec.group.name(),
                        spec.columns.len()
                    )));
                }
                Ok(GroupSpec { retain: k, ..spec })
            })
            .collect()
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes the scenario files into the output directory.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let scenario = simlab::gen_full_scenario(&cfg.scenario_spec())?;
    scenario.write(&cfg.out_dir)
}

/// `rv.csv` (`date,ret,rv,rv_adj`) and `rv.json` with the scale parameter,
/// which is estimated on the training days.
pub fn cmd_rv(cfg: &RunConfig) -> Result<()> {
    let series = load_intraday(cfg.input(&cfg.intraday, "intraday.csv"))?;
    let n = series.days().count().saturating_sub(1);
    let k = train_len(n, cfg.split_ratio).max(1);
    let rv = realized_vol::compute_series(&series, Some(k))?;
    ensure_dir(&cfg.out_dir)?;
    rv.write_csv(cfg.path("rv.csv"))?;
    let sidecar = rv.sidecar();
    let path = cfg.path("rv.json");
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json(&path, e))?;
    marketdata::write_text(&path, &text)?;
    if !rv.incomplete.is_empty() {
        eprintln!("rv: {} days have fewer than 48 bars", rv.incomplete.len());
    }
    Ok(())
}

fn check_ratio(ratio: f64) -> Result<()> {
    if ratio > 0.0 && ratio < 1.0 {
        Ok(())
    } else {
        Err(marketdata::DataError::InvalidRatio(ratio).into())
    }
}

/// Principal components of the three indicator groups.
///
/// Writes `factors.csv` (`date,TECH1..,BD1..`), `factors_monthly.csv`
/// (`month,PCM1,..`) and one `pca_<group>.json` per group.
pub fn cmd_pca(cfg: &RunConfig) -> Result<()> {
    check_ratio(cfg.split_ratio)?;
    let rv = read_daily_frame(cfg.path("rv.csv"))?;
    let daily = DailyFrame::from_daily(&load_daily(cfg.input(&cfg.daily, "daily.csv"))?);
    let attention = DailyFrame::from_attention(&load_attention(cfg.input(&cfg.attention, "attention.csv"))?);
    let monthly = MonthlyFrame::from_monthly(&load_monthly(cfg.input(&cfg.monthly, "monthly.csv"))?);
    let joined = rv.join(&daily).join(&attention);
    if joined.dates.len() < rv.dates.len() {
        eprintln!(
            "pca: {} trading days lack daily or attention rows and are dropped",
            rv.dates.len() - joined.dates.len()
        );
    }
    let panel = fill_missing(&align_mixed_frequency(&joined, &monthly)?, cfg.fill)?;
    if panel.is_empty() {
        return Err(marketdata::DataError::EmptyPanel.into());
    }
    let k = train_len(panel.len(), cfg.split_ratio);
    let (_, stats) = normalize(&panel.slice(0, k), None)?;
    let (scaled, _) = normalize(&panel, Some(&stats))?;
    let specs = cfg.group_specs()?;
    let (factors, models) = features::extract_factor_panel(&scaled, &specs, k)?;

    ensure_dir(&cfg.out_dir)?;
    let mut daily_out = Table::new();
    let mut monthly_out = Table::new();
    for spec in &specs {
        for name in spec.component_names() {
            if spec.group.is_monthly() {
                monthly_out.push(name.clone(), factors.monthly.require(&name)?.to_vec())?;
            } else {
                daily_out.push(name.clone(), factors.daily.require(&name)?.to_vec())?;
            }
        }
    }
    marketdata::write_daily_frame(
        cfg.path("factors.csv"),
        &DailyFrame {
            dates: factors.dates.clone(),
            table: daily_out,
        },
    )?;
    marketdata::write_monthly_frame(
        cfg.path("factors_monthly.csv"),
        &MonthlyFrame {
            months: factors.months.clone(),
            table: monthly_out,
        },
    )?;
    for model in &models {
        let name = model.group.map_or("group", Group::name);
        model.save(cfg.path(&format!("pca_{name}.json")))?;
    }
    Ok(())
}

/// Returns, month index and monthly covariates for GARCH-MIDAS.
fn midas_inputs(cfg: &RunConfig) -> Result<(Vec<NaiveDate>, MidasData)> {
    let rv = read_daily_frame(cfg.path("rv.csv"))?;
    let monthly = read_monthly_frame(cfg.path("factors_monthly.csv"))?;
    let returns = rv.table.require("ret")?.to_vec();
    let month_index = simlab::month_index_of(&rv.dates);
    let pos: HashMap<YearMonth, usize> = monthly.months.iter().enumerate().map(|(i, m)| (*m, i)).collect();
    let mut months = Vec::new();
    for d in &rv.dates {
        let ym = YearMonth::of(*d);
        if months.last() != Some(&ym) {
            months.push(ym);
        }
    }
    let names: Vec<String> = (1..=cfg.retain_macro).map(|k| format!("PCM{k}")).collect();
    let mut covariates = Vec::with_capacity(names.len());
    for name in &names {
        let col = monthly.table.require(name)?;
        let series = months
            .iter()
            .map(|m| {
                pos.get(m)
                    .map(|&i| col[i])
                    .ok_or(marketdata::DataError::UncoveredMonth(*m))
            })
            .collect::<std::result::Result<Vec<f64>, _>>()?;
        covariates.push(series);
    }
    let data = MidasData::new(returns, month_index, covariates)?;
    Ok((rv.dates, data))
}

/// Fits GARCH-MIDAS on the training days with the macro components as
/// covariates, then filters every day. Writes `midas_fit.json` and `h.csv`.
pub fn cmd_midas_fit(cfg: &RunConfig) -> Result<()> {
    check_ratio(cfg.split_ratio)?;
    let (dates, data) = midas_inputs(cfg)?;
    let spec = cfg.midas_spec();
    let k = train_len(data.n_days(), cfg.split_ratio);
    let opts = FitOptions {
        restarts: cfg.restarts,
        seed: cfg.seed,
        ..Default::default()
    };
    let fit = garch_midas::fit(&spec, &data.truncate(k), None, &opts)?;
    let filtered = garch_midas::filter(&spec, &fit.params, &data)?;
    ensure_dir(&cfg.out_dir)?;
    fit.save(cfg.path("midas_fit.json"))?;
    garch_midas::write_filtered_csv(cfg.path("h.csv"), &dates, &filtered)
}

/// Feature matrix `[h, TECH.., BD..]` over the days that have a GARCH-MIDAS
/// variance, with the adjusted RV target and the training range.
pub struct ModelInputs {
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    pub features: Matrix,
    pub target: Vec<f64>,
    /// Rows of `dates` in the training period.
    pub train: Range<usize>,
    /// Rows of `dates` in the test period.
    pub test: Range<usize>,
}

impl ModelInputs {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        check_ratio(cfg.split_ratio)?;
        let rv = read_daily_frame(cfg.path("rv.csv"))?;
        let factors = read_daily_frame(cfg.path("factors.csv"))?;
        let h = read_daily_frame(cfg.path("h.csv"))?;
        let k = train_len(rv.dates.len(), cfg.split_ratio);
        let split_date = rv.dates.get(k).copied();
        let joined = h.join(&factors).join(&rv);
        let mut names = vec!["h".to_string()];
        names.extend(factors.table.names().iter().cloned());
        let columns: Vec<&[f64]> = names
            .iter()
            .map(|n| joined.table.require(n))
            .collect::<std::result::Result<_, _>>()?;
        let features = Matrix::from_columns(&columns);
        let target = joined.table.require("rv_adj")?.to_vec();
        let n = joined.dates.len();
        let boundary = match split_date {
            Some(d) => joined.dates.iter().position(|x| *x >= d).unwrap_or(n),
            None => n,
        };
        Ok(Self {
            dates: joined.dates,
            names,
            features,
            target,
            train: 0..boundary,
            test: boundary..n,
        })
    }

    /// Columns of `group`, in group order.
    pub fn select(&self, group: AblationGroup) -> Result<(Vec<String>, Matrix)> {
        let idx = evaluation::ablation_features(group, &self.names)?;
        let cols: Vec<Vec<f64>> = idx.iter().map(|&j| self.features.column(j)).collect();
        Ok((idx.iter().map(|&j| self.names[j].clone()).collect(), Matrix::from_columns(&cols)))
    }
}

fn train_group(cfg: &RunConfig, inputs: &ModelInputs, group: AblationGroup) -> Result<TransformerModel> {
    let (names, features) = inputs.select(group)?;
    Ok(TransformerModel::fit(
        &features,
        &names,
        &inputs.target,
        inputs.train.clone(),
        &cfg.model_config(names.len()),
        &cfg.train_config(),
    )?)
}

/// Forecasts over the test period: `(dates, truth, forecasts)`.
fn predict_group(inputs: &ModelInputs, model: &TransformerModel) -> Result<(Vec<NaiveDate>, Vec<f64>, Vec<f64>)> {
    let idx: Vec<usize> = model
        .features
        .iter()
        .map(|f| {
            inputs
                .names
                .iter()
                .position(|n| n == f)
                .ok_or_else(|| evaluation::EvalError::MissingColumn(f.clone()))
        })
        .collect::<std::result::Result<_, _>>()?;
    let cols: Vec<Vec<f64>> = idx.iter().map(|&j| inputs.features.column(j)).collect();
    let features = Matrix::from_columns(&cols);
    let (rows, preds) = model.predict_rows(&features, &inputs.target, inputs.test.clone())?;
    let dates = rows.iter().map(|&r| inputs.dates[r]).collect();
    let truth = rows.iter().map(|&r| inputs.target[r]).collect();
    Ok((dates, truth, preds))
}

fn write_predictions(path: &Path, dates: &[NaiveDate], truth: &[f64], preds: &[f64]) -> Result<()> {
    let mut out = String::from("date,rv_true,rv_pred\n");
    for ((d, t), p) in dates.iter().zip(truth).zip(preds) {
        out.push_str(&format!("{d},{t},{p}\n"));
    }
    marketdata::write_text(path, &out)
}

fn read_predictions(path: &Path) -> Result<(Vec<NaiveDate>, Vec<f64>, Vec<f64>)> {
    let frame = read_daily_frame(path)?;
    let truth = frame.table.require("rv_true")?.to_vec();
    let preds = frame.table.require("rv_pred")?.to_vec();
    Ok((frame.dates, truth, preds))
}

/// Trains the configured group on the training windows; writes `weights.json`.
pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let inputs = ModelInputs::load(cfg)?;
    let model = train_group(cfg, &inputs, cfg.group)?;
    ensure_dir(&cfg.out_dir)?;
    model.save(cfg.path("weights.json"))
}

/// Test-period forecasts from `weights.json`; writes `pred.csv` (`date,rv_true,rv_pred`).
pub fn cmd_predict(cfg: &RunConfig) -> Result<()> {
    let inputs = ModelInputs::load(cfg)?;
    let model = TransformerModel::load(cfg.path("weights.json"))?;
    let (dates, truth, preds) = predict_group(&inputs, &model)?;
    write_predictions(&cfg.path("pred.csv"), &dates, &truth, &preds)
}

fn evaluate_logged(model: &str, group: &str, preds: &[f64], truth: &[f64]) -> Result<EvalRow> {
    let row = evaluation::evaluate(model, group, preds, truth)?;
    if row.excluded > 0 {
        eprintln!("evaluate: {model} {group}: {} non-positive forecasts left out of qlike and r2log", row.excluded);
    }
    Ok(row)
}

/// Persistence forecasts for the given dates: the previous day's adjusted RV.
fn persistence_for(cfg: &RunConfig, dates: &[NaiveDate]) -> Result<(Vec<f64>, Vec<f64>)> {
    let rv = read_daily_frame(cfg.path("rv.csv"))?;
    let adj = rv.table.require("rv_adj")?;
    let pos: HashMap<NaiveDate, usize> = rv.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let mut preds = Vec::new();
    let mut truth = Vec::new();
    for d in dates {
        if let Some(&i) = pos.get(d) {
            if i > 0 {
                preds.push(adj[i - 1]);
                truth.push(adj[i]);
            }
        }
    }
    Ok((preds, truth))
}

/// Scores `pred.csv`; writes `report.csv`.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let (dates, truth, preds) = read_predictions(&cfg.path("pred.csv"))?;
    let group = match TransformerModel::load(cfg.path("weights.json")) {
        Ok(m) => group_of(&m.features),
        Err(_) => cfg.group.to_string(),
    };
    let mut rows = vec![evaluate_logged("transformer", &group, &preds, &truth)?];
    if cfg.with_baseline {
        let (p, t) = persistence_for(cfg, &dates)?;
        rows.push(evaluate_logged("persistence", "-", &p, &t)?);
    }
    evaluation::write_report(cfg.path("report.csv"), &rows)
}

fn group_of(features: &[String]) -> String {
    AblationGroup::ALL
        .iter()
        .find(|g| g.features().iter().copied().eq(features.iter().map(String::as_str)))
        .map_or_else(|| "custom".to_string(), ToString::to_string)
}

/// Trains, predicts and evaluates G1..G4 with one seed; writes
/// `weights_G*.json`, `pred_G*.csv` and a four-row `report.csv`.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<Vec<EvalRow>> {
    let inputs = ModelInputs::load(cfg)?;
    ensure_dir(&cfg.out_dir)?;
    let mut rows = Vec::new();
    let mut baseline_dates = Vec::new();
    for group in AblationGroup::ALL {
        let model = train_group(cfg, &inputs, group)?;
        model.save(cfg.path(&format!("weights_{group}.json")))?;
        let (dates, truth, preds) = predict_group(&inputs, &model)?;
        write_predictions(&cfg.path(&format!("pred_{group}.csv")), &dates, &truth, &preds)?;
        rows.push(evaluate_logged("transformer", &group.to_string(), &preds, &truth)?);
        baseline_dates = dates;
    }
    if cfg.with_baseline {
        let (p, t) = persistence_for(cfg, &baseline_dates)?;
        rows.push(evaluate_logged("persistence", "-", &p, &t)?);
    }
    evaluation::write_report(cfg.path("report.csv"), &rows)?;
    Ok(rows)
}

/// Runs `rv`, `pca`, `midas-fit` and `ablate` in sequence on existing input files.
pub fn run_all(cfg: &RunConfig) -> Result<Vec<EvalRow>> {
    cmd_rv(cfg)?;
    cmd_pca(cfg)?;
    cmd_midas_fit(cfg)?;
    cmd_ablate(cfg)
}

/// Loads a saved PCA model for `group` from the output directory.
pub fn load_pca(cfg: &RunConfig, group: Group) -> Result<PcaModel> {
    PcaModel::load(cfg.path(&format!("pca_{}.json", group.name())))
}

/// Reads the `rv.json` sidecar.
pub fn load_rv_sidecar(cfg: &RunConfig) -> Result<RvSidecar> {
    let path = cfg.path("rv.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
}
