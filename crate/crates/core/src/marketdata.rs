//! Loading, validation, cleaning and mixed-frequency alignment of the raw inputs.
//!
//! All four input files are CSV with a fixed header. Missing cells are empty
//! fields; inside the in-memory tables a missing cell is `NaN` until
//! [`fill_missing`] replaces it.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

/// Maximum number of 5-minute bars in one trading day.
pub const MAX_BARS_PER_DAY: usize = 48;

pub const INTRADAY_HEADER: [&str; 3] = ["date", "time_min", "price"];
pub const DAILY_HEADER: [&str; 14] = [
    "date", "open", "high", "low", "close", "volume", "turn", "boll", "ma5", "ma20", "macd", "rsi",
    "sobv", "roc",
];
pub const MONTHLY_HEADER: [&str; 11] = [
    "month",
    "meci",
    "melei",
    "melai",
    "cpi",
    "retailsale",
    "rpi",
    "ppi",
    "m2",
    "finvest",
    "iop",
];
pub const ATTENTION_HEADER: [&str; 6] = ["date", "csi300", "csi500", "sse50", "hsparts", "hsetf"];

/// Columns that are forecasting targets rather than features; [`normalize`] leaves them alone.
pub const TARGET_COLUMNS: [&str; 3] = ["ret", "rv", "rv_adj"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("could not read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("bad header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: non-positive price")]
    NonPositivePrice { line: u64 },
    #[error("duplicate bar at {date} minute {time}")]
    DuplicateBar { date: NaiveDate, time: u32 },
    #[error("duplicate record for {0}")]
    DuplicateRecord(String),
    #[error("months are not contiguous: {0} follows {1}")]
    NonContiguousMonths(YearMonth, YearMonth),
    #[error("column `{0}` has no values")]
    AllMissingColumn(String),
    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("no monthly record covers {0}")]
    UncoveredMonth(YearMonth),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("empty panel")]
    EmptyPanel,
    #[error("split ratio {0} outside (0, 1)")]
    InvalidRatio(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// A calendar month, written `YYYY-MM`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month out of range");
        Self { year, month }
    }

    pub fn of(date: NaiveDate) -> Self {
        Self::new(date.year(), date.month())
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            Self::new(self.year + 1, 1)
        } else {
            Self::new(self.year, self.month + 1)
        }
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month")
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| format!("`{s}` is not YYYY-MM"))?;
        let year: i32 = y.parse().map_err(|_| format!("bad year in `{s}`"))?;
        let month: u32 = m.parse().map_err(|_| format!("bad month in `{s}`"))?;
        if y.len() != 4 || m.len() != 2 || !(1..=12).contains(&month) {
            return Err(format!("`{s}` is not YYYY-MM"));
        }
        Ok(Self { year, month })
    }
}

impl TryFrom<String> for YearMonth {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<YearMonth> for String {
    fn from(m: YearMonth) -> String {
        m.to_string()
    }
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

/// One 5-minute bar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bar {
    pub date: NaiveDate,
    /// Minutes from the market open.
    pub time_min: u32,
    pub price: f64,
}

/// Validated 5-minute prices for one instrument, ordered by `(date, time_min)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntradaySeries {
    instrument: String,
    bars: Vec<Bar>,
}

impl IntradaySeries {
    /// Sorts and validates bars.
    pub fn new(instrument: impl Into<String>, mut bars: Vec<Bar>) -> Result<Self, DataError> {
        for b in &bars {
            if !(b.price > 0.0) || !b.price.is_finite() {
                return Err(DataError::NonPositivePrice { line: 0 });
            }
        }
        bars.sort_by_key(|a| (a.date, a.time_min));
        for w in bars.windows(2) {
            if (w[0].date, w[0].time_min) == (w[1].date, w[1].time_min) {
                return Err(DataError::DuplicateBar {
                    date: w[1].date,
                    time: w[1].time_min,
                });
            }
        }
        let s = Self {
            instrument: instrument.into(),
            bars,
        };
        if let Some((date, n)) = s.days().map(|(d, b)| (d, b.len())).find(|(_, n)| *n > MAX_BARS_PER_DAY) {
            return Err(DataError::MalformedRow {
                line: 0,
                reason: format!("{n} bars on {date}, at most {MAX_BARS_PER_DAY} allowed"),
            });
        }
        Ok(s)
    }

    pub fn instrument(&self) -> &str {
        &self.instrument
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    /// Iterates over trading days in date order.
    pub fn days(&self) -> impl Iterator<Item = (NaiveDate, &[Bar])> + '_ {
        self.bars
            .chunk_by(|a, b| a.date == b.date)
            .map(|chunk| (chunk[0].date, chunk))
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>, DataError> {
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            DataError::MissingFile(path.to_path_buf())
        } else {
            DataError::Read {
                path: path.to_path_buf(),
                message: e.to_string(),
            }
        }
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn check_header(rdr: &mut csv::Reader<File>, path: &Path, expected: &[&str]) -> Result<(), DataError> {
    let found = rdr.headers().map_err(|e| DataError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if found.iter().ne(expected.iter().copied()) {
        return Err(DataError::BadHeader {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn records(
    rdr: &mut csv::Reader<File>,
    width: usize,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord), DataError>> + '_ {
    rdr.records().map(move |r| {
        let rec = r.map_err(|e| DataError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(DataError::MalformedRow {
                line,
                reason: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        Ok((line, rec))
    })
}

fn field_date(rec: &csv::StringRecord, line: u64) -> Result<NaiveDate, DataError> {
    parse_date(&rec[0]).ok_or_else(|| DataError::MalformedRow {
        line,
        reason: format!("bad date `{}`", &rec[0]),
    })
}

fn field_opt(rec: &csv::StringRecord, i: usize, line: u64) -> Result<Option<f64>, DataError> {
    let s = &rec[i];
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(DataError::MalformedRow {
            line,
            reason: format!("bad number `{s}` in column {}", i + 1),
        }),
    }
}

/// Reads an intraday CSV (`date,time_min,price`).
pub fn load_intraday(path: impl AsRef<Path>) -> Result<IntradaySeries, DataError> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    check_header(&mut rdr, path, &INTRADAY_HEADER)?;
    let mut bars = Vec::new();
    let mut per_day: HashMap<NaiveDate, usize> = HashMap::new();
    for row in records(&mut rdr, INTRADAY_HEADER.len()) {
        let (line, rec) = row?;
        let date = field_date(&rec, line)?;
        let time_min: u32 = rec[1].parse().map_err(|_| DataError::MalformedRow {
            line,
            reason: format!("bad time_min `{}`", &rec[1]),
        })?;
        let price = field_opt(&rec, 2, line)?.ok_or(DataError::MalformedRow {
            line,
            reason: "missing price".into(),
        })?;
        if price <= 0.0 {
            return Err(DataError::NonPositivePrice { line });
        }
        let count = per_day.entry(date).or_default();
        *count += 1;
        if *count > MAX_BARS_PER_DAY {
            return Err(DataError::MalformedRow {
                line,
                reason: format!("more than {MAX_BARS_PER_DAY} bars on {date}"),
            });
        }
        bars.push(Bar {
            date,
            time_min,
            price,
        });
    }
    let instrument = path
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    IntradaySeries::new(instrument, bars)
}

fn create(path: &Path) -> Result<csv::Writer<File>, crate::Error> {
    let file = File::create(path).map_err(|e| crate::Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_intraday(path: impl AsRef<Path>, series: &IntradaySeries) -> Result<(), crate::Error> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let err = |e| crate::Error::csv(path, e);
    w.write_record(INTRADAY_HEADER).map_err(err)?;
    for b in series.bars() {
        w.write_record([b.date.to_string(), b.time_min.to_string(), b.price.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))
}

/// One row of the daily technical-indicator file.
#[derive(Clone, Debug, PartialEq)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub open: Option<f64>,
    pub high: Option<f64>,
    pub low: Option<f64>,
    pub close: Option<f64>,
    pub volume: Option<f64>,
    pub turn: Option<f64>,
    pub boll: Option<f64>,
    pub ma5: Option<f64>,
    pub ma20: Option<f64>,
    pub macd: Option<f64>,
    pub rsi: Option<f64>,
    pub sobv: Option<f64>,
    pub roc: Option<f64>,
}

impl DailyRecord {
    /// Values in `DAILY_HEADER` order, excluding the date.
    pub fn values(&self) -> [Option<f64>; 13] {
        [
            self.open, self.high, self.low, self.close, self.volume, self.turn, self.boll, self.ma5,
            self.ma20, self.macd, self.rsi, self.sobv, self.roc,
        ]
    }

    fn from_values(date: NaiveDate, v: [Option<f64>; 13]) -> Self {
        Self {
            date,
            open: v[0],
            high: v[1],
            low: v[2],
            close: v[3],
            volume: v[4],
            turn: v[5],
            boll: v[6],
            ma5: v[7],
            ma20: v[8],
            macd: v[9],
            rsi: v[10],
            sobv: v[11],
            roc: v[12],
        }
    }

    fn validate(&self) -> Result<(), String> {
        for p in [self.open, self.high, self.low, self.close].into_iter().flatten() {
            if p <= 0.0 {
                return Err("non-positive price".into());
            }
        }
        if let (Some(lo), Some(hi)) = (self.low, self.high) {
            for p in [self.open, self.close].into_iter().flatten() {
                if p < lo || p > hi {
                    return Err(format!("price {p} outside [low {lo}, high {hi}]"));
                }
            }
        }
        if self.volume.is_some_and(|v| v < 0.0) {
            return Err("negative volume".into());
        }
        Ok(())
    }
}

/// One row of the monthly macro file.
#[derive(Clone, Debug, PartialEq)]
pub struct MonthlyRecord {
    pub month: YearMonth,
    pub values: [Option<f64>; 10],
}

/// One row of the attention-index file.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord {
    pub date: NaiveDate,
    pub values: [Option<f64>; 5],
}

fn check_sorted_unique<K: Ord + Copy + fmt::Display>(keys: impl Iterator<Item = K>) -> Result<(), DataError> {
    let keys: Vec<K> = keys.collect();
    for w in keys.windows(2) {
        if w[0] == w[1] {
            return Err(DataError::DuplicateRecord(w[1].to_string()));
        }
    }
    Ok(())
}

pub fn load_daily(path: impl AsRef<Path>) -> Result<Vec<DailyRecord>, DataError> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    check_header(&mut rdr, path, &DAILY_HEADER)?;
    let mut out = Vec::new();
    for row in records(&mut rdr, DAILY_HEADER.len()) {
        let (line, rec) = row?;
        let date = field_date(&rec, line)?;
        let mut v = [None; 13];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = field_opt(&rec, i + 1, line)?;
        }
        let r = DailyRecord::from_values(date, v);
        r.validate()
            .map_err(|reason| DataError::MalformedRow { line, reason })?;
        out.push(r);
    }
    out.sort_by_key(|r| r.date);
    check_sorted_unique(out.iter().map(|r| r.date))?;
    Ok(out)
}

pub fn load_monthly(path: impl AsRef<Path>) -> Result<Vec<MonthlyRecord>, DataError> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    check_header(&mut rdr, path, &MONTHLY_HEADER)?;
    let mut out = Vec::new();
    for row in records(&mut rdr, MONTHLY_HEADER.len()) {
        let (line, rec) = row?;
        let month: YearMonth = rec[0]
            .parse()
            .map_err(|reason| DataError::MalformedRow { line, reason })?;
        let mut values = [None; 10];
        for (i, slot) in values.iter_mut().enumerate() {
            *slot = field_opt(&rec, i + 1, line)?;
        }
        out.push(MonthlyRecord { month, values });
    }
    out.sort_by_key(|r| r.month);
    check_sorted_unique(out.iter().map(|r| r.month))?;
    for w in out.windows(2) {
        if w[0].month.succ() != w[1].month {
            return Err(DataError::NonContiguousMonths(w[1].month, w[0].month));
        }
    }
    Ok(out)
}

pub fn load_attention(path: impl AsRef<Path>) -> Result<Vec<AttentionRecord>, DataError> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    check_header(&mut rdr, path, &ATTENTION_HEADER)?;
    let mut out = Vec::new();
    for row in records(&mut rdr, ATTENTION_HEADER.len()) {
        let (line, rec) = row?;
        let date = field_date(&rec, line)?;
        let mut values = [None; 5];
        for (i, slot) in values.iter_mut().enumerate() {
            *slot = field_opt(&rec, i + 1, line)?;
            if slot.is_some_and(|v| v < 0.0) {
                return Err(DataError::MalformedRow {
                    line,
                    reason: "negative attention count".into(),
                });
            }
        }
        out.push(AttentionRecord { date, values });
    }
    out.sort_by_key(|r| r.date);
    check_sorted_unique(out.iter().map(|r| r.date))?;
    Ok(out)
}

pub fn write_daily(path: impl AsRef<Path>, rows: &[DailyRecord]) -> Result<(), crate::Error> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let err = |e| crate::Error::csv(path, e);
    w.write_record(DAILY_HEADER).map_err(err)?;
    for r in rows {
        let mut rec = vec![r.date.to_string()];
        rec.extend(r.values().into_iter().map(fmt_opt));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))
}

pub fn write_monthly(path: impl AsRef<Path>, rows: &[MonthlyRecord]) -> Result<(), crate::Error> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let err = |e| crate::Error::csv(path, e);
    w.write_record(MONTHLY_HEADER).map_err(err)?;
    for r in rows {
        let mut rec = vec![r.month.to_string()];
        rec.extend(r.values.iter().copied().map(fmt_opt));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))
}

pub fn write_attention(path: impl AsRef<Path>, rows: &[AttentionRecord]) -> Result<(), crate::Error> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let err = |e| crate::Error::csv(path, e);
    w.write_record(ATTENTION_HEADER).map_err(err)?;
    for r in rows {
        let mut rec = vec![r.date.to_string()];
        rec.extend(r.values.iter().copied().map(fmt_opt));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))
}

/// Named columns of equal length. Missing cells are `NaN`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.index_of(name).map(|i| self.columns[i].as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f64], DataError> {
        self.column(name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    }

    pub fn column_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        self.index_of(name).map(move |i| &mut self.columns[i])
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.columns.iter().map(Vec::as_slice))
    }

    /// Appends a column, replacing any existing column of the same name.
    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<(), DataError> {
        let name = name.into();
        if self.ncols() > 0 && values.len() != self.nrows() {
            return Err(DataError::LengthMismatch(values.len(), self.nrows()));
        }
        match self.index_of(&name) {
            Some(i) => self.columns[i] = values,
            None => {
                self.names.push(name);
                self.columns.push(values);
            }
        }
        Ok(())
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Table {
        Table {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| idx.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Table {
        Table {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c[start..end].to_vec()).collect(),
        }
    }

    /// Gathers the named columns into an `n x p` matrix.
    pub fn to_matrix(&self, names: &[impl AsRef<str>]) -> Result<Matrix, DataError> {
        let cols = names
            .iter()
            .map(|n| self.require(n.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Matrix::from_columns(&cols))
    }
}

/// Daily-frequency data keyed by trading date.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DailyFrame {
    pub dates: Vec<NaiveDate>,
    pub table: Table,
}

impl DailyFrame {
    pub fn from_daily(rows: &[DailyRecord]) -> Self {
        let mut table = Table::new();
        for (j, name) in DAILY_HEADER[1..].iter().enumerate() {
            let col = rows
                .iter()
                .map(|r| r.values()[j].unwrap_or(f64::NAN))
                .collect();
            table.push(*name, col).expect("equal lengths");
        }
        Self {
            dates: rows.iter().map(|r| r.date).collect(),
            table,
        }
    }

    pub fn from_attention(rows: &[AttentionRecord]) -> Self {
        let mut table = Table::new();
        for (j, name) in ATTENTION_HEADER[1..].iter().enumerate() {
            let col = rows.iter().map(|r| r.values[j].unwrap_or(f64::NAN)).collect();
            table.push(*name, col).expect("equal lengths");
        }
        Self {
            dates: rows.iter().map(|r| r.date).collect(),
            table,
        }
    }

    /// Inner join on the trading date; columns of `other` are appended.
    pub fn join(&self, other: &DailyFrame) -> DailyFrame {
        let pos: HashMap<NaiveDate, usize> = other
            .dates
            .iter()
            .enumerate()
            .map(|(i, d)| (*d, i))
            .collect();
        let (mine, theirs): (Vec<usize>, Vec<usize>) = self
            .dates
            .iter()
            .enumerate()
            .filter_map(|(i, d)| pos.get(d).map(|&j| (i, j)))
            .unzip();
        let mut table = self.table.select_rows(&mine);
        let right = other.table.select_rows(&theirs);
        for (name, col) in right.columns() {
            table.push(name, col.to_vec()).expect("equal lengths");
        }
        DailyFrame {
            dates: mine.iter().map(|&i| self.dates[i]).collect(),
            table,
        }
    }
}

/// Monthly-frequency data keyed by calendar month.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MonthlyFrame {
    pub months: Vec<YearMonth>,
    pub table: Table,
}

impl MonthlyFrame {
    pub fn from_monthly(rows: &[MonthlyRecord]) -> Self {
        let mut table = Table::new();
        for (j, name) in MONTHLY_HEADER[1..].iter().enumerate() {
            let col = rows.iter().map(|r| r.values[j].unwrap_or(f64::NAN)).collect();
            table.push(*name, col).expect("equal lengths");
        }
        Self {
            months: rows.iter().map(|r| r.month).collect(),
            table,
        }
    }
}

/// Per-trading-day rows joined with the covariates of their calendar month.
///
/// Monthly covariates are stored once per month in `monthly`; row `r` carries
/// the values of `monthly` row `month_index[r]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedPanel {
    pub dates: Vec<NaiveDate>,
    /// Index `t` into `months` for each row.
    pub month_index: Vec<usize>,
    /// 1-based day-in-month index `i` for each row.
    pub day_in_month: Vec<usize>,
    pub months: Vec<YearMonth>,
    pub daily: Table,
    pub monthly: Table,
}

impl AlignedPanel {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Monthly covariates attached to row `r`.
    pub fn covariates(&self, r: usize) -> Vec<f64> {
        self.monthly.row(self.month_index[r])
    }

    /// Number of trading days `N_t` in each month.
    pub fn days_per_month(&self) -> Vec<usize> {
        let mut n = vec![0; self.months.len()];
        for &t in &self.month_index {
            n[t] += 1;
        }
        n
    }

    /// Rows `start..end`, keeping only the months those rows reference.
    pub fn slice(&self, start: usize, end: usize) -> AlignedPanel {
        let idx = &self.month_index[start..end];
        let first = idx.first().copied().unwrap_or(0);
        let last = idx.last().map_or(0, |&t| t + 1);
        let months: Vec<usize> = (first..last).collect();
        AlignedPanel {
            dates: self.dates[start..end].to_vec(),
            month_index: idx.iter().map(|&t| t - first).collect(),
            day_in_month: self.day_in_month[start..end].to_vec(),
            months: months.iter().map(|&t| self.months[t]).collect(),
            daily: self.daily.slice_rows(start, end),
            monthly: self.monthly.select_rows(&months),
        }
    }

    fn tables_mut(&mut self) -> [&mut Table; 2] {
        [&mut self.daily, &mut self.monthly]
    }
}

/// Attaches each trading day to its month's covariates by calendar-month repetition.
pub fn align_mixed_frequency(daily: &DailyFrame, monthly: &MonthlyFrame) -> Result<AlignedPanel, DataError> {
    let mut order: Vec<usize> = (0..daily.dates.len()).collect();
    order.sort_by_key(|&i| daily.dates[i]);
    let dates: Vec<NaiveDate> = order.iter().map(|&i| daily.dates[i]).collect();
    for w in dates.windows(2) {
        if w[0] == w[1] {
            return Err(DataError::DuplicateRecord(w[1].to_string()));
        }
    }
    let month_pos: BTreeMap<YearMonth, usize> = monthly
        .months
        .iter()
        .enumerate()
        .map(|(i, m)| (*m, i))
        .collect();

    let mut months = Vec::new();
    let mut source_rows = Vec::new();
    let mut month_index = Vec::with_capacity(dates.len());
    let mut day_in_month = Vec::with_capacity(dates.len());
    for d in &dates {
        let ym = YearMonth::of(*d);
        if months.last() != Some(&ym) {
            let src = *month_pos.get(&ym).ok_or(DataError::UncoveredMonth(ym))?;
            months.push(ym);
            source_rows.push(src);
            day_in_month.push(1);
        } else {
            day_in_month.push(day_in_month.last().unwrap() + 1);
        }
        month_index.push(months.len() - 1);
    }
    Ok(AlignedPanel {
        dates,
        month_index,
        day_in_month,
        months,
        daily: daily.table.select_rows(&order),
        monthly: monthly.table.select_rows(&source_rows),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FillPolicy {
    /// Carry the last observed value forward; leading gaps take the first observed value.
    #[default]
    ForwardFill,
    /// Interpolate linearly between neighbours; edge gaps take the nearest observed value.
    Linear,
}

/// Fills the missing (`NaN`) cells of one column in place. Returns `false` if every cell is missing.
pub fn fill_column(col: &mut [f64], policy: FillPolicy) -> bool {
    let Some(first) = col.iter().position(|x| !x.is_nan()) else {
        return false;
    };
    let first_value = col[first];
    col[..first].fill(first_value);
    match policy {
        FillPolicy::ForwardFill => {
            let mut last = first_value;
            for x in col.iter_mut().skip(first) {
                if x.is_nan() {
                    *x = last;
                } else {
                    last = *x;
                }
            }
        }
        FillPolicy::Linear => {
            let mut prev = first;
            let mut i = first + 1;
            while i < col.len() {
                if col[i].is_nan() {
                    match (i..col.len()).find(|&j| !col[j].is_nan()) {
                        Some(next) => {
                            let (a, b) = (col[prev], col[next]);
                            let span = (next - prev) as f64;
                            for k in i..next {
                                col[k] = a + (b - a) * (k - prev) as f64 / span;
                            }
                            i = next;
                        }
                        None => {
                            let v = col[prev];
                            col[i..].fill(v);
                            break;
                        }
                    }
                }
                prev = i;
                i += 1;
            }
        }
    }
    true
}

/// Replaces every missing cell of both the daily and monthly tables.
pub fn fill_missing(panel: &AlignedPanel, policy: FillPolicy) -> Result<AlignedPanel, DataError> {
    let mut out = panel.clone();
    for table in out.tables_mut() {
        for (name, col) in table.names.iter().zip(table.columns.iter_mut()) {
            if !col.is_empty() && !fill_column(col, policy) {
                return Err(DataError::AllMissingColumn(name.clone()));
            }
        }
    }
    Ok(out)
}

/// Per-column z-score statistics (population standard deviation).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ColumnStats {
    /// Mean and population standard deviation of each column in `names`.
    pub fn fit(table: &Table, names: &[impl AsRef<str>]) -> Result<Self, DataError> {
        let mut stats = ColumnStats::default();
        for name in names {
            let name = name.as_ref();
            let col = table.require(name)?;
            let (m, s) = mean_std(col);
            if !(s > 0.0) || !s.is_finite() {
                return Err(DataError::ZeroVariance(name.to_string()));
            }
            stats.names.push(name.to_string());
            stats.mean.push(m);
            stats.std.push(s);
        }
        Ok(stats)
    }

    pub fn apply(&self, table: &mut Table) -> Result<(), DataError> {
        for ((name, m), s) in self.names.iter().zip(&self.mean).zip(&self.std) {
            let col = table
                .column_mut(name)
                .ok_or_else(|| DataError::MissingColumn(name.clone()))?;
            for x in col.iter_mut() {
                *x = (*x - m) / s;
            }
        }
        Ok(())
    }

    pub fn invert(&self, table: &mut Table) -> Result<(), DataError> {
        for ((name, m), s) in self.names.iter().zip(&self.mean).zip(&self.std) {
            let col = table
                .column_mut(name)
                .ok_or_else(|| DataError::MissingColumn(name.clone()))?;
            for x in col.iter_mut() {
                *x = *x * s + m;
            }
        }
        Ok(())
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Z-score statistics for the feature columns of a panel.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PanelStats {
    pub daily: ColumnStats,
    pub monthly: ColumnStats,
}

impl PanelStats {
    pub fn denormalize(&self, panel: &AlignedPanel) -> Result<AlignedPanel, DataError> {
        let mut out = panel.clone();
        self.daily.invert(&mut out.daily)?;
        self.monthly.invert(&mut out.monthly)?;
        Ok(out)
    }
}

fn feature_columns(table: &Table) -> Vec<String> {
    table
        .names()
        .iter()
        .filter(|n| !TARGET_COLUMNS.contains(&n.as_str()))
        .cloned()
        .collect()
}

/// Z-scores every feature column. Without `stats`, statistics are computed on
/// this panel (daily columns over rows, monthly columns over months).
pub fn normalize(panel: &AlignedPanel, stats: Option<&PanelStats>) -> Result<(AlignedPanel, PanelStats), DataError> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => PanelStats {
            daily: ColumnStats::fit(&panel.daily, &feature_columns(&panel.daily))?,
            monthly: ColumnStats::fit(&panel.monthly, &feature_columns(&panel.monthly))?,
        },
    };
    let mut out = panel.clone();
    stats.daily.apply(&mut out.daily)?;
    stats.monthly.apply(&mut out.monthly)?;
    Ok((out, stats))
}

/// Number of leading rows that fall in the training part of a chronological split.
pub fn train_len(n: usize, ratio: f64) -> usize {
    // The epsilon keeps products such as 10 * 0.9 from flooring to 8.
    ((n as f64 * ratio) + 1e-9).floor() as usize
}

/// First `floor(n * ratio)` rows for training, the rest for testing. No shuffling.
pub fn chronological_split(panel: &AlignedPanel, ratio: f64) -> Result<(AlignedPanel, AlignedPanel), DataError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::InvalidRatio(ratio));
    }
    if panel.is_empty() {
        return Err(DataError::EmptyPanel);
    }
    let k = train_len(panel.len(), ratio);
    Ok((panel.slice(0, k), panel.slice(k, panel.len())))
}

/// Writes a per-day table as CSV with a leading `date` column.
pub fn write_daily_frame(path: impl AsRef<Path>, frame: &DailyFrame) -> Result<(), crate::Error> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let err = |e| crate::Error::csv(path, e);
    let mut header = vec!["date".to_string()];
    header.extend(frame.table.names().iter().cloned());
    w.write_record(&header).map_err(err)?;
    for (i, d) in frame.dates.iter().enumerate() {
        let mut rec = vec![d.to_string()];
        rec.extend(frame.table.row(i).into_iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))
}

/// Reads a CSV whose first column is `date` and whose other columns are numeric.
pub fn read_daily_frame(path: impl AsRef<Path>) -> Result<DailyFrame, DataError> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| DataError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.first().map(String::as_str) != Some("date") {
        return Err(DataError::BadHeader {
            expected: "date,...".into(),
            found: header.join(","),
        });
    }
    let mut dates = Vec::new();
    let mut cols = vec![Vec::new(); header.len() - 1];
    for row in records(&mut rdr, header.len()) {
        let (line, rec) = row?;
        dates.push(field_date(&rec, line)?);
        for (j, col) in cols.iter_mut().enumerate() {
            col.push(field_opt(&rec, j + 1, line)?.unwrap_or(f64::NAN));
        }
    }
    let mut table = Table::new();
    for (name, col) in header[1..].iter().zip(cols) {
        table.push(name.clone(), col)?;
    }
    Ok(DailyFrame { dates, table })
}

/// Writes a per-month table as CSV with a leading `month` column.
pub fn write_monthly_frame(path: impl AsRef<Path>, frame: &MonthlyFrame) -> Result<(), crate::Error> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let err = |e| crate::Error::csv(path, e);
    let mut header = vec!["month".to_string()];
    header.extend(frame.table.names().iter().cloned());
    w.write_record(&header).map_err(err)?;
    for (i, m) in frame.months.iter().enumerate() {
        let mut rec = vec![m.to_string()];
        rec.extend(frame.table.row(i).into_iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))
}

pub fn read_monthly_frame(path: impl AsRef<Path>) -> Result<MonthlyFrame, DataError> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| DataError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.first().map(String::as_str) != Some("month") {
        return Err(DataError::BadHeader {
            expected: "month,...".into(),
            found: header.join(","),
        });
    }
    let mut months = Vec::new();
    let mut cols = vec![Vec::new(); header.len() - 1];
    for row in records(&mut rdr, header.len()) {
        let (line, rec) = row?;
        months.push(
            rec[0]
                .parse()
                .map_err(|reason| DataError::MalformedRow { line, reason })?,
        );
        for (j, col) in cols.iter_mut().enumerate() {
            col.push(field_opt(&rec, j + 1, line)?.unwrap_or(f64::NAN));
        }
    }
    let mut table = Table::new();
    for (name, col) in header[1..].iter().zip(cols) {
        table.push(name.clone(), col)?;
    }
    Ok(MonthlyFrame { months, table })
}

/// Writes `contents` to `path`, mapping IO failures to the crate error.
pub fn write_text(path: impl AsRef<Path>, contents: &str) -> Result<(), crate::Error> {
    let path = path.as_ref();
    let mut f = File::create(path).map_err(|e| crate::Error::io(path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| crate::Error::io(path, e))
}
