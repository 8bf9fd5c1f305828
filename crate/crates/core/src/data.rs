//! Price ingestion, log returns, calendar grouping and macro alignment.
//!
//! Input CSVs need a header row, ISO-8601 dates and `.` decimals.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Datelike, Duration, NaiveDate};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::logistic::ExogenousMatrix;
use crate::model::IntervalSeries;
use crate::stats::correlation;

/// Pairwise predictor correlation above which a warning is raised.
pub const COLLINEARITY_WARNING: f64 = 0.95;

fn data_err(e: impl std::fmt::Display) -> Error {
    Error::Data(e.to_string())
}

/// Headed CSV reader that skips `#` provenance lines.
fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(r)
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s.get(..10).unwrap_or(s), "%Y-%m-%d").ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    prices: Vec<f64>,
    /// Rows skipped during ingestion, with reasons.
    pub notices: Vec<String>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, prices: Vec<f64>) -> Result<Self> {
        if dates.len() != prices.len() {
            return Err(Error::DimensionMismatch(format!("{} dates for {} prices", dates.len(), prices.len())));
        }
        if let Some(i) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!("dates not strictly increasing at {}", dates[i + 1])));
        }
        if let Some(i) = prices.iter().position(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::Data(format!("nonpositive price {} on {}", prices[i], dates[i])));
        }
        Ok(Self { dates, prices, notices: Vec::new() })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Reads `date_column` and `price_column` from a headed CSV. Rows whose
    /// price is `null` or empty (common in downloaded quote files) are
    /// skipped with a notice; any other unparsable or nonpositive value is
    /// an error naming the data row.
    pub fn from_csv<R: Read>(r: R, date_column: &str, price_column: &str) -> Result<Self> {
        let mut rd = reader(r);
        let headers = rd.headers().map_err(data_err)?.clone();
        let find = |name: &str| {
            headers.iter().position(|h| h.eq_ignore_ascii_case(name)).ok_or_else(|| {
                Error::Data(format!(
                    "column '{name}' not found; available: {}",
                    headers.iter().collect::<Vec<_>>().join(", ")
                ))
            })
        };
        let (di, pi) = (find(date_column)?, find(price_column)?);
        let (mut dates, mut prices, mut notices) = (Vec::new(), Vec::new(), Vec::new());
        for (row, rec) in rd.records().enumerate() {
            let row = row + 1;
            let rec = rec.map_err(data_err)?;
            let (d, p) = (rec.get(di).unwrap_or(""), rec.get(pi).unwrap_or(""));
            let date = parse_date(d).ok_or_else(|| Error::Data(format!("row {row}: unparsable date '{d}'")))?;
            if p.is_empty() || p.eq_ignore_ascii_case("null") {
                notices.push(format!("row {row} ({date}): missing price skipped"));
                continue;
            }
            let price: f64 = p.parse().map_err(|_| Error::Data(format!("row {row} ({date}): unparsable price '{p}'")))?;
            if !(price > 0.0 && price.is_finite()) {
                return Err(Error::Data(format!("row {row} ({date}): nonpositive price {price}")));
            }
            dates.push(date);
            prices.push(price);
        }
        let mut s = Self::new(dates, prices)?;
        s.notices = notices;
        Ok(s)
    }
}

/// Dated values, e.g. log returns.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl DatedSeries {
    pub fn write_csv<W: Write>(&self, w: W, value_name: &str) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["date", value_name]).map_err(data_err)?;
        for (d, v) in self.dates.iter().zip(&self.values) {
            wr.write_record([d.to_string(), fmt15(*v)]).map_err(data_err)?;
        }
        wr.flush().map_err(data_err)
    }
}

/// `r_t = log(P_t / P_{t-1})`, dated at `t`.
pub fn log_returns(prices: &PriceSeries) -> Result<DatedSeries> {
    if prices.len() < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: prices.len() });
    }
    Ok(DatedSeries {
        dates: prices.dates[1..].to_vec(),
        values: prices.prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect(),
    })
}

/// Moves each date to the Friday of its week, so that a weekly bar belongs
/// to the month containing its last trading day.
pub fn shift_to_week_end(s: &DatedSeries) -> DatedSeries {
    let dates = s
        .dates
        .iter()
        .map(|d| {
            let wd = d.weekday().num_days_from_monday() as i64;
            if wd < 4 {
                *d + Duration::days(4 - wd)
            } else {
                *d
            }
        })
        .collect();
    DatedSeries { dates, values: s.values.clone() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupRule {
    Year,
    Month,
}

/// Month index `12 * year + month0`.
fn month_index(d: &NaiveDate) -> i64 {
    d.year() as i64 * 12 + d.month0() as i64
}

fn month_label(idx: i64) -> String {
    format!("{:04}-{:02}", idx.div_euclid(12), idx.rem_euclid(12) + 1)
}

fn parse_month(s: &str) -> Option<i64> {
    let s = s.trim();
    let (y, m) = s.get(..7)?.split_once('-')?;
    let (y, m): (i64, i64) = (y.parse().ok()?, m.parse().ok()?);
    (1..=12).contains(&m).then_some(y * 12 + m - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grouped {
    pub series: IntervalSeries,
    /// Calendar periods inside the span that had no observations.
    pub notices: Vec<String>,
}

/// Contiguous calendar grouping. Labels are `YYYY` or `YYYY-MM`; empty
/// periods inside the span are dropped with a notice.
pub fn group_by_interval(s: &DatedSeries, rule: GroupRule) -> Result<Grouped> {
    if s.values.is_empty() {
        return Err(Error::InvalidInput("no observations to group".into()));
    }
    if let Some(i) = s.dates.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Data(format!("dates not strictly increasing at {}", s.dates[i + 1])));
    }
    let key = |d: &NaiveDate| match rule {
        GroupRule::Year => d.year() as i64,
        GroupRule::Month => month_index(d),
    };
    let label = |k: i64| match rule {
        GroupRule::Year => format!("{k:04}"),
        GroupRule::Month => month_label(k),
    };
    let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (d, v) in s.dates.iter().zip(&s.values) {
        groups.entry(key(d)).or_default().push(*v);
    }
    let (first, last) = (*groups.keys().next().unwrap(), *groups.keys().next_back().unwrap());
    let notices = (first..=last)
        .filter(|k| !groups.contains_key(k))
        .map(|k| format!("period {} has no observations and was dropped", label(k)))
        .collect();
    let labels = groups.keys().map(|&k| label(k)).collect();
    Ok(Grouped { series: IntervalSeries::new(groups.into_values().collect(), labels)?, notices })
}

/// Monthly predictor panel.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroPanel {
    months: Vec<i64>,
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl MacroPanel {
    /// `months` as `YYYY-MM` strings; `values[t][j]` is column `j` in month `t`.
    pub fn new(months: &[&str], names: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let idx = months
            .iter()
            .map(|m| parse_month(m).ok_or_else(|| Error::Data(format!("unparsable month '{m}'"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(idx, names, values)
    }

    fn from_parts(months: Vec<i64>, names: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if months.is_empty() || months.len() != values.len() {
            return Err(Error::Data("macro panel needs one value row per month".into()));
        }
        if let Some(t) = values.iter().position(|r| r.len() != names.len()) {
            return Err(Error::Data(format!("month {} has {} values for {} columns", month_label(months[t]), values[t].len(), names.len())));
        }
        if let Some(i) = months.windows(2).position(|w| w[1] != w[0] + 1) {
            let (a, b) = (months[i], months[i + 1]);
            return Err(if b <= a {
                Error::Data(format!("months not strictly increasing at {}", month_label(b)))
            } else {
                Error::Data(format!("macro panel has a gap: missing {}", ((a + 1)..b).map(month_label).collect::<Vec<_>>().join(", ")))
            });
        }
        Ok(Self { months, names, values })
    }

    /// First column is the month (`YYYY-MM` or an ISO date); all other
    /// columns are numeric predictors.
    pub fn from_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = reader(r);
        let headers = rd.headers().map_err(data_err)?.clone();
        if headers.len() < 2 {
            return Err(Error::Data("macro panel needs a month column and at least one predictor".into()));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let (mut months, mut values) = (Vec::new(), Vec::new());
        for (row, rec) in rd.records().enumerate() {
            let rec = rec.map_err(data_err)?;
            let m = rec.get(0).unwrap_or("");
            months.push(parse_month(m).ok_or_else(|| Error::Data(format!("row {}: unparsable month '{m}'", row + 1)))?);
            let vals = rec
                .iter()
                .skip(1)
                .zip(&names)
                .map(|(v, n)| v.parse::<f64>().map_err(|_| Error::Data(format!("row {} column {n}: unparsable value '{v}'", row + 1))))
                .collect::<Result<Vec<_>>>()?;
            values.push(vals);
        }
        Self::from_parts(months, names, values)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Months covered, as `YYYY-MM`.
    pub fn month_labels(&self) -> Vec<String> {
        self.months.iter().map(|&m| month_label(m)).collect()
    }

    /// Keeps the named columns, in the given order.
    pub fn select(&self, columns: &[String]) -> Result<Self> {
        let idx = columns
            .iter()
            .map(|c| {
                self.names.iter().position(|n| n == c).ok_or_else(|| {
                    Error::Data(format!("macro panel has no column '{c}'; available: {}", self.names.join(", ")))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            months: self.months.clone(),
            names: columns.to_vec(),
            values: self.values.iter().map(|r| idx.iter().map(|&j| r[j]).collect()).collect(),
        })
    }

    fn get(&self, month: i64) -> Option<&[f64]> {
        let i = month.checked_sub(self.months[0])?;
        self.values.get(usize::try_from(i).ok()?).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    Level,
    FirstDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub x: ExogenousMatrix,
    /// Pairwise correlations of the transformed columns.
    pub correlation: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// One predictor row per monthly interval (labels `YYYY-MM`), with an
/// intercept. First differences need the preceding month in the panel.
pub fn align_macro(returns: &IntervalSeries, panel: &MacroPanel, transforms: &[Transform]) -> Result<Aligned> {
    align_macro_months(returns.labels(), panel, transforms)
}

/// [`align_macro`] for an explicit list of `YYYY-MM` months.
pub fn align_macro_months(labels: &[String], panel: &MacroPanel, transforms: &[Transform]) -> Result<Aligned> {
    let p = panel.names.len();
    if transforms.len() != p {
        return Err(Error::DimensionMismatch(format!("{} transforms for {p} panel columns", transforms.len())));
    }
    let months = labels
        .iter()
        .map(|l| parse_month(l).filter(|_| l.len() == 7).ok_or_else(|| Error::Data(format!("interval label '{l}' is not a YYYY-MM month"))))
        .collect::<Result<Vec<_>>>()?;
    let needs_prev = transforms.contains(&Transform::FirstDifference);
    let mut missing: Vec<i64> = Vec::new();
    for &m in &months {
        if panel.get(m).is_none() {
            missing.push(m);
        }
        if needs_prev && panel.get(m - 1).is_none() {
            missing.push(m - 1);
        }
    }
    missing.sort_unstable();
    missing.dedup();
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "macro panel does not cover: {}",
            missing.into_iter().map(month_label).collect::<Vec<_>>().join(", ")
        )));
    }
    let rows: Vec<Vec<f64>> = months
        .iter()
        .map(|&m| {
            let cur = panel.get(m).expect("coverage checked");
            transforms
                .iter()
                .enumerate()
                .map(|(j, t)| match t {
                    Transform::Level => cur[j],
                    Transform::FirstDifference => cur[j] - panel.get(m - 1).expect("coverage checked")[j],
                })
                .collect()
        })
        .collect();
    let x = ExogenousMatrix::new(rows, panel.names.clone(), true)?;
    let cols: Vec<Vec<f64>> = (0..p).map(|j| x.column(j)).collect();
    let mut corr = vec![vec![1.0; p]; p];
    let mut warnings = Vec::new();
    for a in 0..p {
        for b in a + 1..p {
            let r = correlation(&cols[a], &cols[b]).unwrap_or(f64::NAN);
            corr[a][b] = r;
            corr[b][a] = r;
            if r.abs() > COLLINEARITY_WARNING {
                warnings.push(format!(
                    "predictors {} and {} have correlation {r:.3}; consider dropping one",
                    panel.names[a], panel.names[b]
                ));
            }
        }
    }
    Ok(Aligned { x, correlation: corr, warnings })
}

/// Shortest decimal that round-trips the value rounded to 15 significant
/// digits.
pub fn fmt15(v: f64) -> String {
    let r: f64 = format!("{v:.14e}").parse().expect("formatted float parses");
    format!("{r}")
}

/// Long-format grouped CSV: `interval,value`, one row per observation.
pub fn write_grouped_csv<W: Write>(series: &IntervalSeries, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["interval", "value"]).map_err(data_err)?;
    for (label, iv) in series.labels().iter().zip(series.intervals()) {
        for &v in iv {
            wr.write_record([label.as_str(), &fmt15(v)]).map_err(data_err)?;
        }
    }
    wr.flush().map_err(data_err)
}

/// Reads the long format written by [`write_grouped_csv`]. Rows of one
/// interval must be contiguous.
pub fn read_grouped_csv<R: Read>(r: R) -> Result<IntervalSeries> {
    let mut rd = reader(r);
    let headers = rd.headers().map_err(data_err)?.clone();
    let col = |n: &str| {
        headers.iter().position(|h| h == n).ok_or_else(|| Error::Data(format!("grouped CSV lacks column '{n}'")))
    };
    let (li, vi) = (col("interval")?, col("value")?);
    let mut labels: Vec<String> = Vec::new();
    let mut intervals: Vec<Vec<f64>> = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec.map_err(data_err)?;
        let (l, v) = (rec.get(li).unwrap_or(""), rec.get(vi).unwrap_or(""));
        let v: f64 = v.parse().map_err(|_| Error::Data(format!("row {}: unparsable value '{v}'", row + 1)))?;
        if labels.last().map(String::as_str) != Some(l) {
            if labels.iter().any(|x| x == l) {
                return Err(Error::Data(format!("row {}: interval '{l}' is not contiguous", row + 1)));
            }
            labels.push(l.to_string());
            intervals.push(Vec::new());
        }
        intervals.last_mut().expect("pushed above").push(v);
    }
    IntervalSeries::new(intervals, labels)
}
