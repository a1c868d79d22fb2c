//! CSV formats of scenario bundles and reports.
//!
//! All series are hourly with ISO-8601 timestamps. Quantile files carry an
//! optional leading `issued` column: with it, each row is one lead hour of a
//! rolling forecast issued at `issued`; without it, each row is the single
//! forecast of its hour and rolling forecasts are read off consecutive rows.

use std::fs::File;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime};
use csv::{ReaderBuilder, StringRecord, Writer};
use mrv_core::forecast::{QuantileForecast, QUANTILE_COUNT};
use mrv_core::Tariff;
use serde::Serialize;

use crate::error::{CliError, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M"))
        .ok()
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|t| t.naive_utc()))
}

pub fn hourly(start: NaiveDateTime, n: usize) -> Vec<NaiveDateTime> {
    (0..n).map(|h| start + Duration::hours(h as i64)).collect()
}

/// A parsed CSV file: header and records with their line numbers.
struct Table {
    header: Vec<String>,
    rows: Vec<(u64, StringRecord)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| CliError::io(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    Ok(Table { header, rows })
}

fn expect_header(path: &Path, table: &Table, expected: &[&str]) -> Result<()> {
    if table
        .header
        .iter()
        .map(String::as_str)
        .ne(expected.iter().copied())
    {
        return Err(CliError::Data(format!(
            "{}:1: expected header `{}`, found `{}`",
            path.display(),
            expected.join(","),
            table.header.join(",")
        )));
    }
    Ok(())
}

fn field_f64(path: &Path, line: u64, rec: &StringRecord, i: usize, name: &str) -> Result<f64> {
    let raw = rec.get(i).unwrap_or("");
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::Data(format!(
            "{}:{line}: {name} `{raw}` is not a finite number",
            path.display()
        ))),
    }
}

fn field_time(path: &Path, line: u64, rec: &StringRecord, i: usize) -> Result<NaiveDateTime> {
    let raw = rec.get(i).unwrap_or("");
    parse_timestamp(raw).ok_or_else(|| {
        CliError::Data(format!(
            "{}:{line}: `{raw}` is not an ISO-8601 timestamp",
            path.display()
        ))
    })
}

fn check_hourly(path: &Path, lines: &[u64], times: &[NaiveDateTime]) -> Result<()> {
    if times.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    for (i, w) in times.windows(2).enumerate() {
        if w[1] - w[0] != Duration::hours(1) {
            return Err(CliError::Data(format!(
                "{}:{}: timestamp {} does not follow {} by one hour",
                path.display(),
                lines[i + 1],
                format_timestamp(w[1]),
                format_timestamp(w[0])
            )));
        }
    }
    Ok(())
}

/// Hourly series with one value column.
pub fn read_series(path: &Path, column: &str) -> Result<(Vec<NaiveDateTime>, Vec<f64>)> {
    let table = read_table(path)?;
    expect_header(path, &table, &["timestamp", column])?;
    let mut times = Vec::with_capacity(table.rows.len());
    let mut values = Vec::with_capacity(table.rows.len());
    let mut lines = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        times.push(field_time(path, *line, rec, 0)?);
        values.push(field_f64(path, *line, rec, 1, column)?);
        lines.push(*line);
    }
    check_hourly(path, &lines, &times)?;
    Ok((times, values))
}

pub fn write_series(
    path: &Path,
    column: &str,
    times: &[NaiveDateTime],
    values: &[f64],
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["timestamp", column])
        .map_err(|e| CliError::io(path, e))?;
    for (t, v) in times.iter().zip(values) {
        w.write_record([format_timestamp(*t), v.to_string()])
            .map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub const TARIFF_HEADER: [&str; 4] = ["timestamp", "price_eur_per_kwh", "c_buy", "c_sell"];

/// Tariff file: the wholesale input plus import and export price columns.
pub fn write_tariff(path: &Path, times: &[NaiveDateTime], tariff: &Tariff) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(TARIFF_HEADER)
        .map_err(|e| CliError::io(path, e))?;
    for (i, t) in times.iter().enumerate() {
        let rec = [
            format_timestamp(*t),
            tariff.wholesale[i].to_string(),
            tariff.c_buy[i].to_string(),
            tariff.c_sell[i].to_string(),
        ];
        w.write_record(rec).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Hourly tariff: timestamps, import and export prices.
pub struct TariffFile {
    pub times: Vec<NaiveDateTime>,
    pub c_buy: Vec<f64>,
    pub c_sell: Vec<f64>,
}

pub fn read_tariff(path: &Path) -> Result<TariffFile> {
    let table = read_table(path)?;
    expect_header(path, &table, &TARIFF_HEADER)?;
    let mut out = TariffFile {
        times: Vec::new(),
        c_buy: Vec::new(),
        c_sell: Vec::new(),
    };
    let mut lines = Vec::new();
    for (line, rec) in &table.rows {
        out.times.push(field_time(path, *line, rec, 0)?);
        out.c_buy.push(field_f64(path, *line, rec, 2, "c_buy")?);
        let c_sell = field_f64(path, *line, rec, 3, "c_sell")?;
        if c_sell < 0.0 {
            return Err(CliError::Data(format!(
                "{}:{line}: negative export price {c_sell}",
                path.display()
            )));
        }
        out.c_sell.push(c_sell);
        lines.push(*line);
    }
    check_hourly(path, &lines, &out.times)?;
    Ok(out)
}

fn quantile_columns() -> Vec<String> {
    (1..=QUANTILE_COUNT).map(|i| format!("q{i:02}")).collect()
}

/// Writes rolling forecasts; `issued[t]` holds the forecasts issued at hour `t`.
pub fn write_quantiles(
    path: &Path,
    start: NaiveDateTime,
    issued: &[Vec<QuantileForecast>],
) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["issued".to_owned(), "timestamp".to_owned()];
    header.extend(quantile_columns());
    w.write_record(&header).map_err(|e| CliError::io(path, e))?;
    for (t, fcs) in issued.iter().enumerate() {
        let at = format_timestamp(start + Duration::hours(t as i64));
        for q in fcs {
            let mut rec = vec![
                at.clone(),
                format_timestamp(start + Duration::hours(q.hour as i64)),
            ];
            rec.extend(q.quantiles.iter().map(f64::to_string));
            w.write_record(&rec).map_err(|e| CliError::io(path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// One quantile row: issue time (if given), target time and the forecast.
pub struct QuantileRow {
    pub line: u64,
    pub issued: Option<NaiveDateTime>,
    pub target: NaiveDateTime,
    pub quantiles: Vec<f64>,
}

pub fn read_quantile_rows(path: &Path) -> Result<Vec<QuantileRow>> {
    let table = read_table(path)?;
    let cols = quantile_columns();
    let with_issue = table.header.first().is_some_and(|h| h == "issued");
    let offset = usize::from(with_issue);
    let mut expected: Vec<&str> = Vec::new();
    if with_issue {
        expected.push("issued");
    }
    expected.push("timestamp");
    expected.extend(cols.iter().map(String::as_str));
    expect_header(path, &table, &expected)?;
    table
        .rows
        .iter()
        .map(|(line, rec)| {
            let issued = if with_issue {
                Some(field_time(path, *line, rec, 0)?)
            } else {
                None
            };
            let target = field_time(path, *line, rec, offset)?;
            let quantiles = (0..QUANTILE_COUNT)
                .map(|i| field_f64(path, *line, rec, offset + 1 + i, &cols[i]))
                .collect::<Result<Vec<_>>>()?;
            Ok(QuantileRow {
                line: *line,
                issued,
                target,
                quantiles,
            })
        })
        .collect()
}

fn hour_index(
    path: &Path,
    line: u64,
    start: NaiveDateTime,
    t: NaiveDateTime,
    n: usize,
) -> Result<usize> {
    let d = t - start;
    let h = d.num_hours();
    if d != Duration::hours(h) || h < 0 || h as usize >= n {
        return Err(CliError::Data(format!(
            "{}:{line}: timestamp {} is outside the scenario's hourly range",
            path.display(),
            format_timestamp(t)
        )));
    }
    Ok(h as usize)
}

/// Rolling forecasts for an `n`-hour scenario starting at `start`.
///
/// Every hour needs a forecast issued at it that covers at least that hour.
pub fn read_quantiles(
    path: &Path,
    start: NaiveDateTime,
    n: usize,
    horizon: usize,
) -> Result<Vec<Vec<QuantileForecast>>> {
    let rows = read_quantile_rows(path)?;
    let mut issued: Vec<Vec<QuantileForecast>> = vec![Vec::new(); n];
    let rolling = rows.first().is_some_and(|r| r.issued.is_some());
    if rolling {
        for r in rows {
            let t = hour_index(
                path,
                r.line,
                start,
                r.issued.expect("issued column present"),
                n,
            )?;
            let h = hour_index(path, r.line, start, r.target, n)?;
            if h != t + issued[t].len() {
                return Err(CliError::Data(format!(
                    "{}:{}: forecasts issued at {} must cover consecutive hours from the issue time",
                    path.display(),
                    r.line,
                    format_timestamp(start + Duration::hours(t as i64))
                )));
            }
            issued[t].push(
                QuantileForecast::new(h, r.quantiles)
                    .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), r.line)))?,
            );
        }
    } else {
        let mut single: Vec<Option<QuantileForecast>> = vec![None; n];
        for r in rows {
            let h = hour_index(path, r.line, start, r.target, n)?;
            single[h] = Some(
                QuantileForecast::new(h, r.quantiles)
                    .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), r.line)))?,
            );
        }
        if let Some(h) = single.iter().position(Option::is_none) {
            return Err(CliError::Data(format!(
                "{}: no forecast for hour {h}",
                path.display()
            )));
        }
        let single: Vec<QuantileForecast> = single.into_iter().flatten().collect();
        for (t, slot) in issued.iter_mut().enumerate() {
            *slot = single[t..(t + horizon).min(n)].to_vec();
        }
    }
    if let Some(t) = issued.iter().position(Vec::is_empty) {
        return Err(CliError::Data(format!(
            "{}: no forecast issued at hour {t}",
            path.display()
        )));
    }
    Ok(issued)
}

pub fn writer(path: &Path) -> Result<Writer<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(Writer::from_writer(file))
}

/// Writes serializable rows with a header derived from the row type.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
