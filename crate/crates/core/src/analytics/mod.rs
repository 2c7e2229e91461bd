//! Z-scores, event windows, change tables and detector ranking.

mod change;
mod events;
mod ranking;

use std::collections::BTreeSet;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

pub use change::{daily_change_table, ChangeTable, ChangeTableError, PATTERN_COUNT};
pub use events::{
    extract_event_window, window_labels, CalendarError, DayLabel, EventCalendar, EventSpec, EventWindow,
};
pub use ranking::{rank_detectors, DetectorRanking, DetectorScore};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("series `{name}`: dates must be strictly increasing ({previous} then {next})")]
    UnorderedDates {
        name: String,
        previous: NaiveDate,
        next: NaiveDate,
    },
    #[error("series `{name}`: non-finite value on {date}")]
    NonFinite { name: String, date: NaiveDate },
    #[error("series `{0}` has fewer than 2 points")]
    TooShort(String),
    #[error("constant series `{0}`")]
    ConstantSeries(String),
    #[error("threshold must be a positive number, got {0}")]
    InvalidThreshold(f64),
    #[error("event start {start} is after end {end}")]
    InvertedEvent { start: NaiveDate, end: NaiveDate },
    #[error("window radius must be at least 1")]
    ZeroRadius,
    #[error("series `{series}` lacks dates {}", format_dates(.missing))]
    MissingDates {
        series: String,
        missing: Vec<NaiveDate>,
    },
    #[error(transparent)]
    ChangeTable(#[from] ChangeTableError),
    #[error("no change tables to rank")]
    NoTables,
}

fn format_dates(dates: &[NaiveDate]) -> String {
    dates
        .iter()
        .map(NaiveDate::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// A named, date-ordered sequence of observations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSeries {
    name: String,
    points: Vec<(NaiveDate, f64)>,
}

impl MetricSeries {
    pub fn new(name: impl Into<String>, points: Vec<(NaiveDate, f64)>) -> Result<Self, AnalyticsError> {
        let name = name.into();
        for pair in points.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(AnalyticsError::UnorderedDates {
                    name,
                    previous: pair[0].0,
                    next: pair[1].0,
                });
            }
        }
        if let Some(&(date, _)) = points.iter().find(|(_, v)| !v.is_finite()) {
            return Err(AnalyticsError::NonFinite { name, date });
        }
        Ok(MetricSeries { name, points })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn points(&self) -> &[(NaiveDate, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dates(&self) -> impl ExactSizeIterator<Item = NaiveDate> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn values(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.points
            .binary_search_by_key(&date, |p| p.0)
            .ok()
            .map(|i| self.points[i].1)
    }

    /// Date of the smallest value (earliest on ties).
    pub fn argmin(&self) -> Option<NaiveDate> {
        self.points
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|p| p.0)
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PopulationStats {
    pub mean: f64,
    pub std: f64,
}

impl PopulationStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(PopulationStats {
            mean,
            std: var.sqrt(),
        })
    }

    pub fn z(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
}

/// `(X - mean) / std` for every point, with both moments taken over the whole
/// series.
pub fn zscore_series(series: &MetricSeries) -> Result<(MetricSeries, PopulationStats), AnalyticsError> {
    if series.len() < 2 {
        return Err(AnalyticsError::TooShort(series.name.clone()));
    }
    let values: Vec<f64> = series.values().collect();
    let stats = PopulationStats::of(&values).expect("non-empty");
    if stats.std == 0.0 || !stats.std.is_finite() {
        return Err(AnalyticsError::ConstantSeries(series.name.clone()));
    }
    let points = series.points.iter().map(|&(d, x)| (d, stats.z(x))).collect();
    Ok((
        MetricSeries {
            name: series.name.clone(),
            points,
        },
        stats,
    ))
}

/// Dates with `|z| >= threshold`, chronological.
pub fn flag_anomalies(zseries: &MetricSeries, threshold: f64) -> Result<Vec<NaiveDate>, AnalyticsError> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(AnalyticsError::InvalidThreshold(threshold));
    }
    Ok(zseries
        .points
        .iter()
        .filter(|(_, z)| z.abs() >= threshold)
        .map(|p| p.0)
        .collect())
}

#[derive(Debug, Error)]
pub enum SeriesCsvError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("header must start with `date` and name at least one series")]
    BadHeader,
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error(transparent)]
    Series(#[from] AnalyticsError),
}

/// Writes several series side by side as `date,<name>...`, one row per date
/// present in any series; absent points are empty fields.
pub fn write_series_csv<W: Write>(writer: W, series: &[MetricSeries]) -> csv::Result<()> {
    let dates: BTreeSet<NaiveDate> = series.iter().flat_map(|s| s.dates()).collect();
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(series.iter().map(|s| s.name.clone()));
    out.write_record(&header)?;
    let mut cursors = vec![0usize; series.len()];
    for date in dates {
        let mut row = vec![date.to_string()];
        for (s, cursor) in series.iter().zip(cursors.iter_mut()) {
            match s.points.get(*cursor) {
                Some(&(d, v)) if d == date => {
                    row.push(v.to_string());
                    *cursor += 1;
                }
                _ => row.push(String::new()),
            }
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the layout produced by [`write_series_csv`]. Dates are ISO 8601.
pub fn read_series_csv<R: Read>(reader: R) -> Result<Vec<MetricSeries>, SeriesCsvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut record = csv::StringRecord::new();
    if !rdr.read_record(&mut record)? {
        return Err(SeriesCsvError::BadHeader);
    }
    if record.len() < 2 || !record[0].eq_ignore_ascii_case("date") {
        return Err(SeriesCsvError::BadHeader);
    }
    let names: Vec<String> = record.iter().skip(1).map(str::to_string).collect();
    let mut columns: Vec<Vec<(NaiveDate, f64)>> = vec![Vec::new(); names.len()];
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != names.len() + 1 {
            return Err(SeriesCsvError::Row {
                line,
                message: format!("expected {} fields, found {}", names.len() + 1, record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|_| SeriesCsvError::Row {
            line,
            message: format!("unparsable date `{}`", &record[0]),
        })?;
        for (column, field) in columns.iter_mut().zip(record.iter().skip(1)) {
            if field.is_empty() {
                continue;
            }
            let value: f64 = field.parse().map_err(|_| SeriesCsvError::Row {
                line,
                message: format!("unparsable number `{field}`"),
            })?;
            column.push((date, value));
        }
    }
    names
        .into_iter()
        .zip(columns)
        .map(|(name, points)| MetricSeries::new(name, points).map_err(SeriesCsvError::from))
        .collect()
}
