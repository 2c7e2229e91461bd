use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use super::events::{window_labels, DayLabel, EventWindow};
use super::AnalyticsError;

/// Number of directed triad classes, hence columns in a change table.
pub const PATTERN_COUNT: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChangeTableError {
    #[error("expected {PATTERN_COUNT} pattern windows, got {0}")]
    WrongPatternCount(usize),
    #[error("windows do not share the same day labels")]
    LabelMismatch,
    #[error("table has no rows")]
    Empty,
    #[error("header must be `day,P1,...,P16`")]
    BadHeader,
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("day labels are not a contiguous D-r..D+r window")]
    BadLabels,
    #[error("anchor row {0} is not all 0%")]
    AnchorNotZero(DayLabel),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for ChangeTableError {
    fn from(e: csv::Error) -> Self {
        ChangeTableError::Csv(e.to_string())
    }
}

/// Day-over-day percent change of each triad class across an event window.
///
/// `None` marks a cell whose previous count was zero while the current one
/// is positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangeTable {
    labels: Vec<DayLabel>,
    rows: Vec<[Option<f64>; PATTERN_COUNT]>,
}

impl ChangeTable {
    pub fn labels(&self) -> &[DayLabel] {
        &self.labels
    }

    pub fn rows(&self) -> &[[Option<f64>; PATTERN_COUNT]] {
        &self.rows
    }

    pub fn row(&self, label: DayLabel) -> Option<&[Option<f64>; PATTERN_COUNT]> {
        self.labels.iter().position(|&l| l == label).map(|i| &self.rows[i])
    }

    /// Cell for `pattern` in `1..=16`.
    pub fn cell(&self, label: DayLabel, pattern: usize) -> Option<f64> {
        assert!((1..=PATTERN_COUNT).contains(&pattern), "pattern index {pattern} out of range");
        self.row(label)?[pattern - 1]
    }

    /// `day,P1..P16` with integer percents and `NA` for undefined cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["day".to_string()];
        header.extend((1..=PATTERN_COUNT).map(|p| format!("P{p}")));
        out.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.rows) {
            let mut fields = vec![label.to_string()];
            fields.extend(row.iter().map(|c| match c {
                Some(v) => format!("{}", v.round() as i64),
                None => "NA".to_string(),
            }));
            out.write_record(&fields)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a table in the layout of [`write_csv`](Self::write_csv). Cells
    /// may carry a trailing `%`; `NA` is undefined.
    pub fn parse_csv<R: Read>(reader: R) -> Result<Self, ChangeTableError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut record = csv::StringRecord::new();
        if !rdr.read_record(&mut record)? {
            return Err(ChangeTableError::BadHeader);
        }
        let header_ok = record.len() == PATTERN_COUNT + 1
            && record[0].eq_ignore_ascii_case("day")
            && record
                .iter()
                .skip(1)
                .enumerate()
                .all(|(i, h)| h.eq_ignore_ascii_case(&format!("P{}", i + 1)));
        if !header_ok {
            return Err(ChangeTableError::BadHeader);
        }
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        while rdr.read_record(&mut record)? {
            let line = record.position().map_or(0, |p| p.line());
            let row_err = |message: String| ChangeTableError::Row { line, message };
            if record.len() != PATTERN_COUNT + 1 {
                return Err(row_err(format!("expected {} fields, found {}", PATTERN_COUNT + 1, record.len())));
            }
            labels.push(record[0].parse::<DayLabel>().map_err(row_err)?);
            let mut row = [None; PATTERN_COUNT];
            for (cell, text) in row.iter_mut().zip(record.iter().skip(1)) {
                if text.eq_ignore_ascii_case("NA") {
                    continue;
                }
                let number = text.strip_suffix('%').unwrap_or(text).trim();
                let v: f64 = number
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| row_err(format!("unparsable percent `{text}`")))?;
                *cell = Some(v);
            }
            rows.push(row);
        }
        if labels.is_empty() {
            return Err(ChangeTableError::Empty);
        }
        if labels.len() % 2 != 0 || labels != window_labels((labels.len() / 2) as u32) {
            return Err(ChangeTableError::BadLabels);
        }
        if rows[0].iter().any(|c| *c != Some(0.0)) {
            return Err(ChangeTableError::AnchorNotZero(labels[0]));
        }
        Ok(ChangeTable { labels, rows })
    }
}

/// Percent change of each pattern's value against the previous window day.
///
/// The first row is the 0% anchor. `D+1` is compared with `D-1`, the event
/// days being outside the window. `0 -> 0` is 0%, `0 -> positive` is
/// undefined.
pub fn daily_change_table(windows: &[EventWindow]) -> Result<ChangeTable, AnalyticsError> {
    if windows.len() != PATTERN_COUNT {
        return Err(ChangeTableError::WrongPatternCount(windows.len()).into());
    }
    let labels = windows[0].labels.clone();
    if labels.is_empty() {
        return Err(ChangeTableError::Empty.into());
    }
    if windows.iter().any(|w| w.labels != labels || w.values.len() != labels.len()) {
        return Err(ChangeTableError::LabelMismatch.into());
    }
    let mut rows = vec![[Some(0.0); PATTERN_COUNT]; labels.len()];
    for (p, window) in windows.iter().enumerate() {
        for (row, pair) in rows.iter_mut().skip(1).zip(window.values.windows(2)) {
            row[p] = percent_change(pair[0], pair[1]);
        }
    }
    Ok(ChangeTable { labels, rows })
}

fn percent_change(previous: f64, current: f64) -> Option<f64> {
    if previous == 0.0 {
        (current == 0.0).then_some(0.0)
    } else {
        Some(100.0 * (current - previous) / previous)
    }
}
